"""
Closed-form microring (MR) device math.

Covers resonance, inter-channel crosstalk, bank SNR, FWHM / tunable range,
the amplitude-level feasibility bound, additive photonic loss, and the
laser power budget. Everything here is a pure function of value inputs.

Powers are handled in linear mW internally; dB/dBm appear only at the
function boundaries.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from .units import dbm_to_mw, ratio_to_db

# Standard C-band reference used when no absolute resonance is given.
DEFAULT_LAMBDA_RES_NM = 1550.0
DEFAULT_FSR_NM = 20.0
DEFAULT_INPUT_POWER_DBM = 0.0
DEFAULT_DETECTOR_SENSITIVITY_DBM = -20.0

DEVICE_CLASSES = (
    "eo_tuning",
    "to_tuning",
    "vcsel",
    "photodetector",
    "soa",
    "dac",
    "adc",
    "memristor_cell",
)


class IngestError(ValueError):
    """A data file is missing a required key or carries an invalid value."""


@dataclass(frozen=True)
class Assumption:
    name: str
    value: Any
    provenance: str

    def as_dict(self) -> dict[str, Any]:
        return {"name": self.name, "value": self.value, "provenance": self.provenance}


@dataclass(frozen=True)
class MrPhysical:
    """Physical MR description. ``radius`` in µm."""

    radius: float
    resonance_order: int
    effective_index: float

    def __post_init__(self) -> None:
        if self.resonance_order < 1:
            raise ValueError(f"resonance order must be >= 1, got {self.resonance_order}")
        if self.radius <= 0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        if self.effective_index <= 0:
            raise ValueError(f"effective index must be positive, got {self.effective_index}")


@dataclass(frozen=True)
class BankGeometry:
    """
    A WDM MR bank: ``num_channels`` MRs at wavelengths
    ``base_wavelength + k * channel_spacing`` (nm).

    Parameters
    ----------
    q_factor : float
        Loaded Q of every MR in the bank.
    channel_spacing : float
        Spacing between adjacent channels [nm].
    num_channels : int
        Number of wavelengths / MRs in the bank.
    base_wavelength : float
        Resonance of channel 0 [nm].
    fsr : float
        Free spectral range [nm]; all channels must fit inside it.
    input_power_dbm, detector_sensitivity_dbm : float
        Per-channel waveguide input power and PD sensitivity [dBm].
    """

    q_factor: float
    channel_spacing: float
    num_channels: int = 17
    base_wavelength: float = DEFAULT_LAMBDA_RES_NM
    fsr: float = DEFAULT_FSR_NM
    input_power_dbm: float = DEFAULT_INPUT_POWER_DBM
    detector_sensitivity_dbm: float = DEFAULT_DETECTOR_SENSITIVITY_DBM

    def __post_init__(self) -> None:
        if not self.q_factor > 0:
            raise ValueError(f"Q must be positive, got {self.q_factor}")
        if not self.channel_spacing > 0:
            raise ValueError(f"channel spacing must be positive, got {self.channel_spacing}")
        if self.num_channels < 1:
            raise ValueError(f"need at least one channel, got {self.num_channels}")
        if not self.base_wavelength > 0:
            raise ValueError(f"base wavelength must be positive, got {self.base_wavelength}")
        span = (self.num_channels - 1) * self.channel_spacing
        # small slack so that e.g. 20 * 1.0 against fsr=20 is not rejected by rounding
        if span > self.fsr * (1 + 1e-12):
            raise ValueError(
                f"{self.num_channels} channels at {self.channel_spacing} nm span {span} nm "
                f"which exceeds the FSR of {self.fsr} nm"
            )

    @property
    def wavelengths(self) -> np.ndarray:
        return self.base_wavelength + self.channel_spacing * np.arange(self.num_channels)


@dataclass(frozen=True)
class LossBudget:
    """Per-factor photonic losses (dB, dB/cm) and the routed path length (cm)."""

    waveguide_propagation_db_per_cm: float
    splitter_db: float
    combiner_db: float
    mr_through_db: float
    mr_modulation_db: float
    eo_tuning_db_per_cm: float
    path_length_cm: float
    detector_sensitivity_dbm: float = DEFAULT_DETECTOR_SENSITIVITY_DBM
    mr_pitch_um: float = 10.0
    assumptions: tuple[Assumption, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        for name in (
            "waveguide_propagation_db_per_cm",
            "splitter_db",
            "combiner_db",
            "mr_through_db",
            "mr_modulation_db",
            "eo_tuning_db_per_cm",
            "path_length_cm",
            "mr_pitch_um",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")

    @classmethod
    def zero(cls) -> "LossBudget":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class DeviceSpec:
    latency_ns: float
    power: float
    power_unit: str

    def __post_init__(self) -> None:
        if self.latency_ns < 0 or self.power < 0:
            raise ValueError(f"latency and power must be >= 0, got {self}")


@dataclass(frozen=True)
class DeviceTable:
    """
    Latency/power per optoelectronic device class.

    Power units follow the source table: EO tuning in µW/nm, TO tuning in
    mW/FSR, memristor cell in µW, all others in mW.
    """

    eo_tuning: DeviceSpec
    to_tuning: DeviceSpec
    vcsel: DeviceSpec
    photodetector: DeviceSpec
    soa: DeviceSpec
    dac: DeviceSpec
    adc: DeviceSpec
    memristor_cell: DeviceSpec
    assumptions: tuple[Assumption, ...] = field(default=(), compare=False)

    def power_mw(self, device: str) -> float:
        """Per-device power in mW for classes with a plain mW rating."""
        spec: DeviceSpec = getattr(self, device)
        if spec.power_unit == "mW":
            return spec.power
        if spec.power_unit == "uW":
            return spec.power * 1e-3
        raise ValueError(f"{device} power is rated in {spec.power_unit}, not a flat power")


# --------------------------------------------------------------------------
# Resonance, crosstalk, SNR
# --------------------------------------------------------------------------


def resonant_wavelength(mr: MrPhysical) -> float:
    """Resonant wavelength in nm, ``2*pi*R/m * n_eff`` with R in µm."""
    if mr.resonance_order == 0:
        raise ValueError("resonance order must be nonzero")
    return 2.0 * math.pi * mr.radius / mr.resonance_order * mr.effective_index * 1e3


def _lorentzian(lambda_i, lambda_j, q):
    detuning = 2.0 * q * (lambda_i - lambda_j) / lambda_j
    return 1.0 / (1.0 + detuning * detuning)


def crosstalk_coefficient(lambda_i: float, lambda_j: float, q: float) -> float:
    """Fraction of channel ``lambda_i`` coupled into the MR resonant at ``lambda_j``."""
    if not lambda_j > 0:
        raise ValueError(f"lambda_j must be positive, got {lambda_j}")
    if not q > 0:
        raise ValueError(f"q must be positive, got {q}")
    return float(_lorentzian(lambda_i, lambda_j, q))


def suppression_coefficient(lambda_i: float, lambda_k: float, q: float) -> float:
    """
    Fraction of ``lambda_i`` removed as it passes the MR resonant at ``lambda_k``.

    Same Lorentzian kernel as :func:`crosstalk_coefficient`; kept as its own
    entry point so the through-loss model can change in one place.
    """
    return crosstalk_coefficient(lambda_i, lambda_k, q)


def through_suppression(lambda_i: float, channel_index_j: int, bank: BankGeometry) -> float:
    """
    Power fraction of ``lambda_i`` left when it reaches MR ``j``.

    Each preceding MR ``k < j`` removes a fraction
    ``suppression_coefficient(lambda_i, lambda_k)``, so the remaining
    fraction is the product of ``1 - gamma`` over those MRs.
    """
    if not 0 <= channel_index_j < bank.num_channels:
        raise IndexError(
            f"channel index {channel_index_j} outside bank of {bank.num_channels} channels"
        )
    lam = bank.wavelengths[:channel_index_j]
    if lam.size == 0:
        return 1.0
    gamma = _lorentzian(lambda_i, lam, bank.q_factor)
    return float(np.prod(1.0 - gamma))


def _suppression_matrix(bank: BankGeometry) -> np.ndarray:
    """``psi[i, j]``: fraction of channel i's power reaching MR j."""
    lam = bank.wavelengths
    gamma = _lorentzian(lam[:, None], lam[None, :], bank.q_factor)
    through = 1.0 - gamma
    # psi[:, j] = prod_{k<j} through[:, k]
    cum = np.cumprod(through, axis=1)
    psi = np.ones_like(through)
    psi[:, 1:] = cum[:, :-1]
    return psi


def _signal_and_noise_mw(bank: BankGeometry) -> tuple[np.ndarray, np.ndarray]:
    """Per-victim signal and noise power (mW).

    The victim MR j sees its own channel fully on resonance (coefficient 1),
    attenuated only by the MRs before it; noise is every other channel's
    leakage, weighted by how much of it survives to MR j.
    """
    lam = bank.wavelengths
    p_in = dbm_to_mw(bank.input_power_dbm)
    psi = _suppression_matrix(bank)
    phi = _lorentzian(lam[:, None], lam[None, :], bank.q_factor)
    p_s = psi * p_in
    signal = np.diag(p_s).copy()
    contrib = phi * p_s
    np.fill_diagonal(contrib, 0.0)
    noise = contrib.sum(axis=0)
    return signal, noise


def snr_profile_db(bank: BankGeometry) -> np.ndarray:
    """SNR in dB for every victim channel. ``inf`` where no noise reaches the MR."""
    signal, noise = _signal_and_noise_mw(bank)
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(signal / noise)


def bank_snr_db(victim_index: int, bank: BankGeometry) -> float:
    """
    SNR (dB) at one victim MR of the bank.

    A single-channel bank has no inter-channel crosstalk; it returns ``inf``
    as the no-crosstalk sentinel rather than raising.
    """
    if not 0 <= victim_index < bank.num_channels:
        raise IndexError(f"victim {victim_index} outside bank of {bank.num_channels}")
    if bank.num_channels < 2:
        return math.inf
    return float(snr_profile_db(bank)[victim_index])


def worst_case_snr_db(bank: BankGeometry) -> float:
    if bank.num_channels < 2:
        return math.inf
    return float(np.min(snr_profile_db(bank)))


def average_snr_db(bank: BankGeometry) -> float:
    """Bank-aggregate SNR: total signal over total noise across victims."""
    if bank.num_channels < 2:
        return math.inf
    signal, noise = _signal_and_noise_mw(bank)
    return ratio_to_db(signal.sum() / noise.sum())


# --------------------------------------------------------------------------
# Tuning range and feasibility
# --------------------------------------------------------------------------


def fwhm(lambda_res: float, q: float) -> float:
    if not q > 0:
        raise ValueError(f"q must be positive, got {q}")
    return lambda_res / q


def tunable_range(lambda_res: float, q: float) -> float:
    return 2.0 * fwhm(lambda_res, q)


def min_tunable_range(n_levels: int, snr_db: float) -> float:
    """Lower bound on tunable range needed to resolve ``n_levels`` amplitudes."""
    if n_levels < 1:
        raise ValueError(f"n_levels must be >= 1, got {n_levels}")
    return n_levels * 10.0 ** (-snr_db / 10.0)


def is_feasible(r_tune: float, n_levels: int, snr_db: float) -> bool:
    return r_tune > min_tunable_range(n_levels, snr_db)


# --------------------------------------------------------------------------
# Loss and laser budget
# --------------------------------------------------------------------------


def photonic_loss_db(budget: LossBudget, mrs_traversed: int, modulating_mrs: int) -> float:
    """Total optical loss on one path; pure additive dB accounting."""
    if mrs_traversed < 0 or modulating_mrs < 0:
        raise ValueError("MR counts must be >= 0")
    return (
        budget.waveguide_propagation_db_per_cm * budget.path_length_cm
        + budget.splitter_db
        + budget.combiner_db
        + mrs_traversed * budget.mr_through_db
        + modulating_mrs * budget.mr_modulation_db
        + budget.eo_tuning_db_per_cm * budget.path_length_cm
    )


def required_laser_power_dbm(
    photo_loss_db: float, n_wavelengths: int, detector_sensitivity_dbm: float
) -> float:
    """Smallest laser power (dBm) that still lands every wavelength at the detector."""
    if n_wavelengths < 1:
        raise ValueError(f"need at least one wavelength, got {n_wavelengths}")
    return detector_sensitivity_dbm + photo_loss_db + 10.0 * math.log10(n_wavelengths)


# --------------------------------------------------------------------------
# Ingestion
# --------------------------------------------------------------------------


def _read_json(path: str | Path) -> dict[str, Any]:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise IngestError(f"{path}: not valid JSON ({exc})") from exc


def _require(section: dict[str, Any], key: str, where: str) -> Any:
    if key not in section:
        raise IngestError(f"{where}: missing required key '{key}'")
    return section[key]


def device_table_from_dict(doc: dict[str, Any], where: str = "device table") -> DeviceTable:
    devices = _require(doc, "devices", where)
    specs = {}
    for name in DEVICE_CLASSES:
        entry = _require(devices, name, where)
        try:
            specs[name] = DeviceSpec(
                latency_ns=float(_require(entry, "latency_ns", f"{where}.{name}")),
                power=float(_require(entry, "power", f"{where}.{name}")),
                power_unit=str(_require(entry, "power_unit", f"{where}.{name}")),
            )
        except ValueError as exc:
            raise IngestError(f"{where}.{name}: {exc}") from exc
    return DeviceTable(**specs)


def load_device_table(path: str | Path) -> DeviceTable:
    return device_table_from_dict(_read_json(path), str(path))


_LOSS_REQUIRED = (
    "waveguide_propagation_db_per_cm",
    "splitter_db",
    "combiner_db",
    "mr_through_db",
    "mr_modulation_db",
    "eo_tuning_db_per_cm",
)
_LOSS_DEFAULTABLE = ("path_length_cm", "detector_sensitivity_dbm", "mr_pitch_um")


def loss_budget_from_dict(doc: dict[str, Any], where: str = "loss budget") -> LossBudget:
    """
    Build a :class:`LossBudget`. Table values are mandatory; the entries in
    ``_LOSS_DEFAULTABLE`` must still be present but are recorded as
    assumptions when flagged ``"default": true``.
    """
    losses = _require(doc, "losses", where)
    values: dict[str, float] = {}
    assumptions = []
    for key in _LOSS_REQUIRED + _LOSS_DEFAULTABLE:
        entry = _require(losses, key, where)
        values[key] = float(_require(entry, "value", f"{where}.{key}"))
        if entry.get("default", False):
            if key not in _LOSS_DEFAULTABLE:
                raise IngestError(f"{where}.{key}: table constant cannot be a default")
            assumptions.append(Assumption(key, values[key], "default"))
    try:
        return LossBudget(**values, assumptions=tuple(assumptions))
    except ValueError as exc:
        raise IngestError(f"{where}: {exc}") from exc


def load_loss_budget(path: str | Path) -> LossBudget:
    return loss_budget_from_dict(_read_json(path), str(path))


def as_plain_dict(obj) -> dict[str, Any]:
    """Dataclass fields minus bookkeeping, for reports."""
    return {f.name: getattr(obj, f.name) for f in fields(obj) if f.name != "assumptions"}

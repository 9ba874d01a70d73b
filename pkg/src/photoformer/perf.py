"""
Latency, power and energy estimation for a mapped schedule.

Latency follows the schedule's critical path: stages in one parallel
group overlap (the group costs its slowest member) and groups run back to
back. Energy is the sum of every stage's power times its own latency.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

from . import SCHEMA_VERSION
from .devices import (
    DEFAULT_LAMBDA_RES_NM,
    Assumption,
    DeviceTable,
    IngestError,
    LossBudget,
    device_table_from_dict,
    loss_budget_from_dict,
    photonic_loss_db,
    required_laser_power_dbm,
    tunable_range,
)
from .mapper import ArchConfig, MapOptions, MappedSchedule, Stage, map_graph, wavelength_demand
from .model_ir import OpGraph, op_count
from .units import dbm_to_mw

# MR design point used for the default tuning excursion
DEFAULT_DESIGN_Q = 6500.0


@dataclass(frozen=True)
class ElectronicConstants:
    buffer_access_energy_pj_per_byte: float
    buffer_leakage_mw: float
    softmax_digital_latency_ns: float
    softmax_digital_power_mw: float
    lut_access_latency_ns: float
    lut_access_energy_pj: float
    assumptions: tuple[Assumption, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        for name, value in self.__dict__.items():
            if name != "assumptions" and value < 0:
                raise ValueError(f"{name} must be >= 0, got {value}")


_ELECTRONIC_KEYS = (
    "buffer_access_energy_pj_per_byte",
    "buffer_leakage_mw",
    "softmax_digital_latency_ns",
    "softmax_digital_power_mw",
    "lut_access_latency_ns",
    "lut_access_energy_pj",
)


def electronics_from_dict(doc: dict[str, Any], where: str = "electronics") -> ElectronicConstants:
    if "electronics" not in doc:
        raise IngestError(f"{where}: missing required key 'electronics'")
    section = doc["electronics"]
    values, assumptions = {}, []
    for key in _ELECTRONIC_KEYS:
        if key not in section:
            raise IngestError(f"{where}: missing required key '{key}'")
        entry = section[key]
        if "value" not in entry:
            raise IngestError(f"{where}.{key}: missing required key 'value'")
        values[key] = float(entry["value"])
        if entry.get("default", False):
            assumptions.append(Assumption(key, values[key], "default"))
    return ElectronicConstants(**values, assumptions=tuple(assumptions))


def load_electronics(path: str | Path) -> ElectronicConstants:
    with open(path, encoding="utf-8") as fh:
        return electronics_from_dict(json.load(fh), str(path))


def _data_doc(name: str) -> dict[str, Any]:
    return json.loads(resources.files("photoformer.data").joinpath(name).read_text(encoding="utf-8"))


def default_devices() -> DeviceTable:
    return device_table_from_dict(_data_doc("devices.json"), "devices.json")


def default_losses() -> LossBudget:
    return loss_budget_from_dict(_data_doc("losses.json"), "losses.json")


def default_electronics() -> ElectronicConstants:
    return electronics_from_dict(_data_doc("electronics.json"), "electronics.json")


@dataclass(frozen=True)
class PerfOptions:
    """
    Engine-level modelling choices.

    ``tuning_excursion_nm`` defaults to half the tunable range of the
    reference MR design (uniformly distributed parameters). TO tuning is
    only used for initial resonance locking, so ``to_tuned_banks`` enter a
    separately reported one-time energy. ``epb_denominator`` is ``"ops"``
    (bits x operations) or ``"activations"`` (bits x matmul input elements).
    """

    tuning_excursion_nm: float | None = None
    to_tuned_banks: int = 0
    epb_denominator: str = "ops"

    @property
    def excursion_nm(self) -> float:
        if self.tuning_excursion_nm is not None:
            return self.tuning_excursion_nm
        return tunable_range(DEFAULT_LAMBDA_RES_NM, DEFAULT_DESIGN_Q) / 2.0

    def assumptions(self) -> list[Assumption]:
        out = []
        if self.tuning_excursion_nm is None:
            out.append(Assumption("tuning_excursion_nm", self.excursion_nm, "default: R_tune/2"))
        out.append(Assumption("epb_denominator", self.epb_denominator, "default: bits x op_count"
                              if self.epb_denominator == "ops" else "option"))
        return out


# --------------------------------------------------------------------------
# per-stage costs
# --------------------------------------------------------------------------


def _pass_components_ns(stage: Stage, devices: DeviceTable,
                        electronics: ElectronicConstants | None) -> list[float]:
    parts = [
        devices.dac.latency_ns,
        devices.eo_tuning.latency_ns,
        devices.vcsel.latency_ns,
        devices.photodetector.latency_ns,
        devices.adc.latency_ns,
    ]
    if stage.kind == "activation":
        parts.append(devices.soa.latency_ns)
    if stage.uses_lut:
        parts.append(devices.memristor_cell.latency_ns)
        if electronics is not None:
            parts.append(electronics.lut_access_latency_ns)
    if stage.kind == "softmax":
        if electronics is None:
            raise ValueError("softmax stages need electronic constants")
        parts.append(electronics.softmax_digital_latency_ns)
    return parts


def per_pass_latency_ns(stage: Stage, devices: DeviceTable,
                        electronics: ElectronicConstants | None = None) -> float:
    return sum(_pass_components_ns(stage, devices, electronics))


def stage_latency(stage: Stage, devices: DeviceTable, pipelined: bool,
                  electronics: ElectronicConstants | None = None) -> float:
    """Stage latency in seconds."""
    parts = _pass_components_ns(stage, devices, electronics)
    one = sum(parts)
    if pipelined:
        ns = (stage.pass_count - 1) * max(parts) + one
    else:
        ns = stage.pass_count * one
    return ns * 1e-9


def laser_mw_per_waveguide(stage: Stage, arch: ArchConfig, losses: LossBudget) -> float:
    """Laser budget for one waveguide row of ``stage`` in mW.

    The row cascades ``path_arrays`` arrays of ``N`` MRs: it is modulated
    once per array and passes the other ``N - 1`` MRs off resonance.
    """
    if stage.waveguides == 0:
        return 0.0
    n = wavelength_demand(arch)
    row_cm = stage.path_arrays * n * losses.mr_pitch_um * 1e-4
    path = LossBudget(
        waveguide_propagation_db_per_cm=losses.waveguide_propagation_db_per_cm,
        splitter_db=losses.splitter_db,
        combiner_db=losses.combiner_db,
        mr_through_db=losses.mr_through_db,
        mr_modulation_db=losses.mr_modulation_db,
        eo_tuning_db_per_cm=losses.eo_tuning_db_per_cm,
        path_length_cm=losses.path_length_cm + row_cm,
    )
    loss = photonic_loss_db(path, mrs_traversed=stage.path_arrays * (n - 1), modulating_mrs=stage.path_arrays)
    return dbm_to_mw(required_laser_power_dbm(loss, n, losses.detector_sensitivity_dbm))


def stage_power(stage: Stage, devices: DeviceTable, electronics: ElectronicConstants,
                laser_w: float, options: PerfOptions | None = None, bits: int = 8) -> float:
    """
    Power drawn while ``stage`` runs, in watts.

    ``laser_w`` is the laser budget of one waveguide row; it is multiplied
    by the stage's lit row count.
    """
    options = options or PerfOptions()
    c = stage.active_devices
    mw = (
        c.vcsels * devices.power_mw("vcsel")
        + c.pds_bpds * devices.power_mw("photodetector")
        + c.dacs * devices.power_mw("dac")
        + c.adcs * devices.power_mw("adc")
        + c.soas * devices.power_mw("soa")
        + c.memristors * devices.power_mw("memristor_cell")
    )
    # EO tuning rated in µW/nm
    mw += c.mrs * devices.eo_tuning.power * 1e-3 * options.excursion_nm
    per_pass_ns = per_pass_latency_ns(stage, devices, electronics)
    # buffering only where the signal leaves the optical domain (pJ / ns = mW)
    mw += c.adcs * (bits / 8.0) * electronics.buffer_access_energy_pj_per_byte / per_pass_ns
    if stage.uses_lut:
        mw += c.memristors * electronics.lut_access_energy_pj / per_pass_ns
    mw += stage.softmax_units * electronics.softmax_digital_power_mw
    mw += electronics.buffer_leakage_mw
    return mw * 1e-3 + laser_w * stage.waveguides


# --------------------------------------------------------------------------
# full simulation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TagBreakdown:
    latency_s: float
    latency_share: float
    power_w: float
    power_share: float
    energy_j: float


@dataclass(frozen=True)
class PerfReport:
    model: str
    arch: tuple[int, int, int, int]
    pipelined: bool
    total_latency_s: float
    avg_power_w: float
    peak_power_w: float
    total_energy_j: float
    gops: float
    epb_j_per_bit: float
    laser_power_w: float
    to_lock_energy_j: float
    ops: int
    bits: int
    breakdown: dict[str, TagBreakdown]
    assumptions: tuple[Assumption, ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "model": self.model,
            "arch": {"H": self.arch[0], "L": self.arch[1], "K": self.arch[2], "N": self.arch[3]},
            "pipelined": self.pipelined,
            "total_latency_s": self.total_latency_s,
            "avg_power_w": self.avg_power_w,
            "peak_power_w": self.peak_power_w,
            "total_energy_j": self.total_energy_j,
            "gops": self.gops,
            "epb_j_per_bit": self.epb_j_per_bit,
            "laser_power_w": self.laser_power_w,
            "to_lock_energy_j": self.to_lock_energy_j,
            "ops": self.ops,
            "bits": self.bits,
            "breakdown": {
                tag: {
                    "latency_s": b.latency_s,
                    "latency_share": b.latency_share,
                    "power_w": b.power_w,
                    "power_share": b.power_share,
                    "energy_j": b.energy_j,
                }
                for tag, b in self.breakdown.items()
            },
            "assumptions": [a.as_dict() for a in self.assumptions],
        }

    def breakdown_csv(self) -> str:
        lines = ["unit_tag,latency_s,latency_share,power_w,power_share"]
        for tag, b in self.breakdown.items():
            lines.append(f"{tag},{b.latency_s:.9e},{b.latency_share:.9f},{b.power_w:.9e},{b.power_share:.9f}")
        return "\n".join(lines) + "\n"


def _activation_elements(graph: OpGraph) -> int:
    return sum(n.dims[0] * n.dims[1] for n in graph.nodes if n.kind == "matmul")


def evaluate_schedule(schedule: MappedSchedule, graph: OpGraph, devices: DeviceTable, losses: LossBudget,
                      electronics: ElectronicConstants, options: PerfOptions | None = None) -> PerfReport:
    options = options or PerfOptions()
    spec = graph.spec
    arch = schedule.arch
    bits = spec.bits
    total_latency = 0.0
    energy = 0.0
    peak = 0.0
    laser_peak = 0.0
    tag_lat: dict[str, float] = {}
    tag_energy: dict[str, float] = {}
    laser_cache: dict[int, float] = {}
    for group in schedule.groups():
        group_latency = 0.0
        group_power = 0.0
        group_laser = 0.0
        for st in group:
            if st.path_arrays not in laser_cache:
                laser_cache[st.path_arrays] = laser_mw_per_waveguide(st, arch, losses) * 1e-3
            laser_w = laser_cache[st.path_arrays]
            lat = stage_latency(st, devices, arch.pipelined, electronics)
            pw = stage_power(st, devices, electronics, laser_w, options, bits)
            group_latency = max(group_latency, lat)
            group_power += pw
            group_laser += laser_w * st.waveguides
            energy += pw * lat
            tag_lat[st.unit_tag] = tag_lat.get(st.unit_tag, 0.0) + lat
            tag_energy[st.unit_tag] = tag_energy.get(st.unit_tag, 0.0) + pw * lat
        total_latency += group_latency
        peak = max(peak, group_power)
        laser_peak = max(laser_peak, group_laser)

    ops = op_count(graph)
    if options.epb_denominator == "ops":
        denom_bits = bits * ops
    elif options.epb_denominator == "activations":
        denom_bits = bits * _activation_elements(graph)
    else:
        raise ValueError(f"unknown EPB denominator '{options.epb_denominator}'")

    # component power = mean draw while the component is active
    tag_power = {t: tag_energy[t] / tag_lat[t] for t in tag_lat if tag_lat[t] > 0}
    lat_sum = sum(tag_lat.values())
    pw_sum = sum(tag_power.values())
    breakdown = {
        t: TagBreakdown(
            latency_s=tag_lat[t],
            latency_share=tag_lat[t] / lat_sum if lat_sum else 0.0,
            power_w=tag_power.get(t, 0.0),
            power_share=tag_power.get(t, 0.0) / pw_sum if pw_sum else 0.0,
            energy_j=tag_energy[t],
        )
        for t in tag_lat
    }

    to_energy = options.to_tuned_banks * devices.to_tuning.power * 1e-3 * devices.to_tuning.latency_ns * 1e-9
    assumptions = list(devices.assumptions) + list(losses.assumptions) + list(electronics.assumptions)
    assumptions += options.assumptions()
    if spec.seq_len_is_default:
        assumptions.append(Assumption("seq_len", spec.seq_len, "default"))
    assumptions.append(Assumption("layernorm_ops", "1 scale_shift op per element", "default"))
    assumptions.append(Assumption("softmax_ops", "5 ops per element", "default"))
    for a in schedule.assumptions:
        assumptions.append(a)

    return PerfReport(
        model=spec.name,
        arch=arch.shape,
        pipelined=arch.pipelined,
        total_latency_s=total_latency,
        avg_power_w=energy / total_latency if total_latency else 0.0,
        peak_power_w=peak,
        total_energy_j=energy,
        gops=ops / total_latency / 1e9 if total_latency else 0.0,
        epb_j_per_bit=energy / denom_bits if denom_bits else 0.0,
        laser_power_w=laser_peak,
        to_lock_energy_j=to_energy,
        ops=ops,
        bits=bits,
        breakdown=breakdown,
        assumptions=tuple(assumptions),
    )


def simulate(graph: OpGraph, arch: ArchConfig, devices: DeviceTable | None = None,
             losses: LossBudget | None = None, electronics: ElectronicConstants | None = None,
             options: PerfOptions | None = None, map_options: MapOptions | None = None) -> PerfReport:
    """Map ``graph`` onto ``arch`` and estimate its performance."""
    devices = devices or default_devices()
    losses = losses or default_losses()
    electronics = electronics or default_electronics()
    schedule = map_graph(graph, arch, map_options)
    return evaluate_schedule(schedule, graph, devices, losses, electronics, options)


# --------------------------------------------------------------------------
# comparison
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Baseline:
    label: str
    gops: float
    epb_j_per_bit: float
    source: str


def load_baselines(path: str | Path) -> list[Baseline]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    out = []
    for entry in doc.get("baselines", []):
        if not entry.get("source"):
            raise IngestError(f"{path}: baseline '{entry.get('label')}' has no source annotation")
        out.append(Baseline(entry["label"], float(entry["gops"]), float(entry["epb_j_per_bit"]), entry["source"]))
    return out


def compare(reports: list[tuple[str, PerfReport | Baseline]]) -> list[dict[str, Any]]:
    """
    Pairwise GOPS and EPB ratios (row over column), plus values normalised
    to the first entry.
    """
    if not reports:
        raise ValueError("need at least one report to compare")
    ref_gops = reports[0][1].gops
    ref_epb = reports[0][1].epb_j_per_bit
    rows = []
    for label, rep in reports:
        rows.append({
            "label": label,
            "gops": rep.gops,
            "epb_j_per_bit": rep.epb_j_per_bit,
            "gops_norm": rep.gops / ref_gops,
            "epb_norm": rep.epb_j_per_bit / ref_epb,
            "gops_ratio": {other: rep.gops / o.gops for other, o in reports},
            "epb_ratio": {other: rep.epb_j_per_bit / o.epb_j_per_bit for other, o in reports},
        })
    return rows

"""
Exhaustive (Q, channel spacing) sweep of an MR bank for maximal tunable range.

A design is feasible when its tunable range beats the amplitude-level
bound at the bank's worst-case victim SNR. Feasible designs are ranked by
tunable range, then SNR, then spacing, all descending.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any, Sequence

from .devices import (
    DEFAULT_FSR_NM,
    DEFAULT_LAMBDA_RES_NM,
    BankGeometry,
    average_snr_db,
    is_feasible,
    min_tunable_range,
    tunable_range,
    worst_case_snr_db,
)


def _axis(lo: float, hi: float, step: float, name: str) -> tuple[float, ...]:
    if not step > 0:
        raise ValueError(f"{name} step must be positive, got {step}")
    if lo > hi:
        raise ValueError(f"{name} min {lo} exceeds max {hi}")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    # integer stepping, then rounding, keeps 0.1-style grids free of drift
    return tuple(round(lo + i * step, 10) for i in range(count))


@dataclass(frozen=True)
class DseGrid:
    q_range: tuple[float, float, float] = (2000.0, 8000.0, 100.0)
    cs_range: tuple[float, float, float] = (0.1, 1.0, 0.1)
    n_levels: int = 128
    fsr: float = DEFAULT_FSR_NM
    num_channels: int = 17
    lambda_res: float = DEFAULT_LAMBDA_RES_NM

    def __post_init__(self) -> None:
        qs, css = self.q_values(), self.cs_values()
        if qs[0] <= 0:
            raise ValueError("Q values must be positive")
        if css[0] <= 0:
            raise ValueError("channel spacing values must be positive")
        if self.n_levels < 1:
            raise ValueError(f"n_levels must be >= 1, got {self.n_levels}")
        # geometry check on the widest spacing covers every other point
        self.bank(qs[0], css[-1])

    def q_values(self) -> tuple[float, ...]:
        return _axis(*self.q_range, name="Q")

    def cs_values(self) -> tuple[float, ...]:
        return _axis(*self.cs_range, name="CS")

    def points(self) -> list[tuple[float, float]]:
        return [(q, cs) for q in self.q_values() for cs in self.cs_values()]

    def bank(self, q: float, cs: float) -> BankGeometry:
        return BankGeometry(q_factor=q, channel_spacing=cs, num_channels=self.num_channels,
                            base_wavelength=self.lambda_res, fsr=self.fsr)

    @classmethod
    def for_bits(cls, bits: int, signed_split: bool = True, **kwargs) -> "DseGrid":
        levels = 2 ** (bits - 1) if signed_split else 2**bits
        return cls(n_levels=levels, **kwargs)


@dataclass(frozen=True)
class MrBankDesign:
    r_tune: float
    q_factor: float
    snr_db: float  # worst-case victim; drives feasibility
    channel_spacing: float
    n_levels: int
    fsr: float
    lambda_res: float
    average_snr_db: float
    feasible: bool

    @property
    def bound_nm(self) -> float:
        return min_tunable_range(self.n_levels, self.snr_db)

    def rank_key(self) -> tuple[float, float, float]:
        return (-self.r_tune, -self.snr_db, -self.channel_spacing)

    def as_dict(self) -> dict[str, Any]:
        return {
            "r_tune_nm": self.r_tune,
            "q_factor": self.q_factor,
            "snr_db": self.snr_db,
            "average_snr_db": self.average_snr_db,
            "channel_spacing_nm": self.channel_spacing,
            "n_levels": self.n_levels,
            "fsr_nm": self.fsr,
            "lambda_res_nm": self.lambda_res,
            "bound_nm": self.bound_nm,
            "feasible": self.feasible,
        }


def evaluate_design(q: float, cs: float, grid: DseGrid) -> MrBankDesign:
    if not q > 0:
        raise ValueError(f"Q must be positive, got {q}")
    if not cs > 0:
        raise ValueError(f"channel spacing must be positive, got {cs}")
    bank = grid.bank(q, cs)
    snr = worst_case_snr_db(bank)
    r_tune = tunable_range(grid.lambda_res, q)
    return MrBankDesign(
        r_tune=r_tune,
        q_factor=q,
        snr_db=snr,
        channel_spacing=cs,
        n_levels=grid.n_levels,
        fsr=grid.fsr,
        lambda_res=grid.lambda_res,
        average_snr_db=average_snr_db(bank),
        feasible=is_feasible(r_tune, grid.n_levels, snr),
    )


def _evaluate_job(args) -> MrBankDesign:
    q, cs, grid = args
    return evaluate_design(q, cs, grid)


def sweep(grid: DseGrid, workers: int = 1) -> list[MrBankDesign]:
    """Every lattice point in (Q, CS) order."""
    jobs = [(q, cs, grid) for q, cs in grid.points()]
    if workers <= 1:
        return [_evaluate_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_evaluate_job, jobs, chunksize=max(1, len(jobs) // (workers * 4))))


def rank(designs: Sequence[MrBankDesign]) -> list[MrBankDesign]:
    return sorted((d for d in designs if d.feasible), key=MrBankDesign.rank_key)


def explore(grid: DseGrid, workers: int = 1) -> list[MrBankDesign]:
    """Feasible designs, best first. An empty list means nothing on the grid is feasible."""
    return rank(sweep(grid, workers))


def feasibility_frontier(grid: DseGrid, designs: Sequence[MrBankDesign] | None = None
                         ) -> list[tuple[float, float | None]]:
    """Per channel spacing, the smallest feasible Q (None when no Q works)."""
    if designs is None:
        designs = sweep(grid)
    best: dict[float, float | None] = {cs: None for cs in grid.cs_values()}
    for d in designs:
        if d.feasible:
            cur = best[d.channel_spacing]
            if cur is None or d.q_factor < cur:
                best[d.channel_spacing] = d.q_factor
    return sorted(best.items())


_CSV_FIELDS = ("r_tune_nm", "q_factor", "snr_db", "average_snr_db", "channel_spacing_nm",
               "n_levels", "bound_nm", "feasible")


def designs_csv(designs: Sequence[MrBankDesign]) -> str:
    lines = [",".join(_CSV_FIELDS)]
    for d in designs:
        row = d.as_dict()
        lines.append(",".join(
            str(int(row[f])) if f in ("n_levels", "feasible") else f"{row[f]:.9f}" for f in _CSV_FIELDS
        ))
    return "\n".join(lines) + "\n"


def frontier_csv(frontier: Sequence[tuple[float, float | None]]) -> str:
    lines = ["channel_spacing_nm,min_feasible_q"]
    for cs, q in frontier:
        lines.append(f"{cs:.9f},{'none' if q is None else f'{q:.9f}'}")
    return "\n".join(lines) + "\n"

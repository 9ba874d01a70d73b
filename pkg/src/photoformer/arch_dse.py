"""
Exhaustive sweep of the [H, L, K, N] architecture space under a power cap.

The objective is EPB / GOPS, each averaged over the workload set; a point
is feasible when its peak power on every workload stays within the cap.
Evaluation may run on a process pool; results are reduced in lattice
order so output does not depend on the pool size.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

from .devices import DeviceTable, LossBudget
from .mapper import ArchConfig, MapOptions
from .model_ir import ModelSpec, builtin_models, lower
from .perf import (
    ElectronicConstants,
    PerfOptions,
    default_devices,
    default_electronics,
    default_losses,
    simulate,
)

DEFAULT_H = (1, 2, 4, 8, 12)
DEFAULT_L = (1, 2, 4, 6, 12)
DEFAULT_K = (8, 12, 15, 22, 29, 36, 43, 51, 57, 64)
DEFAULT_N = (8, 11, 12, 14, 17, 20, 23, 26, 29, 32)


@dataclass(frozen=True)
class ArchSearchSpace:
    h_range: tuple[int, ...] = DEFAULT_H
    l_range: tuple[int, ...] = DEFAULT_L
    k_range: tuple[int, ...] = DEFAULT_K
    n_range: tuple[int, ...] = DEFAULT_N
    power_cap_w: float = 100.0
    workload_set: tuple[ModelSpec, ...] = field(default_factory=lambda: tuple(builtin_models()))
    pipelined: bool = False

    def __post_init__(self) -> None:
        for name in ("h_range", "l_range", "k_range", "n_range"):
            values = getattr(self, name)
            if not values:
                raise ValueError(f"{name} is empty")
            if min(values) < 1:
                raise ValueError(f"{name} values must be >= 1")
            object.__setattr__(self, name, tuple(sorted(set(values))))
        if not self.power_cap_w > 0:
            raise ValueError("power cap must be positive")
        if not self.workload_set:
            raise ValueError("workload set is empty")

    def configs(self) -> list[ArchConfig]:
        return [
            ArchConfig(h, l, k, n, pipelined=self.pipelined, power_cap_w=self.power_cap_w)
            for h, l, k, n in itertools.product(self.h_range, self.l_range, self.k_range, self.n_range)
        ]


@dataclass(frozen=True)
class DsePoint:
    config: ArchConfig
    avg_epb: float
    avg_gops: float
    objective: float
    peak_power_w: float
    feasible: bool
    per_model: tuple[tuple[str, float, float, float], ...] = ()  # (name, epb, gops, peak)

    def sort_key(self) -> tuple:
        return (self.objective, self.peak_power_w, self.config.shape)


def _evaluate(args) -> DsePoint:
    config, graphs, devices, losses, electronics, options, map_options = args
    per_model = []
    for g in graphs:
        rep = simulate(g, config, devices, losses, electronics, options, map_options)
        per_model.append((g.spec.name, rep.epb_j_per_bit, rep.gops, rep.peak_power_w))
    avg_epb = sum(m[1] for m in per_model) / len(per_model)
    avg_gops = sum(m[2] for m in per_model) / len(per_model)
    peak = max(m[3] for m in per_model)
    return DsePoint(config, avg_epb, avg_gops, avg_epb / avg_gops, peak, peak <= config.power_cap_w,
                    tuple(per_model))


def rank(points: Sequence[DsePoint]) -> list[DsePoint]:
    """Feasible points, best objective first; ties by peak power then shape."""
    return sorted((p for p in points if p.feasible), key=DsePoint.sort_key)


def sweep(space: ArchSearchSpace, devices: DeviceTable | None = None, losses: LossBudget | None = None,
          electronics: ElectronicConstants | None = None, options: PerfOptions | None = None,
          map_options: MapOptions | None = None, workers: int = 1) -> list[DsePoint]:
    """Simulate every lattice point; returns all points (feasible or not) in lattice order."""
    devices = devices or default_devices()
    losses = losses or default_losses()
    electronics = electronics or default_electronics()
    graphs = tuple(lower(spec) for spec in space.workload_set)
    jobs = [(c, graphs, devices, losses, electronics, options, map_options) for c in space.configs()]
    if workers <= 1:
        return [_evaluate(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_evaluate, jobs, chunksize=max(1, len(jobs) // (workers * 8))))


def explore_arch(space: ArchSearchSpace, devices: DeviceTable | None = None,
                 losses: LossBudget | None = None, electronics: ElectronicConstants | None = None,
                 options: PerfOptions | None = None, map_options: MapOptions | None = None,
                 workers: int = 1) -> list[DsePoint]:
    return rank(sweep(space, devices, losses, electronics, options, map_options, workers))


def explore_edge(space: ArchSearchSpace, *args, cap_w: float = 10.0, **kwargs) -> list[DsePoint]:
    """:func:`explore_arch` with the edge power cap."""
    from dataclasses import replace

    return explore_arch(replace(space, power_cap_w=cap_w), *args, **kwargs)


def rank_of(points: Sequence[DsePoint], shape: tuple[int, int, int, int]) -> int | None:
    """0-based position of ``shape`` in a ranked list, or None if absent."""
    for i, p in enumerate(points):
        if p.config.shape == shape:
            return i
    return None


def pareto_front(points: Sequence[DsePoint]) -> list[DsePoint]:
    """Feasible points not dominated in (EPB, 1/GOPS)."""
    feas = [p for p in points if p.feasible]
    front = []
    for p in feas:
        dominated = any(
            q.avg_epb <= p.avg_epb and q.avg_gops >= p.avg_gops
            and (q.avg_epb < p.avg_epb or q.avg_gops > p.avg_gops)
            for q in feas
        )
        if not dominated:
            front.append(p)
    return sorted(front, key=DsePoint.sort_key)


def scatter_csv(points: Sequence[DsePoint]) -> str:
    lines = ["H,L,K,N,avg_epb_j_per_bit,avg_gops,objective,peak_power_w,feasible"]
    for p in points:
        h, l, k, n = p.config.shape
        lines.append(f"{h},{l},{k},{n},{p.avg_epb:.9e},{p.avg_gops:.9e},{p.objective:.9e},"
                     f"{p.peak_power_w:.9e},{int(p.feasible)}")
    return "\n".join(lines) + "\n"

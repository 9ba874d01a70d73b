"""
A small [H, L, K, N] sweep under the 100 W and 10 W power caps.

The full default lattice (2500 points) takes about 25 s per cap on one
core; this script uses a slice of it so it finishes in a few seconds.

Run: python tutorials/03_architecture_sweep.py
"""

from dataclasses import replace

from photoformer.arch_dse import ArchSearchSpace, pareto_front, rank, rank_of, sweep

space = ArchSearchSpace(h_range=(1, 2, 4), l_range=(1, 2), k_range=(12, 29, 51), n_range=(12, 17, 23))
points = sweep(space)

for cap in (100.0, 10.0):
    feasible = rank([replace(p, feasible=p.peak_power_w <= cap) for p in points])
    print(f"cap {cap:g} W: {len(feasible)} of {len(points)} configurations feasible")
    for p in feasible[:5]:
        print(f"  {list(p.config.shape)}  EPB/GOPS {p.objective:.3e}  GOPS {p.avg_gops:7.1f}  "
              f"peak {p.peak_power_w:6.2f} W")
    for shape in ((4, 2, 51, 17), (4, 1, 12, 12)):
        pos = rank_of(feasible, shape)
        print(f"  {list(shape)} is {'infeasible' if pos is None else f'number {pos + 1}'}")

front = pareto_front(points)
print(f"\n{len(front)} configurations on the EPB / GOPS Pareto front at 100 W")

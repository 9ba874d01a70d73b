"""
Search MR-bank designs (Q factor, channel spacing) for the largest
tunable range that still separates 128 amplitude levels.

On the stock grid (Q up to 8000) crosstalk keeps the worst-case SNR
below about 18.3 dB, short of the roughly 24 dB the level count needs,
so nothing is feasible. Widening the Q range finds sharp rings that work.

Run: python tutorials/02_mr_bank_design.py
"""

from photoformer.devices import BankGeometry, snr_profile_db
from photoformer.mrbank import DseGrid, explore, feasibility_frontier, sweep

grid = DseGrid()
designs = sweep(grid)
best = max(designs, key=lambda d: d.snr_db)
print(f"stock grid: {len(designs)} points, {sum(d.feasible for d in designs)} feasible")
print(f"  best worst-case SNR {best.snr_db:.2f} dB at Q = {best.q_factor:g}, CS = {best.channel_spacing:g} nm")
print(f"  needs R_tune > {best.bound_nm:.3f} nm but has {best.r_tune:.3f} nm")

# SNR per victim channel: the last one sees no leakage at all
profile = snr_profile_db(BankGeometry(6500, 1.0, 17))
print("  per-channel SNR at Q = 6500, 1 nm:", " ".join(f"{v:.1f}" for v in profile))

wide = DseGrid(q_range=(2000.0, 40000.0, 500.0))
ranked = explore(wide)
print(f"\nQ up to 40000: {len(ranked)} feasible")
for d in ranked:
    print(f"  Q = {d.q_factor:g}, CS = {d.channel_spacing:g} nm, R_tune = {d.r_tune:.4f} nm, SNR = {d.snr_db:.2f} dB")

print("\nsmallest feasible Q per channel spacing (Q up to 2e5):")
for cs, q in feasibility_frontier(DseGrid(q_range=(2000.0, 200000.0, 2000.0))):
    print(f"  CS {cs:.1f} nm -> {'none' if q is None else f'{q:g}'}")

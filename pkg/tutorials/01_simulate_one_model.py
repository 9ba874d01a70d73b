"""
Simulate BERT-base on the [4, 2, 51, 17] accelerator and look at where
the time and power go.

Run: python tutorials/01_simulate_one_model.py
"""

from photoformer.mapper import ArchConfig, map_graph
from photoformer.model_ir import get_model, lower, op_count
from photoformer.perf import simulate

spec = get_model("bert-base")
graph = lower(spec)
print(f"{spec.name}: {len(graph.nodes)} graph nodes, {op_count(graph) / 1e9:.2f} G ops at seq_len {spec.seq_len}")

arch = ArchConfig.parse("datacenter-optimal")
schedule = map_graph(graph, arch)
print(f"mapped to {len(schedule.stages)} stages in {len(schedule.groups())} parallel groups "
      f"(head batch {schedule.head_batch}, layer batch {schedule.layer_batch})")

report = simulate(graph, arch)
print(f"latency {report.total_latency_s * 1e3:.3f} ms, energy {report.total_energy_j:.4f} J")
print(f"average power {report.avg_power_w:.2f} W, peak {report.peak_power_w:.2f} W")
print(f"{report.gops:.1f} GOPS, {report.epb_j_per_bit * 1e12:.3f} pJ/bit")

print("\nper unit tag:")
for tag, b in sorted(report.breakdown.items(), key=lambda kv: -kv[1].power_share):
    print(f"  {tag:<30} power {b.power_share:6.1%}   latency {b.latency_share:6.1%}")

# weight sharing only saves weight programming, so latency is unchanged
albert = simulate(lower(get_model("albert-base")), arch)
print(f"\nalbert-base energy {albert.total_energy_j:.4f} J "
      f"({albert.total_energy_j / report.total_energy_j:.1%} of bert-base)")

print("\nconstants that came from defaults rather than measured data:")
for a in report.assumptions[:8]:
    print(f"  {a.name} = {a.value} ({a.provenance})")

"""
Command-line front end: ``photoformer {sim,dse-arch,dse-mrbank,verify,compare}``.

Exit codes
----------
0  success
1  ``verify`` found a failing check
2  bad command line (argparse)
3  input file missing or malformed
4  unknown builtin model name
5  exploration finished with no feasible design (reports are still written)
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Any, Sequence

from . import SCHEMA_VERSION, __version__
from .arch_dse import (
    DEFAULT_H,
    DEFAULT_K,
    DEFAULT_L,
    DEFAULT_N,
    ArchSearchSpace,
    pareto_front,
    rank,
    scatter_csv,
    sweep,
)
from .devices import IngestError, load_device_table, load_loss_budget
from .io import atomic_write, dumps
from .mapper import ArchConfig, MapOptions, map_graph
from .model_ir import builtin_models, builtin_names, get_model, load_model_spec, lower
from .mrbank import DseGrid, designs_csv, feasibility_frontier, frontier_csv, rank as rank_designs
from .mrbank import sweep as sweep_designs
from .perf import (
    Baseline,
    PerfOptions,
    compare,
    default_devices,
    default_electronics,
    default_losses,
    load_baselines,
    load_electronics,
    simulate,
)
from .verify import format_table, run_all

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_UNKNOWN_MODEL = 4
EXIT_INFEASIBLE = 5


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'") from exc


def _resolve_model(name: str):
    path = Path(name)
    if path.suffix == ".json" or path.exists():
        if not path.exists():
            raise CliError(f"model file not found: {name}", EXIT_INPUT)
        return load_model_spec(path)
    try:
        return get_model(name)
    except KeyError:
        raise CliError(f"unknown model '{name}'; builtins are: {', '.join(builtin_names())}",
                       EXIT_UNKNOWN_MODEL) from None


def _load_constants(args) -> tuple:
    def load(fn, path, default):
        if path is None:
            return default()
        if not Path(path).exists():
            raise CliError(f"file not found: {path}", EXIT_INPUT)
        return fn(path)

    return (
        load(load_device_table, args.device_file, default_devices),
        load(load_loss_budget, args.loss_file, default_losses),
        load(load_electronics, args.electronics_file, default_electronics),
    )


def _map_options(args) -> MapOptions:
    return MapOptions(fused_rule=args.fused_rule, dac_mode=args.dac_mode)


def _option_assumptions(args) -> list[dict[str, Any]]:
    out = []
    defaults = MapOptions()
    for key in ("fused_rule", "dac_mode"):
        value = getattr(args, key)
        out.append({"name": key, "value": value,
                    "provenance": "default" if value == getattr(defaults, key) else "flag"})
    for key in ("device_file", "loss_file", "electronics_file"):
        if getattr(args, key) is None:
            out.append({"name": key, "value": "bundled", "provenance": "default"})
    return out


def _emit(out_dir: Path, fmt: str, stem: str, doc: dict[str, Any], tables: dict[str, str]) -> list[Path]:
    written = []
    if fmt in ("json", "both"):
        written.append(atomic_write(out_dir / f"{stem}.json", dumps(doc)))
    if fmt in ("csv", "both"):
        for suffix, text in tables.items():
            written.append(atomic_write(out_dir / f"{stem}_{suffix}.csv", text))
    return written


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_sim(args) -> int:
    spec = _resolve_model(args.model)
    if args.seq_len is not None:
        spec = spec.with_seq_len(args.seq_len)
    arch = ArchConfig.parse(args.arch, pipelined=args.pipelined)
    devices, losses, electronics = _load_constants(args)
    options = PerfOptions(epb_denominator=args.epb_denominator)
    graph = lower(spec)
    schedule = map_graph(graph, arch, _map_options(args))
    report = simulate(graph, arch, devices, losses, electronics, options, _map_options(args))
    doc = report.to_dict()
    doc["assumptions"] = doc["assumptions"] + _option_assumptions(args)
    stem = f"sim_{spec.name}"
    written = _emit(Path(args.output_dir), args.format, stem, doc,
                    {"breakdown": report.breakdown_csv(), "schedule": schedule.table()})
    print(f"{spec.name} on {list(arch.shape)}{' pipelined' if arch.pipelined else ''}")
    print(f"  latency   {report.total_latency_s * 1e3:.6f} ms")
    print(f"  energy    {report.total_energy_j:.6e} J")
    print(f"  avg power {report.avg_power_w:.4f} W   peak power {report.peak_power_w:.4f} W")
    print(f"  GOPS      {report.gops:.4f}   EPB {report.epb_j_per_bit:.6e} J/bit")
    print(f"  {len(doc['assumptions'])} defaulted or flagged constants listed under 'assumptions'")
    for p in written:
        print(f"  wrote {p}")
    return EXIT_OK


def cmd_dse_arch(args) -> int:
    devices, losses, electronics = _load_constants(args)
    if args.models:
        workloads = tuple(_resolve_model(m) for m in args.models.split(","))
    else:
        workloads = tuple(builtin_models())
    space = ArchSearchSpace(args.h, args.l, args.k, args.n, power_cap_w=args.power_cap,
                            workload_set=workloads, pipelined=args.pipelined)
    points = sweep(space, devices, losses, electronics, PerfOptions(), _map_options(args), args.workers)
    ranked = rank(points)
    front = pareto_front(points)

    def point_doc(p):
        h, l, k, n = p.config.shape
        return {
            "arch": {"H": h, "L": l, "K": k, "N": n},
            "avg_epb_j_per_bit": p.avg_epb,
            "avg_gops": p.avg_gops,
            "objective": p.objective,
            "peak_power_w": p.peak_power_w,
            "per_model": {m: {"epb_j_per_bit": e, "gops": g, "peak_power_w": pk} for m, e, g, pk in p.per_model},
        }

    doc = {
        "schema_version": SCHEMA_VERSION,
        "power_cap_w": args.power_cap,
        "lattice": {"H": list(space.h_range), "L": list(space.l_range), "K": list(space.k_range),
                    "N": list(space.n_range)},
        "workloads": [w.name for w in workloads],
        "points_evaluated": len(points),
        "points_feasible": len(ranked),
        "ranked": [point_doc(p) for p in ranked[: args.top_k]],
        "pareto_front": [point_doc(p) for p in front],
        "assumptions": _option_assumptions(args) + [
            {"name": "objective", "value": "mean EPB / mean GOPS over workloads", "provenance": "default"},
            {"name": "feasibility", "value": "max peak power over workloads <= cap", "provenance": "default"},
        ],
    }
    written = _emit(Path(args.output_dir), args.format, "dse_arch", doc, {"scatter": scatter_csv(points)})
    print(f"{len(points)} configurations, {len(ranked)} feasible under {args.power_cap} W")
    for i, p in enumerate(ranked[: min(args.top_k, 10)]):
        print(f"  {i + 1:>3}. {list(p.config.shape)}  objective {p.objective:.6e}  peak {p.peak_power_w:.3f} W")
    for p in written:
        print(f"  wrote {p}")
    return EXIT_OK if ranked else EXIT_INFEASIBLE


def cmd_dse_mrbank(args) -> int:
    grid = DseGrid.for_bits(
        args.bits,
        q_range=(args.q_min, args.q_max, args.q_step),
        cs_range=(args.cs_min, args.cs_max, args.cs_step),
        fsr=args.fsr,
        num_channels=args.channels,
    )
    designs = sweep_designs(grid, args.workers)
    ranked = rank_designs(designs)
    frontier = feasibility_frontier(grid, designs)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "grid": {**asdict(grid), "q_range": list(grid.q_range), "cs_range": list(grid.cs_range)},
        "points_evaluated": len(designs),
        "points_feasible": len(ranked),
        "ranked": [d.as_dict() for d in ranked],
        "frontier": [{"channel_spacing_nm": cs, "min_feasible_q": q} for cs, q in frontier],
        "assumptions": [
            {"name": "feasibility_snr", "value": "worst-case victim", "provenance": "default"},
            {"name": "lambda_res_nm", "value": grid.lambda_res, "provenance": "default"},
            {"name": "input_power_dbm", "value": 0.0, "provenance": "default"},
        ],
    }
    written = _emit(Path(args.output_dir), args.format, "dse_mrbank", doc,
                    {"ranked": designs_csv(ranked), "all": designs_csv(designs), "frontier": frontier_csv(frontier)})
    print(f"{len(designs)} (Q, CS) points, {len(ranked)} feasible at N_levels = {grid.n_levels}")
    if ranked:
        print(designs_csv(ranked[:5]), end="")
    else:
        best = max(designs, key=lambda d: d.snr_db)
        print(f"  no feasible design; best worst-case SNR {best.snr_db:.3f} dB at Q = {best.q_factor:g}, "
              f"CS = {best.channel_spacing:g} nm (bound there {best.bound_nm:.4f} nm vs R_tune {best.r_tune:.4f} nm)")
    for p in written:
        print(f"  wrote {p}")
    return EXIT_OK if ranked else EXIT_INFEASIBLE


def cmd_verify(args) -> int:
    results = run_all(seed=args.seed, scale=args.scale)
    print(format_table(results))
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_VERIFY_FAILED if failed else EXIT_OK


def _load_report(path: str) -> tuple[str, Baseline]:
    if not Path(path).exists():
        raise CliError(f"report not found: {path}", EXIT_INPUT)
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    try:
        arch = doc["arch"]
        label = f"{doc['model']}@{arch['H']},{arch['L']},{arch['K']},{arch['N']}"
        return label, Baseline(label, float(doc["gops"]), float(doc["epb_j_per_bit"]), path)
    except (KeyError, TypeError) as exc:
        raise CliError(f"{path} is not a sim report: missing {exc}", EXIT_INPUT) from None


def cmd_compare(args) -> int:
    entries = [_load_report(p) for p in args.reports]
    for path in args.baselines or []:
        if not Path(path).exists():
            raise CliError(f"baseline file not found: {path}", EXIT_INPUT)
        entries += [(b.label, b) for b in load_baselines(path)]
    if not entries:
        raise CliError("nothing to compare: pass sim reports and/or --baselines", EXIT_INPUT)
    rows = compare(entries)
    labels = [label for label, _ in entries]
    lines = ["label,gops,epb_j_per_bit,gops_norm,epb_norm," + ",".join(
        f"gops_vs_{l},epb_vs_{l}" for l in labels)]
    for row in rows:
        ratios = ",".join(f"{row['gops_ratio'][l]:.9e},{row['epb_ratio'][l]:.9e}" for l in labels)
        lines.append(f"{row['label']},{row['gops']:.9e},{row['epb_j_per_bit']:.9e},"
                     f"{row['gops_norm']:.9e},{row['epb_norm']:.9e},{ratios}")
    doc = {"schema_version": SCHEMA_VERSION, "rows": rows,
           "sources": {label: e.source for label, e in entries}}
    written = _emit(Path(args.output_dir), args.format, "compare", doc, {"table": "\n".join(lines) + "\n"})
    for row in rows:
        print(f"  {row['label']:<32} GOPS x{row['gops_norm']:.4f}  EPB x{row['epb_norm']:.4f}")
    for p in written:
        print(f"  wrote {p}")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser, constants: bool = True) -> None:
    p.add_argument("--output-dir", default=".", help="directory for reports (default: current)")
    p.add_argument("--format", choices=("json", "csv", "both"), default="both")
    p.add_argument("--seed", type=int, default=0, help="seed for randomised steps")
    if constants:
        p.add_argument("--device-file", help="device table JSON (default: bundled)")
        p.add_argument("--loss-file", help="loss budget JSON (default: bundled)")
        p.add_argument("--electronics-file", help="electronic constants JSON (default: bundled)")
        p.add_argument("--dac-mode", choices=("mr", "column"), default=MapOptions().dac_mode)
        p.add_argument("--fused-rule", choices=("max", "sum"), default=MapOptions().fused_rule)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="photoformer", description=__doc__.split("\n\n")[0],
                                     epilog=__doc__.split("\n\n", 1)[1],
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sim", help="simulate one model on one architecture")
    p.add_argument("--model", required=True, help=f"builtin ({', '.join(builtin_names())}) or JSON spec path")
    p.add_argument("--arch", default="datacenter-optimal", help="H,L,K,N or datacenter-optimal / edge-optimal")
    p.add_argument("--seq-len", type=int)
    p.add_argument("--pipelined", action="store_true")
    p.add_argument("--epb-denominator", choices=("ops", "activations"), default="ops")
    _add_common(p)
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("dse-arch", help="sweep the [H, L, K, N] lattice under a power cap")
    p.add_argument("--power-cap", type=float, default=100.0, help="watts (edge study: 10)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--top-k", type=int, default=20)
    p.add_argument("--h", type=_int_list, default=DEFAULT_H)
    p.add_argument("--l", type=_int_list, default=DEFAULT_L)
    p.add_argument("--k", type=_int_list, default=DEFAULT_K)
    p.add_argument("--n", type=_int_list, default=DEFAULT_N)
    p.add_argument("--models", help="comma-separated workloads (default: all builtins)")
    p.add_argument("--pipelined", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_dse_arch)

    p = sub.add_parser("dse-mrbank", help="sweep MR-bank Q and channel spacing")
    p.add_argument("--q-min", type=float, default=2000.0)
    p.add_argument("--q-max", type=float, default=8000.0)
    p.add_argument("--q-step", type=float, default=100.0)
    p.add_argument("--cs-min", type=float, default=0.1)
    p.add_argument("--cs-max", type=float, default=1.0)
    p.add_argument("--cs-step", type=float, default=0.1)
    p.add_argument("--bits", type=int, default=8)
    p.add_argument("--fsr", type=float, default=20.0)
    p.add_argument("--channels", type=int, default=17)
    p.add_argument("--workers", type=int, default=1)
    _add_common(p, constants=False)
    p.set_defaults(func=cmd_dse_mrbank)

    p = sub.add_parser("verify", help="run the randomised invariant suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scale", type=float, default=1.0, help="multiply case counts")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("compare", help="ratio table across sim reports and literature baselines")
    p.add_argument("reports", nargs="*", help="sim report JSON files")
    p.add_argument("--baselines", action="append", help="baseline JSON with source annotations")
    _add_common(p, constants=False)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (IngestError, json.JSONDecodeError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

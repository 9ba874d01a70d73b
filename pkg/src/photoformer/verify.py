"""
Randomised self-check of the model's mathematical invariants.

Each check draws its cases from a seeded generator and returns a
:class:`CheckResult`; :func:`run_all` runs the whole suite. The test-suite
covers the same ground with hypothesis; this module exists so an installed
copy can check itself without test dependencies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import devices as dv
from . import kernels as kn
from .mapper import ArchConfig, map_graph, partial_products, tile_matmul
from .model_ir import builtin_models, lower, op_count
from .mrbank import DseGrid, evaluate_design, explore, sweep
from .perf import simulate
from .units import dbm_to_mw, mw_to_dbm


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    cases: int
    detail: str = ""


def _random_attention(rng: np.random.Generator, max_dim: int = 64):
    seq = int(rng.integers(1, max_dim + 1))
    d = int(rng.integers(1, max_dim + 1))
    dk = int(rng.integers(1, max_dim + 1))
    x = rng.standard_normal((seq, d))
    wq = rng.standard_normal((d, dk)) / math.sqrt(d)
    wk = rng.standard_normal((d, dk)) / math.sqrt(d)
    wv = rng.standard_normal((d, dk))
    return x, wq, wk, wv, dk


def check_attention(rng, cases):
    worst = 0.0
    for _ in range(cases):
        x, wq, wk, wv, dk = _random_attention(rng)
        err = np.max(np.abs(kn.attention_reassociated(x, wq, wk, wv, dk) - kn.attention_reference(x, wq, wk, wv, dk)))
        worst = max(worst, float(err))
    return worst < 1e-10, f"max abs error {worst:.3e}"


def check_softmax(rng, cases):
    worst = 0.0
    for _ in range(cases):
        v = rng.uniform(-50, 50, int(rng.integers(1, 64)))
        worst = max(worst, float(np.max(np.abs(kn.softmax_lse(v) - kn.softmax_rows_naive(v)))))
        big = rng.uniform(-1e4, 1e4, int(rng.integers(1, 64)))
        out = kn.softmax_lse(big)
        if not (np.all(np.isfinite(out)) and np.all(out >= 0) and abs(out.sum() - 1) < 1e-12):
            return False, f"bad output for large input {big[:4]}"
    return worst < 1e-12, f"max abs error vs naive {worst:.3e}"


def check_gelu(rng, cases):
    x = np.linspace(-6, 6, 1_200_001)
    sup = float(np.max(np.abs(kn.gelu_tanh(x) - kn.gelu_sigmoid(x))))
    xs = np.sort(rng.uniform(kn.GELU_SIGMOID_ARGMIN, 6, (cases, 2)), axis=1)
    mono = bool(np.all(kn.gelu_sigmoid(xs[:, 1]) >= kn.gelu_sigmoid(xs[:, 0])))
    odd = rng.uniform(-6, 6, cases)
    ident = float(np.max(np.abs(kn.gelu_sigmoid(odd) - kn.gelu_sigmoid(-odd) - odd)))
    ok = sup <= kn.GELU_FORMS_SUP_DIFF + 1e-9 and mono and ident < 1e-12
    return ok, f"sup diff {sup:.6f}, monotone right of argmin {mono}, odd identity {ident:.1e}"


def check_quantizer(rng, cases):
    cfg = kn.QuantConfig(bits=8)
    for _ in range(cases):
        v_max = float(rng.uniform(0.01, 100))
        v = float(rng.uniform(-v_max, v_max))
        q = kn.quantize_split(v, cfg, v_max)
        back = kn.dequantize(q, cfg, v_max)
        if abs(back - v) > v_max / (2 * (cfg.n_levels - 1)) * (1 + 1e-12):
            return False, f"error bound broken at v={v}, v_max={v_max}"
        if kn.quantize_split(back, cfg, v_max) != q:
            return False, f"not idempotent at v={v}"
    return True, f"{cfg.n_levels} levels"


def check_bpd(rng, cases):
    for _ in range(cases):
        n = int(rng.integers(1, 64))
        a, w = rng.standard_normal(n), rng.standard_normal(n)
        pos, neg = kn.split_arms(a * w)
        if not math.isclose(kn.bpd_accumulate(pos, neg), -kn.bpd_accumulate(neg, pos), abs_tol=0.0):
            return False, "antisymmetry broken"
        if not math.isclose(kn.bpd_accumulate(pos, neg), float(np.dot(a, w)), rel_tol=1e-9, abs_tol=1e-12):
            return False, "split sum differs from dot product"
    v = rng.standard_normal(1000)
    exact = bool(np.array_equal(kn.shift_divide(v, 64), v / 8.0))
    return exact, f"shift by 3 equals /8 exactly: {exact}"


def check_crosstalk(rng, cases):
    for _ in range(cases):
        lj = float(rng.uniform(1000, 2000))
        q = float(rng.uniform(100, 1e5))
        d1, d2 = np.sort(rng.uniform(1e-3, 10, 2))
        c0, c1, c2 = (dv.crosstalk_coefficient(lj + d, lj, q) for d in (0.0, d1, d2))
        if not (c0 == 1.0 and 0 < c2 <= c1 < 1):
            return False, f"bounds/monotonicity broken at lj={lj}, q={q}"
        if dv.crosstalk_coefficient(lj + d1, lj, q * 1.5) >= c1:
            return False, "not decreasing in Q"
        if not math.isclose(dv.crosstalk_coefficient(lj - d1, lj, q), c1, rel_tol=1e-12):
            return False, "not symmetric in detuning sign"
    return True, ""


def check_snr(rng, cases):
    for _ in range(cases):
        q = float(rng.uniform(2000, 8000))
        cs = float(rng.uniform(0.1, 1.0))
        n = int(rng.integers(2, 17))
        base = dv.worst_case_snr_db(dv.BankGeometry(q, cs, n))
        if not (dv.worst_case_snr_db(dv.BankGeometry(q * 1.1, cs, n)) > base
                and dv.worst_case_snr_db(dv.BankGeometry(q, cs * 1.1, n)) > base
                and dv.worst_case_snr_db(dv.BankGeometry(q, cs, n + 1)) < base):
            return False, f"SNR monotonicity broken at Q={q}, CS={cs}, n={n}"
    return True, ""


def check_feasibility(rng, cases):
    grid = DseGrid()
    for _ in range(cases):
        r = float(rng.uniform(0.01, 2))
        snr = float(rng.uniform(0, 40))
        lv = int(rng.integers(1, 257))
        if dv.is_feasible(r, lv, snr) and not dv.is_feasible(r, lv, snr + 1):
            return False, "feasibility not monotone in SNR"
        tr = dv.tunable_range(1550.0, r * 1e4)
        if not math.isclose(tr * r * 1e4, 3100.0, rel_tol=1e-12):
            return False, "R_tune * Q != 2 lambda"
    # along CS at fixed Q on the default grid
    designs = {(d.q_factor, d.channel_spacing): d for d in sweep(grid)}
    css = grid.cs_values()
    for q in grid.q_values():
        flags = [designs[(q, cs)].feasible for cs in css]
        if any(a and not b for a, b in zip(flags, flags[1:])):
            return False, f"feasibility not monotone in CS at Q={q}"
    return True, ""


def check_laser(rng, cases):
    for _ in range(cases):
        loss = float(rng.uniform(0, 40))
        n = int(rng.integers(1, 128))
        s = float(rng.uniform(-40, 0))
        p = dv.required_laser_power_dbm(loss, n, s)
        if not math.isclose(p - s - loss, 10 * math.log10(n), abs_tol=1e-9):
            return False, "laser budget not additive"
        mw = float(rng.uniform(1e-6, 1e3))
        if not math.isclose(dbm_to_mw(mw_to_dbm(mw)), mw, rel_tol=1e-12):
            return False, "dBm round trip"
    return True, ""


def check_tiling(rng, cases):
    for _ in range(cases):
        m, p, c, k, n = (int(v) for v in rng.integers(1, 200, 5))
        passes = tile_matmul(m, p, c, k, n)
        work = partial_products(m, p, c, n)
        if not (passes * k >= work > (passes - 1) * k):
            return False, f"work not conserved for {(m, p, c, k, n)}"
        if tile_matmul(m, p, c, 2 * k, n) > passes or tile_matmul(m, p, c, k, 2 * n) > passes:
            return False, "doubling K or N increased passes"
        if sum(min(n, p - j) for j in range(0, p, n)) != p:
            return False, "column chunks do not cover p"
    return True, ""


def check_perf(rng, cases):
    models = builtin_models()
    graphs = [lower(m) for m in models]
    for _ in range(cases):
        g = graphs[int(rng.integers(len(graphs)))]
        h, l = int(rng.choice([1, 2, 4, 8, 12])), int(rng.choice([1, 2, 4, 12]))
        k, n = int(rng.integers(4, 64)), int(rng.integers(4, 32))
        rep = simulate(g, ArchConfig(h, l, k, n))
        ops = op_count(g)
        if not math.isclose(rep.gops * rep.total_latency_s * 1e9, ops, rel_tol=1e-12):
            return False, "GOPS identity"
        if not math.isclose(rep.epb_j_per_bit * rep.bits * ops, rep.total_energy_j, rel_tol=1e-12):
            return False, "EPB identity"
        for arch in (ArchConfig(h, l, 2 * k, n), ArchConfig(h, l, k, 2 * n)):
            if simulate(g, arch).total_latency_s > rep.total_latency_s * (1 + 1e-12):
                return False, f"latency rose when widening {arch.shape}"
        if simulate(g, ArchConfig(h, l, k, n, pipelined=True)).total_latency_s > rep.total_latency_s * (1 + 1e-12):
            return False, "pipelining increased latency"
        if not rep.assumptions:
            return False, "no assumptions reported"
    return True, ""


def check_schedule(rng, cases):
    for spec in builtin_models():
        g = lower(spec.with_seq_len(int(rng.integers(1, 64))))
        g.validate()
        sched = map_graph(g, ArchConfig(4, 2, 51, 17))
        stage_of = {}
        for i, st in enumerate(sched.stages):
            for nid in st.node_ids:
                stage_of[nid] = i
        for a, b in g.edges:
            sa, sb = sched.stages[stage_of[a]], sched.stages[stage_of[b]]
            na, nb = g.nodes[a], g.nodes[b]
            # layers sharing a layer batch run as a spatial pipeline over the L unit sets
            handoff = (na.block == nb.block and na.layer_index < nb.layer_index
                       and sa.layer_iteration == sb.layer_iteration)
            if stage_of[a] > stage_of[b] and sa.parallel_group != sb.parallel_group and not handoff:
                return False, f"{spec.name}: edge {a}->{b} runs backwards"
            if sa.parallel_group == sb.parallel_group and "softmax" in (sa.unit_tag, sb.unit_tag) \
                    and sa.unit_tag != sb.unit_tag:
                return False, f"{spec.name}: softmax shares a group with its neighbour"
        matmul_work = sum(partial_products(*n.dims, 17) for n in g.nodes if n.kind == "matmul")
        if sum(st.partial_products for st in sched.stages) != matmul_work:
            return False, f"{spec.name}: tiling lost or duplicated work"
    return True, ""


def check_mrbank(rng, cases):
    grid = DseGrid(q_range=(2000.0, 40000.0, 500.0))
    ranked = explore(grid)
    brute = []
    for q in grid.q_values():
        for cs in grid.cs_values():
            d = evaluate_design(q, cs, grid)
            if d.r_tune > grid.n_levels * 10 ** (-d.snr_db / 10):
                brute.append(d)
    brute.sort(key=lambda d: (-d.r_tune, -d.snr_db, -d.channel_spacing))
    if ranked != brute:
        return False, "ranking differs from brute-force sort"
    return True, f"{len(ranked)} feasible on the extended grid"


CHECKS: dict[str, tuple[Callable, int]] = {
    "attention_reassociation": (check_attention, 200),
    "softmax_lse": (check_softmax, 1000),
    "gelu_forms": (check_gelu, 1000),
    "quantizer_bound": (check_quantizer, 1000),
    "bpd_and_shift": (check_bpd, 1000),
    "crosstalk_bounds": (check_crosstalk, 1000),
    "snr_monotonicity": (check_snr, 1000),
    "feasibility_monotone": (check_feasibility, 1000),
    "laser_additivity": (check_laser, 1000),
    "tiling_conservation": (check_tiling, 1000),
    "perf_identities": (check_perf, 20),
    "schedule_order": (check_schedule, 1),
    "mrbank_brute_force": (check_mrbank, 1),
}


def run_all(seed: int = 0, scale: float = 1.0) -> list[CheckResult]:
    results = []
    for i, (name, (fn, cases)) in enumerate(CHECKS.items()):
        n = max(1, int(cases * scale))
        rng = np.random.default_rng([seed, i])
        try:
            ok, detail = fn(rng, n)
        except Exception as exc:  # a crash is a failed check, reported not raised
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(name, bool(ok), n, detail))
    return results


def format_table(results: list[CheckResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'check':<{width}}  result  cases  detail"]
    for r in results:
        lines.append(f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL':<6}  {r.cases:>5}  {r.detail}")
    return "\n".join(lines)

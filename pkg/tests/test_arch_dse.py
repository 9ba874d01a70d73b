from dataclasses import replace

import pytest

from photoformer.arch_dse import (
    DEFAULT_H,
    DEFAULT_K,
    DEFAULT_L,
    DEFAULT_N,
    ArchSearchSpace,
    DsePoint,
    explore_arch,
    explore_edge,
    pareto_front,
    rank,
    rank_of,
    scatter_csv,
    sweep,
)
from photoformer.mapper import ArchConfig
from photoformer.model_ir import builtin_models, lower
from photoformer.perf import simulate

SMALL = ArchSearchSpace(h_range=(1, 4, 12), l_range=(1, 2, 12), k_range=(8, 12, 51), n_range=(8, 12, 17),
                        workload_set=tuple(m.with_seq_len(32) for m in builtin_models()))


@pytest.fixture(scope="module")
def points():
    return sweep(SMALL)


def test_default_lattice_contains_reference_shapes():
    assert 4 in DEFAULT_H and {1, 2} <= set(DEFAULT_L)
    assert {12, 51} <= set(DEFAULT_K) and {12, 17} <= set(DEFAULT_N)
    assert len(ArchSearchSpace().configs()) == 5 * 5 * 10 * 10


def test_space_validation():
    with pytest.raises(ValueError):
        ArchSearchSpace(h_range=())
    with pytest.raises(ValueError):
        ArchSearchSpace(k_range=(0, 4))
    with pytest.raises(ValueError):
        ArchSearchSpace(power_cap_w=0)
    with pytest.raises(ValueError):
        ArchSearchSpace(workload_set=())
    assert ArchSearchSpace(h_range=(4, 1, 4)).h_range == (1, 4)


def test_single_config_space():
    space = replace(SMALL, h_range=(4,), l_range=(2,), k_range=(51,), n_range=(17,))
    (pt,) = sweep(space)
    assert pt.config.shape == (4, 2, 51, 17)
    assert explore_arch(space) == ([pt] if pt.feasible else [])


def test_point_invariants(points):
    for p in points:
        assert p.objective == p.avg_epb / p.avg_gops
        assert p.feasible == (p.peak_power_w <= p.config.power_cap_w)
        assert len(p.per_model) == len(SMALL.workload_set)


def test_rank_equals_independent_resort(points):
    ranked = rank(points)
    feasible = [p for p in points if p.peak_power_w <= SMALL.power_cap_w]
    resorted = sorted(feasible, key=lambda p: (p.avg_epb / p.avg_gops, p.peak_power_w, p.config.shape))
    assert [p.config.shape for p in ranked] == [p.config.shape for p in resorted]
    assert rank(list(reversed(points))) == ranked


def test_feasible_points_resimulate_under_cap(points):
    graphs = [lower(m) for m in SMALL.workload_set]
    for p in rank(points)[:10]:
        peak = max(simulate(g, p.config).peak_power_w for g in graphs)
        assert peak == p.peak_power_w <= SMALL.power_cap_w


def test_tightening_cap_never_improves(points):
    best = None
    for cap in (1000.0, 100.0, 30.0, 10.0, 3.0):
        ranked = rank([replace(p, feasible=p.peak_power_w <= cap) for p in points])
        if not ranked:
            break
        if best is not None:
            assert ranked[0].objective >= best
        best = ranked[0].objective


def test_edge_vs_datacenter(points):
    dc = explore_arch(SMALL)
    edge = explore_edge(SMALL)
    assert dc and edge
    assert edge[0].objective >= dc[0].objective
    assert max(p.avg_gops for p in edge) <= max(p.avg_gops for p in dc)
    assert {p.config.shape for p in edge} <= {p.config.shape for p in dc}
    assert all(p.config.power_cap_w == 10.0 for p in edge)


def test_best_point_pareto_undominated(points):
    ranked = rank(points)
    front = pareto_front(points)
    assert ranked[0] in front
    for p in front:
        assert not any(q.avg_epb <= p.avg_epb and q.avg_gops >= p.avg_gops and q != p
                       and (q.avg_epb < p.avg_epb or q.avg_gops > p.avg_gops) for q in ranked)


def test_rank_of(points):
    ranked = rank(points)
    assert rank_of(ranked, ranked[0].config.shape) == 0
    assert rank_of(ranked, (99, 99, 99, 99)) is None


def test_parallel_sweep_identical(points):
    assert sweep(SMALL, workers=3) == points
    assert scatter_csv(sweep(SMALL, workers=2)) == scatter_csv(points)


def test_empty_feasible_set_is_an_outcome():
    assert explore_arch(replace(SMALL, power_cap_w=1e-6)) == []


def test_tie_break_order():
    cfg = lambda *s: ArchConfig(*s)  # noqa: E731
    a = DsePoint(cfg(1, 1, 8, 8), 1.0, 1.0, 1.0, 5.0, True)
    b = DsePoint(cfg(1, 1, 8, 12), 1.0, 1.0, 1.0, 4.0, True)
    c = DsePoint(cfg(1, 1, 8, 11), 1.0, 1.0, 1.0, 4.0, True)
    d = DsePoint(cfg(2, 1, 8, 8), 2.0, 4.0, 0.5, 9.0, True)
    e = DsePoint(cfg(2, 2, 8, 8), 0.1, 9.0, 0.1, 9.0, False)
    assert rank([a, b, c, d, e]) == [d, c, b, a]


def test_scatter_csv_shape(points):
    text = scatter_csv(points)
    lines = text.splitlines()
    assert lines[0] == "H,L,K,N,avg_epb_j_per_bit,avg_gops,objective,peak_power_w,feasible"
    assert len(lines) == len(points) + 1

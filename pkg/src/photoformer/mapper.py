"""
Mapping of an operation graph onto the photonic accelerator.

The accelerator holds two sets of attention (MHA) units and one set of
feed-forward (FF) units, each set ``L`` deep. An MHA unit has ``H``
attention-head units plus a linear layer; every compute block is built
from ``K x N`` MR bank arrays, where one pass yields ``K`` partial dot
products of width ``N``.

Per layer the schedule is

    pre-softmax (fused optical chain)  ->  softmax  ->  [post-softmax + FF]

where the bracketed stages run concurrently in one parallel group.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field, fields
from typing import Iterable

from .model_ir import OpGraph, OpNode

ALIASES = {
    "datacenter-optimal": (4, 2, 51, 17),
    "paper-optimal": (4, 2, 51, 17),
    "edge-optimal": (4, 1, 12, 12),
}


@dataclass(frozen=True)
class ArchConfig:
    heads: int
    layers: int
    rows: int
    cols: int
    pipelined: bool = False
    power_cap_w: float = 100.0

    def __post_init__(self) -> None:
        for name in ("heads", "layers", "rows", "cols"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not self.power_cap_w > 0:
            raise ValueError(f"power cap must be positive, got {self.power_cap_w}")

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return (self.heads, self.layers, self.rows, self.cols)

    @classmethod
    def parse(cls, text: str, **kwargs) -> "ArchConfig":
        """``"4,2,51,17"`` or one of the named aliases."""
        key = text.strip().lower()
        if key in ALIASES:
            return cls(*ALIASES[key], **kwargs)
        parts = [p for p in key.replace("[", "").replace("]", "").split(",") if p.strip()]
        if len(parts) != 4:
            raise ValueError(f"architecture must be H,L,K,N or one of {sorted(ALIASES)}, got '{text}'")
        return cls(*(int(p) for p in parts), **kwargs)


@dataclass(frozen=True)
class DeviceCensus:
    mrs_weight: int = 0
    mrs_input: int = 0
    vcsels: int = 0
    pds_bpds: int = 0
    dacs: int = 0
    adcs: int = 0
    soas: int = 0
    memristors: int = 0

    def __post_init__(self) -> None:
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"{f.name} count must be >= 0")

    def __add__(self, other: "DeviceCensus") -> "DeviceCensus":
        return DeviceCensus(**{f.name: getattr(self, f.name) + getattr(other, f.name) for f in fields(self)})

    def scaled(self, k: int) -> "DeviceCensus":
        return DeviceCensus(**{f.name: getattr(self, f.name) * k for f in fields(self)})

    def as_dict(self) -> dict[str, int]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @property
    def mrs(self) -> int:
        return self.mrs_weight + self.mrs_input


@dataclass(frozen=True)
class Stage:
    """
    One schedulable step.

    ``pass_count`` is the number of sequential array passes. ``waveguides``
    is the number of concurrently lit waveguide rows (each needs its own
    laser budget) and ``path_arrays`` is how many arrays one such row
    cascades through, which sets its optical loss.
    """

    name: str
    unit_tag: str
    pass_count: int
    active_devices: DeviceCensus
    parallel_group: int
    layer_iteration: int
    node_ids: tuple[int, ...]
    kind: str = "optical"  # optical | softmax | elementwise | activation
    waveguides: int = 0
    path_arrays: int = 0
    uses_lut: bool = False
    softmax_units: int = 0
    partial_products: int = 0
    ops: int = 0

    def __post_init__(self) -> None:
        if self.pass_count < 1:
            raise ValueError(f"stage {self.name}: pass_count must be >= 1")


@dataclass(frozen=True)
class MappedSchedule:
    stages: tuple[Stage, ...]
    arch: ArchConfig
    head_batch: int = 1
    layer_batch: int = 1
    assumptions: tuple = field(default=(), compare=False)

    def groups(self) -> list[list[Stage]]:
        out: dict[int, list[Stage]] = {}
        for st in self.stages:
            out.setdefault(st.parallel_group, []).append(st)
        return [out[g] for g in sorted(out)]

    def table(self) -> str:
        cols = ["stage", "unit_tag", "passes", "parallel_group"] + [f.name for f in fields(DeviceCensus)]
        lines = [",".join(cols)]
        for st in self.stages:
            row = [st.name, st.unit_tag, str(st.pass_count), str(st.parallel_group)]
            row += [str(v) for v in st.active_devices.as_dict().values()]
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class MapOptions:
    """
    Knobs for the device census and pass-count composition.

    ``fused_rule`` picks how the cascaded pre-softmax matmuls combine:
    ``"max"`` treats them as a lock-step optical pipeline, ``"sum"`` runs
    them back to back. ``dac_mode`` selects ``"column"`` (one DAC per array
    column shared across rows) or ``"mr"`` (one per MR) for stationary
    arrays; streamed input arrays always use one DAC per column. Per-MR
    drive is the default since every stationary MR holds its own value.
    """

    fused_rule: str = "max"
    dac_mode: str = "mr"
    adcs_per_row: int = 1

    def __post_init__(self) -> None:
        if self.fused_rule not in ("max", "sum"):
            raise ValueError(f"fused_rule must be 'max' or 'sum', got {self.fused_rule}")
        if self.dac_mode not in ("column", "mr"):
            raise ValueError(f"dac_mode must be 'column' or 'mr', got {self.dac_mode}")


def tile_matmul(m: int, p: int, c: int, k: int, n: int) -> int:
    """Array passes for an ``(m x p) @ (p x c)`` matmul on a ``k x n`` array."""
    if min(m, p, c, k, n) < 1:
        raise ValueError("all dimensions must be >= 1")
    partials = m * c * -(-p // n)
    return -(-partials // k)


def partial_products(m: int, p: int, c: int, n: int) -> int:
    return m * c * -(-p // n)


def wavelength_demand(arch: ArchConfig) -> int:
    """Wavelengths per waveguide: one per array column."""
    return arch.cols


# --------------------------------------------------------------------------
# per-unit census
# --------------------------------------------------------------------------


def _array_census(k: int, n: int, stationary: int, streamed: int, opts: MapOptions,
                  weight_dacs_on: bool = True, stationary_is_weight: int | None = None) -> DeviceCensus:
    """
    MR and DAC counts for a group of arrays.

    ``stationary`` arrays hold per-MR values (weights or buffered
    activations), ``streamed`` arrays imprint an input vector shared by the
    rows. ``stationary_is_weight`` of the stationary arrays are layer
    weights; those lose their DACs when ``weight_dacs_on`` is false.
    """
    if stationary_is_weight is None:
        stationary_is_weight = stationary
    per_stationary = n if opts.dac_mode == "column" else k * n
    weight_arrays = stationary_is_weight if weight_dacs_on else 0
    other_stationary = stationary - stationary_is_weight
    dacs = per_stationary * (weight_arrays + other_stationary) + n * streamed
    return DeviceCensus(
        mrs_weight=k * n * stationary,
        mrs_input=k * n * streamed,
        dacs=dacs,
    )


def _detect(k: int, chains: int, opts: MapOptions, vcsel_sources: int) -> DeviceCensus:
    return DeviceCensus(
        vcsels=k * vcsel_sources,
        pds_bpds=k * chains,
        adcs=k * chains * opts.adcs_per_row,
    )


class _Grouped:
    """Graph nodes bucketed by (block, layer, sub-block, role)."""

    def __init__(self, graph: OpGraph):
        self.by_key: dict[tuple, list[OpNode]] = defaultdict(list)
        for n in graph.nodes:
            sub = "cross" if ".cross." in n.name else ("self" if ".self." in n.name else "")
            self.by_key[(n.block, n.layer_index, sub, n.role)].append(n)

    def get(self, block: str, layer: int, sub: str, role: str) -> list[OpNode]:
        return self.by_key.get((block, layer, sub, role), [])


def _graph_groups(graph: OpGraph) -> _Grouped:
    cached = graph.__dict__.get("_grouped")
    if cached is None:
        cached = _Grouped(graph)
        object.__setattr__(graph, "_grouped", cached)
    return cached


class _ScheduleBuilder:
    def __init__(self, graph: OpGraph, arch: ArchConfig, opts: MapOptions):
        self.graph = graph
        self.arch = arch
        self.opts = opts
        self.g = _graph_groups(graph)
        self.stages: list[Stage] = []
        self.group = 0
        spec = graph.spec
        self.model_heads = spec.num_heads
        self.head_batch = -(-self.model_heads // arch.heads)
        self.active_heads = min(arch.heads, self.model_heads)

    def new_group(self) -> int:
        self.group += 1
        return self.group

    def emit(self, **kw) -> None:
        self.stages.append(Stage(**kw))

    def _tiles(self, nodes: list[OpNode]) -> int:
        k, n = self.arch.rows, self.arch.cols
        return max(tile_matmul(*nd.dims, k, n) for nd in nodes)

    def _partials(self, nodes: Iterable[OpNode]) -> int:
        return sum(partial_products(*nd.dims, self.arch.cols) for nd in nodes)

    def _ops(self, nodes: Iterable[OpNode]) -> int:
        return sum(nd.op_count for nd in nodes)

    def _elementwise_passes(self, nodes: list[OpNode]) -> int:
        rows, cols = nodes[0].dims
        return -(-(rows * cols) // self.arch.rows)

    # ------------------------------------------------------------------
    def attention(self, block: str, layers: list[int], sub: str, iteration: int,
                  shared_group: int | None) -> int:
        """Emit pre-softmax, softmax and post-softmax stages; returns post group id."""
        k, n = self.arch.rows, self.arch.cols
        opts = self.opts
        nl = len(layers)
        get = lambda role: [x for l in layers for x in self.g.get(block, l, sub, role)]  # noqa: E731
        tag = f"{block}{layers[0]}" + (f"-{layers[-1]}" if nl > 1 else "") + (f".{sub}" if sub else "")

        q, qk, sc, v = get("q_proj"), get("q_wk"), get("scores"), get("v_proj")
        shared = any(x.shares_weights_with is not None for x in q)
        weights_on = not (shared and iteration > 0)
        chain = [self._tiles(q), self._tiles(qk), self._tiles(sc)]
        fused = max(chain) if opts.fused_rule == "max" else sum(chain)
        fused = max(fused, self._tiles(v))
        # per head unit: X imprint (streamed); W_Q, W_K^T/sqrt(d_k), X^T, W_V (stationary,
        # three of them layer weights). Two optical paths: the score chain and the V branch.
        per_head = _array_census(k, n, stationary=4, streamed=1, opts=opts,
                                 weight_dacs_on=weights_on, stationary_is_weight=3)
        per_head = per_head + _detect(k, chains=2, opts=opts, vcsel_sources=1)
        units = self.active_heads * nl
        pre_nodes = q + qk + sc + v
        self.emit(name=f"{tag}.pre_softmax", unit_tag="attention_head_pre_softmax",
                  pass_count=self.head_batch * fused, active_devices=per_head.scaled(units),
                  parallel_group=self.new_group(), layer_iteration=iteration,
                  node_ids=tuple(x.id for x in pre_nodes), waveguides=2 * k * units, path_arrays=4,
                  partial_products=self._partials(pre_nodes), ops=self._ops(pre_nodes))

        sm = get("softmax")
        seq = sm[0].dims[0]
        self.emit(name=f"{tag}.softmax", unit_tag="softmax", pass_count=self.head_batch * seq,
                  active_devices=DeviceCensus(memristors=k).scaled(units),
                  parallel_group=self.new_group(), layer_iteration=iteration,
                  node_ids=tuple(x.id for x in sm), kind="softmax", uses_lut=True,
                  softmax_units=units, ops=self._ops(sm))

        post_group = shared_group if shared_group is not None else self.new_group()
        av = get("attn_v")
        # softmax output tunes the score array straight from the LUT memristors (no DAC)
        per_head = DeviceCensus(mrs_input=k * n, mrs_weight=k * n,
                                dacs=n if opts.dac_mode == "column" else k * n)
        per_head = per_head + _detect(k, chains=1, opts=opts, vcsel_sources=1)
        self.emit(name=f"{tag}.attn_v", unit_tag="attention_head_post_softmax",
                  pass_count=self.head_batch * self._tiles(av), active_devices=per_head.scaled(units),
                  parallel_group=post_group, layer_iteration=iteration,
                  node_ids=tuple(x.id for x in av), waveguides=k * units, path_arrays=2,
                  partial_products=self._partials(av), ops=self._ops(av))

        cat, lin = get("concat"), get("mha_linear")
        lin_shared = any(x.shares_weights_with is not None for x in lin)
        per_unit = _array_census(k, n, stationary=1, streamed=1, opts=opts,
                                 weight_dacs_on=not (lin_shared and iteration > 0))
        per_unit = per_unit + _detect(k, chains=1, opts=opts, vcsel_sources=1)
        self.emit(name=f"{tag}.mha_linear", unit_tag="mha_linear", pass_count=self._tiles(lin),
                  active_devices=per_unit.scaled(nl), parallel_group=post_group,
                  layer_iteration=iteration, node_ids=tuple(x.id for x in cat + lin),
                  waveguides=k * nl, path_arrays=2, partial_products=self._partials(lin),
                  ops=self._ops(cat + lin))
        self._addnorm(get("mha_residual") + get("mha_ln"), "mha_addnorm", f"{tag}.mha_addnorm",
                      nl, post_group, iteration)
        return post_group

    def _addnorm(self, nodes: list[OpNode], unit_tag: str, name: str, nl: int, group: int,
                 iteration: int) -> None:
        k = self.arch.rows
        # two phase-locked VCSELs per lane for the coherent residual sum, one LN MR per lane
        per_unit = DeviceCensus(vcsels=2 * k, mrs_weight=k, dacs=k, pds_bpds=k, adcs=k)
        self.emit(name=name, unit_tag=unit_tag, pass_count=self._elementwise_passes(nodes),
                  active_devices=per_unit.scaled(nl), parallel_group=group, layer_iteration=iteration,
                  node_ids=tuple(x.id for x in nodes), kind="elementwise", waveguides=k * nl,
                  path_arrays=1, ops=self._ops(nodes))

    def feed_forward(self, block: str, layers: list[int], iteration: int, group: int) -> None:
        k, n = self.arch.rows, self.arch.cols
        opts = self.opts
        nl = len(layers)
        get = lambda role: [x for l in layers for x in self.g.get(block, l, "", role)]  # noqa: E731
        tag = f"{block}{layers[0]}" + (f"-{layers[-1]}" if nl > 1 else "")
        for role in ("ff_fc1", "ff_act", "ff_fc2"):
            nodes = get(role)
            if role == "ff_act":
                gelu = nodes[0].kind == "gelu"
                if gelu:
                    # 1.702x scaling MR, SOA sigmoid, memristor-held input driving the product MRs
                    per_unit = DeviceCensus(mrs_input=3 * k, soas=k, vcsels=k, memristors=k,
                                            pds_bpds=k, adcs=k)
                else:
                    per_unit = DeviceCensus(soas=k, pds_bpds=k, adcs=k)
                self.emit(name=f"{tag}.ff_activation", unit_tag="ff_activation",
                          pass_count=self._elementwise_passes(nodes), active_devices=per_unit.scaled(nl),
                          parallel_group=group, layer_iteration=iteration,
                          node_ids=tuple(x.id for x in nodes), kind="activation", waveguides=k * nl,
                          path_arrays=1, uses_lut=gelu, ops=self._ops(nodes))
                continue
            shared = any(x.shares_weights_with is not None for x in nodes)
            per_unit = _array_census(k, n, stationary=1, streamed=1, opts=opts,
                                     weight_dacs_on=not (shared and iteration > 0))
            per_unit = per_unit + _detect(k, chains=1, opts=opts, vcsel_sources=1)
            self.emit(name=f"{tag}.{role}", unit_tag=role, pass_count=self._tiles(nodes),
                      active_devices=per_unit.scaled(nl), parallel_group=group,
                      layer_iteration=iteration, node_ids=tuple(x.id for x in nodes),
                      waveguides=k * nl, path_arrays=2, partial_products=self._partials(nodes),
                      ops=self._ops(nodes))
        self._addnorm(get("ff_residual") + get("ff_ln"), "ff_addnorm", f"{tag}.ff_addnorm",
                      nl, group, iteration)

    def build(self) -> MappedSchedule:
        spec = self.graph.spec
        L = self.arch.layers
        batches = [list(range(i, min(i + L, spec.num_layers))) for i in range(0, spec.num_layers, L)]
        for it, layers in enumerate(batches):
            g = self.attention("encoder", layers, "", it, None)
            self.feed_forward("encoder", layers, it, g)
        if spec.topology == "encoder_decoder":
            for it, layers in enumerate(batches):
                self.attention("decoder", layers, "self", it, None)
                g = self.attention("decoder", layers, "cross", it, None)
                self.feed_forward("decoder", layers, it, g)
        return MappedSchedule(tuple(self.stages), self.arch, head_batch=self.head_batch,
                              layer_batch=len(batches))


def map_graph(graph: OpGraph, arch: ArchConfig, options: MapOptions | None = None) -> MappedSchedule:
    """Map ``graph`` (from :func:`photoformer.model_ir.lower`) onto ``arch``."""
    if graph.spec is None:
        raise ValueError("graph carries no model spec; build it with model_ir.lower")
    return _ScheduleBuilder(graph, arch, options or MapOptions()).build()


def stage_index_of_nodes(schedule: MappedSchedule) -> dict[int, int]:
    out = {}
    for idx, st in enumerate(schedule.stages):
        for nid in st.node_ids:
            out[nid] = idx
    return out


"""
Transformer workload description and lowering to an operation graph.

The lowering emits the attention score product in its reassociated form
``(X W_Q)(W_K^T / sqrt(d_k)) X^T`` so the key projection never has to be
materialised; the softmax scale is folded into the key weights and no
separate scale node appears.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Iterable

TOPOLOGIES = ("encoder_decoder", "encoder_only")
ACTIVATIONS = ("relu", "gelu")
NODE_KINDS = ("matmul", "softmax", "relu", "gelu", "add", "layernorm", "concat", "scale_shift")
UNIT_TAGS = (
    "attention_head_pre_softmax",
    "softmax",
    "attention_head_post_softmax",
    "mha_linear",
    "mha_addnorm",
    "ff_fc1",
    "ff_activation",
    "ff_fc2",
    "ff_addnorm",
)
_TAG_KINDS = {
    "attention_head_pre_softmax": {"matmul"},
    "softmax": {"softmax"},
    "attention_head_post_softmax": {"matmul"},
    "mha_linear": {"matmul", "concat"},
    "mha_addnorm": {"add", "layernorm"},
    "ff_fc1": {"matmul"},
    "ff_activation": {"relu", "gelu"},
    "ff_fc2": {"matmul"},
    "ff_addnorm": {"add", "layernorm"},
}
# per-element op counts for non-matmul nodes
_ELEMENT_OPS = {"softmax": 5, "relu": 1, "gelu": 1, "add": 1, "layernorm": 1, "scale_shift": 1, "concat": 0}
# roles whose weights are layer parameters (shared under cross-layer sharing)
_WEIGHT_ROLES = {"q_proj", "q_wk", "v_proj", "mha_linear", "ff_fc1", "ff_fc2", "mha_ln", "ff_ln"}


@dataclass(frozen=True)
class ModelSpec:
    name: str
    num_layers: int
    num_heads: int
    d_model: int
    d_ff: int
    seq_len: int = 128
    topology: str = "encoder_only"
    activation: str = "gelu"
    weight_sharing: bool = False
    bits: int = 8
    d_k: int | None = None
    seq_len_is_default: bool = field(default=False, compare=False)

    def __post_init__(self) -> None:
        if self.d_k is None:
            object.__setattr__(self, "d_k", self.d_model // max(self.num_heads, 1))
        for dim in ("num_layers", "num_heads", "d_model", "d_ff", "seq_len", "d_k"):
            if getattr(self, dim) < 1:
                raise ValueError(f"{self.name}: {dim} must be >= 1, got {getattr(self, dim)}")
        if self.d_k * self.num_heads != self.d_model:
            raise ValueError(
                f"{self.name}: d_k * num_heads = {self.d_k * self.num_heads} != d_model {self.d_model}"
            )
        if self.topology not in TOPOLOGIES:
            raise ValueError(f"{self.name}: topology must be one of {TOPOLOGIES}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"{self.name}: activation must be one of {ACTIVATIONS}")
        if self.bits not in (4, 8, 16, 32):
            raise ValueError(f"{self.name}: bits must be 4, 8, 16 or 32, got {self.bits}")

    def with_seq_len(self, seq_len: int) -> "ModelSpec":
        return replace(self, seq_len=seq_len, seq_len_is_default=False)

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "ModelSpec":
        known = {
            "name", "num_layers", "num_heads", "d_model", "d_ff", "seq_len", "topology",
            "activation", "weight_sharing", "bits", "d_k",
        }
        missing = {"name", "num_layers", "num_heads", "d_model", "d_ff"} - doc.keys()
        if missing:
            raise ValueError(f"model spec missing keys: {sorted(missing)}")
        kwargs = {k: v for k, v in doc.items() if k in known}
        return cls(**kwargs, seq_len_is_default=bool(doc.get("seq_len_default", False)))


def _builtin_docs() -> list[dict[str, Any]]:
    text = resources.files("photoformer.data").joinpath("models.json").read_text(encoding="utf-8")
    return json.loads(text)["models"]


def builtin_models() -> list[ModelSpec]:
    """Transformer-base, BERT-base, Albert-base and ViT-base."""
    return [ModelSpec.from_dict(doc) for doc in _builtin_docs()]


def builtin_names() -> list[str]:
    return [m.name for m in builtin_models()]


def get_model(name: str) -> ModelSpec:
    key = name.lower().replace("_", "-")
    for spec in builtin_models():
        if spec.name == key:
            return spec
    raise KeyError(f"unknown model '{name}'; builtins are: {', '.join(builtin_names())}")


def load_model_spec(path: str | Path) -> ModelSpec:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if "models" in doc:
        if len(doc["models"]) != 1:
            raise ValueError(f"{path}: expected exactly one model, found {len(doc['models'])}")
        doc = doc["models"][0]
    return ModelSpec.from_dict(doc)


@dataclass(frozen=True)
class OpNode:
    id: int
    name: str
    kind: str
    dims: tuple[int, ...]
    unit_tag: str
    layer_index: int
    role: str
    block: str = "encoder"
    mha_set: int | None = None
    head_index: int | None = None
    inputs: tuple[int, ...] = ()
    shares_weights_with: int | None = None

    @property
    def out_shape(self) -> tuple[int, int]:
        if self.kind == "matmul":
            m, _, c = self.dims
            return (m, c)
        return (self.dims[0], self.dims[1])

    @property
    def op_count(self) -> int:
        if self.kind == "matmul":
            m, p, c = self.dims
            return 2 * m * p * c
        rows, cols = self.dims
        return _ELEMENT_OPS[self.kind] * rows * cols


@dataclass(frozen=True)
class OpGraph:
    nodes: tuple[OpNode, ...]
    spec: ModelSpec | None = None

    @property
    def edges(self) -> list[tuple[int, int]]:
        return [(src, n.id) for n in self.nodes for src in n.inputs]

    def node(self, node_id: int) -> OpNode:
        return self.nodes[node_id]

    def topological_order(self) -> list[int]:
        """Kahn's algorithm; raises if the graph has a cycle."""
        indeg = {n.id: len(n.inputs) for n in self.nodes}
        users: dict[int, list[int]] = {n.id: [] for n in self.nodes}
        for src, dst in self.edges:
            users[src].append(dst)
        ready = [nid for nid, d in indeg.items() if d == 0]
        order = []
        while ready:
            nid = ready.pop()
            order.append(nid)
            for dst in users[nid]:
                indeg[dst] -= 1
                if indeg[dst] == 0:
                    ready.append(dst)
        if len(order) != len(self.nodes):
            raise ValueError("operation graph contains a cycle")
        return order

    def validate(self) -> None:
        """Check ids, tag/kind consistency, acyclicity and operand shapes."""
        for idx, n in enumerate(self.nodes):
            if n.id != idx:
                raise ValueError(f"node {n.name} has id {n.id}, expected {idx}")
            if n.kind not in _TAG_KINDS[n.unit_tag]:
                raise ValueError(f"node {n.name}: kind {n.kind} invalid for tag {n.unit_tag}")
            if any(src >= n.id for src in n.inputs):
                raise ValueError(f"node {n.name} consumes a later node")
            _check_shapes(n, [self.nodes[i].out_shape for i in n.inputs])
        self.topological_order()

    def edge_list(self) -> str:
        lines = [f"{self.nodes[s].name} -> {self.nodes[d].name}" for s, d in self.edges]
        return "\n".join(lines) + ("\n" if lines else "")


def _check_shapes(n: OpNode, shapes: list[tuple[int, int]]) -> None:
    if n.kind == "matmul":
        m, p, c = n.dims
        if shapes and shapes[0] != (m, p):
            raise ValueError(f"{n.name}: left operand {shapes[0]} != {(m, p)}")
        if len(shapes) > 1 and shapes[1] not in ((p, c), (c, p)):
            raise ValueError(f"{n.name}: right operand {shapes[1]} incompatible with {(p, c)}")
    elif n.kind == "concat":
        rows, cols = n.dims
        if any(s[0] != rows for s in shapes) or (shapes and sum(s[1] for s in shapes) != cols):
            raise ValueError(f"{n.name}: concat inputs {shapes} do not form {n.dims}")
    else:
        for s in shapes:
            if s != n.dims:
                raise ValueError(f"{n.name}: input shape {s} != {n.dims}")


def _is_decoder_tagged(node: OpNode) -> bool:
    return node.block == "decoder"


class _Builder:
    def __init__(self, spec: ModelSpec):
        self.spec = spec
        self.nodes: list[OpNode] = []
        # (block, role, head, sub) -> node id in the first layer
        self._first_layer: dict[tuple, int] = {}

    def add(self, role: str, kind: str, dims, tag: str, layer: int, inputs: Iterable[int],
            block: str, mha_set: int | None = None, head: int | None = None, sub: str = "") -> int:
        nid = len(self.nodes)
        key = (block, sub, role, head)
        shared = None
        if self.spec.weight_sharing and role in _WEIGHT_ROLES:
            if layer == 0:
                self._first_layer[key] = nid
            else:
                shared = self._first_layer[key]
        head_part = f".h{head}" if head is not None else ""
        sub_part = f".{sub}" if sub else ""
        name = f"{block}{layer}{sub_part}{head_part}.{role}"
        self.nodes.append(OpNode(
            id=nid, name=name, kind=kind, dims=tuple(dims), unit_tag=tag, layer_index=layer,
            role=role, block=block, mha_set=mha_set, head_index=head, inputs=tuple(inputs),
            shares_weights_with=shared,
        ))
        return nid

    def mha(self, x: int | None, kv: int | None, layer: int, block: str, mha_set: int, sub: str) -> int:
        """One attention block. ``x`` feeds the queries, ``kv`` the keys/values."""
        s = self.spec
        seq, d, dk = s.seq_len, s.d_model, s.d_k
        ins = lambda *ids: tuple(i for i in ids if i is not None)  # noqa: E731
        heads = []
        for h in range(s.num_heads):
            kw = dict(layer=layer, block=block, mha_set=mha_set, head=h, sub=sub)
            q = self.add("q_proj", "matmul", (seq, d, dk), "attention_head_pre_softmax", inputs=ins(x), **kw)
            qk = self.add("q_wk", "matmul", (seq, dk, d), "attention_head_pre_softmax", inputs=(q,), **kw)
            sc = self.add("scores", "matmul", (seq, d, seq), "attention_head_pre_softmax",
                          inputs=ins(qk, kv), **kw)
            v = self.add("v_proj", "matmul", (seq, d, dk), "attention_head_pre_softmax", inputs=ins(kv), **kw)
            sm = self.add("softmax", "softmax", (seq, seq), "softmax", inputs=(sc,), **kw)
            heads.append(self.add("attn_v", "matmul", (seq, seq, dk), "attention_head_post_softmax",
                                  inputs=(sm, v), **kw))
        kw = dict(layer=layer, block=block, mha_set=mha_set, sub=sub)
        cat = self.add("concat", "concat", (seq, d), "mha_linear", inputs=heads, **kw)
        lin = self.add("mha_linear", "matmul", (seq, d, d), "mha_linear", inputs=(cat,), **kw)
        add = self.add("mha_residual", "add", (seq, d), "mha_addnorm", inputs=ins(lin, x), **kw)
        return self.add("mha_ln", "layernorm", (seq, d), "mha_addnorm", inputs=(add,), **kw)

    def ff(self, x: int, layer: int, block: str) -> int:
        s = self.spec
        seq, d, dff = s.seq_len, s.d_model, s.d_ff
        kw = dict(layer=layer, block=block)
        f1 = self.add("ff_fc1", "matmul", (seq, d, dff), "ff_fc1", inputs=(x,), **kw)
        act = self.add("ff_act", s.activation, (seq, dff), "ff_activation", inputs=(f1,), **kw)
        f2 = self.add("ff_fc2", "matmul", (seq, dff, d), "ff_fc2", inputs=(act,), **kw)
        add = self.add("ff_residual", "add", (seq, d), "ff_addnorm", inputs=(f2, x), **kw)
        return self.add("ff_ln", "layernorm", (seq, d), "ff_addnorm", inputs=(add,), **kw)


def lower(spec: ModelSpec) -> OpGraph:
    """Lower a workload to its operation graph (embeddings and output head excluded)."""
    b = _Builder(spec)
    x: int | None = None
    for layer in range(spec.num_layers):
        # encoder attention runs on the second attention unit set
        h = b.mha(x, x, layer, "encoder", mha_set=1, sub="")
        x = b.ff(h, layer, "encoder")
    if spec.topology == "encoder_decoder":
        memory = x
        y: int | None = None
        for layer in range(spec.num_layers):
            self_attn = b.mha(y, y, layer, "decoder", mha_set=0, sub="self")
            cross = b.mha(self_attn, memory, layer, "decoder", mha_set=1, sub="cross")
            y = b.ff(cross, layer, "decoder")
    graph = OpGraph(tuple(b.nodes), spec)
    return graph


def op_count(graph: OpGraph) -> int:
    return sum(n.op_count for n in graph.nodes)


def decoder_nodes(graph: OpGraph) -> list[OpNode]:
    return [n for n in graph.nodes if _is_decoder_tagged(n)]

"""The knowledge-scene graph network.

Four node types flow through typed message passing: scene entities (se),
scene predicates (sp), commonsense entities (ce), and commonsense
predicates (cp). Every step refreshes the soft bridge edges between scene
and knowledge nodes, applies a send head shared across all four types,
sums incoming messages per edge type (weighted by that type's adjacency),
concatenates the per-type sums in fixed registry order through a per-type
receive head, and updates node states with a per-type GRU. Final se/sp
states feed the object and predicate classifiers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numeric as nm
from .encoders import NodeFeatures, add_pointnet_params
from .errors import ValidationError
from .knowledge import MATRIX_SPECS, KnowledgeGraph
from .scene import WIDTH_CONTEXT, SrGraph

NODE_TYPES = ("se", "sp", "ce", "cp")
_DOMAIN_NODE = {"object": "ce", "predicate": "cp"}


@dataclass(frozen=True)
class EdgeType:
    """One typed edge family: where messages come from, where they land,
    and which matrix supplies the weights."""

    name: str
    source: str
    target: str
    weight_source: str  # "scene" | "knowledge" | "bridge"
    matrix: str = ""  # knowledge matrix name or bridge pairing
    transposed: bool = False


def build_edge_registry() -> tuple[EdgeType, ...]:
    """The fixed edge-type order; receive-head concat layout depends on it."""
    entries = [
        EdgeType("subject_to_pred", "se", "sp", "scene"),
        EdgeType("pred_to_subject", "sp", "se", "scene"),
        EdgeType("object_to_pred", "se", "sp", "scene"),
        EdgeType("pred_to_object", "sp", "se", "scene"),
    ]
    for name, (src, tgt) in MATRIX_SPECS.items():
        entries.append(EdgeType(f"kg_{name}", _DOMAIN_NODE[src], _DOMAIN_NODE[tgt],
                                "knowledge", matrix=name))
        entries.append(EdgeType(f"kg_{name}_rev", _DOMAIN_NODE[tgt], _DOMAIN_NODE[src],
                                "knowledge", matrix=name, transposed=True))
    entries += [
        EdgeType("bridge_se_ce", "se", "ce", "bridge", matrix="se_ce"),
        EdgeType("bridge_ce_se", "ce", "se", "bridge", matrix="se_ce", transposed=True),
        EdgeType("bridge_sp_cp", "sp", "cp", "bridge", matrix="sp_cp"),
        EdgeType("bridge_cp_sp", "cp", "sp", "bridge", matrix="sp_cp", transposed=True),
    ]
    return tuple(entries)


EDGE_REGISTRY = build_edge_registry()


def incoming_edge_types(target: str) -> list[EdgeType]:
    return [et for et in EDGE_REGISTRY if et.target == target]


@dataclass
class BridgeState:
    """Soft scene-to-knowledge correspondences; each row is a distribution
    over the knowledge vocabulary (sums to 1)."""

    se_ce: nm.Tensor  # (n_se, n_objects)
    sp_cp: nm.Tensor  # (n_sp, n_predicates)


def init_model_params(rng: np.random.Generator, *, d_h: int, d_p: int,
                      pointnet_hidden: tuple[int, int], emb_dim: int,
                      n_objects: int, n_predicates: int) -> nm.ParamStore:
    """Create every trainable tensor, in a deterministic order."""
    store = nm.ParamStore()
    add_pointnet_params(store, rng, hidden=pointnet_hidden, d_p=d_p)
    scene_width = d_p + WIDTH_CONTEXT
    entry_widths = {"se": scene_width, "sp": scene_width, "ce": emb_dim, "cp": emb_dim}
    for t in NODE_TYPES:
        nm.add_linear(store, f"entry.{t}", entry_widths[t], d_h, rng)
    nm.add_mlp2(store, "send", d_h, d_h, d_h, rng)
    for t in NODE_TYPES:
        concat_width = len(incoming_edge_types(t)) * d_h
        nm.add_mlp2(store, f"recv.{t}", concat_width, d_h, d_h, rng)
    for t in NODE_TYPES:
        for gate in ("wz", "uz", "wr", "ur", "wh", "uh"):
            store.add(f"gru.{t}.{gate}", nm.glorot_uniform(rng, d_h, d_h, (d_h, d_h)))
    for side in ("se", "ce", "sp", "cp"):
        store.add(f"bridge.{side}", nm.glorot_uniform(rng, d_h, d_h, (d_h, d_h)))
    nm.add_mlp2(store, "cls.obj", d_h, d_h, n_objects, rng)
    nm.add_mlp2(store, "cls.pred", d_h, d_h, n_predicates, rng)
    return store


def model_dims(store: nm.ParamStore) -> tuple[int, int, int]:
    """(d_h, n_objects, n_predicates) as recorded in the parameter shapes."""
    d_h = store["send.l1.w"].data.shape[0]
    n_objects = store["cls.obj.l2.w"].data.shape[1]
    n_predicates = store["cls.pred.l2.w"].data.shape[1]
    return d_h, n_objects, n_predicates


def project_entry(features: NodeFeatures, store: nm.ParamStore) -> dict[str, nm.Tensor]:
    return {t: nm.linear(getattr(features, t), store, f"entry.{t}") for t in NODE_TYPES}


def send(x: dict[str, nm.Tensor], store: nm.ParamStore) -> dict[str, nm.Tensor]:
    """Outgoing message per node: one 2-layer MLP, weights shared by all
    four node types."""
    return {t: nm.mlp2(x[t], store, "send") for t in NODE_TYPES}


def update_bridges(x: dict[str, nm.Tensor], store: nm.ParamStore) -> BridgeState:
    """Recompute soft correspondences from projected-feature dot products,
    softmaxed over the knowledge vocabulary."""
    se_scores = nm.matmul(nm.matmul(x["se"], store["bridge.se"]),
                          nm.transpose(nm.matmul(x["ce"], store["bridge.ce"])))
    sp_scores = nm.matmul(nm.matmul(x["sp"], store["bridge.sp"]),
                          nm.transpose(nm.matmul(x["cp"], store["bridge.cp"])))
    return BridgeState(se_ce=nm.softmax(se_scores), sp_cp=nm.softmax(sp_scores))


def constant_gather_tensors(graph: SrGraph, kg: KnowledgeGraph) -> dict[str, nm.Tensor]:
    """Per edge type, the (n_target x n_source) matrix G with G[j, i] = a_ij,
    for the scene and knowledge families (bridge weights change per step).
    Constant for a given scene and knowledge graph, so cacheable."""
    gathers: dict[str, nm.Tensor] = {}
    scene_adj = graph.scene_adjacency()
    for et in EDGE_REGISTRY:
        if et.weight_source == "scene":
            gathers[et.name] = nm.constant(scene_adj[et.name].T)
        elif et.weight_source == "knowledge":
            w = kg.matrices[et.matrix].weights
            # adjacency is w for forward types and w.T for reversed ones;
            # the gather matrix is its transpose
            gathers[et.name] = nm.constant(w if et.transposed else w.T)
    return gathers


def _bridge_gather(et: EdgeType, bridges: BridgeState) -> nm.Tensor:
    base = bridges.se_ce if et.matrix == "se_ce" else bridges.sp_cp
    return base if et.transposed else nm.transpose(base)


def edge_partial_sums(messages: dict[str, nm.Tensor], gathers: dict[str, nm.Tensor],
                      bridges: BridgeState) -> dict[str, nm.Tensor]:
    """For each edge type, the weighted sum of source messages per target
    node: row j collects sum_i a_ij * m_i."""
    sums = {}
    for et in EDGE_REGISTRY:
        g = _bridge_gather(et, bridges) if et.weight_source == "bridge" else gathers[et.name]
        sums[et.name] = nm.matmul(g, messages[et.source])
    return sums


def receive(messages: dict[str, nm.Tensor], gathers: dict[str, nm.Tensor],
            bridges: BridgeState, store: nm.ParamStore) -> dict[str, nm.Tensor]:
    """Concatenate per-edge-type sums in registry order and apply the
    target type's receive head."""
    sums = edge_partial_sums(messages, gathers, bridges)
    received = {}
    for t in NODE_TYPES:
        parts = [sums[et.name] for et in incoming_edge_types(t)]
        received[t] = nm.mlp2(nm.concat(parts, axis=1), store, f"recv.{t}")
    return received


def gru_update(x: nm.Tensor, m: nm.Tensor, store: nm.ParamStore, node_type: str) -> nm.Tensor:
    """z = sig(Wz m + Uz x), r = sig(Wr m + Ur x),
    h = tanh(Wh m + Uh (r*x)), x' = (1-z)*x + z*h."""
    p = f"gru.{node_type}"
    z = nm.sigmoid(nm.matmul(m, store[f"{p}.wz"]) + nm.matmul(x, store[f"{p}.uz"]))
    r = nm.sigmoid(nm.matmul(m, store[f"{p}.wr"]) + nm.matmul(x, store[f"{p}.ur"]))
    h = nm.tanh(nm.matmul(m, store[f"{p}.wh"]) + nm.matmul(nm.mul(r, x), store[f"{p}.uh"]))
    ones = nm.constant(np.ones_like(z.data))
    return nm.mul(ones - z, x) + nm.mul(z, h)


@dataclass
class ForwardResult:
    object_logits: nm.Tensor  # (n_se, n_objects)
    predicate_logits: nm.Tensor  # (n_sp, n_predicates)
    bridges: BridgeState  # state after the last step


def forward(features: NodeFeatures, kg: KnowledgeGraph, graph: SrGraph,
            store: nm.ParamStore, steps: int,
            gathers: dict[str, nm.Tensor] | None = None) -> ForwardResult:
    """Run `steps` rounds of bridge refresh + send/receive + GRU update,
    then classify final se rows as objects and sp rows as predicates.

    A scene with zero relation instances yields empty predicate logits;
    everything else still runs.
    """
    if steps < 1:
        raise ValidationError(f"message-passing steps must be >= 1, got {steps}")
    if gathers is None:
        gathers = constant_gather_tensors(graph, kg)
    x = project_entry(features, store)
    bridges = None
    for _ in range(steps):
        bridges = update_bridges(x, store)
        messages = send(x, store)
        received = receive(messages, gathers, bridges, store)
        x = {t: gru_update(x[t], received[t], store, t) for t in NODE_TYPES}
    return ForwardResult(
        object_logits=nm.mlp2(x["se"], store, "cls.obj"),
        predicate_logits=nm.mlp2(x["sp"], store, "cls.pred"),
        bridges=bridges,
    )

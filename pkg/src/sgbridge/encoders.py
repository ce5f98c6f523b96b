"""Segment encoding and node-feature construction.

Segments are resampled to a fixed point count, centered, pushed through a
shared per-point MLP (three affine+relu layers), and max-pooled into a
d_p-wide code. Scene-entity rows are that code concatenated with the 11-dim
contextual descriptor; scene-predicate rows do the same for the union of
the ordered pair. Knowledge-node rows are the embedding matrices as-is.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numeric as nm
from .errors import EmptyInputError, ValidationError
from .knowledge import KnowledgeGraph
from .scene import WIDTH_CONTEXT, SceneSample, SrGraph, contextual_vector, union_segment

POINTNET_LAYERS = 3


def add_pointnet_params(store: nm.ParamStore, rng: np.random.Generator,
                        hidden: tuple[int, int] = (32, 64), d_p: int = 64) -> None:
    widths = (3, hidden[0], hidden[1], d_p)
    for k in range(POINTNET_LAYERS):
        nm.add_linear(store, f"pointnet.l{k + 1}", widths[k], widths[k + 1], rng)


def pointnet_d_p(store: nm.ParamStore) -> int:
    return store[f"pointnet.l{POINTNET_LAYERS}.w"].data.shape[1]


def resample(points: np.ndarray, n_points: int, rng: np.random.Generator) -> np.ndarray:
    """Fixed-size point set: without replacement when enough points exist,
    with replacement otherwise. Deterministic for a given generator state."""
    points = np.asarray(points, dtype=np.float64)
    if points.shape[0] == 0:
        raise EmptyInputError("cannot resample an empty point set")
    if n_points < 1:
        raise ValidationError(f"n_points must be >= 1, got {n_points}")
    replace = points.shape[0] < n_points
    idx = rng.choice(points.shape[0], size=n_points, replace=replace)
    return points[idx]


def center_points(points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    return points - points.mean(axis=0)


def pointnet_encode(points: np.ndarray, store: nm.ParamStore) -> nm.Tensor:
    """Shared per-point MLP then column-wise max pool; returns a (d_p,) code.

    Expects points already centered on their centroid (see center_points);
    the pipeline centers after resampling, so absolute position travels
    only in the contextual descriptor. With centering done outside, the
    code is exactly permutation-invariant.
    """
    h = nm.constant(np.asarray(points, dtype=np.float64))
    for k in range(POINTNET_LAYERS):
        h = nm.relu(nm.linear(h, store, f"pointnet.l{k + 1}"))
    return nm.max_pool_rows(h)


@dataclass
class ScenePointsets:
    """Resampled point sets and contextual rows for one scene, cacheable
    across training epochs (they do not depend on parameters)."""

    se_points: list[np.ndarray]
    sp_points: list[np.ndarray]
    se_context: np.ndarray  # (n_se, 11)
    sp_context: np.ndarray  # (n_sp, 11)


def _node_rng(seed: int, *ids: int) -> np.random.Generator:
    # keyed by segment identity, not list position, so relabeling a scene
    # resamples each segment (and each ordered union) identically
    return np.random.default_rng([seed] + [i % (2 ** 31) for i in ids])


def prepare_pointsets(scene: SceneSample, graph: SrGraph, n_points: int,
                      seed: int) -> ScenePointsets:
    se_points = [
        center_points(resample(seg.points, n_points, _node_rng(seed, seg.id)))
        for seg in scene.segments
    ]
    se_context = np.stack([contextual_vector(seg).as_array() for seg in scene.segments]) \
        if scene.segments else np.zeros((0, WIDTH_CONTEXT))
    sp_points = []
    sp_context_rows = []
    for i, j in graph.relation_instances:
        a, b = scene.segments[i], scene.segments[j]
        union = union_segment(a, b)
        sp_points.append(
            center_points(resample(union.points, n_points, _node_rng(seed, a.id, b.id)))
        )
        sp_context_rows.append(contextual_vector(union).as_array())
    sp_context = np.stack(sp_context_rows) if sp_context_rows else np.zeros((0, WIDTH_CONTEXT))
    return ScenePointsets(se_points=se_points, sp_points=sp_points,
                          se_context=se_context, sp_context=sp_context)


@dataclass
class NodeFeatures:
    """Per-type feature banks: se/sp carry gradient back into the encoder,
    ce/cp are the constant embedding matrices."""

    se: nm.Tensor  # (n_se, d_p + 11)
    sp: nm.Tensor  # (n_sp, d_p + 11)
    ce: nm.Tensor  # (n_objects, D)
    cp: nm.Tensor  # (n_predicates, D)


def _encode_rows(pointsets: list[np.ndarray], context: np.ndarray,
                 store: nm.ParamStore) -> nm.Tensor:
    d_p = pointnet_d_p(store)
    if not pointsets:
        return nm.constant(np.zeros((0, d_p + context.shape[1])))
    rows = [nm.reshape(pointnet_encode(pts, store), (1, d_p)) for pts in pointsets]
    return nm.concat([nm.concat(rows, axis=0), nm.constant(context)], axis=1)


def encode_pointsets(pointsets: ScenePointsets, kg: KnowledgeGraph,
                     store: nm.ParamStore) -> NodeFeatures:
    return NodeFeatures(
        se=_encode_rows(pointsets.se_points, pointsets.se_context, store),
        sp=_encode_rows(pointsets.sp_points, pointsets.sp_context, store),
        ce=nm.constant(kg.object_embeddings),
        cp=nm.constant(kg.predicate_embeddings),
    )


def build_node_features(scene: SceneSample, graph: SrGraph, kg: KnowledgeGraph,
                        store: nm.ParamStore, n_points: int = 256,
                        seed: int = 0) -> NodeFeatures:
    """Pure function of (scene, kg, parameters, seed)."""
    return encode_pointsets(prepare_pointsets(scene, graph, n_points, seed), kg, store)

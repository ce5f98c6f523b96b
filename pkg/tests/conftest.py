import numpy as np
import pytest

from sgbridge.knowledge import MATRIX_SPECS, KnowledgeGraph, TypedAdjacency, Vocab
from sgbridge.scene import SceneSample, Segment


def make_tiny_kg(n_objects=4, n_predicates=3, emb_dim=5, seed=0, zero=False) -> KnowledgeGraph:
    """A valid random knowledge graph at toy scale."""
    rng = np.random.default_rng(seed)
    vocab = Vocab(object_names=[f"obj{i}" for i in range(n_objects)],
                  predicate_names=[f"pred{i}" for i in range(n_predicates)])
    sizes = {"object": n_objects, "predicate": n_predicates}
    matrices = {}
    for name, (src, tgt) in MATRIX_SPECS.items():
        shape = (sizes[src], sizes[tgt])
        if zero:
            w = np.zeros(shape)
        elif name in ("conceptnet_relatedTo", "category"):
            w = (rng.uniform(size=shape) > 0.5).astype(float)
            w = np.maximum(w, w.T)
            if name == "category":
                np.fill_diagonal(w, 0.0)
        elif name == "wup":
            w = rng.uniform(size=shape)
            w = np.maximum(w, w.T)
        else:
            w = rng.uniform(size=shape)
        matrices[name] = TypedAdjacency(name=name, source_type=src, target_type=tgt, weights=w)
    kg = KnowledgeGraph(vocab=vocab,
                        object_embeddings=rng.standard_normal((n_objects, emb_dim)),
                        predicate_embeddings=rng.standard_normal((n_predicates, emb_dim)),
                        matrices=matrices)
    kg.validate()
    return kg


def make_tiny_scene(n_segments=3, n_predicates=3, seed=0, spread=0.6) -> SceneSample:
    """Clustered random segments so every pair falls within a 0.5m threshold,
    with a couple of gt triplets."""
    rng = np.random.default_rng(seed)
    segments = []
    for k in range(n_segments):
        center = rng.uniform(-spread / 2, spread / 2, size=3)
        pts = center + rng.uniform(-0.1, 0.1, size=(20, 3))
        segments.append(Segment(id=k, points=pts, gt_class=k % 4))
    triplets = [(0, 0, 1), (0, 1 % n_predicates, 1), (1, 0, 2)][: max(1, n_segments - 1)]
    return SceneSample(segments=segments, gt_triplets=triplets, vocab_ref="tiny")


@pytest.fixture
def tiny_kg():
    return make_tiny_kg()


@pytest.fixture
def tiny_zero_kg():
    return make_tiny_kg(zero=True)


@pytest.fixture
def tiny_scene():
    return make_tiny_scene()

"""Shared helpers for the test suite: scalarization for gradient checks and
independent brute-force oracles kept deliberately separate from the library
code paths they verify."""

import numpy as np

from sgbridge import numeric as nm


def scalarize(t: nm.Tensor, rng: np.random.Generator) -> nm.Tensor:
    """Reduce a tensor to a scalar via a fixed random weighting.

    ones_row @ (t * W) @ ones_col with constant W, so every entry of t
    contributes with a distinct coefficient and gradients stay generic.
    """
    data = t.data
    if data.ndim == 1:
        t = nm.reshape(t, (1, data.size))
        data = t.data
    w = nm.constant(rng.standard_normal(data.shape))
    prod = nm.mul(t, w)
    left = nm.constant(np.ones((1, data.shape[0])))
    right = nm.constant(np.ones((data.shape[1], 1)))
    return nm.matmul(nm.matmul(left, prod), right)


def context_vector_oracle(points: np.ndarray) -> np.ndarray:
    """Straightforward recomputation of the 11-dim geometric descriptor."""
    pts = np.asarray(points, dtype=np.float64)
    centroid = pts.mean(axis=0)
    std = np.sqrt(((pts - centroid) ** 2).mean(axis=0))
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    extents = hi - lo
    max_len = extents.max()
    volume = extents[0] * extents[1] * extents[2]
    return np.concatenate([centroid, std, extents, [max_len], [volume]])


def box_min_distance(points_a: np.ndarray, points_b: np.ndarray) -> float:
    """Minimum distance between the two axis-aligned bounding boxes."""
    a_lo, a_hi = points_a.min(axis=0), points_a.max(axis=0)
    b_lo, b_hi = points_b.min(axis=0), points_b.max(axis=0)
    gap = np.maximum(0.0, np.maximum(a_lo - b_hi, b_lo - a_hi))
    return float(np.sqrt((gap ** 2).sum()))


def brute_force_eval(scene, graph, object_logits, predicate_logits, tau, ks, top_n):
    """Exhaustive re-evaluation of every metric by plain enumeration.

    Deliberately shares no code with sgbridge.evaluation: rankings come
    from counting better classes, predicate sets from looping over every
    (instance, predicate) cell.
    """
    import math

    object_logits = np.asarray(object_logits, dtype=float)
    predicate_logits = np.asarray(predicate_logits, dtype=float)
    n_classes = object_logits.shape[1]
    gt_class = {seg.id: seg.gt_class for seg in scene.segments}
    row_of = {seg_id: row for row, seg_id in enumerate(graph.segment_ids)}

    def rank_of(row, cls):
        # how many classes beat cls: higher logit, or equal logit and lower index
        better = 0
        for other in range(n_classes):
            if other == cls:
                continue
            if object_logits[row, other] > object_logits[row, cls] or (
                object_logits[row, other] == object_logits[row, cls] and other < cls
            ):
                better += 1
        return better

    def top1(row):
        best = 0
        for cls in range(1, n_classes):
            if object_logits[row, cls] > object_logits[row, best]:
                best = cls
        return best

    def predicate_set(r):
        chosen = set()
        for p in range(predicate_logits.shape[1]):
            if 1.0 / (1.0 + math.exp(-predicate_logits[r, p])) > tau:
                chosen.add(p)
        return chosen

    gt_pairs = {}
    for s, p, o in scene.gt_triplets:
        gt_pairs.setdefault((s, o), set()).add(p)

    instance_of = {}
    for r, (i, j) in enumerate(graph.relation_instances):
        instance_of[(graph.segment_ids[i], graph.segment_ids[j])] = r

    re_hits = re_single_hits = missing = 0
    for (s, o), gt_set in gt_pairs.items():
        if (s, o) not in instance_of:
            missing += 1
            continue
        r = instance_of[(s, o)]
        if gt_class[s] is None or gt_class[o] is None:
            continue
        if top1(row_of[s]) != gt_class[s] or top1(row_of[o]) != gt_class[o]:
            continue
        predicted = predicate_set(r)
        if predicted == gt_set:
            re_hits += 1
        if predicted & gt_set:
            re_single_hits += 1

    obj_hits = {k: 0 for k in ks}
    labeled = 0
    confusion_tally = {}
    for seg in scene.segments:
        if seg.gt_class is None:
            continue
        labeled += 1
        row = row_of[seg.id]
        for k in ks:
            if rank_of(row, seg.gt_class) < k:
                obj_hits[k] += 1
        predicted = top1(row)
        if predicted != seg.gt_class:
            key = (seg.gt_class, predicted)
            confusion_tally[key] = confusion_tally.get(key, 0) + 1

    ranked = sorted(confusion_tally.items(), key=lambda kv: (-kv[1], kv[0][0], kv[0][1]))
    return {
        "re_hits": re_hits,
        "re_single_hits": re_single_hits,
        "n_pairs": len(gt_pairs),
        "missing": missing,
        "obj_hits": obj_hits,
        "labeled": labeled,
        "confusion": [(gt, pred, count) for (gt, pred), count in ranked[:top_n]],
    }

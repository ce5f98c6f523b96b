"""Triplet extraction and recall metrics.

A pair counts for RE when both top-1 classes are right and the thresholded
predicate set equals the ground-truth set exactly; RE_single relaxes only
the predicate condition to a non-empty intersection. Obj@K asks whether a
segment's true class appears among its K best-scored classes. Ground-truth
pairs whose segments never entered the relation graph (outside the
distance threshold) count as misses and are tallied as warnings.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .numeric import sigmoid_values
from .scene import SceneSample, SrGraph


def _ranked_classes(logit_row: np.ndarray) -> np.ndarray:
    """Class indices best-first; ties broken toward the lower class index."""
    return np.argsort(-logit_row, kind="stable")


@dataclass
class TripletPrediction:
    """Model output for one ordered segment pair."""

    subject_id: int
    object_id: int
    subject_ranking: np.ndarray  # class indices, best first
    object_ranking: np.ndarray
    predicate_indices: list[int]  # sigmoid score above threshold
    predicate_scores: dict[int, float]

    @property
    def subject_class(self) -> int:
        return int(self.subject_ranking[0])

    @property
    def object_class(self) -> int:
        return int(self.object_ranking[0])


def extract(object_logits: np.ndarray, predicate_logits: np.ndarray,
            graph: SrGraph, threshold: float = 0.5) -> list[TripletPrediction]:
    """One TripletPrediction per relation instance.

    The predicate set holds every index whose sigmoid score exceeds the
    threshold; scores are recorded for those indices.
    """
    if not (0.0 < threshold < 1.0):
        raise ValidationError(f"predicate threshold must lie in (0, 1), got {threshold}")
    object_logits = np.asarray(object_logits)
    predicate_logits = np.asarray(predicate_logits)
    preds = []
    for r, (i, j) in enumerate(graph.relation_instances):
        scores = sigmoid_values(predicate_logits[r])
        chosen = [int(p) for p in np.flatnonzero(scores > threshold)]
        preds.append(TripletPrediction(
            subject_id=graph.segment_ids[i],
            object_id=graph.segment_ids[j],
            subject_ranking=_ranked_classes(object_logits[i]),
            object_ranking=_ranked_classes(object_logits[j]),
            predicate_indices=chosen,
            predicate_scores={p: float(scores[p]) for p in chosen},
        ))
    return preds


@dataclass
class RecallCounts:
    """Raw tallies, summable across scenes."""

    re_hits: int = 0
    re_single_hits: int = 0
    n_pairs: int = 0
    missing_pairs: int = 0

    def add(self, other: "RecallCounts") -> None:
        self.re_hits += other.re_hits
        self.re_single_hits += other.re_single_hits
        self.n_pairs += other.n_pairs
        self.missing_pairs += other.missing_pairs


def recall(preds: list[TripletPrediction], scene: SceneSample) -> RecallCounts:
    """Count RE / RE_single hits over the scene's ground-truth pairs."""
    gt_classes = {seg.id: seg.gt_class for seg in scene.segments}
    by_pair = {(tp.subject_id, tp.object_id): tp for tp in preds}
    counts = RecallCounts()
    for (s, o), gt_set in scene.gt_pairs().items():
        counts.n_pairs += 1
        tp = by_pair.get((s, o))
        if tp is None:
            counts.missing_pairs += 1  # pair never entered the relation graph
            continue
        classes_ok = (gt_classes[s] is not None and gt_classes[o] is not None
                      and tp.subject_class == gt_classes[s]
                      and tp.object_class == gt_classes[o])
        if not classes_ok:
            continue
        predicted = set(tp.predicate_indices)
        if predicted == gt_set:
            counts.re_hits += 1
        if predicted & gt_set:
            counts.re_single_hits += 1
    return counts


def obj_at_k(object_logits: np.ndarray, gt_classes: list[int | None], k: int
             ) -> tuple[int, int]:
    """(hits, labeled segments): gt class among the K best-ranked classes."""
    if k < 1:
        raise ValidationError(f"K must be >= 1, got {k}")
    object_logits = np.asarray(object_logits)
    hits = labeled = 0
    for row, gt in enumerate(gt_classes):
        if gt is None:
            continue
        labeled += 1
        if gt in _ranked_classes(object_logits[row])[:k]:
            hits += 1
    return hits, labeled


def confusion_pairs(observed: list[tuple[int, int]], top_n: int
                    ) -> list[tuple[int, int, int]]:
    """Rank (gt class, predicted class) mistakes by count.

    `observed` holds one (gt, top-1 prediction) entry per labeled segment;
    equal counts order by class indices.
    """
    tally: dict[tuple[int, int], int] = {}
    for gt, pred in observed:
        if gt != pred:
            tally[(gt, pred)] = tally.get((gt, pred), 0) + 1
    ranked = sorted(tally.items(), key=lambda kv: (-kv[1], kv[0][0], kv[0][1]))
    return [(gt, pred, count) for (gt, pred), count in ranked[: max(top_n, 0)]]


def relative_improvement(a: float, b: float) -> float:
    """Percent improvement of a over baseline b: 100 * (a - b) / b."""
    if b <= 0:
        raise ValueError(f"baseline must be positive, got {b}")
    return 100.0 * (a - b) / b


@dataclass
class MetricsReport:
    re: float
    re_single: float
    obj_at: dict[int, float]
    n_pairs: int
    n_segments: int
    missing_pairs: int = 0
    confusion: list[tuple[int, int, int]] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps({
            "re": self.re,
            "re_single": self.re_single,
            "obj_at": {str(k): v for k, v in self.obj_at.items()},
            "n_pairs": self.n_pairs,
            "n_segments": self.n_segments,
            "missing_pairs": self.missing_pairs,
            "confusion": [list(entry) for entry in self.confusion],
        })

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        doc = json.loads(text)
        return cls(
            re=doc["re"],
            re_single=doc["re_single"],
            obj_at={int(k): v for k, v in doc["obj_at"].items()},
            n_pairs=doc["n_pairs"],
            n_segments=doc["n_segments"],
            missing_pairs=doc.get("missing_pairs", 0),
            confusion=[tuple(entry) for entry in doc.get("confusion", [])],
        )

    def table(self) -> str:
        ks = sorted(self.obj_at)
        header = ["RE", "RE_single"] + [f"Obj@{k}" for k in ks]
        values = [f"{self.re:.3f}", f"{self.re_single:.3f}"] + \
            [f"{self.obj_at[k]:.3f}" for k in ks]
        widths = [max(len(h), len(v)) for h, v in zip(header, values)]
        head = "  ".join(h.rjust(w) for h, w in zip(header, widths))
        body = "  ".join(v.rjust(w) for v, w in zip(values, widths))
        return head + "\n" + body


def evaluate_scenes(checkpoint, kg, scenes: list[SceneSample],
                    obj_ks: tuple[int, ...] = (1, 5), top_confusions: int = 5
                    ) -> MetricsReport:
    """Run the model over every scene and aggregate metrics.

    Pair rates are pair-weighted and Obj@K segment-weighted across the
    whole corpus. Accepts a Checkpoint plus the knowledge graph to run
    against (already zeroed for internal-mode checkpoints).
    """
    from .encoders import encode_pointsets
    from .ksgn import forward
    from .training import prepare_scene

    config = checkpoint.config
    store = checkpoint.rebuild_store()
    totals = RecallCounts()
    obj_hits = {k: 0 for k in obj_ks}
    labeled_total = 0
    observed: list[tuple[int, int]] = []
    for scene in scenes:
        prepared = prepare_scene(scene, kg, config)
        feats = encode_pointsets(prepared.pointsets, kg, store)
        result = forward(feats, kg, prepared.graph, store, config.steps,
                         gathers=prepared.gathers)
        obj_logits = result.object_logits.data
        preds = extract(obj_logits, result.predicate_logits.data,
                        prepared.graph, config.predicate_threshold)
        totals.add(recall(preds, scene))
        gt_classes = [seg.gt_class for seg in scene.segments]
        for k in obj_ks:
            hits, labeled = obj_at_k(obj_logits, gt_classes, k)
            obj_hits[k] += hits
        labeled_total += sum(1 for c in gt_classes if c is not None)
        for row, gt in enumerate(gt_classes):
            if gt is not None:
                observed.append((gt, int(_ranked_classes(obj_logits[row])[0])))
    return MetricsReport(
        re=totals.re_hits / totals.n_pairs if totals.n_pairs else 0.0,
        re_single=totals.re_single_hits / totals.n_pairs if totals.n_pairs else 0.0,
        obj_at={k: (obj_hits[k] / labeled_total if labeled_total else 0.0) for k in obj_ks},
        n_pairs=totals.n_pairs,
        n_segments=labeled_total,
        missing_pairs=totals.missing_pairs,
        confusion=confusion_pairs(observed, top_confusions),
    )

"""Scene data model and geometry.

A scene is a list of class-agnostic point-cloud segments plus ground-truth
relation triplets. This module computes the 11-dim contextual descriptor,
builds the distance-thresholded relation graph (one node per segment, one
node per ordered segment pair within threshold), and reads/writes the JSON
scene format documented in the README.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateSceneError,
    EmptyInputError,
    SceneFormatError,
    ValidationError,
    VocabError,
)


@dataclass
class Segment:
    """One class-agnostic point cluster; coordinates in meters."""

    id: int
    points: np.ndarray  # (n, 3)
    gt_class: int | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValidationError(f"segment {self.id}: points must be (n, 3), got {pts.shape}")
        if pts.shape[0] == 0:
            raise EmptyInputError(f"segment {self.id} has no points")
        if not np.isfinite(pts).all():
            raise ValidationError(f"segment {self.id} contains non-finite coordinates")
        self.points = pts

    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        return self.points.min(axis=0), self.points.max(axis=0)


@dataclass
class ContextVector:
    """11 reals describing a segment: centroid, per-axis spread, box extents,
    longest extent, and box volume."""

    centroid: np.ndarray
    std: np.ndarray
    bbox_size: np.ndarray
    max_length: float
    volume: float

    def as_array(self) -> np.ndarray:
        return np.concatenate(
            [self.centroid, self.std, self.bbox_size, [self.max_length], [self.volume]]
        )


WIDTH_CONTEXT = 11


def contextual_vector(segment: Segment) -> ContextVector:
    """Geometric descriptor of a segment (or segment union).

    Centroid is the point mean, std the per-axis population standard
    deviation, bbox_size the axis-aligned extents; max_length and volume
    derive from the extents.
    """
    pts = segment.points
    centroid = pts.mean(axis=0)
    std = np.sqrt(((pts - centroid) ** 2).mean(axis=0))
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    extents = hi - lo
    return ContextVector(
        centroid=centroid,
        std=std,
        bbox_size=extents,
        max_length=float(extents.max()),
        volume=float(extents.prod()),
    )


def union_segment(a: Segment, b: Segment) -> Segment:
    """Concatenate the two point lists, a first; no deduplication.

    The union stands for an ordered pair, so it carries no meaningful id.
    """
    return Segment(id=-1, points=np.concatenate([a.points, b.points], axis=0))


@dataclass
class SceneSample:
    """A scene's segments, ground-truth triplets, and vocabulary binding.

    gt_triplets are (subject-segment-id, predicate-index, object-segment-id).
    """

    segments: list[Segment]
    gt_triplets: list[tuple[int, int, int]] = field(default_factory=list)
    vocab_ref: str = ""

    def __post_init__(self):
        ids = [seg.id for seg in self.segments]
        if len(set(ids)) != len(ids):
            raise ValidationError(f"duplicate segment ids: {ids}")
        known = set(ids)
        triplets = [tuple(int(v) for v in t) for t in self.gt_triplets]
        seen: set[tuple[int, int, int]] = set()
        for s, p, o in triplets:
            if s not in known or o not in known:
                raise ValidationError(f"gt triplet ({s}, {p}, {o}) references a missing segment id")
            if s == o:
                raise ValidationError(f"gt triplet ({s}, {p}, {o}) relates a segment to itself")
            if (s, p, o) in seen:
                raise ValidationError(f"duplicate gt triplet ({s}, {p}, {o})")
            seen.add((s, p, o))
        self.gt_triplets = triplets

    def segment_by_id(self, seg_id: int) -> Segment:
        for seg in self.segments:
            if seg.id == seg_id:
                return seg
        raise KeyError(seg_id)

    def gt_pairs(self) -> dict[tuple[int, int], set[int]]:
        """Ordered (subject-id, object-id) -> set of gt predicate indices."""
        pairs: dict[tuple[int, int], set[int]] = {}
        for s, p, o in self.gt_triplets:
            pairs.setdefault((s, o), set()).add(p)
        return pairs


def _box_distance(lo_a, hi_a, lo_b, hi_b) -> float:
    """Minimum Euclidean distance between two axis-aligned boxes."""
    gap = np.maximum(0.0, np.maximum(lo_a - hi_b, lo_b - hi_a))
    return float(np.sqrt((gap * gap).sum()))


SCENE_EDGE_TYPES = ("subject_to_pred", "pred_to_subject", "object_to_pred", "pred_to_object")


@dataclass
class SrGraph:
    """Scene-representation graph: one SE node per segment, one SP node per
    ordered segment pair within the distance threshold (both directions)."""

    segment_ids: list[int]  # SE node index -> segment id
    relation_instances: list[tuple[int, int]]  # ordered (subject idx, object idx)

    @property
    def n_segments(self) -> int:
        return len(self.segment_ids)

    @property
    def n_instances(self) -> int:
        return len(self.relation_instances)

    def instance_segment_ids(self) -> list[tuple[int, int]]:
        return [
            (self.segment_ids[i], self.segment_ids[j]) for i, j in self.relation_instances
        ]

    def edge_lists(self) -> dict[str, list[tuple[int, int]]]:
        """Scene edges per type as (source index, target index) pairs."""
        edges: dict[str, list[tuple[int, int]]] = {name: [] for name in SCENE_EDGE_TYPES}
        for r, (i, j) in enumerate(self.relation_instances):
            edges["subject_to_pred"].append((i, r))
            edges["pred_to_subject"].append((r, i))
            edges["object_to_pred"].append((j, r))
            edges["pred_to_object"].append((r, j))
        return edges

    def scene_adjacency(self) -> dict[str, np.ndarray]:
        """Dense 0/1 adjacency per scene edge type (source x target)."""
        n_se, n_sp = self.n_segments, self.n_instances
        shapes = {
            "subject_to_pred": (n_se, n_sp),
            "pred_to_subject": (n_sp, n_se),
            "object_to_pred": (n_se, n_sp),
            "pred_to_object": (n_sp, n_se),
        }
        out = {name: np.zeros(shape) for name, shape in shapes.items()}
        for name, pairs in self.edge_lists().items():
            for src, tgt in pairs:
                out[name][src, tgt] = 1.0
        return out


def build_sr_graph(scene: SceneSample, threshold: float) -> SrGraph:
    """Relation instances are all ordered pairs whose boxes lie within
    `threshold` meters (minimum distance between axis-aligned boxes)."""
    if threshold <= 0:
        raise ValidationError(f"distance threshold must be positive, got {threshold}")
    if len(scene.segments) < 2:
        raise DegenerateSceneError(
            f"need at least 2 segments to build a relation graph, got {len(scene.segments)}"
        )
    boxes = [seg.aabb() for seg in scene.segments]
    n = len(scene.segments)
    instances: list[tuple[int, int]] = []
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            lo_i, hi_i = boxes[i]
            lo_j, hi_j = boxes[j]
            if _box_distance(lo_i, hi_i, lo_j, hi_j) <= threshold:
                instances.append((i, j))
    return SrGraph(segment_ids=[seg.id for seg in scene.segments],
                   relation_instances=instances)


# ---------------------------------------------------------------------------
# Scene file IO.
#
# {"vocab": name,
#  "segments": [{"id": int, "points": [[x, y, z], ...], "gt_class": int|null}],
#  "gt_triplets": [[s, p, o], ...]}


def save_scene(scene: SceneSample, path: str | Path) -> None:
    doc = {
        "vocab": scene.vocab_ref,
        "segments": [
            {
                "id": seg.id,
                "points": seg.points.tolist(),
                "gt_class": seg.gt_class,
            }
            for seg in scene.segments
        ],
        "gt_triplets": [list(t) for t in scene.gt_triplets],
    }
    Path(path).write_text(json.dumps(doc))


def load_scene(path: str | Path, known_vocabs: list[str] | None = None) -> SceneSample:
    """Parse and validate one scene file.

    Raises SceneFormatError naming the file and offending field, or
    VocabError when known_vocabs is given and the scene's vocabulary name
    is not among them.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SceneFormatError(f"{path}: cannot read scene file: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneFormatError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise SceneFormatError(f"{path}: top level must be an object")

    vocab = doc.get("vocab")
    if not isinstance(vocab, str):
        raise SceneFormatError(f"{path}: field 'vocab' must be a string")
    if known_vocabs is not None and vocab not in known_vocabs:
        raise VocabError(f"{path}: unknown vocabulary {vocab!r}; known: {known_vocabs}")

    raw_segments = doc.get("segments")
    if not isinstance(raw_segments, list):
        raise SceneFormatError(f"{path}: field 'segments' must be a list")
    if len(raw_segments) == 0:
        raise DegenerateSceneError(f"{path}: scene has an empty segment list")

    segments = []
    for k, raw in enumerate(raw_segments):
        if not isinstance(raw, dict) or "id" not in raw or "points" not in raw:
            raise SceneFormatError(f"{path}: segments[{k}] needs 'id' and 'points'")
        gt_class = raw.get("gt_class")
        if gt_class is not None and not isinstance(gt_class, int):
            raise SceneFormatError(f"{path}: segments[{k}].gt_class must be an integer or null")
        try:
            segments.append(Segment(id=int(raw["id"]), points=raw["points"], gt_class=gt_class))
        except (EmptyInputError, ValidationError, TypeError, ValueError) as exc:
            raise SceneFormatError(f"{path}: segments[{k}]: {exc}") from exc

    raw_triplets = doc.get("gt_triplets", [])
    if not isinstance(raw_triplets, list):
        raise SceneFormatError(f"{path}: field 'gt_triplets' must be a list")
    for k, raw in enumerate(raw_triplets):
        if not (isinstance(raw, list) and len(raw) == 3):
            raise SceneFormatError(f"{path}: gt_triplets[{k}] must be [subject, predicate, object]")

    try:
        return SceneSample(
            segments=segments,
            gt_triplets=[tuple(t) for t in raw_triplets],
            vocab_ref=vocab,
        )
    except ValidationError as exc:
        raise SceneFormatError(f"{path}: {exc}") from exc


def save_corpus(scenes: list[SceneSample], vocab_name: str, object_names: list[str],
                predicate_names: list[str], out_dir: str | Path,
                extra_manifest: dict | None = None) -> list[Path]:
    """Write scene_NNN.json files plus manifest.json binding the vocabulary."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    for k, scene in enumerate(scenes):
        name = f"scene_{k:03d}.json"
        save_scene(scene, out_dir / name)
        files.append(name)
    manifest = {
        "vocab": {"name": vocab_name, "objects": object_names, "predicates": predicate_names},
        "scene_files": files,
    }
    manifest.update(extra_manifest or {})
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return [out_dir / name for name in files]


def load_corpus(corpus_dir: str | Path) -> tuple[dict, list[SceneSample]]:
    """Read manifest.json and every scene it lists.

    Returns (vocab dict with name/objects/predicates, scenes). Every scene
    must reference the manifest vocabulary.
    """
    corpus_dir = Path(corpus_dir)
    manifest_path = corpus_dir / "manifest.json"
    try:
        manifest = json.loads(manifest_path.read_text())
    except OSError as exc:
        raise SceneFormatError(f"{manifest_path}: cannot read manifest: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SceneFormatError(f"{manifest_path}: line {exc.lineno}: {exc.msg}") from exc
    vocab = manifest.get("vocab")
    if not isinstance(vocab, dict) or not all(k in vocab for k in ("name", "objects", "predicates")):
        raise SceneFormatError(f"{manifest_path}: field 'vocab' needs name/objects/predicates")
    scenes = [
        load_scene(corpus_dir / name, known_vocabs=[vocab["name"]])
        for name in manifest.get("scene_files", [])
    ]
    return vocab, scenes

"""Procedural desk-scale scene generator.

Scenes place axis-aligned boxes with class-dependent sizes in a small room,
sample interior point clouds, and derive ground-truth predicates from the
resulting geometry with fixed rules: vertical stacking gives an on/under
pair, box distance under NEAR_GAP gives symmetric near, and a volume ratio
above SIZE_RATIO (between proximate boxes) gives bigger_than/smaller_than.
Given the same seed and spec the corpus is byte-identical across runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .scene import SceneSample, Segment

DEFAULT_OBJECTS = ["table", "shelf", "box", "chair", "cup", "book", "lamp", "plant"]
DEFAULT_PREDICATES = ["on", "under", "near", "bigger_than", "smaller_than"]
DEFAULT_VOCAB_NAME = "synth8x5"

# nominal (x, y, z) extents in meters; the small classes come in
# near-identical pairs (cup/book, lamp/plant) so that, under jitter, class
# identity is carried less by shape and more by where an object tends to
# sit -- the statistical regularity the knowledge stream encodes
_CLASS_SIZES = {
    "table": (1.2, 0.8, 0.75),
    "shelf": (0.8, 0.3, 1.6),
    "box": (0.5, 0.5, 0.5),
    "chair": (0.45, 0.45, 0.9),
    "cup": (0.10, 0.10, 0.12),
    "book": (0.11, 0.11, 0.13),
    "lamp": (0.16, 0.16, 0.42),
    "plant": (0.17, 0.17, 0.44),
}
_SUPPORTS = ("table", "shelf", "box")

# probability that a small object is stacked on a support rather than
# dropped on the floor next to something
_STACK_AFFINITY = {"cup": 0.95, "book": 0.15, "lamp": 0.85, "plant": 0.10, "chair": 0.0}
_SIZE_JITTER = (0.75, 1.25)

NEAR_GAP = 0.4
SIZE_RATIO = 1.5
ON_TOLERANCE = 0.06


@dataclass
class SynthSpec:
    """Counts and vocabulary for generate_synthetic_corpus."""

    n_scenes: int
    object_names: list[str] = field(default_factory=lambda: list(DEFAULT_OBJECTS))
    predicate_names: list[str] = field(default_factory=lambda: list(DEFAULT_PREDICATES))
    vocab_name: str = DEFAULT_VOCAB_NAME
    min_segments: int = 3
    max_segments: int = 8
    points_per_segment: int = 128
    room_extent: float = 3.0

    def validate(self) -> None:
        if self.n_scenes < 0:
            raise ConfigError(f"n_scenes must be >= 0, got {self.n_scenes}")
        if not (2 <= self.min_segments <= self.max_segments):
            raise ConfigError(
                f"need 2 <= min_segments <= max_segments, got "
                f"{self.min_segments}..{self.max_segments}"
            )
        if self.points_per_segment < 8:
            raise ConfigError("points_per_segment must be >= 8")
        unknown = [name for name in self.object_names if name not in _CLASS_SIZES]
        if unknown:
            raise ConfigError(f"object classes without a size model: {unknown}")
        missing = [name for name in DEFAULT_PREDICATES if name not in self.predicate_names]
        if missing:
            raise ConfigError(f"predicate vocabulary must include {missing}")
        if len(set(self.object_names)) != len(self.object_names):
            raise ConfigError("duplicate object class names")
        if len(set(self.predicate_names)) != len(self.predicate_names):
            raise ConfigError("duplicate predicate names")


def _footprints_overlap(lo_a, hi_a, lo_b, hi_b) -> bool:
    return bool(lo_a[0] < hi_b[0] and lo_b[0] < hi_a[0]
                and lo_a[1] < hi_b[1] and lo_b[1] < hi_a[1])


def derive_gt_triplets(segments: list[Segment], predicate_names: list[str],
                       near_gap: float = NEAR_GAP, size_ratio: float = SIZE_RATIO,
                       on_tol: float = ON_TOLERANCE) -> list[tuple[int, int, int]]:
    """Apply the fixed geometry rules to a list of segments.

    Evaluated on the point-cloud bounding boxes, so the rules see exactly
    what build_sr_graph sees. Size comparisons are only emitted for pairs
    within near_gap, which keeps every gt pair inside the relation-graph
    distance threshold.
    """
    idx = {name: predicate_names.index(name) for name in DEFAULT_PREDICATES}
    boxes = [seg.aabb() for seg in segments]
    vols = [float(np.prod(hi - lo)) for lo, hi in boxes]
    triplets: set[tuple[int, int, int]] = set()
    n = len(segments)
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            lo_i, hi_i = boxes[i]
            lo_j, hi_j = boxes[j]
            gap = np.maximum(0.0, np.maximum(lo_i - hi_j, lo_j - hi_i))
            dist = float(np.sqrt((gap * gap).sum()))
            a, b = segments[i].id, segments[j].id
            if (_footprints_overlap(lo_i, hi_i, lo_j, hi_j)
                    and abs(lo_i[2] - hi_j[2]) <= on_tol):
                triplets.add((a, idx["on"], b))
                triplets.add((b, idx["under"], a))
            if dist < near_gap:
                triplets.add((a, idx["near"], b))
                if vols[j] > 0 and vols[i] > size_ratio * vols[j]:
                    triplets.add((a, idx["bigger_than"], b))
                    triplets.add((b, idx["smaller_than"], a))
    return sorted(triplets)


def _sample_box_points(rng: np.random.Generator, lo, hi, n: int) -> np.ndarray:
    return lo + rng.uniform(size=(n, 3)) * (hi - lo)


def _place_scene_boxes(rng: np.random.Generator, spec: SynthSpec):
    """Pick classes and axis-aligned placements for one scene.

    Returns a list of (class index, lo, hi). The first box is always a
    support; later boxes are stacked on a support, dropped on the floor
    near an existing box, or added as further supports.
    """
    n_seg = int(rng.integers(spec.min_segments, spec.max_segments + 1))
    support_classes = [c for c in spec.object_names if c in _SUPPORTS]
    small_classes = [c for c in spec.object_names if c not in _SUPPORTS]
    half_room = spec.room_extent / 2.0

    placements: list[tuple[int, np.ndarray, np.ndarray]] = []
    floor_boxes: list[tuple[np.ndarray, np.ndarray]] = []
    support_ids: list[int] = []

    def jittered_size(name: str) -> np.ndarray:
        return np.array(_CLASS_SIZES[name]) * rng.uniform(*_SIZE_JITTER, size=3)

    def place_on_floor(name: str) -> tuple[np.ndarray, np.ndarray] | None:
        size = jittered_size(name)
        for _ in range(30):
            cx, cy = rng.uniform(-half_room + 0.7, half_room - 0.7, size=2)
            lo = np.array([cx - size[0] / 2, cy - size[1] / 2, 0.0])
            hi = lo + size
            if not any(_footprints_overlap(lo, hi, flo, fhi) for flo, fhi in floor_boxes):
                return lo, hi
        return None

    def place_near(name: str, anchor_lo, anchor_hi) -> tuple[np.ndarray, np.ndarray] | None:
        size = jittered_size(name)
        for _ in range(30):
            gap = rng.uniform(0.05, 0.3)
            side = int(rng.integers(0, 4))
            if side == 0:
                cx = anchor_hi[0] + gap + size[0] / 2
                cy = rng.uniform(anchor_lo[1], anchor_hi[1])
            elif side == 1:
                cx = anchor_lo[0] - gap - size[0] / 2
                cy = rng.uniform(anchor_lo[1], anchor_hi[1])
            elif side == 2:
                cy = anchor_hi[1] + gap + size[1] / 2
                cx = rng.uniform(anchor_lo[0], anchor_hi[0])
            else:
                cy = anchor_lo[1] - gap - size[1] / 2
                cx = rng.uniform(anchor_lo[0], anchor_hi[0])
            lo = np.array([cx - size[0] / 2, cy - size[1] / 2, 0.0])
            hi = lo + size
            if not any(_footprints_overlap(lo, hi, flo, fhi) for flo, fhi in floor_boxes):
                return lo, hi
        return None

    def add(name: str, lo: np.ndarray, hi: np.ndarray, on_floor: bool) -> None:
        placements.append((spec.object_names.index(name), lo, hi))
        if on_floor:
            floor_boxes.append((lo, hi))
        if name in _SUPPORTS:
            support_ids.append(len(placements) - 1)

    first = support_classes[int(rng.integers(len(support_classes)))] if support_classes \
        else spec.object_names[int(rng.integers(len(spec.object_names)))]
    placed = place_on_floor(first)
    if placed is None:  # a single box always fits an empty floor
        raise ConfigError("room_extent too small for the largest object class")
    add(first, *placed, on_floor=True)

    def try_stack(name: str) -> bool:
        size = jittered_size(name)
        s_idx = support_ids[int(rng.integers(len(support_ids)))]
        _, s_lo, s_hi = placements[s_idx]
        margin_x = (s_hi[0] - s_lo[0]) - size[0]
        margin_y = (s_hi[1] - s_lo[1]) - size[1]
        if margin_x <= 0 or margin_y <= 0:
            return False
        lo = np.array([
            s_lo[0] + rng.uniform(0, margin_x),
            s_lo[1] + rng.uniform(0, margin_y),
            s_hi[2],
        ])
        add(name, lo, lo + size, on_floor=False)
        return True

    while len(placements) < n_seg:
        if rng.uniform() < 0.2 and support_classes:
            name = support_classes[int(rng.integers(len(support_classes)))]
            placed = place_on_floor(name)
            if placed is not None:
                add(name, *placed, on_floor=True)
            continue
        pool = small_classes if small_classes else spec.object_names
        name = pool[int(rng.integers(len(pool)))]
        affinity = _STACK_AFFINITY.get(name, 0.5)
        if support_ids and rng.uniform() < affinity and try_stack(name):
            continue
        anchor = placements[int(rng.integers(len(placements)))]
        placed = place_near(name, anchor[1], anchor[2])
        if placed is not None:
            add(name, *placed, on_floor=True)
    return placements


def generate_scene(rng: np.random.Generator, spec: SynthSpec) -> SceneSample:
    placements = _place_scene_boxes(rng, spec)
    segments = []
    for seg_id, (class_idx, lo, hi) in enumerate(placements):
        pts = _sample_box_points(rng, lo, hi, spec.points_per_segment)
        segments.append(Segment(id=seg_id, points=pts, gt_class=class_idx))
    triplets = derive_gt_triplets(segments, spec.predicate_names)
    return SceneSample(segments=segments, gt_triplets=triplets, vocab_ref=spec.vocab_name)


def generate_synthetic_corpus(seed: int, spec: SynthSpec) -> list[SceneSample]:
    """Deterministic list of spec.n_scenes scenes for the given seed."""
    spec.validate()
    return [
        generate_scene(np.random.default_rng([seed, k]), spec)
        for k in range(spec.n_scenes)
    ]

import numpy as np
import pytest

from sgbridge.errors import ConfigError
from sgbridge.scene import Segment, build_sr_graph, load_corpus, save_corpus
from sgbridge.synth import (
    DEFAULT_OBJECTS,
    DEFAULT_PREDICATES,
    SynthSpec,
    derive_gt_triplets,
    generate_synthetic_corpus,
)

from helpers import box_min_distance

ON = DEFAULT_PREDICATES.index("on")
UNDER = DEFAULT_PREDICATES.index("under")
NEAR = DEFAULT_PREDICATES.index("near")
BIGGER = DEFAULT_PREDICATES.index("bigger_than")
SMALLER = DEFAULT_PREDICATES.index("smaller_than")


def box_points(rng, lo, hi, n=60):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    return lo + rng.uniform(size=(n, 3)) * (hi - lo)


class TestGtRules:
    def test_cup_on_table(self):
        rng = np.random.default_rng(0)
        table = Segment(id=0, points=box_points(rng, (0, 0, 0), (1.2, 0.8, 0.75)),
                        gt_class=DEFAULT_OBJECTS.index("table"))
        cup = Segment(id=1, points=box_points(rng, (0.5, 0.3, 0.75), (0.58, 0.38, 0.85)),
                      gt_class=DEFAULT_OBJECTS.index("cup"))
        gt = derive_gt_triplets([table, cup], DEFAULT_PREDICATES)
        assert (1, ON, 0) in gt
        assert (0, UNDER, 1) in gt

    def test_side_by_side_boxes_are_near_not_on(self):
        rng = np.random.default_rng(1)
        a = Segment(id=0, points=box_points(rng, (0, 0, 0), (0.5, 0.5, 0.5)))
        b = Segment(id=1, points=box_points(rng, (0.7, 0, 0), (1.2, 0.5, 0.5)))
        gt = set(derive_gt_triplets([a, b], DEFAULT_PREDICATES))
        assert (0, NEAR, 1) in gt and (1, NEAR, 0) in gt
        assert not any(p in (ON, UNDER) for _, p, _ in gt)

    def test_volume_ratio_gates_size_predicates(self):
        rng = np.random.default_rng(2)
        big = Segment(id=0, points=box_points(rng, (0, 0, 0), (1.0, 1.0, 1.0)))
        small = Segment(id=1, points=box_points(rng, (1.1, 0, 0), (1.4, 0.3, 0.3)))
        gt = set(derive_gt_triplets([big, small], DEFAULT_PREDICATES))
        assert (0, BIGGER, 1) in gt and (1, SMALLER, 0) in gt

    def test_distant_pairs_get_nothing(self):
        rng = np.random.default_rng(3)
        a = Segment(id=0, points=box_points(rng, (0, 0, 0), (1, 1, 1)))
        b = Segment(id=1, points=box_points(rng, (5, 5, 0), (5.2, 5.2, 0.2)))
        assert derive_gt_triplets([a, b], DEFAULT_PREDICATES) == []


class TestGenerator:
    def test_deterministic_given_seed(self):
        spec = SynthSpec(n_scenes=5)
        first = generate_synthetic_corpus(7, spec)
        second = generate_synthetic_corpus(7, spec)
        assert len(first) == 5
        for a, b in zip(first, second):
            assert a.gt_triplets == b.gt_triplets
            for sa, sb in zip(a.segments, b.segments):
                assert sa.gt_class == sb.gt_class
                assert np.array_equal(sa.points, sb.points)

    def test_different_seeds_differ(self):
        spec = SynthSpec(n_scenes=1)
        a = generate_synthetic_corpus(1, spec)[0]
        b = generate_synthetic_corpus(2, spec)[0]
        assert not np.array_equal(a.segments[0].points, b.segments[0].points)

    def test_segment_counts_and_labels(self):
        spec = SynthSpec(n_scenes=10, min_segments=3, max_segments=8)
        for scene in generate_synthetic_corpus(21, spec):
            assert 3 <= len(scene.segments) <= 8
            for seg in scene.segments:
                assert seg.gt_class is not None
                assert 0 <= seg.gt_class < len(DEFAULT_OBJECTS)

    def test_every_gt_pair_within_graph_threshold(self):
        spec = SynthSpec(n_scenes=10)
        for scene in generate_synthetic_corpus(9, spec):
            by_id = {seg.id: seg for seg in scene.segments}
            for s, _, o in scene.gt_triplets:
                dist = box_min_distance(by_id[s].points, by_id[o].points)
                assert dist <= 0.5, f"gt pair ({s},{o}) at distance {dist}"

    def test_gt_pairs_appear_as_relation_instances(self):
        spec = SynthSpec(n_scenes=5)
        for scene in generate_synthetic_corpus(15, spec):
            graph = build_sr_graph(scene, threshold=0.5)
            inst_ids = set(graph.instance_segment_ids())
            for s, _, o in scene.gt_triplets:
                assert (s, o) in inst_ids

    def test_inverse_consistency(self):
        spec = SynthSpec(n_scenes=10)
        for scene in generate_synthetic_corpus(33, spec):
            gt = set(scene.gt_triplets)
            for s, p, o in gt:
                if p == ON:
                    assert (o, UNDER, s) in gt
                if p == BIGGER:
                    assert (o, SMALLER, s) in gt
                if p == NEAR:
                    assert (o, NEAR, s) in gt

    def test_stacking_occurs_somewhere(self):
        spec = SynthSpec(n_scenes=10)
        scenes = generate_synthetic_corpus(4, spec)
        assert any(any(p == ON for _, p, _ in sc.gt_triplets) for sc in scenes)

    def test_invalid_spec(self):
        with pytest.raises(ConfigError):
            generate_synthetic_corpus(0, SynthSpec(n_scenes=1, object_names=["ufo"]))
        with pytest.raises(ConfigError):
            generate_synthetic_corpus(0, SynthSpec(n_scenes=1, predicate_names=["on"]))
        with pytest.raises(ConfigError):
            generate_synthetic_corpus(0, SynthSpec(n_scenes=1, min_segments=1))


class TestCorpusIO:
    def test_round_trip(self, tmp_path):
        spec = SynthSpec(n_scenes=3)
        scenes = generate_synthetic_corpus(5, spec)
        save_corpus(scenes, spec.vocab_name, spec.object_names, spec.predicate_names,
                    tmp_path / "corpus", extra_manifest={"seed": 5})
        vocab, loaded = load_corpus(tmp_path / "corpus")
        assert vocab["name"] == spec.vocab_name
        assert vocab["objects"] == spec.object_names
        assert vocab["predicates"] == spec.predicate_names
        assert len(loaded) == 3
        for a, b in zip(loaded, scenes):
            assert a.gt_triplets == b.gt_triplets
            for sa, sb in zip(a.segments, b.segments):
                assert np.array_equal(sa.points, sb.points)

    def test_rerun_same_seed_identical_bytes(self, tmp_path):
        spec = SynthSpec(n_scenes=2)
        for d in ("one", "two"):
            scenes = generate_synthetic_corpus(7, spec)
            save_corpus(scenes, spec.vocab_name, spec.object_names,
                        spec.predicate_names, tmp_path / d)
        for name in ["manifest.json", "scene_000.json", "scene_001.json"]:
            assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()

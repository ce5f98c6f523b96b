import numpy as np
import pytest

from sgbridge.errors import ConfigError, ValidationError
from sgbridge.knowledge import (
    FILE_BACKED_MATRICES,
    MATRIX_SPECS,
    Vocab,
    assemble,
    build_category_matrix,
    derive_knowledge_files,
    embed_labels,
    load_edge_list,
    load_embeddings,
    write_synthetic_embeddings,
    zero_knowledge,
)
from sgbridge.synth import DEFAULT_OBJECTS, DEFAULT_PREDICATES, SynthSpec, generate_synthetic_corpus


def small_vocab():
    return Vocab(object_names=["cup", "table", "shelf"], predicate_names=["on", "under"])


class TestLoadEdgeList:
    def test_max_normalization(self, tmp_path):
        path = tmp_path / "edges.tsv"
        path.write_text("cup\ttable\t4\ncup\tshelf\t2\n")
        adj = load_edge_list(path, ["cup", "table", "shelf"], ["cup", "table", "shelf"])
        assert adj.weights[0, 1] == 1.0
        assert adj.weights[0, 2] == 0.5
        assert adj.skipped == 0

    def test_empty_file_all_zero(self, tmp_path):
        path = tmp_path / "edges.tsv"
        path.write_text("")
        adj = load_edge_list(path, ["a", "b"], ["a", "b"])
        assert np.array_equal(adj.weights, np.zeros((2, 2)))

    def test_unknown_token_skipped_and_counted(self, tmp_path):
        path = tmp_path / "edges.tsv"
        path.write_text("cup\ttable\t1\nufo\ttable\t9\n")
        adj = load_edge_list(path, ["cup", "table"], ["cup", "table"])
        assert adj.skipped == 1
        assert adj.weights[0, 1] == 1.0

    def test_duplicate_pairs_sum_before_normalization(self, tmp_path):
        path = tmp_path / "edges.tsv"
        path.write_text("cup\ttable\t1\ncup\ttable\t3\ncup\tcup\t2\n")
        adj = load_edge_list(path, ["cup", "table"], ["cup", "table"])
        assert adj.weights[0, 1] == 1.0  # 4 is the max
        assert adj.weights[0, 0] == 0.5

    def test_negative_weight_rejected(self, tmp_path):
        path = tmp_path / "edges.tsv"
        path.write_text("cup\ttable\t-1\n")
        with pytest.raises(ValidationError, match="negative"):
            load_edge_list(path, ["cup", "table"], ["cup", "table"])

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(OSError):
            load_edge_list(tmp_path / "missing.tsv", ["a"], ["a"])


class TestCategoryMatrix:
    def test_two_groups(self):
        adj = build_category_matrix(["left", "right", "on", "under"],
                                    [["left", "right"], ["on", "under"]])
        expected = np.zeros((4, 4))
        expected[0, 1] = expected[1, 0] = 1.0
        expected[2, 3] = expected[3, 2] = 1.0
        assert np.array_equal(adj.weights, expected)

    def test_single_member_group(self):
        adj = build_category_matrix(["on", "under"], [["on"]])
        assert np.array_equal(adj.weights, np.zeros((2, 2)))

    def test_empty_groups(self):
        adj = build_category_matrix(["on", "under"], [])
        assert np.array_equal(adj.weights, np.zeros((2, 2)))

    def test_unknown_member(self):
        with pytest.raises(ConfigError, match="hovering"):
            build_category_matrix(["on"], [["on", "hovering"]])


class TestEmbeddings:
    def test_multiword_label_is_mean(self, tmp_path):
        path = tmp_path / "emb.txt"
        path.write_text("side 1 0\ntable 0 1\n")
        vectors = load_embeddings(path)
        rows, missing = embed_labels(["side table"], vectors)
        assert missing == 0
        assert np.allclose(rows[0], [0.5, 0.5])

    def test_underscore_labels_split(self, tmp_path):
        path = tmp_path / "emb.txt"
        path.write_text("bigger 2 0\nthan 0 2\n")
        rows, _ = embed_labels(["bigger_than"], load_embeddings(path))
        assert np.allclose(rows[0], [1.0, 1.0])

    def test_missing_word_zero_and_counted(self, tmp_path):
        path = tmp_path / "emb.txt"
        path.write_text("cup 1 1\n")
        rows, missing = embed_labels(["cup", "xylophone"], load_embeddings(path))
        assert missing == 1
        assert np.array_equal(rows[1], [0.0, 0.0])

    def test_dimension_mismatch_rejected(self, tmp_path):
        path = tmp_path / "emb.txt"
        path.write_text("a 1 2\nb 1 2 3\n")
        with pytest.raises(ValidationError, match="dimension"):
            load_embeddings(path)


def write_assembly_inputs(tmp_path, vocab):
    emb = tmp_path / "emb.txt"
    tokens = sorted({w for name in vocab.object_names + vocab.predicate_names
                     for w in name.replace("_", " ").split()})
    rng = np.random.default_rng(0)
    emb.write_text("\n".join(
        f"{t} " + " ".join(f"{v:.4f}" for v in rng.standard_normal(4)) for t in tokens
    ) + "\n")
    edge_files = {}
    for name in FILE_BACKED_MATRICES:
        src, tgt = MATRIX_SPECS[name]
        src_names = vocab.names_for(src)
        tgt_names = vocab.names_for(tgt)
        path = tmp_path / f"{name}.tsv"
        path.write_text(f"{src_names[0]}\t{tgt_names[-1]}\t2\n")
        edge_files[name] = path
    return emb, edge_files


class TestAssemble:
    def test_shapes_match_table_dimensions(self, tmp_path):
        objects = [f"obj{i}" for i in range(160)]
        predicates = [f"pred{i}" for i in range(27)]
        vocab = Vocab(object_names=objects, predicate_names=predicates)
        emb, edge_files = write_assembly_inputs(tmp_path, vocab)
        kg = assemble(vocab, emb, edge_files, [], mode="external")
        shapes = {name: kg.matrices[name].weights.shape for name in kg.matrices}
        assert shapes["vg_subject_object"] == (160, 160)
        assert shapes["vg_object_subject"] == (160, 160)
        assert shapes["conceptnet_relatedTo"] == (160, 160)
        assert shapes["vg_sub_pred"] == (160, 27)
        assert shapes["vg_obj_pred"] == (160, 27)
        assert shapes["vg_pred_sub"] == (27, 160)
        assert shapes["vg_pred_obj"] == (27, 160)
        assert shapes["category"] == (27, 27)
        assert shapes["wup"] == (27, 27)

    def test_internal_mode_zero_matrices_keeps_embeddings(self, tmp_path):
        vocab = small_vocab()
        emb, edge_files = write_assembly_inputs(tmp_path, vocab)
        external = assemble(vocab, emb, edge_files, [["on", "under"]], mode="external")
        internal = assemble(vocab, emb, edge_files, [["on", "under"]], mode="internal")
        for name in internal.matrices:
            assert np.array_equal(internal.matrices[name].weights,
                                  np.zeros_like(internal.matrices[name].weights))
        assert np.array_equal(internal.object_embeddings, external.object_embeddings)
        assert np.array_equal(internal.predicate_embeddings, external.predicate_embeddings)

    def test_missing_edge_file_in_external_mode(self, tmp_path):
        vocab = small_vocab()
        emb, edge_files = write_assembly_inputs(tmp_path, vocab)
        del edge_files["wup"]
        with pytest.raises(ConfigError, match="wup"):
            assemble(vocab, emb, edge_files, [], mode="external")

    def test_invariants_after_assembly(self, tmp_path):
        vocab = small_vocab()
        emb, edge_files = write_assembly_inputs(tmp_path, vocab)
        # unequal relatedTo weights and a one-directional wup file
        edge_files["conceptnet_relatedTo"].write_text("cup\ttable\t3\ncup\tshelf\t1\n")
        edge_files["wup"].write_text("on\tunder\t0.8\n")
        kg = assemble(vocab, emb, edge_files, [["on", "under"]], mode="external")
        related = kg.matrices["conceptnet_relatedTo"].weights
        assert set(np.unique(related)) <= {0.0, 1.0}
        wup = kg.matrices["wup"].weights
        assert np.array_equal(wup, wup.T)
        for adj in kg.matrices.values():
            assert adj.weights.min() >= 0.0 and adj.weights.max() <= 1.0

    def test_deterministic(self, tmp_path):
        vocab = small_vocab()
        emb, edge_files = write_assembly_inputs(tmp_path, vocab)
        a = assemble(vocab, emb, edge_files, [["on", "under"]], mode="external")
        b = assemble(vocab, emb, edge_files, [["on", "under"]], mode="external")
        for name in a.matrices:
            assert np.array_equal(a.matrices[name].weights, b.matrices[name].weights)
        assert np.array_equal(a.object_embeddings, b.object_embeddings)

    def test_zero_knowledge_passes_shape_invariants(self, tmp_path):
        vocab = small_vocab()
        emb, edge_files = write_assembly_inputs(tmp_path, vocab)
        kg = assemble(vocab, emb, edge_files, [["on", "under"]], mode="external")
        zeroed = zero_knowledge(kg)
        zeroed.validate()
        assert all(adj.weights.sum() == 0 for adj in zeroed.matrices.values())


class TestDerivedKnowledge:
    def test_derive_from_synthetic_scenes(self, tmp_path):
        spec = SynthSpec(n_scenes=8)
        scenes = generate_synthetic_corpus(3, spec)
        vocab = Vocab(object_names=list(DEFAULT_OBJECTS),
                      predicate_names=list(DEFAULT_PREDICATES))
        paths = derive_knowledge_files(scenes, vocab, tmp_path / "kg")
        assert set(paths) == set(FILE_BACKED_MATRICES)
        emb = write_synthetic_embeddings(
            [w for n in vocab.object_names + vocab.predicate_names
             for w in n.replace("_", " ").split()],
            dim=8, seed=0, path=tmp_path / "emb.txt")
        kg = assemble(vocab, emb, paths, [["on", "under"], ["bigger_than", "smaller_than"]],
                      mode="external")
        kg.validate()
        # stacking exists somewhere in the corpus, so sub-pred counts hit "on"
        on = vocab.predicate_names.index("on")
        assert kg.matrices["vg_sub_pred"].weights[:, on].max() > 0

"""Vocabularies, node embeddings, and the nine typed adjacency matrices.

Knowledge enters the artifact as preprocessed files: tab-separated edge
lists (source-token, target-token, weight per line) and a GloVe-layout
embedding file (token followed by D decimals per line). The manually
crafted category matrix comes from predicate groups declared in the run
config. `assemble` ties everything together; internal mode zeroes every
matrix while keeping the embeddings, which lets the model learn purely
from the data flow.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ValidationError

logger = logging.getLogger(__name__)

# (source domain, target domain) per matrix, in Table order
MATRIX_SPECS: dict[str, tuple[str, str]] = {
    "vg_subject_object": ("object", "object"),
    "vg_object_subject": ("object", "object"),
    "conceptnet_relatedTo": ("object", "object"),
    "vg_sub_pred": ("object", "predicate"),
    "vg_obj_pred": ("object", "predicate"),
    "vg_pred_sub": ("predicate", "object"),
    "vg_pred_obj": ("predicate", "object"),
    "category": ("predicate", "predicate"),
    "wup": ("predicate", "predicate"),
}
FILE_BACKED_MATRICES = tuple(name for name in MATRIX_SPECS if name != "category")


@dataclass
class Vocab:
    """Ordered object and predicate class names; indices are stable."""

    object_names: list[str]
    predicate_names: list[str]

    def __post_init__(self):
        for kind, names in (("object", self.object_names), ("predicate", self.predicate_names)):
            if len(set(names)) != len(names):
                raise ValidationError(f"duplicate {kind} names in vocabulary")

    @property
    def n_objects(self) -> int:
        return len(self.object_names)

    @property
    def n_predicates(self) -> int:
        return len(self.predicate_names)

    def names_for(self, domain: str) -> list[str]:
        return self.object_names if domain == "object" else self.predicate_names


@dataclass
class TypedAdjacency:
    """One knowledge matrix: dense weights from source domain to target domain.

    `skipped` records how many edge-list rows referenced out-of-vocabulary
    tokens during loading (0 for constructed matrices).
    """

    name: str
    source_type: str
    target_type: str
    weights: np.ndarray
    skipped: int = 0


def load_edge_list(path: str | Path, source_names: list[str], target_names: list[str],
                   name: str = "", source_type: str = "object",
                   target_type: str = "object") -> TypedAdjacency:
    """Read a TSV edge list and max-normalize it into [0, 1].

    Rows naming unknown tokens are skipped (counted, warned once per file);
    duplicate pairs sum before normalization.
    """
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise OSError(f"{path}: cannot read edge list: {exc}") from exc
    src_index = {token: k for k, token in enumerate(source_names)}
    tgt_index = {token: k for k, token in enumerate(target_names)}
    weights = np.zeros((len(source_names), len(target_names)))
    skipped = 0
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValidationError(
                f"{path}: line {lineno}: expected source<TAB>target<TAB>weight"
            )
        src, tgt, raw = parts
        try:
            weight = float(raw)
        except ValueError as exc:
            raise ValidationError(f"{path}: line {lineno}: weight {raw!r} is not a number") from exc
        if weight < 0:
            raise ValidationError(f"{path}: line {lineno}: negative weight {weight}")
        if src not in src_index or tgt not in tgt_index:
            skipped += 1
            continue
        weights[src_index[src], tgt_index[tgt]] += weight
    if skipped:
        logger.warning("%s: skipped %d rows with out-of-vocabulary tokens", path, skipped)
    peak = weights.max()
    if peak > 0:
        weights /= peak
    return TypedAdjacency(name=name or path.stem, source_type=source_type,
                          target_type=target_type, weights=weights, skipped=skipped)


def build_category_matrix(predicate_names: list[str],
                          groups: list[list[str]]) -> TypedAdjacency:
    """Binary symmetric matrix: 1 between distinct same-group predicates."""
    index = {name: k for k, name in enumerate(predicate_names)}
    n = len(predicate_names)
    weights = np.zeros((n, n))
    for group in groups:
        for member in group:
            if member not in index:
                raise ConfigError(f"category group member {member!r} is not a known predicate")
        for a in group:
            for b in group:
                if a != b:
                    weights[index[a], index[b]] = 1.0
    return TypedAdjacency(name="category", source_type="predicate",
                          target_type="predicate", weights=weights)


def load_embeddings(path: str | Path) -> dict[str, np.ndarray]:
    """GloVe text layout: token followed by D decimals, one token per line."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise OSError(f"{path}: cannot read embedding file: {exc}") from exc
    vectors: dict[str, np.ndarray] = {}
    dim = None
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        parts = line.split()
        token = parts[0]
        try:
            vec = np.array([float(v) for v in parts[1:]])
        except ValueError as exc:
            raise ValidationError(f"{path}: line {lineno}: non-numeric embedding entry") from exc
        if vec.size == 0:
            raise ValidationError(f"{path}: line {lineno}: token without vector")
        if dim is None:
            dim = vec.size
        elif vec.size != dim:
            raise ValidationError(
                f"{path}: line {lineno}: dimension {vec.size} != {dim} seen earlier"
            )
        vectors[token] = vec
    if not vectors:
        raise ValidationError(f"{path}: embedding file is empty")
    return vectors


def _label_words(label: str) -> list[str]:
    # vocab labels use snake_case or spaces; embedding tokens are single words
    return label.replace("_", " ").split()


def embed_labels(labels: list[str], vectors: dict[str, np.ndarray]) -> tuple[np.ndarray, int]:
    """Mean word vector per label; unknown words map to zero and are counted."""
    dim = len(next(iter(vectors.values())))
    rows = np.zeros((len(labels), dim))
    missing = 0
    for k, label in enumerate(labels):
        words = _label_words(label)
        acc = np.zeros(dim)
        for word in words:
            vec = vectors.get(word)
            if vec is None:
                missing += 1
            else:
                acc += vec
        rows[k] = acc / max(len(words), 1)
    if missing:
        logger.warning("%d words had no embedding and were mapped to zero", missing)
    return rows, missing


@dataclass
class KnowledgeGraph:
    """Vocabulary, node embeddings, and exactly the nine typed matrices."""

    vocab: Vocab
    object_embeddings: np.ndarray  # (n_objects, D)
    predicate_embeddings: np.ndarray  # (n_predicates, D)
    matrices: dict[str, TypedAdjacency] = field(default_factory=dict)

    @property
    def embedding_dim(self) -> int:
        return self.object_embeddings.shape[1]

    def validate(self) -> None:
        if set(self.matrices) != set(MATRIX_SPECS):
            raise ValidationError(
                f"knowledge graph must hold exactly {sorted(MATRIX_SPECS)}, "
                f"got {sorted(self.matrices)}"
            )
        sizes = {"object": self.vocab.n_objects, "predicate": self.vocab.n_predicates}
        for name, (src, tgt) in MATRIX_SPECS.items():
            adj = self.matrices[name]
            expected = (sizes[src], sizes[tgt])
            if adj.weights.shape != expected:
                raise ValidationError(f"{name}: shape {adj.weights.shape} != {expected}")
            w = adj.weights
            if w.min() < 0.0 or w.max() > 1.0:
                raise ValidationError(f"{name}: weights outside [0, 1]")
        for name in ("conceptnet_relatedTo", "category"):
            w = self.matrices[name].weights
            if not np.all((w == 0.0) | (w == 1.0)):
                raise ValidationError(f"{name}: entries must be exactly 0 or 1")
        for name in ("category", "wup"):
            w = self.matrices[name].weights
            if not np.array_equal(w, w.T):
                raise ValidationError(f"{name}: matrix must be symmetric")
        if self.object_embeddings.shape != (self.vocab.n_objects, self.embedding_dim):
            raise ValidationError("object embedding shape does not match vocabulary")
        if self.predicate_embeddings.shape != (self.vocab.n_predicates, self.embedding_dim):
            raise ValidationError("predicate embedding shape does not match vocabulary")


def _zero_matrices(vocab: Vocab) -> dict[str, TypedAdjacency]:
    sizes = {"object": vocab.n_objects, "predicate": vocab.n_predicates}
    return {
        name: TypedAdjacency(name=name, source_type=src, target_type=tgt,
                             weights=np.zeros((sizes[src], sizes[tgt])))
        for name, (src, tgt) in MATRIX_SPECS.items()
    }


def assemble(vocab: Vocab, embedding_file: str | Path,
             edge_files: dict[str, str | Path] | None,
             category_groups: list[list[str]] | None,
             mode: str = "external") -> KnowledgeGraph:
    """Build the knowledge graph from its input files.

    External mode loads the eight file-backed matrices and constructs
    category from the configured groups; internal mode zeroes all nine.
    conceptnet_relatedTo is binarized after normalization and wup is
    symmetrized with max(w, w.T) so the graph invariants hold regardless
    of how the source files were written.
    """
    if mode not in ("external", "internal"):
        raise ConfigError(f"kg mode must be 'external' or 'internal', got {mode!r}")
    vectors = load_embeddings(embedding_file)
    obj_emb, _ = embed_labels(vocab.object_names, vectors)
    pred_emb, _ = embed_labels(vocab.predicate_names, vectors)

    if mode == "internal":
        matrices = _zero_matrices(vocab)
    else:
        edge_files = edge_files or {}
        missing = [name for name in FILE_BACKED_MATRICES if name not in edge_files]
        if missing:
            raise ConfigError(f"external mode is missing edge-list files for: {missing}")
        matrices = {}
        for name in FILE_BACKED_MATRICES:
            src, tgt = MATRIX_SPECS[name]
            matrices[name] = load_edge_list(
                edge_files[name],
                vocab.names_for(src), vocab.names_for(tgt),
                name=name, source_type=src, target_type=tgt,
            )
        matrices["category"] = build_category_matrix(vocab.predicate_names,
                                                     category_groups or [])
        related = matrices["conceptnet_relatedTo"].weights
        matrices["conceptnet_relatedTo"].weights = (related > 0).astype(float)
        wup = matrices["wup"].weights
        matrices["wup"].weights = np.maximum(wup, wup.T)

    kg = KnowledgeGraph(vocab=vocab, object_embeddings=obj_emb,
                        predicate_embeddings=pred_emb, matrices=matrices)
    kg.validate()
    return kg


def zero_knowledge(kg: KnowledgeGraph) -> KnowledgeGraph:
    """The internal-KG variant of an assembled graph: same embeddings,
    every adjacency entry zero."""
    out = KnowledgeGraph(vocab=kg.vocab,
                         object_embeddings=kg.object_embeddings.copy(),
                         predicate_embeddings=kg.predicate_embeddings.copy(),
                         matrices=_zero_matrices(kg.vocab))
    out.validate()
    return out


# ---------------------------------------------------------------------------
# Synthetic-corpus knowledge derivation. Real runs consume files prepared
# from Visual Genome / ConceptNet / WordNet; for the built-in corpus the
# same file formats are derived from scene ground truth so external-KG
# training has meaningful inputs.


def derive_knowledge_files(scenes, vocab: Vocab, out_dir: str | Path) -> dict[str, Path]:
    """Write the eight file-backed edge lists from gt triplet co-occurrence."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    n_obj, n_pred = vocab.n_objects, vocab.n_predicates
    subj_obj = np.zeros((n_obj, n_obj))
    sub_pred = np.zeros((n_obj, n_pred))
    obj_pred = np.zeros((n_obj, n_pred))
    pred_cooc = np.zeros((n_pred, n_pred))
    for scene in scenes:
        classes = {seg.id: seg.gt_class for seg in scene.segments}
        for s, p, o in scene.gt_triplets:
            cs, co = classes[s], classes[o]
            if cs is None or co is None:
                continue
            subj_obj[cs, co] += 1
            sub_pred[cs, p] += 1
            obj_pred[co, p] += 1
        for (s, o), preds in scene.gt_pairs().items():
            preds = sorted(preds)
            for a in preds:
                for b in preds:
                    pred_cooc[a, b] += 1
    np.fill_diagonal(pred_cooc, 0.0)

    tables = {
        "vg_subject_object": (subj_obj, vocab.object_names, vocab.object_names),
        "vg_object_subject": (subj_obj.T, vocab.object_names, vocab.object_names),
        "conceptnet_relatedTo": ((subj_obj + subj_obj.T > 0).astype(float),
                                 vocab.object_names, vocab.object_names),
        "vg_sub_pred": (sub_pred, vocab.object_names, vocab.predicate_names),
        "vg_obj_pred": (obj_pred, vocab.object_names, vocab.predicate_names),
        "vg_pred_sub": (sub_pred.T, vocab.predicate_names, vocab.object_names),
        "vg_pred_obj": (obj_pred.T, vocab.predicate_names, vocab.object_names),
        "wup": (pred_cooc, vocab.predicate_names, vocab.predicate_names),
    }
    paths = {}
    for name, (matrix, rows, cols) in tables.items():
        lines = []
        for i, row_name in enumerate(rows):
            for j, col_name in enumerate(cols):
                if matrix[i, j] > 0:
                    lines.append(f"{row_name}\t{col_name}\t{matrix[i, j]:g}")
        path = out_dir / f"{name}.tsv"
        path.write_text("\n".join(lines) + ("\n" if lines else ""))
        paths[name] = path
    return paths


def write_synthetic_embeddings(words: list[str], dim: int, seed: int,
                               path: str | Path) -> Path:
    """Deterministic unit-norm stand-in vectors in the GloVe text layout."""
    rng = np.random.default_rng(seed)
    path = Path(path)
    lines = []
    for word in sorted(set(words)):
        vec = rng.standard_normal(dim)
        vec /= np.linalg.norm(vec)
        lines.append(word + " " + " ".join(f"{v:.6f}" for v in vec))
    path.write_text("\n".join(lines) + "\n")
    return path


def default_category_groups() -> list[list[str]]:
    """Same-category predicate groups for the built-in synthetic vocabulary."""
    return [["on", "under"], ["bigger_than", "smaller_than"]]


def kg_dir_paths(kg_dir: str | Path) -> tuple[dict[str, Path], Path, list[list[str]]]:
    """Resolve the knowledge-directory convention.

    A kg directory holds <matrix>.tsv for each file-backed matrix,
    embeddings.txt, and optionally category_groups.json (a JSON list of
    name lists). Returns (edge_files, embedding_path, category_groups).
    """
    import json

    kg_dir = Path(kg_dir)
    edge_files = {name: kg_dir / f"{name}.tsv" for name in FILE_BACKED_MATRICES}
    embedding = kg_dir / "embeddings.txt"
    groups_path = kg_dir / "category_groups.json"
    groups: list[list[str]] = []
    if groups_path.exists():
        try:
            groups = json.loads(groups_path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{groups_path}: invalid category groups: {exc}") from exc
    return edge_files, embedding, groups


def synthetic_label_words(vocab: Vocab) -> list[str]:
    words: list[str] = []
    for label in vocab.object_names + vocab.predicate_names:
        words.extend(_label_words(label))
    return words

"""Loss computation, optimizers, the training loop, and checkpoint IO.

The total loss is lambda_obj * L_obj + L_pred: mean softmax cross-entropy
over labeled scene entities plus mean per-entry binary cross-entropy over
scene-predicate nodes (multi-label, since several predicates can hold for
one ordered pair). Training is fixed-step gradient descent by default;
momentum and adam are available behind the config because the paper pins
only the learning rate.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import numeric as nm
from .encoders import ScenePointsets, encode_pointsets, prepare_pointsets
from .errors import (
    CheckpointError,
    ConfigError,
    LabelError,
    TrainingDivergedError,
    VocabError,
)
from .knowledge import KnowledgeGraph, zero_knowledge
from .ksgn import forward, constant_gather_tensors, init_model_params
from .scene import SceneSample, SrGraph, build_sr_graph

CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    lambda_obj: float = 0.5
    epochs: int = 100
    seed: int = 0
    steps: int = 3  # message-passing rounds per forward
    d_h: int = 64
    d_p: int = 64
    n_points: int = 256
    predicate_threshold: float = 0.5
    kg_mode: str = "external"
    deterministic: bool = True
    optimizer: str = "gd"  # gd | momentum | adam
    batch_size: int = 0  # 0 = full batch
    distance_threshold: float = 0.5
    pointnet_hidden: tuple[int, int] = (32, 64)

    def validate(self) -> None:
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.lambda_obj < 0:
            raise ConfigError(f"lambda_obj must be >= 0, got {self.lambda_obj}")
        if not (0.0 < self.predicate_threshold < 1.0):
            raise ConfigError(
                f"predicate_threshold must lie in (0, 1), got {self.predicate_threshold}"
            )
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if self.kg_mode not in ("external", "internal"):
            raise ConfigError(f"kg_mode must be external or internal, got {self.kg_mode!r}")
        if self.optimizer not in ("gd", "momentum", "adam"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.batch_size < 0:
            raise ConfigError(f"batch_size must be >= 0, got {self.batch_size}")
        for dim_name in ("d_h", "d_p", "n_points"):
            if getattr(self, dim_name) < 1:
                raise ConfigError(f"{dim_name} must be >= 1")
        if self.distance_threshold <= 0:
            raise ConfigError("distance_threshold must be positive")


@dataclass
class SceneTargets:
    """Ground truth reshaped for the loss: which SE rows carry labels, the
    labels themselves, and the multi-hot predicate targets per SP row."""

    labeled_rows: np.ndarray
    labels: np.ndarray
    predicate_targets: np.ndarray  # (n_sp, n_predicates)


def scene_targets(scene: SceneSample, graph: SrGraph, n_objects: int,
                  n_predicates: int) -> SceneTargets:
    labeled_rows = []
    labels = []
    for row, seg in enumerate(scene.segments):
        if seg.gt_class is None:
            continue
        if not (0 <= seg.gt_class < n_objects):
            raise LabelError(
                f"segment {seg.id}: gt class {seg.gt_class} outside [0, {n_objects})"
            )
        labeled_rows.append(row)
        labels.append(seg.gt_class)
    targets = np.zeros((graph.n_instances, n_predicates))
    gt_pairs = scene.gt_pairs()
    for r, pair in enumerate(graph.instance_segment_ids()):
        for p in gt_pairs.get(pair, ()):
            if not (0 <= p < n_predicates):
                raise LabelError(f"gt predicate {p} outside [0, {n_predicates})")
            targets[r, p] = 1.0
    return SceneTargets(labeled_rows=np.array(labeled_rows, dtype=np.intp),
                        labels=np.array(labels, dtype=np.intp),
                        predicate_targets=targets)


def loss(object_logits: nm.Tensor, predicate_logits: nm.Tensor,
         targets: SceneTargets, lambda_obj: float
         ) -> tuple[nm.Tensor, nm.Tensor, nm.Tensor]:
    """(total, L_obj, L_pred); total = lambda_obj * L_obj + L_pred.

    Unlabeled scenes contribute zero object loss; scenes without relation
    instances contribute zero predicate loss.
    """
    if targets.labeled_rows.size:
        l_obj = nm.softmax_ce(nm.take_rows(object_logits, targets.labeled_rows),
                              targets.labels)
    else:
        l_obj = nm.constant(0.0)
    if targets.predicate_targets.size:
        l_pred = nm.binary_ce(predicate_logits, targets.predicate_targets)
    else:
        l_pred = nm.constant(0.0)
    total = nm.scale(l_obj, lambda_obj) + l_pred
    return total, l_obj, l_pred


# ---------------------------------------------------------------------------
# Optimizers. State lives in plain dicts keyed by parameter name.


class _Optimizer:
    def __init__(self, store: nm.ParamStore, lr: float):
        self.store = store
        self.lr = lr

    def step(self) -> None:
        raise NotImplementedError


class _GradientDescent(_Optimizer):
    def step(self) -> None:
        for _, p in self.store.items():
            if p.grad is not None:
                p.data = p.data - self.lr * p.grad


class _Momentum(_Optimizer):
    beta = 0.9

    def __init__(self, store, lr):
        super().__init__(store, lr)
        self.velocity = {name: np.zeros_like(p.data) for name, p in store.items()}

    def step(self) -> None:
        for name, p in self.store.items():
            if p.grad is None:
                continue
            v = self.beta * self.velocity[name] + p.grad
            self.velocity[name] = v
            p.data = p.data - self.lr * v


class _Adam(_Optimizer):
    beta1, beta2, eps = 0.9, 0.999, 1e-8

    def __init__(self, store, lr):
        super().__init__(store, lr)
        self.m = {name: np.zeros_like(p.data) for name, p in store.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in store.items()}
        self.t = 0

    def step(self) -> None:
        self.t += 1
        for name, p in self.store.items():
            if p.grad is None:
                continue
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * p.grad
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * p.grad ** 2
            m_hat = self.m[name] / (1 - self.beta1 ** self.t)
            v_hat = self.v[name] / (1 - self.beta2 ** self.t)
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


_OPTIMIZERS = {"gd": _GradientDescent, "momentum": _Momentum, "adam": _Adam}


@dataclass
class PreparedScene:
    """Everything about a scene that does not depend on parameters."""

    scene: SceneSample
    graph: SrGraph
    pointsets: ScenePointsets
    gathers: dict[str, nm.Tensor]
    targets: SceneTargets


def prepare_scene(scene: SceneSample, kg: KnowledgeGraph,
                  config: TrainConfig) -> PreparedScene:
    graph = build_sr_graph(scene, threshold=config.distance_threshold)
    pointsets = prepare_pointsets(scene, graph, config.n_points, config.seed)
    return PreparedScene(
        scene=scene,
        graph=graph,
        pointsets=pointsets,
        gathers=constant_gather_tensors(graph, kg),
        targets=scene_targets(scene, graph, kg.vocab.n_objects, kg.vocab.n_predicates),
    )


def scene_forward_loss(prepared: PreparedScene, kg: KnowledgeGraph,
                       store: nm.ParamStore, config: TrainConfig
                       ) -> tuple[nm.Tensor, nm.Tensor, nm.Tensor]:
    feats = encode_pointsets(prepared.pointsets, kg, store)
    result = forward(feats, kg, prepared.graph, store, config.steps,
                     gathers=prepared.gathers)
    return loss(result.object_logits, result.predicate_logits,
                prepared.targets, config.lambda_obj)


@dataclass
class Checkpoint:
    version: int
    config: TrainConfig
    vocab_name: str
    object_names: list[str]
    predicate_names: list[str]
    embedding_dim: int
    params: dict[str, np.ndarray]
    epoch: int
    final_loss: float

    def check_vocab(self, object_names: list[str], predicate_names: list[str],
                    vocab_name: str | None = None) -> None:
        if self.object_names != list(object_names) or \
                self.predicate_names != list(predicate_names):
            raise VocabError(
                "checkpoint was trained with a different vocabulary "
                f"({self.vocab_name!r}: {len(self.object_names)} objects, "
                f"{len(self.predicate_names)} predicates)"
            )
        if vocab_name is not None and self.vocab_name != vocab_name:
            raise VocabError(
                f"checkpoint vocabulary {self.vocab_name!r} != corpus vocabulary {vocab_name!r}"
            )

    def rebuild_store(self) -> nm.ParamStore:
        store = init_model_params(
            np.random.default_rng(self.config.seed),
            d_h=self.config.d_h, d_p=self.config.d_p,
            pointnet_hidden=tuple(self.config.pointnet_hidden),
            emb_dim=self.embedding_dim,
            n_objects=len(self.object_names), n_predicates=len(self.predicate_names),
        )
        store.load_state(self.params)
        return store


def train(scenes: list[SceneSample], kg: KnowledgeGraph, config: TrainConfig,
          vocab_name: str = "", log_every: int = 0
          ) -> tuple[Checkpoint, list[dict]]:
    """Gradient-descent training over the corpus.

    Returns the final checkpoint and the loss history: one dict per epoch
    with keys epoch/total/l_obj/l_pred, where each value is the mean over
    scenes for that epoch. Internal kg_mode swaps in the zero knowledge
    graph before anything else touches it.
    """
    config.validate()
    if not scenes:
        raise ConfigError("training corpus is empty")
    if config.kg_mode == "internal":
        kg = zero_knowledge(kg)
    rng = np.random.default_rng(config.seed)
    store = init_model_params(
        rng, d_h=config.d_h, d_p=config.d_p,
        pointnet_hidden=tuple(config.pointnet_hidden),
        emb_dim=kg.embedding_dim,
        n_objects=kg.vocab.n_objects, n_predicates=kg.vocab.n_predicates,
    )
    prepared = [prepare_scene(scene, kg, config) for scene in scenes]
    optimizer = _OPTIMIZERS[config.optimizer](store, config.learning_rate)
    batch = config.batch_size if config.batch_size > 0 else len(prepared)
    history: list[dict] = []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(prepared)) if batch < len(prepared) \
            else np.arange(len(prepared))
        epoch_total = epoch_obj = epoch_pred = 0.0
        for start in range(0, len(order), batch):
            chunk = order[start:start + batch]
            store.zero_grad()
            seed = np.asarray(1.0 / len(chunk))
            for idx in chunk:
                total, l_obj, l_pred = scene_forward_loss(prepared[idx], kg, store, config)
                value = total.item()
                if not math.isfinite(value):
                    raise TrainingDivergedError(
                        f"non-finite loss at epoch {epoch} (scene {idx})"
                    )
                nm.Trace(total).backward(total, seed)
                epoch_total += value
                epoch_obj += l_obj.item()
                epoch_pred += l_pred.item()
            optimizer.step()
        n = len(prepared)
        history.append({
            "epoch": epoch,
            "total": epoch_total / n,
            "l_obj": epoch_obj / n,
            "l_pred": epoch_pred / n,
        })
        if log_every and epoch % log_every == 0:
            last = history[-1]
            print(f"epoch {epoch}: total={last['total']:.4f} "
                  f"l_obj={last['l_obj']:.4f} l_pred={last['l_pred']:.4f}")
    checkpoint = Checkpoint(
        version=CHECKPOINT_VERSION,
        config=config,
        vocab_name=vocab_name,
        object_names=list(kg.vocab.object_names),
        predicate_names=list(kg.vocab.predicate_names),
        embedding_dim=kg.embedding_dim,
        params=store.state(),
        epoch=config.epochs,
        final_loss=history[-1]["total"],
    )
    return checkpoint, history


def save_checkpoint(checkpoint: Checkpoint, path: str | Path) -> None:
    doc = {
        "version": checkpoint.version,
        "config": asdict(checkpoint.config),
        "vocab": {
            "name": checkpoint.vocab_name,
            "objects": checkpoint.object_names,
            "predicates": checkpoint.predicate_names,
        },
        "embedding_dim": checkpoint.embedding_dim,
        "epoch": checkpoint.epoch,
        "final_loss": checkpoint.final_loss,
        "params": {
            name: {"shape": list(value.shape), "values": value.reshape(-1).tolist()}
            for name, value in checkpoint.params.items()
        },
    }
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise CheckpointError(f"{path}: cannot read checkpoint: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: not a valid checkpoint (line {exc.lineno}: {exc.msg})") from exc
    if not isinstance(doc, dict) or "version" not in doc:
        raise CheckpointError(f"{path}: missing version field")
    if doc["version"] != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: checkpoint version {doc['version']} != supported {CHECKPOINT_VERSION}"
        )
    try:
        raw_config = dict(doc["config"])
        raw_config["pointnet_hidden"] = tuple(raw_config["pointnet_hidden"])
        config = TrainConfig(**raw_config)
        params = {}
        for name, entry in doc["params"].items():
            values = np.array(entry["values"], dtype=np.float64)
            params[name] = values.reshape(entry["shape"])
        checkpoint = Checkpoint(
            version=doc["version"],
            config=config,
            vocab_name=doc["vocab"]["name"],
            object_names=list(doc["vocab"]["objects"]),
            predicate_names=list(doc["vocab"]["predicates"]),
            embedding_dim=int(doc["embedding_dim"]),
            params=params,
            epoch=int(doc["epoch"]),
            final_loss=float(doc["final_loss"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: malformed checkpoint: {exc}") from exc
    return checkpoint


def write_loss_history(history: list[dict], path: str | Path) -> None:
    lines = ["epoch,total,l_obj,l_pred"]
    for row in history:
        lines.append(f"{row['epoch']},{row['total']!r},{row['l_obj']!r},{row['l_pred']!r}")
    Path(path).write_text("\n".join(lines) + "\n")

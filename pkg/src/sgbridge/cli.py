"""Command-line interface.

Subcommands: synth (generate a synthetic corpus, optionally with derived
knowledge files), train, eval, predict (triplets plus optional DOT graph),
and kg-inspect. Hyperparameters can come from a JSON config file via
--config; any flag given explicitly overrides the file.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .errors import ConfigError, SgBridgeError, VocabError
from .evaluation import evaluate_scenes, extract
from .knowledge import (
    KnowledgeGraph,
    Vocab,
    assemble,
    default_category_groups,
    derive_knowledge_files,
    kg_dir_paths,
    synthetic_label_words,
    write_synthetic_embeddings,
)
from .ksgn import forward
from .encoders import encode_pointsets
from .scene import load_corpus, load_scene, save_corpus
from .synth import SynthSpec, generate_synthetic_corpus
from .training import (
    TrainConfig,
    load_checkpoint,
    prepare_scene,
    save_checkpoint,
    train,
    write_loss_history,
)

_CONFIG_FIELDS = {f.name for f in fields(TrainConfig)}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sgbridge",
        description="Knowledge-bridged 3D scene graph prediction on segmented point clouds",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic scene corpus")
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--count", type=int, required=True, help="number of scenes")
    p_synth.add_argument("--out-dir", required=True)
    p_synth.add_argument("--min-segments", type=int, default=3)
    p_synth.add_argument("--max-segments", type=int, default=8)
    p_synth.add_argument("--points-per-segment", type=int, default=128)
    p_synth.add_argument("--emit-kg", action="store_true",
                         help="also derive knowledge files from the generated scenes")
    p_synth.add_argument("--kg-embedding-dim", type=int, default=32)

    p_train = sub.add_parser("train", help="train a model on a corpus")
    p_train.add_argument("--config", help="JSON file with TrainConfig fields")
    p_train.add_argument("--corpus", required=True, help="corpus directory")
    p_train.add_argument("--kg-dir", help="knowledge directory (see README)")
    p_train.add_argument("--checkpoint-out", required=True)
    p_train.add_argument("--history-out", help="per-epoch loss CSV")
    p_train.add_argument("--log-every", type=int, default=0)
    for flag, kind in (
        ("--learning-rate", float), ("--lambda-obj", float), ("--epochs", int),
        ("--seed", int), ("--steps", int), ("--d-h", int), ("--d-p", int),
        ("--n-points", int), ("--predicate-threshold", float),
        ("--batch-size", int), ("--distance-threshold", float),
    ):
        p_train.add_argument(flag, type=kind, default=None)
    p_train.add_argument("--kg-mode", choices=["external", "internal"], default=None)
    p_train.add_argument("--optimizer", choices=["gd", "momentum", "adam"], default=None)
    p_train.add_argument("--deterministic", action=argparse.BooleanOptionalAction,
                         default=None)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a corpus")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--corpus", required=True)
    p_eval.add_argument("--kg-dir", help="required for external-KG checkpoints")
    p_eval.add_argument("--report-out", help="write the MetricsReport as JSON")
    p_eval.add_argument("--obj-k", type=int, nargs="*", default=[1, 5])

    p_pred = sub.add_parser("predict", help="predict triplets for one scene")
    p_pred.add_argument("--checkpoint", required=True)
    p_pred.add_argument("--scene", required=True)
    p_pred.add_argument("--kg-dir", help="required for external-KG checkpoints")
    p_pred.add_argument("--out", help="write predicted triplets as JSON")
    p_pred.add_argument("--dot", help="write a DOT graph of the prediction")

    p_kg = sub.add_parser("kg-inspect", help="print knowledge matrix diagnostics")
    p_kg.add_argument("--kg-dir", required=True)
    p_kg.add_argument("--corpus", required=True, help="corpus whose vocabulary to use")

    return parser


def _require_paths(*paths: tuple[str, Path]) -> None:
    for label, path in paths:
        if not Path(path).exists():
            raise ConfigError(f"{label} not found: {path}")


def _load_run_config(args) -> TrainConfig:
    values: dict = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        try:
            doc = json.loads(path.read_text())
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
        unknown = set(doc) - _CONFIG_FIELDS
        if unknown:
            raise ConfigError(f"{path}: unknown config fields: {sorted(unknown)}")
        values.update(doc)
    for name in _CONFIG_FIELDS:
        flag_value = getattr(args, name, None)
        if flag_value is not None:
            values[name] = flag_value
    if "pointnet_hidden" in values:
        values["pointnet_hidden"] = tuple(values["pointnet_hidden"])
    config = TrainConfig(**values)
    config.validate()
    return config


def _assemble_kg(vocab: Vocab, kg_dir: str | None, mode: str) -> KnowledgeGraph:
    if kg_dir is None:
        raise ConfigError("--kg-dir is required (embeddings live there even in internal mode)")
    edge_files, embedding, groups = kg_dir_paths(kg_dir)
    _require_paths(("embedding file", embedding))
    if mode == "external":
        for name, path in edge_files.items():
            _require_paths((f"edge-list file {name}", path))
    return assemble(vocab, embedding, edge_files, groups, mode=mode)


def _cmd_synth(args) -> int:
    spec = SynthSpec(
        n_scenes=args.count,
        min_segments=args.min_segments,
        max_segments=args.max_segments,
        points_per_segment=args.points_per_segment,
    )
    scenes = generate_synthetic_corpus(args.seed, spec)
    out_dir = Path(args.out_dir)
    save_corpus(scenes, spec.vocab_name, spec.object_names, spec.predicate_names,
                out_dir, extra_manifest={"seed": args.seed, "count": args.count})
    print(f"wrote {len(scenes)} scenes to {out_dir}")
    if args.emit_kg:
        vocab = Vocab(object_names=spec.object_names, predicate_names=spec.predicate_names)
        kg_dir = out_dir / "kg"
        derive_knowledge_files(scenes, vocab, kg_dir)
        write_synthetic_embeddings(synthetic_label_words(vocab), args.kg_embedding_dim,
                                   args.seed, kg_dir / "embeddings.txt")
        (kg_dir / "category_groups.json").write_text(json.dumps(default_category_groups()))
        print(f"wrote knowledge files to {kg_dir}")
    return 0


def _cmd_train(args) -> int:
    config = _load_run_config(args)
    _require_paths(("corpus manifest", Path(args.corpus) / "manifest.json"))
    vocab_doc, scenes = load_corpus(args.corpus)
    vocab = Vocab(object_names=vocab_doc["objects"], predicate_names=vocab_doc["predicates"])
    kg = _assemble_kg(vocab, args.kg_dir, config.kg_mode)
    checkpoint, history = train(scenes, kg, config, vocab_name=vocab_doc["name"],
                                log_every=args.log_every)
    save_checkpoint(checkpoint, args.checkpoint_out)
    print(f"checkpoint written to {args.checkpoint_out} "
          f"(mode={config.kg_mode}, final loss {checkpoint.final_loss:.4f})")
    if args.history_out:
        write_loss_history(history, args.history_out)
        print(f"loss history written to {args.history_out}")
    return 0


def _cmd_eval(args) -> int:
    _require_paths(("checkpoint", Path(args.checkpoint)),
                   ("corpus manifest", Path(args.corpus) / "manifest.json"))
    checkpoint = load_checkpoint(args.checkpoint)
    vocab_doc, scenes = load_corpus(args.corpus)
    if not scenes:
        raise ConfigError(f"corpus {args.corpus} lists no scenes")
    checkpoint.check_vocab(vocab_doc["objects"], vocab_doc["predicates"], vocab_doc["name"])
    vocab = Vocab(object_names=vocab_doc["objects"], predicate_names=vocab_doc["predicates"])
    kg = _assemble_kg(vocab, args.kg_dir, checkpoint.config.kg_mode)
    report = evaluate_scenes(checkpoint, kg, scenes, obj_ks=tuple(args.obj_k))
    print(report.table())
    if report.missing_pairs:
        print(f"warning: {report.missing_pairs} gt pairs fell outside the relation graph",
              file=sys.stderr)
    if args.report_out:
        Path(args.report_out).write_text(report.to_json())
        print(f"report written to {args.report_out}")
    return 0


def _dot_quote(text: str) -> str:
    return '"' + text.replace('"', r'\"') + '"'


def _write_dot(path: str, scene, preds, object_names, predicate_names) -> None:
    lines = ["digraph scene {"]
    top1 = {}
    for tp in preds:
        top1[tp.subject_id] = tp.subject_class
        top1[tp.object_id] = tp.object_class
    for seg in scene.segments:
        if seg.id in top1:
            label = f"{object_names[top1[seg.id]]} (seg {seg.id})"
        else:
            label = f"seg {seg.id}"
        lines.append(f"  n{seg.id} [label={_dot_quote(label)}];")
    for tp in preds:
        for p in tp.predicate_indices:
            label = f"{predicate_names[p]} ({tp.predicate_scores[p]:.2f})"
            lines.append(
                f"  n{tp.subject_id} -> n{tp.object_id} [label={_dot_quote(label)}];"
            )
    lines.append("}")
    Path(path).write_text("\n".join(lines) + "\n")


def _cmd_predict(args) -> int:
    _require_paths(("checkpoint", Path(args.checkpoint)), ("scene file", Path(args.scene)))
    checkpoint = load_checkpoint(args.checkpoint)
    scene = load_scene(args.scene)
    if scene.vocab_ref != checkpoint.vocab_name:
        raise VocabError(
            f"scene vocabulary {scene.vocab_ref!r} != checkpoint vocabulary "
            f"{checkpoint.vocab_name!r}"
        )
    vocab = Vocab(object_names=checkpoint.object_names,
                  predicate_names=checkpoint.predicate_names)
    kg = _assemble_kg(vocab, args.kg_dir, checkpoint.config.kg_mode)
    config = checkpoint.config
    store = checkpoint.rebuild_store()
    prepared = prepare_scene(scene, kg, config)
    feats = encode_pointsets(prepared.pointsets, kg, store)
    result = forward(feats, kg, prepared.graph, store, config.steps,
                     gathers=prepared.gathers)
    preds = extract(result.object_logits.data, result.predicate_logits.data,
                    prepared.graph, config.predicate_threshold)
    triplets = []
    for tp in preds:
        for p in tp.predicate_indices:
            triplets.append({
                "subject": checkpoint.object_names[tp.subject_class],
                "predicate": checkpoint.predicate_names[p],
                "object": checkpoint.object_names[tp.object_class],
                "subject_id": tp.subject_id,
                "object_id": tp.object_id,
                "score": tp.predicate_scores[p],
            })
    for entry in triplets:
        print(f"{entry['subject']} -{entry['predicate']}-> {entry['object']} "
              f"(segments {entry['subject_id']}->{entry['object_id']}, "
              f"score {entry['score']:.3f})")
    if not triplets:
        print("no predicates above threshold")
    if args.out:
        Path(args.out).write_text(json.dumps(triplets, indent=2))
    if args.dot:
        _write_dot(args.dot, scene, preds, checkpoint.object_names,
                   checkpoint.predicate_names)
        print(f"DOT graph written to {args.dot}")
    return 0


def _cmd_kg_inspect(args) -> int:
    _require_paths(("corpus manifest", Path(args.corpus) / "manifest.json"))
    vocab_doc, _ = load_corpus(args.corpus)
    vocab = Vocab(object_names=vocab_doc["objects"], predicate_names=vocab_doc["predicates"])
    kg = _assemble_kg(vocab, args.kg_dir, "external")
    print(f"vocabulary {vocab_doc['name']!r}: {vocab.n_objects} objects, "
          f"{vocab.n_predicates} predicates; embedding dim {kg.embedding_dim}")
    header = f"{'matrix':<22} {'shape':<12} {'min':>7} {'max':>7} {'nnz':>7} symmetric"
    print(header)
    for name, adj in kg.matrices.items():
        w = adj.weights
        symmetric = "yes" if w.shape[0] == w.shape[1] and np.array_equal(w, w.T) else "no"
        print(f"{name:<22} {str(w.shape):<12} {w.min():>7.3f} {w.max():>7.3f} "
              f"{int((w != 0).sum()):>7} {symmetric}")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "predict": _cmd_predict,
    "kg-inspect": _cmd_kg_inspect,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (SgBridgeError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line surface: train, eval, sweep-beam, gen-synthetic, inspect.

Exit codes: 0 success, 1 usage error, 2 data/validation error,
3 numeric failure.  Every command honors --seed (through the config)
and is reproducible; training writes a manifest capturing the config,
dataset hashes, and checkpoint lineage.
"""

from __future__ import annotations

import argparse
import dataclasses
import difflib
import hashlib
import json
import sys
import time
from pathlib import Path as FsPath

import numpy as np

from . import __version__
from .checkpoint import load_into, save_checkpoint
from .config import RunConfig, apply_overrides, load_config, save_config
from .errors import DataError, NumericError, UsageError
from .evaluator import (ERROR_RATIO_CLASSES, beam_sweep, evaluate_map, hits_at_n)
from .kg import (KnowledgeGraph, TripleFormat, load_ranking_instances,
                 load_triples, unmasked_view)
from .model import Model
from .policy import beam_search
from .reasoner import classify_np, featurize_np
from .synthetic import SyntheticConfig, generate_synthetic, write_dataset
from .trainer import train


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # map argparse failures onto exit code 1
        raise UsageError(message)


def _sha256(path: FsPath) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _require_file(path_str: str, role: str) -> FsPath:
    if not path_str:
        raise DataError(f"no {role} configured")
    path = FsPath(path_str)
    if not path.is_file():
        raise DataError(f"{role} not found: {path}")
    return path


def _load_cfg(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = str(args.seed)
    apply_overrides(cfg, overrides)
    return cfg.validate()


def _load_dataset(cfg: RunConfig, instances_role: str,
                  fmt: TripleFormat = TripleFormat.TAB):
    graph_path = _require_file(cfg.graph, "graph file")
    kg = load_triples(graph_path, fmt)
    inst_path = _require_file(getattr(cfg, instances_role),
                              instances_role.replace("_", " ") + " file")
    instances = load_ranking_instances(inst_path, kg)
    return kg, instances, graph_path, inst_path


def _build_model(cfg: RunConfig, kg: KnowledgeGraph, checkpoint: str) -> Model:
    model = Model(kg, cfg.dims(), np.random.default_rng(cfg.seed))
    load_into(_require_file(checkpoint, "checkpoint"), model.all_params())
    return model


# --- commands ---------------------------------------------------------------


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    kg, instances, graph_path, inst_path = _load_dataset(cfg, "train_instances")
    out_dir = FsPath(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.time()

    log_path = out_dir / "episodes.jsonl"
    ckpt_path = out_dir / "checkpoint.ckpt"
    with open(log_path, "w", encoding="utf-8") as log:
        def on_episode(model, report):
            log.write(json.dumps(report.to_record()) + "\n")
            log.flush()
            print(f"episode {report.episode}: "
                  f"loss={report.mean_reconstruction_loss:.4f} "
                  f"reached={report.reached_fraction:.3f}", file=sys.stderr)
            if cfg.checkpoint_every and (report.episode + 1) % cfg.checkpoint_every == 0:
                save_checkpoint(out_dir / f"checkpoint-ep{report.episode + 1}.ckpt",
                                model.all_params())

        model, reports = train(kg, instances, cfg, on_episode)

    save_checkpoint(ckpt_path, model.all_params())
    save_config(cfg, out_dir / "run.cfg")
    manifest = {
        "artifact_version": __version__,
        "command": "train",
        "config": cfg.to_dict(),
        "datasets": {
            "graph": {"path": str(graph_path), "sha256": _sha256(graph_path)},
            "train_instances": {"path": str(inst_path),
                                "sha256": _sha256(inst_path)},
        },
        "checkpoint": {"path": str(ckpt_path), "sha256": _sha256(ckpt_path)},
        "episodes": len(reports),
        "wall_seconds": time.time() - started,
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    print(f"wrote {ckpt_path}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_cfg(args)
    if args.instances:
        cfg.test_instances = args.instances
    kg, instances, _, _ = _load_dataset(cfg, "test_instances")
    model = _build_model(cfg, kg, args.checkpoint)
    beam = args.beam if args.beam is not None else cfg.beam

    metric = args.metric
    if metric == "map":
        report = evaluate_map(kg, instances, model, beam, cfg.max_hops,
                              cfg.action_cap, cfg.threads)
        lines = []
        for task in sorted(report.per_task):
            lines.append(f"{task}\t{report.task_counts[task]}"
                         f"\t{report.per_task[task]:.6f}")
        lines.append(f"OVERALL\t{len(instances)}\t{report.overall:.6f}")
        print("task\tinstances\tmap")
        print("\n".join(lines))
        if args.out:
            with open(args.out, "w", encoding="utf-8") as fh:
                for i, res in enumerate(report.results):
                    fh.write(json.dumps({
                        "query_index": i,
                        "task": kg.relation_name(res.instance.query_relation),
                        "query_entity": kg.entity_name(res.instance.query_entity),
                        "positive_rank": res.positive_rank,
                        "query_score": res.query_score,
                        "error_class": res.error_class.value,
                    }) + "\n")
    elif metric.startswith("hits@"):
        try:
            n = int(metric.split("@", 1)[1])
        except ValueError:
            raise UsageError(f"bad metric {metric!r}; use map or hits@N") from None
        value = hits_at_n(kg, instances, model, beam, cfg.max_hops, n,
                          cfg.action_cap)
        print(f"hits@{n}\t{value:.6f}")
    else:
        raise UsageError(f"bad metric {metric!r}; use map or hits@N")
    return 0


def cmd_sweep_beam(args) -> int:
    cfg = _load_cfg(args)
    if args.instances:
        cfg.test_instances = args.instances
    kg, instances, _, _ = _load_dataset(cfg, "test_instances")
    model = _build_model(cfg, kg, args.checkpoint)
    try:
        beams = [int(b) for b in args.beams.split(",") if b.strip()]
    except ValueError:
        raise UsageError(f"bad beam list {args.beams!r}") from None
    if not beams:
        raise UsageError("empty beam list")
    rows = beam_sweep(kg, instances, model, beams, cfg.max_hops, cfg.action_cap,
                      cfg.threads)
    header = "beam\tmap\t" + "\t".join(c.value for c in ERROR_RATIO_CLASSES)
    table = [header]
    for row in rows:
        ratios = "\t".join(f"{row.error_ratios[c]:.6f}" for c in ERROR_RATIO_CLASSES)
        table.append(f"{row.beam}\t{row.map_score:.6f}\t{ratios}")
    text = "\n".join(table)
    print(text)
    if args.out:
        FsPath(args.out).write_text(text + "\n", encoding="utf-8")
    return 0


def cmd_gen_synthetic(args) -> int:
    cfg = SyntheticConfig(
        num_entities=args.entities,
        num_base_relations=args.relations,
        num_background_triples=args.background,
        num_rule_pairs=args.pairs,
        candidates_per_instance=args.candidates,
        train_fraction=args.train_fraction)
    kg, train_instances, test_instances = generate_synthetic(cfg, args.seed)
    out_dir = FsPath(args.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        write_dataset(kg, train_instances, test_instances, out_dir)
        meta = {"seed": args.seed, "config": dataclasses.asdict(cfg)}
        (out_dir / "dataset.json").write_text(
            json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot write to {out_dir}: {exc}") from exc
    print(f"wrote graph ({len(kg.triples)} triples), "
          f"{len(train_instances)} train / {len(test_instances)} test instances "
          f"to {out_dir}")
    return 0


def cmd_inspect(args) -> int:
    cfg = _load_cfg(args)
    graph_path = _require_file(cfg.graph, "graph file")
    kg = load_triples(graph_path)
    model = _build_model(cfg, kg, args.checkpoint)

    def entity(name: str) -> int:
        try:
            return kg.entity_id(name)
        except DataError:
            close = difflib.get_close_matches(name, kg.entity_names, n=3)
            hint = f"; closest names: {', '.join(close)}" if close else ""
            raise DataError(f"unknown entity {name!r}{hint}") from None

    e_s, e_d = entity(args.source), entity(args.target)
    beam = args.beam if args.beam is not None else cfg.beam
    paths = [p for p in beam_search(model, unmasked_view(kg), e_s, e_d, beam,
                                    cfg.max_hops, cfg.action_cap)
             if p.steps]
    if not paths:
        print("no paths found")
        return 0
    for p in paths:
        chain = kg.entity_name(p.start)
        for a, e in p.steps:
            chain += f" -({kg.relation_name(a)})-> {kg.entity_name(e)}"
        probs = classify_np(model, featurize_np(model, p))
        top = sorted(range(model.num_classes), key=lambda c: (-probs[c], c))[:3]
        classes = ", ".join(
            f"{kg.relation_name(model.relation_of_class(c))}={probs[c]:.6f}"
            for c in top)
        print(f"{chain}\n  log-prob {p.log_prob:.6f}  top classes: {classes}")
    return 0


# --- entry point ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="diva", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", "-c", help="flat key=value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key")
        p.add_argument("--seed", type=int, help="override the config seed")

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    common(p)
    p.add_argument("--out", "-o", required=True, help="output directory")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on ranking instances")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--instances", help="override the configured test instances")
    p.add_argument("--metric", default="map", help="map or hits@N")
    p.add_argument("--beam", type=int)
    p.add_argument("--out", help="write per-query records (JSON lines)")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("sweep-beam", help="evaluate across beam widths")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--instances")
    p.add_argument("--beams", required=True, help="comma-separated widths")
    p.add_argument("--out", help="write the sweep table")
    p.set_defaults(fn=cmd_sweep_beam)

    p = sub.add_parser("gen-synthetic", help="generate a compositional-rule dataset")
    p.add_argument("--out", "-o", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--entities", type=int, default=200)
    p.add_argument("--relations", type=int, default=8)
    p.add_argument("--background", type=int, default=3000)
    p.add_argument("--pairs", type=int, default=90)
    p.add_argument("--candidates", type=int, default=10)
    p.add_argument("--train-fraction", type=float, default=0.667)
    p.set_defaults(fn=cmd_gen_synthetic)

    p = sub.add_parser("inspect", help="print beam paths and reasoner scores")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--source", required=True, help="start entity name")
    p.add_argument("--target", required=True, help="destination entity name")
    p.add_argument("--beam", type=int)
    p.set_defaults(fn=cmd_inspect)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

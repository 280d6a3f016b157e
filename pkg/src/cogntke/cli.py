"""Command-line entry points: train, eval, zeroshot, explain, sweep.

Option precedence is flags > config file (plain key=value lines) > defaults;
the dataset directory falls back to $COGNTKE_DATA_DIR.  Every artifact echoes
the effective configuration it was produced under.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys

import numpy as np
import torch

from . import digraph as dg
from .errors import CognTkeError
from .evaluation import evaluate, zero_shot_remap
from .explain import DEFAULT_THRESHOLD, extract
from .store import augment_relations, load_dataset
from .training import TrainConfig, load_checkpoint, train

logger = logging.getLogger("cogntke")

CONFIG_KEYS = {
    "dataset_dir": str, "checkpoint": str, "embed_dim": int, "time_dim": int,
    "layers": int, "window": int, "lr": float, "batch_size": int, "epochs": int,
    "cap": int, "threshold": float, "seed": int, "out": str, "split": str,
    "train_snapshots": int, "global_first_layer": bool,
}


def _read_config_file(path: str) -> dict:
    values = {}
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise CognTkeError(f"{path}:{lineno}: expected key=value, got {raw.rstrip()!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in CONFIG_KEYS:
                raise CognTkeError(f"{path}:{lineno}: unknown option {key!r}")
            caster = CONFIG_KEYS[key]
            if caster is bool:
                values[key] = value.lower() in ("1", "true", "yes")
            elif value.lower() in ("none", ""):
                values[key] = None
            else:
                values[key] = caster(value)
    return values


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset-dir", help="directory with train/valid/test/stat files "
                   "(default: $COGNTKE_DATA_DIR)")
    p.add_argument("--config", help="key=value config file; flags override it")
    p.add_argument("--checkpoint", help="checkpoint directory")
    p.add_argument("--embed-dim", type=int)
    p.add_argument("--time-dim", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--cap", type=int, help="max facts per source entity per layer; 0 = unbounded")
    p.add_argument("--threshold", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output artifact path")
    p.add_argument("--split", choices=["train", "valid", "test"])
    p.add_argument("--train-snapshots", type=int,
                   help="restrict training to the first N snapshots")
    p.add_argument("--no-global-layer", action="store_true",
                   help="first layer uses the local window (local-only ablation)")


def _effective(args: argparse.Namespace) -> dict:
    file_values = _read_config_file(args.config) if args.config else {}
    defaults = {
        "dataset_dir": os.environ.get("COGNTKE_DATA_DIR"), "checkpoint": None,
        "embed_dim": 64, "time_dim": 32, "layers": 4, "window": 15, "lr": 0.001,
        "batch_size": 128, "epochs": 20, "cap": 25, "threshold": DEFAULT_THRESHOLD,
        "seed": 0, "out": None, "split": "test", "train_snapshots": None,
        "global_first_layer": True,
    }
    merged = dict(defaults)
    merged.update({k: v for k, v in file_values.items()})
    for key in defaults:
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
    if getattr(args, "no_global_layer", False):
        merged["global_first_layer"] = False
    if merged["cap"] == 0:
        merged["cap"] = None
    return merged


def _train_config(opts: dict) -> TrainConfig:
    return TrainConfig(
        embed_dim=opts["embed_dim"], time_dim=opts["time_dim"], learning_rate=opts["lr"],
        batch_size=opts["batch_size"], window=opts["window"], num_layers=opts["layers"],
        epochs=opts["epochs"], cap=opts["cap"], seed=opts["seed"],
        global_first_layer=opts["global_first_layer"],
        train_snapshots=opts["train_snapshots"])


def _load_data(opts: dict):
    if not opts["dataset_dir"]:
        raise CognTkeError("no dataset directory: pass --dataset-dir or set COGNTKE_DATA_DIR")
    return augment_relations(load_dataset(opts["dataset_dir"]))


def _seed_everything(seed: int) -> None:
    torch.manual_seed(seed)
    np.random.seed(seed)


def cmd_train(args: argparse.Namespace) -> int:
    opts = _effective(args)
    if not opts["checkpoint"]:
        raise CognTkeError("--checkpoint directory is required for training")
    ds = _load_data(opts)
    config = _train_config(opts)
    result = train(ds, config, opts["checkpoint"])
    payload = {"config": dataclasses.asdict(config), "dataset_dir": opts["dataset_dir"],
               "checkpoint": result.checkpoint_dir, "epoch_losses": result.epoch_losses}
    if opts["out"]:
        with open(opts["out"], "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=1)
    print(json.dumps(payload, indent=1))
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    opts = _effective(args)
    if not opts["checkpoint"]:
        raise CognTkeError("--checkpoint directory is required")
    ds = _load_data(opts)
    model, meta = load_checkpoint(opts["checkpoint"])
    config = TrainConfig(**meta["config"])
    _seed_everything(opts["seed"])
    report = evaluate(model, config, ds, split=opts["split"])
    payload = {**report.to_dict(split=opts["split"]),
               "config": meta["config"], "dataset_dir": opts["dataset_dir"]}
    if opts["out"]:
        with open(opts["out"], "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=1)
    print(report)
    return 0


def cmd_zeroshot(args: argparse.Namespace) -> int:
    opts = _effective(args)
    if not opts["checkpoint"]:
        raise CognTkeError("--checkpoint directory is required")
    ds = _load_data(opts)
    model, meta = load_checkpoint(opts["checkpoint"])
    config = TrainConfig(**meta["config"])
    _seed_everything(opts["seed"])
    remapped, eval_ds, skip_relations = zero_shot_remap(
        model, meta.get("relation_names") or {}, ds)
    report = evaluate(remapped, config, eval_ds, split=opts["split"],
                      skip_relations=skip_relations)
    payload = {**report.to_dict(split=opts["split"]),
               "unmatched_relations": sorted(r for r in skip_relations
                                             if r < ds.num_base_relations),
               "config": meta["config"], "dataset_dir": opts["dataset_dir"]}
    if opts["out"]:
        with open(opts["out"], "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=1)
    print(report)
    return 0


def cmd_explain(args: argparse.Namespace) -> int:
    opts = _effective(args)
    if not opts["checkpoint"]:
        raise CognTkeError("--checkpoint directory is required")
    ds = _load_data(opts)
    model, meta = load_checkpoint(opts["checkpoint"])
    config = TrainConfig(**meta["config"])

    entity, relation, when = (int(x) for x in args.query.split(","))
    g = dg.build(ds, dg.QueryContext(entity, relation, when), config.num_layers,
                 config.window, config.cap, config.global_first_layer)
    with torch.no_grad():
        enc = model.encode(g, relation)
        node_scores = model.decoder(enc.states).squeeze(-1)
    if args.target is not None:
        target = args.target
    else:
        target = int(enc.entities[int(node_scores.argmax())])
    explanation = extract(g, enc.edge_attention, opts["threshold"], target,
                          query_relation=relation)
    out = opts["out"] or "explanation"
    with open(out + ".json", "w", encoding="utf-8") as f:
        f.write(explanation.to_json())
    with open(out + ".dot", "w", encoding="utf-8") as f:
        f.write(explanation.to_dot(ds.entities, ds.relations))
    print(f"prediction {target} ({ds.entities.name(target)}); "
          f"{len(explanation.edges)} edges >= {opts['threshold']}, "
          f"{len(explanation.paths)} paths; wrote {out}.json / {out}.dot")
    return 0


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def cmd_sweep(args: argparse.Namespace) -> int:
    opts = _effective(args)
    ds = _load_data(opts)
    windows = _int_list(args.sweep_window) if args.sweep_window else [5, 10, 15, 20]
    layer_counts = _int_list(args.sweep_layers) if args.sweep_layers else [1, 2, 3, 4, 5]
    dims = _int_list(args.sweep_embed_dim) if args.sweep_embed_dim else [opts["embed_dim"]]
    time_dims = _int_list(args.sweep_time_dim) if args.sweep_time_dim else [opts["time_dim"]]
    out_path = opts["out"] or "sweep.csv"

    rows = []
    for d in dims:
        for d_time in time_dims:
            for window in windows:
                for num_layers in layer_counts:
                    cell = dict(opts, embed_dim=d, time_dim=d_time,
                                window=window, layers=num_layers)
                    config = _train_config(cell)
                    ckpt = os.path.join(args.workdir,
                                        f"sweep_d{d}_t{d_time}_m{window}_L{num_layers}")
                    train(ds, config, ckpt)
                    model, meta = load_checkpoint(ckpt)
                    report = evaluate(model, config, ds, split=opts["split"])
                    rows.append({"embed_dim": d, "time_dim": d_time, "window": window,
                                 "layers": num_layers, **report.to_dict()})
                    logger.info("sweep cell done: %s", rows[-1])
    with open(out_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {len(rows)} rows to {out_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cogntke",
        description="temporal KG extrapolation: layered retrieval, dual-reasoner "
                    "encoding, filtered evaluation, transfer, and explanations")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="filtered MRR / Hits@k on a split")
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("zeroshot", help="evaluate a checkpoint on another dataset "
                                        "by relation-name remapping")
    _add_common(p)
    p.set_defaults(func=cmd_zeroshot)

    p = sub.add_parser("explain", help="attention-thresholded evidence for one query")
    _add_common(p)
    p.add_argument("--query", required=True, metavar="ENTITY,RELATION,TIME",
                   help="query ids, e.g. 120,3,42")
    p.add_argument("--target", type=int, help="explain this entity instead of the argmax")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("sweep", help="grid over window/layers/dims; emits CSV")
    _add_common(p)
    p.add_argument("--sweep-window", help="comma list, default 5,10,15,20")
    p.add_argument("--sweep-layers", help="comma list, default 1,2,3,4,5")
    p.add_argument("--sweep-embed-dim", help="comma list, default current embed dim")
    p.add_argument("--sweep-time-dim", help="comma list, default current time dim")
    p.add_argument("--workdir", default=".", help="where sweep checkpoints go")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CognTkeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())

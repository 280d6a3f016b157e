"""Entity scoring, multi-class log-loss, the training loop, and checkpoints.

Each training fact yields two prediction queries (object form and its inverse
subject form).  Queries are grouped by snapshot so all digraphs in a batch
share their retrieval windows; every query is encoded, decoded into entity
scores (absent entities score exactly zero), and optimized with Adam under
the log-loss whose denominator runs over the full entity vocabulary.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import os
import time
from dataclasses import dataclass

import numpy as np
import torch

from . import digraph as dg
from .errors import DivergenceError, OutOfRange
from .reasoner import BatchEncodeResult, CognTKE, EncodeResult
from .store import TkgDataset

logger = logging.getLogger("cogntke")

GRAD_CLIP_NORM = 1.0


@dataclass
class TrainConfig:
    embed_dim: int = 64
    time_dim: int = 32
    learning_rate: float = 0.001
    batch_size: int = 128
    window: int = 15
    num_layers: int = 4
    epochs: int = 20
    cap: int | None = 25
    seed: int = 0
    global_first_layer: bool = True
    train_snapshots: int | None = None  # keep only the first N train snapshots

    def __post_init__(self):
        for name in ("embed_dim", "time_dim", "batch_size", "window", "num_layers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.time_dim % 2:
            raise ValueError("time_dim must be even")
        if self.epochs < 0 or self.learning_rate <= 0:
            raise ValueError("epochs must be >= 0 and learning_rate > 0")


def score_entities(result: EncodeResult, model: CognTKE, num_entities: int) -> np.ndarray:
    """Dense per-entity score vector; entities outside the digraph get 0.0."""
    scores = np.zeros(num_entities, dtype=np.float64)
    if len(result.entities):
        with torch.no_grad():
            vals = model.decoder(result.states).squeeze(-1).to(torch.float64)
        scores[result.entities] = vals.numpy()
    return scores


def loss(scores: np.ndarray, gold: int) -> float:
    """Multi-class log-loss of one query given its full score vector."""
    scores = np.asarray(scores, dtype=np.float64)
    if not 0 <= gold < len(scores):
        raise OutOfRange(f"gold entity {gold} outside [0, {len(scores)})")
    m = float(scores.max())
    return float(-scores[gold] + m + np.log(np.exp(scores - m).sum()))


def batch_loss(result: BatchEncodeResult, model: CognTKE, golds: np.ndarray,
               num_entities: int) -> torch.Tensor:
    """Mean log-loss over a batch, equivalent to `loss` on dense vectors.

    Absent entities contribute exp(0)=1 each to the denominator, so only the
    count of absentees is needed, never their dense scores.
    """
    node_scores = model.decoder(result.states).squeeze(-1)
    n_queries = len(result.query_offsets) - 1
    counts = np.diff(result.query_offsets)
    seg_np = np.repeat(np.arange(n_queries, dtype=np.int64), counts)
    seg = torch.from_numpy(seg_np)

    node_keys = seg_np * num_entities + result.entities
    gold_keys = np.arange(n_queries, dtype=np.int64) * num_entities + golds
    pos = np.searchsorted(node_keys, gold_keys)
    pos_c = np.minimum(pos, max(len(node_keys) - 1, 0))
    found = (node_keys[pos_c] == gold_keys) if len(node_keys) else np.zeros(n_queries, bool)

    gold_scores = torch.zeros(n_queries, dtype=node_scores.dtype)
    if found.any():
        idx = torch.from_numpy(np.flatnonzero(found))
        gold_scores[idx] = node_scores[torch.from_numpy(pos_c[found])]

    # stable log-sum-exp with the implicit zeros folded in
    shift = torch.zeros(n_queries, dtype=node_scores.dtype)
    if len(node_keys):
        shift = shift.scatter_reduce(0, seg, node_scores.detach(), reduce="amax")
        shift = torch.clamp(shift, min=0.0)
    ex = torch.exp(node_scores - shift[seg])
    present_sum = torch.zeros(n_queries, dtype=node_scores.dtype).index_add_(0, seg, ex)
    absent = torch.from_numpy(num_entities - counts).to(node_scores.dtype)
    lse = shift + torch.log(present_sum + absent * torch.exp(-shift))
    return (lse - gold_scores).mean()


def training_queries(ds: TkgDataset, train_snapshots: int | None = None) -> np.ndarray:
    """(entity, relation, gold, time) rows: both directions, times >= 1 only."""
    facts = ds.train
    if train_snapshots is not None:
        kept = np.unique(facts[:, 3])[:train_snapshots]
        facts = facts[np.isin(facts[:, 3], kept)]
    obj_form = facts[:, [0, 1, 2, 3]]
    subj_form = facts[:, [2, 1, 0, 3]].copy()
    subj_form[:, 1] += ds.num_base_relations
    queries = np.concatenate([obj_form, subj_form], axis=0)
    return queries[queries[:, 3] >= 1]


def snapshot_batches(queries: np.ndarray, batch_size: int,
                     rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffled batches that never mix query snapshots."""
    batches = []
    for t in np.unique(queries[:, 3]):
        group = queries[queries[:, 3] == t]
        group = group[rng.permutation(len(group))]
        for i in range(0, len(group), batch_size):
            batches.append(group[i:i + batch_size])
    order = rng.permutation(len(batches))
    return [batches[i] for i in order]


def encode_query_batch(model: CognTKE, ds: TkgDataset, batch: np.ndarray,
                       config: TrainConfig) -> BatchEncodeResult:
    """Build (with per-batch digraph reuse) and jointly encode one batch."""
    cache: dict[tuple[int, int], dg.TcrDigraph] = {}
    graphs = []
    for e, _, _, t in batch[:, [0, 1, 2, 3]]:
        key = (int(e), int(t))
        if key not in cache:
            cache[key] = dg.build(ds, dg.QueryContext(int(e), 0, int(t)),
                                  config.num_layers, config.window, config.cap,
                                  config.global_first_layer)
        graphs.append(cache[key])
    return model.encode_batch(graphs, batch[:, 1].tolist())


@dataclass
class TrainResult:
    checkpoint_dir: str
    epoch_losses: list[float]


def train(ds: TkgDataset, config: TrainConfig, checkpoint_dir: str) -> TrainResult:
    """Optimize a fresh model on the dataset's train split; checkpoint per epoch."""
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    model = CognTKE(ds.num_entities, ds.num_base_relations, config.embed_dim,
                    config.time_dim, config.num_layers,
                    num_positions=ds.num_snapshots)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    queries = training_queries(ds, config.train_snapshots)
    logger.info("training on %d queries (%d facts, both directions)",
                len(queries), len(queries) // 2)

    epoch_losses: list[float] = []
    save_checkpoint(checkpoint_dir, model, config, ds, epoch=0, epoch_losses=epoch_losses)
    for epoch in range(1, config.epochs + 1):
        started = time.time()
        model.train()
        total, seen = 0.0, 0
        for batch in snapshot_batches(queries, config.batch_size, rng):
            optimizer.zero_grad()
            result = encode_query_batch(model, ds, batch, config)
            batch_mean = batch_loss(result, model, batch[:, 2], ds.num_entities)
            if not torch.isfinite(batch_mean):
                raise DivergenceError(
                    f"non-finite loss {batch_mean.item()} at epoch {epoch}, "
                    f"snapshot {int(batch[0, 3])}, batch size {len(batch)}")
            batch_mean.backward()
            torch.nn.utils.clip_grad_norm_(model.parameters(), GRAD_CLIP_NORM)
            optimizer.step()
            total += float(batch_mean.item()) * len(batch)
            seen += len(batch)
        epoch_losses.append(total / max(seen, 1))
        logger.info("epoch %d/%d: mean loss %.4f (%.1fs)", epoch, config.epochs,
                    epoch_losses[-1], time.time() - started)
        save_checkpoint(checkpoint_dir, model, config, ds, epoch, epoch_losses)
    return TrainResult(checkpoint_dir, epoch_losses)


def save_checkpoint(dir_path: str, model: CognTKE, config: TrainConfig,
                    ds: TkgDataset, epoch: int, epoch_losses: list[float]) -> None:
    os.makedirs(dir_path, exist_ok=True)
    meta = {
        "config": dataclasses.asdict(config),
        "dataset": {
            "fingerprint": ds.fingerprint(),
            "num_entities": ds.num_entities,
            "num_base_relations": ds.num_base_relations,
            "num_snapshots": ds.num_snapshots,
        },
        "relation_names": ds.relations.id_to_name or None,
        "num_positions": model.temporal.num_positions,
        "epoch": epoch,
        "epoch_losses": epoch_losses,
    }
    with open(os.path.join(dir_path, "meta.json"), "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=1)
    torch.save(model.state_dict(), os.path.join(dir_path, "params.pt"))


def load_checkpoint(dir_path: str,
                    dtype: torch.dtype = torch.float32) -> tuple[CognTKE, dict]:
    with open(os.path.join(dir_path, "meta.json"), encoding="utf-8") as f:
        meta = json.load(f)
    cfg = meta["config"]
    if meta.get("relation_names"):
        meta["relation_names"] = {int(k): v for k, v in meta["relation_names"].items()}
    model = CognTKE(meta["dataset"]["num_entities"],
                    meta["dataset"]["num_base_relations"],
                    cfg["embed_dim"], cfg["time_dim"], cfg["num_layers"],
                    num_positions=meta["num_positions"], dtype=dtype)
    state = torch.load(os.path.join(dir_path, "params.pt"), weights_only=True)
    model.load_state_dict({k: v.to(dtype) for k, v in state.items()})
    return model, meta

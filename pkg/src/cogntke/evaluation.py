"""Time-aware filtered ranking metrics and the cross-dataset transfer protocol.

Filtering removes from contention only the other true answers that hold at
the query's own timestamp.  Ties share the mean of their positions, rounded
up, so an all-zero score vector cannot claim rank 1 by accident.

Transfer works because no learned parameter is indexed by entity: relation
embeddings are re-indexed onto the target vocabulary by matching relation
names, target relations without a source match are flagged, their queries
skipped, and facts using them hidden from retrieval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from . import digraph as dg
from .errors import RemapError, VocabError
from .reasoner import CognTKE
from .store import FactIndex, TkgDataset
from .training import TrainConfig

EVAL_BATCH = 128


@dataclass(frozen=True)
class RankResult:
    query: tuple[int, int, int]  # (entity, relation, time)
    gold: int
    rank: int


@dataclass
class MetricsReport:
    mrr: float
    hits1: float
    hits3: float
    hits10: float
    n_queries: int
    n_skipped: int = 0

    @classmethod
    def from_ranks(cls, ranks: np.ndarray, n_skipped: int = 0) -> "MetricsReport":
        if len(ranks) == 0:
            return cls(0.0, 0.0, 0.0, 0.0, 0, n_skipped)
        inv = 1.0 / ranks
        return cls(
            mrr=100.0 * float(inv.mean()),
            hits1=100.0 * float((ranks <= 1).mean()),
            hits3=100.0 * float((ranks <= 3).mean()),
            hits10=100.0 * float((ranks <= 10).mean()),
            n_queries=int(len(ranks)),
            n_skipped=n_skipped,
        )

    def to_dict(self, split: str | None = None) -> dict:
        out = {"mrr": self.mrr, "hits1": self.hits1, "hits3": self.hits3,
               "hits10": self.hits10, "n_queries": self.n_queries,
               "n_skipped": self.n_skipped}
        if split is not None:
            out = {"split": split, **out}
        return out

    def __str__(self) -> str:
        header = f"{'MRR':>8} {'Hits@1':>8} {'Hits@3':>8} {'Hits@10':>8} {'queries':>8} {'skipped':>8}"
        row = (f"{self.mrr:8.2f} {self.hits1:8.2f} {self.hits3:8.2f} "
               f"{self.hits10:8.2f} {self.n_queries:8d} {self.n_skipped:8d}")
        return header + "\n" + row


def filtered_rank(scores: np.ndarray, gold: int, competing_golds) -> int:
    """1-based rank of gold after removing other true answers from contention."""
    scores = np.asarray(scores, dtype=np.float64)
    gold_score = scores[gold]
    mask = np.ones(len(scores), dtype=bool)
    competing = np.asarray(sorted(competing_golds), dtype=np.int64)
    if len(competing):
        mask[competing] = False
    contenders = scores[mask]
    higher = int((contenders > gold_score).sum())
    tied = int((contenders == gold_score).sum())  # gold is its own tie
    return higher + math.ceil((tied + 1) / 2)


def time_aware_filter(ds: TkgDataset) -> dict[tuple[int, int, int], set[int]]:
    """(entity, relation, time) -> true answers at exactly that time, both forms."""
    table: dict[tuple[int, int, int], set[int]] = {}
    base = ds.num_base_relations
    for s, r, o, t in ds.all_facts():
        table.setdefault((int(s), int(r), int(t)), set()).add(int(o))
        table.setdefault((int(o), int(r) + base, int(t)), set()).add(int(s))
    return table


def evaluation_queries(ds: TkgDataset, split: str) -> np.ndarray:
    """(entity, relation, gold, time) rows for both prediction directions."""
    facts = {"train": ds.train, "valid": ds.valid, "test": ds.test}[split]
    obj_form = facts[:, [0, 1, 2, 3]]
    subj_form = facts[:, [2, 1, 0, 3]].copy()
    subj_form[:, 1] += ds.num_base_relations
    return np.concatenate([obj_form, subj_form], axis=0)


def evaluate(model: CognTKE, config: TrainConfig, ds: TkgDataset, split: str = "test",
             skip_relations: set[int] | None = None, batch_size: int = EVAL_BATCH,
             return_ranks: bool = False):
    """Filtered MRR / Hits@k over both query directions of a split."""
    if model.num_base_relations != ds.num_base_relations:
        raise VocabError(
            f"model has {model.num_base_relations} base relations, dataset has "
            f"{ds.num_base_relations}; remap the checkpoint for transfer first")
    model.eval()
    model.temporal.ensure_positions(ds.num_snapshots)
    queries = evaluation_queries(ds, split)
    queries = queries[queries[:, 3] >= 1]

    n_skipped = 0
    if skip_relations:
        skip = np.isin(queries[:, 1], sorted(skip_relations))
        n_skipped = int(skip.sum())
        queries = queries[~skip]

    # group by snapshot, then entity, for digraph reuse inside each batch
    order = np.lexsort((queries[:, 1], queries[:, 0], queries[:, 3]))
    queries = queries[order]

    filters = time_aware_filter(ds)
    ranks = np.empty(len(queries), dtype=np.int64)
    results: list[RankResult] = []
    cursor = 0
    with torch.no_grad():
        for i in range(0, len(queries), batch_size):
            batch = queries[i:i + batch_size]
            cache: dict[int, dg.TcrDigraph] = {}
            graphs = []
            for e, _, _, t in batch:
                if int(e) not in cache or cache[int(e)].query_time != int(t):
                    cache[int(e)] = dg.build(ds, dg.QueryContext(int(e), 0, int(t)),
                                             config.num_layers, config.window,
                                             config.cap, config.global_first_layer)
                graphs.append(cache[int(e)])
            enc = model.encode_batch(graphs, batch[:, 1].tolist())
            node_scores = model.decoder(enc.states).squeeze(-1).to(torch.float64).numpy()
            for b, (e, r, gold, t) in enumerate(batch):
                lo, hi = enc.query_offsets[b], enc.query_offsets[b + 1]
                vec = np.zeros(ds.num_entities, dtype=np.float64)
                vec[enc.entities[lo:hi]] = node_scores[lo:hi]
                competing = filters.get((int(e), int(r), int(t)), set()) - {int(gold)}
                rank = filtered_rank(vec, int(gold), competing)
                ranks[cursor] = rank
                cursor += 1
                if return_ranks:
                    results.append(RankResult((int(e), int(r), int(t)), int(gold), rank))
    report = MetricsReport.from_ranks(ranks, n_skipped)
    return (report, results) if return_ranks else report


def base_relation_names(relation_names: dict[int, str], num_base: int) -> dict[str, int]:
    """name -> base id for the unsuffixed (forward) relations."""
    return {name: i for i, name in relation_names.items() if i < num_base}


def zero_shot_remap(model: CognTKE, source_relation_names: dict[int, str],
                    target_ds: TkgDataset) -> tuple[CognTKE, TkgDataset, set[int]]:
    """Re-key relation embeddings onto the target vocabulary by name.

    Returns the transferred model, a copy of the target store whose retrieval
    index hides facts with unmatched relations, and the set of augmented
    query-relation ids whose queries must be skipped.
    """
    if not target_ds.relations.id_to_name:
        raise RemapError("target dataset has no relation2id.txt names to match on")
    if not source_relation_names:
        raise RemapError("checkpoint carries no relation names to match on")
    src_base = model.num_base_relations
    tgt_base = target_ds.num_base_relations
    by_name = base_relation_names(source_relation_names, src_base)

    matched: dict[int, int] = {}
    for j in range(tgt_base):
        name = target_ds.relations.id_to_name.get(j)
        if name is not None and name in by_name:
            matched[j] = by_name[name]
    if not matched:
        raise RemapError("no relation name overlap between source and target")

    src_emb = model.temporal.relation_embedding.detach()
    d = src_emb.shape[1]
    new_emb = torch.zeros(2 * tgt_base + 1, d, dtype=src_emb.dtype)
    for j, i in matched.items():
        new_emb[j] = src_emb[i]
        new_emb[j + tgt_base] = src_emb[i + src_base]
    new_emb[2 * tgt_base] = src_emb[2 * src_base]

    remapped = CognTKE(target_ds.num_entities, tgt_base, model.embed_dim,
                       model.temporal.time_dim, model.num_layers,
                       num_positions=max(model.temporal.num_positions,
                                         target_ds.num_snapshots),
                       dtype=src_emb.dtype)
    state = model.state_dict()
    state["temporal.relation_embedding"] = new_emb
    state["temporal.time_table"] = remapped.temporal.time_table
    remapped.load_state_dict(state)

    unmatched = set(range(tgt_base)) - set(matched)
    skip_relations = unmatched | {j + tgt_base for j in unmatched}

    eval_ds = _with_restricted_index(target_ds, np.asarray(sorted(matched), dtype=np.int64))
    return remapped, eval_ds, skip_relations


def _with_restricted_index(ds: TkgDataset, keep_base_relations: np.ndarray) -> TkgDataset:
    """Shallow copy whose index only retrieves facts with embeddable relations."""
    import copy

    out = copy.copy(ds)
    facts = ds.all_facts()
    facts = facts[np.isin(facts[:, 1], keep_base_relations)]
    inverse = facts[:, [2, 1, 0, 3]].copy()
    inverse[:, 1] += ds.num_base_relations
    out._index = FactIndex(np.concatenate([facts, inverse], axis=0))
    out.augmented = True
    return out

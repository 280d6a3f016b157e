"""Immutable temporal-KG fact store: loading, augmentation, windowed retrieval.

Facts are quadruples (subject, relation, object, time) with integer ids and
integer snapshot indices.  Augmentation materializes one inverse fact per base
fact (relation id shifted by the base relation count) and reserves a single
identity relation id; identity self-loops themselves are synthesized lazily
during digraph expansion, never stored.
"""

from __future__ import annotations

import hashlib
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import AlreadyAugmented, CognTkeError, InvalidSplit, MissingData, ParseError

SPLIT_FILES = ("train.txt", "valid.txt", "test.txt")


@dataclass(frozen=True)
class Quadruple:
    subject: int
    relation: int
    object: int
    time: int

    def as_tuple(self):
        return (self.subject, self.relation, self.object, self.time)


@dataclass
class Vocabulary:
    """id <-> name mapping; names are optional for purely numeric datasets."""

    id_to_name: dict[int, str] = field(default_factory=dict)

    def name(self, idx: int) -> str:
        return self.id_to_name.get(idx, str(idx))

    @property
    def name_to_id(self) -> dict[str, int]:
        return {v: k for k, v in self.id_to_name.items()}


def _read_vocab_file(path: str) -> dict[int, str]:
    mapping = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) < 2:
                parts = line.rsplit(None, 1)
            if len(parts) < 2:
                raise ParseError(path, lineno, f"expected 'name<TAB>id', got {line!r}")
            try:
                mapping[int(parts[-1])] = parts[0]
            except ValueError:
                raise ParseError(path, lineno, f"non-integer id in {line!r}") from None
    return mapping


def _read_quadruple_file(path: str) -> np.ndarray:
    """Parse whitespace-separated integer columns s r o t; 5th column ignored."""
    if not os.path.isfile(path):
        raise MissingData(f"missing dataset file: {path}")
    rows = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) < 4:
                raise ParseError(path, lineno, f"expected >=4 integer columns, got {len(parts)}")
            try:
                rows.append((int(parts[0]), int(parts[1]), int(parts[2]), int(parts[3])))
            except ValueError:
                raise ParseError(path, lineno, f"non-integer field in {line.rstrip()!r}") from None
    if not rows:
        raise MissingData(f"empty dataset file: {path}")
    return np.asarray(rows, dtype=np.int64)


class FactIndex:
    """Per-subject, recency-sorted view over an array of facts.

    Rows are sorted by (subject asc, time desc, relation asc, object asc) so a
    window query per subject is one contiguous slice and fan-out capping can
    simply take the head of a slice.  A composite (subject, reversed-time) key
    makes the per-subject window lookup a pair of vectorized searchsorteds.
    """

    def __init__(self, facts: np.ndarray):
        if facts.size == 0:
            facts = facts.reshape(0, 4)
        order = np.lexsort((facts[:, 2], facts[:, 1], -facts[:, 3], facts[:, 0]))
        self.facts = np.ascontiguousarray(facts[order])
        self.time_span = int(facts[:, 3].max()) + 1 if len(facts) else 1
        self.key = self.facts[:, 0] * self.time_span + (self.time_span - 1 - self.facts[:, 3])

    def window_bounds(self, entities: np.ndarray, t_lo: int, t_hi: int
                      ) -> tuple[np.ndarray, np.ndarray]:
        """Per-entity half-open row ranges holding t_lo <= time <= t_hi."""
        t_hi = min(t_hi, self.time_span - 1)
        t_lo = max(t_lo, 0)
        entities = np.asarray(entities, dtype=np.int64)
        if t_lo > t_hi or len(self.facts) == 0:
            z = np.zeros(len(entities), dtype=np.int64)
            return z, z.copy()
        base = entities * self.time_span
        starts = np.searchsorted(self.key, base + (self.time_span - 1 - t_hi), side="left")
        ends = np.searchsorted(self.key, base + (self.time_span - 1 - t_lo), side="right")
        return starts, ends

    def window_slice(self, entity: int, t_lo: int, t_hi: int) -> tuple[int, int]:
        starts, ends = self.window_bounds(np.asarray([entity]), t_lo, t_hi)
        return int(starts[0]), int(ends[0])


@dataclass
class TkgDataset:
    entities: Vocabulary
    relations: Vocabulary
    num_entities: int
    num_base_relations: int
    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    granularity: int
    augmented: bool = False
    _index: FactIndex | None = None

    @property
    def num_relations(self) -> int:
        """Size of the relation-id space (augmented: 2|R|+1)."""
        if self.augmented:
            return 2 * self.num_base_relations + 1
        return self.num_base_relations

    @property
    def identity_relation(self) -> int:
        return 2 * self.num_base_relations

    def inverse_relation(self, r: int) -> int:
        base = self.num_base_relations
        if r == self.identity_relation:
            return r
        return r + base if r < base else r - base

    def all_facts(self) -> np.ndarray:
        return np.concatenate([self.train, self.valid, self.test], axis=0)

    @property
    def num_snapshots(self) -> int:
        return int(self.test[:, 3].max()) + 1

    def snapshots(self, split: np.ndarray) -> dict[int, np.ndarray]:
        """Map snapshot index -> facts of that snapshot, in file order."""
        out: dict[int, np.ndarray] = {}
        for t in np.unique(split[:, 3]):
            out[int(t)] = split[split[:, 3] == t]
        return out

    @property
    def index(self) -> FactIndex:
        if self._index is None:
            raise CognTkeError("store not augmented yet; call augment_relations first")
        return self._index

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for arr in (self.train, self.valid, self.test):
            h.update(str(arr.shape).encode())
            h.update(arr[:64].tobytes())
            h.update(arr[-64:].tobytes())
        h.update(f"{self.num_entities},{self.num_base_relations},{self.granularity}".encode())
        return h.hexdigest()[:16]


def _detect_granularity(times: np.ndarray) -> int:
    g = 0
    for t in np.unique(times):
        g = math.gcd(g, int(t))
        if g == 1:
            break
    return g or 1


def load_dataset(dir_path: str, granularity: int | None = None) -> TkgDataset:
    """Load train/valid/test/stat files and normalize times to snapshot indices.

    granularity=None derives the divisor as the gcd of all raw timestamps,
    which recovers per-day indices from hour-stamped files and is the identity
    on files that already carry snapshot indices.
    """
    stat_path = os.path.join(dir_path, "stat.txt")
    if not os.path.isfile(stat_path):
        raise MissingData(f"missing dataset file: {stat_path}")
    with open(stat_path, encoding="utf-8") as f:
        parts = f.readline().split()
    if len(parts) < 2:
        raise ParseError(stat_path, 1, "expected 'num_entities num_relations'")
    num_entities, num_base_relations = int(parts[0]), int(parts[1])

    splits = [_read_quadruple_file(os.path.join(dir_path, name)) for name in SPLIT_FILES]

    if granularity is None:
        granularity = _detect_granularity(np.concatenate([s[:, 3] for s in splits]))
    if granularity < 1:
        raise ParseError(stat_path, 1, f"granularity must be >= 1, got {granularity}")
    for s in splits:
        s[:, 3] //= granularity

    train, valid, test = splits
    for name, s in zip(SPLIT_FILES, splits):
        path = os.path.join(dir_path, name)
        if s[:, 3].min() < 0:
            raise ParseError(path, 1, "negative timestamp")
        bad_ent = (s[:, [0, 2]] < 0) | (s[:, [0, 2]] >= num_entities)
        if bad_ent.any():
            raise ParseError(path, 1, "entity id outside vocabulary bounds")
        bad_rel = (s[:, 1] < 0) | (s[:, 1] >= num_base_relations)
        if bad_rel.any():
            raise ParseError(path, 1, "relation id outside vocabulary bounds")

    if not (train[:, 3].max() < valid[:, 3].min() <= valid[:, 3].max() < test[:, 3].min()):
        raise InvalidSplit(
            "splits are not chronological: "
            f"train<= {int(train[:, 3].max())}, valid in [{int(valid[:, 3].min())}, "
            f"{int(valid[:, 3].max())}], test >= {int(test[:, 3].min())}"
        )

    entities = Vocabulary()
    relations = Vocabulary()
    ent_vocab_path = os.path.join(dir_path, "entity2id.txt")
    rel_vocab_path = os.path.join(dir_path, "relation2id.txt")
    if os.path.isfile(ent_vocab_path):
        entities.id_to_name = _read_vocab_file(ent_vocab_path)
    if os.path.isfile(rel_vocab_path):
        relations.id_to_name = _read_vocab_file(rel_vocab_path)

    return TkgDataset(
        entities=entities,
        relations=relations,
        num_entities=num_entities,
        num_base_relations=num_base_relations,
        train=train,
        valid=valid,
        test=test,
        granularity=granularity,
    )


def augment_relations(ds: TkgDataset) -> TkgDataset:
    """Extend the store with inverse facts and index it for windowed retrieval.

    Inverse of base relation r is r + |R|; id 2|R| is reserved for the identity
    relation.  Inverse names mirror the base names with a ``_reverse`` suffix.
    """
    if ds.augmented:
        raise AlreadyAugmented("dataset relations already augmented")
    base = ds.num_base_relations
    ds.augmented = True

    if ds.relations.id_to_name:
        names = dict(ds.relations.id_to_name)
        for r, name in list(names.items()):
            names[r + base] = name + "_reverse"
        names[2 * base] = "_identity"
        ds.relations.id_to_name = names

    forward = ds.all_facts()
    inverse = forward[:, [2, 1, 0, 3]].copy()
    inverse[:, 1] += base
    ds._index = FactIndex(np.concatenate([forward, inverse], axis=0))
    return ds


def facts_from(ds: TkgDataset, entities, t_lo: int, t_hi: int) -> list[Quadruple]:
    """All augmented facts with subject in `entities` and t_lo <= time <= t_hi.

    Output order is deterministic: time desc, then relation, object, subject.
    """
    if t_lo > t_hi:
        raise ValueError(f"window [{t_lo}, {t_hi}] is empty")
    idx = ds.index
    chunks = []
    for e in entities:
        lo, hi = idx.window_slice(int(e), t_lo, t_hi)
        if hi > lo:
            chunks.append(idx.facts[lo:hi])
    if not chunks:
        return []
    rows = np.concatenate(chunks, axis=0)
    order = np.lexsort((rows[:, 0], rows[:, 2], rows[:, 1], -rows[:, 3]))
    rows = rows[order]
    return [Quadruple(int(s), int(r), int(o), int(t)) for s, r, o, t in rows]

"""Layered query-rooted digraph construction and path enumeration.

A digraph for query entity e at time t_q stacks L layers of edges.  Layer 1
retrieves the entity's one-hop history over the whole past [0, t_q-1]; every
later layer expands the previous layer's entity set inside the local window
[t_q-m, t_q-1].  Each expansion also adds one identity self-loop per retained
entity (timestamped t_q-1, the most recent legal time) so entities survive
into deeper layers.  All retrieval windows end strictly before t_q: nothing
at or after the query time can leak into the structure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .store import TkgDataset

# edge array columns
SRC, REL, TIME, DST = 0, 1, 2, 3


@dataclass(frozen=True)
class QueryContext:
    entity: int
    relation: int
    time: int

    def __post_init__(self):
        if self.time < 1:
            raise ValueError(f"query time must be >= 1, got {self.time}")


@dataclass(frozen=True)
class LayeredEdge:
    layer: int
    src: int
    relation: int
    time: int
    dst: int


class TcrDigraph:
    """Edge layers plus per-layer deduplicated entity sets.

    layers[l] is an int64 array of shape [n_edges, 4] with columns
    (src, rel, time, dst); entity_sets[l] is a sorted unique id array with
    entity_sets[0] == [source].  Construction never looks at the query
    relation, so queries differing only in relation share one digraph.
    """

    def __init__(self, source: int, query_time: int,
                 layers: list[np.ndarray], entity_sets: list[np.ndarray]):
        self.source = source
        self.query_time = query_time
        self.layers = layers
        self.entity_sets = entity_sets

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def num_edges(self) -> int:
        return int(sum(len(a) for a in self.layers))

    def edges(self) -> list[LayeredEdge]:
        out = []
        for l, arr in enumerate(self.layers, start=1):
            out.extend(LayeredEdge(l, int(s), int(r), int(t), int(d)) for s, r, t, d in arr)
        return out

    def final_entities(self) -> np.ndarray:
        return self.entity_sets[-1]

    def structure_hash(self) -> str:
        import hashlib

        h = hashlib.sha256()
        h.update(f"{self.source},{self.query_time}".encode())
        for arr in self.layers:
            h.update(arr.tobytes())
        return h.hexdigest()[:16]

    def to_json(self) -> str:
        payload = {
            "query": {"entity": self.source, "time": self.query_time},
            "layers": [
                [{"src": int(s), "rel": int(r), "time": int(t), "dst": int(d)}
                 for s, r, t, d in arr]
                for arr in self.layers
            ],
        }
        return json.dumps(payload, indent=1)


def build(ds: TkgDataset, q: QueryContext, num_layers: int, window: int,
          cap: int | None = 200, global_first_layer: bool = True) -> TcrDigraph:
    """Construct the layered digraph for one query.

    cap bounds the non-identity fan-out per source entity per layer, keeping
    the most recent facts (ties broken by relation then object id); None means
    unbounded.  global_first_layer=False narrows layer 1 to the local window,
    the 'local reasoning only' ablation.
    """
    if num_layers < 1:
        raise ValueError(f"need at least one layer, got {num_layers}")
    if window < 1:
        raise ValueError(f"window length must be >= 1, got {window}")
    idx = ds.index
    t_q = q.time
    identity = ds.identity_relation

    entity_sets = [np.asarray([q.entity], dtype=np.int64)]
    layers = []
    for layer in range(1, num_layers + 1):
        if layer == 1 and global_first_layer:
            t_lo, t_hi = 0, t_q - 1
        else:
            t_lo, t_hi = max(0, t_q - window), t_q - 1
        sources = entity_sets[-1]
        rows = _gather_capped(idx, sources, t_lo, t_hi, cap)
        edges = rows[:, [0, 1, 3, 2]]  # (sub, rel, obj, time) -> (src, rel, time, dst)
        ident = np.empty((len(sources), 4), dtype=np.int64)
        ident[:, SRC] = sources
        ident[:, REL] = identity
        ident[:, TIME] = t_q - 1
        ident[:, DST] = sources
        edges = np.concatenate([edges, ident], axis=0)
        edges = np.unique(edges, axis=0)
        layers.append(edges)
        entity_sets.append(np.unique(edges[:, DST]))

    return TcrDigraph(q.entity, t_q, layers, entity_sets)


def _gather_capped(idx, sources: np.ndarray, t_lo: int, t_hi: int,
                   cap: int | None) -> np.ndarray:
    """Stack each source's windowed fact slice, truncated to cap rows each."""
    if len(sources) == 0:
        return np.empty((0, 4), dtype=np.int64)
    starts, ends = idx.window_bounds(sources, t_lo, t_hi)
    counts = ends - starts
    if cap is not None:
        counts = np.minimum(counts, cap)
    total = int(counts.sum())
    if total == 0:
        return np.empty((0, 4), dtype=np.int64)
    row_idx = np.repeat(starts, counts) + _within_group_arange(counts)
    return idx.facts[row_idx]


def _within_group_arange(counts: np.ndarray) -> np.ndarray:
    total = int(counts.sum())
    out = np.arange(total, dtype=np.int64)
    group_starts = np.repeat(np.cumsum(counts) - counts, counts)
    return out - group_starts


def enumerate_paths(g: TcrDigraph, target: int) -> list[list[LayeredEdge]]:
    """All source-to-target walks taking exactly one edge from every layer."""
    if target not in g.entity_sets[-1]:
        return []
    # adjacency per layer: src -> list of edge tuples
    adj = []
    for arr in g.layers:
        m: dict[int, list[tuple[int, int, int, int]]] = {}
        for s, r, t, d in arr:
            m.setdefault(int(s), []).append((int(s), int(r), int(t), int(d)))
        adj.append(m)

    paths: list[list[LayeredEdge]] = []
    stack: list[LayeredEdge] = []

    def walk(layer: int, at: int):
        if layer > g.num_layers:
            if at == target:
                paths.append(list(stack))
            return
        for s, r, t, d in adj[layer - 1].get(at, ()):
            stack.append(LayeredEdge(layer, s, r, t, d))
            walk(layer + 1, d)
            stack.pop()

    walk(1, g.source)
    return paths

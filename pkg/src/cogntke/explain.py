"""Human-readable evidence extraction from encoded digraphs.

Edges whose attention weight falls below a threshold are pruned; the walks
that survive from the query entity to the predicted entity are the rule-like
evidence chains backing the prediction.  Pruning is monotone in the threshold
and never changes the prediction itself, only its explanation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .digraph import DST, LayeredEdge, TcrDigraph, enumerate_paths
from .errors import TargetAbsent
from .store import Vocabulary

DEFAULT_THRESHOLD = 0.4


@dataclass(frozen=True)
class WeightedEdge:
    edge: LayeredEdge
    weight: float


@dataclass
class Explanation:
    query: tuple[int, int, int]        # (entity, relation, time)
    target: int
    threshold: float
    edges: list[WeightedEdge]          # surviving edges, all layers
    paths: list[list[LayeredEdge]]     # source -> target walks on the pruned graph

    def to_dict(self) -> dict:
        return {
            "query": {"entity": self.query[0], "relation": self.query[1],
                      "time": self.query[2]},
            "target": self.target,
            "threshold": self.threshold,
            "edges": [
                {"layer": w.edge.layer, "src": w.edge.src, "rel": w.edge.relation,
                 "time": w.edge.time, "dst": w.edge.dst, "weight": w.weight}
                for w in self.edges
            ],
            "paths": [
                [{"layer": e.layer, "src": e.src, "rel": e.relation,
                  "time": e.time, "dst": e.dst} for e in path]
                for path in self.paths
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def to_dot(self, entities: Vocabulary | None = None,
               relations: Vocabulary | None = None) -> str:
        """Graphviz description of the surviving evidence."""
        ent = entities.name if entities else str
        rel = relations.name if relations else str
        lines = ["digraph evidence {", "  rankdir=LR;"]
        lines.append(f'  "q:{ent(self.query[0])}" [shape=box];')
        for w in self.edges:
            e = w.edge
            lines.append(
                f'  "L{e.layer - 1}:{ent(e.src)}" -> "L{e.layer}:{ent(e.dst)}"'
                f' [label="{rel(e.relation)} @t{e.time} ({w.weight:.2f})"];'
            )
        lines.append("}")
        return "\n".join(lines)


def prune(g: TcrDigraph, edge_attention: list[np.ndarray],
          threshold: float) -> TcrDigraph:
    """Digraph restricted to edges with attention weight >= threshold."""
    layers = []
    entity_sets = [g.entity_sets[0]]
    for arr, weights in zip(g.layers, edge_attention):
        if len(arr) != len(weights):
            raise ValueError("attention weights do not align with digraph edges")
        kept = arr[np.asarray(weights) >= threshold]
        layers.append(kept)
        entity_sets.append(np.unique(kept[:, DST]) if len(kept)
                           else np.empty(0, dtype=np.int64))
    return TcrDigraph(g.source, g.query_time, layers, entity_sets)


def extract(g: TcrDigraph, edge_attention: list[np.ndarray], threshold: float,
            target: int, query_relation: int = 0) -> Explanation:
    """Evidence for `target`: surviving edges and the walks that reach it."""
    if target not in g.entity_sets[-1]:
        raise TargetAbsent(f"entity {target} not in the digraph's final layer")
    pruned = prune(g, edge_attention, threshold)

    surviving = []
    for layer_no, (arr, weights) in enumerate(zip(g.layers, edge_attention), start=1):
        for row, w in zip(arr, np.asarray(weights)):
            if w >= threshold:
                surviving.append(WeightedEdge(
                    LayeredEdge(layer_no, int(row[0]), int(row[1]),
                                int(row[2]), int(row[3])), float(w)))

    paths = enumerate_paths(pruned, target)
    return Explanation(
        query=(g.source, query_relation, g.query_time),
        target=target, threshold=threshold, edges=surviving, paths=paths)

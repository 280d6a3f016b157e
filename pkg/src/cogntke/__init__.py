"""Temporal knowledge-graph extrapolation over layered query digraphs.

The pipeline: load and augment a quadruple store, build a layered digraph
around each query (global one-hop history first, windowed multi-hop after),
encode it with query-conditioned gated attention into per-entity states,
decode states into scores, and explain predictions by attention-thresholded
evidence paths.
"""

from .digraph import LayeredEdge, QueryContext, TcrDigraph, build, enumerate_paths
from .encoding import TemporalRelationEncoder, time_encode, time_encoding_table
from .evaluation import MetricsReport, evaluate, filtered_rank, zero_shot_remap
from .explain import Explanation, extract
from .reasoner import CognTKE, EncodeResult
from .store import (Quadruple, TkgDataset, augment_relations, facts_from,
                    load_dataset)
from .training import (TrainConfig, batch_loss, load_checkpoint, loss,
                       score_entities, train)

__version__ = "0.1.0"

__all__ = [
    "LayeredEdge", "QueryContext", "TcrDigraph", "build", "enumerate_paths",
    "TemporalRelationEncoder", "time_encode", "time_encoding_table",
    "MetricsReport", "evaluate", "filtered_rank", "zero_shot_remap",
    "Explanation", "extract", "CognTKE", "EncodeResult",
    "Quadruple", "TkgDataset", "augment_relations", "facts_from", "load_dataset",
    "TrainConfig", "batch_loss", "load_checkpoint", "loss", "score_entities",
    "train",
]

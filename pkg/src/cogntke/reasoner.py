"""Recursive encoder over layered digraphs.

Layer 1 realizes the global shallow pass (one-hop over the whole history),
layers 2..L the local deep pass (windowed multi-hop).  Both share one edge
pipeline: a gated message function conditioned on the query relation, a
query-aware attention softmax per destination, in-degree-scaled aggregation,
and a GRU state update.  Entity states start at zero and live in per-layer
maps keyed by entity id; the final map is what the decoder scores.

Everything is vectorized over the edges of a layer, and multiple queries can
be encoded jointly by keying nodes as (query index, entity id) pairs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .digraph import DST, REL, SRC, TIME, TcrDigraph
from .encoding import LEAKY_SLOPE, TemporalRelationEncoder
from .errors import EmptyNeighborhood, ShapeError


class ReasonerLayer(nn.Module):
    """Per-layer parameter set: attention, aggregation, message and update."""

    def __init__(self, embed_dim: int, dtype: torch.dtype = torch.float32):
        super().__init__()
        d = embed_dim
        self.embed_dim = d
        self.attn_src = nn.Linear(d, d, bias=False, dtype=dtype)
        self.attn_rel = nn.Linear(d, d, bias=False, dtype=dtype)
        self.attn_query = nn.Linear(d, d, bias=False, dtype=dtype)
        self.attn_out = nn.Linear(d, 1, bias=False, dtype=dtype)
        self.aggregate_proj = nn.Linear(d, d, bias=False, dtype=dtype)
        self.msg_update_gate = nn.Linear(3 * d, d, dtype=dtype)
        self.msg_forget_gate = nn.Linear(3 * d, d, dtype=dtype)
        self.msg_candidate = nn.Linear(d, d, dtype=dtype)
        self.state_update = nn.GRUCell(d, d, dtype=dtype)
        self.act = nn.LeakyReLU(LEAKY_SLOPE)

    def message(self, h_src: torch.Tensor, h_rt: torch.Tensor,
                h_q: torch.Tensor) -> torch.Tensor:
        """Gated message m for each edge row; all inputs [E, d]."""
        if not (h_src.shape == h_rt.shape == h_q.shape) or h_src.shape[-1] != self.embed_dim:
            raise ShapeError(
                f"message inputs must all be [*, {self.embed_dim}], got "
                f"{tuple(h_src.shape)}, {tuple(h_rt.shape)}, {tuple(h_q.shape)}"
            )
        x = torch.cat([h_src, h_rt, h_q], dim=-1)
        update = torch.sigmoid(self.msg_update_gate(x))
        forget = torch.sigmoid(self.msg_forget_gate(x))
        candidate = torch.tanh(self.msg_candidate(h_rt + forget * h_src))
        return (1.0 - update) * h_src + update * candidate

    def attention_logits(self, h_src: torch.Tensor, h_rt: torch.Tensor,
                         h_q: torch.Tensor) -> torch.Tensor:
        """Pre-softmax edge scores in (0, 1); shape [E]."""
        z = self.act(self.attn_src(h_src) + self.attn_rel(h_rt) + self.attn_query(h_q))
        return torch.sigmoid(self.attn_out(z)).squeeze(-1)

    def aggregate(self, weighted_sum: torch.Tensor, indegree: torch.Tensor,
                  prev_state: torch.Tensor) -> torch.Tensor:
        """Project the attention-weighted message sum, scale, and GRU-update."""
        scaled = self.aggregate_proj(weighted_sum) / torch.sqrt(indegree).unsqueeze(-1)
        return self.state_update(scaled, prev_state)


def qtr_gru_message(h_src, h_rt, h_q, layer: ReasonerLayer) -> torch.Tensor:
    """Single-edge message; vector inputs of size d."""
    out = layer.message(h_src.unsqueeze(0), h_rt.unsqueeze(0), h_q.unsqueeze(0))
    return out[0]


def attention_weights(in_edges, h_q, layer: ReasonerLayer) -> torch.Tensor:
    """Normalized weights over one destination's in-edges.

    in_edges is a sequence of (src state, temporal-relation vector) pairs.
    """
    if len(in_edges) == 0:
        raise EmptyNeighborhood("attention over zero in-edges")
    h_src = torch.stack([e[0] for e in in_edges])
    h_rt = torch.stack([e[1] for e in in_edges])
    hq = h_q.unsqueeze(0).expand(len(in_edges), -1)
    c = layer.attention_logits(h_src, h_rt, hq)
    ex = torch.exp(c)
    return ex / ex.sum()


def aggregate_and_update(weights, messages, prev_state, layer: ReasonerLayer) -> torch.Tensor:
    """New destination state from its weighted in-edge messages."""
    if len(weights) == 0:
        raise EmptyNeighborhood("aggregation over zero in-edges")
    weighted = (weights.unsqueeze(-1) * messages).sum(dim=0, keepdim=True)
    indegree = torch.as_tensor([float(len(weights))], dtype=weighted.dtype)
    return layer.aggregate(weighted, indegree, prev_state.unsqueeze(0))[0]


@dataclass
class EncodeResult:
    """Final-layer states plus per-layer edge attention for one query."""

    entities: np.ndarray          # sorted final-layer entity ids
    states: torch.Tensor          # [len(entities), d], rows align with entities
    edge_attention: list[np.ndarray]  # per layer, aligned with digraph.layers rows

    def state_map(self) -> dict[int, torch.Tensor]:
        return {int(e): self.states[i] for i, e in enumerate(self.entities)}


@dataclass
class BatchEncodeResult:
    """Joint encoding of several queries; nodes are (query, entity) pairs."""

    query_offsets: np.ndarray     # [B+1]; query b owns rows offsets[b]:offsets[b+1]
    entities: np.ndarray          # [N] entity ids, grouped by query
    states: torch.Tensor          # [N, d]
    edge_attention: list[list[np.ndarray]]  # [B][L], aligned with each digraph

    def per_query(self, b: int) -> tuple[np.ndarray, torch.Tensor]:
        lo, hi = self.query_offsets[b], self.query_offsets[b + 1]
        return self.entities[lo:hi], self.states[lo:hi]


class CognTKE(nn.Module):
    """Digraph encoder plus the linear entity decoder."""

    def __init__(self, num_entities: int, num_base_relations: int, embed_dim: int = 64,
                 time_dim: int = 32, num_layers: int = 4, num_positions: int = 512,
                 dtype: torch.dtype = torch.float32):
        super().__init__()
        self.num_entities = num_entities
        self.num_base_relations = num_base_relations
        self.embed_dim = embed_dim
        self.num_layers = num_layers
        num_relations = 2 * num_base_relations + 1
        self.temporal = TemporalRelationEncoder(
            num_relations, embed_dim, time_dim, num_positions, dtype=dtype)
        self.layers = nn.ModuleList(
            ReasonerLayer(embed_dim, dtype=dtype) for _ in range(num_layers))
        self.decoder = nn.Linear(embed_dim, 1, bias=False, dtype=dtype)
        self.dtype_ = dtype

    def query_vector(self, query_relations: torch.Tensor) -> torch.Tensor:
        """Query-relation embedding at relative offset zero, shared by layers."""
        zeros = torch.zeros_like(query_relations)
        return self.temporal(query_relations, zeros)

    def encode(self, g: TcrDigraph, query_relation: int) -> EncodeResult:
        batch = self.encode_batch([g], [query_relation])
        entities, states = batch.per_query(0)
        return EncodeResult(entities, states, batch.edge_attention[0])

    def encode_batch(self, digraphs: list[TcrDigraph],
                     query_relations) -> BatchEncodeResult:
        """Jointly encode many queries' digraphs.

        Per-edge work is kept to gathers and elementwise ops: each linear map
        over a concatenation is applied separately to its source-node, its
        (relation, offset) and its query block, then gathered and summed per
        edge, which is exactly the concatenated product re-associated.
        """
        if any(g.num_layers != self.num_layers for g in digraphs):
            raise ShapeError("digraph layer count differs from model layer count")
        n_queries = len(digraphs)
        ne = self.num_entities
        d = self.embed_dim
        rel_ids = torch.as_tensor(list(query_relations), dtype=torch.long)
        h_query = self.query_vector(rel_ids)          # [B, d]
        q_times = np.asarray([g.query_time for g in digraphs], dtype=np.int64)
        self.temporal.ensure_positions(int(q_times.max()) + 1)
        n_positions = self.temporal.num_positions

        # layer-0 nodes: one (query, source) pair each, zero states
        node_keys = np.asarray([b * ne + g.source for b, g in enumerate(digraphs)],
                               dtype=np.int64)
        states = torch.zeros(n_queries, d, dtype=self.dtype_)

        attn_per_query: list[list[np.ndarray]] = [[] for _ in range(n_queries)]
        for li, layer in enumerate(self.layers):
            edges = [g.layers[li] for g in digraphs]
            counts = np.asarray([len(e) for e in edges], dtype=np.int64)
            if counts.sum() == 0:
                # no edges anywhere at this layer: states carry over unchanged
                for b in range(n_queries):
                    attn_per_query[b].append(np.empty(0, dtype=np.float64))
                continue
            arr = np.concatenate([e for e in edges if len(e)], axis=0)
            edge_query = np.repeat(np.arange(n_queries, dtype=np.int64), counts)

            src_keys = edge_query * ne + arr[:, SRC]
            dst_keys = edge_query * ne + arr[:, DST]
            src_pos = np.searchsorted(node_keys, src_keys)
            if len(node_keys) == 0 or not np.array_equal(
                    node_keys[np.minimum(src_pos, len(node_keys) - 1)], src_keys):
                raise ShapeError("edge source missing from previous layer's entities")

            # temporal-relation vectors, one per distinct (relation, offset)
            offsets = q_times[edge_query] - arr[:, TIME]
            pair_keys = arr[:, REL] * n_positions + offsets
            uniq_pairs, pair_idx = np.unique(pair_keys, return_inverse=True)
            h_rt_u = self.temporal(
                torch.from_numpy(uniq_pairs // n_positions),
                torch.from_numpy(uniq_pairs % n_positions))

            w_u, w_f = layer.msg_update_gate.weight, layer.msg_forget_gate.weight
            by_src = torch.nn.functional.linear(
                states, torch.cat([w_u[:, :d], w_f[:, :d], layer.attn_src.weight]))
            by_rt = torch.nn.functional.linear(
                h_rt_u,
                torch.cat([w_u[:, d:2 * d], w_f[:, d:2 * d], layer.attn_rel.weight]),
                torch.cat([layer.msg_update_gate.bias, layer.msg_forget_gate.bias,
                           torch.zeros(d, dtype=self.dtype_)]))
            by_query = torch.nn.functional.linear(
                h_query, torch.cat([w_u[:, 2 * d:], w_f[:, 2 * d:],
                                    layer.attn_query.weight]))
            cand_rt = layer.msg_candidate(h_rt_u)    # W_c h_rt + b_c

            src_t = torch.from_numpy(src_pos)
            pair_t = torch.from_numpy(pair_idx)
            query_t = torch.from_numpy(edge_query)
            mixed = by_src[src_t] + by_rt[pair_t] + by_query[query_t]   # [E, 3d]
            h_src = states[src_t]

            update = torch.sigmoid(mixed[:, :d])
            forget = torch.sigmoid(mixed[:, d:2 * d])
            candidate = torch.tanh(cand_rt[pair_t]
                                   + torch.nn.functional.linear(
                                       forget * h_src, layer.msg_candidate.weight))
            messages = h_src + update * (candidate - h_src)
            logits = torch.sigmoid(
                layer.attn_out(layer.act(mixed[:, 2 * d:]))).squeeze(-1)

            new_keys, seg_ids = np.unique(dst_keys, return_inverse=True)
            seg = torch.from_numpy(seg_ids)
            n_nodes = len(new_keys)

            ex = torch.exp(logits)
            denom = torch.zeros(n_nodes, dtype=ex.dtype).index_add_(0, seg, ex)
            weights = ex / denom[seg]

            weighted_sum = torch.zeros(n_nodes, d, dtype=messages.dtype)
            weighted_sum.index_add_(0, seg, weights.unsqueeze(-1) * messages)
            indegree = torch.zeros(n_nodes, dtype=messages.dtype).index_add_(
                0, seg, torch.ones_like(weights))

            prev_pos = np.searchsorted(node_keys, new_keys)
            prev_pos_clipped = np.minimum(prev_pos, len(node_keys) - 1)
            found = node_keys[prev_pos_clipped] == new_keys
            prev = torch.zeros(n_nodes, d, dtype=states.dtype)
            if found.any():
                prev[torch.from_numpy(np.flatnonzero(found))] = \
                    states[torch.from_numpy(prev_pos_clipped[found])]

            states = layer.aggregate(weighted_sum, indegree, prev)
            node_keys = new_keys

            w = weights.detach().to(torch.float64).numpy()
            splits = np.cumsum(counts)[:-1]
            for b, chunk in enumerate(np.split(w, splits)):
                attn_per_query[b].append(chunk)

        query_idx = node_keys // ne
        entities = node_keys % ne
        offsets = np.searchsorted(query_idx, np.arange(n_queries + 1))
        return BatchEncodeResult(offsets, entities, states, attn_per_query)

"""Relative-time encodings and their fusion with relation embeddings.

Relative offsets are encoded with the fixed sinusoid table (entry (pos, 2i)
is sin(pos/10000^(2i/d_time)), entry (pos, 2i+1) the matching cosine); a
two-layer LeakyReLU FFN then mixes the offset vector into the relation
embedding with a residual, turning a (relation, time) pair into a single
temporal-relation vector.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from .errors import OutOfRange

LEAKY_SLOPE = 0.01


def time_encoding_table(num_positions: int, d_time: int) -> np.ndarray:
    """Fixed sinusoidal table of shape [num_positions, d_time], float64."""
    if d_time < 2 or d_time % 2:
        raise ValueError(f"d_time must be even and >= 2, got {d_time}")
    pos = np.arange(num_positions, dtype=np.float64)[:, None]
    i = np.arange(d_time // 2, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, 2.0 * i / d_time)
    table = np.empty((num_positions, d_time), dtype=np.float64)
    table[:, 0::2] = np.sin(angle)
    table[:, 1::2] = np.cos(angle)
    return table


def time_encode(t_bar: int, d_time: int, num_positions: int) -> np.ndarray:
    """Encoding row for one relative offset; offsets must stay inside the table."""
    if not 0 <= t_bar < num_positions:
        raise OutOfRange(f"relative time {t_bar} outside [0, {num_positions})")
    return time_encoding_table(t_bar + 1, d_time)[t_bar]


class TemporalRelationEncoder(nn.Module):
    """Learned relation embeddings fused with fixed relative-time vectors.

    forward(rel_ids, offsets) returns h_rt = FFN([h_r ; v_t]) + h_r with both
    linear layers LeakyReLU-activated; the residual keeps the relation's base
    semantics intact at any offset.
    """

    def __init__(self, num_relations: int, embed_dim: int, time_dim: int,
                 num_positions: int, dtype: torch.dtype = torch.float32):
        super().__init__()
        self.num_relations = num_relations
        self.embed_dim = embed_dim
        self.time_dim = time_dim
        self.relation_embedding = nn.Parameter(torch.empty(num_relations, embed_dim, dtype=dtype))
        nn.init.xavier_uniform_(self.relation_embedding)
        self.fuse_in = nn.Linear(embed_dim + time_dim, embed_dim, dtype=dtype)
        self.fuse_out = nn.Linear(embed_dim, embed_dim, dtype=dtype)
        self.act = nn.LeakyReLU(LEAKY_SLOPE)
        table = torch.from_numpy(time_encoding_table(num_positions, time_dim)).to(dtype)
        self.register_buffer("time_table", table)

    @property
    def num_positions(self) -> int:
        return self.time_table.shape[0]

    def ensure_positions(self, num_positions: int) -> None:
        """Regrow the fixed table; values are a pure function of the position."""
        if num_positions > self.num_positions:
            table = time_encoding_table(num_positions, self.time_dim)
            self.time_table = torch.from_numpy(table).to(self.time_table)

    def forward(self, rel_ids: torch.Tensor, offsets: torch.Tensor) -> torch.Tensor:
        if rel_ids.numel():
            if int(rel_ids.max()) >= self.num_relations or int(rel_ids.min()) < 0:
                raise OutOfRange("relation id outside augmented vocabulary")
            if int(offsets.max()) >= self.num_positions or int(offsets.min()) < 0:
                raise OutOfRange(
                    f"relative time outside [0, {self.num_positions}); call ensure_positions"
                )
        h_r = self.relation_embedding[rel_ids]
        v_t = self.time_table[offsets]
        x = torch.cat([h_r, v_t], dim=-1)
        return self.act(self.fuse_out(self.act(self.fuse_in(x)))) + h_r

    def embed_one(self, rel_id: int, t_bar: int) -> torch.Tensor:
        out = self.forward(torch.as_tensor([rel_id]), torch.as_tensor([t_bar]))
        return out[0]

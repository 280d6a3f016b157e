import numpy as np
import pytest
import torch

from cogntke.encoding import (TemporalRelationEncoder, time_encode,
                              time_encoding_table)
from cogntke.errors import OutOfRange
from oracles import time_encoding_scalar


def test_offset_zero_alternates_zero_one():
    row = time_encode(0, 8, 16)
    assert np.array_equal(row[0::2], np.zeros(4))
    assert np.array_equal(row[1::2], np.ones(4))


def test_entries_bounded():
    table = time_encoding_table(300, 16)
    assert (table >= -1).all() and (table <= 1).all()


def test_matches_scalar_recomputation():
    got = time_encode(7, 4, 16)
    assert np.allclose(got, time_encoding_scalar(7, 4), atol=1e-12)
    for pos in (1, 13, 400):
        assert np.allclose(time_encode(pos, 32, 512),
                           time_encoding_scalar(pos, 32), atol=1e-12)


def test_injective_over_offsets():
    table = time_encoding_table(501, 2)
    rows = {tuple(np.round(row, 9)) for row in table}
    assert len(rows) == 501


def test_out_of_range_offset():
    with pytest.raises(OutOfRange):
        time_encode(16, 4, 16)
    enc = TemporalRelationEncoder(5, 8, 4, num_positions=10)
    with pytest.raises(OutOfRange):
        enc(torch.tensor([0]), torch.tensor([10]))
    with pytest.raises(OutOfRange):
        enc(torch.tensor([5]), torch.tensor([0]))


def test_output_width_matches_embed_dim():
    enc = TemporalRelationEncoder(11, 64, 32, num_positions=50)
    out = enc(torch.tensor([3]), torch.tensor([7]))
    assert out.shape == (1, 64)


def test_residual_decomposition():
    torch.manual_seed(3)
    enc = TemporalRelationEncoder(9, 16, 8, num_positions=20, dtype=torch.float64)
    rel, t_bar = torch.tensor([4]), torch.tensor([6])
    h_r = enc.relation_embedding[rel]
    v_t = enc.time_table[t_bar]
    branch = enc.act(enc.fuse_out(enc.act(enc.fuse_in(torch.cat([h_r, v_t], dim=-1)))))
    assert torch.allclose(enc(rel, t_bar) - h_r, branch, atol=1e-12)


def test_seeded_reproducibility():
    outs = []
    for _ in range(2):
        torch.manual_seed(1234)
        enc = TemporalRelationEncoder(7, 32, 16, num_positions=30)
        outs.append(enc.embed_one(6, 3).detach().numpy())
    assert np.array_equal(outs[0], outs[1])


def test_table_regrowth_preserves_prefix():
    enc = TemporalRelationEncoder(5, 16, 8, num_positions=10)
    before = enc.time_table.clone()
    enc.ensure_positions(40)
    assert enc.num_positions == 40
    assert torch.equal(enc.time_table[:10], before)


def test_finite_difference_gradient():
    torch.manual_seed(7)
    enc = TemporalRelationEncoder(6, 8, 4, num_positions=12, dtype=torch.float64)
    rel, t_bar = torch.tensor([2]), torch.tensor([5])
    probe = torch.randn(8, dtype=torch.float64)

    def objective():
        return (enc(rel, t_bar)[0] * probe).sum()

    loss = objective()
    loss.backward()
    eps = 1e-6
    for param in (enc.fuse_in.weight, enc.fuse_in.bias, enc.fuse_out.weight):
        grad = param.grad
        flat = param.data.view(-1)
        for k in np.random.default_rng(0).choice(flat.numel(), size=5, replace=False):
            orig = flat[k].item()
            flat[k] = orig + eps
            up = objective().item()
            flat[k] = orig - eps
            down = objective().item()
            flat[k] = orig
            fd = (up - down) / (2 * eps)
            an = grad.view(-1)[k].item()
            assert abs(fd - an) <= 1e-6 * max(1.0, abs(fd))

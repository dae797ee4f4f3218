import numpy as np
import pytest

from firegnn.forecast import RolloutPlan, rollout
from firegnn.graph import WildfireGraph, normalize_adjacency
from firegnn.model import ModelConfig, forward, init_parameters

N = 6


def setup(seed=0, scale=0.5):
    cfg = ModelConfig(gcn_out=4, lstm_hidden=4, window=12, horizon=12)
    m = init_parameters(cfg, seed)
    m.params += np.random.default_rng(seed).normal(0, scale, m.params.size)
    rng = np.random.default_rng(seed + 1)
    w = np.triu(rng.random((N, N)) * (rng.random((N, N)) < 0.5), 1)
    adj = normalize_adjacency(WildfireGraph.from_dense(w + w.T))
    series = rng.random((N, 5, 60))
    return m, adj, series


def test_one_year_is_a_single_forward_call():
    m, adj, s = setup()
    plan = RolloutPlan(12, 1, s[:, :4])
    out = rollout(m, adj, s[:, :, 0:12], plan)
    assert np.array_equal(out, forward(m, adj, s[:, :, 0:12]))


def test_teacher_forced_equals_independent_blocks():
    m, adj, s = setup(1)
    plan = RolloutPlan(12, 4, s[:, :4])
    out = rollout(m, adj, s[:, :, 0:12], plan, teacher_fire=s[:, 4])
    for k in range(4):
        expect = forward(m, adj, s[:, :, 12 * k:12 * k + 12])
        assert np.array_equal(out[:, 12 * k:12 * k + 12], expect)


def test_three_years_match_manual_chaining():
    m, adj, s = setup(2)
    start = 24
    out = rollout(m, adj, s[:, :, 12:24], RolloutPlan(start, 3, s[:, :4]))
    x = s[:, :, 12:24].copy()
    blocks = []
    for k in range(3):
        p = forward(m, adj, x)
        blocks.append(p)
        lo = start + 12 * k
        x = np.concatenate([s[:, :4, lo:lo + 12], p[:, None, :]], axis=1)
    assert np.array_equal(out, np.concatenate(blocks, axis=1))
    assert out.shape == (N, 36)


def test_output_bounds_with_saturating_weights():
    m, adj, s = setup(3, scale=4.0)
    out = rollout(m, adj, s[:, :, 0:12], RolloutPlan(12, 4, s[:, :4]))
    assert out.min() >= 0 and out.max() <= 1


def test_block_causality():
    m, adj, s = setup(4)
    start, years = 12, 4
    base = rollout(m, adj, s[:, :, 0:12], RolloutPlan(start, years, s[:, :4]))
    for k in range(years - 1):
        cut = start + 12 * (k + 1)
        climate = s[:, :4].copy()
        climate[:, :, cut:] = np.random.default_rng(k).random(climate[:, :, cut:].shape)
        out = rollout(m, adj, s[:, :, 0:12], RolloutPlan(start, years, climate))
        assert np.array_equal(out[:, :cut - start], base[:, :cut - start])
        # the same perturbation one block earlier does reach later blocks
        climate[:, :, cut - 12:] = np.random.default_rng(k).random(climate[:, :, cut - 12:].shape)
        out = rollout(m, adj, s[:, :, 0:12], RolloutPlan(start, years, climate))
        assert not np.array_equal(out[:, cut - start:], base[:, cut - start:])


def test_insufficient_climate_is_range_error():
    _, _, s = setup()
    with pytest.raises(IndexError):
        RolloutPlan(12, 5, s[:, :4])
    with pytest.raises(IndexError):
        RolloutPlan(6, 1, s[:, :4])
    with pytest.raises(ValueError):
        RolloutPlan(12, 0, s[:, :4])


def test_window_mismatch_rejected():
    _, adj, s = setup()
    m = init_parameters(ModelConfig(gcn_out=2, lstm_hidden=2, window=6, horizon=12))
    with pytest.raises(ValueError):
        rollout(m, adj, s[:, :, 0:12], RolloutPlan(12, 1, s[:, :4]))

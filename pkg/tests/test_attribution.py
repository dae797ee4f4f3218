import numpy as np
import pytest

from firegnn.attribution import (
    IgConfig, box_stats, feature_importance, integrate_path, integrated_gradients, node_attribution,
    write_attributions, write_box_summary,
)
from firegnn.graph import WildfireGraph, identity_adjacency, normalize_adjacency
from firegnn.grid import LandMask
from firegnn.model import GcnLstmModel, ModelConfig, forward, init_parameters, input_gradient

from .helpers import central_difference, relative_error


def random_model(cfg, seed=0, scale=0.5):
    m = init_parameters(cfg, seed)
    m.params += np.random.default_rng(seed + 50).normal(0, scale, m.params.size)
    return m


def random_adj(n, seed=0, p=0.5):
    rng = np.random.default_rng(seed)
    w = np.triu(rng.random((n, n)) * (rng.random((n, n)) < p), 1)
    return normalize_adjacency(WildfireGraph.from_dense(w + w.T))


def raw(model, adj, x, node, horizon):
    return float(forward(model, adj, x, clamp=False)[node, horizon])


def planted_linear_model(window, eps=1e-3):
    """Output ~= sum_t (2 P_t - Hum_t) at every node, with no mixing across nodes.

    Identity graph activation routes P and Hum into one channel, forget and
    input gates are held open and the candidate tanh stays in its linear range.
    """
    cfg = ModelConfig(gcn_out=1, lstm_hidden=1, window=window, horizon=1, gcn_activation="identity")
    m = GcnLstmModel(cfg)
    v = m.views()
    v["gcn.W"][:, 0] = [0.0, -1.0, 0.0, 0.0, 2.0]
    v["lstm0.W"][2, 0, 0] = eps
    v["lstm0.b"][0] = 40.0  # forget
    v["lstm0.b"][1] = 40.0  # input
    v["lstm0.b"][3] = 40.0  # output
    v["head.W"][0, 0] = 1.0 / eps
    return m


def test_zero_input_gives_zero_attribution():
    cfg = ModelConfig(gcn_out=3, lstm_hidden=3, window=4, horizon=2)
    g = integrated_gradients(random_model(cfg), random_adj(5), np.zeros((5, 5, 4)), IgConfig(1, 1, 20))
    assert np.all(g == 0)


@pytest.mark.parametrize("steps", [1, 3, 50])
def test_linear_function_is_exact(steps):
    rng = np.random.default_rng(0)
    w = rng.standard_normal((4, 5, 3))
    x = rng.standard_normal((4, 5, 3))
    g = integrate_path(lambda batch: np.broadcast_to(w, batch.shape), x, steps=steps, chunk=2)
    np.testing.assert_allclose(g, w * x, rtol=1e-14, atol=1e-15)  # up to summation rounding


@pytest.mark.parametrize("seed", range(3))
def test_completeness_at_500_steps(seed):
    cfg = ModelConfig(gcn_out=4, lstm_hidden=4, lstm_layers=1 + seed % 2, window=4, horizon=3)
    m = random_model(cfg, seed)
    adj = random_adj(6, seed)
    x = np.random.default_rng(seed).random((6, 5, 4))
    node, horizon = seed % 6, seed % 3
    g = integrated_gradients(m, adj, x, IgConfig(node, horizon, 500))
    diff = raw(m, adj, x, node, horizon) - raw(m, adj, np.zeros_like(x), node, horizon)
    assert abs(g.sum() - diff) / (abs(diff) + 1e-12) < 5e-3


def test_refinement_shrinks_step_to_step_change():
    cfg = ModelConfig(gcn_out=4, lstm_hidden=4, window=3, horizon=2)
    m = random_model(cfg, 4, scale=1.0)
    adj = random_adj(5, 4)
    x = np.random.default_rng(4).random((5, 5, 3))
    ig = {s: integrated_gradients(m, adj, x, IgConfig(2, 1, s)) for s in (10, 20, 40)}
    assert np.abs(ig[40] - ig[20]).max() < np.abs(ig[20] - ig[10]).max()


def test_sensitivity_entries_at_baseline_are_zero():
    cfg = ModelConfig(gcn_out=3, lstm_hidden=3, window=3, horizon=2)
    x = np.random.default_rng(5).random((4, 5, 3))
    x[1, 2, :] = 0.0
    x[3, :, 1] = 0.0
    g = integrated_gradients(random_model(cfg, 5), random_adj(4, 5), x, IgConfig(0, 0, 30))
    assert np.all(g[1, 2, :] == 0) and np.all(g[3, :, 1] == 0)


def test_invalid_target_is_range_error():
    cfg = ModelConfig(gcn_out=2, lstm_hidden=2, window=2, horizon=2)
    m = random_model(cfg)
    x = np.ones((3, 5, 2))
    with pytest.raises(IndexError):
        integrated_gradients(m, None, x, IgConfig(3, 0))
    with pytest.raises(IndexError):
        integrated_gradients(m, None, x, IgConfig(0, 2))
    with pytest.raises(ValueError):
        IgConfig(steps=0)


@pytest.mark.parametrize("layers,act", [(1, "sigmoid"), (2, "tanh")])
def test_input_gradient_matches_finite_differences(layers, act):
    cfg = ModelConfig(gcn_out=3, lstm_hidden=3, lstm_layers=layers, window=3, horizon=2, gcn_activation=act)
    m = random_model(cfg, 6)
    adj = random_adj(5, 6)
    x = np.random.default_rng(6).random((5, 5, 3))
    value, grad = input_gradient(m, adj, x, 2, 1)
    assert value == raw(m, adj, x, 2, 1)
    fd = central_difference(lambda z: raw(m, adj, z, 2, 1), x)
    assert relative_error(grad, fd).max() < 1e-4


def test_identity_graph_keeps_attribution_local():
    cfg = ModelConfig(gcn_out=3, lstm_hidden=3, window=3, horizon=2)
    x = np.random.default_rng(7).random((5, 5, 3))
    vec, _ = node_attribution(random_model(cfg, 7), identity_adjacency(5), x, 2, 0, steps=20)
    assert vec[2] != 0
    assert np.all(np.delete(vec, 2) == 0)


def test_single_edge_reaches_neighbour_only():
    cfg = ModelConfig(gcn_out=3, lstm_hidden=3, window=3, horizon=2)
    m = random_model(cfg, 8)
    adj = normalize_adjacency(WildfireGraph.from_edges(3, [0], [1], [0.7]))
    x = np.random.default_rng(8).random((3, 5, 3))
    vec, _ = node_attribution(m, adj, x, 0, 1, steps=50)
    sens = central_difference(lambda z: raw(m, adj, z, 0, 1), x)
    assert np.abs(sens[1]).max() > 1e-6
    assert vec[1] != 0 and vec[2] == 0


def test_node_sum_equals_total_and_inflates():
    cfg = ModelConfig(gcn_out=3, lstm_hidden=3, window=3, horizon=2)
    m = random_model(cfg, 9)
    adj = random_adj(4, 9)
    x = np.random.default_rng(9).random((4, 5, 3))
    mask = LandMask.from_array(np.array([[1, 0, 1], [1, 1, 0]], dtype=bool))
    vec, img = node_attribution(m, adj, x, 1, 0, mask=mask, steps=40)
    total = integrated_gradients(m, adj, x, IgConfig(1, 0, 40)).sum()
    assert vec.sum() == pytest.approx(total, rel=1e-12, abs=1e-15)
    assert img.shape == (2, 3) and img[0, 1] == 0 and img[1, 2] == 0
    assert np.array_equal(img[mask.is_land], vec)


def test_ignored_feature_gets_zero_scores():
    cfg = ModelConfig(gcn_out=3, lstm_hidden=3, window=3, horizon=2)
    m = random_model(cfg, 10)
    m.views()["gcn.W"][2] = 0.0
    data = np.random.default_rng(10).random((2, 6, 5, 3))
    scores, stats = feature_importance(m, random_adj(6, 10), data, 4, 1, seed=0, steps=20)
    assert np.all(scores[:, 2] == 0)
    assert stats["R"] == {"min": 0.0, "q1": 0.0, "median": 0.0, "q3": 0.0, "max": 0.0}
    assert np.any(scores[:, 0] != 0)


def test_full_sample_is_a_permutation_of_per_node_runs():
    cfg = ModelConfig(gcn_out=3, lstm_hidden=3, window=3, horizon=2)
    m = random_model(cfg, 11)
    adj = random_adj(5, 11)
    x = np.random.default_rng(11).random((5, 5, 3))
    a, _ = feature_importance(m, adj, x, 5, 0, seed=3, steps=20)
    b, _ = feature_importance(m, adj, x, 5, 0, seed=3, steps=20)
    assert np.array_equal(a, b)
    per_node = np.array([integrated_gradients(m, adj, x, IgConfig(i, 0, 20)).sum(axis=(0, 2)) for i in range(5)])
    order = [int(np.flatnonzero(np.all(per_node == row, axis=1))[0]) for row in a]
    assert sorted(order) == list(range(5))


def test_feature_importance_errors():
    m = random_model(ModelConfig(gcn_out=2, lstm_hidden=2, window=2, horizon=1))
    with pytest.raises(ValueError):
        feature_importance(m, None, np.zeros((0, 3, 5, 2)), 1, 0)
    with pytest.raises(ValueError):
        feature_importance(m, None, np.ones((3, 5, 2)), 4, 0)


def test_planted_linear_model_ratio_and_sign():
    window, n = 6, 40
    m = planted_linear_model(window)
    rng = np.random.default_rng(12)
    data = rng.random((3, n, 5, window))
    data[:, :, 1] = data[:, :, 4]  # equal channel sums so attributions carry the coefficients
    x0 = data[0]
    expect = (2 * x0[:, 4] - x0[:, 1]).sum(axis=1)
    assert np.allclose(forward(m, None, x0, clamp=False)[:, 0], expect, rtol=1e-3)
    scores, stats = feature_importance(m, None, data, 25, 0, seed=1, steps=50)
    ratio = stats["P"]["median"] / stats["Hum"]["median"]
    assert abs(ratio - (-2.0)) < 0.05 * 2.0
    assert stats["Hum"]["median"] < 0 < stats["P"]["median"]
    assert np.all(scores[:, [0, 2, 3]] == 0)


def test_box_stats_and_writers(tmp_path):
    s = box_stats([1.0, 2.0, 3.0, 4.0, 5.0])
    assert s == {"min": 1.0, "q1": 2.0, "median": 3.0, "q3": 4.0, "max": 5.0}
    write_attributions(tmp_path / "a.csv", np.arange(2 * 5 * 2, dtype=float).reshape(2, 5, 2))
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert lines[0] == "node,feature,timestep,value"
    assert lines[1] == "0,T,0,0.0" and lines[-1] == "1,P,1,19.0"
    write_box_summary(tmp_path / "b.csv", {"T": s})
    assert (tmp_path / "b.csv").read_text().splitlines()[1] == "T,1.0,2.0,3.0,4.0,5.0"

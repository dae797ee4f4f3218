"""Integrated Gradients attributions for single forecast outputs."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .grid import FEATURES, LandMask, inflate
from .model import GcnLstmModel, input_gradient


@dataclass(frozen=True)
class IgConfig:
    node: int = 0
    horizon: int = 0
    steps: int = 50
    chunk: int = 32

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")


def integrate_path(grad_fn, x, baseline=None, steps: int = 50, chunk: int = 32) -> np.ndarray:
    """Midpoint-rule path integral of ``grad_fn`` from ``baseline`` to ``x``, times ``x - baseline``.

    ``grad_fn`` maps a batch ``(B, *x.shape)`` of path points to the batch
    of gradients of the scalar output.
    """
    x = np.asarray(x, dtype=np.float64)
    baseline = np.zeros_like(x) if baseline is None else np.asarray(baseline, dtype=np.float64)
    if baseline.shape != x.shape:
        raise ValueError(f"baseline {baseline.shape} does not match input {x.shape}")
    delta = x - baseline
    alphas = (np.arange(steps) + 0.5) / steps
    total = np.zeros_like(x)
    for lo in range(0, steps, chunk):
        a = alphas[lo:lo + chunk].reshape((-1,) + (1,) * x.ndim)
        grads = np.asarray(grad_fn(baseline + a * delta))
        total += grads.sum(axis=0)
    return delta * (total / steps)


def integrated_gradients(model: GcnLstmModel, adj, x, config: IgConfig, baseline=None) -> np.ndarray:
    """Attribution of the raw forecast ``Y[config.node, config.horizon]`` to
    every input entry; returns an array shaped like ``x`` ``(N, 5, T)``.

    The baseline defaults to all zeros.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if not (0 <= config.node < n and 0 <= config.horizon < model.config.horizon):
        raise IndexError(f"target ({config.node}, {config.horizon}) outside "
                         f"({n} nodes, {model.config.horizon} months)")

    def grad_fn(batch):
        return input_gradient(model, adj, batch, config.node, config.horizon)[1]

    return integrate_path(grad_fn, x, baseline, config.steps, config.chunk)


def box_stats(values) -> dict[str, float]:
    v = np.asarray(values, dtype=np.float64)
    q = np.percentile(v, [0, 25, 50, 75, 100])
    return dict(zip(("min", "q1", "median", "q3", "max"), map(float, q)))


def feature_importance(model: GcnLstmModel, adj, dataset, sample_size: int, horizon: int,
                       seed: int = 0, steps: int = 50):
    """IG scores per input feature for randomly sampled target nodes.

    ``dataset`` is one input tensor ``(N, 5, T)`` or a stack ``(W, N, 5, T)``;
    each sample draws a node (without replacement) and a window. A sample's
    score for a feature is its attribution summed over all source nodes and
    input months. Returns ``(scores, stats)``: ``scores`` is
    ``(sample_size, 5)`` and ``stats`` maps feature name to box-plot numbers.
    """
    data = np.asarray(dataset, dtype=np.float64)
    if data.ndim == 3:
        data = data[None]
    if data.size == 0 or data.shape[0] == 0:
        raise ValueError("empty dataset")
    n = data.shape[1]
    if not 1 <= sample_size <= n:
        raise ValueError(f"sample_size must be in [1, {n}], got {sample_size}")
    rng = np.random.default_rng(seed)
    nodes = rng.choice(n, size=sample_size, replace=False)
    windows = rng.integers(0, data.shape[0], size=sample_size)
    scores = np.empty((sample_size, data.shape[2]))
    for k, (node, w) in enumerate(zip(nodes, windows)):
        g = integrated_gradients(model, adj, data[w], IgConfig(int(node), horizon, steps))
        scores[k] = g.sum(axis=(0, 2))
    stats = {name: box_stats(scores[:, j]) for j, name in enumerate(FEATURES[:data.shape[2]])}
    return scores, stats


def node_attribution(model: GcnLstmModel, adj, x, node: int, horizon: int,
                     mask: LandMask | None = None, steps: int = 50):
    """Attribution per source node (summed over features and months) for one target.

    Returns ``(vector, image)``; ``image`` is the inflated grid when ``mask``
    is given, else ``None``.
    """
    g = integrated_gradients(model, adj, x, IgConfig(node, horizon, steps))
    vec = g.sum(axis=(1, 2))
    return vec, (inflate(vec, mask) if mask is not None else None)


def write_attributions(path, attributions) -> None:
    a = np.asarray(attributions)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node", "feature", "timestep", "value"])
        for i, j, t in np.ndindex(*a.shape):
            w.writerow([i, FEATURES[j], t, repr(float(a[i, j, t]))])


def write_box_summary(path, stats: dict) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "min", "q1", "median", "q3", "max"])
        for name, s in stats.items():
            w.writerow([name] + [repr(s[k]) for k in ("min", "q1", "median", "q3", "max")])

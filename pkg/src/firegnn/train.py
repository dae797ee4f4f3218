"""Loss, gradients, Adam, early-stopped training and the width/depth grid."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .model import GcnLstmModel, ModelConfig, backprop, forward_cached, init_parameters, save_checkpoint

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, size: int, **kwargs) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), **kwargs)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1000
    batch_size: int = 12
    patience: int = 50
    seed: int = 0
    lr: float = 0.001
    clip_norm: float | None = 5.0
    layers_grid: tuple[int, ...] = (1, 2)
    width_grid: tuple[int, ...] = (16, 32, 64)
    checkpoint_every: int = 0
    checkpoint_dir: str | None = None
    log_path: str | None = None
    record_time: bool = False

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.patience < 0:
            raise ValueError("patience must be >= 0")


@dataclass
class Windows:
    """Stacked training samples: inputs ``(W, N, D, T_in)``, targets ``(W, N, T_out)``."""

    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if self.inputs.shape[:2] != self.targets.shape[:2]:
            raise ValueError(f"inputs {self.inputs.shape} and targets {self.targets.shape} disagree")

    def __len__(self):
        return self.inputs.shape[0]

    def subset(self, idx) -> "Windows":
        return Windows(self.inputs[idx], self.targets[idx])

    @classmethod
    def concat(cls, parts) -> "Windows":
        parts = [p for p in parts if len(p)]
        if not parts:
            raise ValueError("no windows to concatenate")
        return cls(np.concatenate([p.inputs for p in parts]), np.concatenate([p.targets for p in parts]))


def make_windows(series, window: int, horizon: int, start: int = 0, stop: int | None = None,
                 stride: int = 1) -> Windows:
    """Slide over a ``(N, 5, time)`` feature series.

    Each sample takes months ``[s, s + window)`` as input and the fire channel
    of ``[s + window, s + window + horizon)`` as target; every month touched
    lies in ``[start, stop)``.
    """
    series = np.asarray(series, dtype=np.float64)
    stop = series.shape[-1] if stop is None else stop
    starts = list(range(start, stop - window - horizon + 1, stride))
    n, d = series.shape[:2]
    if not starts:
        return Windows(np.zeros((0, n, d, window)), np.zeros((0, n, horizon)))
    x = np.stack([series[:, :, s:s + window] for s in starts])
    y = np.stack([series[:, -1, s + window:s + window + horizon] for s in starts])
    return Windows(x, y)


def mse_loss(pred, target) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"prediction {pred.shape} and target {target.shape} differ")
    return float(np.mean((pred - target) ** 2))


def backward(model: GcnLstmModel, adj, x, target, params=None):
    """MSE of the raw (unclamped) forecast and its gradient for every parameter."""
    y, cache = forward_cached(model, adj, x, params)
    target = np.asarray(target, dtype=np.float64).reshape(y.shape)
    resid = y - target
    loss = float(np.mean(resid ** 2))
    grad, _ = backprop(model, adj, cache, 2.0 * resid / resid.size, params)
    return loss, grad


def adam_step(params, grads, state: AdamState):
    """Bias-corrected Adam update; returns ``(new_params, new_state)``."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ValueError("params, grads and optimizer state must align")
    t = state.t + 1
    m = state.beta1 * state.m + (1 - state.beta1) * grads
    v = state.beta2 * state.v + (1 - state.beta2) * grads * grads
    m_hat = m / (1 - state.beta1 ** t)
    v_hat = v / (1 - state.beta2 ** t)
    new = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new, replace(state, m=m, v=v, t=t)


def clip_by_norm(grads, max_norm: float | None):
    if max_norm is None:
        return grads
    norm = float(np.sqrt(grads @ grads))
    if norm > max_norm:
        return grads * (max_norm / norm)
    return grads


def evaluate(model: GcnLstmModel, adj, windows: Windows, params=None, chunk: int = 64) -> float:
    """Raw-output MSE over all windows, processed in fixed chunks."""
    total, count = 0.0, 0
    for lo in range(0, len(windows), chunk):
        y, _ = forward_cached(model, adj, windows.inputs[lo:lo + chunk], params)
        r = y - windows.targets[lo:lo + chunk]
        total += float(np.sum(r * r))
        count += r.size
    return total / count


@dataclass
class History:
    epochs: list = field(default_factory=list)
    best_epoch: int = -1
    best_val: float = float("inf")

    @property
    def train_mse(self):
        return [e["train_mse"] for e in self.epochs]

    @property
    def val_mse(self):
        return [e["val_mse"] for e in self.epochs]


def _open_log(path):
    if path is None:
        return None, None
    fh = open(path, "w", newline="")
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["epoch", "train_mse", "val_mse", "elapsed_ms"])
    return fh, writer


def train(model: GcnLstmModel, adj, train_windows: Windows, val_windows: Windows | None,
          config: TrainConfig = TrainConfig()):
    """Mini-batch Adam with early stopping on validation MSE.

    Returns ``(best_model, history)`` where ``best_model`` holds the parameters
    of the epoch with the lowest validation MSE (training MSE when no
    validation windows are given).
    """
    if train_windows is None or len(train_windows) == 0:
        raise ValueError("training set is empty")
    has_val = val_windows is not None and len(val_windows) > 0
    rng = np.random.default_rng(config.seed)
    params = model.params.copy()
    state = AdamState.zeros(params.size, lr=config.lr)
    history = History()
    best_params = params.copy()
    waited = 0
    fh, writer = _open_log(config.log_path)
    t0 = time.perf_counter()
    try:
        for epoch in range(1, config.epochs + 1):
            order = rng.permutation(len(train_windows))
            sq_sum, count = 0.0, 0
            for lo in range(0, len(order), config.batch_size):
                idx = order[lo:lo + config.batch_size]
                loss, grad = backward(model, adj, train_windows.inputs[idx], train_windows.targets[idx], params)
                params, state = adam_step(params, clip_by_norm(grad, config.clip_norm), state)
                sq_sum += loss * idx.size
                count += idx.size
            train_mse = sq_sum / count
            val_mse = evaluate(model, adj, val_windows, params) if has_val else train_mse
            elapsed = int((time.perf_counter() - t0) * 1000) if config.record_time else 0
            history.epochs.append({"epoch": epoch, "train_mse": train_mse, "val_mse": val_mse,
                                   "elapsed_ms": elapsed})
            if writer is not None:
                writer.writerow([epoch, repr(train_mse), repr(val_mse), elapsed])
            if val_mse < history.best_val:
                history.best_val, history.best_epoch = val_mse, epoch
                best_params = params.copy()
                waited = 0
            else:
                waited += 1
            if config.checkpoint_every and config.checkpoint_dir and epoch % config.checkpoint_every == 0:
                save_checkpoint(Path(config.checkpoint_dir) / f"epoch{epoch:05d}", GcnLstmModel(model.config, params))
            if waited > config.patience:
                log.info("early stop at epoch %d (best %d, val %.6g)", epoch, history.best_epoch, history.best_val)
                break
    finally:
        if fh is not None:
            fh.close()
    return GcnLstmModel(model.config, best_params), history


def grid_search(adj, train_windows: Windows, val_windows: Windows, base: ModelConfig,
                config: TrainConfig = TrainConfig(), candidates=None):
    """Train every (layers, width) combination and keep the lowest validation MSE.

    ``candidates`` overrides the grid with an explicit list of model configs.
    Returns ``(best_config, best_model, results)``; ``results`` lists
    ``(config, best_val_mse)`` in evaluation order.
    """
    if candidates is None:
        candidates = [replace(base, lstm_layers=layers, gcn_out=width, lstm_hidden=width)
                      for layers in config.layers_grid for width in config.width_grid]
    if not candidates:
        raise ValueError("empty hyperparameter grid")
    results = []
    best = None
    for cfg in candidates:
        model, hist = train(init_parameters(cfg, config.seed), adj, train_windows, val_windows, config)
        results.append((cfg, hist.best_val))
        log.info("grid point layers=%d width=%d: val mse %.6g", cfg.lstm_layers, cfg.lstm_hidden, hist.best_val)
        if best is None or hist.best_val < best[2]:
            best = (cfg, model, hist.best_val)
    log.info("selected layers=%d width=%d", best[0].lstm_layers, best[0].lstm_hidden)
    return best[0], best[1], results

"""GCN-LSTM forecaster: one graph-convolution layer, a node-shared LSTM and a
linear multi-horizon head.

All parameters live in one flat float64 vector. Canonical layout, in order:

    gcn.W       (D, G)            graph filter
    lstm{l}.W   (4, H, in_l + H)  gate matrices, gates ordered f, i, C, o;
                                  columns are [input, previous hidden]
    lstm{l}.b   (4, H)            gate biases, same gate order
    head.W      (T_out, H)
    head.b      (T_out,)

with ``in_0 = G`` and ``in_l = H`` for stacked layers. Every block is stored
row-major. Views returned by :meth:`GcnLstmModel.views` alias the flat vector.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

GATES = ("f", "i", "C", "o")
ACTIVATIONS = ("sigmoid", "relu", "tanh", "identity")


@dataclass(frozen=True)
class ModelConfig:
    input_features: int = 5
    gcn_out: int = 32
    lstm_layers: int = 1
    lstm_hidden: int = 32
    window: int = 12
    horizon: int = 12
    gcn_activation: str = "sigmoid"

    def __post_init__(self):
        for name in ("input_features", "gcn_out", "lstm_layers", "lstm_hidden", "window", "horizon"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.gcn_activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.gcn_activation!r}; choose from {ACTIVATIONS}")

    def layer_input(self, layer: int) -> int:
        return self.gcn_out if layer == 0 else self.lstm_hidden


def parameter_layout(config: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    d, g, h = config.input_features, config.gcn_out, config.lstm_hidden
    layout = [("gcn.W", (d, g))]
    for layer in range(config.lstm_layers):
        layout.append((f"lstm{layer}.W", (4, h, config.layer_input(layer) + h)))
        layout.append((f"lstm{layer}.b", (4, h)))
    layout.append(("head.W", (config.horizon, h)))
    layout.append(("head.b", (config.horizon,)))
    return layout


def parameter_count(config: ModelConfig) -> int:
    return sum(int(np.prod(shape)) for _, shape in parameter_layout(config))


def parameter_slices(config: ModelConfig) -> dict[str, tuple[slice, tuple[int, ...]]]:
    out, start = {}, 0
    for name, shape in parameter_layout(config):
        size = int(np.prod(shape))
        out[name] = (slice(start, start + size), shape)
        start += size
    return out


def parameter_name(config: ModelConfig, index: int) -> str:
    """Human-readable label for flat index ``index``, e.g. ``lstm0.W[1, 2, 3]``."""
    for name, (sl, shape) in parameter_slices(config).items():
        if sl.start <= index < sl.stop:
            idx = ", ".join(str(int(k)) for k in np.unravel_index(index - sl.start, shape))
            return f"{name}[{idx}]"
    raise IndexError(index)


class GcnLstmModel:
    def __init__(self, config: ModelConfig, params=None):
        self.config = config
        n = parameter_count(config)
        if params is None:
            params = np.zeros(n)
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (n,):
            raise ValueError(f"expected {n} parameters for {config}, got shape {params.shape}")
        self.params = params.copy()

    def views(self, params=None) -> dict[str, np.ndarray]:
        flat = self.params if params is None else params
        return {name: flat[sl].reshape(shape) for name, (sl, shape) in parameter_slices(self.config).items()}

    def copy(self) -> "GcnLstmModel":
        return GcnLstmModel(self.config, self.params)

    def __repr__(self):
        return f"GcnLstmModel({self.config}, {self.params.size} params)"


def glorot_bound(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def init_parameters(config: ModelConfig, seed: int = 0) -> GcnLstmModel:
    """Glorot-uniform weights, zero biases, forget-gate bias 1."""
    rng = np.random.default_rng(seed)
    model = GcnLstmModel(config)
    v = model.views()
    d, g = config.input_features, config.gcn_out
    v["gcn.W"][...] = rng.uniform(-1, 1, (d, g)) * glorot_bound(d, g)
    for layer in range(config.lstm_layers):
        w = v[f"lstm{layer}.W"]
        fan_in = w.shape[2]
        for k in range(4):
            w[k] = rng.uniform(-1, 1, w[k].shape) * glorot_bound(fan_in, config.lstm_hidden)
        v[f"lstm{layer}.b"][0] = 1.0
    v["head.W"][...] = rng.uniform(-1, 1, v["head.W"].shape) * glorot_bound(config.lstm_hidden, config.horizon)
    return model


# --- elementary pieces -------------------------------------------------------

def sigmoid(x):
    # tanh form: no overflow and faster than expit here
    x = np.asarray(x, dtype=np.float64)
    return 0.5 * np.tanh(0.5 * x) + 0.5


def activate(name: str, s):
    s = np.asarray(s, dtype=np.float64)
    if name == "sigmoid":
        return sigmoid(s)
    if name == "relu":
        return np.maximum(s, 0.0)
    if name == "tanh":
        return np.tanh(s)
    if name == "identity":
        return s.copy()
    raise ValueError(f"unknown activation {name!r}")


def activation_grad(name: str, z):
    """Derivative of the activation expressed through its output ``z``."""
    if name == "sigmoid":
        return z * (1.0 - z)
    if name == "relu":
        return (z > 0).astype(np.float64)
    if name == "tanh":
        return 1.0 - z * z
    if name == "identity":
        return np.ones_like(z)
    raise ValueError(f"unknown activation {name!r}")


def propagate(adj, x: np.ndarray) -> np.ndarray:
    """Apply the normalized adjacency along the node axis (axis -3 of ``(..., N, D, T)``).

    ``adj=None`` skips the product entirely; that is the plain-LSTM path.
    """
    if adj is None:
        return x
    n = x.shape[-3]
    if adj.shape != (n, n):
        raise ValueError(f"adjacency {adj.shape} does not match {n} nodes")
    moved = np.moveaxis(x, -3, 0)
    flat = moved.reshape(n, -1)
    out = adj @ flat
    out = np.asarray(out.toarray() if sp.issparse(out) else out)
    return np.moveaxis(out.reshape(moved.shape), 0, -3)


def gcn_forward(adj, x_t, weight, activation: str = "sigmoid") -> np.ndarray:
    """``activation(adj @ x_t @ weight)`` for one time step; ``x_t`` is ``(N, D)``."""
    x_t = np.asarray(x_t, dtype=np.float64)
    weight = np.asarray(weight, dtype=np.float64)
    if x_t.ndim != 2 or weight.ndim != 2 or x_t.shape[1] != weight.shape[0]:
        raise ValueError(f"cannot multiply features {x_t.shape} by filter {weight.shape}")
    if adj is not None and adj.shape != (x_t.shape[0],) * 2:
        raise ValueError(f"adjacency {adj.shape} does not match {x_t.shape[0]} nodes")
    ax = x_t if adj is None else np.asarray(adj @ x_t)
    return activate(activation, ax @ weight)


def lstm_step(z_t, h_prev, c_prev, weights, biases):
    """One LSTM update for a batch of rows.

    ``weights`` is ``(4, H, in + H)`` and ``biases`` ``(4, H)`` in gate order
    f, i, C, o. Returns ``(h_t, c_t)``.
    """
    h_t, c_t, _ = _lstm_step(z_t, h_prev, c_prev, weights, biases)
    return h_t, c_t


def _lstm_step(z_t, h_prev, c_prev, weights, biases):
    z_t = np.asarray(z_t, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    c_prev = np.asarray(c_prev, dtype=np.float64)
    hidden = weights.shape[1]
    if weights.shape[2] != z_t.shape[-1] + hidden or h_prev.shape[-1] != hidden or c_prev.shape != h_prev.shape:
        raise ValueError(
            f"LSTM shapes disagree: input {z_t.shape}, h {h_prev.shape}, c {c_prev.shape}, W {weights.shape}")
    inp = np.concatenate([z_t, h_prev], axis=-1)
    pre = inp @ weights.reshape(4 * hidden, -1).T + biases.reshape(-1)
    act = sigmoid(pre)
    f = act[..., :hidden]
    i = act[..., hidden:2 * hidden]
    o = act[..., 3 * hidden:]
    g = np.tanh(pre[..., 2 * hidden:3 * hidden])
    c_t = f * c_prev + i * g
    tc = np.tanh(c_t)
    h_t = o * tc
    return h_t, c_t, (inp, f, i, g, o, c_prev, tc)


# --- full model ----------------------------------------------------------------

def _as_batch(model: GcnLstmModel, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 3
    if single:
        x = x[None]
    cfg = model.config
    if x.ndim != 4 or x.shape[2] != cfg.input_features or x.shape[3] != cfg.window:
        raise ValueError(
            f"input of shape {x.shape} does not match (N, {cfg.input_features}, {cfg.window})")
    return x, single


def forward_cached(model: GcnLstmModel, adj, x, params=None):
    """Raw head output ``(B, N, T_out)`` plus everything the reverse pass needs."""
    x, single = _as_batch(model, x)
    cfg = model.config
    v = model.views(params)
    b, n = x.shape[:2]
    ax = propagate(adj, x)                                    # (B, N, D, T)
    s = np.swapaxes(ax, -1, -2) @ v["gcn.W"]                  # (B, N, T, G)
    z = activate(cfg.gcn_activation, s)
    seq = z.reshape(b * n, cfg.window, cfg.gcn_out)
    layers = []
    for layer in range(cfg.lstm_layers):
        w, bias = v[f"lstm{layer}.W"], v[f"lstm{layer}.b"]
        h = np.zeros((b * n, cfg.lstm_hidden))
        c = np.zeros_like(h)
        outs, steps = [], []
        for t in range(cfg.window):
            h, c, cache = _lstm_step(seq[:, t], h, c, w, bias)
            outs.append(h)
            steps.append(cache)
        layers.append(steps)
        seq = np.stack(outs, axis=1)
    h_last = seq[:, -1]
    y = h_last @ v["head.W"].T + v["head.b"]
    cache = {"ax": ax, "z": z, "layers": layers, "h_last": h_last, "shape": (b, n), "single": single}
    return y.reshape(b, n, cfg.horizon), cache


def forward(model: GcnLstmModel, adj, x, clamp: bool = True) -> np.ndarray:
    """Predict the next ``horizon`` months of burnt fraction for every node.

    ``x`` is ``(N, D, window)`` or a batch ``(B, N, D, window)``. Outputs are
    clipped to [0, 1] unless ``clamp`` is false.
    """
    y, cache = forward_cached(model, adj, x)
    if clamp:
        y = np.clip(y, 0.0, 1.0)
    return y[0] if cache["single"] else y


def backprop(model: GcnLstmModel, adj, cache, dy, params=None, want_params=True, want_inputs=False):
    """Reverse pass given ``dy = dLoss/dY`` with ``Y`` the raw head output.

    Returns ``(grad_params or None, grad_inputs or None)``; input gradients
    have the batch shape ``(B, N, D, T)``.
    """
    cfg = model.config
    v = model.views(params)
    b, n = cache["shape"]
    m = b * n
    hidden = cfg.lstm_hidden
    grads = {name: np.zeros(shape) for name, shape in parameter_layout(cfg)}
    dy = np.asarray(dy, dtype=np.float64).reshape(m, cfg.horizon)

    grads["head.W"] = dy.T @ cache["h_last"]
    grads["head.b"] = dy.sum(axis=0)
    # gradient w.r.t. the output sequence of the current (top-down) layer
    d_seq = np.zeros((m, cfg.window, hidden))
    d_seq[:, -1] = dy @ v["head.W"]

    for layer in reversed(range(cfg.lstm_layers)):
        w = v[f"lstm{layer}.W"].reshape(4 * hidden, -1)
        n_in = cfg.layer_input(layer)
        dw = np.zeros_like(w)
        db = np.zeros(4 * hidden)
        d_input = np.zeros((m, cfg.window, n_in))
        dh_next = np.zeros((m, hidden))
        dc_next = np.zeros((m, hidden))
        for t in reversed(range(cfg.window)):
            inp, f, i, g, o, c_prev, tc = cache["layers"][layer][t]
            dh = d_seq[:, t] + dh_next
            do = dh * tc
            dc = dc_next + dh * o * (1.0 - tc * tc)
            da = np.concatenate([
                dc * c_prev * f * (1.0 - f),
                dc * g * i * (1.0 - i),
                dc * i * (1.0 - g * g),
                do * o * (1.0 - o),
            ], axis=1)
            dw += da.T @ inp
            db += da.sum(axis=0)
            d_inp = da @ w
            d_input[:, t] = d_inp[:, :n_in]
            dh_next = d_inp[:, n_in:]
            dc_next = dc * f
        grads[f"lstm{layer}.W"] = dw.reshape(4, hidden, -1)
        grads[f"lstm{layer}.b"] = db.reshape(4, hidden)
        d_seq = d_input

    z = cache["z"]
    ds = d_seq.reshape(z.shape) * activation_grad(cfg.gcn_activation, z)     # (B, N, T, G)
    ax = cache["ax"]
    grads["gcn.W"] = np.einsum("bndt,bntg->dg", ax, ds)
    grad_inputs = None
    if want_inputs:
        d_ax = np.swapaxes(ds @ v["gcn.W"].T, -1, -2)                        # (B, N, D, T)
        grad_inputs = propagate(None if adj is None else adj.T, d_ax)
    grad_params = None
    if want_params:
        grad_params = np.concatenate([grads[name].ravel() for name, _ in parameter_layout(cfg)])
        bad = np.flatnonzero(~np.isfinite(grad_params))
        if bad.size:
            labels = ", ".join(parameter_name(cfg, int(k)) for k in bad[:5])
            raise FloatingPointError(f"non-finite gradient at {bad.size} parameters, first: {labels}")
    return grad_params, grad_inputs


def input_gradient(model: GcnLstmModel, adj, x, node: int, horizon: int):
    """Raw output ``Y[node, horizon]`` and its gradient w.r.t. every input.

    Works on a single tensor or a batch; returns values of shape ``(B,)``
    and gradients ``(B, N, D, T)`` for a batch.
    """
    y, cache = forward_cached(model, adj, x)
    b, n = cache["shape"]
    if not (0 <= node < n and 0 <= horizon < model.config.horizon):
        raise IndexError(f"target ({node}, {horizon}) outside ({n} nodes, {model.config.horizon} months)")
    dy = np.zeros_like(y)
    dy[:, node, horizon] = 1.0
    _, gx = backprop(model, adj, cache, dy, want_params=False, want_inputs=True)
    values = y[:, node, horizon]
    if cache["single"]:
        return float(values[0]), gx[0]
    return values, gx


# --- checkpoints -------------------------------------------------------------

def save_checkpoint(path, model: GcnLstmModel) -> None:
    """Write ``<path>.json`` (config + layout) and ``<path>.bin`` (little-endian f8)."""
    path = Path(path)
    desc = {"config": asdict(model.config),
            "layout": [[name, list(shape)] for name, shape in parameter_layout(model.config)],
            "dtype": "<f8", "count": int(model.params.size)}
    path.with_suffix(".bin").write_bytes(model.params.astype("<f8").tobytes())
    path.with_suffix(".json").write_text(json.dumps(desc, indent=2, sort_keys=True) + "\n")


def load_checkpoint(path) -> GcnLstmModel:
    path = Path(path)
    desc_path, bin_path = path.with_suffix(".json"), path.with_suffix(".bin")
    for p in (desc_path, bin_path):
        if not p.exists():
            raise FileNotFoundError(f"missing checkpoint file {p}")
    desc = json.loads(desc_path.read_text())
    config = ModelConfig(**desc["config"])
    params = np.frombuffer(bin_path.read_bytes(), dtype="<f8").astype(np.float64)
    return GcnLstmModel(config, params)

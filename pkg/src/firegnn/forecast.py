"""Year-by-year autoregressive rollout."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import GcnLstmModel, forward


@dataclass(frozen=True)
class RolloutPlan:
    """``climate`` is ``(N, 4, months)`` in feature order T, Hum, R, L."""

    start: int
    years: int
    climate: np.ndarray
    months_per_block: int = 12

    def __post_init__(self):
        if self.years < 1:
            raise ValueError("years must be >= 1")
        need = self.start + self.months_per_block * self.years
        if self.climate.ndim != 3 or self.climate.shape[1] != 4:
            raise ValueError(f"climate must be (N, 4, months), got {self.climate.shape}")
        if self.start < self.months_per_block or self.climate.shape[2] < need:
            raise IndexError(
                f"climate covers {self.climate.shape[2]} months; rollout from {self.start} "
                f"for {self.years} years needs {need}")


def rollout(model: GcnLstmModel, adj, seed_tensor, plan: RolloutPlan, teacher_fire=None) -> np.ndarray:
    """Forecast ``plan.years`` consecutive blocks, feeding each block's clamped
    fire forecast into the next block's input.

    ``seed_tensor`` is the observed ``(N, 5, 12)`` block ending at
    ``plan.start``. Climate channels always come from ``plan.climate``. When
    ``teacher_fire`` (``(N, months)``, absolute month index) is given, the
    observed fire is fed back instead of predictions.
    Returns ``(N, 12 * years)``.
    """
    cfg = model.config
    block = plan.months_per_block
    if cfg.window != block or cfg.horizon != block:
        raise ValueError(f"rollout needs window == horizon == {block}, model has {cfg.window}/{cfg.horizon}")
    x = np.array(seed_tensor, dtype=np.float64)
    if x.shape != (plan.climate.shape[0], cfg.input_features, block):
        raise ValueError(f"seed tensor {x.shape} does not fit {plan.climate.shape[0]} nodes")
    out = []
    for k in range(plan.years):
        pred = forward(model, adj, x, clamp=True)
        out.append(pred)
        lo = plan.start + block * k
        nxt = np.empty_like(x)
        nxt[:, :4] = plan.climate[:, :, lo:lo + block]
        nxt[:, 4] = pred if teacher_fire is None else teacher_fire[:, lo:lo + block]
        x = nxt
    return np.concatenate(out, axis=1)

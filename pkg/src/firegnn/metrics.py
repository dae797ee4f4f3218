"""MSE, RRMSE, global SSIM and PSNR over image sequences."""

from __future__ import annotations

import csv
import math
from dataclasses import astuple, dataclass

import numpy as np

from .grid import LandMask, inflate


@dataclass(frozen=True)
class MetricReport:
    mse: float
    rrmse: float
    ssim: float
    psnr: float  # math.inf flags a perfect prediction

    def as_row(self):
        return astuple(self)


def _pair(pred, true):
    pred = np.asarray(pred, dtype=np.float64)
    true = np.asarray(true, dtype=np.float64)
    if pred.shape != true.shape:
        raise ValueError(f"prediction {pred.shape} and truth {true.shape} differ")
    return pred, true


def mse(pred, true) -> float:
    pred, true = _pair(pred, true)
    return float(np.mean((pred - true) ** 2))


def rrmse(pred, true) -> float:
    """Root MSE relative to the mean of the ground truth."""
    pred, true = _pair(pred, true)
    mean = float(np.mean(true))
    if mean == 0:
        raise ZeroDivisionError("ground truth has zero mean; RRMSE undefined")
    return math.sqrt(mse(pred, true)) / mean


def ssim(pred, true, data_range: float = 1.0) -> float:
    """SSIM from whole-sequence statistics (no sliding window).

    Standard deviations and covariance use the population (1/n) convention.
    """
    pred, true = _pair(pred, true)
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    mu_p, mu_t = pred.mean(), true.mean()
    dp, dt = pred - mu_p, true - mu_t
    var_p, var_t = np.mean(dp * dp), np.mean(dt * dt)
    cov = np.mean(dp * dt)
    num = (2 * (mu_p * mu_t) + c1) * (2 * cov + c2)
    den = (mu_p ** 2 + mu_t ** 2 + c1) * (var_p + var_t + c2)
    return float(num / den)


def psnr(pred, true) -> float:
    """``10 log10(MAX^2 / MSE)`` with MAX the ground-truth maximum; ``inf`` when MSE is 0."""
    pred, true = _pair(pred, true)
    err = mse(pred, true)
    if err == 0:
        return math.inf
    peak = float(np.max(true))
    return 10.0 * math.log10(peak * peak / err)


def report(pred, true) -> MetricReport:
    pred, true = _pair(pred, true)
    mean = float(np.mean(true))
    return MetricReport(mse(pred, true), rrmse(pred, true) if mean != 0 else math.nan,
                        ssim(pred, true), psnr(pred, true))


def evaluate_nodes(pred, true, mask: LandMask, land_only: bool = False) -> MetricReport:
    """Metrics for ``(N, months)`` node series.

    By default both are inflated to ``(months, lat, lon)`` with zero-filled
    ocean cells; ``land_only`` scores the land nodes alone.
    """
    pred, true = _pair(pred, true)
    if land_only:
        return report(pred, true)
    return report(inflate(pred.T, mask), inflate(true.T, mask))


def yearly_report(pred, true, months_per_year: int = 12) -> list[MetricReport]:
    """Per-year metrics for time-major sequences ``(months, ...)``."""
    pred, true = _pair(pred, true)
    if pred.shape[0] % months_per_year:
        raise IndexError(f"{pred.shape[0]} months is not a whole number of {months_per_year}-month years")
    return [report(pred[k:k + months_per_year], true[k:k + months_per_year])
            for k in range(0, pred.shape[0], months_per_year)]


def _fmt(x: float) -> str:
    return "inf" if math.isinf(x) else repr(float(x))


def write_report_csv(path, overall: MetricReport, yearly=()) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["period", "mse", "rrmse", "ssim", "psnr"])
        w.writerow(["all"] + [_fmt(v) for v in overall.as_row()])
        for k, rep in enumerate(yearly):
            w.writerow([f"year{k + 1}"] + [_fmt(v) for v in rep.as_row()])


def format_table(reports: dict[str, MetricReport]) -> str:
    """Metrics as rows (MSE, RRMSE, SSIM, PSNR), one column per model."""
    names = list(reports)
    width = max([12] + [len(n) + 2 for n in names])
    lines = ["Metric".ljust(8) + "".join(n.rjust(width) for n in names)]
    for label, attr in (("MSE", "mse"), ("RRMSE", "rrmse"), ("SSIM", "ssim"), ("PSNR", "psnr")):
        cells = []
        for n in names:
            v = getattr(reports[n], attr)
            cells.append(("inf" if math.isinf(v) else f"{v:.6f}").rjust(width))
        lines.append(label.ljust(8) + "".join(cells))
    return "\n".join(lines) + "\n"

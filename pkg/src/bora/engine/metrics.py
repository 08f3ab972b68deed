"""Per-run curves, regret, the paired sign test and CSV aggregation."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import binomtest

from .runlog import RunLog


class RegretUnavailable(ValueError):
    """The objective has no known optimum, so regret is undefined."""


class UndefinedTest(ValueError):
    pass


def _values(log_or_values) -> np.ndarray:
    if isinstance(log_or_values, RunLog):
        return log_or_values.values
    return np.asarray(log_or_values, dtype=float)


def max_so_far_curve(log_or_values) -> np.ndarray:
    """Best value found after each sample."""
    return np.maximum.accumulate(_values(log_or_values))


def cumulative_regret(log_or_values, f_star: float | None = None) -> np.ndarray:
    """Running sum over samples of ``f_star`` minus the best value found so far."""
    if f_star is None and isinstance(log_or_values, RunLog):
        f_star = log_or_values.header.get("best_known")
    if f_star is None:
        raise RegretUnavailable("the objective has no known optimum")
    return np.cumsum(f_star - max_so_far_curve(log_or_values))


@dataclass(frozen=True)
class SignTestResult:
    wins: int
    losses: int
    ties: int
    p_value: float
    p_adjusted: float


def sign_test(regrets_a, regrets_b, n_comparisons: int = 1) -> SignTestResult:
    """Two-sided sign test on paired per-task regrets; lower regret wins.

    Ties are dropped. The Bonferroni-adjusted p is ``min(1, p * n_comparisons)``.
    """
    a = np.asarray(regrets_a, dtype=float)
    b = np.asarray(regrets_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired regrets must be 1-D arrays of equal length")
    if n_comparisons < 1:
        raise ValueError("n_comparisons must be >= 1")
    wins, losses = int(np.sum(a < b)), int(np.sum(a > b))
    ties = len(a) - wins - losses
    if wins + losses == 0:
        raise UndefinedTest("every pair is tied; the sign test is undefined")
    p = float(binomtest(wins, wins + losses, 0.5, alternative="two-sided").pvalue)
    return SignTestResult(wins, losses, ties, p, min(1.0, p * n_comparisons))


def mean_stderr(curves: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    curves = np.asarray(curves, dtype=float)
    n = curves.shape[0]
    sd = curves.std(axis=0, ddof=1) if n > 1 else np.zeros(curves.shape[1:])
    return curves.mean(axis=0), sd / math.sqrt(n)


def curves_csv(logs: list[RunLog], method: str | None = None) -> str:
    """Long-format rows ``method, trial, sample, y, y_max`` for plotting."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "trial", "sample", "y", "y_max"])
    for trial, lg in enumerate(logs):
        name = method or lg.header.get("method")
        t = lg.header.get("config", {}).get("seed", trial)
        for i, (y, best) in enumerate(zip(lg.values, max_so_far_curve(lg))):
            w.writerow([name, t, i + 1, repr(float(y)), repr(float(best))])
    return buf.getvalue()


def band_csv(curves_by_method: dict[str, np.ndarray], stderr_multiplier: float = 0.25) -> str:
    """Mean max-so-far curve with a ``± stderr_multiplier * stderr`` band per method."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "sample", "mean", "lower", "upper"])
    for name, curves in curves_by_method.items():
        mean, se = mean_stderr(curves)
        for i, (m, s) in enumerate(zip(mean, se)):
            w.writerow([name, i + 1, repr(float(m)), repr(float(m - stderr_multiplier * s)),
                        repr(float(m + stderr_multiplier * s))])
    return buf.getvalue()

"""Monte-Carlo error bars for correlated chains."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Estimate:
    mean: float
    std_error: float
    n_effective: float
    n_samples: int
    tau_int: float = float("nan")

    def __str__(self) -> str:
        return f"{self.mean:.6g} +/- {self.std_error:.2g} (n_eff={self.n_effective:.0f})"

    def as_dict(self) -> dict:
        return {
            "mean": self.mean,
            "std_error": self.std_error,
            "n_effective": self.n_effective,
            "n_samples": self.n_samples,
            "tau_int": self.tau_int,
        }


def _batches(x: np.ndarray, num_batches: int | None = None) -> np.ndarray:
    n = len(x)
    b = num_batches or max(2, int(math.isqrt(n)))
    size = n // b
    if size < 1:
        raise ValueError(f"need at least {b} samples for {b} batches, got {n}")
    return x[n - b * size :].reshape(b, size, *x.shape[1:]).mean(axis=1)


def integrated_autocorr_time(x, c: float = 5.0) -> float:
    """Integrated autocorrelation time with Sokal's automatic window."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 4 or np.var(x) == 0.0:
        return 1.0
    y = x - x.mean()
    f = np.fft.rfft(y, n=2 * n)
    acf = np.fft.irfft(f * np.conjugate(f))[:n]
    acf /= acf[0]
    taus = 2.0 * np.cumsum(acf) - 1.0
    window = np.arange(n) >= c * taus
    m = int(np.argmax(window)) if window.any() else n - 1
    return float(max(taus[m], 1.0))


def batch_means(x, num_batches: int | None = None) -> Estimate:
    """Mean with a batch-means standard error (sqrt(N) batches by default)."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 4:
        raise ValueError(f"need at least 4 samples, got {n}")
    means = _batches(x, num_batches)
    b = len(means)
    se = float(np.std(means, ddof=1) / math.sqrt(b))
    var = float(np.var(x, ddof=1))
    if se > 0:
        n_eff = min(float(n), var / se**2)
    else:
        n_eff = float(n)
    return Estimate(float(x.mean()), se, n_eff, n, integrated_autocorr_time(x))


def function_of_means(func, *series, num_batches: int | None = None, rel_step: float = 1e-6) -> Estimate:
    """Estimate ``func(mean(a), mean(b), ...)`` by the delta method.

    The linearized influence series is fed through ``batch_means`` so the
    error bar accounts for autocorrelation.
    """
    xs = [np.asarray(s, dtype=float) for s in series]
    means = np.array([x.mean() for x in xs])
    value = float(func(*means))
    grad = np.empty(len(xs))
    for k in range(len(xs)):
        step = rel_step * max(1.0, abs(means[k]))
        hi, lo = means.copy(), means.copy()
        hi[k] += step
        lo[k] -= step
        grad[k] = (func(*hi) - func(*lo)) / (2 * step)
    influence = sum(g * (x - m) for g, x, m in zip(grad, xs, means))
    lin = batch_means(influence, num_batches)
    return Estimate(value, lin.std_error, lin.n_effective, lin.n_samples, lin.tau_int)


def merge_estimates(estimates) -> Estimate:
    """Inverse-variance weighted combination of independent estimates."""
    estimates = list(estimates)
    if len(estimates) == 1:
        return estimates[0]
    se = np.array([e.std_error for e in estimates])
    if np.any(se <= 0):
        w = np.ones(len(estimates))
        mean = float(np.mean([e.mean for e in estimates]))
        err = 0.0
    else:
        w = 1.0 / se**2
        mean = float(np.sum(w * [e.mean for e in estimates]) / w.sum())
        err = float(1.0 / math.sqrt(w.sum()))
    return Estimate(
        mean,
        err,
        float(sum(e.n_effective for e in estimates)),
        int(sum(e.n_samples for e in estimates)),
        float(np.mean([e.tau_int for e in estimates])),
    )


def importance_ratio(values, log_weights) -> tuple[Estimate, float]:
    """Self-normalized importance estimate of ``E_w[values]`` for independent draws.

    Returns the estimate and the Kish effective sample size of the weights.
    """
    values = np.asarray(values, dtype=float)
    lw = np.asarray(log_weights, dtype=float)
    w = np.exp(lw - lw.max())
    wsum = w.sum()
    mean = float(np.sum(w * values) / wsum)
    ess = float(wsum**2 / np.sum(w**2))
    # delta-method variance of a ratio of means
    nw = w / w.mean()
    var = float(np.mean((nw * (values - mean)) ** 2))
    se = math.sqrt(var / len(values))
    return Estimate(mean, se, ess, len(values)), ess

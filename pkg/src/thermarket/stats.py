"""Estimators used by the samplers and experiments.

Histograms, an exponential-law Kolmogorov-Smirnov statistic, blocked
standard errors, integrated autocorrelation times, and log-log scaling
fits. All functions are pure and parallel-safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Histogram",
    "ks_exponential",
    "BlockingResult",
    "blocked_stderr",
    "AutocorrResult",
    "autocorr_time",
    "loglog_slope",
    "histogram_differential_entropy",
]


@dataclass(frozen=True)
class Histogram:
    """Binned counts with strictly increasing edges; counts sum to total."""

    edges: np.ndarray
    counts: np.ndarray
    total: int

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float)
        counts = np.asarray(self.counts, dtype=np.int64)
        if edges.ndim != 1 or counts.ndim != 1 or edges.size != counts.size + 1:
            raise ValueError("need len(edges) == len(counts) + 1")
        finite = edges[np.isfinite(edges)]
        if np.any(np.diff(edges) <= 0):
            raise ValueError("edges must be strictly increasing")
        if counts.min(initial=0) < 0:
            raise ValueError("counts must be non-negative")
        if int(counts.sum()) != self.total:
            raise ValueError("counts must sum to total")
        edges.setflags(write=False)
        counts.setflags(write=False)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_samples(cls, data, edges=None) -> "Histogram":
        """Bin samples; Freedman-Diaconis width by default. With explicit
        edges, samples outside the range go into two overflow bins so the
        total stays exact."""
        x = np.asarray(data, dtype=float).ravel()
        if x.size == 0:
            raise ValueError("cannot histogram an empty sample")
        if edges is None:
            edges = freedman_diaconis_edges(x)
            counts, _ = np.histogram(x, bins=edges)
            # np.histogram treats the last edge as closed, so nothing is lost
            return cls(edges=edges, counts=counts, total=int(x.size))
        edges = np.asarray(edges, dtype=float)
        counts, _ = np.histogram(x, bins=edges)
        under = int(np.count_nonzero(x < edges[0]))
        over = int(np.count_nonzero(x > edges[-1]))
        if under or over:
            edges = np.concatenate([[-np.inf], edges, [np.inf]])
            counts = np.concatenate([[under], counts, [over]])
        return cls(edges=edges, counts=counts, total=int(x.size))

    def rows(self):
        """(bin_left, bin_right, count) triples, the shared CSV layout."""
        return [
            (float(self.edges[i]), float(self.edges[i + 1]), int(self.counts[i]))
            for i in range(self.counts.size)
        ]


def freedman_diaconis_edges(x: np.ndarray, max_bins: int = 10_000) -> np.ndarray:
    q75, q25 = np.percentile(x, [75, 25])
    iqr = q75 - q25
    lo, hi = float(x.min()), float(x.max())
    if hi == lo:
        return np.array([lo - 0.5, hi + 0.5])
    width = 2.0 * iqr / x.size ** (1.0 / 3.0)
    if width <= 0:
        nbins = int(math.ceil(math.sqrt(x.size)))
    else:
        nbins = int(math.ceil((hi - lo) / width))
    nbins = min(max(nbins, 1), max_bins)
    return np.linspace(lo, hi, nbins + 1)


def ks_exponential(sample, mean: float) -> float:
    """Sup-norm distance between the empirical CDF and 1 - exp(-x/mean).

    Requires at least 100 non-negative samples and a positive mean.
    """
    x = np.asarray(sample, dtype=float).ravel()
    if x.size < 100:
        raise ValueError("need at least 100 samples")
    if mean <= 0:
        raise ValueError("mean must be positive")
    if x.min() < 0:
        raise ValueError("samples must be non-negative")
    x = np.sort(x)
    cdf = 1.0 - np.exp(-x / mean)
    n = x.size
    upper = np.arange(1, n + 1) / n - cdf
    lower = cdf - np.arange(0, n) / n
    return float(max(upper.max(), lower.max()))


@dataclass(frozen=True)
class BlockingResult:
    """Blocked standard error with the per-level diagnostics."""

    stderr: float
    block_sizes: np.ndarray
    estimates: np.ndarray
    converged: bool

    def __float__(self) -> float:
        return self.stderr


def blocked_stderr(series, min_blocks: int = 32) -> BlockingResult:
    """Standard error of the mean by block doubling.

    Blocks are doubled while at least min_blocks remain; the estimate is
    read off where the per-level stderr stops growing (the plateau). A
    correlated series that never flattens is flagged converged=False and
    the largest estimate is returned.
    """
    x = np.asarray(series, dtype=float).ravel()
    if x.size < 64:
        raise ValueError("need at least 64 samples")
    sizes, estimates = [], []
    block = 1
    while x.size >= max(min_blocks, 2):
        est = float(np.std(x, ddof=1) / math.sqrt(x.size))
        sizes.append(block)
        estimates.append(est)
        half = (x.size // 2) * 2
        x = 0.5 * (x[0:half:2] + x[1:half:2])
        block *= 2
    sizes = np.asarray(sizes)
    estimates = np.asarray(estimates)
    converged = False
    value = estimates[-1]
    for k in range(len(estimates) - 1):
        if estimates[k + 1] <= estimates[k] * 1.03:
            converged = True
            value = float(max(estimates[k], estimates[k + 1]))
            break
    return BlockingResult(
        stderr=float(value), block_sizes=sizes, estimates=estimates, converged=converged
    )


@dataclass(frozen=True)
class AutocorrResult:
    """Integrated autocorrelation time with the self-consistency flag."""

    tau: float
    window_ok: bool

    def __float__(self) -> float:
        return self.tau


def autocorr_time(series) -> AutocorrResult:
    """Integrated autocorrelation time, tau = 1/2 + sum of rho_t.

    Uses the pairwise positive-sequence cutoff: lags are summed while the
    paired autocorrelations rho_{2m} + rho_{2m+1} stay positive. For an
    uncorrelated series tau is near 0.5. window_ok reports whether the
    series is at least ten times longer than the returned tau.
    """
    x = np.asarray(series, dtype=float).ravel()
    n = x.size
    if n < 8:
        raise ValueError("series too short")
    x = x - x.mean()
    var = float(np.dot(x, x) / n)
    if var == 0.0:
        raise ValueError("autocorrelation time is undefined for a constant series")
    nfft = 1
    while nfft < 2 * n:
        nfft *= 2
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conjugate(f), nfft)[:n].real / n
    rho = acov / acov[0]
    tau = 0.5
    m = 0
    while 2 * m + 2 < n:
        gamma = rho[2 * m + 1] + rho[2 * m + 2]
        if gamma <= 0:
            break
        tau += gamma
        m += 1
    return AutocorrResult(tau=float(tau), window_ok=n >= 10 * tau)


def loglog_slope(xs, ys) -> tuple[float, float]:
    """Least-squares slope of ln y on ln x, with its standard error.

    All inputs must be strictly positive; at least three points.
    """
    x = np.asarray(xs, dtype=float).ravel()
    y = np.asarray(ys, dtype=float).ravel()
    if x.size != y.size or x.size < 3:
        raise ValueError("need at least three matching points")
    if x.min() <= 0 or y.min() <= 0:
        raise ValueError("log-log fit requires strictly positive values")
    lx, ly = np.log(x), np.log(y)
    lx0 = lx - lx.mean()
    sxx = float(np.dot(lx0, lx0))
    if sxx == 0:
        raise ValueError("x values must not all coincide")
    slope = float(np.dot(lx0, ly) / sxx)
    resid = ly - ly.mean() - slope * lx0
    dof = x.size - 2
    sigma2 = float(np.dot(resid, resid)) / dof if dof > 0 else 0.0
    return slope, math.sqrt(sigma2 / sxx)


def histogram_differential_entropy(samples) -> float:
    """Differential entropy estimate -sum p ln(p / width) from a
    Freedman-Diaconis histogram of the samples (in nats)."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 1000:
        raise ValueError("need at least 1000 samples for a histogram entropy")
    edges = freedman_diaconis_edges(x)
    counts, _ = np.histogram(x, bins=edges)
    widths = np.diff(edges)
    p = counts / counts.sum()
    mask = p > 0
    return float(-np.sum(p[mask] * np.log(p[mask] / widths[mask])))

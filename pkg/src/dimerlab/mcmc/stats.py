"""Chain statistics: integrated autocorrelation time via self-consistent
windowing, standard errors via blocking, and the ChainEstimate record."""

import math
from dataclasses import dataclass

import numpy as np


class StatsError(Exception):
    pass


@dataclass(frozen=True)
class ChainEstimate:
    """Monte Carlo estimate with blocking error and autocorrelation time.

    flag is None for a healthy estimate, 'degenerate' for a constant
    series, 'too-short' when the series is under ~100 tau_int."""

    mean: float
    stderr: float
    tau_int: float
    n_samples: int
    seed: int = None
    flag: str = None


def autocorrelation_function(series, max_lag=None):
    """Normalized autocovariance rho(t) for t = 0 .. max_lag, FFT-based."""
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n < 2:
        raise StatsError("need at least 2 samples")
    x = x - x.mean()
    var = float(np.dot(x, x)) / n
    if var == 0.0:
        raise StatsError("degenerate (constant) series")
    if max_lag is None:
        max_lag = n // 2
    nfft = 1
    while nfft < 2 * n:
        nfft *= 2
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conj(f))[: max_lag + 1] / n
    return acov / acov[0]


def integrated_autocorrelation_time(series, c=6.0):
    """Sokal windowing: tau = 1/2 + sum_{t<=W} rho(t) with the smallest
    window W satisfying W >= c * tau(W). An i.i.d. series gives 1/2."""
    rho = autocorrelation_function(series)
    tau = 0.5
    for t in range(1, len(rho)):
        tau += float(rho[t])
        if t >= c * tau:
            return max(tau, 0.5)
    return max(tau, 0.5)


def blocking_stderr(series, block_length):
    x = np.asarray(series, dtype=float)
    n_blocks = len(x) // block_length
    if n_blocks < 2:
        raise StatsError("series too short for the requested block length")
    trimmed = x[: n_blocks * block_length]
    means = trimmed.reshape(n_blocks, block_length).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_blocks))


def estimate_autocorrelation(series, seed=None, c=6.0):
    """ChainEstimate for a scalar series: mean, blocking stderr with
    block length set by tau_int, and tau_int itself."""
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n < 2:
        raise StatsError("need at least 2 samples")
    mean = float(x.mean())
    if np.all(x == x[0]):
        return ChainEstimate(mean=mean, stderr=0.0, tau_int=float("nan"),
                             n_samples=n, seed=seed, flag="degenerate")
    tau = integrated_autocorrelation_time(x, c=c)
    block = int(max(1, min(math.ceil(10 * tau), n // 20)))
    try:
        stderr = blocking_stderr(x, block)
    except StatsError:
        stderr = float(x.std(ddof=1) / math.sqrt(n))
    flag = "too-short" if n < 100 * tau else None
    return ChainEstimate(mean=mean, stderr=stderr, tau_int=float(tau),
                         n_samples=n, seed=seed, flag=flag)


def naive_stderr_from_tau(series, tau):
    """sqrt(2 tau var / n): the windowed-tau error estimate, used to
    cross-check blocking."""
    x = np.asarray(series, dtype=float)
    return float(math.sqrt(2.0 * tau * x.var(ddof=1) / len(x)))


def jackknife_bins(samples, n_bins=50):
    """Bin a (n, ...) sample array along axis 0 into n_bins bin means."""
    arr = np.asarray(samples, dtype=float)
    n = arr.shape[0]
    n_bins = min(n_bins, n)
    if n_bins < 2:
        raise StatsError("need at least 2 bins")
    length = n // n_bins
    trimmed = arr[: n_bins * length]
    return trimmed.reshape((n_bins, length) + arr.shape[1:]).mean(axis=1)


def jackknife_estimate(bins, statistic):
    """Jackknife mean and stderr of statistic(bin-mean-array -> float)
    computed from leave-one-out resamples of the bin means."""
    bins = np.asarray(bins, dtype=float)
    n = bins.shape[0]
    full = statistic(bins.mean(axis=0))
    loo = np.empty(n)
    total = bins.sum(axis=0)
    for i in range(n):
        loo[i] = statistic((total - bins[i]) / (n - 1))
    err = math.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2))
    bias_corrected = n * full - (n - 1) * loo.mean()
    return float(bias_corrected), float(err)

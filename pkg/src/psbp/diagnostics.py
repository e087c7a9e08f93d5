"""Chain diagnostics: effective sample size, Monte Carlo error and the
marginal-conditional vs successive-conditional (Geweke) comparison."""

import numpy as np


def autocorrelation(x):
    """Sample autocorrelation at every lag (FFT based)."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    x = x - x.mean()
    f = np.fft.rfft(x, n=2 * n)
    acov = np.fft.irfft(f * np.conj(f))[:n] / n
    if acov[0] <= 0:
        return np.zeros(n)
    return acov / acov[0]


def effective_sample_size(x):
    """ESS with Geyer's initial monotone positive-sequence truncation."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 4 or np.ptp(x) == 0:
        return float(n)
    rho = autocorrelation(x)
    # sums of consecutive pairs, truncated at the first non-positive pair
    m = (n - 1) // 2
    pairs = rho[0:2 * m:2] + rho[1:2 * m + 1:2]
    stop = np.nonzero(pairs <= 0)[0]
    k = stop[0] if len(stop) else len(pairs)
    pairs = np.minimum.accumulate(pairs[:k]) if k else pairs[:0]
    tau = -1.0 + 2.0 * pairs.sum()
    tau = max(tau, 1.0 / np.log10(max(n, 10)))
    return float(n / tau)


def mcse(x):
    x = np.asarray(x, dtype=float)
    return float(x.std(ddof=1) / np.sqrt(effective_sample_size(x)))


def geweke_z(independent, chain):
    """z statistic comparing the mean of i.i.d. draws with the mean of an
    autocorrelated chain (chain error uses its ESS)."""
    a = np.asarray(independent, dtype=float)
    b = np.asarray(chain, dtype=float)
    va = a.var(ddof=1) / len(a)
    vb = b.var(ddof=1) / effective_sample_size(b)
    den = np.sqrt(va + vb)
    if den == 0:
        return 0.0
    return float((a.mean() - b.mean()) / den)


def geweke_table(independent, chain):
    """z scores for first and second moments of every monitored column.

    ``independent`` and ``chain`` map names to 1-d arrays.
    """
    out = {}
    for k in independent:
        out[f"E[{k}]"] = geweke_z(independent[k], chain[k])
        out[f"E[{k}^2]"] = geweke_z(np.square(independent[k]), np.square(chain[k]))
    return out

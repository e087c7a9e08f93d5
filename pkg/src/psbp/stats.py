"""Special functions and random variates used by the sampler.

All random draws go through :class:`numpy.random.Generator` objects created by
:func:`rng_stream`, which maps a ``(seed, stream_id)`` pair to an independent
PCG64 stream.  Two calls with the same pair reproduce the same sequence.
"""

import math

import numpy as np
from scipy import special

RngStream = np.random.Generator

# Phi(gamma) is kept inside these bounds when building sticks
PROB_FLOOR = 1e-300
PROB_CEIL = 1.0 - 1e-16


def rng_stream(seed, stream_id=0):
    """Return an independent generator for ``(seed, stream_id)``.

    Distinct ``stream_id`` values give statistically independent streams
    (numpy ``SeedSequence`` spawn keys).
    """
    seed = int(seed)
    stream_id = int(stream_id)
    if seed < 0 or stream_id < 0:
        raise ValueError("seed and stream_id must be non-negative")
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(stream_id,))
    return np.random.Generator(np.random.PCG64(ss))


def rng_state(rng):
    """JSON-serialisable snapshot of a generator's bit state."""
    st = rng.bit_generator.state
    return {"bit_generator": st["bit_generator"],
            "state": {k: int(v) for k, v in st["state"].items()},
            "has_uint32": int(st["has_uint32"]),
            "uinteger": int(st["uinteger"])}


def restore_rng(state):
    rng = np.random.Generator(np.random.PCG64())
    rng.bit_generator.state = state
    return rng


def _check_finite(x, name="x"):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def normal_cdf(x):
    """Standard normal cdf, accurate in both tails."""
    arr = _check_finite(x)
    out = special.ndtr(arr)
    return float(out) if out.ndim == 0 else out


def normal_logcdf(x):
    arr = np.asarray(x, dtype=float)
    out = special.log_ndtr(arr)
    return float(out) if out.ndim == 0 else out


def normal_sf(x):
    """Upper tail 1 - Phi(x), computed without cancellation."""
    arr = _check_finite(x)
    out = special.ndtr(-arr)
    return float(out) if out.ndim == 0 else out


def normal_inv_cdf(p):
    """Inverse of :func:`normal_cdf` on the open interval (0, 1)."""
    arr = np.asarray(p, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise ValueError("p must lie strictly inside (0, 1)")
    out = special.ndtri(arr)
    return float(out) if out.ndim == 0 else out


def normal_logpdf(y, mean, precision):
    """Log density of N(mean, precision) with precision = 1 / variance."""
    return 0.5 * (np.log(precision) - math.log(2 * math.pi)) \
        - 0.5 * precision * (y - mean) ** 2


def normal_pdf(y, mean, precision):
    return np.exp(normal_logpdf(y, mean, precision))


def _std_trunc_above(a, u):
    # standard normal restricted to [a, inf), inverse cdf on u in (0, 1)
    a = np.asarray(a, dtype=float)
    u = np.asarray(u, dtype=float)
    out = np.empty(np.broadcast(a, u).shape)
    a, u = np.broadcast_arrays(a, u)
    lo = a < 0.0
    if np.any(lo):
        pa = special.ndtr(a[lo])
        out[lo] = special.ndtri(pa + u[lo] * (1.0 - pa))
    hi = ~lo
    if np.any(hi):
        # reflect: x = -Phi^{-1}(u * Phi(-a)), evaluated in log space so that
        # deep tails (a >> 6) do not underflow
        logp = special.log_ndtr(-a[hi]) + np.log(u[hi])
        out[hi] = -special.ndtri_exp(logp)
    return out


def sample_truncated_normal(mean, precision, side, rng, size=None):
    """Draw from N(mean, precision) truncated to one side of zero.

    Parameters
    ----------
    mean : float or array
    precision : float or array, strictly positive
    side : {"above", "below"}
        ``"above"`` restricts to ``[0, inf)``, ``"below"`` to ``(-inf, 0)``.
    rng : numpy Generator
    size : optional output shape when ``mean`` and ``precision`` are scalars.

    Returns
    -------
    float or ndarray satisfying the sign constraint exactly.
    """
    mean = np.asarray(mean, dtype=float)
    precision = np.asarray(precision, dtype=float)
    if np.any(precision <= 0) or np.any(~np.isfinite(precision)):
        raise ValueError("precision must be positive and finite")
    if side not in ("above", "below"):
        raise ValueError("side must be 'above' or 'below'")
    shape = np.broadcast(mean, precision).shape if size is None else size
    sd = 1.0 / np.sqrt(precision)
    u = rng.random(shape)
    # u in (0, 1); guard against the 0.0 draw
    u = np.where(u == 0.0, np.finfo(float).tiny, u)
    if side == "above":
        x = mean + sd * _std_trunc_above(-mean / sd, u)
        x = np.maximum(x, 0.0)
    else:
        x = mean - sd * _std_trunc_above(mean / sd, u)
        x = np.minimum(x, -np.finfo(float).smallest_subnormal)
    return float(x) if np.ndim(x) == 0 else x


def sample_truncated_normal_signs(mean, above, rng):
    """Unit-precision truncated normals with a per-entry side mask.

    ``above[i]`` True means ``[0, inf)``, False means ``(-inf, 0)``.
    """
    mean = np.asarray(mean, dtype=float)
    above = np.asarray(above, dtype=bool)
    u = rng.random(mean.shape)
    u = np.where(u == 0.0, np.finfo(float).tiny, u)
    sign = np.where(above, 1.0, -1.0)
    # lower side is the reflection of an upper-side draw around -mean
    x = sign * (sign * mean + _std_trunc_above(-sign * mean, u))
    return np.where(above, np.maximum(x, 0.0),
                    np.minimum(x, -np.finfo(float).smallest_subnormal))


def sample_gamma(shape, rate, rng, size=None):
    """Gamma draw with density b^a / Gamma(a) x^(a-1) exp(-b x)."""
    shape = np.asarray(shape, dtype=float)
    rate = np.asarray(rate, dtype=float)
    if np.any(shape <= 0) or np.any(rate <= 0):
        raise ValueError("shape and rate must be positive")
    x = rng.gamma(shape, 1.0 / rate, size=size)
    x = np.maximum(x, np.finfo(float).tiny)
    return float(x) if np.ndim(x) == 0 else x

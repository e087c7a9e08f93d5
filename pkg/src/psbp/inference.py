"""Posterior predictive densities and the decisions built on them.

Because kernel atoms do not depend on the predictors, any predictive density
(single setting, marginalised over a set of records, or a baseline) is, per
posterior draw, one L-component normal mixture whose weights are the row
average of the stick-breaking weights.  :class:`DrawMixtures` keeps those
per-draw mixtures so losses, cdfs and ratios are evaluated in closed form.
"""

import csv
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .model import (CATEGORICAL_BLOCKS, CATEGORICAL_FIELDS, ShipmentRecord,
                    stick_breaking_weights)
from .stats import rng_stream

DEFAULT_GRID = np.linspace(-96.0, 168.0, 1001)
MIN_DRAWS = 100


class InferenceError(ValueError):
    pass


@dataclass
class DrawMixtures:
    """One normal mixture per posterior draw: arrays of shape ``(D, L)``."""

    weights: np.ndarray
    mu: np.ndarray
    phi: np.ndarray

    def __len__(self):
        return self.weights.shape[0]

    def density(self, grid):
        grid = np.asarray(grid, dtype=float)
        out = np.empty((len(self), len(grid)))
        for i in range(len(self)):
            comp = np.sqrt(self.phi[i] / (2 * np.pi)) * np.exp(
                -0.5 * self.phi[i] * (grid[:, None] - self.mu[i]) ** 2)
            out[i] = comp @ self.weights[i]
        return out

    def cdf(self, t):
        """Per-draw ``F(t)`` for scalar ``t`` or ``(D, len(t))`` for arrays."""
        t = np.asarray(t, dtype=float)
        sq = np.sqrt(self.phi)
        if t.ndim == 0:
            return np.sum(special.ndtr((t - self.mu) * sq) * self.weights, axis=-1)
        out = np.empty((len(self), t.size))
        for i in range(len(self)):
            out[i] = special.ndtr((t.ravel()[:, None] - self.mu[i]) * sq[i]) @ self.weights[i]
        return out

    def sf(self, t):
        """Per-draw ``1 - F(t)`` using the upper normal tail directly."""
        arg = (self.mu - float(t)) * np.sqrt(self.phi)
        return np.sum(special.ndtr(arg) * self.weights, axis=-1)

    def mean(self):
        return np.sum(self.weights * self.mu, axis=-1)

    def second_moment(self):
        return np.sum(self.weights * (1.0 / self.phi + self.mu ** 2), axis=-1)

    def variance(self):
        return self.second_moment() - self.mean() ** 2


@dataclass
class DensityEstimate:
    grid: np.ndarray
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    cdf: np.ndarray
    mixtures: DrawMixtures = None
    label: str = ""

    @classmethod
    def from_mixtures(cls, mixtures, grid=None, label=""):
        grid = DEFAULT_GRID if grid is None else np.asarray(grid, dtype=float)
        dens = mixtures.density(grid)
        lo, hi = np.quantile(dens, [0.025, 0.975], axis=0)
        mean = dens.mean(axis=0)
        lo = np.minimum(lo, mean)
        hi = np.maximum(hi, mean)
        cdf = mixtures.cdf(grid).mean(axis=0)
        return cls(grid, mean, lo, hi, cdf, mixtures, label)

    @classmethod
    def from_grid(cls, grid, density, label=""):
        """Point estimate known only on a grid (no per-draw information)."""
        grid = np.asarray(grid, dtype=float)
        density = np.asarray(density, dtype=float)
        cdf = integrate.cumulative_trapezoid(density, grid, initial=0.0)
        return cls(grid, density, density.copy(), density.copy(), cdf, None, label)

    def integral(self):
        return float(integrate.trapezoid(self.mean, self.grid))

    def cdf_at(self, t):
        if self.mixtures is not None:
            return float(np.mean(self.mixtures.cdf(t)))
        return float(np.interp(t, self.grid, self.cdf))

    def rows(self):
        for g, m, lo, hi, c in zip(self.grid, self.mean, self.lower, self.upper, self.cdf):
            yield {"y": g, "mean": m, "lower": lo, "upper": hi, "cdf": c}

    def write_csv(self, path, delimiter=","):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
            w.writerow(["y", "density_mean", "density_lower", "density_upper", "cdf"])
            for r in self.rows():
                w.writerow([f"{r['y']:.17g}", f"{r['mean']:.17g}", f"{r['lower']:.17g}",
                            f"{r['upper']:.17g}", f"{r['cdf']:.17g}"])

    def to_dict(self):
        return {"label": self.label, "grid": self.grid.tolist(),
                "mean": self.mean.tolist(), "lower": self.lower.tolist(),
                "upper": self.upper.tolist(), "cdf": self.cdf.tolist()}


@dataclass
class LossSpec:
    kind: str = "linear"
    C: float = 1.0
    tau: float = 18.0

    def __post_init__(self):
        if self.kind not in ("linear", "threshold", "quadratic"):
            raise ValueError("loss kind must be linear, threshold or quadratic")
        if not self.C > 0:
            raise ValueError("loss constant C must be positive")


@dataclass
class Interval:
    mean: float
    lower: float
    upper: float
    draws: np.ndarray = field(default=None, repr=False)

    @classmethod
    def from_draws(cls, x):
        x = np.asarray(x, dtype=float)
        lo, hi = np.quantile(x, [0.025, 0.975])
        return cls(float(x.mean()), float(lo), float(hi), x)

    def to_dict(self):
        return {"mean": self.mean, "lower": self.lower, "upper": self.upper}


def settings_columns(settings, fill=None):
    """Column mapping for a list of predictor settings (dicts or records)."""
    rows = []
    for s in settings:
        if isinstance(s, ShipmentRecord):
            s = {f: getattr(s, f) for f in CATEGORICAL_FIELDS + ("dev_start", "dur", "wgt", "pcs")}
        rows.append(dict(fill or {}, **s))
    cols = {}
    for f in CATEGORICAL_FIELDS:
        cols[f] = np.asarray([str(r.get(f, "")) for r in rows], dtype=object)
    for f, default in (("dev_start", 0.0), ("dur", 1.0), ("wgt", 1.0), ("pcs", 1.0)):
        cols[f] = np.asarray([float(r.get(f, default)) for r in rows])
    cols["log_wgt"] = np.asarray([float(r["log_wgt"]) if "log_wgt" in r
                                  else math.log(float(r.get("wgt", 1.0))) for r in rows])
    cols["log_pcs"] = np.asarray([float(r["log_pcs"]) if "log_pcs" in r
                                  else math.log(float(r.get("pcs", 1.0))) for r in rows])
    return cols


def _check_settings(settings, spec):
    need = set()
    for b in spec.categorical_blocks:
        need.update(CATEGORICAL_BLOCKS[b])
    for b in spec.spline_blocks:
        need.add({"log_wgt": "wgt", "log_pcs": "pcs"}.get(b, b))
    for s in settings:
        if isinstance(s, ShipmentRecord):
            continue
        missing = [f for f in sorted(need) if f not in s
                   and not (f in ("wgt", "pcs") and f"log_{f}" in s)]
        if missing:
            raise InferenceError(f"predictor setting lacks {missing}")


def row_mixtures(draws, design, row_weights=None):
    """Per-draw mixtures averaged over the rows of ``design``."""
    D = len(draws)
    L = draws.mu.shape[1]
    W = np.empty((D, L))
    eta_all = design.eta_draws(draws.theta)
    rw = None if row_weights is None else np.asarray(row_weights, dtype=float)
    for i in range(D):
        uniq, inv = np.unique(eta_all[i], return_inverse=True)
        w = stick_breaking_weights(draws.level[i][None, :] + uniq[:, None])
        if rw is None:
            cnt = np.bincount(inv, minlength=len(uniq)).astype(float)
            W[i] = cnt @ w / design.n
        else:
            W[i] = np.bincount(inv, weights=rw, minlength=len(uniq)) @ w / rw.sum()
    return DrawMixtures(W, draws.mu, draws.phi)


def _require_draws(draws):
    if draws is None or len(draws) == 0:
        raise InferenceError("no posterior draws")
    if len(draws) < MIN_DRAWS:
        warnings.warn(f"only {len(draws)} posterior draws (< {MIN_DRAWS})", stacklevel=3)


def predictive_density(x, draws, grid=None, label=""):
    """Posterior predictive density at one predictor setting ``x`` (dict or
    :class:`ShipmentRecord`), with pointwise 95% bands."""
    _require_draws(draws)
    _check_settings([x], draws.spec)
    design = draws.encoder.design(settings_columns([x]))
    return DensityEstimate.from_mixtures(row_mixtures(draws, design), grid, label)


def expected_loss(source, loss):
    """Expected loss with a 95% credible interval.

    ``source`` is a :class:`DensityEstimate`, :class:`DrawMixtures` or
    anything with a ``mixtures`` attribute.  Without per-draw mixtures the
    loss is integrated numerically on the grid and the interval collapses.
    """
    mix = source if isinstance(source, DrawMixtures) else getattr(source, "mixtures", None)
    if mix is None:
        g, f = source.grid, source.mean
        if loss.kind == "linear":
            v = integrate.trapezoid(g * f, g)
        elif loss.kind == "quadratic":
            v = integrate.trapezoid(g * g * f, g)
        else:
            v = 1.0 - np.interp(loss.tau, g, source.cdf)
        v = loss.C * float(v)
        return Interval(v, v, v, np.array([v]))
    if loss.kind == "linear":
        per = mix.mean()
    elif loss.kind == "quadratic":
        per = mix.second_moment()
    else:
        per = mix.sf(loss.tau)
    return Interval.from_draws(loss.C * per)


@dataclass
class ServiceResult:
    service_id: str
    settings: dict
    loss: Interval
    prob_best: float = 0.0

    def to_dict(self):
        return {"service_id": self.service_id, "settings": self.settings,
                "loss": self.loss.to_dict(), "prob_best": self.prob_best}


def optimal_service(demand, services, loss, draws):
    """Rank candidate services by posterior-mean expected loss.

    ``services`` maps service id to the decision settings (airline, legs,
    dur); ``dev_start`` is held at 0.  Ties break on the service id.
    """
    _require_draws(draws)
    if not services:
        raise InferenceError("no candidate services")
    items = services.items() if isinstance(services, dict) else \
        [(str(s.get("id", i)), s) for i, s in enumerate(services)]
    out = []
    for sid, svc in items:
        x = dict(demand)
        x.update({k: v for k, v in svc.items() if k != "id"})
        x["dev_start"] = 0.0
        _check_settings([x], draws.spec)
        design = draws.encoder.design(settings_columns([x]))
        out.append(ServiceResult(str(sid), x, expected_loss(row_mixtures(draws, design), loss)))
    per = np.stack([r.loss.draws for r in out])
    best = np.argmin(per, axis=0)
    for i, r in enumerate(out):
        r.prob_best = float(np.mean(best == i))
    out.sort(key=lambda r: (r.loss.mean, r.service_id))
    return out


def prob_worse(a, b):
    """Posterior probability that service ``a`` has the larger loss."""
    return float(np.mean(a.loss.draws > b.loss.draws))


def marginal_density(fixed, draws, data, grid=None, max_records=2000, seed=0,
                     label=""):
    """Predictive density given only the predictors in ``fixed``.

    The remaining predictors are integrated over their empirical distribution
    among records matching the fixed categorical values; fixed continuous
    values override the records' own.  At most ``max_records`` matching
    records are used (sampled without replacement with ``seed``).
    """
    _require_draws(draws)
    match = np.ones(len(data), dtype=bool)
    for f, v in fixed.items():
        if f in CATEGORICAL_FIELDS:
            match &= data[f] == str(v)
    idx = np.nonzero(match)[0]
    if len(idx) == 0:
        raise InferenceError(f"no records match fixed values {fixed}")
    if len(idx) > max_records:
        idx = np.sort(rng_stream(seed, 0).choice(idx, max_records, replace=False))
    sub = data.subset(idx)
    cont = {f: v for f, v in fixed.items() if f not in CATEGORICAL_FIELDS}
    if cont:
        sub = sub.with_values(**cont)
    design = draws.encoder.design(sub.columns)
    return DensityEstimate.from_mixtures(row_mixtures(draws, design), grid, label)


def reference_design(draws, data, weighting="uniform"):
    """Design row with every non-airline block at its reference value.

    Continuous predictors sit at their data means (log scale for weight and
    pieces).  Categorical blocks other than ``airline`` are replaced by the
    average of their effects over the categories observed in ``data``:
    unweighted by default, or by record frequency.
    """
    if weighting not in ("uniform", "frequency"):
        raise ValueError("weighting must be 'uniform' or 'frequency'")
    enc = draws.encoder
    spec = enc.spec
    means = {f: float(np.mean(data[f])) for f in ("dev_start", "dur", "log_wgt", "log_pcs")}
    first = {f: enc.levels[f][0] for f in CATEGORICAL_FIELDS}
    cols = settings_columns([dict(first, **means)])
    design = enc.design(cols, warn=False)
    for b in spec.categorical_blocks:
        if b == "airline":
            continue
        codes = enc.codes(b, data.columns, warn=False)
        codes = codes[codes >= 0]
        K = enc.block_size(b)
        if weighting == "frequency":
            w = np.bincount(codes, minlength=K).astype(float)
        else:
            fs = CATEGORICAL_BLOCKS[b]
            if len(fs) == 1:
                w = np.zeros(K)
                w[np.unique(codes)] = 1.0
            else:
                # every observed pair counts once, reference pairs map to slot 0
                keys = set(zip(data[fs[0]], data[fs[1]]))
                kc = enc.codes(b, {fs[0]: [k[0] for k in keys],
                                   fs[1]: [k[1] for k in keys]}, warn=False)
                w = np.bincount(kc[kc >= 0], minlength=K).astype(float)
        design.averaged[b] = w / w.sum()
    return design


def baseline_distribution(airline, draws, data, grid=None, weighting="uniform"):
    """Airline baseline: the airline effect on top of averaged other effects."""
    _require_draws(draws)
    enc = draws.encoder
    airline = str(airline)
    if airline not in enc.levels["airline"]:
        raise InferenceError(f"unknown airline {airline!r}")
    design = reference_design(draws, data, weighting)
    if "airline" in design.codes:
        design.codes["airline"] = np.array([enc.levels["airline"].index(airline)])
    return DensityEstimate.from_mixtures(row_mixtures(draws, design), grid,
                                         label=f"baseline {airline}")


def overage_underage_ratio(baseline, tol=1e-12):
    """Newsvendor overage/underage ratio ``1/F(0) - 1`` with a 95% interval."""
    if baseline.mixtures is not None:
        F0 = baseline.mixtures.cdf(0.0)
    else:
        F0 = np.array([baseline.cdf_at(0.0)])
    if np.any(F0 <= tol) or np.any(F0 >= 1.0 - tol):
        raise InferenceError("F(0) is 0 or 1: the ratio is undefined")
    return Interval.from_draws(1.0 / F0 - 1.0)


def write_report(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o))

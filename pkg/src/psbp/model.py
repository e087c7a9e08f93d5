"""Model specification, predictor encoding and the PSBP mixture itself.

The linear predictor of stick ``l`` for a shipment ``x`` is

    gamma_l(x) = theta_level[l] + eta(x)

where ``eta(x)`` collects the airline / route / month / legs effects, their
interactions and the spline terms.  Only the level block is indexed by the
component; every other block is shared across sticks.
"""

import functools
import math
import warnings
from dataclasses import dataclass, field, fields, replace

import numpy as np
from scipy import special

from .bspline import DEFAULT_KNOTS, KnotSpec, basis_matrix, out_of_span
from .stats import PROB_CEIL, PROB_FLOOR

CATEGORICAL_FIELDS = ("airline", "route", "month", "legs")
CONTINUOUS_FIELDS = ("dev_start", "dur", "wgt", "pcs")

# block name -> categorical fields it is indexed by
CATEGORICAL_BLOCKS = {
    "airline": ("airline",),
    "route": ("route",),
    "airline_route": ("airline", "route"),
    "month": ("month",),
    "legs": ("legs",),
    "airline_legs": ("airline", "legs"),
}
# block name -> transformed continuous column
SPLINE_BLOCKS = {
    "dev_start": "dev_start",
    "dur": "dur",
    "log_wgt": "log_wgt",
    "log_pcs": "log_pcs",
}
BLOCK_ORDER = tuple(CATEGORICAL_BLOCKS) + tuple(SPLINE_BLOCKS)

FULL_BLOCKS = BLOCK_ORDER
SELECTED_BLOCKS = ("airline", "route", "airline_route", "month", "legs",
                   "dev_start", "dur", "log_wgt")


class UnseenCategoryError(KeyError):
    pass


@dataclass(frozen=True)
class ShipmentRecord:
    """One shipment: transport risk ``y`` in hours plus its predictors."""

    y: float
    airline: str
    route: str
    month: str = "1"
    legs: str = "1"
    dev_start: float = 0.0
    dur: float = 1.0
    wgt: float = 1.0
    pcs: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.y):
            raise ValueError("y must be finite")
        if not self.wgt > 0:
            raise ValueError("non-positive weight")
        if not self.pcs > 0:
            raise ValueError("non-positive pieces")
        if self.pcs < 1:
            raise ValueError("pieces below one")
        for name in CATEGORICAL_FIELDS:
            object.__setattr__(self, name, str(getattr(self, name)))
        if self.legs not in ("1", "2", "3"):
            raise ValueError("legs outside {1,2,3}")

    @property
    def log_wgt(self):
        return math.log(self.wgt)

    @property
    def log_pcs(self):
        return math.log(self.pcs)


@dataclass
class Priors:
    """Hyperparameters.

    Kernel atoms: ``mu ~ N(zeta, xi * phi)``, ``phi ~ Gamma(a_phi, b_phi)``.
    Categorical blocks (and the level block): ``theta ~ N(mean, eps)`` with
    ``eps ~ Gamma(c, d)``.  Spline coefficients: ``N(spline_mean,
    spline_precision)`` with both fixed.  All normals are parametrised by
    precision.
    """

    zeta: float = -2.64
    xi: float = 1.0 / 189.6
    a_phi: float = 1.25
    b_phi: float = 47.5
    c: float = 6.0
    d: float = 5.0
    spline_mean: float = 0.0
    spline_precision: float = 1.0

    def __post_init__(self):
        for name in ("xi", "a_phi", "b_phi", "c", "d", "spline_precision"):
            if not getattr(self, name) > 0:
                raise ValueError(f"prior constant {name} must be positive")

    @classmethod
    def from_data(cls, y, center="mean", **overrides):
        """Elicit kernel hyperparameters from the response.

        ``zeta`` is the global mean (or median), ``1 / xi`` half the observed
        range, and ``b_phi`` is set so that ``E(1/phi) = b/(a-1)`` also equals
        half the range.
        """
        y = np.asarray(y, dtype=float)
        half = 0.5 * (y.max() - y.min())
        if half <= 0:
            raise ValueError("response has zero range")
        a = overrides.pop("a_phi", 1.25)
        zeta = float(np.median(y)) if center == "median" else float(y.mean())
        return cls(zeta=zeta, xi=1.0 / half, a_phi=a,
                   b_phi=half * (a - 1.0), **overrides)

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class ModelSpec:
    n_components: int = 50
    blocks: tuple = SELECTED_BLOCKS
    knots: dict = field(default_factory=lambda: dict(DEFAULT_KNOTS))
    priors: Priors = field(default_factory=Priors)
    reference_levels: dict = field(default_factory=dict)
    strict: bool = False

    def __post_init__(self):
        if not 2 <= int(self.n_components) <= 200:
            raise ValueError("n_components must lie in [2, 200]")
        self.n_components = int(self.n_components)
        bad = [b for b in self.blocks if b not in BLOCK_ORDER]
        if bad:
            raise ValueError(f"unknown predictor blocks: {bad}")
        # canonical order keeps encodings reproducible
        self.blocks = tuple(b for b in BLOCK_ORDER if b in self.blocks)
        for b in self.spline_blocks:
            if b not in self.knots:
                raise ValueError(f"no knots for spline block {b}")

    @property
    def categorical_blocks(self):
        return tuple(b for b in self.blocks if b in CATEGORICAL_BLOCKS)

    @property
    def spline_blocks(self):
        return tuple(b for b in self.blocks if b in SPLINE_BLOCKS)

    def prior_level_means(self):
        """Prior means of the level block, equalising prior stick weights."""
        return level_prior_means(self.n_components)

    def without(self, block):
        return replace(self, blocks=tuple(b for b in self.blocks if b != block))

    def to_dict(self):
        return {
            "n_components": self.n_components,
            "blocks": list(self.blocks),
            "knots": {k: v.to_dict() for k, v in self.knots.items()},
            "priors": self.priors.to_dict(),
            "reference_levels": dict(self.reference_levels),
            "strict": self.strict,
        }

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc)
        knots = dict(DEFAULT_KNOTS)
        for k, v in doc.pop("knots", {}).items():
            knots[k] = KnotSpec(tuple(v["interior"]), v.get("order", 4),
                                v.get("extension"))
        priors = Priors(**doc.pop("priors", {}))
        blocks = tuple(doc.pop("blocks", SELECTED_BLOCKS))
        return cls(knots=knots, priors=priors, blocks=blocks, **doc)


@functools.lru_cache(maxsize=64)
def _level_prior_means(L):
    l = np.arange(1, L)
    out = np.zeros(L)
    out[:-1] = special.ndtri(1.0 / (L - l + 1))
    out.setflags(write=False)
    return out


def level_prior_means(L):
    """``Phi^{-1}(1 / (L - l + 1))`` for ``l = 1..L-1``; the last stick takes
    the remainder, its mean is set to 0 (the value is never used by the
    weights)."""
    return _level_prior_means(int(L))


class Encoder:
    """Category dictionaries plus the recipe turning records into design rows.

    The first label of each categorical field is its reference level (sorted
    order unless overridden in ``spec.reference_levels``).  Interaction
    dictionaries hold the pairs observed in the training data; pairs that
    involve a reference level are fixed at zero.
    """

    def __init__(self, spec, levels, pairs):
        self.spec = spec
        self.levels = {k: list(v) for k, v in levels.items()}
        self.pairs = {k: [tuple(p) for p in v] for k, v in pairs.items()}
        self._index = {k: {lab: i for i, lab in enumerate(v)}
                       for k, v in self.levels.items()}
        self._pair_index = {k: {p: i for i, p in enumerate(v)}
                            for k, v in self.pairs.items()}

    @classmethod
    def fit(cls, data, spec):
        levels = {}
        for f in CATEGORICAL_FIELDS:
            labs = sorted(set(str(v) for v in data[f]), key=_label_key)
            ref = spec.reference_levels.get(f)
            if ref is not None:
                ref = str(ref)
                if ref not in labs:
                    raise ValueError(f"reference level {ref!r} absent from {f}")
                labs.remove(ref)
                labs.insert(0, ref)
            levels[f] = labs
        pairs = {}
        for b in spec.categorical_blocks:
            fs = CATEGORICAL_BLOCKS[b]
            if len(fs) == 2:
                seen = set(zip((str(v) for v in data[fs[0]]),
                               (str(v) for v in data[fs[1]])))
                r0, r1 = levels[fs[0]][0], levels[fs[1]][0]
                free = sorted((p for p in seen if p[0] != r0 and p[1] != r1),
                              key=lambda p: (_label_key(p[0]), _label_key(p[1])))
                # slot 0 is the shared fixed-zero reference cell
                pairs[b] = [(r0, r1)] + free
        return cls(spec, levels, pairs)

    def block_size(self, block):
        if block in SPLINE_BLOCKS:
            return self.spec.knots[block].n_basis
        fs = CATEGORICAL_BLOCKS[block]
        if len(fs) == 1:
            return len(self.levels[fs[0]])
        return len(self.pairs[block])

    def free_mask(self, block):
        """Boolean mask of coefficients that are sampled (not fixed at 0)."""
        n = self.block_size(block)
        m = np.ones(n, dtype=bool)
        if block in CATEGORICAL_BLOCKS:
            m[0] = False
        return m

    def codes(self, block, data, warn=True):
        """Integer code per record; -1 marks an unseen category (effect 0)."""
        fs = CATEGORICAL_BLOCKS[block]
        if len(fs) == 1:
            idx = self._index[fs[0]]
            keys = [str(v) for v in data[fs[0]]]
            out = np.array([idx.get(k, -1) for k in keys], dtype=np.int64)
        else:
            idx = self._pair_index[block]
            r0, r1 = (self.levels[f][0] for f in fs)
            out = np.empty(len(data[fs[0]]), dtype=np.int64)
            for i, (a, b) in enumerate(zip(data[fs[0]], data[fs[1]])):
                a, b = str(a), str(b)
                if a == r0 or b == r1:
                    out[i] = 0
                else:
                    out[i] = idx.get((a, b), -1)
        n_unseen = int(np.sum(out < 0))
        if n_unseen:
            if self.spec.strict:
                raise UnseenCategoryError(
                    f"{n_unseen} record(s) with unseen {block} category")
            if warn:
                warnings.warn(f"{n_unseen} record(s) with unseen {block} "
                              "category mapped to effect 0", stacklevel=3)
        return out

    def design(self, data, warn=True):
        """Encode a column mapping (Dataset or dict of arrays)."""
        codes = {b: self.codes(b, data, warn) for b in self.spec.categorical_blocks}
        basis = {}
        for b in self.spec.spline_blocks:
            x = np.asarray(data[SPLINE_BLOCKS[b]], dtype=float)
            ks = self.spec.knots[b]
            n_out = int(np.sum(out_of_span(x, ks)))
            if n_out and warn:
                warnings.warn(f"{n_out} value(s) of {b} outside the knot span "
                              "get a zero spline contribution", stacklevel=2)
            basis[b] = basis_matrix(x, ks)
        n = len(np.asarray(data[CATEGORICAL_FIELDS[0]]))
        return Design(n, codes, basis)

    def record_columns(self, record):
        return records_to_columns([record])

    def to_dict(self):
        return {"levels": self.levels,
                "pairs": {k: [list(p) for p in v] for k, v in self.pairs.items()}}

    @classmethod
    def from_dict(cls, spec, doc):
        return cls(spec, doc["levels"], doc.get("pairs", {}))


def _label_key(s):
    s = str(s)
    try:
        return (0, float(s), s)
    except ValueError:
        return (1, 0.0, s)


def records_to_columns(records):
    cols = {f: [] for f in ("y",) + CATEGORICAL_FIELDS + CONTINUOUS_FIELDS}
    for r in records:
        for f in cols:
            cols[f].append(getattr(r, f))
    out = {f: np.asarray(v, dtype=float) for f, v in cols.items()
           if f not in CATEGORICAL_FIELDS}
    for f in CATEGORICAL_FIELDS:
        out[f] = np.asarray([str(v) for v in cols[f]], dtype=object)
    out["log_wgt"] = np.log(out["wgt"])
    out["log_pcs"] = np.log(out["pcs"])
    return out


@dataclass
class Design:
    """Encoded predictors for ``n`` rows.

    ``averaged`` optionally replaces a categorical block by a fixed weighting
    of its levels (used for baseline distributions).
    """

    n: int
    codes: dict
    basis: dict
    averaged: dict = field(default_factory=dict)

    def eta(self, theta):
        """Shared part of the linear predictor for one coefficient set."""
        out = np.zeros(self.n)
        for b, c in self.codes.items():
            if b in self.averaged:
                out += float(self.averaged[b] @ theta[b])
                continue
            th = theta[b]
            out += np.where(c >= 0, th[np.maximum(c, 0)], 0.0)
        for b, B in self.basis.items():
            out += B @ theta[b]
        return out

    def eta_draws(self, theta_draws):
        """Vectorised ``eta`` over stacked draws: returns ``(D, n)``."""
        D = next(iter(theta_draws.values())).shape[0] if theta_draws else 1
        out = np.zeros((D, self.n))
        for b, c in self.codes.items():
            th = theta_draws[b]
            if b in self.averaged:
                out += (th @ self.averaged[b])[:, None]
                continue
            out += np.where(c >= 0, th[:, np.maximum(c, 0)], 0.0)
        for b, B in self.basis.items():
            out += theta_draws[b] @ B.T
        return out

    def subset(self, idx):
        return Design(len(np.arange(self.n)[idx]),
                      {b: c[idx] for b, c in self.codes.items()},
                      {b: B[idx] for b, B in self.basis.items()},
                      dict(self.averaged))


@dataclass
class WeightCoefficients:
    level: np.ndarray
    theta: dict
    eps: dict

    def copy(self):
        return WeightCoefficients(self.level.copy(),
                                  {k: v.copy() for k, v in self.theta.items()},
                                  dict(self.eps))


@dataclass
class MixtureKernel:
    mu: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        self.phi = np.asarray(self.phi, dtype=float)
        if np.any(self.phi <= 0):
            raise ValueError("kernel precisions must be positive")


def prior_mean_coefficients(encoder):
    """Coefficients at their prior means (eps at the prior mean c/d)."""
    spec = encoder.spec
    pr = spec.priors
    theta = {}
    for b in spec.blocks:
        n = encoder.block_size(b)
        if b in SPLINE_BLOCKS:
            theta[b] = np.full(n, pr.spline_mean)
        else:
            theta[b] = np.zeros(n)
    eps = {b: pr.c / pr.d for b in ("level",) + spec.categorical_blocks}
    return WeightCoefficients(spec.prior_level_means().copy(), theta, eps)


def gamma_predictor(record, l, coefs, encoder):
    """``gamma_l(x)`` for a single :class:`ShipmentRecord` (``l`` is 0-based)."""
    d = encoder.design(records_to_columns([record]))
    return float(coefs.level[l] + d.eta(coefs.theta)[0])


def gamma_matrix(design, coefs):
    """``(n, L)`` matrix of stick predictors."""
    return coefs.level[None, :] + design.eta(coefs.theta)[:, None]


def log_stick_breaking_weights(gamma):
    """Log weights ``log Phi(g_l) + sum_{p<l} log(1 - Phi(g_p))``.

    The last stick takes the remainder (its break fraction is 1).  Works on
    the trailing axis.
    """
    g = np.asarray(gamma, dtype=float)
    logu = np.maximum(special.log_ndtr(g), math.log(PROB_FLOOR))
    log1mu = np.maximum(special.log_ndtr(-g), math.log1p(-PROB_CEIL))
    out = np.empty_like(g)
    csum = np.cumsum(log1mu[..., :-1], axis=-1)
    out[..., 0] = logu[..., 0]
    out[..., 1:-1] = logu[..., 1:-1] + csum[..., :-1]
    out[..., -1] = csum[..., -1]
    return out


def stick_breaking_weights(gamma):
    """Probit stick-breaking weights on the simplex (trailing axis)."""
    g = np.asarray(gamma, dtype=float)
    if g.shape[-1] == 1:
        return np.ones_like(g)
    if not np.all(np.isfinite(g)):
        raise ValueError("gamma must be finite")
    u = np.clip(special.ndtr(g), PROB_FLOOR, PROB_CEIL)
    u[..., -1] = 1.0
    rem = np.cumprod(1.0 - u[..., :-1], axis=-1)
    w = u.copy()
    w[..., 1:] *= rem
    # remainder stick carries the rounding so the sum is 1 to the last ulp
    w[..., -1] = np.maximum(1.0 - np.sum(w[..., :-1], axis=-1), 0.0)
    return w


def mixture_density(y, weights, kernel):
    """``sum_l w_l N(y | mu_l, phi_l)`` for scalar or array ``y``."""
    y = np.asarray(y, dtype=float)
    w = np.asarray(weights, dtype=float)
    mu, phi = kernel.mu, kernel.phi
    comp = np.sqrt(phi / (2 * math.pi)) * np.exp(-0.5 * phi * (y[..., None] - mu) ** 2)
    out = comp @ w
    return float(out) if out.ndim == 0 else out


def mixture_cdf(t, weights, kernel):
    t = np.asarray(t, dtype=float)
    out = special.ndtr((t[..., None] - kernel.mu) * np.sqrt(kernel.phi)) @ weights
    return float(out) if out.ndim == 0 else out


def mixture_moments(weights, kernel):
    """Mean and second moment of the mixture."""
    m1 = float(np.dot(weights, kernel.mu))
    m2 = float(np.dot(weights, 1.0 / kernel.phi + kernel.mu ** 2))
    return m1, m2

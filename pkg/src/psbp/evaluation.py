"""Model checking and comparison: posterior predictive checks, k-fold
cross-validation with backward elimination, residual metrics and the
ordinary least squares comparator."""

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .model import SPLINE_BLOCKS, Encoder, ModelSpec
from .sampler import fit_model, log_weights_rows
from .stats import rng_stream

PPC_THRESHOLDS = (-24.0, 36.0)
LM_BLOCKS = ("airline", "route", "airline_route", "month", "legs",
             "dev_start", "dur", "log_wgt")


class EvaluationError(ValueError):
    pass


# -- residual metrics ------------------------------------------------------

def residual_metrics(y, predictions, log_density=None):
    """RMSE, MAE and (when densities are given) the summed log-likelihood."""
    y = np.asarray(y, dtype=float)
    r = y - np.asarray(predictions, dtype=float)
    # scale by the largest residual so tiny residuals do not underflow
    scale = float(np.max(np.abs(r))) if len(r) else 0.0
    rmse = scale * float(np.sqrt(np.mean((r / scale) ** 2))) if scale > 0 else 0.0
    out = {"rmse": rmse, "mae": float(np.mean(np.abs(r)))}
    if log_density is not None:
        out["ll"] = float(np.sum(log_density))
    return out


def _unique_log_weights(level, eta):
    uniq, inv = np.unique(eta, return_inverse=True)
    return log_weights_rows(level, uniq)[inv]


def psbp_pointwise(draws, data, warn=True):
    """Posterior-mean conditional mean and log predictive density per record.

    The density is averaged over draws before taking logs.
    """
    design = draws.encoder.design(data.columns, warn=warn)
    y = np.asarray(data.y, dtype=float)
    D = len(draws)
    if D == 0:
        raise EvaluationError("no posterior draws")
    eta_all = design.eta_draws(draws.theta)
    pred = np.zeros(len(y))
    acc = np.full(len(y), -np.inf)
    for i in range(D):
        lw = _unique_log_weights(draws.level[i], eta_all[i])
        mu, phi = draws.mu[i], draws.phi[i]
        pred += np.exp(lw) @ mu
        lk = 0.5 * np.log(phi / (2 * np.pi)) - 0.5 * phi * (y[:, None] - mu) ** 2
        acc = np.logaddexp(acc, special.logsumexp(lw + lk, axis=1))
    return pred / D, acc - np.log(D)


# -- linear comparator -----------------------------------------------------

class LinearBaseline:
    """OLS fit of ``y`` on an intercept, categorical effects (reference level
    dropped) and linear terms for the continuous blocks."""

    def __init__(self, encoder, coef, sigma2, cov, names):
        self.encoder = encoder
        self.coef = coef
        self.sigma2 = sigma2
        self.cov = cov
        self.names = names

    def design_matrix(self, data, warn=True):
        return _lm_design(self.encoder, data, warn)[0]

    def predict(self, data, warn=True):
        return self.design_matrix(data, warn) @ self.coef

    def logpdf(self, data, warn=True):
        mu = self.predict(data, warn)
        y = np.asarray(data.y, dtype=float)
        return -0.5 * np.log(2 * np.pi * self.sigma2) - 0.5 * (y - mu) ** 2 / self.sigma2

    def density(self, grid, x_row):
        """Predictive density ``N(mu(x), sigma2)`` on ``grid`` for one row."""
        mu = float(x_row @ self.coef)
        grid = np.asarray(grid, dtype=float)
        return np.exp(-0.5 * (grid - mu) ** 2 / self.sigma2) / np.sqrt(2 * np.pi * self.sigma2)

    def replicates(self, data, rng, n_replicates):
        mu = self.predict(data, warn=False)
        eps = rng.standard_normal((n_replicates, len(mu)))
        return mu[None, :] + np.sqrt(self.sigma2) * eps

    @property
    def std_errors(self):
        return np.sqrt(np.diag(self.cov))


def _lm_design(encoder, data, warn=True):
    spec = encoder.spec
    cols = [np.ones(len(data))]
    names = ["intercept"]
    for b in spec.categorical_blocks:
        codes = encoder.codes(b, data.columns, warn)
        K = encoder.block_size(b)
        for k in range(1, K):
            cols.append((codes == k).astype(float))
            names.append(f"{b}[{k}]")
    for b in spec.spline_blocks:
        cols.append(np.asarray(data[SPLINE_BLOCKS[b]], dtype=float))
        names.append(b)
    return np.column_stack(cols), names


def fit_linear_baseline(data, blocks=LM_BLOCKS, reference_levels=None):
    """Closed-form OLS.  Rank deficiency falls back to the pseudo-inverse
    with a warning."""
    if len(data) == 0:
        raise EvaluationError("empty data")
    spec = ModelSpec(n_components=2, blocks=tuple(blocks),
                     reference_levels=dict(reference_levels or {}))
    enc = Encoder.fit(data, spec)
    X, names = _lm_design(enc, data)
    y = np.asarray(data.y, dtype=float)
    rank = np.linalg.matrix_rank(X)
    if rank < X.shape[1]:
        warnings.warn(f"LM design is rank deficient ({rank} < {X.shape[1]}); "
                      "using the pseudo-inverse", stacklevel=2)
    XtX_inv = np.linalg.pinv(X.T @ X)
    coef = np.linalg.pinv(X) @ y
    resid = y - X @ coef
    dof = max(len(y) - rank, 1)
    sigma2 = float(resid @ resid / dof)
    if sigma2 <= 0:
        sigma2 = np.finfo(float).tiny
    return LinearBaseline(enc, coef, sigma2, sigma2 * XtX_inv, names)


# -- posterior predictive checks -------------------------------------------

@dataclass
class PpcReport:
    statistic: str
    observed: float
    mean: float
    lower: float
    upper: float
    hist_counts: np.ndarray = field(repr=False, default=None)
    hist_edges: np.ndarray = field(repr=False, default=None)

    @property
    def inside(self):
        return self.lower <= self.observed <= self.upper

    def to_dict(self):
        return {"statistic": self.statistic, "observed": self.observed,
                "mean": self.mean, "lower": self.lower, "upper": self.upper,
                "inside": self.inside,
                "hist_counts": self.hist_counts.tolist(),
                "hist_edges": self.hist_edges.tolist()}


def summary_statistics(y, thresholds=PPC_THRESHOLDS):
    """Mean, sd, disruption and recurrent-risk probabilities along the last
    axis of ``y``."""
    lo, hi = thresholds
    y = np.asarray(y, dtype=float)
    disrupt = np.mean((y < lo) | (y >= hi), axis=-1)
    return {"mean": y.mean(axis=-1), "sd": y.std(axis=-1, ddof=1),
            "p_disruption": disrupt, "p_recurrent": 1.0 - disrupt}


def ppc_from_replicates(y_obs, replicates, thresholds=PPC_THRESHOLDS, bins=30):
    replicates = np.atleast_2d(np.asarray(replicates, dtype=float))
    if replicates.shape[0] == 0:
        raise EvaluationError("no replicate datasets")
    obs = summary_statistics(y_obs, thresholds)
    rep = summary_statistics(replicates, thresholds)
    out = []
    for k in obs:
        r = rep[k]
        lo, hi = np.quantile(r, [0.025, 0.975])
        counts, edges = np.histogram(r, bins=bins)
        out.append(PpcReport(k, float(obs[k]), float(r.mean()), float(lo),
                             float(hi), counts, edges))
    return out


def psbp_replicates(draws, data, rng, n_replicates=None):
    """One replicate dataset per retained draw (cycled when more are asked)."""
    D = len(draws)
    n_replicates = D if n_replicates is None else int(n_replicates)
    if n_replicates <= 0 or D == 0:
        raise EvaluationError("replicate count must be positive")
    design = draws.encoder.design(data.columns, warn=False)
    eta_all = design.eta_draws(draws.theta)
    n = design.n
    out = np.empty((n_replicates, n))
    for r in range(n_replicates):
        i = r % D
        w = np.exp(_unique_log_weights(draws.level[i], eta_all[i]))
        c = np.cumsum(w, axis=1)
        u = rng.random(n) * c[:, -1]
        s = np.minimum((c < u[:, None]).sum(axis=1), w.shape[1] - 1)
        out[r] = draws.mu[i][s] + rng.standard_normal(n) / np.sqrt(draws.phi[i][s])
    return out


def ppc_statistics(data, model, rng, n_replicates=None, thresholds=PPC_THRESHOLDS):
    """Posterior predictive check of the four summary statistics.

    ``model`` is a :class:`~psbp.sampler.PosteriorDraws` or a
    :class:`LinearBaseline`.
    """
    if n_replicates is not None and n_replicates <= 0:
        raise EvaluationError("replicate count must be positive")
    if isinstance(model, LinearBaseline):
        reps = model.replicates(data, rng, n_replicates or 1000)
    else:
        reps = psbp_replicates(model, data, rng, n_replicates)
    return ppc_from_replicates(data.y, reps, thresholds)


# -- cross-validation ------------------------------------------------------

def fold_assignment(data, folds=3, seed=0):
    """Equal-size folds stratified by airline-route pair.

    Records of each pair are shuffled and dealt round-robin, continuing the
    deal across pairs so fold sizes differ by at most one.
    """
    keys = np.asarray(data.pair_keys(), dtype=object)
    rng = rng_stream(seed, 0)
    out = np.empty(len(keys), dtype=np.int64)
    pos = 0
    for k in sorted(set(keys)):
        idx = np.nonzero(keys == k)[0]
        idx = idx[rng.permutation(len(idx))]
        out[idx] = (pos + np.arange(len(idx))) % folds
        pos += len(idx)
    return out


@dataclass
class CvReport:
    blocks: tuple
    fold_ll: list
    unseen: list
    fold_sizes: list

    @property
    def neg_ll(self):
        return -float(np.sum(self.fold_ll))

    def to_dict(self):
        return {"blocks": list(self.blocks), "fold_ll": list(self.fold_ll),
                "neg_ll": self.neg_ll, "unseen": self.unseen,
                "fold_sizes": self.fold_sizes}


def count_unseen(encoder, data):
    out = {}
    for b in encoder.spec.categorical_blocks:
        n = int(np.sum(encoder.codes(b, data.columns, warn=False) < 0))
        if n:
            out[b] = n
    return out


def _fold_job(args):
    train, test, spec, config = args
    draws = fit_model(train, spec, config)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        _, ll = psbp_pointwise(draws, test, warn=False)
    return float(ll.sum()), count_unseen(draws.encoder, test)


def cross_validate(data, spec, config, folds=3, seed=0, workers=1, fold_ids=None):
    """k-fold held-out log predictive likelihood.

    Each held-out record contributes ``log`` of its predictive density
    averaged over retained draws.  Every fold is fitted on the same chain
    stream (common random numbers), so identical training sets give
    identical fits and results do not depend on the worker count.
    """
    if fold_ids is None:
        if len(data) < 3 * folds:
            raise EvaluationError("too few records for the requested folds")
        fold_ids = fold_assignment(data, folds, seed)
    fold_ids = np.asarray(fold_ids)
    jobs = []
    for k in range(folds):
        test = fold_ids == k
        if not test.any() or test.all():
            raise EvaluationError(f"fold {k} is empty or covers all records")
        jobs.append((data.subset(~test), data.subset(test), spec, config))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            res = list(ex.map(_fold_job, jobs))
    else:
        res = [_fold_job(j) for j in jobs]
    return CvReport(spec.blocks, [r[0] for r in res], [r[1] for r in res],
                    [int(np.sum(fold_ids == k)) for k in range(folds)])


@dataclass
class SelectionStep:
    removed: str
    score: float
    kept: bool

    def to_dict(self):
        return {"removed": self.removed, "score": self.score, "kept_removed": self.kept}


def backward_select(spec, scorer, order=None):
    """One pass of backward elimination.

    Each block in ``order`` (default: the blocks of ``spec``) is dropped in turn
    and the model rescored with ``scorer(spec) -> -LL``; the block stays out
    when the score decreases.  Returns the final spec, the baseline score and
    the step log.
    """
    current = scorer(spec)
    base = current
    steps = []
    for b in list(order or spec.blocks):
        if b not in spec.blocks:
            continue
        trial = spec.without(b)
        score = scorer(trial)
        keep = score < current
        steps.append(SelectionStep(b, float(score), keep))
        if keep:
            spec, current = trial, score
    return spec, float(base), steps


def cv_scorer(data, config, folds=3, seed=0, workers=1):
    def score(spec):
        return cross_validate(data, spec, config, folds, seed, workers).neg_ll
    return score


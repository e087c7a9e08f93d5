"""Independent reference computations shared by the sampler and acceptance
tests: fine-grid posteriors for single conditionals and a joint-distribution
(Geweke) harness on a miniature model."""

import numpy as np
from scipy import stats

from psbp.data import Dataset
from psbp.diagnostics import geweke_table
from psbp.model import Encoder, ModelSpec, Priors
from psbp.sampler import (FitData, PosteriorDraws, SamplerConfig,
                          draw_from_prior, simulate_response, sweep,
                          update_augmentation)


def tiny_dataset(y, airline=None, route=None, dur=None):
    n = len(y)
    return Dataset({
        "y": np.asarray(y, dtype=float),
        "airline": ["A"] * n if airline is None else list(airline),
        "route": ["R"] * n if route is None else list(route),
        "month": ["1"] * n, "legs": ["1"] * n,
        "dev_start": np.zeros(n), "dur": np.ones(n) if dur is None else dur,
        "wgt": np.ones(n), "pcs": np.ones(n),
    })


def fit_data(data, spec):
    return FitData.from_dataset(data, encoder=Encoder.fit(data, spec))


def grid_cdf(grid, logdens):
    """Normalised cdf on ``grid`` from unnormalised log density values."""
    w = np.exp(logdens - logdens.max())
    c = np.concatenate([[0.0], np.cumsum(0.5 * (w[1:] + w[:-1]) * np.diff(grid))])
    return c / c[-1]


def ks_grid(sample, grid, cdf):
    x = np.sort(np.asarray(sample, dtype=float))
    n = len(x)
    F = np.interp(x, grid, cdf)
    return float(max(np.max(np.arange(1, n + 1) / n - F), np.max(F - np.arange(n) / n)))


def kernel_grid_marginals(y, priors, n_mu=1201, n_phi=1201):
    """Marginal cdfs of ``mu`` and ``phi`` for one Normal component with a
    Normal-Gamma prior, by brute-force evaluation of prior times likelihood
    on a 2-d grid (no conjugate algebra)."""
    y = np.asarray(y, dtype=float)
    n = len(y)
    s = y.std()
    mu = np.linspace(y.mean() - 8 * s / np.sqrt(n), y.mean() + 8 * s / np.sqrt(n), n_mu)
    p0 = 1.0 / s ** 2
    phi = np.linspace(p0 * 1e-3, p0 * 3.5, n_phi)
    M, P = np.meshgrid(mu, phi, indexing="ij")
    lp = (stats.gamma.logpdf(P, priors.a_phi, scale=1.0 / priors.b_phi)
          + stats.norm.logpdf(M, priors.zeta, 1.0 / np.sqrt(priors.xi * P)))
    sq = (y ** 2).sum() - 2 * M * y.sum() + n * M ** 2
    lp += 0.5 * n * np.log(P) - 0.5 * P * sq
    dens = np.exp(lp - lp.max())
    mu_marg = np.trapezoid(dens, phi, axis=1)
    phi_marg = np.trapezoid(dens, mu, axis=0)
    return (mu, grid_cdf(mu, np.log(mu_marg + 1e-300)),
            phi, grid_cdf(phi, np.log(phi_marg + 1e-300)))


def normal_coef_grid(prior_mean, prior_prec, resid, n_grid=4001):
    """Grid posterior of a scalar ``t`` with prior ``N(prior_mean, prior_prec)``
    and observations ``resid_i ~ N(t, 1)``."""
    resid = np.asarray(resid, dtype=float)
    n = len(resid)
    centre = (prior_prec * prior_mean + resid.sum()) / (prior_prec + n)
    half = 10.0 / np.sqrt(prior_prec + n)
    g = np.linspace(centre - half, centre + half, n_grid)
    lp = stats.norm.logpdf(g, prior_mean, 1 / np.sqrt(prior_prec))
    lp += -0.5 * ((resid[None, :] - g[:, None]) ** 2).sum(axis=1)
    return g, grid_cdf(g, lp)


def precision_grid(theta, c, d, n_grid=20001):
    """Grid posterior of a precision ``e`` with prior ``Gamma(c, d)`` and
    ``theta_k ~ N(0, e)``."""
    theta = np.asarray(theta, dtype=float)
    hi = stats.gamma.ppf(1 - 1e-12, c + len(theta) / 2, scale=1 / d)
    g = np.linspace(1e-8, hi, n_grid)
    lp = stats.gamma.logpdf(g, c, scale=1 / d)
    lp += 0.5 * len(theta) * np.log(g) - 0.5 * g * (theta @ theta)
    return g, grid_cdf(g, lp)


# -- joint-distribution test --------------------------------------------------

GEWEKE_PRIORS = Priors(zeta=0.0, xi=1.0, a_phi=4.0, b_phi=4.0)


def geweke_model(n=30, L=3, priors=GEWEKE_PRIORS):
    """L-component model with one two-level categorical predictor."""
    data = tiny_dataset(np.zeros(n), airline=["A", "B"] * (n // 2))
    spec = ModelSpec(n_components=L, blocks=("airline",), priors=priors)
    return fit_data(data, spec)


def _monitor(state, L):
    d = {f"mu{l}": state.mu[l] for l in range(L)}
    d.update({f"phi{l}": state.phi[l] for l in range(L)})
    d.update({f"level{l}": state.coefs.level[l] for l in range(L - 1)})
    d["theta_B"] = state.coefs.theta["airline"][1]
    d["eps_level"] = state.coefs.eps["level"]
    d["eps_airline"] = state.coefs.eps["airline"]
    return d


def _stack(rows):
    return {k: np.array([r[k] for r in rows]) for k in rows[0]}


def _refresh_response(state, fd, rng):
    s, y = simulate_response(state, fd, rng)
    fd.y = y
    state.s = s
    update_augmentation(state, fd, rng)


def geweke_samples(fd, n_samples, seed, label_moves=True):
    """Marginal-conditional draws (prior only) and successive-conditional
    draws (Gibbs sweep alternated with a fresh response)."""
    L = fd.spec.n_components
    rng = np.random.default_rng([seed, 0])
    marginal = [_monitor(draw_from_prior(fd, rng), L) for _ in range(n_samples)]
    rng = np.random.default_rng([seed, 1])
    state = draw_from_prior(fd, rng)
    _refresh_response(state, fd, rng)
    cfg = SamplerConfig(iterations=2, burn_in=0, thin=1, label_moves=label_moves)
    successive = []
    for _ in range(n_samples):
        sweep(state, fd, rng, cfg)
        _refresh_response(state, fd, rng)
        successive.append(_monitor(state, L))
    return _stack(marginal), _stack(successive), state


def geweke_test(n_samples=10_000, seed=1, label_moves=True):
    fd = geweke_model()
    a, b, state = geweke_samples(fd, n_samples, seed, label_moves)
    return geweke_table(a, b), state


def hand_draws(encoder, mu, phi, level=None, theta=None):
    """Posterior draws with prescribed values; ``mu``/``phi`` are ``(D, L)``."""
    mu = np.atleast_2d(np.asarray(mu, dtype=float))
    phi = np.broadcast_to(np.asarray(phi, dtype=float), mu.shape).copy()
    D, L = mu.shape
    if level is None:
        level = np.tile(encoder.spec.prior_level_means(), (D, 1))
    theta = dict(theta or {})
    for b in encoder.spec.blocks:
        theta.setdefault(b, np.zeros((D, encoder.block_size(b))))
    eps = {k: np.ones(D) for k in ("level",) + encoder.spec.categorical_blocks}
    return PosteriorDraws(encoder, mu, phi, np.asarray(level, dtype=float), theta, eps)


# -- cleaning -----------------------------------------------------------------

def brute_clean(airlines, routes, min_pair=10, min_route=20):
    """Reference filter: recount everything from scratch until stable."""
    keep = list(range(len(airlines)))
    while True:
        pairs = {}
        for i in keep:
            pairs[(airlines[i], routes[i])] = pairs.get((airlines[i], routes[i]), 0) + 1
        k1 = [i for i in keep if pairs[(airlines[i], routes[i])] >= min_pair]
        rts = {}
        for i in k1:
            rts[routes[i]] = rts.get(routes[i], 0) + 1
        k2 = [i for i in k1 if rts[routes[i]] >= min_route]
        if k2 == keep:
            return keep
        keep = k2


def random_clean_dataset(seed, n=None):
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(0, 400))
    a = rng.choice([f"A{i}" for i in range(int(rng.integers(1, 6)))], n)
    r = rng.choice([f"R{i}" for i in range(int(rng.integers(1, 8)))], n)
    cols = {"y": rng.normal(size=n), "airline": a, "route": r, "month": ["1"] * n,
            "legs": ["1"] * n, "dev_start": np.zeros(n), "dur": np.ones(n),
            "wgt": np.ones(n), "pcs": np.ones(n)}
    return Dataset(cols)

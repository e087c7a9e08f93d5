"""Blocked Gibbs sampler for the finite PSBP mixture.

One sweep updates, in order: kernel atoms, latent indicators, truncated
normal auxiliaries, weight coefficients, hyper-precisions, and finally a set
of adjacent-label swap proposals.  Components are 0-based internally.
"""

import hashlib
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np
from scipy import special

from .model import (CATEGORICAL_BLOCKS, Encoder, WeightCoefficients,
                    log_stick_breaking_weights, prior_mean_coefficients,
                    stick_breaking_weights)
from .stats import (normal_logpdf, restore_rng, rng_state, rng_stream,
                    sample_truncated_normal_signs)

log = logging.getLogger(__name__)


@dataclass
class SamplerConfig:
    iterations: int = 20_000
    burn_in: int = 10_000
    thin: int = 10
    label_moves: bool = True
    # None: one attempt per adjacent pair, scanned in order
    label_move_attempts: int = None
    seed: int = 0
    stream_id: int = 0
    checkpoint_every: int = None

    def __post_init__(self):
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("burn_in must be in [0, iterations)")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")

    @property
    def n_retained(self):
        return (self.iterations - self.burn_in) // self.thin

    def to_dict(self):
        return asdict(self)


class FitData:
    """Response plus encoded design, ready for sampling."""

    def __init__(self, y, design, encoder):
        self.y = np.asarray(y, dtype=float)
        self.design = design
        self.encoder = encoder
        if len(self.y) == 0:
            raise ValueError("no observations")
        if design.n != len(self.y):
            raise ValueError("design and response lengths differ")

    @classmethod
    def from_dataset(cls, data, spec=None, encoder=None):
        if encoder is None:
            encoder = Encoder.fit(data, spec)
        return cls(data.y, encoder.design(data), encoder)

    @property
    def spec(self):
        return self.encoder.spec

    @property
    def n(self):
        return len(self.y)


@dataclass
class ChainState:
    """Current values of every unknown.

    ``z`` is stored densely as ``(n, L-1)`` with ``z_active`` marking the
    entries that exist (``l <= min(s_j, L-2)``); inactive entries hold 0.
    """

    mu: np.ndarray
    phi: np.ndarray
    coefs: WeightCoefficients
    s: np.ndarray
    z: np.ndarray
    z_active: np.ndarray
    eta: np.ndarray
    iteration: int = 0
    n_swaps: int = 0
    n_swap_attempts: int = 0

    def copy(self):
        return ChainState(self.mu.copy(), self.phi.copy(), self.coefs.copy(),
                          self.s.copy(), self.z.copy(), self.z_active.copy(),
                          self.eta.copy(), self.iteration, self.n_swaps,
                          self.n_swap_attempts)

    def gamma(self):
        return self.coefs.level[None, :] + self.eta[:, None]


def refresh_eta(state, fd):
    state.eta = fd.design.eta(state.coefs.theta)
    return state.eta


def initial_state(fd, rng):
    """Overdispersed start: atoms at empirical quantiles, coefficients at
    their prior means, indicators by nearest atom."""
    spec = fd.spec
    L = spec.n_components
    pr = spec.priors
    q = (np.arange(L) + 0.5) / L
    mu = np.quantile(fd.y, q)
    phi = np.full(L, pr.a_phi / pr.b_phi)
    coefs = prior_mean_coefficients(fd.encoder)
    s = np.argmin(np.abs(fd.y[:, None] - mu[None, :]), axis=1)
    z = np.zeros((fd.n, L - 1))
    state = ChainState(mu, phi, coefs, s, z, np.zeros_like(z, dtype=bool),
                       np.zeros(fd.n))
    refresh_eta(state, fd)
    update_augmentation(state, fd, rng)
    return state


def draw_from_prior(fd, rng):
    """A state whose parameters are an exact draw from the prior; indicators
    and auxiliaries are then drawn given those parameters (no data used)."""
    spec = fd.spec
    pr = spec.priors
    L = spec.n_components
    coefs = prior_mean_coefficients(fd.encoder)
    coefs.eps["level"] = float(rng.gamma(pr.c, 1.0 / pr.d))
    m = spec.prior_level_means()
    coefs.level[:-1] = m[:-1] + rng.standard_normal(L - 1) / np.sqrt(coefs.eps["level"])
    coefs.level[-1] = 0.0
    for b in spec.blocks:
        K = fd.encoder.block_size(b)
        if b in CATEGORICAL_BLOCKS:
            e = float(rng.gamma(pr.c, 1.0 / pr.d))
            coefs.eps[b] = e
            th = rng.standard_normal(K) / np.sqrt(e)
            th[~fd.encoder.free_mask(b)] = 0.0
        else:
            th = pr.spline_mean + rng.standard_normal(K) / np.sqrt(pr.spline_precision)
        coefs.theta[b] = th
    phi = rng.gamma(pr.a_phi, 1.0 / pr.b_phi, size=L)
    mu = pr.zeta + rng.standard_normal(L) / np.sqrt(pr.xi * phi)
    state = ChainState(mu, phi, coefs, np.zeros(fd.n, dtype=np.int64),
                       np.zeros((fd.n, L - 1)), np.zeros((fd.n, L - 1), dtype=bool),
                       np.zeros(fd.n))
    refresh_eta(state, fd)
    return state


def simulate_response(state, fd, rng):
    """Draw ``(s, y)`` from the likelihood at the state's parameters."""
    w = np.exp(log_weights_rows(state.coefs.level, state.eta))
    c = np.cumsum(w, axis=1)
    u = rng.random(fd.n) * c[:, -1]
    s = np.minimum((c < u[:, None]).sum(axis=1), w.shape[1] - 1)
    y = state.mu[s] + rng.standard_normal(fd.n) / np.sqrt(state.phi[s])
    return s, y


def kernel_posterior(y, s, L, priors):
    """Normal-Gamma posterior parameters per component.

    Returns ``(zeta_n, xi_n, a_n, b_n)`` with ``mu | phi ~ N(zeta_n, xi_n
    phi)`` and ``phi ~ Gamma(a_n, b_n)``.
    """
    n = np.bincount(s, minlength=L).astype(float)
    h = np.bincount(s, weights=y, minlength=L)
    ybar = np.divide(h, n, out=np.zeros(L), where=n > 0)
    ss = np.bincount(s, weights=(y - ybar[s]) ** 2, minlength=L)
    xi, zeta = priors.xi, priors.zeta
    xi_n = xi + n
    zeta_n = (xi * zeta + h) / xi_n
    a_n = priors.a_phi + 0.5 * n
    b_n = priors.b_phi + 0.5 * ss + 0.5 * xi * n * (ybar - zeta) ** 2 / xi_n
    return zeta_n, xi_n, a_n, b_n


def update_kernel_params(state, fd, rng):
    """Joint conjugate draw of every ``(mu_l, phi_l)``; empty components are
    drawn from the prior."""
    L = fd.spec.n_components
    zeta_n, xi_n, a_n, b_n = kernel_posterior(fd.y, state.s, L, fd.spec.priors)
    phi = rng.gamma(a_n, 1.0 / b_n)
    phi = np.maximum(phi, np.finfo(float).tiny)
    mu = zeta_n + rng.standard_normal(L) / np.sqrt(xi_n * phi)
    state.mu, state.phi = mu, phi
    return mu, phi


def log_weights_rows(level, eta):
    """``(n, L)`` log stick weights, evaluated once per distinct ``eta``."""
    uniq, inv = np.unique(eta, return_inverse=True)
    if len(uniq) * 2 > len(eta):
        return log_stick_breaking_weights(level[None, :] + eta[:, None])
    return log_stick_breaking_weights(level[None, :] + uniq[:, None])[inv]


def indicator_logprobs(state, fd):
    lw = log_weights_rows(state.coefs.level, state.eta)
    lk = normal_logpdf(fd.y[:, None], state.mu[None, :], state.phi[None, :])
    lp = lw + lk
    lp -= special.logsumexp(lp, axis=1, keepdims=True)
    return lp


def update_indicators(state, fd, rng):
    """Draw each ``s_j`` from its categorical full conditional (log space)."""
    p = np.exp(indicator_logprobs(state, fd))
    c = np.cumsum(p, axis=1)
    u = rng.random(fd.n) * c[:, -1]
    s = (c < u[:, None]).sum(axis=1)
    state.s = np.minimum(s, p.shape[1] - 1)
    return state.s


def update_augmentation(state, fd, rng, rows=None):
    """Draw ``z_jl ~ N(gamma_l(x_j), 1)`` truncated to the sign set implied by
    ``s_j`` for every ``l <= min(s_j, L-2)``."""
    L = fd.spec.n_components
    cols = np.arange(L - 1)
    s = state.s if rows is None else state.s[rows]
    active = cols[None, :] <= np.minimum(s, L - 2)[:, None]
    above = active & (cols[None, :] == s[:, None])
    eta = state.eta if rows is None else state.eta[rows]
    jj, ll = np.nonzero(active)
    mean = state.coefs.level[ll] + eta[jj]
    draws = sample_truncated_normal_signs(mean, above[jj, ll], rng)
    z = np.zeros(active.shape)
    z[jj, ll] = draws
    if rows is None:
        state.z, state.z_active = z, active
    else:
        state.z[rows], state.z_active[rows] = z, active
    return state.z


def _draw_normal_block(prec, rhs, rng):
    """Draw from N(prec^-1 rhs, prec^-1) for a symmetric positive definite
    precision matrix."""
    C = np.linalg.cholesky(prec)
    mean = np.linalg.solve(C.T, np.linalg.solve(C, rhs))
    return mean + np.linalg.solve(C.T, rng.standard_normal(len(rhs)))


def update_level_block(state, fd, rng):
    """Normal conditional of the stick intercepts: stick ``l`` sees every
    record with ``s_j >= l``."""
    co = state.coefs
    L = fd.spec.n_components
    act = state.z_active
    m_prior = fd.spec.prior_level_means()
    eps1 = co.eps["level"]
    resid = np.where(act, state.z - state.eta[:, None], 0.0)
    prec = eps1 + act.sum(axis=0)
    mean = (eps1 * m_prior[:-1] + resid.sum(axis=0)) / prec
    co.level[:-1] = mean + rng.standard_normal(L - 1) / np.sqrt(prec)
    co.level[-1] = 0.0
    return co.level


def _record_stats(state):
    # active auxiliaries per record and their summed residual from the sticks
    act = state.z_active
    m_j = act.sum(axis=1).astype(float)
    R_j = np.where(act, state.z - state.coefs.level[None, :-1], 0.0).sum(axis=1)
    return m_j, R_j


def update_shared_block(state, fd, rng, b, stats=None):
    """Normal conditional of one predictor block shared by every stick."""
    pr = fd.spec.priors
    co = state.coefs
    m_j, R_j = _record_stats(state) if stats is None else stats
    th = co.theta[b]
    K = len(th)
    if b in CATEGORICAL_BLOCKS:
        c = fd.design.codes[b]
        seen = c >= 0
        other = state.eta - np.where(seen, th[np.maximum(c, 0)], 0.0)
        cnt = np.bincount(c[seen], weights=m_j[seen], minlength=K)
        tot = np.bincount(c[seen], weights=(R_j - m_j * other)[seen], minlength=K)
        p = co.eps[b] + cnt
        new = tot / p + rng.standard_normal(K) / np.sqrt(p)
        new[~fd.encoder.free_mask(b)] = 0.0
        state.eta = other + np.where(seen, new[np.maximum(c, 0)], 0.0)
    else:
        B = fd.design.basis[b]
        other = state.eta - B @ th
        P = pr.spline_precision * np.eye(K) + (B * m_j[:, None]).T @ B
        rhs = pr.spline_precision * pr.spline_mean * np.ones(K) \
            + B.T @ (R_j - m_j * other)
        new = _draw_normal_block(P, rhs, rng)
        state.eta = other + B @ new
    co.theta[b] = new
    return new


def update_weight_coefficients(state, fd, rng):
    """Normal full conditionals of the level block and every predictor block
    under ``z_jl = gamma_l(x_j) + N(0, 1)``; reference cells stay at 0."""
    update_level_block(state, fd, rng)
    stats = _record_stats(state)
    for b in fd.spec.blocks:
        update_shared_block(state, fd, rng, b, stats)
    # rebuild from the coefficients so a resumed chain sees identical bits
    refresh_eta(state, fd)
    return state.coefs


def update_hyper_precisions(state, fd, rng):
    """Gamma full conditionals of the block precisions, centred at the prior
    means (``Phi^{-1}(1/(L-l+1))`` for the level block, 0 otherwise)."""
    spec = fd.spec
    pr = spec.priors
    co = state.coefs
    dev = co.level[:-1] - spec.prior_level_means()[:-1]
    co.eps["level"] = float(rng.gamma(pr.c + 0.5 * len(dev),
                                      1.0 / (pr.d + 0.5 * dev @ dev)))
    for b in spec.categorical_blocks:
        free = fd.encoder.free_mask(b)
        th = co.theta[b][free]
        co.eps[b] = float(rng.gamma(pr.c + 0.5 * len(th),
                                    1.0 / (pr.d + 0.5 * th @ th)))
    return co.eps


def _log1m_phi(g):
    return special.log_ndtr(-g)


def label_swap_log_ratio(state, fd, l):
    """Log Metropolis-Hastings ratio for swapping components ``l`` and
    ``l+1`` (0-based)."""
    L = fd.spec.n_components
    s = state.s
    eta = state.eta
    lev = state.coefs.level
    in_l = eta[s == l]
    in_r = eta[s == l + 1]
    if l == L - 2:
        # last pair: atoms and indicators swap, sticks stay
        g = lev[l]
        odds_r = special.log_ndtr(g + in_r) - special.log_ndtr(-(g + in_r))
        odds_l = special.log_ndtr(g + in_l) - special.log_ndtr(-(g + in_l))
        return float(odds_r.sum() - odds_l.sum())
    m = fd.spec.prior_level_means()
    e = state.coefs.eps["level"]
    logF = (normal_logpdf(lev[l], m[l + 1], e) + normal_logpdf(lev[l + 1], m[l], e)
            - normal_logpdf(lev[l], m[l], e) - normal_logpdf(lev[l + 1], m[l + 1], e))
    return float(logF + _log1m_phi(lev[l + 1] + in_l).sum()
                 - _log1m_phi(lev[l] + in_r).sum())


def apply_label_swap(state, fd, l):
    L = fd.spec.n_components
    idx = np.arange(L)
    idx[[l, l + 1]] = [l + 1, l]
    state.mu = state.mu[idx]
    state.phi = state.phi[idx]
    if l < L - 2:
        state.coefs.level = state.coefs.level[idx]
    s = state.s
    a, b = s == l, s == l + 1
    s = s.copy()
    s[a], s[b] = l + 1, l
    state.s = s


def label_switch_move(state, fd, rng, l=None):
    """Propose swapping adjacent labels ``l, l+1``; returns acceptance flag."""
    L = fd.spec.n_components
    if l is None:
        l = int(rng.integers(0, L - 1))
    lr = label_swap_log_ratio(state, fd, l)
    u = rng.random()
    state.n_swap_attempts += 1
    if u == 0.0 or math.log(u) < lr:
        apply_label_swap(state, fd, l)
        state.n_swaps += 1
        return True
    return False


def label_moves(state, fd, rng, attempts=None):
    L = fd.spec.n_components
    accepted = False
    s_before = state.s
    if attempts is None:
        for l in range(L - 1):
            accepted |= label_switch_move(state, fd, rng, l)
    else:
        for _ in range(attempts):
            accepted |= label_switch_move(state, fd, rng)
    if accepted:
        # keep the auxiliary sign pattern consistent with the new labels
        rows = np.nonzero(state.s != s_before)[0]
        if len(rows):
            update_augmentation(state, fd, rng, rows)
    return accepted


def sweep(state, fd, rng, config):
    update_kernel_params(state, fd, rng)
    update_indicators(state, fd, rng)
    update_augmentation(state, fd, rng)
    update_weight_coefficients(state, fd, rng)
    update_hyper_precisions(state, fd, rng)
    if config.label_moves:
        label_moves(state, fd, rng, config.label_move_attempts)
    state.iteration += 1
    return state


class PosteriorDraws:
    """Stacked retained draws of ``(mu, phi, Theta, eps)``."""

    def __init__(self, encoder, mu, phi, level, theta, eps, iterations=None):
        self.encoder = encoder
        self.mu = np.asarray(mu, dtype=float)
        self.phi = np.asarray(phi, dtype=float)
        self.level = np.asarray(level, dtype=float)
        self.theta = {k: np.asarray(v, dtype=float) for k, v in theta.items()}
        self.eps = {k: np.asarray(v, dtype=float) for k, v in eps.items()}
        D = self.mu.shape[0]
        self.iterations = np.arange(D) if iterations is None else np.asarray(iterations)

    @property
    def spec(self):
        return self.encoder.spec

    def __len__(self):
        return self.mu.shape[0]

    def subset(self, idx):
        return PosteriorDraws(self.encoder, self.mu[idx], self.phi[idx],
                              self.level[idx],
                              {k: v[idx] for k, v in self.theta.items()},
                              {k: v[idx] for k, v in self.eps.items()},
                              self.iterations[idx])

    @classmethod
    def concat(cls, parts):
        parts = list(parts)
        p0 = parts[0]
        return cls(p0.encoder,
                   np.concatenate([p.mu for p in parts]),
                   np.concatenate([p.phi for p in parts]),
                   np.concatenate([p.level for p in parts]),
                   {k: np.concatenate([p.theta[k] for p in parts]) for k in p0.theta},
                   {k: np.concatenate([p.eps[k] for p in parts]) for k in p0.eps},
                   np.concatenate([p.iterations for p in parts]))

    def gamma(self, design):
        """``(D, n, L)`` stick predictors for every draw and row."""
        eta = design.eta_draws(self.theta)
        return self.level[:, None, :] + eta[:, :, None]

    def weights(self, design):
        return stick_breaking_weights(self.gamma(design))

    def mean_weights(self, design):
        """Posterior-mean weights per row, accumulated draw by draw."""
        out = np.zeros((design.n, self.mu.shape[1]))
        for i in range(len(self)):
            out += self.weights_at(design, i)
        return out / len(self)

    def weights_at(self, design, i):
        eta = design.eta({k: v[i] for k, v in self.theta.items()})
        return stick_breaking_weights(self.level[i][None, :] + eta[:, None])


class _Collector:
    def __init__(self, L, blocks_shape):
        self.mu, self.phi, self.level, self.iters = [], [], [], []
        self.theta = {k: [] for k in blocks_shape}
        self.eps = {}

    def add(self, state):
        self.mu.append(state.mu.copy())
        self.phi.append(state.phi.copy())
        self.level.append(state.coefs.level.copy())
        for k, v in state.coefs.theta.items():
            self.theta[k].append(v.copy())
        for k, v in state.coefs.eps.items():
            self.eps.setdefault(k, []).append(v)
        self.iters.append(state.iteration)

    def draws(self, encoder, L):
        empty = np.zeros((0, L))
        return PosteriorDraws(
            encoder,
            np.array(self.mu) if self.mu else empty,
            np.array(self.phi) if self.phi else empty,
            np.array(self.level) if self.level else empty,
            {k: np.array(v).reshape(len(v), -1) for k, v in self.theta.items()},
            {k: np.array(v) for k, v in self.eps.items()},
            np.array(self.iters, dtype=np.int64))


def run_chain(fd, config, checkpoint=None, resume=None, stop_after=None,
              state=None, progress=None):
    """Run one chain and return its :class:`PosteriorDraws`.

    ``checkpoint`` is a path written every ``config.checkpoint_every``
    sweeps; ``resume`` restarts bit-exactly from such a file.
    ``stop_after`` halts after that many total sweeps (used to simulate an
    interrupted run).
    """
    L = fd.spec.n_components
    col = _Collector(L, fd.spec.blocks)
    if resume is not None:
        state, rng, col = load_checkpoint(resume, fd)
    else:
        rng = rng_stream(config.seed, config.stream_id)
        if state is None:
            state = initial_state(fd, rng)
    while state.iteration < config.iterations:
        sweep(state, fd, rng, config)
        it = state.iteration
        if it > config.burn_in and (it - config.burn_in) % config.thin == 0:
            col.add(state)
        if progress is not None:
            progress(state)
        if checkpoint is not None and config.checkpoint_every \
                and it % config.checkpoint_every == 0:
            save_checkpoint(checkpoint, state, rng, col, config)
        if stop_after is not None and it >= stop_after:
            break
    log.debug("chain %d: %d/%d label swaps accepted", config.stream_id,
              state.n_swaps, state.n_swap_attempts)
    out = col.draws(fd.encoder, L)
    out.swap_rate = state.n_swaps / max(state.n_swap_attempts, 1)
    return out


def _chain_worker(args):
    fd, config = args
    return run_chain(fd, config)


def run_chains(fd, config, n_chains=1, workers=1):
    """Independent chains on streams ``0..n_chains-1``; results are identical
    for any worker count."""
    configs = [replace(config, stream_id=config.stream_id + c) for c in range(n_chains)]
    if workers <= 1 or n_chains == 1:
        return [run_chain(fd, c) for c in configs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(_chain_worker, [(fd, c) for c in configs]))


def save_checkpoint(path, state, rng, collector, config):
    arrays = {
        "mu": state.mu, "phi": state.phi, "level": state.coefs.level,
        "s": state.s, "z": state.z, "z_active": state.z_active,
    }
    for k, v in state.coefs.theta.items():
        arrays[f"theta__{k}"] = v
    for k, v in collector.theta.items():
        arrays[f"draw_theta__{k}"] = np.array(v).reshape(len(v), -1)
    arrays["draw_mu"] = np.array(collector.mu).reshape(len(collector.mu), -1)
    arrays["draw_phi"] = np.array(collector.phi).reshape(len(collector.phi), -1)
    arrays["draw_level"] = np.array(collector.level).reshape(len(collector.level), -1)
    arrays["draw_iters"] = np.array(collector.iters, dtype=np.int64)
    meta = {
        "iteration": state.iteration,
        "n_swaps": state.n_swaps,
        "n_swap_attempts": state.n_swap_attempts,
        "eps": state.coefs.eps,
        "draw_eps": collector.eps,
        "rng": rng_state(rng),
        "config": config.to_dict(),
    }
    arrays["meta"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_checkpoint(path, fd):
    with np.load(path) as f:
        a = {k: f[k] for k in f.files}
    meta = json.loads(bytes(a.pop("meta")).decode())
    theta = {k[len("theta__"):]: v for k, v in a.items() if k.startswith("theta__")}
    coefs = WeightCoefficients(a["level"].copy(), theta, dict(meta["eps"]))
    state = ChainState(a["mu"], a["phi"], coefs, a["s"].astype(np.int64), a["z"],
                       a["z_active"].astype(bool), np.zeros(fd.n),
                       meta["iteration"], meta["n_swaps"], meta["n_swap_attempts"])
    refresh_eta(state, fd)
    col = _Collector(fd.spec.n_components, fd.spec.blocks)
    col.mu = list(a["draw_mu"])
    col.phi = list(a["draw_phi"])
    col.level = list(a["draw_level"])
    col.iters = [int(i) for i in a["draw_iters"]]
    for k in col.theta:
        col.theta[k] = list(a[f"draw_theta__{k}"])
    col.eps = {k: list(v) for k, v in meta["draw_eps"].items()}
    return state, restore_rng(meta["rng"]), col


def check_state(state, fd):
    """Raise AssertionError when a chain invariant is broken."""
    L = fd.spec.n_components
    s = state.s
    assert s.min() >= 0 and s.max() < L, "indicator out of range"
    assert np.all(state.phi > 0), "non-positive kernel precision"
    cols = np.arange(L - 1)
    act = cols[None, :] <= np.minimum(s, L - 2)[:, None]
    assert np.array_equal(act, state.z_active), "auxiliary support mismatch"
    neg = act & (cols[None, :] < s[:, None])
    pos = act & (cols[None, :] == s[:, None])
    assert np.all(state.z[neg] < 0), "auxiliary sign violated (below)"
    assert np.all(state.z[pos] >= 0), "auxiliary sign violated (above)"
    for b in fd.spec.categorical_blocks:
        assert np.all(state.coefs.theta[b][~fd.encoder.free_mask(b)] == 0.0), \
            f"reference level of {b} moved"
    assert all(v > 0 for v in state.coefs.eps.values()), "non-positive precision"
    return True


def config_hash(*docs):
    h = hashlib.sha256()
    for d in docs:
        h.update(json.dumps(d, sort_keys=True, default=str).encode())
    return h.hexdigest()[:16]


def fit_model(data, spec, config, n_chains=1, workers=1):
    """Encode ``data``, run ``n_chains`` chains and pool their draws."""
    fd = FitData.from_dataset(data, spec)
    chains = run_chains(fd, config, n_chains, workers)
    out = PosteriorDraws.concat(chains)
    out.swap_rate = float(np.mean([c.swap_rate for c in chains]))
    return out

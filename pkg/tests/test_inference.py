import json
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from oracles import hand_draws, tiny_dataset
from psbp.inference import (DEFAULT_GRID, DensityEstimate, DrawMixtures,
                            InferenceError, LossSpec, baseline_distribution,
                            expected_loss, marginal_density,
                            optimal_service, overage_underage_ratio,
                            predictive_density, prob_worse)
from psbp.data import SynthSpec, synth_generate
from psbp.model import Encoder, ModelSpec, Priors
from psbp.sampler import SamplerConfig, fit_model

GRID = np.linspace(-40, 80, 1201)


def _encoder(blocks=("airline",), n=8, airlines=("A", "B")):
    data = tiny_dataset(np.zeros(n), airline=[airlines[i % len(airlines)] for i in range(n)],
                        route=["R1", "R2"] * (n // 2))
    return Encoder.fit(data, ModelSpec(n_components=2, blocks=blocks)), data


def _single_normal(mu, sd, D=1):
    """Draws whose every mixture is N(mu, sd^2): both atoms coincide."""
    enc, _ = _encoder()
    return hand_draws(enc, np.full((D, 2), mu), 1.0 / sd ** 2)


def _quiet(f, *a, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return f(*a, **kw)


# -- predictive density -------------------------------------------------------

def test_single_draw_standard_normal():
    draws = _single_normal(0.0, 1.0)
    with pytest.warns(UserWarning, match="posterior draws"):
        est = predictive_density({"airline": "A"}, draws, GRID)
    np.testing.assert_allclose(est.mean, stats.norm.pdf(GRID), atol=1e-14)
    np.testing.assert_allclose(est.cdf, stats.norm.cdf(GRID), atol=1e-14)


def test_identical_draws_give_zero_width_bands():
    est = _quiet(predictive_density, {"airline": "A"}, _single_normal(3.0, 2.0, D=2), GRID)
    np.testing.assert_array_equal(est.lower, est.mean)
    np.testing.assert_array_equal(est.upper, est.mean)


def test_empty_draws_raise():
    draws = _single_normal(0.0, 1.0)
    with pytest.raises(InferenceError):
        predictive_density({"airline": "A"}, draws.subset(np.arange(0)))


def test_missing_predictor_raises():
    with pytest.raises(InferenceError, match="airline"):
        _quiet(predictive_density, {"route": "R1"}, _single_normal(0.0, 1.0))


def test_fitted_density_invariants(small_fit):
    data, _, draws = small_fit
    for x in ({"airline": "A1", "route": "R1", "dur": 3.0},
              {"airline": "A2", "route": "R2", "dur": 8.0}):
        est = _quiet(predictive_density, x, draws)
        assert abs(est.integral() - 1) < 1e-3
        assert np.all(est.mean >= 0)
        assert np.all(np.diff(est.cdf) >= 0)
        assert abs(est.cdf[-1] - 1) < 1e-3
        assert np.all(est.lower <= est.mean) and np.all(est.mean <= est.upper)


def test_density_table_and_document(tmp_path):
    est = _quiet(predictive_density, {"airline": "B"}, _single_normal(1.0, 2.0), GRID,
                 label="B")
    path = tmp_path / "density.csv"
    est.write_csv(path)
    table = np.loadtxt(path, delimiter=",", skiprows=1)
    np.testing.assert_array_equal(table[:, 0], GRID)
    np.testing.assert_array_equal(table[:, 1], est.mean)
    doc = json.loads(json.dumps(est.to_dict()))
    assert doc["label"] == "B" and len(doc["cdf"]) == len(GRID)


# -- expected loss ------------------------------------------------------------

@pytest.mark.parametrize("mu,sd", [(3.0, 2.0), (-2.64, 10.0), (40.0, 0.5)])
@pytest.mark.parametrize("C", [1.0, 2.5])
def test_loss_identities(mu, sd, C):
    mix = DrawMixtures(np.array([[0.3, 0.7]]), np.full((1, 2), mu), np.full((1, 2), sd ** -2))
    assert expected_loss(mix, LossSpec("linear", C)).mean == pytest.approx(C * mu, abs=1e-8)
    assert expected_loss(mix, LossSpec("quadratic", C)).mean == \
        pytest.approx(C * (sd ** 2 + mu ** 2), abs=1e-8)
    assert expected_loss(mix, LossSpec("threshold", C, tau=18.0)).mean == \
        pytest.approx(C * stats.norm.sf(18.0, mu, sd), abs=1e-8)


def test_loss_examples():
    draws = _single_normal(3.0, 2.0)
    est = _quiet(predictive_density, {"airline": "A"}, draws)
    assert expected_loss(est, LossSpec("linear")).mean == pytest.approx(3.0, abs=1e-12)
    assert expected_loss(est, LossSpec("quadratic")).mean == pytest.approx(13.0, abs=1e-12)
    std = _quiet(predictive_density, {"airline": "A"}, _single_normal(0.0, 1.0))
    tail = expected_loss(std, LossSpec("threshold", tau=18.0)).mean
    assert tail == pytest.approx(stats.norm.sf(18.0), rel=1e-10)
    assert 1e-73 < tail < 1e-71


def test_grid_loss_path_approximates_closed_form():
    est = DensityEstimate.from_grid(DEFAULT_GRID, stats.norm.pdf(DEFAULT_GRID, 3.0, 2.0))
    assert expected_loss(est, LossSpec("linear")).mean == pytest.approx(3.0, abs=1e-6)
    assert expected_loss(est, LossSpec("quadratic")).mean == pytest.approx(13.0, abs=1e-3)
    assert expected_loss(est, LossSpec("threshold", tau=5.0)).mean == \
        pytest.approx(stats.norm.sf(5.0, 3.0, 2.0), abs=1e-3)


@given(w=st.lists(st.floats(0.01, 1.0), min_size=2, max_size=6),
       mu=st.lists(st.floats(-50, 50), min_size=7, max_size=7),
       extra=st.floats(-1e3, 1e3))
def test_linear_loss_ignores_zero_weight_component(w, mu, extra):
    w = np.array(w) / np.sum(w)
    L = len(w)
    base = DrawMixtures(w[None, :], np.array(mu[:L])[None, :], np.ones((1, L)))
    more = DrawMixtures(np.append(w, 0.0)[None, :],
                        np.append(mu[:L], extra)[None, :], np.ones((1, L + 1)))
    spec = LossSpec("linear")
    assert expected_loss(more, spec).mean == pytest.approx(expected_loss(base, spec).mean,
                                                           abs=1e-12)


def test_loss_spec_validation():
    with pytest.raises(ValueError):
        LossSpec("cubic")
    with pytest.raises(ValueError):
        LossSpec("linear", C=0.0)


# -- service choice -----------------------------------------------------------

def test_single_candidate_is_optimal():
    draws = _single_normal(1.0, 1.0, D=3)
    out = _quiet(optimal_service, {}, {"only": {"airline": "A"}}, LossSpec(), draws)
    assert [r.service_id for r in out] == ["only"]
    assert out[0].prob_best == 1.0
    assert out[0].settings["dev_start"] == 0.0


def test_identical_candidates_tie_break_on_id():
    draws = _single_normal(1.0, 1.0, D=3)
    svc = {"zeta": {"airline": "A"}, "alpha": {"airline": "A"}, "mid": {"airline": "A"}}
    out = _quiet(optimal_service, {}, svc, LossSpec(), draws)
    assert [r.service_id for r in out] == ["alpha", "mid", "zeta"]
    assert len({r.loss.mean for r in out}) == 1


def test_ranking_matches_recomputed_means(small_fit):
    data, _, draws = small_fit
    demand = {"route": "R1"}
    svc = [{"id": f"{a}-{d}", "airline": a, "dur": d}
           for a in ("A1", "A2") for d in (2.0, 5.0, 9.0)]
    out = _quiet(optimal_service, demand, svc, LossSpec("linear"), draws)
    means = {}
    for s in svc:
        x = dict(demand, airline=s["airline"], dur=s["dur"], dev_start=0.0)
        est = _quiet(predictive_density, x, draws)
        means[s["id"]] = float(np.mean(est.mixtures.mean()))
    assert [r.service_id for r in out] == sorted(means, key=lambda k: (means[k], k))
    assert sum(r.prob_best for r in out) == pytest.approx(1.0)
    with pytest.raises(InferenceError):
        optimal_service(demand, {}, LossSpec(), draws)


def test_mean_shifted_airline_ranks_worse():
    rng = np.random.default_rng(21)
    n = 300
    airline = np.array(["A", "B"] * (n // 2))
    y = rng.normal(0.0, 4.0, n) + np.where(airline == "A", 10.0, 0.0)
    data = tiny_dataset(y, airline=airline)
    spec = ModelSpec(n_components=8, blocks=("airline",), priors=Priors.from_data(y))
    draws = _quiet(fit_model, data, spec,
                   SamplerConfig(iterations=1500, burn_in=500, thin=5, seed=2))
    out = optimal_service({}, {"A": {"airline": "A"}, "B": {"airline": "B"}},
                          LossSpec("linear"), draws)
    assert [r.service_id for r in out] == ["B", "A"]
    assert prob_worse(out[1], out[0]) > 0.95


# -- marginalisation ----------------------------------------------------------

def test_marginal_with_degenerate_remainder_equals_predictive(small_fit):
    data, _, draws = small_fit
    one = data.subset(np.flatnonzero((data["airline"] == "A2") & (data["route"] == "R1"))[:1])
    one = one.concat(one).concat(one)
    x = {f: one[f][0] for f in ("airline", "route", "month", "legs")}
    x.update(dur=float(one["dur"][0]))
    m = _quiet(marginal_density, {"airline": "A2"}, draws, one)
    p = _quiet(predictive_density, x, draws)
    np.testing.assert_allclose(m.mean, p.mean, rtol=0, atol=1e-12)


def test_marginal_over_all_predictors_equals_predictive(small_fit):
    data, _, draws = small_fit
    x = {"airline": "A1", "route": "R2", "month": "1", "legs": "1", "dur": 4.0}
    m = _quiet(marginal_density, x, draws, data)
    p = _quiet(predictive_density, x, draws)
    np.testing.assert_allclose(m.mean, p.mean, rtol=0, atol=1e-12)


def test_marginal_two_cells_is_their_average(small_fit):
    data, _, draws = small_fit
    a = data.subset(np.flatnonzero((data["airline"] == "A1") & (data["route"] == "R1"))[:1])
    b = data.subset(np.flatnonzero((data["airline"] == "A1") & (data["route"] == "R2"))[:1])
    pool = a.concat(b).concat(b).concat(a)
    m = _quiet(marginal_density, {"airline": "A1", "dur": 3.0}, draws, pool)
    pa = _quiet(predictive_density, {"airline": "A1", "route": "R1", "dur": 3.0}, draws)
    pb = _quiet(predictive_density, {"airline": "A1", "route": "R2", "dur": 3.0}, draws)
    np.testing.assert_allclose(m.mean, 0.5 * (pa.mean + pb.mean), rtol=0, atol=1e-12)


def test_marginal_without_matches_raises(small_fit):
    data, _, draws = small_fit
    with pytest.raises(InferenceError, match="Z9"):
        marginal_density({"airline": "Z9"}, draws, data)


# -- baselines and ratios -----------------------------------------------------

def test_baseline_with_airline_only_equals_predictive():
    enc, data = _encoder()
    rng = np.random.default_rng(3)
    D = 120
    th = np.column_stack([np.zeros(D), rng.normal(0.5, 0.2, D)])
    draws = hand_draws(enc, rng.normal([0, 20], 1, (D, 2)), 0.1,
                       level=np.column_stack([rng.normal(0, 0.3, D), np.zeros(D)]),
                       theta={"airline": th})
    for a in ("A", "B"):
        base = baseline_distribution(a, draws, data)
        pred = predictive_density({"airline": a}, draws)
        np.testing.assert_allclose(base.mean, pred.mean, rtol=0, atol=1e-14)


def test_identical_airline_effects_give_identical_baselines():
    enc, data = _encoder(blocks=("airline", "route"))
    D = 100
    rng = np.random.default_rng(4)
    draws = hand_draws(enc, rng.normal([0, 20], 1, (D, 2)), 0.1,
                       theta={"route": np.column_stack([np.zeros(D), rng.normal(0, 1, D)])})
    a = baseline_distribution("A", draws, data)
    b = baseline_distribution("B", draws, data)
    np.testing.assert_array_equal(a.mean, b.mean)


def test_baseline_follows_synthetic_weight_shift():
    # A2 lowers the first stick, moving mass from the 0h atom to the +24h atom
    sp = SynthSpec(level=(0.5, 0.0), mu=(0.0, 24.0), sd=(4.0, 5.0),
                   effects={"airline": {"A2": -1.0}, "route": {"R2": 0.3}},
                   n_per_cell=150, seed=8)
    data, truth = synth_generate(sp)
    spec = ModelSpec(n_components=6, blocks=("airline", "route"),
                     priors=Priors.from_data(data.y))
    draws = _quiet(fit_model, data, spec,
                   SamplerConfig(iterations=1500, burn_in=500, thin=5, seed=1))

    def mass_near(est, centre):
        sel = np.abs(est.grid - centre) <= 12
        return np.trapezoid(est.mean[sel], est.grid[sel])

    b1 = baseline_distribution("A1", draws, data)
    b2 = baseline_distribution("A2", draws, data)
    assert mass_near(b2, 24.0) > mass_near(b1, 24.0) + 0.2
    assert mass_near(b2, 0.0) < mass_near(b1, 0.0) - 0.2
    with pytest.raises(InferenceError):
        baseline_distribution("nope", draws, data)
    with pytest.raises(ValueError):
        baseline_distribution("A1", draws, data, weighting="median")


def test_ratio_closed_form_normal():
    est = _quiet(predictive_density, {"airline": "A"}, _single_normal(-2.64, 10.0))
    r = overage_underage_ratio(est)
    # 1/Phi(0.264) - 1 = 0.6553
    assert r.mean == pytest.approx(1 / stats.norm.cdf(0.264) - 1, abs=1e-12)


@pytest.mark.parametrize("q,ratio", [(0.2, 4.0), (0.5, 1.0), (0.8, 0.25)])
def test_ratio_inverts_known_on_time_probability(q, ratio):
    mu = -10.0 * stats.norm.ppf(q)
    est = _quiet(predictive_density, {"airline": "A"}, _single_normal(mu, 10.0))
    assert overage_underage_ratio(est).mean == pytest.approx(ratio, abs=1e-12)
    gridded = DensityEstimate.from_grid(DEFAULT_GRID, stats.norm.pdf(DEFAULT_GRID, mu, 10.0))
    assert overage_underage_ratio(gridded).mean == pytest.approx(ratio, abs=1e-3)


def test_ratio_undefined_at_certain_outcomes():
    est = _quiet(predictive_density, {"airline": "A"}, _single_normal(200.0, 1.0))
    with pytest.raises(InferenceError):
        overage_underage_ratio(est)

import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from psbp.data import SynthSpec, bimodal_spec, synth_generate
from psbp.model import ModelSpec, Priors
from psbp.sampler import SamplerConfig, fit_model

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def bimodal_data():
    return synth_generate(bimodal_spec(seed=11, n_per_cell=100))


@pytest.fixture(scope="session")
def small_fit(bimodal_data):
    """A short chain on the multimodal synthetic set, shared by read-only tests."""
    data, truth = bimodal_data
    spec = ModelSpec(n_components=10, blocks=("airline", "route", "dur"),
                     priors=Priors.from_data(data.y))
    cfg = SamplerConfig(iterations=1200, burn_in=600, thin=5, seed=3)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        draws = fit_model(data, spec, cfg)
    return data, truth, draws


@pytest.fixture(scope="session")
def three_cell_truth():
    sp = SynthSpec(level=(0.3, 0.2, 0.0), mu=(0.0, 24.0, 48.0), sd=(4.0, 5.0, 6.0),
                   effects={"airline": {"A2": -0.6}, "route": {"R2": 0.5}},
                   n_per_cell=100, seed=5)
    return sp


def ks_distance(sample, cdf):
    """Kolmogorov-Smirnov distance between a sample and a cdf callable."""
    x = np.sort(np.asarray(sample, dtype=float))
    n = len(x)
    F = cdf(x)
    return float(max(np.max(np.arange(1, n + 1) / n - F), np.max(F - np.arange(n) / n)))


# -- acceptance summary ---------------------------------------------------------

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, name): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, name = mark.args
    failed = rep.failed or (rep.when == "call" and rep.skipped)
    if rep.when == "call" or failed:
        detail = dict(item.user_properties).get("detail", "")
        prev = _CRITERIA.get(n, (name, True, ""))
        _CRITERIA[n] = (name, prev[1] and not failed, detail or prev[2])


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        name, ok, detail = _CRITERIA[n]
        line = f"[{'PASS' if ok else 'FAIL'}] {n:2d}. {name}"
        terminalreporter.write_line(line + (f"  ({detail})" if detail else ""))

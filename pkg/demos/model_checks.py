"""
Checking the fit against a linear model
=======================================

Held-out residual metrics and a posterior predictive check on the share
of extreme delays, for the mixture and for ordinary least squares.
"""

import warnings

import numpy as np

from psbp.data import bimodal_spec, synth_generate
from psbp.evaluation import (fit_linear_baseline, ppc_statistics, psbp_pointwise,
                             residual_metrics)
from psbp.model import ModelSpec, Priors
from psbp.sampler import SamplerConfig, fit_model

warnings.simplefilter("ignore", UserWarning)

blocks = ("airline", "route", "dur")
train, _ = synth_generate(bimodal_spec(seed=2, n_per_cell=200))
test, _ = synth_generate(bimodal_spec(seed=102, n_per_cell=200))

spec = ModelSpec(n_components=20, blocks=blocks, priors=Priors.from_data(train.y))
draws = fit_model(train, spec, SamplerConfig(iterations=2000, burn_in=1000, thin=5, seed=2))
lm = fit_linear_baseline(train, blocks=blocks)

# point predictions are posterior means; ll is the held-out log density
pred, ll = psbp_pointwise(draws, test)
rows = {"mixture": residual_metrics(test.y, pred, ll),
        "linear": residual_metrics(test.y, lm.predict(test), lm.logpdf(test))}
for name, m in rows.items():
    print(f"{name:8s} rmse={m['rmse']:6.2f} mae={m['mae']:6.2f} ll={m['ll']:9.1f}")

# does each model reproduce the observed statistics of the training data?
rng = np.random.default_rng(2)
for name, model in (("mixture", draws), ("linear", lm)):
    for r in ppc_statistics(train, model, rng):
        flag = "ok" if r.inside else "MISS"
        print(f"{name:8s} {r.statistic:13s} obs={r.observed:8.3f} "
              f"band=[{r.lower:8.3f}, {r.upper:8.3f}] {flag}")

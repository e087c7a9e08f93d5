"""
Airline baselines and implied cost ratios
=========================================

Average out route and schedule effects to get one delay distribution per
airline, then read off the overage/underage ratio that would make the
airline's on-time probability the newsvendor optimum.
"""

import warnings

import numpy as np

from psbp.data import SynthSpec, synth_generate
from psbp.inference import baseline_distribution, overage_underage_ratio
from psbp.model import ModelSpec, Priors
from psbp.sampler import SamplerConfig, fit_model

warnings.simplefilter("ignore", UserWarning)

# airline A2 lowers the first stick, moving mass from "on time" to "a day late"
sp = SynthSpec(level=(0.3, 0.2, 0.0), mu=(0.0, 24.0, 48.0), sd=(4.0, 5.0, 6.0),
               effects={"airline": {"A2": -0.6}, "route": {"R2": 0.5}},
               n_per_cell=300, seed=4)
data, truth = synth_generate(sp)
spec = ModelSpec(n_components=12, blocks=("airline", "route"), priors=Priors.from_data(data.y))
draws = fit_model(data, spec, SamplerConfig(iterations=3000, burn_in=1500, thin=5, seed=4))

grid = np.linspace(-48, 120, 1681)
for airline in ("A1", "A2"):
    base = baseline_distribution(airline, draws, data, grid)
    r = overage_underage_ratio(base)
    print(f"{airline}: F(0) = {base.cdf_at(0.0):.3f}  ratio = {r.mean:.2f} "
          f"[{r.lower:.2f}, {r.upper:.2f}]")

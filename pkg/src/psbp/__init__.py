"""Probit stick-breaking mixtures for conditional transport-risk densities."""

from .bspline import KnotSpec, basis_eval, basis_matrix
from .data import Dataset, SynthSpec, clean, ingest, synth_generate
from .model import (Encoder, MixtureKernel, ModelSpec, Priors, ShipmentRecord,
                    gamma_predictor, mixture_density, stick_breaking_weights)
from .sampler import FitData, PosteriorDraws, SamplerConfig, run_chain

__version__ = "0.1.0"

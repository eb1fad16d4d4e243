"""Collapsed Bayesian stochastic block models.

Exact integrated block likelihoods, a single-site collapsed Gibbs sampler over
partitions, model selection over K, and diagnostic reporting.
"""

__version__ = "0.1.0"

from .errors import ConfigError, CSBMError, DataFormatError, DomainError, NumericalError
from .families import (
    BetaBernoulli,
    BlockPosterior,
    BlockSuffStats,
    DirichletMultinomial,
    FamilySpec,
    GammaPoisson,
    NormalInverseGamma,
    TruncBetaBernoulli,
    TruncGammaPoisson,
    TypeMixture,
    ZeroInflatedPoisson,
)
from .netdata import DyadData, load_edge_list, load_multiplex
from .partition import BlockLedger, Partition
from .priors import CRPPrior, DirichletMultinomialPrior
from .sampler import SamplerConfig, run, select_k
from .synthgen import GenSpec, generate

__all__ = [
    "BetaBernoulli", "BlockLedger", "BlockPosterior", "BlockSuffStats", "CRPPrior",
    "CSBMError", "ConfigError", "DataFormatError", "DirichletMultinomial",
    "DirichletMultinomialPrior", "DomainError", "DyadData", "FamilySpec", "GammaPoisson",
    "GenSpec", "NormalInverseGamma", "NumericalError", "Partition", "SamplerConfig",
    "TruncBetaBernoulli", "TruncGammaPoisson", "TypeMixture", "ZeroInflatedPoisson",
    "generate", "load_edge_list", "load_multiplex", "run", "select_k",
]

"""Partition priors p(z) and their single-site conditionals."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError

DM_CODE, CRP_CODE = 0, 1


def _sizes(part):
    sizes = getattr(part, "sizes", part)
    return np.asarray(sizes, dtype=np.int64)


@dataclass(frozen=True)
class DirichletMultinomialPrior:
    """Symmetric Dirichlet(alpha/K) allocation over labelled vectors with K labels."""

    alpha: float = 1.0
    K: int = 2
    code = DM_CODE

    def __post_init__(self):
        if not (self.alpha > 0) or not math.isfinite(self.alpha):
            raise DomainError("alpha must be positive")
        if int(self.K) != self.K or self.K < 1:
            raise DomainError("K must be a positive integer")

    @property
    def open(self):
        return False

    def to_dict(self):
        return {"type": "dirichlet_multinomial", "alpha": self.alpha}


@dataclass(frozen=True)
class CRPPrior:
    """Chinese restaurant process (Ewens) prior over set partitions."""

    alpha: float = 1.0
    code = CRP_CODE

    def __post_init__(self):
        if not (self.alpha > 0) or not math.isfinite(self.alpha):
            raise DomainError("alpha must be positive")

    @property
    def open(self):
        return True

    @property
    def K(self):
        return 0

    def to_dict(self):
        return {"type": "crp", "alpha": self.alpha}


PartitionPrior = DirichletMultinomialPrior | CRPPrior


def log_prior(prior, part) -> float:
    """Normalized log prior probability of the partition."""
    sizes = _sizes(part)
    n = int(sizes.sum())
    a = prior.alpha
    if isinstance(prior, DirichletMultinomialPrior):
        if len(sizes) > prior.K:
            raise DomainError(f"partition uses {len(sizes)} labels but the prior has K={prior.K}")
        ak = a / prior.K
        out = math.lgamma(a) - math.lgamma(a + n)
        for nk in sizes:
            if nk:
                out += math.lgamma(ak + nk) - math.lgamma(ak)
        return out
    occupied = sizes[sizes > 0]
    out = len(occupied) * math.log(a) + math.lgamma(a) - math.lgamma(a + n)
    for nk in occupied:
        out += math.lgamma(nk)
    return out


def log_conditional(prior, part_without_i, k) -> float:
    """ln p(z_i = k | z_-i) with i already removed.

    Under the CRP, any k at or beyond the number of labels (or an empty label)
    means opening a new cluster.
    """
    sizes = _sizes(part_without_i)
    m = int(sizes.sum())
    a = prior.alpha
    denom = math.log(m + a)
    if isinstance(prior, DirichletMultinomialPrior):
        if not (0 <= k < prior.K):
            raise DomainError(f"label {k} outside 0..{prior.K - 1}; the finite prior has no new clusters")
        nk = sizes[k] if k < len(sizes) else 0
        return math.log(nk + a / prior.K) - denom
    nk = sizes[k] if 0 <= k < len(sizes) else 0
    if k < 0:
        raise DomainError("labels are nonnegative")
    return (math.log(nk) if nk > 0 else math.log(a)) - denom


def prior_from_dict(d, K=None):
    d = dict(d or {})
    kind = d.pop("type", "dirichlet_multinomial")
    alpha = d.pop("alpha", 1.0)
    if d:
        raise ConfigError(f"unknown prior keys: {sorted(d)}")
    try:
        if kind == "dirichlet_multinomial":
            if K is None:
                raise ConfigError("the Dirichlet-multinomial prior needs a fixed K")
            return DirichletMultinomialPrior(float(alpha), int(K))
        if kind == "crp":
            return CRPPrior(float(alpha))
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc
    raise ConfigError(f"unknown prior type {kind!r}; use dirichlet_multinomial or crp")

"""Collapsed block marginals and conjugate posterior summaries.

Every block family integrates its block parameter against a conjugate (or
interval-truncated conjugate) prior, so a block is scored from its
sufficient statistics alone. The statistic layout depends on the data
modality:

=========  ==================================  =====================
modality   values                              families
=========  ==================================  =====================
binary     (edges,)                            BB, TBB, GP, TGP, DM(2)
count      (sum,)                              GP, TGP
count+ZIP  (active dyads, sum over active)     ZIP
real       (sum, sum of squares)               NIG
signed     (positive ties, negative ties)      DM(3)
dyad4      (10, 01, 11 state counts)           DM(4)
=========  ==================================  =====================

The zero category of the categorical modalities is implied by the dyad count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np
from numba import njit

from . import specfun
from .errors import ConfigError, DomainError, NumericalError
from .specfun import (
    inv_reg_inc_beta,
    inv_reg_lower_inc_gamma,
    log_reg_inc_beta,
    log_reg_lower_inc_gamma,
    reg_inc_beta,
    reg_lower_inc_gamma,
)

BB, GP, NIG, TBB, TGP, DIRMULT, ZIP = range(7)
N_PARAMS = 8

STAT_DIM = {"binary": 1, "count": 1, "real": 2, "signed": 2, "dyad4": 3}

_LOG_2PI = math.log(2.0 * math.pi)


# --------------------------------------------------------------------------
# compiled kernels (no argument validation; callers validate)


@njit(cache=True)
def _lbeta(a, b):
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


@njit(cache=True)
def _bb(s, n, a, b):
    if n == 0:
        return 0.0
    return _lbeta(a + s, b + n - s) - _lbeta(a, b)


@njit(cache=True)
def _gp(S, n, a, b):
    if n == 0:
        return 0.0
    return (a * math.log(b) - math.lgamma(a) + math.lgamma(a + S)
            - (a + S) * math.log(b + n))


@njit(cache=True)
def _nig(n, sy, syy, mu0, k0, a0, b0):
    if n == 0:
        return 0.0
    kn = k0 + n
    an = a0 + 0.5 * n
    ybar = sy / n
    q = syy - n * ybar * ybar
    if q < 0.0:
        if q < -1e-9 * max(1.0, abs(syy)):
            raise NumericalError("negative within-block sum of squares")
        q = 0.0
    bn = b0 + 0.5 * q + k0 * n * (ybar - mu0) ** 2 / (2.0 * kn)
    return (-0.5 * n * _LOG_2PI + 0.5 * math.log(k0 / kn)
            + math.lgamma(an) - math.lgamma(a0)
            + a0 * math.log(b0) - an * math.log(bn))


@njit(cache=True)
def _tbb(s, n, a, b, x, log_norm0):
    if n == 0:
        return 0.0
    return _bb(s, n, a, b) + log_reg_inc_beta(x, a + s, b + n - s) - log_norm0


@njit(cache=True)
def _tgp(S, n, a, b, x, log_norm0):
    if n == 0:
        return 0.0
    return (_gp(S, n, a, b)
            + log_reg_lower_inc_gamma(a + S, (b + n) * x) - log_norm0)


@njit(cache=True)
def _dm(counts, alpha):
    total_a = 0.0
    total_c = 0.0
    acc = 0.0
    for m in range(counts.shape[0]):
        total_a += alpha[m]
        total_c += counts[m]
        if counts[m] > 0:
            acc += math.lgamma(alpha[m] + counts[m]) - math.lgamma(alpha[m])
    if total_c == 0:
        return 0.0
    return acc + math.lgamma(total_a) - math.lgamma(total_a + total_c)


@njit(cache=True)
def _dm4(n, s0, s1, s2, par):
    # categorical block with the zero category implied by the dyad count
    m = int(par[0])
    if n == 0:
        return 0.0
    c0 = n - s0 - s1 - s2
    total_a = 0.0
    for k in range(m):
        total_a += par[1 + k]
    acc = math.lgamma(total_a) - math.lgamma(total_a + n)
    acc += math.lgamma(par[1] + c0) - math.lgamma(par[1])
    if m > 1:
        acc += math.lgamma(par[2] + s0) - math.lgamma(par[2])
    if m > 2:
        acc += math.lgamma(par[3] + s1) - math.lgamma(par[3])
    if m > 3:
        acc += math.lgamma(par[4] + s2) - math.lgamma(par[4])
    return acc


@njit(cache=True)
def _zip(m, n, S, ap, bp, al, bl):
    return _bb(m, n, ap, bp) + _gp(S, m, al, bl)


@njit(cache=True)
def component_logm(code, par, s0, s1, s2, n):
    """Log marginal of one conjugate component on layout-encoded stats."""
    if code == BB:
        return _bb(s0, n, par[0], par[1])
    if code == GP:
        return _gp(s0, n, par[0], par[1])
    if code == NIG:
        return _nig(n, s0, s1, par[0], par[1], par[2], par[3])
    if code == TBB:
        return _tbb(s0, n, par[0], par[1], par[2], par[3])
    if code == TGP:
        return _tgp(s0, n, par[0], par[1], par[2], par[3])
    if code == DIRMULT:
        return _dm4(n, s0, s1, s2, par)
    if code == ZIP:
        return _zip(s0, n, s1, par[0], par[1], par[2], par[3])
    raise DomainError("unknown family code")


@njit(cache=True)
def mixture_logm(codes, logw, pars, ncomp, s0, s1, s2, n):
    """log sum_t w_t m_t(stats); a one-component mixture is the family itself."""
    if n == 0:
        return 0.0
    if ncomp == 1:
        return component_logm(codes[0], pars[0], s0, s1, s2, n)
    best = -np.inf
    vals = np.empty(ncomp)
    for t in range(ncomp):
        vals[t] = logw[t] + component_logm(codes[t], pars[t], s0, s1, s2, n)
        if vals[t] > best:
            best = vals[t]
    if best == -np.inf:
        return best
    acc = 0.0
    for t in range(ncomp):
        acc += math.exp(vals[t] - best)
    return best + math.log(acc)


# --------------------------------------------------------------------------
# validated scalar API


def _positive(name, value):
    if not (value > 0) or not math.isfinite(value):
        raise DomainError(f"{name} must be a finite positive number, got {value!r}")


def _counts_ok(s, n):
    if n < 0 or s < 0 or s > n:
        raise DomainError(f"need 0 <= s <= n, got s={s}, n={n}")


def bb_log_marginal(s, n, a, b):
    """log B(a+s, b+n-s) / B(a, b) for s edges among n dyads."""
    _counts_ok(s, n)
    _positive("a", a)
    _positive("b", b)
    return float(_bb(float(s), float(n), float(a), float(b)))


def gp_log_marginal(S, n, a, b, drop_constants=True, log_factorial_sum=0.0):
    """Gamma-Poisson block marginal for count sum S over n dyads.

    ``log_factorial_sum`` is sum(ln y!) over the block's dyads; it is
    subtracted only when ``drop_constants`` is false.
    """
    if S < 0 or n < 0:
        raise DomainError(f"need S >= 0 and n >= 0, got S={S}, n={n}")
    _positive("a", a)
    _positive("b", b)
    value = float(_gp(float(S), float(n), float(a), float(b)))
    if not drop_constants:
        value -= log_factorial_sum
    return value


def nig_log_marginal(n, sum_y, sum_y2, mu0, kappa0, alpha0, beta0):
    """Normal-Inverse-Gamma block marginal from (n, sum y, sum y^2)."""
    if n < 0:
        raise DomainError("n must be nonnegative")
    for name, v in (("kappa0", kappa0), ("alpha0", alpha0), ("beta0", beta0)):
        _positive(name, v)
    if not math.isfinite(mu0):
        raise DomainError("mu0 must be finite")
    return float(_nig(float(n), float(sum_y), float(sum_y2), float(mu0),
                      float(kappa0), float(alpha0), float(beta0)))


def tbb_log_marginal(s, n, a, b, x_max):
    """Beta-Bernoulli marginal with the prior truncated to [0, x_max]."""
    _counts_ok(s, n)
    _positive("a", a)
    _positive("b", b)
    if not (0 < x_max <= 1):
        raise DomainError(f"x_max must lie in (0, 1], got {x_max}")
    log_norm0 = log_reg_inc_beta(float(x_max), float(a), float(b))
    if log_norm0 == -np.inf:
        raise NumericalError(
            f"truncated Beta normalizer I_{x_max}({a}, {b}) underflows to zero")
    return float(_tbb(float(s), float(n), float(a), float(b), float(x_max), log_norm0))


def tgp_log_marginal(S, n, a, b, x_max, drop_constants=True, log_factorial_sum=0.0):
    """Gamma-Poisson marginal with the rate prior truncated to [0, x_max]."""
    if S < 0 or n < 0:
        raise DomainError(f"need S >= 0 and n >= 0, got S={S}, n={n}")
    _positive("a", a)
    _positive("b", b)
    _positive("x_max", x_max)
    log_norm0 = log_reg_lower_inc_gamma(float(a), float(b) * float(x_max))
    if log_norm0 == -np.inf:
        raise NumericalError(
            f"truncated Gamma normalizer P({a}, {b * x_max}) underflows to zero")
    value = float(_tgp(float(S), float(n), float(a), float(b), float(x_max), log_norm0))
    if not drop_constants:
        value -= log_factorial_sum
    return value


def dirmult_log_marginal(counts, alpha):
    """Dirichlet-multinomial marginal of a vector of category counts."""
    counts = np.asarray(counts, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    if counts.shape != alpha.shape or counts.ndim != 1:
        raise DomainError("counts and alpha must be vectors of equal length")
    if (counts < 0).any():
        raise DomainError("counts must be nonnegative")
    if not (alpha > 0).all():
        raise DomainError("alpha must be positive")
    return float(_dm(counts, alpha))


def zip_log_block_marginal(m_active, n, S_active, a_p, b_p, a_lam, b_lam):
    """Beta-Bernoulli over activity plus Gamma-Poisson over active dyads."""
    _counts_ok(m_active, n)
    if S_active < 0:
        raise DomainError("S_active must be nonnegative")
    for name, v in (("a_p", a_p), ("b_p", b_p), ("a_lam", a_lam), ("b_lam", b_lam)):
        _positive(name, v)
    if m_active == 0 and S_active > 0:
        raise DomainError("positive counts require at least one active dyad")
    return float(_zip(float(m_active), float(n), float(S_active),
                      float(a_p), float(b_p), float(a_lam), float(b_lam)))


# --------------------------------------------------------------------------
# family objects


@dataclass(frozen=True)
class BlockSuffStats:
    """Sufficient statistics of one block: dyad count plus layout values."""

    n: int
    values: tuple = ()

    def __getitem__(self, k):
        return self.values[k]


@dataclass(frozen=True)
class BlockPosterior:
    family: str
    params: dict
    mean: object
    lo: object
    hi: object
    extra: dict = field(default_factory=dict)


class Family:
    """Base class; subclasses are frozen dataclasses."""

    name: ClassVar[str] = ""
    code: ClassVar[int] = -1
    modalities: ClassVar[tuple] = ()

    def components(self):
        return [(1.0, self)]

    def encode(self):
        raise NotImplementedError

    def log_marginal(self, stats: BlockSuffStats) -> float:
        raise NotImplementedError

    def posterior(self, stats: BlockSuffStats, level: float = 0.95) -> BlockPosterior:
        raise NotImplementedError

    def to_dict(self):
        d = {"family": self.name}
        d.update({k: v for k, v in self.__dict__.items()})
        return d


def _interval(level):
    if not (0 < level < 1):
        raise DomainError("credible level must lie in (0, 1)")
    return 0.5 * (1 - level), 0.5 * (1 + level)


@dataclass(frozen=True)
class BetaBernoulli(Family):
    a: float = 1.0
    b: float = 1.0
    name: ClassVar[str] = "beta_bernoulli"
    code: ClassVar[int] = BB
    modalities: ClassVar[tuple] = ("binary",)

    def __post_init__(self):
        _positive("a", self.a)
        _positive("b", self.b)

    def encode(self):
        return [self.a, self.b]

    def log_marginal(self, stats):
        return bb_log_marginal(stats[0], stats.n, self.a, self.b)

    def cdf(self, x, stats):
        return reg_inc_beta(x, self.a + stats[0], self.b + stats.n - stats[0])

    def posterior(self, stats, level=0.95):
        a1, b1 = self.a + stats[0], self.b + stats.n - stats[0]
        plo, phi = _interval(level)
        return BlockPosterior(self.name, {"a": a1, "b": b1}, a1 / (a1 + b1),
                              inv_reg_inc_beta(plo, a1, b1), inv_reg_inc_beta(phi, a1, b1))


@dataclass(frozen=True)
class TruncBetaBernoulli(Family):
    a: float = 1.0
    b: float = 1.0
    x_max: float = 1.0
    name: ClassVar[str] = "trunc_beta_bernoulli"
    code: ClassVar[int] = TBB
    modalities: ClassVar[tuple] = ("binary",)

    def __post_init__(self):
        _positive("a", self.a)
        _positive("b", self.b)
        if not (0 < self.x_max <= 1):
            raise DomainError(f"x_max must lie in (0, 1], got {self.x_max}")

    def encode(self):
        log_norm0 = log_reg_inc_beta(self.x_max, self.a, self.b)
        if log_norm0 == -np.inf:
            raise NumericalError("truncated Beta prior normalizer underflows")
        return [self.a, self.b, self.x_max, log_norm0]

    def log_marginal(self, stats):
        return tbb_log_marginal(stats[0], stats.n, self.a, self.b, self.x_max)

    def cdf(self, x, stats):
        a1, b1 = self.a + stats[0], self.b + stats.n - stats[0]
        x = min(x, self.x_max)
        return math.exp(log_reg_inc_beta(x, a1, b1) - log_reg_inc_beta(self.x_max, a1, b1))

    def posterior(self, stats, level=0.95):
        a1, b1 = self.a + stats[0], self.b + stats.n - stats[0]
        mass = reg_inc_beta(self.x_max, a1, b1)
        if mass == 0.0:
            raise NumericalError("posterior mass below the truncation cap underflows")
        mean = a1 / (a1 + b1) * reg_inc_beta(self.x_max, a1 + 1, b1) / mass
        plo, phi = _interval(level)
        return BlockPosterior(self.name, {"a": a1, "b": b1, "x_max": self.x_max}, mean,
                              inv_reg_inc_beta(plo * mass, a1, b1),
                              inv_reg_inc_beta(phi * mass, a1, b1),
                              {"mass_below_cap": mass})


@dataclass(frozen=True)
class GammaPoisson(Family):
    a: float = 1.0
    b: float = 1.0
    name: ClassVar[str] = "gamma_poisson"
    code: ClassVar[int] = GP
    modalities: ClassVar[tuple] = ("binary", "count")

    def __post_init__(self):
        _positive("a", self.a)
        _positive("b", self.b)

    def encode(self):
        return [self.a, self.b]

    def log_marginal(self, stats):
        return gp_log_marginal(stats[0], stats.n, self.a, self.b)

    def cdf(self, x, stats):
        return reg_lower_inc_gamma(self.a + stats[0], (self.b + stats.n) * x)

    def posterior(self, stats, level=0.95):
        shape, rate = self.a + stats[0], self.b + stats.n
        plo, phi = _interval(level)
        return BlockPosterior(self.name, {"shape": shape, "rate": rate}, shape / rate,
                              inv_reg_lower_inc_gamma(plo, shape) / rate,
                              inv_reg_lower_inc_gamma(phi, shape) / rate)


@dataclass(frozen=True)
class TruncGammaPoisson(Family):
    a: float = 1.0
    b: float = 1.0
    x_max: float = 1.0
    name: ClassVar[str] = "trunc_gamma_poisson"
    code: ClassVar[int] = TGP
    modalities: ClassVar[tuple] = ("binary", "count")

    def __post_init__(self):
        _positive("a", self.a)
        _positive("b", self.b)
        _positive("x_max", self.x_max)

    def encode(self):
        log_norm0 = log_reg_lower_inc_gamma(self.a, self.b * self.x_max)
        if log_norm0 == -np.inf:
            raise NumericalError("truncated Gamma prior normalizer underflows")
        return [self.a, self.b, self.x_max, log_norm0]

    def log_marginal(self, stats):
        return tgp_log_marginal(stats[0], stats.n, self.a, self.b, self.x_max)

    def cdf(self, x, stats):
        shape, rate = self.a + stats[0], self.b + stats.n
        x = min(x, self.x_max)
        return math.exp(log_reg_lower_inc_gamma(shape, rate * x)
                        - log_reg_lower_inc_gamma(shape, rate * self.x_max))

    def posterior(self, stats, level=0.95):
        shape, rate = self.a + stats[0], self.b + stats.n
        mass = reg_lower_inc_gamma(shape, rate * self.x_max)
        if mass == 0.0:
            raise NumericalError("posterior mass below the truncation cap underflows")
        mean = shape / rate * reg_lower_inc_gamma(shape + 1, rate * self.x_max) / mass
        plo, phi = _interval(level)
        return BlockPosterior(self.name, {"shape": shape, "rate": rate, "x_max": self.x_max},
                              mean,
                              inv_reg_lower_inc_gamma(plo * mass, shape) / rate,
                              inv_reg_lower_inc_gamma(phi * mass, shape) / rate,
                              {"mass_below_cap": mass})


def _t_ppf(p, nu):
    # quantile of the standard Student t through the incomplete beta
    if p == 0.5:
        return 0.0
    tail = min(p, 1 - p)
    x = inv_reg_inc_beta(2 * tail, 0.5 * nu, 0.5)
    t = math.sqrt(nu * (1 - x) / x)
    return -t if p < 0.5 else t


@dataclass(frozen=True)
class NormalInverseGamma(Family):
    mu0: float = 0.0
    kappa0: float = 1.0
    alpha0: float = 1.0
    beta0: float = 1.0
    name: ClassVar[str] = "nig"
    code: ClassVar[int] = NIG
    modalities: ClassVar[tuple] = ("real",)

    def __post_init__(self):
        if not math.isfinite(self.mu0):
            raise DomainError("mu0 must be finite")
        for name in ("kappa0", "alpha0", "beta0"):
            _positive(name, getattr(self, name))

    def encode(self):
        return [self.mu0, self.kappa0, self.alpha0, self.beta0]

    def log_marginal(self, stats):
        return nig_log_marginal(stats.n, stats[0], stats[1], self.mu0, self.kappa0,
                                self.alpha0, self.beta0)

    def updated(self, stats):
        n = stats.n
        kn = self.kappa0 + n
        mun = (self.kappa0 * self.mu0 + stats[0]) / kn
        an = self.alpha0 + 0.5 * n
        if n == 0:
            return mun, kn, an, self.beta0
        ybar = stats[0] / n
        q = max(stats[1] - n * ybar * ybar, 0.0)
        bn = self.beta0 + 0.5 * q + self.kappa0 * n * (ybar - self.mu0) ** 2 / (2 * kn)
        return mun, kn, an, bn

    def cdf(self, x, stats):
        mun, kn, an, bn = self.updated(stats)
        nu = 2 * an
        z = (x - mun) / math.sqrt(bn / (an * kn))
        tail = 0.5 * reg_inc_beta(nu / (nu + z * z), 0.5 * nu, 0.5)
        return 1 - tail if z > 0 else tail

    def posterior(self, stats, level=0.95):
        mun, kn, an, bn = self.updated(stats)
        nu = 2 * an
        scale = math.sqrt(bn / (an * kn))
        plo, phi = _interval(level)
        sigma_mean = (math.sqrt(bn) * math.exp(math.lgamma(an - 0.5) - math.lgamma(an))
                      if an > 0.5 else math.nan)
        return BlockPosterior(self.name, {"mu": mun, "kappa": kn, "alpha": an, "beta": bn},
                              mun, mun + scale * _t_ppf(plo, nu), mun + scale * _t_ppf(phi, nu),
                              {"sigma_mean": sigma_mean})


@dataclass(frozen=True)
class DirichletMultinomial(Family):
    alpha: tuple = (1.0, 1.0, 1.0, 1.0)
    name: ClassVar[str] = "dirichlet_multinomial"
    code: ClassVar[int] = DIRMULT
    modalities: ClassVar[tuple] = ("binary", "signed", "dyad4")

    def __post_init__(self):
        object.__setattr__(self, "alpha", tuple(float(a) for a in self.alpha))
        if len(self.alpha) < 2:
            raise DomainError("Dirichlet needs at least two categories")
        for a in self.alpha:
            _positive("alpha", a)

    def encode(self):
        if len(self.alpha) > N_PARAMS - 1:
            raise DomainError("too many categories for the sampler kernels")
        return [float(len(self.alpha)), *self.alpha]

    def counts(self, stats):
        rest = list(stats.values)
        if len(rest) != len(self.alpha) - 1:
            raise DomainError(
                f"{len(self.alpha)} categories need {len(self.alpha) - 1} stored counts")
        return [stats.n - sum(rest), *rest]

    def log_marginal(self, stats):
        return dirmult_log_marginal(self.counts(stats), self.alpha)

    def posterior(self, stats, level=0.95):
        post = np.asarray(self.alpha) + np.asarray(self.counts(stats), dtype=float)
        total = post.sum()
        plo, phi = _interval(level)
        lo = tuple(inv_reg_inc_beta(plo, c, total - c) for c in post)
        hi = tuple(inv_reg_inc_beta(phi, c, total - c) for c in post)
        return BlockPosterior(self.name, {"alpha": tuple(post)}, tuple(post / total), lo, hi)


@dataclass(frozen=True)
class ZeroInflatedPoisson(Family):
    a_p: float = 1.0
    b_p: float = 1.0
    a_lam: float = 1.0
    b_lam: float = 1.0
    name: ClassVar[str] = "zip"
    code: ClassVar[int] = ZIP
    modalities: ClassVar[tuple] = ("count",)

    def __post_init__(self):
        for name in ("a_p", "b_p", "a_lam", "b_lam"):
            _positive(name, getattr(self, name))

    def encode(self):
        return [self.a_p, self.b_p, self.a_lam, self.b_lam]

    def log_marginal(self, stats):
        return zip_log_block_marginal(stats[0], stats.n, stats[1], self.a_p, self.b_p,
                                      self.a_lam, self.b_lam)

    def posterior(self, stats, level=0.95):
        m, S = stats[0], stats[1]
        act = BetaBernoulli(self.a_p, self.b_p).posterior(BlockSuffStats(stats.n, (m,)), level)
        lam = GammaPoisson(self.a_lam, self.b_lam).posterior(BlockSuffStats(m, (S,)), level)
        p, rate = act.mean, lam.mean
        return BlockPosterior(
            self.name, {"activity": act.params, "intensity": lam.params},
            p, act.lo, act.hi,
            {"lam_mean": rate, "lam_lo": lam.lo, "lam_hi": lam.hi,
             "mu": p * rate, "q": p * (1 - math.exp(-rate))})


@dataclass(frozen=True)
class TypeMixture(Family):
    """Finite mixture over conjugate block types with prior weights."""

    types: tuple = ()
    name: ClassVar[str] = "type_mixture"
    code: ClassVar[int] = -1

    def __post_init__(self):
        types = tuple((float(w), f) for w, f in self.types)
        object.__setattr__(self, "types", types)
        if not types:
            raise DomainError("a type mixture needs at least one type")
        for w, f in types:
            if not (w > 0):
                raise DomainError("type weights must be positive")
            if isinstance(f, TypeMixture):
                raise DomainError("type mixtures cannot be nested")
        if abs(sum(w for w, _ in types) - 1.0) > 1e-9:
            raise DomainError("type weights must sum to one")

    @property
    def modalities(self):
        common = set(self.types[0][1].modalities)
        for _, f in self.types[1:]:
            common &= set(f.modalities)
        return tuple(sorted(common))

    def components(self):
        return list(self.types)

    def log_marginal(self, stats):
        return type_mixture_log_marginal(stats, self.types)

    def type_probabilities(self, stats):
        vals = np.array([math.log(w) + f.log_marginal(stats) for w, f in self.types])
        return np.exp(vals - specfun.log_sum_exp(vals))

    def posterior(self, stats, level=0.95):
        probs = self.type_probabilities(stats)
        posts = [f.posterior(stats, level) for _, f in self.types]
        kinds = {type(f) for _, f in self.types}
        scalar = all(hasattr(f, "cdf") for _, f in self.types) and (
            kinds <= {BetaBernoulli, TruncBetaBernoulli}
            or kinds <= {GammaPoisson, TruncGammaPoisson}
            or kinds == {NormalInverseGamma})
        extra = {"type_probs": tuple(float(p) for p in probs)}
        if not scalar:
            best = int(np.argmax(probs))
            p = posts[best]
            return BlockPosterior(self.name, {"map_type": best, **p.params}, p.mean, p.lo,
                                  p.hi, {**extra, **p.extra})
        mean = float(sum(w * p.mean for w, p in zip(probs, posts)))
        plo, phi = _interval(level)
        lo_b = min(p.lo for p in posts)
        hi_b = max(p.hi for p in posts)

        def cdf(x):
            return sum(w * f.cdf(x, stats) for w, (_, f) in zip(probs, self.types))

        def ppf(target, lo, hi):
            while cdf(lo) > target:
                lo -= max(hi - lo, 1.0)
            while cdf(hi) < target:
                hi += max(hi - lo, 1.0)
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if mid <= lo or mid >= hi:
                    break
                if cdf(mid) < target:
                    lo = mid
                else:
                    hi = mid
            return 0.5 * (lo + hi)

        return BlockPosterior(self.name, {}, mean, ppf(plo, lo_b, hi_b), ppf(phi, lo_b, hi_b),
                              extra)

    def to_dict(self):
        return {"family": self.name,
                "types": [{"weight": w, **f.to_dict()} for w, f in self.types]}


def type_mixture_log_marginal(stats, types):
    """log sum_t pi_t m_t(stats), via log-sum-exp."""
    types = list(types)
    if not types:
        raise DomainError("empty type list")
    if len(types) == 1 and types[0][0] == 1.0:
        return types[0][1].log_marginal(stats)
    vals = [math.log(w) + f.log_marginal(stats) for w, f in types]
    return specfun.log_sum_exp(vals)


def block_posterior(family, stats, level=0.95):
    """Conjugate posterior parameters and (mean, lo, hi) summaries."""
    return family.posterior(stats, level)


@dataclass(frozen=True)
class FamilySpec:
    """Which family scores diagonal blocks and which scores off-diagonal ones."""

    diag: Family
    offdiag: Family
    drop_constants: bool = False

    def __post_init__(self):
        zd, zo = self.is_zip_part(self.diag), self.is_zip_part(self.offdiag)
        if zd != zo:
            raise DomainError("ZIP blocks must be used on and off the diagonal together")

    @staticmethod
    def is_zip_part(family):
        return all(isinstance(f, ZeroInflatedPoisson) for _, f in family.components())

    @property
    def zip(self):
        return self.is_zip_part(self.diag)

    def family_for(self, r, s):
        return self.diag if r == s else self.offdiag

    def stat_dim(self, modality):
        return 2 if self.zip else STAT_DIM[modality]

    def check_modality(self, modality):
        for fam in (self.diag, self.offdiag):
            if modality not in fam.modalities:
                raise DomainError(f"family {fam.name} cannot score {modality} dyads")
            for _, comp in fam.components():
                if isinstance(comp, DirichletMultinomial):
                    need = {"binary": 2, "signed": 3, "dyad4": 4}[modality]
                    if len(comp.alpha) != need:
                        raise DomainError(
                            f"{modality} data needs a {need}-category Dirichlet")

    def encode(self):
        """Arrays consumed by the sampler kernels: codes, log weights, params, counts."""
        ncomp = max(len(self.diag.components()), len(self.offdiag.components()))
        codes = np.full((2, ncomp), -1, dtype=np.int64)
        logw = np.zeros((2, ncomp))
        pars = np.zeros((2, ncomp, N_PARAMS))
        counts = np.zeros(2, dtype=np.int64)
        for idx, fam in enumerate((self.offdiag, self.diag)):
            comps = fam.components()
            counts[idx] = len(comps)
            for t, (w, f) in enumerate(comps):
                codes[idx, t] = f.code
                logw[idx, t] = math.log(w)
                enc = f.encode()
                pars[idx, t, :len(enc)] = enc
        return codes, logw, pars, counts

    def to_dict(self):
        return {"diag": self.diag.to_dict(), "offdiag": self.offdiag.to_dict(),
                "drop_constants": self.drop_constants}


_FAMILIES = {cls.name: cls for cls in (
    BetaBernoulli, TruncBetaBernoulli, GammaPoisson, TruncGammaPoisson,
    NormalInverseGamma, DirichletMultinomial, ZeroInflatedPoisson)}

DEFAULTS = {
    "binary": BetaBernoulli(),
    "count": GammaPoisson(),
    "real": NormalInverseGamma(),
    "signed": DirichletMultinomial((1.0, 1.0, 1.0)),
    "dyad4": DirichletMultinomial((1.0, 1.0, 1.0, 1.0)),
}


def family_from_dict(d):
    """Build a family from its config mapping (``{"family": name, **hyper}``)."""
    if not isinstance(d, dict) or "family" not in d:
        raise ConfigError(f"family block needs a 'family' key: {d!r}")
    d = dict(d)
    name = d.pop("family")
    if name == TypeMixture.name:
        types = d.pop("types", None)
        if d or not types:
            raise ConfigError("type_mixture takes exactly one key: types")
        parsed = []
        for t in types:
            t = dict(t)
            if "weight" not in t:
                raise ConfigError("each mixture type needs a weight")
            w = t.pop("weight")
            parsed.append((w, family_from_dict(t)))
        return TypeMixture(tuple(parsed))
    if name not in _FAMILIES:
        raise ConfigError(f"unknown family {name!r}; choose from {sorted(_FAMILIES)}")
    cls = _FAMILIES[name]
    allowed = set(cls.__dataclass_fields__)
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown keys for {name}: {sorted(unknown)}")
    if "alpha" in d:
        d["alpha"] = tuple(d["alpha"])
    try:
        return cls(**d)
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc

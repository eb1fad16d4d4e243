"""Special functions used by the collapsed block marginals.

Everything here is compiled with numba so the Gibbs kernels can call it
directly. The incomplete beta and incomplete gamma functions are evaluated
with the usual region split (continued fraction or power series) and are
also exposed in log form, which the truncated marginals need once blocks get
large enough for the regularized values to underflow.
"""

import math

import numpy as np
from numba import njit

from .errors import DomainError, NumericalError

EPS = 1e-15
MAX_ITER = 500
_FPMIN = 1e-300


@njit(cache=True)
def log_gamma(x):
    """ln Gamma(x) for finite x > 0."""
    if not (x > 0.0) or not math.isfinite(x):
        raise DomainError("log_gamma requires a finite positive argument")
    return math.lgamma(x)


@njit(cache=True)
def log_beta(a, b):
    """ln B(a, b)."""
    if not (a > 0.0 and b > 0.0):
        raise DomainError("log_beta requires a > 0 and b > 0")
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


@njit(cache=True)
def _iter_cap(a, b):
    # near the mode both expansions need O(sqrt(shape)) terms
    return MAX_ITER + int(20.0 * math.sqrt(max(a, b, 1.0)))


@njit(cache=True)
def _betacf(a, b, x):
    # modified Lentz evaluation of the incomplete beta continued fraction
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _iter_cap(a, b) + 1):
        m2 = 2.0 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < EPS:
            return h
    raise NumericalError("incomplete beta continued fraction did not converge")


@njit(cache=True)
def _check_beta_args(x, a, b):
    if not (a > 0.0 and b > 0.0) or not (math.isfinite(a) and math.isfinite(b)):
        raise DomainError("incomplete beta requires finite a > 0 and b > 0")
    if not (x >= 0.0 and x <= 1.0):
        raise DomainError("incomplete beta requires 0 <= x <= 1")


@njit(cache=True)
def _beta_front(x, a, b):
    return a * math.log(x) + b * math.log1p(-x) - (
        math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b))


@njit(cache=True)
def log_reg_inc_beta(x, a, b):
    """ln I_x(a, b), accurate deep into the lower tail."""
    _check_beta_args(x, a, b)
    if x == 0.0:
        return -np.inf
    if x == 1.0:
        return 0.0
    if x < (a + 1.0) / (a + b + 2.0):
        return _beta_front(x, a, b) + math.log(_betacf(a, b, x)) - math.log(a)
    upper = math.exp(_beta_front(1.0 - x, b, a)) * _betacf(b, a, 1.0 - x) / b
    return math.log1p(-upper)


@njit(cache=True)
def reg_inc_beta(x, a, b):
    """Regularized incomplete beta I_x(a, b)."""
    _check_beta_args(x, a, b)
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(_beta_front(x, a, b)) * _betacf(a, b, x) / a
    upper = math.exp(_beta_front(1.0 - x, b, a)) * _betacf(b, a, 1.0 - x) / b
    return 1.0 - upper


@njit(cache=True)
def inv_reg_inc_beta(p, a, b):
    """x with I_x(a, b) = p, by bisection on reg_inc_beta."""
    if not (p >= 0.0 and p <= 1.0):
        raise DomainError("inv_reg_inc_beta requires 0 <= p <= 1")
    _check_beta_args(0.5, a, b)
    if p == 0.0:
        return 0.0
    if p == 1.0:
        return 1.0
    lo = 0.0
    hi = 1.0
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if reg_inc_beta(mid, a, b) < p:
            lo = mid
        else:
            hi = mid
    if abs(reg_inc_beta(lo, a, b) - p) < abs(reg_inc_beta(hi, a, b) - p):
        return lo
    return hi


@njit(cache=True)
def _check_gamma_args(a, x):
    if not (a > 0.0) or not math.isfinite(a):
        raise DomainError("incomplete gamma requires finite a > 0")
    if not (x >= 0.0):
        raise DomainError("incomplete gamma requires x >= 0")


@njit(cache=True)
def _gamma_series(a, x):
    # returns ln P(a, x) for x < a + 1
    ap = a
    term = 1.0 / a
    total = term
    for _ in range(_iter_cap(a, x)):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * EPS:
            return -x + a * math.log(x) - math.lgamma(a) + math.log(total)
    raise NumericalError("incomplete gamma series did not converge")


@njit(cache=True)
def _gamma_cf(a, x):
    # returns Q(a, x) for x >= a + 1
    b = x + 1.0 - a
    c = 1.0 / _FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, _iter_cap(a, x) + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = b + an / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < EPS:
            return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h
    raise NumericalError("incomplete gamma continued fraction did not converge")


@njit(cache=True)
def log_reg_lower_inc_gamma(a, x):
    """ln P(a, x)."""
    _check_gamma_args(a, x)
    if x == 0.0:
        return -np.inf
    if math.isinf(x):
        return 0.0
    if x < a + 1.0:
        return _gamma_series(a, x)
    return math.log1p(-_gamma_cf(a, x))


@njit(cache=True)
def reg_lower_inc_gamma(a, x):
    """Regularized lower incomplete gamma P(a, x) = gamma(a, x) / Gamma(a)."""
    _check_gamma_args(a, x)
    if x == 0.0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < a + 1.0:
        return math.exp(_gamma_series(a, x))
    return 1.0 - _gamma_cf(a, x)


@njit(cache=True)
def inv_reg_lower_inc_gamma(p, a):
    """x with P(a, x) = p (bracket doubling, then bisection)."""
    if not (p >= 0.0 and p <= 1.0):
        raise DomainError("inv_reg_lower_inc_gamma requires 0 <= p <= 1")
    _check_gamma_args(a, 0.0)
    if p == 0.0:
        return 0.0
    if p == 1.0:
        return np.inf
    lo = 0.0
    hi = max(1.0, a)
    while reg_lower_inc_gamma(a, hi) < p:
        lo = hi
        hi *= 2.0
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if reg_lower_inc_gamma(a, mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@njit(cache=True)
def _log_sum_exp(values):
    m = -np.inf
    for v in values:
        if v > m:
            m = v
    if m == -np.inf:
        return -np.inf
    if m == np.inf:
        return np.inf
    total = 0.0
    for v in values:
        total += math.exp(v - m)
    return m + math.log(total)


def log_sum_exp(values):
    """ln sum(exp(values)) with a max shift; exact for a single value."""
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        raise DomainError("log_sum_exp of an empty sequence")
    if arr.size == 1:
        return float(arr[0])
    if not np.isfinite(arr).any() and not np.isposinf(arr).any():
        raise DomainError("log_sum_exp needs at least one finite value")
    return float(_log_sum_exp(arr))

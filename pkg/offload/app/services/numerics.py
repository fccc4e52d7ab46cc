"""Special functions and scalar solvers behind the closed-form results.

Covers the exponential integral, the beta_n weights of the Poisson MGF series,
the SNR expectations, golden-section minimisation, bisection and Wilson intervals.
"""

from __future__ import annotations

import functools
import logging
import math
import sys
import warnings
from collections.abc import Callable
from typing import NamedTuple

from scipy import integrate, optimize, special, stats

from shared.schemas import QuadratureSpec

from ..errors import ConvergenceError, DomainError, NoSignChangeError

_LOGGER = logging.getLogger(__name__)

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
INV_PHI_SQUARE = (3.0 - math.sqrt(5.0)) / 2.0
# Above this argument e^x overflows double precision; switch to the continued fraction.
_SCALED_E1_SWITCH = 50.0
_CONTINUED_FRACTION_MAX_TERMS = 10_000
_CONTINUED_FRACTION_TOLERANCE = 4.0 * sys.float_info.epsilon
_BETA_SERIES_MAX_TERMS = 100_000
_LOG_FLOAT_MAX = math.log(sys.float_info.max)


class ScalarMinimum(NamedTuple):
    argmin: float
    minimum: float


def exp_integral_e1(x: float) -> float:
    """Exponential integral E1(x) = int_x^inf e^{-z}/z dz.

    scipy's ``exp1`` evaluates the power series for x <= 1 and a continued fraction
    above, to double precision.

    Raises:
        DomainError: If ``x <= 0``.
    """
    if not x > 0:
        raise DomainError(f"E1 requires x > 0, got {x}")
    return float(special.exp1(x))


def _scaled_e1_continued_fraction(x: float) -> float:
    # Modified Lentz evaluation of e^x E1(x) = 1/(x+1- 1/(x+3- 4/(x+5- ...))).
    tiny = 1e-300
    b = x + 1.0
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, _CONTINUED_FRACTION_MAX_TERMS):
        a = -float(i * i)
        b += 2.0
        d = 1.0 / (a * d + b)
        c = b + a / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) <= _CONTINUED_FRACTION_TOLERANCE:
            return h
    raise ConvergenceError(f"E1 continued fraction did not converge at x={x}")


def scaled_exp_integral_e1(x: float) -> float:
    """Returns e^x * E1(x) without overflowing for large ``x``."""
    if not x > 0:
        raise DomainError(f"E1 requires x > 0, got {x}")
    if x <= _SCALED_E1_SWITCH:
        return math.exp(x) * exp_integral_e1(x)
    return _scaled_e1_continued_fraction(x)


def expected_inv_snr(snr_mean: float, snr_floor: float) -> float:
    """E[1/snr] for the floor-shifted exponential SNR law.

    Equals ``(1/snr_mean) * exp(floor/mean) * E1(floor/mean)``.

    Raises:
        DomainError: On non-positive inputs.
    """
    if not (snr_mean > 0 and snr_floor > 0):
        raise DomainError(
            f"expected_inv_snr needs positive mean and floor, got ({snr_mean}, {snr_floor})"
        )
    return scaled_exp_integral_e1(snr_floor / snr_mean) / snr_mean


@functools.lru_cache(maxsize=1024)
def _inv_log_snr_quad(snr_mean: float, snr_floor: float, rtol: float, limit: int) -> float:
    def integrand(u: float) -> float:
        return math.log(2.0) / math.log1p(snr_floor + snr_mean * u) * math.exp(-u)

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, abs_err = integrate.quad(
                integrand, 0.0, math.inf, epsabs=0.0, epsrel=rtol, limit=limit
            )
        except integrate.IntegrationWarning as exc:
            raise ConvergenceError(
                f"quadrature for E[1/log2(1+snr)] failed within {limit} subdivisions: {exc}"
            ) from exc
    _LOGGER.debug(
        "E[1/log2(1+snr)] quadrature converged.",
        extra={"snr_mean": snr_mean, "snr_floor": snr_floor, "value": value, "abs_err": abs_err},
    )
    return value


def expected_inv_log_snr(
    snr_mean: float, snr_floor: float, spec: QuadratureSpec | None = None
) -> float:
    """E[1/log2(1+snr)] under the floor-shifted exponential SNR law.

    Integrates ``ln2 / ln(1 + floor + mean*u) * e^{-u}`` over ``u in [0, inf)`` with
    adaptive Gauss-Kronrod quadrature (QUADPACK via scipy).

    Raises:
        DomainError: On non-positive inputs (the integral diverges at a zero floor).
        ConvergenceError: If the subdivision budget is exhausted.
    """
    if not (snr_mean > 0 and snr_floor > 0):
        raise DomainError(
            f"expected_inv_log_snr needs positive mean and floor, got ({snr_mean}, {snr_floor})"
        )
    spec = spec or QuadratureSpec()
    return _inv_log_snr_quad(
        float(snr_mean), float(snr_floor), spec.relative_tolerance, spec.max_subdivisions
    )


def beta_weight(n: int, x: float) -> float:
    """Series weight beta_n(x) = (n-2)!/x^n * (e^x - sum_{s<n} x^s/s!).

    For ``x <= n`` the tail ``sum_{k>=0} (n-2)! x^k/(n+k)!`` is summed forward from
    its leading term ``1/(n(n-1))``. Beyond that the regularised incomplete gamma
    function gives the tail in log space, which also covers arguments where e^x
    overflows.

    Raises:
        DomainError: If ``n < 2`` or ``x <= 0``.
    """
    if n < 2 or not x > 0:
        raise DomainError(f"beta_n(x) needs n >= 2 and x > 0, got n={n}, x={x}")
    if x <= n:
        term = 1.0 / (n * (n - 1.0))
        total = term
        for k in range(1, _BETA_SERIES_MAX_TERMS):
            term *= x / (n + k)
            total += term
            if term <= total * 1e-17:
                return total
        raise ConvergenceError(f"beta_n tail series did not converge at n={n}, x={x}")
    # e^x * P(n, x) is the tail of the exponential series from s = n on.
    log_value = special.gammaln(n - 1) + x + math.log(special.gammainc(n, x)) - n * math.log(x)
    if log_value >= _LOG_FLOAT_MAX:
        return math.inf
    return math.exp(log_value)


def minimize_scalar(
    f: Callable[[float], float],
    lower: float,
    upper: float,
    tolerance: float,
) -> ScalarMinimum:
    """Golden-section search on ``[lower, upper]``.

    Locates the minimiser of a unimodal ``f`` to within ``tolerance``; for other
    functions a local minimum is returned. The bracket end points are compared with
    the interior result so minima on the boundary are returned exactly.

    Raises:
        DomainError: If ``lower >= upper`` or ``tolerance <= 0``.
    """
    if not lower < upper:
        raise DomainError(f"inverted bracket [{lower}, {upper}]")
    if not tolerance > 0:
        raise DomainError(f"tolerance must be positive, got {tolerance}")
    a, b = lower, upper
    h = b - a
    c = a + INV_PHI_SQUARE * h
    d = a + INV_PHI * h
    yc = f(c)
    yd = f(d)
    iterations = 0
    while h > tolerance:
        iterations += 1
        if yc < yd:
            b = d
            d = c
            yd = yc
            h = INV_PHI * h
            c = a + INV_PHI_SQUARE * h
            yc = f(c)
        else:
            a = c
            c = d
            yc = yd
            h = INV_PHI * h
            d = a + INV_PHI * h
            yd = f(d)
    argmin, minimum = (c, yc) if yc < yd else (d, yd)
    for edge in (lower, upper):
        edge_value = f(edge)
        if edge_value <= minimum:
            argmin, minimum = edge, edge_value
    _LOGGER.debug(
        "Golden-section search finished.",
        extra={"iterations": iterations, "argmin": argmin, "minimum": minimum},
    )
    return ScalarMinimum(argmin=argmin, minimum=minimum)


def find_root(
    f: Callable[[float], float],
    lower: float,
    upper: float,
    tolerance: float,
) -> float:
    """Bisection root of ``f`` on ``[lower, upper]`` to a bracket width of ``tolerance``.

    Raises:
        NoSignChangeError: If ``f(lower)`` and ``f(upper)`` share a strict sign.
    """
    f_lower = f(lower)
    f_upper = f(upper)
    if f_lower * f_upper > 0:
        raise NoSignChangeError(
            f"no sign change on [{lower}, {upper}]: f={f_lower:.3e}, {f_upper:.3e}"
        )
    root = optimize.bisect(f, lower, upper, xtol=tolerance, maxiter=500)
    _LOGGER.debug("Bisection finished.", extra={"lower": lower, "upper": upper, "root": root})
    return float(root)


def wilson_interval(
    successes: int, trials: int, confidence: float = 0.95
) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        return 0.0, 1.0
    z = float(stats.norm.ppf(0.5 + confidence / 2.0))
    p_hat = successes / trials
    denom = 1.0 + z * z / trials
    center = (p_hat + z * z / (2.0 * trials)) / denom
    half = z * math.sqrt(p_hat * (1.0 - p_hat) / trials + z * z / (4.0 * trials * trials)) / denom
    # Exact edges when no trial or every trial succeeds.
    low = 0.0 if successes == 0 else max(0.0, center - half)
    high = 1.0 if successes == trials else min(1.0, center + half)
    return low, high

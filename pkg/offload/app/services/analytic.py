"""Closed-form performance results for the two-stage offloading system.

Covers the offloading probability, the expected number of offloading devices, the
mean total upload time with its two upper bounds, stability checks, the intra-delay
moment generating function and the Chernoff latency-outage bound.
"""

from __future__ import annotations

import logging
import math
from typing import NamedTuple

import numpy as np
from scipy import special

from shared.schemas import (
    DerivedParams,
    MeanUploadTime,
    OutageQuery,
    OutageResult,
    QuadratureSpec,
    SnrModel,
    SystemConfig,
)

from ..config import settings
from ..errors import DomainError, NoFeasibleMError
from . import numerics

_LOGGER = logging.getLogger(__name__)

# Below this value of mu*U_max the conditional mean uses its Taylor expansion.
_SMALL_CAP_SERIES = 1e-2
_LOG_FLOAT_MAX = math.log(np.finfo(float).max)
_NU_BRACKET_SHRINK = 1e-9
_MAX_DOUBLINGS = 64


class SnrExpectations(NamedTuple):
    inv_log: float
    inv_snr: float


class StabilityVerdict(NamedTuple):
    stable: bool
    margin: float


class SufficientCondition(NamedTuple):
    holds: bool
    lhs: float
    rhs: float


def quadrature_spec(spec: QuadratureSpec | None = None) -> QuadratureSpec:
    """Returns ``spec`` or the quadrature settings from the environment."""
    if spec is not None:
        return spec
    return QuadratureSpec(
        relative_tolerance=settings.QUAD_RELATIVE_TOLERANCE,
        max_subdivisions=settings.QUAD_MAX_SUBDIVISIONS,
    )


def offload_probability(input_rate: float, input_cap: float) -> float:
    """Probability q_o = 1 - exp(-mu * U_max) that a task is small enough to offload."""
    if math.isinf(input_cap):
        return 1.0
    if input_cap <= 0:
        return 0.0
    return -math.expm1(-input_rate * input_cap)


def expected_successes(arrival_rate: float, offload_prob: float, num_channels: int) -> float:
    """Mean number of offloading devices, lambda*q_o*exp(-lambda*q_o/M)."""
    load = arrival_rate * offload_prob
    return load * math.exp(-load / num_channels)


def conditional_expected_successes(num_contenders: int, num_channels: int) -> float:
    """E[S | W] = W * (1 - 1/M)^(W-1) for W contenders on M channels."""
    if num_contenders <= 0:
        return 0.0
    return num_contenders * (1.0 - 1.0 / num_channels) ** (num_contenders - 1)


def conditional_input_rate(input_rate: float, input_cap: float) -> float:
    """Rate mu_max with 1/mu_max = E[U | U <= U_max] for exponential U.

    Args:
        input_rate: Rate mu of the input-size law.
        input_cap: Size threshold U_max, possibly ``inf``.

    Returns:
        ``mu * (1 - e^{-x}) / (1 - e^{-x}(1 + x))`` with ``x = mu * U_max``.

    Raises:
        DomainError: If ``input_cap <= 0``.
    """
    if not input_cap > 0:
        raise DomainError(f"conditional input rate needs U_max > 0, got {input_cap}")
    if math.isinf(input_cap):
        return input_rate
    x = input_rate * input_cap
    if x < _SMALL_CAP_SERIES:
        # 1 - x/(e^x - 1) cancels badly for small x.
        mean_ratio = x / 2.0 - x * x / 12.0 + x**4 / 720.0
    else:
        mean_ratio = 1.0 - x / math.expm1(x)
    return input_rate / mean_ratio


def snr_expectations(
    config: SystemConfig, spec: QuadratureSpec | None = None
) -> SnrExpectations:
    """E[1/log2(1+snr)] and E[1/snr] under the configured SNR law."""
    if config.snr_model is SnrModel.CONSTANT:
        return SnrExpectations(
            inv_log=1.0 / math.log2(1.0 + config.snr_mean), inv_snr=1.0 / config.snr_mean
        )
    return SnrExpectations(
        inv_log=numerics.expected_inv_log_snr(
            config.snr_mean, config.snr_floor, quadrature_spec(spec)
        ),
        inv_snr=numerics.expected_inv_snr(config.snr_mean, config.snr_floor),
    )


def intra_delay_rate(config: SystemConfig, spec: QuadratureSpec | None = None) -> float:
    """Rate theta of the exponential approximation to one upload time.

    ``1/theta = E[1/log2(1+snr)] / (mu * B_o)``.
    """
    inv_log = snr_expectations(config, spec).inv_log
    return config.input_rate * config.offload_bandwidth / inv_log


def derive_params(config: SystemConfig, spec: QuadratureSpec | None = None) -> DerivedParams:
    """Bundles the quantities every closed form is built from."""
    offload_prob = offload_probability(config.input_rate, config.input_cap)
    conditional_rate = (
        math.inf
        if config.input_cap == 0
        else conditional_input_rate(config.input_rate, config.input_cap)
    )
    return DerivedParams(
        offload_bandwidth=config.offload_bandwidth,
        offload_probability=offload_prob,
        conditional_rate=conditional_rate,
        expected_successes=expected_successes(
            config.arrival_rate, offload_prob, config.num_rac_channels
        ),
        intra_delay_rate=intra_delay_rate(config, spec),
    )


def expected_upload_time(config: SystemConfig, spec: QuadratureSpec | None = None) -> float:
    """Mean upload time of one offloading device, E[U | U <= U_max] * E[1/log2(1+snr)] / B_o."""
    if config.input_cap == 0:
        return 0.0
    mu_max = conditional_input_rate(config.input_rate, config.input_cap)
    return snr_expectations(config, spec).inv_log / (config.offload_bandwidth * mu_max)


def mean_total_upload_time(
    config: SystemConfig, spec: QuadratureSpec | None = None
) -> MeanUploadTime:
    """Mean upload work E[D] admitted per round, with two closed-form upper bounds.

    ``exact`` integrates E[1/log2(1+snr)] numerically. ``bound_l1`` replaces that
    expectation by ``ln2 * (1/2 + E[1/snr])`` and ``bound_l1b`` additionally replaces
    the conditional rate mu_max by mu.

    Raises:
        DomainError: If the SNR floor is zero under the truncated-exponential law.
        ConvergenceError: If the quadrature does not converge.
    """
    _LOGGER.debug(
        "mean_total_upload_time() called.",
        extra={
            "M": config.num_rac_channels,
            "lambda": config.arrival_rate,
            "u_max": config.input_cap,
        },
    )
    offload_prob = offload_probability(config.input_rate, config.input_cap)
    mean_successes = expected_successes(
        config.arrival_rate, offload_prob, config.num_rac_channels
    )
    if mean_successes == 0:
        return MeanUploadTime(exact=0.0, bound_l1=0.0, bound_l1b=0.0)
    moments = snr_expectations(config, spec)
    mu_max = conditional_input_rate(config.input_rate, config.input_cap)
    inv_log_bound = math.log(2.0) * (0.5 + moments.inv_snr)
    scale = mean_successes / config.offload_bandwidth
    return MeanUploadTime(
        exact=scale * moments.inv_log / mu_max,
        bound_l1=scale * inv_log_bound / mu_max,
        bound_l1b=scale * inv_log_bound / config.input_rate,
    )


def is_stable(config: SystemConfig, spec: QuadratureSpec | None = None) -> StabilityVerdict:
    """Stability verdict E[D] <= delta and the margin delta - E[D]."""
    exact = mean_total_upload_time(config, spec).exact
    margin = config.round_interval - exact
    return StabilityVerdict(stable=margin >= 0, margin=margin)


def sufficient_condition_constant_snr(
    config: SystemConfig, snr_const: float
) -> SufficientCondition:
    """Load-independent stability test under ideal power control.

    Checks ``M * e^{-1} / mu_max <= delta * B_o * log2(1 + snr_const)``; the left side
    bounds E[S]/mu_max over every arrival rate.

    Raises:
        DomainError: If ``snr_const <= 0``.
    """
    if not snr_const > 0:
        raise DomainError(f"constant SNR must be positive, got {snr_const}")
    if config.input_cap == 0:
        lhs = 0.0
    else:
        mu_max = conditional_input_rate(config.input_rate, config.input_cap)
        lhs = config.num_rac_channels * math.exp(-1.0) / mu_max
    rhs = config.round_interval * config.offload_bandwidth * math.log2(1.0 + snr_const)
    holds = lhs <= rhs or math.isclose(lhs, rhs, rel_tol=1e-12)
    return SufficientCondition(holds=holds, lhs=lhs, rhs=rhs)


def _check_nu(nu: float, theta: float) -> None:
    if not theta > 0:
        raise DomainError(f"intra-delay rate must be positive, got {theta}")
    if nu < 0 or nu >= theta:
        raise DomainError(f"nu must lie in [0, theta={theta}), got {nu}")


def direct_truncation(mean_successes: float) -> int:
    """Number of Poisson terms after which the tail mass is below 1e-12."""
    return math.ceil(mean_successes + 12.0 * math.sqrt(mean_successes) + 30.0)


def mgf_z_direct(
    nu: float, mean_successes: float, theta: float, s_max: int | None = None
) -> float:
    """E[e^{nu Z}] for the intra-delay Z by direct summation over S ~ Poisson.

    Sums ``(z^s - 1) / (s (z - 1)) * Pois(s)`` for ``s = 1..s_max`` with
    ``z = theta / (theta - nu)``, in log space. At ``nu = 0`` the ``z -> 1`` limit
    ``1 - e^{-lambda}`` is returned. Overflow yields ``inf``.

    Raises:
        DomainError: If ``nu`` is outside ``[0, theta)``.
    """
    _check_nu(nu, theta)
    if mean_successes <= 0:
        return 0.0
    if nu == 0:
        return -math.expm1(-mean_successes)
    s_max = s_max or direct_truncation(mean_successes)
    s = np.arange(1, s_max + 1, dtype=float)
    excess = nu / (theta - nu)
    log_z = math.log1p(excess)
    log_geometric = s * log_z + np.log(-np.expm1(-s * log_z)) - math.log(excess)
    log_poisson = -mean_successes + s * math.log(mean_successes) - special.gammaln(s + 1.0)
    log_total = float(special.logsumexp(log_geometric + log_poisson - np.log(s)))
    if log_total >= _LOG_FLOAT_MAX:
        return math.inf
    return math.exp(log_total)


def mgf_z_series(nu: float, mean_successes: float, theta: float, n_max: int) -> float:
    """E[e^{nu Z}] from the truncated beta_n series.

    ``(e^{-lambda} / (1 - z)) * sum_{n=2}^{n_max} [lambda*beta_n(lambda) -
    lambda*z*beta_n(lambda*z)]``; converges to :func:`mgf_z_direct` as n_max grows.

    Raises:
        DomainError: If ``nu`` is outside ``(0, theta)`` or ``n_max < 2``.
    """
    _check_nu(nu, theta)
    if nu == 0:
        raise DomainError("the series form needs nu > 0")
    if n_max < 2:
        raise DomainError(f"n_max must be >= 2, got {n_max}")
    if mean_successes <= 0:
        return 0.0
    z = theta / (theta - nu)
    scaled = mean_successes * z
    total = math.fsum(
        mean_successes * numerics.beta_weight(n, mean_successes)
        - scaled * numerics.beta_weight(n, scaled)
        for n in range(2, n_max + 1)
    )
    # 1 - z = -nu/(theta - nu) without cancellation.
    return math.exp(-mean_successes) * total * (-(theta - nu) / nu)


def chernoff_outage_bound(
    config: SystemConfig,
    query: OutageQuery,
    spec: QuadratureSpec | None = None,
) -> OutageResult:
    """Chernoff upper bound on the latency-outage probability of an offloading device.

    Minimises ``e^{-nu (tau - t_N)} * E[e^{nu Z}]`` over ``nu in [0, theta(1-1e-9)]``
    with golden-section search on the log objective.

    Args:
        config: Scenario; lambda_bar accounts for the offloading probability.
        query: Threshold, backlog reference, series truncation and MGF method.
        spec: Optional quadrature settings for theta.

    Returns:
        The minimiser, its ``z`` value and the bound clipped to ``[0, 1]``.

    Raises:
        DomainError: If ``tau <= t_N``.
    """
    slack = query.tau - query.t_N
    if not slack > 0:
        raise DomainError(f"tau must exceed t_N, got tau={query.tau}, t_N={query.t_N}")
    offload_prob = offload_probability(config.input_rate, config.input_cap)
    mean_successes = expected_successes(
        config.arrival_rate, offload_prob, config.num_rac_channels
    )
    if mean_successes == 0:
        return OutageResult(tau=query.tau, t_N=query.t_N, nu_star=0.0, z_star=1.0, bound=0.0)
    theta = intra_delay_rate(config, spec)

    def mgf(nu: float) -> float:
        if nu == 0 or query.method == "direct":
            return mgf_z_direct(nu, mean_successes, theta)
        return mgf_z_series(nu, mean_successes, theta, query.n_max)

    def log_objective(nu: float) -> float:
        value = mgf(nu)
        # Overflow near theta and a non-positive truncated series both rule nu out.
        if math.isnan(value) or math.isinf(value) or value <= 0:
            return math.inf
        return math.log(value) - nu * slack

    upper = theta * (1.0 - _NU_BRACKET_SHRINK)
    best = numerics.minimize_scalar(log_objective, 0.0, upper, tolerance=theta * 1e-10)
    bound = min(1.0, math.exp(best.minimum))
    nu_star = best.argmin
    _LOGGER.debug(
        "chernoff_outage_bound() minimised.",
        extra={"tau": query.tau, "nu_star": nu_star, "bound": bound, "method": query.method},
    )
    return OutageResult(
        tau=query.tau,
        t_N=query.t_N,
        nu_star=nu_star,
        z_star=theta / (theta - nu_star),
        bound=bound,
    )


def solve_stable_umax(config: SystemConfig, spec: QuadratureSpec | None = None) -> float | None:
    """Size threshold U_max at which E[D] equals the round length.

    The upper bracket is the first power-of-two multiple of 1/mu where E[D] reaches
    delta.

    Returns:
        The root, or ``None`` when E[D] stays below delta for every threshold.
    """
    delta = config.round_interval
    if config.arrival_rate == 0:
        return None

    def excess(input_cap: float) -> float:
        return mean_total_upload_time(config.with_updates(input_cap=input_cap), spec).exact - delta

    limit = excess(math.inf)
    if limit < 0:
        _LOGGER.debug("solve_stable_umax(): no crossing.", extra={"limit_excess": limit})
        return None
    upper = config.mean_input
    for _ in range(_MAX_DOUBLINGS):
        if excess(upper) >= 0:
            break
        upper *= 2.0
    else:
        _LOGGER.warning(
            "E[D] only reaches delta in the U_max -> inf limit.", extra={"u_max": upper}
        )
        return upper
    root = numerics.find_root(excess, 0.0, upper, tolerance=config.mean_input * 1e-10)
    _LOGGER.debug("solve_stable_umax() solved.", extra={"u_max": root, "bracket": upper})
    return root


def solve_stable_m(config: SystemConfig, spec: QuadratureSpec | None = None) -> int:
    """Largest number of random-access channels that keeps E[D] <= delta.

    E[D] increases with M, so the scan stops at the first unstable value.

    Raises:
        NoFeasibleMError: If even a single channel is unstable.
    """
    best: int | None = None
    for num_channels in range(1, config.max_rac_channels + 1):
        candidate = config.with_updates(num_rac_channels=num_channels)
        if not is_stable(candidate, spec).stable:
            break
        best = num_channels
    if best is None:
        raise NoFeasibleMError(
            f"E[D] exceeds delta={config.round_interval} already at M=1"
        )
    _LOGGER.debug("solve_stable_m() solved.", extra={"M": best})
    return best

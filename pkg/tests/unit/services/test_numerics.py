from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import integrate, special

from offload.app.errors import ConvergenceError, DomainError, NoSignChangeError
from offload.app.services import numerics
from shared.schemas import QuadratureSpec

_SNR_FLOOR = 10.0**0.6


def test_exp_integral_e1_reference_values() -> None:
    assert numerics.exp_integral_e1(1.0) == pytest.approx(0.21938393439552029, rel=1e-12)
    assert numerics.exp_integral_e1(0.4) == pytest.approx(0.70238, abs=1e-5)


def test_exp_integral_e1_rejects_non_positive_argument() -> None:
    with pytest.raises(DomainError):
        numerics.exp_integral_e1(0.0)
    with pytest.raises(DomainError):
        numerics.scaled_exp_integral_e1(-1.0)


def test_exp_integral_e1_derivative_identity() -> None:
    h = 1e-5
    for x in (0.1, 0.4, 1.0, 3.0):
        slope = (numerics.exp_integral_e1(x + h) - numerics.exp_integral_e1(x - h)) / (2 * h)
        assert slope == pytest.approx(-math.exp(-x) / x, rel=1e-6)


def test_scaled_exp_integral_e1_large_argument_asymptote() -> None:
    x = 50.0
    assert x * numerics.scaled_exp_integral_e1(x) == pytest.approx(1.0, abs=0.02)
    assert numerics.scaled_exp_integral_e1(800.0) == pytest.approx(1.0 / 801.0, rel=2e-3)


@pytest.mark.parametrize("x", [2.0, 10.0, 60.0])
def test_continued_fraction_matches_scipy(x: float) -> None:
    reference = math.exp(x) * float(special.exp1(x))

    assert numerics._scaled_e1_continued_fraction(x) == pytest.approx(reference, rel=1e-12)


def test_expected_inv_snr_reference_values() -> None:
    def integrand(u: float) -> float:
        return math.exp(-u) / (_SNR_FLOOR + 10.0 * u)

    reference, _ = integrate.quad(integrand, 0.0, math.inf, epsabs=1e-14, epsrel=1e-12)

    assert numerics.expected_inv_snr(10.0, _SNR_FLOOR) == pytest.approx(reference, rel=1e-8)
    assert numerics.expected_inv_snr(10.0, _SNR_FLOOR) == pytest.approx(0.10506, abs=1e-4)
    assert numerics.expected_inv_snr(1.0, 1.0) == pytest.approx(0.596347, abs=1e-6)
    assert numerics.expected_inv_snr(1.0, 1e4) == pytest.approx(1e-4, rel=1e-3)


def test_expected_inv_snr_rejects_zero_floor() -> None:
    with pytest.raises(DomainError):
        numerics.expected_inv_snr(10.0, 0.0)


def test_expected_inv_log_snr_reference_value_and_bound() -> None:
    value = numerics.expected_inv_log_snr(10.0, _SNR_FLOOR)

    assert value == pytest.approx(0.287, abs=2e-3)
    for mean, floor in ((10.0, _SNR_FLOOR), (1.0, 1.0), (100.0, 2.0), (3.0, 0.5)):
        bound = math.log(2.0) * (0.5 + numerics.expected_inv_snr(mean, floor))
        assert numerics.expected_inv_log_snr(mean, floor) <= bound


def test_expected_inv_log_snr_matches_monte_carlo() -> None:
    rng = np.random.default_rng(17)
    snrs = _SNR_FLOOR + rng.exponential(10.0, 1_000_000)

    sampled = float(np.mean(1.0 / np.log2(1.0 + snrs)))

    assert numerics.expected_inv_log_snr(10.0, _SNR_FLOOR) == pytest.approx(sampled, rel=2e-3)


def test_expected_inv_log_snr_high_floor_limit() -> None:
    floor = 1e4

    assert numerics.expected_inv_log_snr(1.0, floor) == pytest.approx(
        1.0 / math.log2(1.0 + floor), rel=5e-3
    )


def test_expected_inv_log_snr_reports_exhausted_budget() -> None:
    with pytest.raises(ConvergenceError):
        numerics.expected_inv_log_snr(
            10.0, 1.5, QuadratureSpec(relative_tolerance=1e-10, max_subdivisions=1)
        )


def test_beta_weight_small_argument_and_large_order_limits() -> None:
    assert numerics.beta_weight(2, 1e-4) == pytest.approx(0.5, abs=1e-4)
    assert numerics.beta_weight(500, 1.0) * 500 * 499 == pytest.approx(1.0, abs=0.01)


@pytest.mark.parametrize(("n", "x"), [(50, 1.0), (5, 3.0), (3, 10.0), (20, 40.0)])
def test_beta_weight_matches_incomplete_gamma(n: int, x: float) -> None:
    reference = math.exp(
        special.gammaln(n - 1) + x + math.log(special.gammainc(n, x)) - n * math.log(x)
    )

    assert numerics.beta_weight(n, x) == pytest.approx(reference, rel=1e-10)


def test_beta_weight_is_positive_and_rejects_bad_order() -> None:
    for n in (2, 3, 10, 100):
        for x in (1e-6, 0.5, 5.0, 50.0, 500.0):
            assert numerics.beta_weight(n, x) > 0
    with pytest.raises(DomainError):
        numerics.beta_weight(1, 1.0)
    with pytest.raises(DomainError):
        numerics.beta_weight(3, 0.0)


def _beta_tail(n_max: int, x: float) -> float:
    # sum_{n > n_max} beta_n(x) telescopes to sum_k x^k / ((k+1) n_max (n_max+1)...(n_max+k)).
    total = 0.0
    product = float(n_max)
    power = 1.0
    for k in range(10_000):
        term = power / ((k + 1) * product)
        total += term
        if term < 1e-18 * total:
            return total
        power *= x
        product *= n_max + k + 1
    raise AssertionError("tail did not converge")


@pytest.mark.parametrize("x", [0.1, 1.0, 5.0, 20.0])
def test_beta_series_matches_exponential_sum(x: float) -> None:
    n_max = 2000
    direct = math.fsum(
        math.exp(s * math.log(x) - math.lgamma(s + 1)) / (s + 1) ** 2 for s in range(400)
    )

    series = math.fsum(numerics.beta_weight(n, x) for n in range(2, n_max + 1))

    assert series + _beta_tail(n_max, x) == pytest.approx(direct, rel=1e-9)


def test_minimize_scalar_interior_minimum() -> None:
    result = numerics.minimize_scalar(lambda x: (x - 2.0) ** 2, 0.0, 5.0, 1e-10)

    assert result.argmin == pytest.approx(2.0, abs=1e-8)
    assert result.minimum == pytest.approx(0.0, abs=1e-15)


def test_minimize_scalar_returns_boundary_minimum_exactly() -> None:
    result = numerics.minimize_scalar(math.cos, 0.0, math.pi, 1e-10)

    assert result.argmin == math.pi
    assert result.minimum == -1.0


def test_minimize_scalar_chernoff_shaped_objective() -> None:
    def objective(nu: float) -> float:
        return -3.0 * nu - math.log1p(-nu)

    grid = np.linspace(0.0, 0.99, 100_001)
    grid_best = grid[np.argmin([objective(nu) for nu in grid])]

    result = numerics.minimize_scalar(objective, 0.0, 0.99, 1e-10)

    assert result.argmin == pytest.approx(2.0 / 3.0, abs=1e-7)
    assert result.argmin == pytest.approx(grid_best, abs=1e-5)


def test_minimize_scalar_rejects_inverted_bracket() -> None:
    with pytest.raises(DomainError):
        numerics.minimize_scalar(math.cos, 1.0, 0.0, 1e-6)


def test_find_root_brackets_and_rejects_missing_sign_change() -> None:
    assert numerics.find_root(lambda x: x - 1.0, 0.0, 2.0, 1e-12) == pytest.approx(1.0, abs=1e-10)
    assert numerics.find_root(lambda x: x * x - 2.0, 0.0, 2.0, 1e-10) == pytest.approx(
        math.sqrt(2.0), abs=1e-6
    )
    with pytest.raises(NoSignChangeError):
        numerics.find_root(lambda x: x * x + 1.0, -1.0, 1.0, 1e-10)


def test_wilson_interval() -> None:
    low, high = numerics.wilson_interval(50, 100)

    assert low == pytest.approx(0.4038, abs=1e-3)
    assert high == pytest.approx(0.5962, abs=1e-3)
    low, high = numerics.wilson_interval(0, 100)
    assert low == 0.0
    assert high == pytest.approx(0.037, abs=1e-3)
    assert numerics.wilson_interval(0, 0) == (0.0, 1.0)


def test_wilson_interval_edges_are_exact() -> None:
    for trials in (1, 7, 100, 100_000):
        low, _ = numerics.wilson_interval(0, trials)
        _, high = numerics.wilson_interval(trials, trials)
        assert low == 0.0
        assert high == 1.0

    low, high = numerics.wilson_interval(100, 100)
    assert low == pytest.approx(0.963, abs=1e-3)
    assert high == 1.0

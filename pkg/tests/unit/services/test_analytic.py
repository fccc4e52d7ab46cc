from __future__ import annotations

import math

import numpy as np
import pytest
from pydantic import ValidationError

from offload.app.errors import DomainError, NoFeasibleMError
from offload.app.services import analytic, numerics
from shared.schemas import OutageQuery

from ._fakes import fig3_config, fig4_config, fig5a_config, fig5b_config, fig6_config, make_config

_THETA = 1e4


def test_offload_probability_edges() -> None:
    q_o = analytic.offload_probability(100.0, 1e-2)
    assert q_o == pytest.approx(1.0 - math.exp(-1.0), rel=1e-12)
    assert analytic.offload_probability(100.0, 0.0) == 0.0
    assert analytic.offload_probability(100.0, math.inf) == 1.0


def test_expected_successes_peaks_at_m_over_e() -> None:
    assert analytic.expected_successes(30.0, 1.0, 30) == pytest.approx(30.0 / math.e, rel=1e-12)
    assert analytic.expected_successes(0.0, 1.0, 30) == 0.0
    for rate in np.linspace(0.5, 200.0, 50):
        assert analytic.expected_successes(float(rate), 1.0, 30) <= 30.0 / math.e + 1e-12


def test_conditional_expected_successes() -> None:
    assert analytic.conditional_expected_successes(0, 5) == 0.0
    assert analytic.conditional_expected_successes(1, 5) == 1.0
    assert analytic.conditional_expected_successes(2, 2) == pytest.approx(1.0)
    assert analytic.conditional_expected_successes(10, 3) == pytest.approx(10 * (2 / 3) ** 9)


def test_conditional_input_rate_values_and_limits() -> None:
    mean_below_cap = 1.0 / analytic.conditional_input_rate(500.0, 1e-2)
    assert mean_below_cap == pytest.approx(1.93216e-3, rel=5e-3)
    assert analytic.conditional_input_rate(500.0, math.inf) == 500.0
    assert 1.0 / analytic.conditional_input_rate(1.0, 1e-3) == pytest.approx(5e-4, rel=1e-3)
    with pytest.raises(DomainError):
        analytic.conditional_input_rate(500.0, 0.0)


def test_conditional_input_rate_is_continuous_across_series_switch() -> None:
    below = analytic.conditional_input_rate(1.0, 1e-2 * (1.0 - 1e-12))
    at = analytic.conditional_input_rate(1.0, 1e-2)

    assert below == pytest.approx(at, rel=1e-9)


def test_derive_params_bundles_closed_forms() -> None:
    params = analytic.derive_params(fig6_config())

    assert params.offload_bandwidth == 20.0
    assert params.offload_probability == 1.0
    assert params.conditional_rate == pytest.approx(1.0 / 3e-3)
    assert params.expected_successes == pytest.approx(20.0 * math.exp(-2.0 / 3.0), rel=1e-12)
    assert params.intra_delay_rate == pytest.approx(2.32e4, rel=2e-2)


def test_derive_params_with_zero_cap() -> None:
    params = analytic.derive_params(fig3_config(u_max=0))

    assert params.offload_probability == 0.0
    assert params.expected_successes == 0.0
    assert math.isinf(params.conditional_rate)


def test_mean_total_upload_time_reference_points() -> None:
    assert analytic.mean_total_upload_time(fig3_config()).exact == pytest.approx(6.06e-4, rel=2e-2)
    assert analytic.mean_total_upload_time(fig4_config(u_max="inf")).exact == pytest.approx(
        3.17e-4, rel=2e-2
    )
    assert analytic.mean_total_upload_time(fig5b_config(u_max="inf")).exact == pytest.approx(
        1.584e-3, rel=2e-2
    )


def test_mean_total_upload_time_is_zero_without_offloading() -> None:
    for config in (make_config(**{"lambda": 0}), make_config(u_max=0)):
        result = analytic.mean_total_upload_time(config)
        assert (result.exact, result.bound_l1, result.bound_l1b) == (0.0, 0.0, 0.0)


def test_mean_total_upload_time_bounds_are_ordered() -> None:
    rng = np.random.default_rng(23)
    for _ in range(100):
        config = make_config(
            B=int(rng.integers(10, 80)),
            M=int(rng.integers(1, 9)),
            **{"lambda": float(rng.uniform(0.5, 60.0))},
            mean_input=float(rng.uniform(5e-4, 1e-2)),
            u_max=float(rng.uniform(1e-4, 3e-2)),
            snr_mean_db=float(rng.uniform(0.0, 20.0)),
            snr_floor_db=float(rng.uniform(-3.0, 10.0)),
        )
        result = analytic.mean_total_upload_time(config)
        assert 0 < result.exact <= result.bound_l1 <= result.bound_l1b


def test_mean_total_upload_time_matches_its_factors() -> None:
    config = fig5b_config()
    params = analytic.derive_params(config)
    inv_log = numerics.expected_inv_log_snr(config.snr_mean, config.snr_floor)

    per_device = inv_log / (params.conditional_rate * config.offload_bandwidth)

    assert analytic.mean_total_upload_time(config).exact == pytest.approx(
        params.expected_successes * per_device, rel=1e-12
    )
    assert analytic.expected_upload_time(config) == pytest.approx(per_device, rel=1e-12)


def test_is_stable_verdicts() -> None:
    verdict = analytic.is_stable(fig3_config())
    assert verdict.stable
    assert verdict.margin == pytest.approx(3.94e-4, rel=3e-2)

    idle = analytic.is_stable(make_config(**{"lambda": 0}))
    assert idle.stable
    assert idle.margin == 1e-3

    assert not analytic.is_stable(fig4_config(M=45)).stable


def test_mean_upload_time_increases_with_channels() -> None:
    values = [analytic.mean_total_upload_time(fig4_config(M=m)).exact for m in range(1, 50)]

    assert all(later > earlier for earlier, later in zip(values, values[1:]))


def test_mean_upload_time_nondecreasing_in_cap_when_load_fits_channels() -> None:
    caps = [1e-4, 5e-4, 1e-3, 2e-3, 5e-3, 1e-2, 2e-2, 5e-2, 1e-1, math.inf]
    values = [analytic.mean_total_upload_time(fig4_config(u_max=cap)).exact for cap in caps]

    assert all(later >= earlier for earlier, later in zip(values, values[1:]))


def test_sufficient_condition_constant_snr_at_equality() -> None:
    config = fig3_config(snr_model="constant")
    snr = config.snr_mean
    lhs = analytic.sufficient_condition_constant_snr(config, snr).lhs
    tight = config.with_updates(
        round_interval=lhs / (config.offload_bandwidth * math.log2(1.0 + snr))
    )

    assert analytic.sufficient_condition_constant_snr(tight, snr).holds
    for rate in range(1, 200, 7):
        assert analytic.is_stable(tight.with_updates(arrival_rate=float(rate))).stable

    loose = tight.with_updates(round_interval=0.9 * tight.round_interval)
    assert not analytic.sufficient_condition_constant_snr(loose, snr).holds


def test_sufficient_condition_constant_snr_edges() -> None:
    assert analytic.sufficient_condition_constant_snr(fig3_config(u_max=0), 10.0).lhs == 0.0
    with pytest.raises(DomainError):
        analytic.sufficient_condition_constant_snr(fig3_config(), 0.0)


def test_intra_delay_rate_scales_with_offload_bandwidth() -> None:
    narrow = analytic.intra_delay_rate(fig6_config())
    wide = analytic.intra_delay_rate(fig6_config(B=70))

    assert narrow == pytest.approx(2.32e4, rel=2e-2)
    assert wide / narrow == pytest.approx(2.0, rel=1e-12)

    strong = fig6_config(snr_mean_db=0, snr_floor_db=40)
    expected = strong.input_rate * strong.offload_bandwidth * math.log2(1.0 + 1e4)
    assert analytic.intra_delay_rate(strong) == pytest.approx(expected, rel=5e-3)


def test_mgf_z_direct_limits_and_domain() -> None:
    assert analytic.mgf_z_direct(0.0, 5.0, _THETA) == -math.expm1(-5.0)
    tiny = analytic.mgf_z_direct(0.5 * _THETA, 1e-6, _THETA)
    assert 0.0 < tiny < 1e-5
    with pytest.raises(DomainError):
        analytic.mgf_z_direct(_THETA, 5.0, _THETA)
    with pytest.raises(DomainError):
        analytic.mgf_z_direct(-1.0, 5.0, _THETA)


def test_mgf_z_direct_matches_monte_carlo() -> None:
    mean_successes = 5.0
    nu = 0.3 * _THETA
    rng = np.random.default_rng(29)
    draws = 2_000_000
    successes = rng.poisson(mean_successes, draws)
    ahead = np.floor(rng.random(draws) * successes).astype(np.int64)
    delays = rng.gamma(np.maximum(ahead, 1), 1.0 / _THETA) * (ahead > 0)
    sampled = float(np.mean(np.exp(nu * delays) * (successes > 0)))

    assert analytic.mgf_z_direct(nu, mean_successes, _THETA) == pytest.approx(sampled, rel=1e-2)


def _beta_tail_times_x(n_max: int, x: float) -> float:
    total = 0.0
    product = float(n_max)
    power = x
    for k in range(10_000):
        term = power / ((k + 1) * product)
        total += term
        if term < 1e-18 * total:
            return total
        power *= x
        product *= n_max + k + 1
    raise AssertionError("tail did not converge")


@pytest.mark.parametrize("mean_successes", [1.0, 5.0, 11.0])
@pytest.mark.parametrize("z", [1.1, 1.5, 2.0])
def test_mgf_z_series_plus_tail_equals_direct(mean_successes: float, z: float) -> None:
    n_max = 60
    nu = _THETA * (1.0 - 1.0 / z)
    tail_gap = _beta_tail_times_x(n_max, mean_successes) - _beta_tail_times_x(
        n_max, mean_successes * z
    )
    missing = math.exp(-mean_successes) / (1.0 - z) * tail_gap

    series = analytic.mgf_z_series(nu, mean_successes, _THETA, n_max)

    assert series + missing == pytest.approx(
        analytic.mgf_z_direct(nu, mean_successes, _THETA), rel=1e-9
    )


def test_mgf_z_series_converges_in_outage_regime() -> None:
    mean_successes = 20.0 * math.exp(-2.0 / 3.0)
    theta = 2.32e4
    for z in (1.2, 1.5):
        nu = theta * (1.0 - 1.0 / z)
        direct = analytic.mgf_z_direct(nu, mean_successes, theta)
        errors = [
            abs(analytic.mgf_z_series(nu, mean_successes, theta, n_max) - direct)
            for n_max in (5, 20, 80)
        ]
        assert errors[1] < 1e-3 * direct
        assert errors[2] < errors[1] < errors[0]


def test_mgf_z_series_domain() -> None:
    with pytest.raises(DomainError):
        analytic.mgf_z_series(0.0, 5.0, _THETA, 20)
    with pytest.raises(DomainError):
        analytic.mgf_z_series(0.5 * _THETA, 5.0, _THETA, 1)


def test_chernoff_bound_small_tau_limit() -> None:
    config = fig6_config()
    mean_successes = analytic.derive_params(config).expected_successes

    direct = analytic.chernoff_outage_bound(config, OutageQuery(tau=1e-9, method="direct"))
    series = analytic.chernoff_outage_bound(config, OutageQuery(tau=1e-9))

    assert direct.nu_star == 0.0
    assert direct.z_star == 1.0
    assert direct.bound == pytest.approx(-math.expm1(-mean_successes), rel=1e-12)
    assert series.bound == pytest.approx(-math.expm1(-mean_successes), rel=1e-3)


def test_chernoff_bound_nonincreasing_in_tau() -> None:
    config = fig6_config()
    taus = [tau * 1e-3 for tau in (0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 2.5, 3.0)]

    results = [
        analytic.chernoff_outage_bound(config, OutageQuery(tau=tau, method="direct"))
        for tau in taus
    ]

    bounds = [result.bound for result in results]
    assert all(later <= earlier * (1.0 + 1e-9) for earlier, later in zip(bounds, bounds[1:]))
    assert bounds[-1] < 0.1
    assert all(result.z_star >= 1.0 for result in results)


def test_chernoff_bound_series_agrees_with_direct() -> None:
    config = fig6_config()
    for tau in (2.5e-4, 1e-3, 2e-3):
        series = analytic.chernoff_outage_bound(config, OutageQuery(tau=tau))
        direct = analytic.chernoff_outage_bound(config, OutageQuery(tau=tau, method="direct"))
        assert series.bound == pytest.approx(direct.bound, rel=1e-3)


def test_chernoff_bound_backlog_reference_shifts_threshold() -> None:
    config = fig6_config()

    shifted = analytic.chernoff_outage_bound(config, OutageQuery(tau=2e-3, t_N=1e-3))
    same = analytic.chernoff_outage_bound(config, OutageQuery(tau=1e-3))

    assert shifted.bound == pytest.approx(same.bound, rel=1e-9)
    with pytest.raises(DomainError):
        analytic.chernoff_outage_bound(config, OutageQuery(tau=1e-3, t_N=1e-3))


def test_chernoff_bound_without_load_and_invalid_tau() -> None:
    result = analytic.chernoff_outage_bound(fig6_config(**{"lambda": 0}), OutageQuery(tau=1e-3))

    assert result.bound == 0.0
    with pytest.raises(ValidationError):
        OutageQuery(tau=0.0)


def test_solve_stable_umax_hits_round_interval() -> None:
    config = fig5b_config()

    root = analytic.solve_stable_umax(config)

    assert root is not None
    assert 8.5e-3 < root < 9.5e-3
    work = analytic.mean_total_upload_time(config.with_updates(input_cap=root)).exact
    assert work == pytest.approx(config.round_interval, rel=1e-6)


def test_solve_stable_umax_without_crossing() -> None:
    assert analytic.solve_stable_umax(fig4_config()) is None
    assert analytic.solve_stable_umax(fig5b_config(**{"lambda": 0})) is None


def test_solve_stable_m_reference_points() -> None:
    assert analytic.solve_stable_m(fig5a_config()) == 34

    config = fig4_config()
    best = analytic.solve_stable_m(config)
    assert 35 <= best <= 45
    assert analytic.is_stable(config.with_updates(num_rac_channels=best)).stable
    assert not analytic.is_stable(config.with_updates(num_rac_channels=best + 1)).stable

    assert analytic.solve_stable_m(fig5a_config(delta=1)) == 39


def test_solve_stable_m_without_feasible_value() -> None:
    config = make_config(B="3", M="1", mean_input="1", u_max="inf", **{"lambda": "1"})

    assert not analytic.is_stable(config).stable
    with pytest.raises(NoFeasibleMError):
        analytic.solve_stable_m(config)

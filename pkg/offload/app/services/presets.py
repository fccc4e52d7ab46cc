"""Pinned experiment presets and the sweep runner that reproduces them.

Sweep points are independent campaigns: each gets a seed derived from the preset's
master seed and its grid index, so results do not depend on the worker count.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Mapping
from dataclasses import dataclass, field

import pandas as pd
from joblib import Parallel, delayed

from shared.schemas import ControlTarget, ExperimentPreset, OutageQuery, SystemConfig

from ..config import settings
from ..errors import NoFeasibleMError, UnknownPresetError
from . import analytic, control, model, simulator

_LOGGER = logging.getLogger(__name__)

_COMMON = {
    "B": "50",
    "b": "1",
    "delta": "1e-3",
    "snr_mean_db": "10",
    "snr_floor_db": "6",
}

SWEEP_COLUMNS = (
    "offload_pct_sim",
    "offload_pct_theory",
    "ED_sim",
    "ED_se",
    "ED_theory",
    "ED_bound_l1",
    "ED_bound_l1b",
)
OUTAGE_COLUMNS = ("tau", "empirical", "ci_low", "ci_high", "chernoff_bound", "nu_star")

PRESETS: dict[str, ExperimentPreset] = {
    preset.name: preset
    for preset in (
        ExperimentPreset(
            name="fig3a",
            description="Offloading share and E[D] versus lambda (M=30, 1/mu=2*delta, U_max=10*delta).",
            kind="sweep",
            base={**_COMMON, "M": "30", "mean_input": "2e-3", "u_max": "1e-2", "lambda": "30"},
            sweep_parameter="lambda",
            grid=[2.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            outputs=list(SWEEP_COLUMNS),
            rounds=20_000,
            seed=3101,
        ),
        ExperimentPreset(
            name="fig3b",
            description="Offloading share and E[D] versus 1/mu (M=30, lambda=30, U_max=10*delta).",
            kind="sweep",
            base={**_COMMON, "M": "30", "lambda": "30", "u_max": "1e-2", "mean_input": "2e-3"},
            sweep_parameter="mean_input",
            grid=[1e-3, 2e-3, 4e-3, 6e-3, 8e-3, 1e-2],
            outputs=list(SWEEP_COLUMNS),
            rounds=20_000,
            seed=3102,
        ),
        ExperimentPreset(
            name="fig4a",
            description="Offloading share and E[D] versus M (lambda=30, 1/mu=2*delta, U_max=10*delta).",
            kind="sweep",
            base={**_COMMON, "lambda": "30", "mean_input": "2e-3", "u_max": "1e-2", "M": "30"},
            sweep_parameter="M",
            grid=[5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0],
            outputs=list(SWEEP_COLUMNS),
            rounds=20_000,
            seed=4101,
        ),
        ExperimentPreset(
            name="fig4b",
            description="Offloading share and E[D] versus U_max (M=30, lambda=30, 1/mu=2*delta).",
            kind="sweep",
            base={**_COMMON, "M": "30", "lambda": "30", "mean_input": "2e-3", "u_max": "1e-2"},
            sweep_parameter="u_max",
            grid=[5e-4, 1e-3, 2e-3, 5e-3, 1e-2, 2e-2, 5e-2, math.inf],
            outputs=list(SWEEP_COLUMNS),
            rounds=20_000,
            seed=4102,
        ),
        ExperimentPreset(
            name="fig5a",
            description="Adaptation of M with B=40, lambda=30, 1/mu=2*delta, U_max=5*delta.",
            kind="adapt",
            base={
                **_COMMON,
                "B": "40",
                "M": "20",
                "lambda": "30",
                "mean_input": "2e-3",
                "u_max": "5e-3",
            },
            control_target=ControlTarget.NUM_CHANNELS,
            outputs=list(simulator.ROUND_COLUMNS) + ["m_i"],
            rounds=10_000,
            seed=5101,
        ),
        ExperimentPreset(
            name="fig5b",
            description="Adaptation of U_max with B=40, M=30, lambda=30, 1/mu=5*delta.",
            kind="adapt",
            base={
                **_COMMON,
                "B": "40",
                "M": "30",
                "lambda": "30",
                "mean_input": "5e-3",
                "u_max": "5e-3",
            },
            control_target=ControlTarget.UMAX,
            outputs=list(simulator.ROUND_COLUMNS) + ["umax_i"],
            rounds=10_000,
            seed=5102,
        ),
        ExperimentPreset(
            name="fig6",
            description="Latency outage versus tau (M=30, lambda=20, 1/mu=3*delta, U_max=inf).",
            kind="outage_tau",
            base={**_COMMON, "M": "30", "lambda": "20", "mean_input": "3e-3", "u_max": "inf"},
            tau_grid=[2.5e-4, 5e-4, 7.5e-4, 1e-3, 1.25e-3, 1.5e-3, 2e-3, 2.5e-3, 3e-3],
            outputs=list(OUTAGE_COLUMNS),
            rounds=100_000,
            seed=6101,
        ),
        ExperimentPreset(
            name="fig7",
            description="Latency outage at tau=delta versus M (lambda=20, 1/mu=2*delta, U_max=inf).",
            kind="outage_sweep",
            base={**_COMMON, "lambda": "20", "mean_input": "2e-3", "u_max": "inf", "M": "30"},
            sweep_parameter="M",
            grid=[10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0],
            tau_grid=[1e-3],
            outputs=list(OUTAGE_COLUMNS),
            rounds=50_000,
            seed=7101,
        ),
        ExperimentPreset(
            name="fig8",
            description="Latency outage at tau=delta versus 1/mu, with and without U_max=5*delta.",
            kind="outage_sweep",
            base={**_COMMON, "M": "30", "lambda": "20", "mean_input": "2e-3", "u_max": "inf"},
            sweep_parameter="mean_input",
            grid=[1e-3, 1.5e-3, 2e-3, 2.5e-3, 3e-3, 4e-3, 5e-3],
            tau_grid=[1e-3],
            series={"u_max=inf": {"u_max": "inf"}, "u_max=5e-3": {"u_max": "5e-3"}},
            outputs=list(OUTAGE_COLUMNS),
            rounds=50_000,
            seed=8101,
        ),
    )
}


@dataclass(slots=True)
class PresetResult:
    preset: ExperimentPreset
    table: pd.DataFrame
    summary: list[str] = field(default_factory=list)


def get_preset(name: str) -> ExperimentPreset:
    """Looks up a preset by name.

    Raises:
        UnknownPresetError: If no preset has that name.
    """
    try:
        return PRESETS[name]
    except KeyError:
        raise UnknownPresetError(
            f"unknown preset {name!r}; known presets: {', '.join(sorted(PRESETS))}"
        ) from None


def preset_config(preset: ExperimentPreset, overrides: Mapping[str, str] | None = None) -> SystemConfig:
    """Validates the preset's base parameters with optional key overrides."""
    return model.validate_config({**preset.base, **(overrides or {})})


def _format_value(value: float) -> str:
    if math.isinf(value):
        return "inf"
    return str(int(value)) if float(value).is_integer() and abs(value) >= 1 else repr(value)


def sweep_point(config: SystemConfig, rounds: int, seed: int) -> dict[str, float]:
    """Simulated and closed-form offloading share and E[D] at one configuration."""
    stats = simulator.run_campaign(config, rounds, seed).stats
    mean_upload = analytic.mean_total_upload_time(config)
    mean_successes = analytic.derive_params(config).expected_successes
    theory_pct = 100.0 * mean_successes / config.arrival_rate if config.arrival_rate else 0.0
    return {
        "offload_pct_sim": 100.0 * stats.offload_fraction,
        "offload_pct_theory": theory_pct,
        "ED_sim": stats.mean_D,
        "ED_se": stats.se_D,
        "ED_theory": mean_upload.exact,
        "ED_bound_l1": mean_upload.bound_l1,
        "ED_bound_l1b": mean_upload.bound_l1b,
    }


def outage_point(
    config: SystemConfig,
    tau_grid: list[float],
    rounds: int,
    seed: int,
    n_max: int | None = None,
) -> list[dict[str, float]]:
    """Empirical outage and Chernoff bound for every tau of the grid."""
    estimates = simulator.measure_outage(config, tau_grid, rounds, seed)
    rows = []
    for estimate in estimates:
        bound = analytic.chernoff_outage_bound(
            config,
            OutageQuery(tau=estimate.tau, n_max=n_max or settings.CHERNOFF_N_MAX),
        )
        rows.append(
            {
                "tau": estimate.tau,
                "empirical": estimate.probability,
                "ci_low": estimate.ci_low,
                "ci_high": estimate.ci_high,
                "chernoff_bound": bound.bound,
                "nu_star": bound.nu_star,
            }
        )
    return rows


def _run_sweep(
    preset: ExperimentPreset, rounds: int, master_seed: int, workers: int
) -> pd.DataFrame:
    param = preset.sweep_parameter
    series = preset.series or {"": {}}
    jobs = []
    labels = []
    index = 0
    for label, overrides in series.items():
        for value in preset.grid:
            config = preset_config(preset, {**overrides, param: _format_value(value)})
            seed = model.derive_seed(master_seed, index)
            index += 1
            labels.append((label, value))
            if preset.kind == "sweep":
                jobs.append(delayed(sweep_point)(config, rounds, seed))
            else:
                jobs.append(delayed(outage_point)(config, preset.tau_grid, rounds, seed))
    results = Parallel(n_jobs=workers)(jobs)

    records = []
    for (label, value), result in zip(labels, results):
        point_rows = [result] if isinstance(result, dict) else result
        for row in point_rows:
            record = {param: value}
            if preset.series:
                record["series"] = label
            record.update(row)
            records.append(record)
    return pd.DataFrame.from_records(records)


def _sweep_summary(preset: ExperimentPreset, table: pd.DataFrame) -> list[str]:
    lines = []
    if preset.kind == "sweep":
        worst = (table["ED_sim"] - table["ED_theory"]).abs() / table["ED_se"].where(
            table["ED_se"] > 0
        )
        lines.append(f"max |ED_sim - ED_theory| / se: {worst.max():.3f}")
        unstable = table.loc[table["ED_theory"] > 1e-3, preset.sweep_parameter].tolist()
        lines.append(f"points with E[D] > delta: {unstable}")
    else:
        dominated = bool((table["empirical"] <= table["chernoff_bound"]).all())
        lines.append(f"empirical <= chernoff_bound at every point: {dominated}")
    return lines


def _run_adapt(
    preset: ExperimentPreset, rounds: int, master_seed: int
) -> tuple[pd.DataFrame, list[str]]:
    config = preset_config(preset)
    target = preset.control_target
    state = control.new_controller(target, config)
    controller = control.AdaptiveController(state, config.round_interval)
    result = simulator.run_campaign(config, rounds, master_seed, controller)
    table = result.rows
    column = "umax_i" if target is ControlTarget.UMAX else "m_i"
    table[column] = controller.values
    settled = controller.settled_mean()
    tail = max(1, rounds // 10)
    lines = [
        f"settled {target.value} (mean of last {tail} rounds): {settled:.6g}",
        f"mean D over last {tail} rounds: {table['D'].iloc[-tail:].mean():.6g}",
    ]
    if target is ControlTarget.UMAX:
        root = analytic.solve_stable_umax(config)
        lines.append(f"solved U_max with E[D] = delta: {root}")
    else:
        try:
            lines.append(f"largest stable M: {analytic.solve_stable_m(config)}")
        except NoFeasibleMError as exc:
            lines.append(f"largest stable M: none ({exc})")
        settled_m = table["m"].iloc[-tail:]
        lines.append(f"settled M values: {sorted(set(settled_m.tolist()))}")
        lines.append(f"settled M mode: {int(settled_m.mode().iloc[0])}")
    return table, lines


def _run_outage_tau(
    preset: ExperimentPreset, rounds: int, master_seed: int
) -> pd.DataFrame:
    config = preset_config(preset)
    return pd.DataFrame.from_records(
        outage_point(config, preset.tau_grid, rounds, master_seed)
    )


def run_preset(
    preset: ExperimentPreset,
    *,
    rounds: int | None = None,
    workers: int | None = None,
    seed: int | None = None,
) -> PresetResult:
    """Reproduces one preset.

    Args:
        preset: Preset to run.
        rounds: Rounds per campaign; defaults to the preset's pinned value.
        workers: joblib workers for sweep points; defaults to ``SWEEP_WORKERS``.
        seed: Master seed; defaults to the preset's pinned seed.

    Returns:
        The output table (rows ordered by series then grid index) and summary lines.
    """
    rounds = rounds or preset.rounds
    workers = workers or settings.SWEEP_WORKERS
    master_seed = preset.seed if seed is None else seed
    _LOGGER.info(
        "Running preset.",
        extra={"preset": preset.name, "rounds": rounds, "workers": workers, "seed": master_seed},
    )
    summary = [preset.description, f"rounds={rounds} seed={master_seed}"]
    if preset.kind in ("sweep", "outage_sweep"):
        table = _run_sweep(preset, rounds, master_seed, workers)
        summary += _sweep_summary(preset, table)
    elif preset.kind == "adapt":
        table, lines = _run_adapt(preset, rounds, master_seed)
        summary += lines
    else:
        table = _run_outage_tau(preset, rounds, master_seed)
        summary += _sweep_summary(preset, table)
    return PresetResult(preset=preset, table=table, summary=summary)

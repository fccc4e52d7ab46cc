"""Command handlers behind the ``offload-sim`` subcommands.

Handlers stay thin: they load the scenario, call the services and hand tables to
``output``. Errors propagate to ``main`` which maps them to exit codes.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from pathlib import Path

import pandas as pd

from shared.schemas import (
    AnalyticSummary,
    ControlTarget,
    OutageQuery,
    OutageReference,
    SystemConfig,
)

from ..config import settings
from ..errors import DomainError, NoFeasibleMError
from ..services import analytic, control, model, presets, simulator
from . import output

_LOGGER = logging.getLogger(__name__)


def _load(config_path: str | Path, seed: int | None) -> SystemConfig:
    config = model.load_config(config_path)
    if seed is not None:
        config = config.with_updates(seed=seed)
    return config


def analytic_summary(config: SystemConfig) -> AnalyticSummary:
    """Evaluates every closed form of one scenario."""
    params = analytic.derive_params(config)
    verdict = analytic.is_stable(config)
    return AnalyticSummary(
        offload_probability=params.offload_probability,
        conditional_rate=params.conditional_rate,
        expected_successes=params.expected_successes,
        mean_upload_time=analytic.mean_total_upload_time(config),
        stable=verdict.stable,
        margin=verdict.margin,
        intra_delay_rate=params.intra_delay_rate,
    )


def cmd_analytic(config_path: str | Path, out: str | Path | None = None) -> AnalyticSummary:
    """Prints the closed-form summary of a scenario; ``out`` also receives it as JSON."""
    _LOGGER.debug("cmd_analytic() called.", extra={"config_path": str(config_path)})
    summary = analytic_summary(model.load_config(config_path))
    mean = summary.mean_upload_time
    output.write_lines(
        [
            f"q_o              {summary.offload_probability:.6g}",
            f"mu_max           {summary.conditional_rate:.6g}",
            f"lambda_bar       {summary.expected_successes:.6g}",
            f"E[D] exact       {mean.exact:.6g}",
            f"E[D] bound L1    {mean.bound_l1:.6g}",
            f"E[D] bound L1b   {mean.bound_l1b:.6g}",
            f"stable           {summary.stable}",
            f"margin           {summary.margin:.6g}",
            f"theta            {summary.intra_delay_rate:.6g}",
        ],
        None,
    )
    if out is not None:
        output.write_lines([summary.model_dump_json(indent=2)], out)
    return summary


def cmd_simulate(
    config_path: str | Path,
    *,
    rounds: int,
    seed: int | None = None,
    out: str | Path | None = None,
) -> simulator.CampaignResult:
    """Runs a campaign and writes the per-round CSV followed by mean and stderr rows."""
    _LOGGER.debug("cmd_simulate() called.", extra={"rounds": rounds, "seed": seed})
    config = _load(config_path, seed)
    result = simulator.run_campaign(config, rounds)
    output.write_table(output.with_summary_rows(result.rows), out)
    return result


def cmd_adapt(
    config_path: str | Path,
    *,
    target: ControlTarget,
    rounds: int,
    gain: float | None = None,
    kappa: float = control.DEFAULT_KAPPA,
    seed: int | None = None,
    out: str | Path | None = None,
) -> list[str]:
    """Runs a controlled campaign; the CSV gains the controller's internal value column."""
    _LOGGER.debug(
        "cmd_adapt() called.",
        extra={"target": target.value, "rounds": rounds, "gain": gain, "kappa": kappa},
    )
    config = _load(config_path, seed)
    controller = control.AdaptiveController(
        control.new_controller(target, config, gain=gain, kappa=kappa), config.round_interval
    )
    result = simulator.run_campaign(config, rounds, controller=controller)
    table = result.rows
    table["umax_i" if target is ControlTarget.UMAX else "m_i"] = controller.values
    output.write_table(table, out)

    tail = max(1, rounds // 10)
    lines = [
        f"settled {target.value}: {controller.settled_mean():.6g} (last {tail} rounds)",
        f"mean D (last {tail} rounds): {table['D'].iloc[-tail:].mean():.6g}",
    ]
    if target is ControlTarget.UMAX:
        lines.append(f"solved U_max: {analytic.solve_stable_umax(config)}")
    else:
        try:
            lines.append(f"largest stable M: {analytic.solve_stable_m(config)}")
        except NoFeasibleMError as exc:
            lines.append(f"largest stable M: none ({exc})")
    # The CSV may be on stdout, so the summary goes to the log.
    for line in lines:
        _LOGGER.info(line)
    return lines


def cmd_outage(
    config_path: str | Path,
    *,
    tau_grid: Sequence[float],
    rounds: int,
    seed: int | None = None,
    out: str | Path | None = None,
    n_max: int | None = None,
    method: str = "series",
    reference: OutageReference = OutageReference.SAME_ROUND,
) -> pd.DataFrame:
    """Empirical outage with Wilson intervals next to the Chernoff bound per tau."""
    _LOGGER.debug("cmd_outage() called.", extra={"taus": list(tau_grid), "rounds": rounds})
    if not tau_grid or any(tau <= 0 for tau in tau_grid):
        raise DomainError(f"tau values must be positive, got {list(tau_grid)}")
    config = _load(config_path, seed)
    estimates = simulator.measure_outage(
        config, tau_grid, rounds, outage_reference=reference
    )
    records = []
    for estimate in estimates:
        bound = analytic.chernoff_outage_bound(
            config,
            OutageQuery(
                tau=estimate.tau, n_max=n_max or settings.CHERNOFF_N_MAX, method=method
            ),
        )
        records.append(
            {
                "tau": estimate.tau,
                "empirical": estimate.probability,
                "ci_low": estimate.ci_low,
                "ci_high": estimate.ci_high,
                "chernoff_bound": bound.bound,
                "nu_star": bound.nu_star,
            }
        )
    table = pd.DataFrame.from_records(records, columns=list(presets.OUTAGE_COLUMNS))
    output.write_table(table, out)
    return table


def cmd_reproduce(
    preset_name: str,
    *,
    out_dir: str | Path | None = None,
    rounds: int | None = None,
    workers: int | None = None,
    seed: int | None = None,
) -> tuple[Path, Path]:
    """Writes ``<preset>.csv`` and ``<preset>.summary.txt`` for one preset.

    Raises:
        UnknownPresetError: If the preset does not exist.
    """
    preset = presets.get_preset(preset_name)
    directory = Path(out_dir if out_dir is not None else settings.OUTPUT_DIR)
    result = presets.run_preset(preset, rounds=rounds, workers=workers, seed=seed)
    csv_path = directory / f"{preset.name}.csv"
    summary_path = directory / f"{preset.name}.summary.txt"
    output.write_table(result.table, csv_path)
    output.write_lines(result.summary, summary_path)
    _LOGGER.info(
        "Preset reproduced.", extra={"preset": preset.name, "csv": str(csv_path)}
    )
    return csv_path, summary_path

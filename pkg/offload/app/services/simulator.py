"""Monte Carlo round engine for two-stage random-access offloading.

Each round draws the active devices, applies the size-threshold offloading rule,
resolves collisions on the random-access sub-channels and schedules the winners in a
random order on the offloading channel. Campaigns chain rounds through the backlog
state variable X and optionally feed a controller and an outage accumulator.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
import pandas as pd
from numpy.typing import NDArray

from shared.schemas import (
    BacklogMode,
    CampaignStats,
    OutageEstimate,
    OutageReference,
    SystemConfig,
)

from ..config import settings
from ..errors import DomainError, InsufficientSamplesError
from . import model
from .numerics import wilson_interval

_LOGGER = logging.getLogger(__name__)

ROUND_COLUMNS = ("round", "K", "W", "S", "D", "X", "backlog", "umax", "m")


@dataclass(slots=True)
class SimState:
    """Mutable state carried from one round to the next.

    Attributes:
        rng: Generator every draw of the campaign comes from.
        round_index: Index i of the next round.
        backlog_finish_time: X_i, the time at which all uploads granted so far finish.
        mode: How X advances; ``backlog`` adds D_i, ``work_conserving`` lets the
            offloading channel idle until the end of the round.
    """

    rng: np.random.Generator
    round_index: int = 0
    backlog_finish_time: float = 0.0
    mode: BacklogMode = BacklogMode.BACKLOG


@dataclass(slots=True, frozen=True)
class RoundOutcome:
    """Everything that happened in one round, stored column-wise per active device.

    ``channel_picks`` and ``schedule_slots`` use 0 for "none".
    """

    round_index: int
    num_channels: int
    input_cap: float
    input_sizes: NDArray[np.float64]
    snrs: NDArray[np.float64]
    contends: NDArray[np.bool_]
    channel_picks: NDArray[np.int64]
    success: NDArray[np.bool_]
    schedule_slots: NDArray[np.int64]
    upload_times: NDArray[np.float64]
    D: float
    X_before: float
    X_after: float
    backlog: float

    @property
    def K(self) -> int:
        return int(self.input_sizes.size)

    @property
    def W(self) -> int:
        return int(np.count_nonzero(self.contends))

    @property
    def S(self) -> int:
        return int(np.count_nonzero(self.success))

    @property
    def tasks(self) -> list[model.TaskRecord]:
        return [
            model.TaskRecord(
                input_size=float(self.input_sizes[k]),
                snr=float(self.snrs[k]),
                contends=bool(self.contends[k]),
                channel_pick=int(self.channel_picks[k]) or None,
                success=bool(self.success[k]),
                schedule_slot=int(self.schedule_slots[k]) or None,
                upload_time=float(self.upload_times[k]),
            )
            for k in range(self.K)
        ]

    def scheduled_upload_times(self) -> NDArray[np.float64]:
        """Upload times of the round's winners in schedule order."""
        winners = np.flatnonzero(self.success)
        order = np.argsort(self.schedule_slots[winners])
        return self.upload_times[winners[order]]

    def intra_delays(self) -> NDArray[np.float64]:
        """Z per winner in schedule order: upload time of same-round winners ahead of it."""
        times = self.scheduled_upload_times()
        return np.concatenate(([0.0], np.cumsum(times)[:-1])) if times.size else times


class RoundController(Protocol):
    def apply(self, config: SystemConfig) -> SystemConfig: ...

    def observe(self, observed_D: float) -> None: ...


class OutageAccumulator:
    """Counts latency outages Z + t_N > tau over a fixed threshold grid."""

    def __init__(self, tau_grid: Sequence[float]) -> None:
        taus = np.asarray(tau_grid, dtype=float)
        if taus.ndim != 1 or taus.size == 0:
            raise DomainError("tau grid must be a non-empty list")
        if np.any(taus < 0) or not np.all(np.isfinite(taus)):
            raise DomainError(f"tau values must be finite and >= 0, got {list(tau_grid)}")
        self.taus = taus
        self.outages = np.zeros(taus.size, dtype=np.int64)
        self.samples = 0

    def add(self, delays: NDArray[np.float64]) -> None:
        if delays.size == 0:
            return
        self.outages += np.count_nonzero(delays[:, None] > self.taus[None, :], axis=0)
        self.samples += int(delays.size)

    def estimates(self, confidence: float = 0.95) -> list[OutageEstimate]:
        results = []
        for tau, outages in zip(self.taus, self.outages):
            low, high = wilson_interval(int(outages), self.samples, confidence)
            results.append(
                OutageEstimate(
                    tau=float(tau),
                    outages=int(outages),
                    samples=self.samples,
                    probability=float(outages) / self.samples if self.samples else 0.0,
                    ci_low=low,
                    ci_high=high,
                )
            )
        return results


@dataclass(slots=True)
class CampaignResult:
    stats: CampaignStats
    rows: pd.DataFrame
    outcomes: list[RoundOutcome] = field(default_factory=list)


def resolve_seed(config: SystemConfig, seed: int | None) -> int:
    """An explicit seed wins over the config seed, which wins over the default."""
    if seed is not None:
        return seed
    if config.seed is not None:
        return config.seed
    return settings.DEFAULT_SEED


def _advance(state: SimState, round_interval: float, work: float) -> float:
    if state.mode is BacklogMode.WORK_CONSERVING:
        start = max(state.backlog_finish_time, (state.round_index + 1) * round_interval)
        return start + work
    return state.backlog_finish_time + work


def run_round(state: SimState, config: SystemConfig) -> RoundOutcome:
    """Simulates one random-access round and advances ``state``.

    Draw order per round: arrivals, input sizes, SNRs, channel picks, schedule
    permutation.

    Args:
        state: Campaign state; its generator, round index and X are updated.
        config: Scenario used for this round.

    Returns:
        The round's per-device record together with D, X before and after, and the
        backlog ``X_after - (i+1)*delta``.
    """
    rng = state.rng
    num_channels = config.num_rac_channels
    num_active = model.sample_arrivals(config, rng)
    input_sizes = np.asarray(model.sample_input_size(config, rng, num_active), dtype=float)
    snrs = np.asarray(model.sample_snr(config, rng, num_active), dtype=float)

    contends = input_sizes <= config.input_cap
    num_contenders = int(np.count_nonzero(contends))
    channel_picks = np.zeros(num_active, dtype=np.int64)
    channel_picks[contends] = rng.integers(1, num_channels + 1, size=num_contenders)
    occupancy = np.bincount(channel_picks[contends], minlength=num_channels + 1)
    # Channel 0 holds no contender, so non-contenders never pass this test.
    success = occupancy[channel_picks] == 1

    num_winners = int(np.count_nonzero(success))
    schedule_slots = np.zeros(num_active, dtype=np.int64)
    schedule_slots[success] = rng.permutation(num_winners) + 1

    upload_times = model.upload_time(input_sizes, snrs, config.offload_bandwidth)
    work = math.fsum(upload_times[success])
    x_before = state.backlog_finish_time
    x_after = _advance(state, config.round_interval, work)
    outcome = RoundOutcome(
        round_index=state.round_index,
        num_channels=num_channels,
        input_cap=config.input_cap,
        input_sizes=input_sizes,
        snrs=snrs,
        contends=contends,
        channel_picks=channel_picks,
        success=success,
        schedule_slots=schedule_slots,
        upload_times=upload_times,
        D=work,
        X_before=x_before,
        X_after=x_after,
        backlog=x_after - (state.round_index + 1) * config.round_interval,
    )
    state.backlog_finish_time = x_after
    state.round_index += 1
    if _LOGGER.isEnabledFor(logging.DEBUG):
        _LOGGER.debug(
            "run_round() finished.",
            extra={
                "round": outcome.round_index,
                "K": num_active,
                "W": num_contenders,
                "S": num_winners,
                "D": work,
            },
        )
    return outcome


def _stats_from_rows(
    rows: pd.DataFrame, upload_total: float, outage: OutageAccumulator | None
) -> CampaignStats:
    rounds = len(rows)
    work = rows["D"].to_numpy()
    var_d = float(np.var(work, ddof=1)) if rounds > 1 else 0.0
    total_active = int(rows["K"].sum())
    total_winners = int(rows["S"].sum())
    return CampaignStats(
        rounds=rounds,
        mean_D=float(work.mean()),
        var_D=var_d,
        se_D=math.sqrt(var_d / rounds),
        mean_S=total_winners / rounds,
        mean_W=float(rows["W"].mean()),
        mean_K=total_active / rounds,
        offload_fraction=total_winners / total_active if total_active else 0.0,
        max_backlog=float(rows["backlog"].max()),
        final_backlog=float(rows["backlog"].iloc[-1]),
        successes=total_winners,
        mean_upload_time=upload_total / total_winners if total_winners else 0.0,
        outage=outage.estimates() if outage is not None else [],
    )


def run_campaign(
    config: SystemConfig,
    num_rounds: int,
    seed: int | None = None,
    controller: RoundController | None = None,
    *,
    tau_grid: Sequence[float] | None = None,
    mode: BacklogMode = BacklogMode.BACKLOG,
    outage_reference: OutageReference = OutageReference.SAME_ROUND,
    keep_outcomes: bool = False,
) -> CampaignResult:
    """Runs ``num_rounds`` consecutive rounds and aggregates their statistics.

    A controller, when given, sets the configuration of each round and observes that
    round's D once it completes.

    Args:
        config: Scenario of the first round (and of every round without controller).
        num_rounds: Number of rounds, at least one.
        seed: Master seed; falls back to the config seed, then ``DEFAULT_SEED``.
        controller: Optional adaptive controller.
        tau_grid: Thresholds at which latency outages of winners are counted.
        mode: Backlog accounting mode.
        outage_reference: ``same_round`` counts intra-delay only; ``backlog`` adds the
            waiting time ``max(0, X_i - (i+1)*delta)`` in front of the round.
        keep_outcomes: Keep every ``RoundOutcome`` (memory grows with rounds).

    Returns:
        Aggregated statistics and the per-round table with columns ``ROUND_COLUMNS``.

    Raises:
        DomainError: If ``num_rounds < 1``, or from ``OutageAccumulator`` when the
            tau grid is empty or holds negative or non-finite values.
    """
    if num_rounds < 1:
        raise DomainError(f"num_rounds must be >= 1, got {num_rounds}")
    master_seed = resolve_seed(config, seed)
    _LOGGER.debug(
        "run_campaign() called.",
        extra={
            "rounds": num_rounds,
            "seed": master_seed,
            "controlled": controller is not None,
            "mode": mode.value,
        },
    )
    state = SimState(rng=model.make_rng(master_seed), mode=mode)
    outage = OutageAccumulator(tau_grid) if tau_grid is not None else None
    columns = {name: np.zeros(num_rounds) for name in ROUND_COLUMNS}
    upload_total = 0.0
    outcomes: list[RoundOutcome] = []
    round_config = config

    for i in range(num_rounds):
        if controller is not None:
            round_config = controller.apply(config)
        outcome = run_round(state, round_config)
        if outage is not None:
            delays = outcome.intra_delays()
            if outage_reference is OutageReference.BACKLOG:
                upload_start = (outcome.round_index + 1) * round_config.round_interval
                delays = delays + max(0.0, outcome.X_before - upload_start)
            outage.add(delays)
        if controller is not None:
            controller.observe(outcome.D)
        upload_total += outcome.D
        for name, value in (
            ("round", i),
            ("K", outcome.K),
            ("W", outcome.W),
            ("S", outcome.S),
            ("D", outcome.D),
            ("X", outcome.X_after),
            ("backlog", outcome.backlog),
            ("umax", round_config.input_cap),
            ("m", round_config.num_rac_channels),
        ):
            columns[name][i] = value
        if keep_outcomes:
            outcomes.append(outcome)

    rows = pd.DataFrame(columns)
    for name in ("round", "K", "W", "S", "m"):
        rows[name] = rows[name].astype(np.int64)
    stats = _stats_from_rows(rows, upload_total, outage)
    _LOGGER.debug(
        "run_campaign() finished.",
        extra={
            "mean_D": stats.mean_D,
            "se_D": stats.se_D,
            "offload_fraction": stats.offload_fraction,
            "successes": stats.successes,
        },
    )
    return CampaignResult(stats=stats, rows=rows, outcomes=outcomes)


def measure_outage(
    config: SystemConfig,
    tau_grid: Sequence[float],
    num_rounds: int,
    seed: int | None = None,
    *,
    outage_reference: OutageReference = OutageReference.SAME_ROUND,
    min_samples: int | None = None,
) -> list[OutageEstimate]:
    """Empirical latency-outage probability per threshold with Wilson intervals.

    Every winner of every round is one sample; the event is ``Z > tau`` where Z is
    the upload time of the same-round winners scheduled before it.

    Raises:
        InsufficientSamplesError: If fewer than ``MIN_OUTAGE_SAMPLES`` winners occur.
    """
    required = min_samples if min_samples is not None else settings.MIN_OUTAGE_SAMPLES
    result = run_campaign(
        config,
        num_rounds,
        seed,
        tau_grid=tau_grid,
        outage_reference=outage_reference,
    )
    if result.stats.successes < required:
        raise InsufficientSamplesError(
            f"only {result.stats.successes} offloading devices observed, need {required}"
        )
    return result.stats.outage


def empirical_conditional_successes(
    config: SystemConfig, num_contenders: int, trials: int, seed: int | None = None
) -> float:
    """Mean number of collision-free contenders when exactly W devices contend.

    All trials are resolved at once: each trial's channel picks are offset into its
    own block of ``M + 1`` bins before a single ``bincount``.
    """
    if num_contenders < 0 or trials < 1:
        raise DomainError(f"need W >= 0 and trials >= 1, got W={num_contenders}, trials={trials}")
    if num_contenders == 0:
        return 0.0
    rng = model.make_rng(resolve_seed(config, seed))
    bins = config.num_rac_channels + 1
    picks = rng.integers(1, bins, size=(trials, num_contenders))
    offsets = (np.arange(trials) * bins)[:, None]
    occupancy = np.bincount((picks + offsets).ravel(), minlength=trials * bins)
    successes = np.count_nonzero(occupancy.reshape(trials, bins) == 1, axis=1)
    return float(successes.mean())


def merge_campaign_stats(parts: Sequence[CampaignStats]) -> CampaignStats:
    """Pools independent campaigns as if they were one long run.

    Means are weighted by rounds, the variance of D is pooled with the between-run
    term and outage counts are summed over a shared tau grid.

    Raises:
        DomainError: If ``parts`` is empty or the outage grids differ.
    """
    if not parts:
        raise DomainError("nothing to merge")
    rounds = sum(part.rounds for part in parts)
    mean_d = math.fsum(part.mean_D * part.rounds for part in parts) / rounds
    squares = math.fsum(
        (part.rounds - 1) * part.var_D + part.rounds * (part.mean_D - mean_d) ** 2
        for part in parts
    )
    var_d = squares / (rounds - 1) if rounds > 1 else 0.0
    total_active = math.fsum(part.mean_K * part.rounds for part in parts)
    total_winners = sum(part.successes for part in parts)

    grids = {tuple(estimate.tau for estimate in part.outage) for part in parts}
    if len(grids) > 1:
        raise DomainError("campaigns were measured on different tau grids")
    outage: list[OutageEstimate] = []
    for column in zip(*(part.outage for part in parts)):
        outages = sum(estimate.outages for estimate in column)
        samples = sum(estimate.samples for estimate in column)
        low, high = wilson_interval(outages, samples)
        outage.append(
            OutageEstimate(
                tau=column[0].tau,
                outages=outages,
                samples=samples,
                probability=outages / samples if samples else 0.0,
                ci_low=low,
                ci_high=high,
            )
        )

    return CampaignStats(
        rounds=rounds,
        mean_D=mean_d,
        var_D=var_d,
        se_D=math.sqrt(var_d / rounds),
        mean_S=total_winners / rounds,
        mean_W=math.fsum(part.mean_W * part.rounds for part in parts) / rounds,
        mean_K=total_active / rounds,
        offload_fraction=min(1.0, total_winners / total_active) if total_active else 0.0,
        max_backlog=max(part.max_backlog for part in parts),
        final_backlog=math.fsum(part.final_backlog * part.rounds for part in parts) / rounds,
        successes=total_winners,
        mean_upload_time=(
            math.fsum(part.mean_upload_time * part.successes for part in parts) / total_winners
            if total_winners
            else 0.0
        ),
        outage=outage,
    )

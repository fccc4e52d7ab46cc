"""Stochastic-approximation controllers that steer the mean upload work to the round length.

Both controllers apply ``value <- value - eta_i * g * (D_i - delta)`` with the step
schedule ``eta_i = a / (1 + i)^kappa``. D grows with U_max and with M, so the same
sign stabilises either target.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass

from shared.schemas import ControlTarget, SystemConfig

from ..errors import DomainError

_LOGGER = logging.getLogger(__name__)

DEFAULT_KAPPA = 0.8
UMAX_GAIN_FACTOR = 5.0


@dataclass(slots=True, frozen=True)
class ControllerState:
    """Continuous controller state.

    Attributes:
        target: Which configuration parameter is adapted.
        value: Internal continuous value (seconds for U_max, channels for M).
        gain: Step-size scale a.
        kappa: Step-size decay exponent, in (0.5, 1].
        iteration: Number of observations consumed so far.
        innovation_scale: Factor g converting a seconds-scale innovation to the value's
            unit (1 for U_max).
        max_channels: Largest admissible M, used only for the M target.
    """

    target: ControlTarget
    value: float
    gain: float
    kappa: float = DEFAULT_KAPPA
    iteration: int = 0
    innovation_scale: float = 1.0
    max_channels: int | None = None

    def __post_init__(self) -> None:
        if not self.gain > 0:
            raise DomainError(f"controller gain must be positive, got {self.gain}")
        if not 0.5 < self.kappa <= 1.0:
            raise DomainError(f"kappa must lie in (0.5, 1], got {self.kappa}")
        if self.target is ControlTarget.NUM_CHANNELS and (
            self.max_channels is None or self.max_channels < 1
        ):
            raise DomainError("the M controller needs max_channels >= 1")


def step_size(state: ControllerState) -> float:
    """eta_i = a / (1 + i)^kappa for the state's current iteration."""
    return state.gain / (1.0 + state.iteration) ** state.kappa


def _clamp(state: ControllerState, value: float) -> float:
    if state.target is ControlTarget.UMAX:
        return max(0.0, value)
    return min(max(0.0, value), float(state.max_channels))


def step(state: ControllerState, observed_D: float, round_interval: float) -> ControllerState:
    """Consumes one observed D_i and returns the next state.

    Raises:
        DomainError: If ``observed_D`` is negative.
    """
    if observed_D < 0:
        raise DomainError(f"observed D must be >= 0, got {observed_D}")
    move = step_size(state) * state.innovation_scale * (observed_D - round_interval)
    proposed = state.value - move
    value = _clamp(state, proposed)
    if value != proposed and _LOGGER.isEnabledFor(logging.DEBUG):
        _LOGGER.debug(
            "Controller value clamped.",
            extra={"target": state.target.value, "proposed": proposed, "value": value},
        )
    return dataclasses.replace(state, value=value, iteration=state.iteration + 1)


def applied_value(state: ControllerState) -> float | int:
    """Value fed into the next round: U_max as-is, M rounded into ``[1, max_channels]``."""
    if state.target is ControlTarget.UMAX:
        return max(0.0, state.value)
    rounded = math.floor(state.value + 0.5)
    return int(min(max(1, rounded), state.max_channels))


def new_controller(
    target: ControlTarget,
    config: SystemConfig,
    *,
    gain: float | None = None,
    kappa: float = DEFAULT_KAPPA,
    initial: float | None = None,
) -> ControllerState:
    """Builds a controller with default gains scaled to the scenario.

    The U_max controller uses ``a = 5 * (1/mu) / delta`` and starts from the config's
    U_max (or 1/mu when it is infinite). The M controller uses ``a = 1`` with
    ``g = floor(B/b) / delta`` and starts from the config's M.
    """
    delta = config.round_interval
    if target is ControlTarget.UMAX:
        start = initial
        if start is None:
            start = config.input_cap if math.isfinite(config.input_cap) else config.mean_input
        return ControllerState(
            target=target,
            value=float(start),
            gain=gain if gain is not None else UMAX_GAIN_FACTOR * config.mean_input / delta,
            kappa=kappa,
        )
    return ControllerState(
        target=target,
        value=float(initial if initial is not None else config.num_rac_channels),
        gain=gain if gain is not None else 1.0,
        kappa=kappa,
        innovation_scale=(config.max_rac_channels + 1) / delta,
        max_channels=config.max_rac_channels,
    )


class AdaptiveController:
    """Round-by-round controller handle used by ``run_campaign``.

    Keeps the applied and the internal value of every round so the trajectory can
    be reported.
    """

    def __init__(self, state: ControllerState, round_interval: float) -> None:
        self.state = state
        self.round_interval = round_interval
        self.trajectory: list[float] = []
        self.values: list[float] = []

    def apply(self, config: SystemConfig) -> SystemConfig:
        value = applied_value(self.state)
        self.trajectory.append(float(value))
        self.values.append(self.state.value)
        if self.state.target is ControlTarget.UMAX:
            return config.with_updates(input_cap=value)
        return config.with_updates(num_rac_channels=value)

    def observe(self, observed_D: float) -> None:
        self.state = step(self.state, observed_D, self.round_interval)

    def settled_mean(self, fraction: float = 0.1) -> float:
        """Average applied value over the final ``fraction`` of the trajectory."""
        if not self.trajectory:
            raise DomainError("controller has not run yet")
        tail = max(1, int(len(self.trajectory) * fraction))
        return math.fsum(self.trajectory[-tail:]) / tail

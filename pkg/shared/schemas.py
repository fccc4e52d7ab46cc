from __future__ import annotations

import math
from enum import Enum
from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class ArrivalModel(str, Enum):
    POISSON = "poisson"
    BINOMIAL = "binomial"


class SnrModel(str, Enum):
    TRUNCATED_EXPONENTIAL = "truncated_exponential"
    # Ideal power control: every device sees exactly the mean SNR.
    CONSTANT = "constant"


class BacklogMode(str, Enum):
    BACKLOG = "backlog"
    WORK_CONSERVING = "work_conserving"


class OutageReference(str, Enum):
    SAME_ROUND = "same_round"
    BACKLOG = "backlog"


class ControlTarget(str, Enum):
    UMAX = "umax"
    NUM_CHANNELS = "m"


class SystemConfig(BaseModel):
    """Primitive parameters of one two-stage offloading scenario.

    Bandwidths are in normalized channel units, times in seconds and input sizes in
    units such that ``U / (B_o * log2(1 + snr))`` is an upload time in seconds. SNR
    values are linear; dB conversion happens at the config-file boundary.
    """

    model_config = ConfigDict(frozen=True)

    total_bandwidth: float = Field(gt=0)
    rac_channel_bandwidth: float = Field(default=1.0, gt=0)
    num_rac_channels: int = Field(ge=1)
    round_interval: float = Field(gt=0)
    arrival_rate: float = Field(ge=0)
    arrival_model: ArrivalModel = ArrivalModel.POISSON
    population: Optional[int] = Field(default=None, ge=1)
    activation_probability: Optional[float] = Field(default=None, ge=0, le=1)
    mean_input: float = Field(gt=0)
    input_cap: float = Field(default=math.inf, ge=0)
    snr_mean: float = Field(gt=0)
    snr_floor: float = Field(ge=0)
    snr_model: SnrModel = SnrModel.TRUNCATED_EXPONENTIAL
    seed: Optional[int] = Field(default=None, ge=0)

    @model_validator(mode="after")
    def validate_bandwidth_split(self) -> "SystemConfig":
        if self.num_rac_channels > self.max_rac_channels:
            raise ValueError(
                f"num_rac_channels must be <= {self.max_rac_channels} to leave offloading bandwidth"
            )
        if self.offload_bandwidth <= 0:
            raise ValueError("offloading bandwidth B - M*b must be positive")
        if self.arrival_model is ArrivalModel.BINOMIAL and (
            self.population is None or self.activation_probability is None
        ):
            raise ValueError("binomial arrivals need population and activation_probability")
        return self

    @property
    def offload_bandwidth(self) -> float:
        """Bandwidth B_o = B - M*b left to the scheduled upload channel."""
        return self.total_bandwidth - self.num_rac_channels * self.rac_channel_bandwidth

    @property
    def input_rate(self) -> float:
        """Rate mu of the exponential input-size law."""
        return 1.0 / self.mean_input

    @property
    def max_rac_channels(self) -> int:
        """Largest admissible number of random-access sub-channels."""
        return math.floor(self.total_bandwidth / self.rac_channel_bandwidth) - 1

    def with_updates(self, **changes: Any) -> "SystemConfig":
        """Returns a revalidated copy with the given fields replaced."""
        return SystemConfig.model_validate({**self.model_dump(), **changes})


class DerivedParams(BaseModel):
    offload_bandwidth: float = Field(gt=0)
    offload_probability: float = Field(ge=0, le=1)
    conditional_rate: float = Field(gt=0)
    expected_successes: float = Field(ge=0)
    intra_delay_rate: float = Field(gt=0)


class QuadratureSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    relative_tolerance: float = Field(default=1e-10, gt=0, le=1e-3)
    max_subdivisions: int = Field(default=200, ge=1)


class MeanUploadTime(BaseModel):
    """Mean total upload time per round and its two closed-form upper bounds."""

    exact: float = Field(ge=0)
    bound_l1: float = Field(ge=0)
    bound_l1b: float = Field(ge=0)

    @model_validator(mode="after")
    def validate_ordering(self) -> "MeanUploadTime":
        slack = 1.0 + 1e-12
        if self.exact > self.bound_l1 * slack or self.bound_l1 > self.bound_l1b * slack:
            raise ValueError("expected exact <= bound_l1 <= bound_l1b")
        return self


class OutageQuery(BaseModel):
    tau: float = Field(gt=0)
    t_N: float = 0.0
    n_max: int = Field(default=20, ge=2)
    method: Literal["series", "direct"] = "series"


class OutageResult(BaseModel):
    """Chernoff bound on the latency-outage probability at one threshold."""

    tau: float
    t_N: float = 0.0
    nu_star: float = Field(ge=0)
    z_star: float = Field(ge=1)
    bound: float = Field(ge=0, le=1)


class OutageEstimate(BaseModel):
    """Empirical latency-outage probability at one threshold with a Wilson interval."""

    tau: float
    outages: int = Field(ge=0)
    samples: int = Field(ge=0)
    probability: float = Field(ge=0, le=1)
    ci_low: float = Field(ge=0, le=1)
    ci_high: float = Field(ge=0, le=1)


class CampaignStats(BaseModel):
    rounds: int = Field(ge=1)
    mean_D: float = Field(ge=0)
    var_D: float = Field(ge=0)
    se_D: float = Field(ge=0)
    mean_S: float = Field(ge=0)
    mean_W: float = Field(ge=0)
    mean_K: float = Field(ge=0)
    offload_fraction: float = Field(ge=0, le=1)
    max_backlog: float
    final_backlog: float
    successes: int = Field(ge=0)
    mean_upload_time: float = Field(ge=0)
    outage: list[OutageEstimate] = Field(default_factory=list)


class ExperimentPreset(BaseModel):
    """Pinned reproduction of one numerical-results figure."""

    name: str
    description: str
    kind: Literal["sweep", "adapt", "outage_tau", "outage_sweep"]
    base: dict[str, str]
    sweep_parameter: Optional[str] = None
    grid: list[float] = Field(default_factory=list)
    tau_grid: list[float] = Field(default_factory=list)
    series: dict[str, dict[str, str]] = Field(default_factory=dict)
    control_target: Optional[ControlTarget] = None
    outputs: list[str]
    rounds: int = Field(ge=1)
    seed: int = Field(ge=0)

    @model_validator(mode="after")
    def validate_kind(self) -> "ExperimentPreset":
        if self.kind in ("sweep", "outage_sweep") and not (self.sweep_parameter and self.grid):
            raise ValueError("sweep presets need sweep_parameter and grid")
        if self.kind == "outage_tau" and not self.tau_grid:
            raise ValueError("outage_tau presets need tau_grid")
        if self.kind == "adapt" and self.control_target is None:
            raise ValueError("adapt presets need control_target")
        return self


class AnalyticSummary(BaseModel):
    """Closed-form evaluation of one scenario."""

    offload_probability: float = Field(ge=0, le=1)
    conditional_rate: float = Field(gt=0)
    expected_successes: float = Field(ge=0)
    mean_upload_time: MeanUploadTime
    stable: bool
    margin: float
    intra_delay_rate: float = Field(gt=0)

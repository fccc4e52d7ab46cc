"""Scenario configuration parsing and the three stochastic sources of a round.

Arrivals, input sizes and SNRs are drawn from an explicit ``numpy.random.Generator``
passed by the caller so every run is reproducible from one seed.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import NDArray

from shared.schemas import ArrivalModel, SnrModel, SystemConfig

from ..errors import ConfigError, MissingKeyError, NonPositiveError, OutOfRangeError

_LOGGER = logging.getLogger(__name__)

REQUIRED_KEYS = ("B", "M", "delta", "mean_input", "snr_mean_db", "snr_floor_db")
KNOWN_KEYS = frozenset(
    REQUIRED_KEYS
    + ("b", "lambda", "arrival_model", "G", "epsilon", "u_max", "seed", "snr_model")
)
# Relative gap between G*epsilon and lambda above which the Poisson view is flagged.
POPULATION_MISMATCH_WARN = 0.01


@dataclass(slots=True, frozen=True)
class TaskRecord:
    """One active device's task within a round.

    Attributes:
        input_size: Input data size U.
        snr: Upload SNR (linear).
        contends: Whether the device sent an offloading request (U <= U_max).
        channel_pick: Random-access sub-channel in ``1..M`` or ``None``.
        success: Whether the request was alone on its sub-channel.
        schedule_slot: Upload position among the round's winners, or ``None``.
        upload_time: ``U / (B_o * log2(1 + snr))`` in seconds.
    """

    input_size: float
    snr: float
    contends: bool
    channel_pick: int | None
    success: bool
    schedule_slot: int | None
    upload_time: float


def db_to_linear(value_db: float) -> float:
    """Converts a power ratio in dB to linear scale."""
    return 10.0 ** (value_db / 10.0)


def upload_time(input_size: Any, snr: Any, offload_bandwidth: float) -> Any:
    """Upload time over the offloading channel for scalar or array inputs."""
    return input_size / (offload_bandwidth * np.log2(1.0 + snr))


def _as_float(raw: Mapping[str, Any], key: str) -> float:
    try:
        return float(raw[key])
    except KeyError:
        raise MissingKeyError(key) from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config key {key} is not numeric: {raw[key]!r}") from exc


def _as_int(raw: Mapping[str, Any], key: str) -> int:
    value = _as_float(raw, key)
    if not value.is_integer():
        raise ConfigError(f"config key {key} must be an integer, got {raw[key]!r}")
    return int(value)


def validate_config(raw_config: Mapping[str, Any]) -> SystemConfig:
    """Validates a flat key-value scenario map and converts it to a config.

    Args:
        raw_config: Mapping using the config-file keys (``B``, ``M``, ``delta`` ...).
            Values may be strings or numbers; ``u_max`` accepts ``inf``.

    Returns:
        A validated ``SystemConfig`` with SNR values converted to linear scale.

    Raises:
        MissingKeyError: If a required key is absent.
        NonPositiveError: If a bandwidth, round length, mean input or mean SNR is <= 0.
        OutOfRangeError: If ``M`` leaves no offloading bandwidth or another value is
            outside its range.
        ConfigError: On unknown keys or non-numeric values.
    """
    _LOGGER.debug("validate_config() called.", extra={"keys": sorted(raw_config)})
    unknown = sorted(set(raw_config) - KNOWN_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    for key in REQUIRED_KEYS:
        if key not in raw_config:
            raise MissingKeyError(key)

    arrival_model_raw = str(raw_config.get("arrival_model", ArrivalModel.POISSON.value))
    try:
        arrival_model = ArrivalModel(arrival_model_raw.strip().lower())
    except ValueError:
        raise ConfigError(f"unsupported arrival_model: {arrival_model_raw}") from None
    snr_model_raw = str(raw_config.get("snr_model", SnrModel.TRUNCATED_EXPONENTIAL.value))
    try:
        snr_model = SnrModel(snr_model_raw.strip().lower())
    except ValueError:
        raise ConfigError(f"unsupported snr_model: {snr_model_raw}") from None

    total_bandwidth = _as_float(raw_config, "B")
    channel_bandwidth = _as_float(raw_config, "b") if "b" in raw_config else 1.0
    delta = _as_float(raw_config, "delta")
    mean_input = _as_float(raw_config, "mean_input")
    snr_mean = db_to_linear(_as_float(raw_config, "snr_mean_db"))
    snr_floor = db_to_linear(_as_float(raw_config, "snr_floor_db"))
    for key, value in (
        ("B", total_bandwidth),
        ("b", channel_bandwidth),
        ("delta", delta),
        ("mean_input", mean_input),
    ):
        if not value > 0:
            raise NonPositiveError(key, value)

    num_channels = _as_int(raw_config, "M")
    max_channels = math.floor(total_bandwidth / channel_bandwidth) - 1
    if num_channels < 1 or num_channels > max_channels:
        raise OutOfRangeError(
            f"M must lie in [1, {max_channels}] so that B - M*b > 0, got {num_channels}"
        )

    population: int | None = None
    activation_probability: float | None = None
    if arrival_model is ArrivalModel.BINOMIAL:
        population = _as_int(raw_config, "G")
        activation_probability = _as_float(raw_config, "epsilon")
        if population < 1:
            raise OutOfRangeError(f"G must be >= 1, got {population}")
        if not 0.0 <= activation_probability <= 1.0:
            raise OutOfRangeError(f"epsilon must lie in [0, 1], got {activation_probability}")
    if "lambda" in raw_config:
        arrival_rate = _as_float(raw_config, "lambda")
    elif population is not None and activation_probability is not None:
        arrival_rate = population * activation_probability
    else:
        raise MissingKeyError("lambda")
    if arrival_rate < 0:
        raise OutOfRangeError(f"lambda must be >= 0, got {arrival_rate}")
    if population is not None and activation_probability is not None and arrival_rate > 0:
        mismatch = abs(population * activation_probability - arrival_rate) / arrival_rate
        if mismatch > POPULATION_MISMATCH_WARN:
            _LOGGER.warning(
                "Binomial population does not match the Poisson arrival rate.",
                extra={"G_epsilon": population * activation_probability, "lambda": arrival_rate},
            )

    input_cap = _as_float(raw_config, "u_max") if "u_max" in raw_config else math.inf
    if input_cap < 0 or math.isnan(input_cap):
        raise OutOfRangeError(f"u_max must be >= 0 or inf, got {input_cap}")
    seed = _as_int(raw_config, "seed") if "seed" in raw_config else None
    if seed is not None and seed < 0:
        raise OutOfRangeError(f"seed must be >= 0, got {seed}")

    config = SystemConfig(
        total_bandwidth=total_bandwidth,
        rac_channel_bandwidth=channel_bandwidth,
        num_rac_channels=num_channels,
        round_interval=delta,
        arrival_rate=arrival_rate,
        arrival_model=arrival_model,
        population=population,
        activation_probability=activation_probability,
        mean_input=mean_input,
        input_cap=input_cap,
        snr_mean=snr_mean,
        snr_floor=snr_floor,
        snr_model=snr_model,
        seed=seed,
    )
    _LOGGER.debug(
        "validate_config() produced scenario.",
        extra={
            "offload_bandwidth": config.offload_bandwidth,
            "snr_mean": snr_mean,
            "snr_floor": snr_floor,
            "arrival_model": arrival_model.value,
        },
    )
    return config


def parse_config_text(text: str) -> dict[str, str]:
    """Parses flat ``key = value`` lines; ``#`` starts a comment."""
    raw: dict[str, str] = {}
    for line_number, line in enumerate(text.splitlines(), start=1):
        content = line.split("#", 1)[0].strip()
        if not content:
            continue
        if "=" not in content:
            raise ConfigError(f"line {line_number}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in content.split("=", 1))
        if not key or not value:
            raise ConfigError(f"line {line_number}: empty key or value")
        if key in raw:
            raise ConfigError(f"line {line_number}: duplicate key {key}")
        raw[key] = value
    return raw


def load_config(path: str | Path) -> SystemConfig:
    """Reads and validates a scenario config file.

    Raises:
        ConfigError: If the file cannot be read or does not validate.
    """
    config_path = Path(path)
    try:
        text = config_path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {config_path}: {exc}") from exc
    return validate_config(parse_config_text(text))


def make_rng(seed: int | np.random.SeedSequence) -> np.random.Generator:
    """Builds the PCG64 generator every stochastic operation draws from."""
    return np.random.default_rng(seed)


def derive_seed(master_seed: int, index: int) -> int:
    """Derives an independent 64-bit seed for sweep point ``index``."""
    state = np.random.SeedSequence([master_seed, index]).generate_state(1, dtype=np.uint64)
    return int(state[0])


def sample_arrivals(
    config: SystemConfig, rng: np.random.Generator, size: int | None = None
) -> int | NDArray[np.int64]:
    """Draws the number K of newly active devices in one round (or ``size`` rounds)."""
    if config.arrival_model is ArrivalModel.BINOMIAL:
        draws = rng.binomial(config.population, config.activation_probability, size)
    else:
        draws = rng.poisson(config.arrival_rate, size)
    return int(draws) if size is None else draws


def sample_input_size(
    config: SystemConfig, rng: np.random.Generator, size: int | None = None
) -> float | NDArray[np.float64]:
    """Draws input sizes U ~ Exp(mu)."""
    return rng.exponential(config.mean_input, size)


def sample_snr(
    config: SystemConfig, rng: np.random.Generator, size: int | None = None
) -> float | NDArray[np.float64]:
    """Draws upload SNRs: the floor plus an exponential excess of mean ``snr_mean``."""
    if config.snr_model is SnrModel.CONSTANT:
        return config.snr_mean if size is None else np.full(size, config.snr_mean)
    return config.snr_floor + rng.exponential(config.snr_mean, size)

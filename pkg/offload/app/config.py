"""Runtime settings for simulation and analysis runs."""

from __future__ import annotations

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Environment-backed runtime settings.

    Scenario parameters (bandwidths, rates, SNR law) live in config files parsed by
    ``offload.app.services.model``; these settings only tune how runs execute.

    Attributes:
        LOG_LEVEL: Application log verbosity.
        NUMERICS_LOG_LEVEL: Log level for quadrature/optimisation internals.
        DEFAULT_SEED: Master seed used when neither the config nor ``--seed`` sets one.
        SWEEP_WORKERS: joblib workers used for independent sweep points.
        QUAD_RELATIVE_TOLERANCE: Relative tolerance for SNR expectations.
        QUAD_MAX_SUBDIVISIONS: Subinterval budget for adaptive quadrature.
        CHERNOFF_N_MAX: Series truncation used by the latency-outage bound.
        MIN_OUTAGE_SAMPLES: Minimum successful devices for an empirical outage.
        OUTPUT_DIR: Default directory for reproduced preset files.
    """

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    LOG_LEVEL: str = "info"
    NUMERICS_LOG_LEVEL: str = "info"
    DEFAULT_SEED: int = Field(default=20210514, ge=0)
    SWEEP_WORKERS: int = Field(default=1, ge=1)
    QUAD_RELATIVE_TOLERANCE: float = Field(default=1e-10, gt=0, le=1e-3)
    QUAD_MAX_SUBDIVISIONS: int = Field(default=200, ge=1)
    CHERNOFF_N_MAX: int = Field(default=20, ge=2)
    MIN_OUTAGE_SAMPLES: int = Field(default=100, ge=1)
    OUTPUT_DIR: str = "results"


settings = Settings()

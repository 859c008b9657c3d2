"""Centralised process configuration using pydantic-settings.

All environment variables, defaults, and validation live here.
Usage:
    from app.config import get_settings
    print(get_settings().max_workers)
"""

from __future__ import annotations

from functools import lru_cache

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class AppConfig(BaseSettings):
    """Single source of truth for every process-wide tuneable."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="MPG_",
        extra="ignore",  # silently ignore unknown env vars
        case_sensitive=False,
    )

    # ── Parallelism ─────────────────────────────────────────────────────
    max_workers: int = Field(default=4, ge=1, description="Worker processes for sweeps (MPG_MAX_WORKERS)")

    # ── Output ──────────────────────────────────────────────────────────
    results_dir: str = Field(default="results", description="Default directory for experiment outputs")

    # ── Numerics ────────────────────────────────────────────────────────
    logit_clamp: float = Field(default=500.0, description="|h/τ| ceiling before exponentiation")
    weight_clip: float = Field(default=10.0, description="Importance-weight ceiling for multi-update MPG")
    divergence_threshold: float = Field(default=1e6, description="Abort training when any |θ| exceeds this")
    lambda_cut_ratio: float = Field(default=1e-10, description="Eigenvalues below ratio·λ_1 count as zero")
    ntk_tol: float = Field(default=1e-8, description="NTK passes when λ_min > ntk_tol·λ_max")
    dp_tol: float = Field(default=1e-10, description="Tolerance of the soft-DP identities")
    gap_tol: float = Field(default=1e-9, description="Tolerance of the value-gap identity")
    residual_tol: float = Field(default=1e-6, description="d-map orthogonality residual ceiling")

    # ── Logging ─────────────────────────────────────────────────────────
    log_file: str = Field(default="mpg.log")
    log_max_bytes: int = Field(default=5 * 1024 * 1024)  # 5 MB
    log_backup_count: int = Field(default=3)
    log_json: bool = Field(default=True)
    log_level: str = Field(default="INFO")

    # ── Validators ──────────────────────────────────────────────────────
    @field_validator(
        "logit_clamp",
        "weight_clip",
        "divergence_threshold",
        "lambda_cut_ratio",
        "ntk_tol",
        "dp_tol",
        "gap_tol",
        "residual_tol",
    )
    @classmethod
    def _validate_positive(cls, v: float) -> float:
        if not v > 0:
            raise ValueError(f"must be positive, got {v}")
        return v

    @field_validator("log_level")
    @classmethod
    def _validate_level(cls, v: str) -> str:
        allowed = {"DEBUG", "INFO", "WARNING", "ERROR"}
        v = v.strip().upper()
        if v not in allowed:
            raise ValueError(f"log_level must be one of {allowed}, got '{v}'")
        return v


@lru_cache(maxsize=1)
def get_settings() -> AppConfig:
    """Return the cached singleton settings instance."""
    return AppConfig()

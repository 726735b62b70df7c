from __future__ import annotations

import logging
from functools import lru_cache
from typing import ClassVar

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

from .._metadata import app_name, app_slug

# --- Config ---


class RenyiConfig(BaseSettings):
    model_config: ClassVar[SettingsConfigDict] = SettingsConfigDict(
        env_file=".env",
        env_prefix=f"{app_slug.upper()}_",
        extra="ignore",
        env_nested_delimiter="__",
    )

    threads: int = Field(
        default=1, ge=1, description="Upper bound on Monte Carlo worker threads"
    )
    beta_max: float = Field(
        default=2.0, gt=0, description="Largest admissible pseudodistance order"
    )
    gh_nodes: int = Field(
        default=64, ge=16, description="Gauss-Hermite nodes per dimension"
    )
    exp_truncation: float = Field(
        default=40.0,
        gt=0,
        description="Upper integration limit for exponential models, in units of theta",
    )
    abs_tol: float = Field(default=1e-12, gt=0)
    rel_tol: float = Field(default=1e-10, gt=0)
    mvn_node_budget: int = Field(
        default=2**21,
        ge=256,
        description="Maximum number of tensor-product nodes for mvn integrals",
    )
    solver_tol: float = Field(
        default=1e-9, gt=0, description="Default gradient tolerance for the estimators"
    )
    solver_max_iter: int = Field(default=100, ge=1)
    solver_n_starts: int = Field(
        default=5, ge=1, description="Default number of optimiser starts"
    )
    log_level: str = Field(default="WARNING")
    progress: bool = Field(
        default=False, description="Show a tqdm bar while replicates run"
    )


@lru_cache(maxsize=1)
def get_config() -> RenyiConfig:
    """Return the process-wide configuration, read once from the environment."""
    return RenyiConfig()


# --- Logger ---

logger = logging.getLogger(app_name)

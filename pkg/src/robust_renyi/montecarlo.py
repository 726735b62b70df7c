"""Seeded contamination studies: mean estimate and MSE-hat per estimator and alpha."""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import StrEnum
from typing import Any, Self

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from tqdm import tqdm

from .core import ParametricModel, Sample, get_config, logger
from .core._errors import DomainError, RenyiError, TooFewReplicates, UnsupportedModel
from .estimation import fit_basu_dpd, fit_min_r_alpha
from .models import ContaminantKind, ContaminantSpec, sample, sample_contaminated
from .pseudodistance import check_alpha

TABLE_ALPHAS = (0.02, 0.05, 0.1, 0.2, 0.25, 0.5, 1.0)
CI_REPLICATES = 2000
FULL_REPLICATES = 5000


# --- Configuration ---


class EstimatorFamily(StrEnum):
    MIN_R = "minR"
    MIN_D = "minD"
    MLE = "mle"


class EstimatorSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    family: EstimatorFamily
    alphas: list[float] = Field(default_factory=lambda: [0.0], min_length=1)

    @field_validator("alphas")
    @classmethod
    def _check_alphas(cls, value: list[float]) -> list[float]:
        return [check_alpha(a) for a in value]

    def columns(self) -> list[tuple[EstimatorFamily, float]]:
        if self.family is EstimatorFamily.MLE:
            return [(self.family, 0.0)]
        return [(self.family, a) for a in self.alphas]


class StudyConfig(BaseModel):
    """One contamination scenario, readable from a JSON document."""

    model_config = ConfigDict(frozen=True)

    model: str
    fixed: dict[str, Any] = Field(default_factory=dict)
    theta: list[float] = Field(min_length=1)
    n: int = Field(ge=2)
    n_replicates: int = Field(ge=1)
    contaminant: ContaminantSpec | None = None
    estimators: list[EstimatorSpec] = Field(min_length=1)
    seed: int = Field(ge=0, lt=2**64)

    @model_validator(mode="after")
    def _check_model(self) -> Self:
        model = self.build_model()
        if model.obs_dim != 1:
            raise UnsupportedModel(f"studies cover univariate families, not {self.model}")
        if model.kind != "normal-scale" and any(
            e.family is EstimatorFamily.MIN_D for e in self.estimators
        ):
            raise UnsupportedModel("minD estimators are defined for normal-scale only")
        model.check_theta(self.theta)
        return self

    def build_model(self) -> ParametricModel:
        return ParametricModel.from_kind(self.model, **self.fixed)

    def columns(self) -> list[tuple[EstimatorFamily, float]]:
        return [column for spec in self.estimators for column in spec.columns()]


# --- Report ---


@dataclass(frozen=True)
class StudyRow:
    family: str
    alpha: float
    mean_estimate: float
    mse_hat: float
    n_failed: int
    se_mean: float


@dataclass(frozen=True)
class StudyReport:
    config: StudyConfig
    rows: list[StudyRow]

    def to_records(self) -> list[dict[str, Any]]:
        return [
            {
                "family": row.family,
                "alpha": row.alpha,
                "mean_estimate": row.mean_estimate,
                "mse_hat": row.mse_hat,
                "n_failed": row.n_failed,
                "se_mean": row.se_mean,
            }
            for row in self.rows
        ]


# --- Running ---

Fitter = Callable[[ParametricModel, Sample, EstimatorFamily, float], float]


def fit_one(model: ParametricModel, data: Sample, family: EstimatorFamily, alpha: float) -> float:
    """Scalar estimate of one estimator on one sample; NaN when the fit did not converge."""
    match family:
        case EstimatorFamily.MLE:
            fit = fit_min_r_alpha(model, data, 0.0)
        case EstimatorFamily.MIN_R:
            fit = fit_min_r_alpha(model, data, alpha)
        case EstimatorFamily.MIN_D:
            fit = fit_basu_dpd(data, alpha, m=model.m)  # type: ignore[attr-defined]
    return float(fit.theta_hat[0]) if fit.converged else math.nan


def _draw(config: StudyConfig, model: ParametricModel, seed: np.random.SeedSequence) -> Sample:
    contaminant = config.contaminant
    if contaminant is None or contaminant.epsilon == 0.0:
        return sample(model, config.theta, config.n, seed)
    return sample_contaminated(model, config.theta, config.n, contaminant, seed)


def mc_standard_error(estimates: Sequence[float] | np.ndarray) -> float:
    """Standard deviation of the estimates over the square root of their count."""
    values = np.asarray(estimates, dtype=float)
    if values.size < 2:
        raise TooFewReplicates(f"need at least 2 converged replicates, got {values.size}")
    return float(np.std(values) / math.sqrt(values.size))


def _summarise(
    family: EstimatorFamily, alpha: float, estimates: np.ndarray, truth: float
) -> StudyRow:
    ok = estimates[np.isfinite(estimates)]
    failed = int(estimates.size - ok.size)
    if failed:
        logger.warning(f"{family} alpha={alpha}: {failed} replicates excluded")
    if ok.size == 0:
        return StudyRow(str(family), alpha, math.nan, math.nan, failed, math.nan)
    return StudyRow(
        family=str(family),
        alpha=alpha,
        mean_estimate=float(np.mean(ok)),
        mse_hat=float(np.mean((ok - truth) ** 2)),
        n_failed=failed,
        se_mean=mc_standard_error(ok) if ok.size >= 2 else math.nan,
    )


def run_study(
    config: StudyConfig,
    *,
    threads: int | None = None,
    progress: bool | None = None,
    fitter: Fitter = fit_one,
) -> StudyReport:
    """Run every replicate of a study and reduce it to one row per (estimator, alpha).

    Replicate ``r`` draws its sample from the ``r``-th child of
    ``SeedSequence(config.seed)``; all estimators share that sample. Failed
    fits are excluded from the row and counted in ``n_failed``.
    ``threads`` defaults to ROBUST_RENYI_THREADS, which also caps it.
    """
    settings = get_config()
    if threads is not None and threads < 1:
        raise DomainError(f"threads must be at least 1, got {threads}")
    # ROBUST_RENYI_THREADS caps the pool
    workers = min(threads, settings.threads) if threads is not None else settings.threads
    if threads is not None and threads > workers:
        logger.warning(
            f"{threads} threads requested; ROBUST_RENYI_THREADS={settings.threads} caps the pool"
        )
    show = settings.progress if progress is None else progress
    model = config.build_model()
    columns = config.columns()
    truth = float(config.theta[0])

    def replicate(seed: np.random.SeedSequence) -> list[float]:
        data = _draw(config, model, seed)
        estimates = []
        for family, alpha in columns:
            try:
                estimates.append(fitter(model, data, family, alpha))
            except RenyiError as e:
                logger.debug(f"replicate {seed.spawn_key}: {family} alpha={alpha} failed: {e}")
                estimates.append(math.nan)
        return estimates

    seeds = np.random.SeedSequence(config.seed).spawn(config.n_replicates)
    logger.info(
        f"study {config.model}: {config.n_replicates} replicates of n={config.n}, "
        f"{len(columns)} estimators, {workers} thread(s)"
    )
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(
            tqdm(pool.map(replicate, seeds), total=len(seeds), disable=not show, desc="replicates")
        )
    table = np.asarray(results, dtype=float).reshape(len(seeds), len(columns))
    rows = [
        _summarise(family, alpha, table[:, j], truth)
        for j, (family, alpha) in enumerate(columns)
    ]
    logger.info(f"study {config.model}: done")
    return StudyReport(config=config, rows=rows)


# --- Presets ---

_PRESETS: dict[int, tuple[str, tuple[ContaminantKind, float, float], bool]] = {
    2: ("normal-scale", (ContaminantKind.MODEL_DISTRIBUTION, 2.0, 1.0), True),
    3: ("normal-scale", (ContaminantKind.MODEL_DISTRIBUTION, 0.0, 3.0), True),
    4: ("normal-scale", (ContaminantKind.POINT_MASS, 10.0, 1.0), True),
    5: ("normal-location", (ContaminantKind.MODEL_DISTRIBUTION, 2.0, 1.0), False),
    6: ("normal-location", (ContaminantKind.POINT_MASS, 10.0, 1.0), False),
}


def table_preset(
    table: int,
    epsilon: float,
    *,
    n_replicates: int = CI_REPLICATES,
    seed: int = 42,
    alphas: Sequence[float] = TABLE_ALPHAS,
) -> StudyConfig:
    """The published simulation scenarios: n = 100 draws from N(0, 1).

    Runs CI_REPLICATES replicates unless told otherwise; the published studies
    used FULL_REPLICATES.

    Presets 2-4 estimate the scale (contaminants N(2, 1), N(0, 3) and the atom
    at 10) and include the power divergence estimators. Presets 5 and 6
    estimate the location under N(2, 1) and the atom at 10.
    """
    if table not in _PRESETS:
        raise DomainError(f"no preset {table}; choose one of {sorted(_PRESETS)}")
    kind, (contaminant_kind, location, scale), with_min_d = _PRESETS[table]
    estimators = [
        EstimatorSpec(family=EstimatorFamily.MLE),
        EstimatorSpec(family=EstimatorFamily.MIN_R, alphas=list(alphas)),
    ]
    if with_min_d:
        estimators.append(EstimatorSpec(family=EstimatorFamily.MIN_D, alphas=list(alphas)))
    contaminant = (
        ContaminantSpec(kind=contaminant_kind, epsilon=epsilon, location=location, scale=scale)
        if epsilon > 0.0
        else None
    )
    return StudyConfig(
        model=kind,
        fixed={"m": 0.0} if kind == "normal-scale" else {"sigma": 1.0},
        theta=[1.0] if kind == "normal-scale" else [0.0],
        n=100,
        n_replicates=n_replicates,
        contaminant=contaminant,
        estimators=estimators,
        seed=seed,
    )

"""Batch command-line front end.

Every subcommand writes one table, as CSV (default) or JSON, to standard
output or ``--output``. Exit codes: 0 on success, 1 on a numerical or input
failure (with ``{"error": code, "message": ...}`` in JSON mode), 2 on usage
errors.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import sys
from collections.abc import Iterator, Sequence
from contextlib import contextmanager
from dataclasses import dataclass
from enum import StrEnum
from pathlib import Path
from typing import Any

import numpy as np
import typer
from pydantic import ValidationError

from . import __version__
from .asymptotics import ARE_ROWS, ARE_ALPHAS, are, are_table, sandwich, sigma2_rhat
from .core import ParametricModel, QuadratureSpec, Sample, get_config, logger
from .core._errors import ParseError, RenyiError, UnsupportedModel
from .estimation import SolverOptions, StartStrategy, fit_basu_dpd, fit_min_r_alpha
from .montecarlo import CI_REPLICATES, FULL_REPLICATES, StudyConfig, run_study, table_preset
from .regression import RegressionData, fit_regression, psi_components
from .robustness import ges_curve, influence_closed, influence_general, psi_location

app = typer.Typer(add_completion=False, no_args_is_help=True)


class OutputFormat(StrEnum):
    CSV = "csv"
    JSON = "json"


class Estimator(StrEnum):
    MIN_R = "minR"
    MIN_D = "minD"
    MLE = "mle"


class InfluenceMethod(StrEnum):
    CLOSED = "closed"
    GENERAL = "general"


@dataclass(frozen=True, slots=True)
class OutputOptions:
    format: OutputFormat
    output: Path | None
    full_precision: bool


ESTIMATE_COLUMNS = (
    "estimator",
    "alpha",
    "parameter",
    "estimate",
    "criterion",
    "iterations",
    "starts_tried",
    "converged",
    "gradient_norm",
)
REGRESS_COLUMNS = ("alpha", "parameter", "estimate", "converged", "iterations")
INFLUENCE_COLUMNS = ("x", "influence")
GES_COLUMNS = ("alpha", "ges")
ARE_COLUMNS = ("model", "alpha", "are")
ASYMPT_COLUMNS = ("quantity", "i", "j", "value")
SIMULATE_COLUMNS = ("family", "alpha", "mean_estimate", "mse_hat", "n_failed", "se_mean")
PSI_COLUMNS = ("x", "phi", "chi", "psi_location")


# --- Parsing ---


def _solver_options(**given: Any) -> SolverOptions:
    """Solver options from the flags that were given; the rest come from the config."""
    return SolverOptions(**{k: v for k, v in given.items() if v is not None})


def _floats(text: str, what: str) -> list[float]:
    try:
        values = [float(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise typer.BadParameter(f"{what} must be comma-separated numbers, got {text!r}") from e
    if not values:
        raise typer.BadParameter(f"{what} is empty")
    return values


def _build_model(kind: str, m: float, sigma: float, cov: str | None) -> ParametricModel:
    match kind:
        case "normal-scale":
            fixed: dict[str, Any] = {"m": m}
        case "normal-location":
            fixed = {"sigma": sigma}
        case "mvn-mean":
            if cov is None:
                raise typer.BadParameter("mvn-mean needs --cov")
            try:
                fixed = {"V": json.loads(cov)}
            except json.JSONDecodeError as e:
                raise ParseError(f"--cov is not valid JSON: {e}") from e
        case _:
            fixed = {}
    return ParametricModel.from_kind(kind, **fixed)


def _read_sample(path: Path, model: ParametricModel) -> Sample:
    try:
        data = np.loadtxt(path, delimiter=",", ndmin=2, encoding="utf-8")
    except (OSError, ValueError) as e:
        raise ParseError(f"cannot read sample from {path}: {e}") from e
    if data.shape[1] != model.obs_dim:
        raise ParseError(f"{path} has {data.shape[1]} columns, {model.kind} needs {model.obs_dim}")
    return Sample(data[:, 0] if model.obs_dim == 1 else data)


def _read_regression(path: Path) -> RegressionData:
    try:
        with path.open(encoding="utf-8", newline="") as handle:
            rows = list(csv.reader(handle))
    except OSError as e:
        raise ParseError(f"cannot read {path}: {e}") from e
    if len(rows) < 2:
        raise ParseError(f"{path} needs a header row and data rows")
    header = [h.strip() for h in rows[0]]
    expected = [f"x{j}" for j in range(1, len(header))] + ["y"]
    if header != expected:
        raise ParseError(f"{path} header must be {','.join(expected)}, got {','.join(header)}")
    try:
        values = np.array([[float(v) for v in row] for row in rows[1:] if row], dtype=float)
    except ValueError as e:
        raise ParseError(f"{path} has a non-numeric cell: {e}") from e
    if values.ndim != 2 or values.shape[1] != len(header):
        raise ParseError(f"{path} has ragged rows")
    return RegressionData(values[:, :-1], values[:, -1])


# --- Output ---


def _format(value: Any, full_precision: bool) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float | np.floating):
        return repr(float(value)) if full_precision else f"{float(value):.6g}"
    return str(value)


def _truncate5(value: float) -> str:
    return f"{math.floor(value * 1e5 + 1e-7) / 1e5:.5f}"


def _emit(
    ctx: typer.Context,
    columns: Sequence[str],
    rows: Sequence[dict[str, Any]],
    formatters: dict[str, Any] | None = None,
) -> None:
    opts: OutputOptions = ctx.obj
    formatters = formatters or {}
    if opts.format is OutputFormat.JSON:
        text = json.dumps([{c: _jsonable(row[c]) for c in columns} for row in rows], indent=2) + "\n"
    else:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow(
                [
                    formatters[c](row[c])
                    if c in formatters and not opts.full_precision
                    else _format(row[c], opts.full_precision)
                    for c in columns
                ]
            )
        text = buffer.getvalue()
    if opts.output is None:
        typer.echo(text, nl=False)
    else:
        opts.output.write_text(text, encoding="utf-8", newline="\n")


def _jsonable(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    return value


@contextmanager
def _reporting(ctx: typer.Context) -> Iterator[None]:
    """Map library failures to exit code 1 with an error object."""
    opts: OutputOptions = ctx.obj
    try:
        yield
    except ValidationError as e:
        error = ParseError(str(e))
    except RenyiError as e:
        error = e
    else:
        return
    logger.error(f"{error.code}: {error}")
    if opts.format is OutputFormat.JSON:
        typer.echo(json.dumps(error.to_dict()))
    else:
        typer.echo(f"error: {error.code}: {error}", err=True)
    raise typer.Exit(code=1)


# --- Commands ---


@app.callback()
def main(
    ctx: typer.Context,
    output_format: OutputFormat = typer.Option(
        OutputFormat.CSV, "--format", "-f", help="Output table format"
    ),
    output: Path | None = typer.Option(
        None, "--output", "-o", help="Write the table here instead of standard output"
    ),
    full_precision: bool = typer.Option(
        False, "--full-precision", help="Print floats with full precision"
    ),
    log_level: str | None = typer.Option(
        None, "--log-level", help="Logging level; defaults to ROBUST_RENYI_LOG_LEVEL"
    ),
) -> None:
    """Minimum R_alpha estimation, robustness diagnostics and contamination studies."""
    logging.basicConfig(
        level=(log_level or get_config().log_level).upper(),
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    logger.debug(f"robust-renyi {__version__}")
    ctx.obj = OutputOptions(output_format, output, full_precision)


MODEL_OPTION = typer.Option(..., "--model", help="Model kind")
M_OPTION = typer.Option(0.0, "--m", help="Known mean of normal-scale")
SIGMA_OPTION = typer.Option(1.0, "--sigma", help="Known sigma of normal-location")
COV_OPTION = typer.Option(None, "--cov", help="Known covariance of mvn-mean as JSON")


@app.command()
def estimate(
    ctx: typer.Context,
    input_path: Path = typer.Option(..., "--input", "-i", help="Headerless sample CSV"),
    model_kind: str = MODEL_OPTION,
    alpha: str = typer.Option("0", "--alpha", "-a", help="One alpha or a comma list"),
    estimator: Estimator = typer.Option(Estimator.MIN_R, "--estimator"),
    m: float = M_OPTION,
    sigma: float = SIGMA_OPTION,
    cov: str | None = COV_OPTION,
    tol: float | None = typer.Option(None, "--tol", help="Defaults to ROBUST_RENYI_SOLVER_TOL"),
    n_starts: int | None = typer.Option(
        None, "--n-starts", min=1, help="Defaults to ROBUST_RENYI_SOLVER_N_STARTS"
    ),
    start_strategy: StartStrategy = typer.Option(StartStrategy.MLE_START, "--start-strategy"),
) -> None:
    """Fit min R_alpha, min D_alpha or maximum likelihood estimates to a sample."""
    alphas = _floats(alpha, "--alpha")
    with _reporting(ctx):
        model = _build_model(model_kind, m, sigma, cov)
        data = _read_sample(input_path, model)
        opts = _solver_options(tol=tol, n_starts=n_starts, start_strategy=start_strategy)
        rows = []
        for a in [0.0] if estimator is Estimator.MLE else alphas:
            if estimator is Estimator.MIN_D:
                if model.kind != "normal-scale":
                    raise UnsupportedModel("minD is defined for normal-scale only")
                fit = fit_basu_dpd(data, a, m=m, opts=opts)
            else:
                fit = fit_min_r_alpha(model, data, a, opts)
            names = ["theta"] if fit.theta_hat.size == 1 else [
                f"theta_{j}" for j in range(1, fit.theta_hat.size + 1)
            ]
            rows += [
                {
                    "estimator": str(estimator),
                    "alpha": a,
                    "parameter": name,
                    "estimate": float(value),
                    "criterion": fit.criterion_at_opt,
                    "iterations": fit.iterations,
                    "starts_tried": fit.starts_tried,
                    "converged": fit.converged,
                    "gradient_norm": fit.gradient_norm,
                }
                for name, value in zip(names, fit.theta_hat, strict=True)
            ]
        _emit(ctx, ESTIMATE_COLUMNS, rows)


@app.command()
def regress(
    ctx: typer.Context,
    input_path: Path = typer.Option(..., "--input", "-i", help="CSV with header x1..xp,y"),
    alpha: str = typer.Option("0", "--alpha", "-a", help="One alpha or a comma list"),
    tol: float | None = typer.Option(None, "--tol", help="Defaults to ROBUST_RENYI_SOLVER_TOL"),
) -> None:
    """Fit (beta, sigma) of the Gaussian linear model."""
    alphas = _floats(alpha, "--alpha")
    with _reporting(ctx):
        data = _read_regression(input_path)
        rows = []
        for a in alphas:
            fit = fit_regression(data, a, _solver_options(tol=tol))
            names = [f"beta_{j}" for j in range(1, data.p + 1)] + ["sigma"]
            values = [*fit.beta_hat.tolist(), fit.sigma_hat]
            rows += [
                {
                    "alpha": a,
                    "parameter": name,
                    "estimate": float(value),
                    "converged": fit.converged,
                    "iterations": fit.iterations,
                }
                for name, value in zip(names, values, strict=True)
            ]
        _emit(ctx, REGRESS_COLUMNS, rows)


@app.command()
def influence(
    ctx: typer.Context,
    model_kind: str = MODEL_OPTION,
    theta: float = typer.Option(..., "--theta"),
    alpha: float = typer.Option(..., "--alpha", "-a"),
    x_min: float = typer.Option(-5.0, "--x-min"),
    x_max: float = typer.Option(5.0, "--x-max"),
    points: int = typer.Option(201, "--points", min=2),
    method: InfluenceMethod = typer.Option(InfluenceMethod.CLOSED, "--method"),
    m: float = M_OPTION,
    sigma: float = SIGMA_OPTION,
) -> None:
    """Influence function on an x-grid, for plotting."""
    with _reporting(ctx):
        model = _build_model(model_kind, m, sigma, None)
        xs = np.linspace(x_min, x_max, points)
        if method is InfluenceMethod.CLOSED:
            values = influence_closed(model, [theta], alpha, xs)
        else:
            values = influence_general(model, [theta], alpha, xs)
        rows = [{"x": float(x), "influence": float(v)} for x, v in zip(xs, values[:, 0], strict=True)]
        _emit(ctx, INFLUENCE_COLUMNS, rows)


@app.command("ges-curve")
def ges_curve_command(
    ctx: typer.Context,
    model_kind: str = MODEL_OPTION,
    theta: float = typer.Option(1.0, "--theta"),
    alphas: str | None = typer.Option(None, "--alphas", help="Comma list; overrides the range"),
    alpha_min: float = typer.Option(0.01, "--alpha-min"),
    alpha_max: float = typer.Option(2.0, "--alpha-max"),
    points: int = typer.Option(200, "--points", min=2),
    m: float = M_OPTION,
    sigma: float = SIGMA_OPTION,
) -> None:
    """Gross error sensitivity against alpha."""
    grid = _floats(alphas, "--alphas") if alphas else np.linspace(alpha_min, alpha_max, points).tolist()
    with _reporting(ctx):
        model = _build_model(model_kind, m, sigma, None)
        rows = [{"alpha": a, "ges": g} for a, g in ges_curve(model, [theta], grid)]
        _emit(ctx, GES_COLUMNS, rows)


def _row_key(kind: str, dim: int | None) -> str:
    return kind if dim is None else f"{kind}-{dim}"


@app.command("are-table")
def are_table_command(
    ctx: typer.Context,
    models: str = typer.Option(
        "all", "--models", help="'all' or a comma list such as normal-scale,mvn-mean-3"
    ),
    alphas: str = typer.Option(",".join(str(a) for a in ARE_ALPHAS), "--alphas"),
) -> None:
    """Asymptotic relative efficiencies, truncated to 5 decimals like the published table."""
    grid = _floats(alphas, "--alphas")
    known = {_row_key(kind, dim): (label, kind, dim) for label, kind, dim in ARE_ROWS}
    if models == "all":
        selected = list(ARE_ROWS)
    else:
        keys = [k.strip() for k in models.split(",") if k.strip()]
        unknown = [k for k in keys if k not in known]
        if unknown:
            raise typer.BadParameter(f"unknown model rows {unknown}; choose from {sorted(known)}")
        selected = [known[k] for k in keys]
    with _reporting(ctx):
        rows = [
            {"model": row.label, "alpha": a, "are": value}
            for row in are_table(grid, selected)
            for a, value in zip(grid, row.values, strict=True)
        ]
        _emit(ctx, ARE_COLUMNS, rows, formatters={"are": _truncate5})


@app.command()
def asympt(
    ctx: typer.Context,
    model_kind: str = MODEL_OPTION,
    theta: str = typer.Option(..., "--theta", help="One value or a comma list for mvn-mean"),
    alpha: float = typer.Option(..., "--alpha", "-a"),
    quad_nodes: int | None = typer.Option(None, "--quad-nodes", help="Gauss-Hermite nodes"),
    m: float = M_OPTION,
    sigma: float = SIGMA_OPTION,
    cov: str | None = COV_OPTION,
) -> None:
    """Sandwich matrices S, M, V with sigma^2 of R_alpha-hat and the efficiency."""
    th = _floats(theta, "--theta")
    with _reporting(ctx):
        model = _build_model(model_kind, m, sigma, cov)
        quad = QuadratureSpec.default(**({"nodes": quad_nodes} if quad_nodes else {}))
        result = sandwich(model, th, alpha, quad)
        rows: list[dict[str, Any]] = []
        for name, matrix in (("S", result.S), ("M", result.M), ("V", result.V)):
            rows += [
                {"quantity": name, "i": i + 1, "j": j + 1, "value": float(matrix[i, j])}
                for i in range(matrix.shape[0])
                for j in range(matrix.shape[1])
            ]
        rows += [
            {"quantity": "sigma2_rhat", "i": 0, "j": 0, "value": sigma2_rhat(model, th, alpha, quad)},
            {"quantity": "are", "i": 0, "j": 0, "value": are(model, alpha)},
        ]
        _emit(ctx, ASYMPT_COLUMNS, rows)


@app.command()
def simulate(
    ctx: typer.Context,
    config_path: Path | None = typer.Option(None, "--config", "-c", help="StudyConfig JSON"),
    preset: int | None = typer.Option(None, "--preset", help="Published table number, 2-6"),
    epsilon: float = typer.Option(0.0, "--epsilon", help="Contamination for --preset"),
    seed: int | None = typer.Option(None, "--seed"),
    replicates: int | None = typer.Option(None, "--replicates", min=1),
    full: bool = typer.Option(
        False, "--full", help=f"Run a --preset with the published {FULL_REPLICATES} replicates"
    ),
    threads: int | None = typer.Option(
        None, "--threads", min=1, help="Worker threads, capped by ROBUST_RENYI_THREADS"
    ),
) -> None:
    """Run a seeded contamination study.

    A --preset runs 2000 replicates unless --full or --replicates is given.
    """
    if (config_path is None) == (preset is None):
        raise typer.BadParameter("give exactly one of --config and --preset")
    if full and preset is None:
        raise typer.BadParameter("--full applies to --preset only")
    if full and replicates is not None:
        raise typer.BadParameter("give at most one of --full and --replicates")
    with _reporting(ctx):
        if config_path is not None:
            try:
                text = config_path.read_text(encoding="utf-8")
            except OSError as e:
                raise ParseError(f"cannot read {config_path}: {e}") from e
            config = StudyConfig.model_validate_json(text)
        else:
            config = table_preset(
                preset,  # type: ignore[arg-type]
                epsilon,
                n_replicates=FULL_REPLICATES if full else CI_REPLICATES,
            )
        overrides = {
            k: v for k, v in (("seed", seed), ("n_replicates", replicates)) if v is not None
        }
        if overrides:
            config = StudyConfig.model_validate({**config.model_dump(), **overrides})
        report = run_study(config, threads=threads)
        _emit(ctx, SIMULATE_COLUMNS, report.to_records())


@app.command("psi-curve")
def psi_curve(
    ctx: typer.Context,
    alpha: float = typer.Option(..., "--alpha", "-a"),
    x_min: float = typer.Option(-5.0, "--x-min"),
    x_max: float = typer.Option(5.0, "--x-max"),
    points: int = typer.Option(201, "--points", min=2),
    m: float = typer.Option(0.0, "--m", help="Location for psi_location"),
    sigma: float = typer.Option(1.0, "--sigma", help="Scale for psi_location"),
) -> None:
    """The redescending phi, chi and location psi functions on an x-grid."""
    with _reporting(ctx):
        psi = psi_components(alpha)
        xs = np.linspace(x_min, x_max, points)
        phi, chi = psi.phi(xs), psi.chi(xs)
        loc = np.asarray(psi_location(xs, m, sigma, alpha))
        rows = [
            {"x": float(x), "phi": float(p), "chi": float(c), "psi_location": float(v)}
            for x, p, c, v in zip(xs, phi, chi, loc, strict=True)
        ]
        _emit(ctx, PSI_COLUMNS, rows)

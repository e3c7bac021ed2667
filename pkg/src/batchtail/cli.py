"""Command line interface.

Subcommands
-----------
``run``
    Replicate one configured experiment and export CSV + figures.
``sweep``
    Re-run a base experiment along one axis (``T``, ``M`` or
    ``epsilon``), exporting one result directory per value plus a
    combined ``sweep.csv`` and ``sweep.png``.
``grid``
    Print a static communication grid as a JSON list of decision times.
``instances``
    Print a serialized instance family as JSON.
``analyze``
    Summarize exported result directories; optionally fit a scaling
    exponent and write ``fit.csv`` / ``fit.png``.

Exit codes: 0 success, 2 configuration or usage error, 1 runtime error.
"""

from __future__ import annotations

import glob as globlib
import json
import os
import sys
from pathlib import Path
from typing import Sequence

import click
import numpy as np

from .grids import static_geometric_grid, static_minimax_grid
from .harness import (
    ConfigError,
    ExperimentConfig,
    export,
    fit_scaling_exponent,
    load_config,
    load_record,
    replicate,
)
from .lipschitz import make_lipschitz_instance
from .plotting import plot_fit, plot_run, plot_sweep
from .rewards import (
    instance_to_dict,
    make_adaptive_lowerbound_family,
    make_static_lowerbound_family,
)

__all__ = ["cli", "dispatch", "main"]

JOBS_ENV_VAR = "BATCHTAIL_JOBS"

_CONTEXT_SETTINGS = {
    "terminal_width": 80,
    "max_content_width": 80,
    "help_option_names": ["--help"],
}


def _effective_jobs(flag: int | None) -> int:
    """Resolve worker count: the --jobs flag wins over the environment."""
    if flag is not None:
        return flag
    raw = os.environ.get(JOBS_ENV_VAR)
    if raw is None:
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"{JOBS_ENV_VAR} must be an integer, got {raw!r}") from None
    if value < 1:
        raise ConfigError(f"{JOBS_ENV_VAR} must be >= 1, got {value}")
    return value


def _prepare_out(out_dir: Path, force: bool, sentinels: tuple[str, ...]) -> Path:
    """Create ``out_dir`` if needed; refuse to clobber prior output."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not force:
        for name in sentinels:
            if (out / name).exists():
                raise ConfigError(f"{out / name} exists; pass --force to overwrite")
    return out


def _echo_json(doc: dict) -> None:
    click.echo(json.dumps(doc, indent=2, sort_keys=True))


@click.group(context_settings=_CONTEXT_SETTINGS)
def cli() -> None:
    """Batched bandit experiments under heavy-tailed rewards."""


@cli.command(short_help="replicate one experiment and export its results")
@click.option(
    "--config",
    "config_path",
    required=True,
    type=click.Path(path_type=Path),
    help="JSON experiment description.",
)
@click.option(
    "--out",
    "out_dir",
    required=True,
    type=click.Path(path_type=Path),
    help="Output directory (created if absent).",
)
@click.option(
    "--jobs",
    type=click.IntRange(min=1),
    default=None,
    help=f"Worker processes (default: ${JOBS_ENV_VAR} or 1).",
)
@click.option(
    "--seed",
    type=click.IntRange(min=0),
    default=None,
    help="Override the configured base seed.",
)
@click.option("--force", is_flag=True, help="Overwrite existing results.")
def run(config_path: Path, out_dir: Path, jobs: int | None, seed: int | None, force: bool) -> None:
    """Run every replication of one experiment and export the results.

    Writes results.csv, manifest.json, finals.png and, when the
    configuration keeps curves, curve.csv and curve.png.  The printed
    JSON summary and the manifest let the run be reproduced exactly.
    """
    config = load_config(config_path)
    if seed is not None:
        doc = config.to_dict()
        doc["base_seed"] = seed
        config = ExperimentConfig.from_dict(doc)
    out = _prepare_out(out_dir, force, sentinels=("manifest.json",))
    record = replicate(config, parallelism=_effective_jobs(jobs))
    export(record, out)
    figures = plot_run(record, out)
    _echo_json(
        {
            "command": "run",
            "out": str(out),
            "config_hash": record.config_hash,
            "replications": len(record.final_regrets),
            "mean_regret": record.mean,
            "std": record.std,
            "figures": [path.name for path in figures],
        }
    )


def _parse_axis_values(axis: str, raw: str) -> list:
    parts = [piece.strip() for piece in raw.split(",") if piece.strip()]
    if not parts:
        raise ConfigError("--values must list at least one value")
    values = []
    for piece in parts:
        try:
            values.append(float(piece) if axis == "epsilon" else int(piece))
        except ValueError:
            kind = "a float" if axis == "epsilon" else "an integer"
            raise ConfigError(f"axis {axis} needs {kind}, got {piece!r}") from None
    if len(set(values)) != len(values):
        raise ConfigError("--values must not repeat")
    return values


def _point_seed(master_seed: int, index: int) -> int:
    """Per-point base seed; depends only on the master seed and position.

    Appending new axis values therefore never changes earlier points.
    """
    return int(np.random.SeedSequence([master_seed, index]).generate_state(1, np.uint64)[0])


@cli.command(short_help="re-run a base experiment along one axis")
@click.option(
    "--config",
    "config_path",
    required=True,
    type=click.Path(path_type=Path),
    help="JSON base experiment description.",
)
@click.option(
    "--axis",
    required=True,
    type=click.Choice(["T", "M", "epsilon"]),
    help="Which field to sweep: horizon, batch count, or tail exponent.",
)
@click.option("--values", required=True, help="Comma-separated axis values.")
@click.option(
    "--out",
    "out_dir",
    required=True,
    type=click.Path(path_type=Path),
    help="Output directory (one subdirectory per axis value).",
)
@click.option(
    "--jobs",
    type=click.IntRange(min=1),
    default=None,
    help=f"Worker processes (default: ${JOBS_ENV_VAR} or 1).",
)
@click.option(
    "--seed",
    type=click.IntRange(min=0),
    default=None,
    help="Sweep master seed (default: the config's base seed).",
)
@click.option("--force", is_flag=True, help="Overwrite existing results.")
def sweep(
    config_path: Path,
    axis: str,
    values: str,
    out_dir: Path,
    jobs: int | None,
    seed: int | None,
    force: bool,
) -> None:
    """Replicate the base experiment once per axis value.

    Each value gets its own result directory; sweep.csv collects
    axis_value, mean_regret and std, and sweep.png renders them.
    Per-point base seeds derive from the master seed and the value's
    position, so appending values never changes earlier points.
    """
    base = load_config(config_path)
    axis_values = _parse_axis_values(axis, values)
    master_seed = base.base_seed if seed is None else seed
    parallelism = _effective_jobs(jobs)
    out = _prepare_out(out_dir, force, sentinels=("sweep.csv",))
    rows = []
    point_dirs = []
    for index, value in enumerate(axis_values):
        doc = base.to_dict()
        if axis == "T":
            doc["horizon"] = value
        elif axis == "M":
            doc["grid"] = {**doc["grid"], "batches": value}
        else:
            doc["spec"] = {**doc["spec"], "epsilon": value}
        doc["base_seed"] = _point_seed(master_seed, index)
        doc["label"] = f"{axis}={value:g}"
        point = ExperimentConfig.from_dict(doc)
        point_dir = _prepare_out(out / f"{axis}={value:g}", force, sentinels=("manifest.json",))
        record = replicate(point, parallelism=parallelism)
        export(record, point_dir)
        plot_run(record, point_dir)
        rows.append((value, record.mean, record.std))
        point_dirs.append(str(point_dir))
    lines = ["axis_value,mean_regret,std"]
    lines += [f"{value:g},{mean!r},{std!r}" for value, mean, std in rows]
    (out / "sweep.csv").write_text("\n".join(lines) + "\n")
    figure = plot_sweep(rows, axis, out / "sweep.png")
    _echo_json(
        {
            "command": "sweep",
            "out": str(out),
            "axis": axis,
            "master_seed": master_seed,
            "points": [
                {"axis_value": value, "mean_regret": mean, "std": std, "dir": point_dir}
                for (value, mean, std), point_dir in zip(rows, point_dirs)
            ],
            "figures": [figure.name],
        }
    )


@cli.command(short_help="print a static communication grid as JSON")
@click.option("--T", "horizon", required=True, type=click.IntRange(min=2), help="Horizon.")
@click.option("--M", "batches", required=True, type=click.IntRange(min=1), help="Batch count.")
@click.option(
    "--epsilon",
    type=float,
    default=1.0,
    show_default=True,
    help="Tail exponent (used by the minimax grid only).",
)
@click.option(
    "--which",
    required=True,
    type=click.Choice(["minimax", "geometric"]),
    help="Grid construction.",
)
def grid(horizon: int, batches: int, epsilon: float, which: str) -> None:
    """Print the grid's decision times as a JSON list."""
    if which == "minimax":
        built = static_minimax_grid(horizon, batches, epsilon)
    else:
        built = static_geometric_grid(horizon, batches)
    click.echo(json.dumps(list(built.points), separators=(",", ":")))


_FAMILY_CHOICES = [
    "finite_static",
    "finite_adaptive",
    "peak",
    "plateau",
    "static_lowerbound",
    "adaptive_lowerbound",
]


def _build_family_doc(family: str, params: dict) -> dict:
    if family == "finite_static":
        members = make_static_lowerbound_family(**params)
        return {
            "family": family,
            "params": params,
            "instances": [instance_to_dict(member) for member in members],
        }
    if family == "finite_adaptive":
        built = make_adaptive_lowerbound_family(**params)
        return {
            "family": family,
            "params": params,
            "phase_horizons": list(built.phase_horizons),
            "phase_gaps": list(built.phase_gaps),
            "collisions": [list(pair) for pair in built.collisions],
            "instances": [instance_to_dict(member) for member in built.instances],
        }
    instance = make_lipschitz_instance(family, **params)
    return {"family": family, "params": params, "instance": instance.to_dict()}


@cli.command(short_help="print a serialized instance family as JSON")
@click.option(
    "--family",
    required=True,
    type=click.Choice(_FAMILY_CHOICES),
    help="Family name.",
)
@click.option(
    "--params",
    "params_json",
    default="{}",
    show_default=True,
    help="Family parameters as a JSON object.",
)
def instances(family: str, params_json: str) -> None:
    """Print a serialized instance family.

    Examples: --family finite_static --params '{"K": 8, "delta": 0.05,
    "epsilon": 1.0}'; --family peak --params '{"d": 1}'.
    """
    try:
        params = json.loads(params_json)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"--params is not valid JSON: {exc}") from None
    if not isinstance(params, dict):
        raise ConfigError("--params must be a JSON object")
    try:
        doc = _build_family_doc(family, params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    _echo_json(doc)


@cli.command(short_help="summarize result directories; optionally fit an exponent")
@click.option(
    "--results",
    "results_glob",
    required=True,
    help="Glob matching result directories (each holding manifest.json).",
)
@click.option(
    "--fit",
    "do_fit",
    is_flag=True,
    help="Fit log(mean regret) against log(horizon) across the matches.",
)
@click.option(
    "--out",
    "out_dir",
    type=click.Path(path_type=Path),
    default=None,
    help="With --fit: directory for fit.csv and fit.png.",
)
@click.option("--force", is_flag=True, help="Overwrite existing results.")
def analyze(results_glob: str, do_fit: bool, out_dir: Path | None, force: bool) -> None:
    """Summarize exported results, optionally fitting a scaling exponent."""
    matches = sorted(Path(piece) for piece in globlib.glob(results_glob))
    dirs = [path for path in matches if (path / "manifest.json").exists()]
    if not dirs:
        raise ConfigError(f"no result directories match {results_glob!r}")
    points = []
    for path in dirs:
        record = load_record(path)
        points.append(
            {
                "dir": str(path),
                "label": record.config.get("label", ""),
                "horizon": record.config["horizon"],
                "replications": len(record.final_regrets),
                "mean_regret": record.mean,
                "std": record.std,
            }
        )
    points.sort(key=lambda row: (row["horizon"], row["dir"]))
    doc: dict = {"command": "analyze", "points": points, "fit": None}
    if do_fit:
        fitted = fit_scaling_exponent(
            [(row["horizon"], row["mean_regret"]) for row in points]
        )
        doc["fit"] = {
            "slope": fitted.slope,
            "intercept": fitted.intercept,
            "r_squared": fitted.r_squared,
        }
        if out_dir is not None:
            out = _prepare_out(out_dir, force, sentinels=("fit.csv",))
            lines = ["horizon,mean_regret,std"]
            lines += [
                f"{row['horizon']},{row['mean_regret']!r},{row['std']!r}" for row in points
            ]
            (out / "fit.csv").write_text("\n".join(lines) + "\n")
            plot_fit(points, fitted, out / "fit.png")
            doc["out"] = str(out)
    _echo_json(doc)


def dispatch(argv: Sequence[str] | None = None) -> int:
    """Parse and execute one command line; return the process exit code."""
    args = list(sys.argv[1:]) if argv is None else list(argv)
    try:
        result = cli.main(args=args, prog_name="batchtail", standalone_mode=False)
    except click.exceptions.UsageError as exc:
        exc.show()
        return 2
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        return 2
    except (ValueError, RuntimeError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    return int(result) if isinstance(result, int) else 0


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()

"""Batch-constrained simulation engine and experiment runner.

The engine enforces the batch information protocol: the policy hands
over a full plan for the coming batch, the engine draws every planned
reward, and the rewards are revealed to the policy only when the batch
ends.  Regret is measured against true means (pseudo-regret), which the
policy never sees.

Reward draws are seeded per (replication, action) stream, with the
``j``-th pull of an action always consuming the ``j``-th variate of its
stream.  Rewards are therefore invariant to the order in which actions
are interleaved, which makes paired-replay comparisons meaningful.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Protocol, Sequence

import numpy as np

import batchtail
from batchtail.estimators import HeavyTailSpec
from batchtail.rewards import (
    dist_from_dict,
    instance_from_dict,
    verify_certificate,
)

__all__ = [
    "RegretTrace",
    "Perturbation",
    "ConfigError",
    "ExperimentConfig",
    "RunRecord",
    "FitResult",
    "simulate",
    "replicate",
    "fit_scaling_exponent",
    "export",
    "load_config",
    "load_record",
    "config_hash",
    "build_spec",
    "build_instance",
    "build_grid",
    "build_policy",
    "curve_sample_times",
]

MAX_CURVE_POINTS = 1024


# ---------------------------------------------------------------------------
# Engine
# ---------------------------------------------------------------------------


@dataclass
class RegretTrace:
    """Per-step regret of one run.

    Attributes
    ----------
    instantaneous : numpy.ndarray
        Gap of the action taken at each step (length = horizon).
    cumulative_final : float
        Sum of the instantaneous regrets.
    actions : list or None
        Chronological action log, kept only when tracing was requested.
    batch_ends : list of int
        Time points at which rewards were revealed to the policy.
    """

    instantaneous: np.ndarray
    cumulative_final: float
    actions: list | None = None
    batch_ends: list[int] = field(default_factory=list)


@dataclass(frozen=True)
class Perturbation:
    """Additive tweak of one revealed reward, for isolation tests.

    The reward the policy observes at ``step`` (0-based global index) is
    shifted by ``delta``; the true regret accounting is untouched.
    """

    step: int
    delta: float


class BatchPolicy(Protocol):
    """What the engine requires of a policy.

    ``next_plan`` returns the actions for the coming batch — either an
    integer array (one arm index per step) or a run-compressed list of
    ``(action, count)`` pairs — or ``None`` when the policy believes the
    horizon is exhausted. ``observe`` receives the batch's rewards in
    plan order, only after the whole batch is played.
    """

    def next_plan(self) -> np.ndarray | list | None: ...

    def observe(self, rewards: np.ndarray) -> None: ...


def _stream(
    streams: dict, seed: int, key: tuple[int, ...]
) -> np.random.Generator:
    gen = streams.get(key)
    if gen is None:
        gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, *key])))
        streams[key] = gen
    return gen


def simulate(
    policy: BatchPolicy,
    instance,
    horizon: int,
    seed: int,
    *,
    trace_actions: bool = False,
    perturb: Perturbation | None = None,
) -> RegretTrace:
    """Run one policy/instance pair for ``horizon`` steps.

    The instance must provide ``action_seed_ints(action)`` and
    ``sample_block(action, rng, size)``; finite-arm instances addition-
    ally expose ``gap_array()`` (fast path for integer plans) while
    continuum instances expose ``gap_of(action)``.

    Parameters
    ----------
    policy : BatchPolicy
        Asked for one plan per batch; never shown true means.
    instance : FiniteArmInstance or LipschitzInstance
        Supplies reward draws and true gaps.
    horizon : int
        Total number of steps, at least 1.
    seed : int
        Base seed of this replication's reward streams.
    trace_actions : bool
        Keep the chronological action log on the trace.
    perturb : Perturbation, optional
        Shift one revealed reward (isolation testing).

    Returns
    -------
    RegretTrace
    """
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    streams: dict = {}
    instantaneous = np.zeros(horizon, dtype=float)
    actions_log: list | None = [] if trace_actions else None
    batch_ends: list[int] = []
    t = 0
    while t < horizon:
        plan = policy.next_plan()
        if plan is None:
            raise RuntimeError(
                f"policy stopped at t={t} before the horizon {horizon}"
            )
        if isinstance(plan, np.ndarray):
            if plan.size == 0:
                raise RuntimeError(f"policy returned an empty plan at t={t}")
            length = int(plan.size)
            if t + length > horizon:
                raise RuntimeError(
                    f"plan of length {length} at t={t} overruns horizon {horizon}"
                )
            gaps = instance.gap_array()
            instantaneous[t : t + length] = gaps[plan]
            rewards = np.empty(length, dtype=float)
            for a in np.unique(plan):
                positions = np.nonzero(plan == a)[0]
                gen = _stream(streams, seed, instance.action_seed_ints(int(a)))
                rewards[positions] = instance.sample_block(int(a), gen, positions.size)
            if actions_log is not None:
                actions_log.extend(int(a) for a in plan)
        else:
            runs = [(action, int(count)) for action, count in plan]
            length = sum(count for _, count in runs)
            if length == 0:
                raise RuntimeError(f"policy returned an empty plan at t={t}")
            if t + length > horizon:
                raise RuntimeError(
                    f"plan of length {length} at t={t} overruns horizon {horizon}"
                )
            rewards = np.empty(length, dtype=float)
            pos = 0
            for action, count in runs:
                gen = _stream(streams, seed, instance.action_seed_ints(action))
                rewards[pos : pos + count] = instance.sample_block(action, gen, count)
                instantaneous[t + pos : t + pos + count] = instance.gap_of(action)
                if actions_log is not None:
                    actions_log.extend([action] * count)
                pos += count
        if perturb is not None and t <= perturb.step < t + length:
            rewards = rewards.copy()
            rewards[perturb.step - t] += perturb.delta
        policy.observe(rewards)
        t += length
        batch_ends.append(t)
    return RegretTrace(
        instantaneous=instantaneous,
        cumulative_final=float(instantaneous.sum()),
        actions=actions_log,
        batch_ends=batch_ends,
    )


# ---------------------------------------------------------------------------
# Experiment configuration
# ---------------------------------------------------------------------------


class ConfigError(ValueError):
    """A configuration document is malformed or inconsistent."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Complete, serializable description of one experiment.

    Attributes
    ----------
    policy : dict
        ``{"name": "base_h"}`` or ``{"name": "blin_h"}``.
    instance : dict
        Serialized instance: ``{"kind": "finite", "arms": [...]}`` or
        ``{"kind": "lipschitz", "family": ..., "params": {...},
        "noise": {...} | null}``.
    horizon : int
        Total steps per replication.
    grid : dict
        For ``base_h``: ``{"kind": "minimax" | "geometric", "batches": M}``.
        For ``blin_h``: ``{"kind": "diameter", "batches": M | null,
        "zooming_dim": float | null}`` (null falls back to the built-in
        batch budget and the instance's known zooming dimension).
    spec : dict
        ``{"epsilon": ..., "v": ..., "c": ...}``.
    replications : int
        Independent runs, seeded ``base_seed + r``.
    base_seed : int
        Base of the replication seeds.
    keep_curve : bool
        Also aggregate a downsampled mean regret curve.
    label : str
        Free-form run name.
    """

    policy: dict
    instance: dict
    horizon: int
    grid: dict
    spec: dict
    replications: int
    base_seed: int
    keep_curve: bool = False
    label: str = ""

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")
        if self.replications < 1:
            raise ConfigError(f"replications must be >= 1, got {self.replications}")
        name = self.policy.get("name")
        if name not in ("base_h", "blin_h"):
            raise ConfigError(f"policy.name must be base_h or blin_h, got {name!r}")
        kind = self.grid.get("kind")
        if name == "base_h" and kind not in ("minimax", "geometric"):
            raise ConfigError(f"base_h needs grid.kind minimax or geometric, got {kind!r}")
        if name == "blin_h" and kind != "diameter":
            raise ConfigError(f"blin_h needs grid.kind diameter, got {kind!r}")
        if kind in ("minimax", "geometric"):
            batches = self.grid.get("batches")
            if not isinstance(batches, int) or batches < 1:
                raise ConfigError(f"grid.batches must be a positive integer, got {batches!r}")
        inst_kind = self.instance.get("kind")
        if inst_kind not in ("finite", "lipschitz"):
            raise ConfigError(f"instance.kind must be finite or lipschitz, got {inst_kind!r}")
        if name == "base_h" and inst_kind != "finite":
            raise ConfigError("base_h requires a finite instance")
        if name == "blin_h" and inst_kind != "lipschitz":
            raise ConfigError("blin_h requires a lipschitz instance")

    def to_dict(self) -> dict:
        return {
            "policy": self.policy,
            "instance": self.instance,
            "horizon": self.horizon,
            "grid": self.grid,
            "spec": self.spec,
            "replications": self.replications,
            "base_seed": self.base_seed,
            "keep_curve": self.keep_curve,
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        required = ["policy", "instance", "horizon", "grid", "spec", "replications", "base_seed"]
        missing = [k for k in required if k not in doc]
        if missing:
            raise ConfigError(f"config missing required fields: {', '.join(missing)}")
        unknown = set(doc) - set(required) - {"keep_curve", "label"}
        if unknown:
            raise ConfigError(f"config has unknown fields: {', '.join(sorted(unknown))}")
        try:
            return cls(
                policy=dict(doc["policy"]),
                instance=dict(doc["instance"]),
                horizon=int(doc["horizon"]),
                grid=dict(doc["grid"]),
                spec=dict(doc["spec"]),
                replications=int(doc["replications"]),
                base_seed=int(doc["base_seed"]),
                keep_curve=bool(doc.get("keep_curve", False)),
                label=str(doc.get("label", "")),
            )
        except (TypeError, AttributeError) as exc:
            raise ConfigError(f"config field has wrong type: {exc}") from exc


def config_hash(config: ExperimentConfig) -> str:
    """SHA-256 of the canonical JSON form; changes iff any field changes."""
    canonical = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def build_spec(config: ExperimentConfig) -> HeavyTailSpec:
    try:
        return HeavyTailSpec(**config.spec)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad spec section: {exc}") from exc


def build_instance(config: ExperimentConfig):
    """Reconstruct the problem instance and verify its moment certificate."""
    spec = build_spec(config)
    doc = dict(config.instance)
    kind = doc.pop("kind")
    try:
        if kind == "finite":
            instance = instance_from_dict(doc)
            verify_certificate(list(instance.arms), spec.epsilon, spec.v)
            return instance
        from batchtail.lipschitz import make_lipschitz_instance

        family = doc.pop("family")
        params = doc.pop("params", {})
        noise_doc = doc.pop("noise", None)
        noise = dist_from_dict(noise_doc) if noise_doc is not None else None
        instance = make_lipschitz_instance(family, noise=noise, **params)
        if instance.noise is not None:
            verify_certificate([instance.noise], spec.epsilon, spec.v)
        return instance
    except (ValueError, KeyError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad instance section: {exc}") from exc


def build_grid(config: ExperimentConfig, instance):
    """Resolve the grid/schedule section against the horizon and instance."""
    from batchtail.grids import (
        default_lipschitz_batches,
        diameter_schedule,
        static_geometric_grid,
        static_minimax_grid,
    )

    spec = build_spec(config)
    kind = config.grid["kind"]
    try:
        if kind == "minimax":
            return static_minimax_grid(config.horizon, config.grid["batches"], spec.epsilon)
        if kind == "geometric":
            return static_geometric_grid(config.horizon, config.grid["batches"])
        d_z = config.grid.get("zooming_dim")
        if d_z is None:
            d_z = instance.d_z_analytic
        if d_z is None:
            raise ConfigError(
                "grid.zooming_dim missing and the instance has no known zooming dimension"
            )
        batches = config.grid.get("batches")
        if batches is None:
            batches = default_lipschitz_batches(
                config.horizon, instance.d, d_z, spec.epsilon
            )
        return diameter_schedule(
            config.horizon, instance.d, d_z, spec.epsilon, batches, spec
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad grid section: {exc}") from exc


def build_policy(config: ExperimentConfig, instance, grid):
    """Construct a fresh policy; it only ever sees protocol information."""
    name = config.policy["name"]
    spec = build_spec(config)
    if name == "base_h":
        from batchtail.finite_arm import BaseHPolicy

        return BaseHPolicy(n_arms=instance.n_arms, grid=grid, spec=spec)
    from batchtail.lipschitz import BlinHPolicy

    return BlinHPolicy(d=instance.d, horizon=config.horizon, schedule=grid, spec=spec)


# ---------------------------------------------------------------------------
# Replication
# ---------------------------------------------------------------------------


@dataclass
class RunRecord:
    """Aggregated result of one replicated experiment.

    Statistics are recomputed from the stored per-replication finals,
    never cached separately.
    """

    config: dict
    config_hash: str
    code_version: str
    seeds: list[int]
    final_regrets: np.ndarray
    wall_time_s: float
    curve: dict | None = None

    @property
    def mean(self) -> float:
        return float(self.final_regrets.mean())

    @property
    def std(self) -> float:
        return float(self.final_regrets.std(ddof=0))

    def quantile(self, q: float) -> float:
        return float(np.quantile(self.final_regrets, q))

    def summary(self) -> dict:
        return {
            "replications": len(self.seeds),
            "mean": self.mean,
            "std": self.std,
            "p5": self.quantile(0.05),
            "p50": self.quantile(0.50),
            "p95": self.quantile(0.95),
        }


def curve_sample_times(horizon: int) -> np.ndarray:
    """Downsampling time points: unique integers, at most 1024 of them."""
    return np.unique(np.linspace(1, horizon, min(MAX_CURVE_POINTS, horizon)).astype(int))


def _run_replications(args: tuple) -> list[tuple[int, float, np.ndarray | None]]:
    """Worker: run a contiguous set of replications of one config."""
    config_doc, reps = args
    config = ExperimentConfig.from_dict(config_doc)
    instance = build_instance(config)
    grid = build_grid(config, instance)
    sample_times = curve_sample_times(config.horizon) if config.keep_curve else None
    out = []
    for rep in reps:
        policy = build_policy(config, instance, grid)
        try:
            trace = simulate(policy, instance, config.horizon, config.base_seed + rep)
        except Exception as exc:
            raise RuntimeError(f"replication {rep} failed: {exc}") from exc
        sampled = None
        if sample_times is not None:
            sampled = np.cumsum(trace.instantaneous)[sample_times - 1]
        out.append((rep, trace.cumulative_final, sampled))
    return out


def replicate(config: ExperimentConfig, parallelism: int = 1) -> RunRecord:
    """Run all replications and aggregate.

    Results are deterministic in (config, base_seed) and independent of
    ``parallelism``: replication ``r`` always uses seed ``base_seed + r``
    and aggregation is ordered by replication index.

    Parameters
    ----------
    config : ExperimentConfig
        What to run.
    parallelism : int
        Worker processes; 1 runs in-process.
    """
    if parallelism < 1:
        raise ValueError(f"parallelism must be >= 1, got {parallelism}")
    started = time.perf_counter()
    reps = list(range(config.replications))
    doc = config.to_dict()
    if parallelism == 1 or config.replications == 1:
        results = _run_replications((doc, reps))
    else:
        shards = [reps[i::parallelism] for i in range(parallelism)]
        shards = [s for s in shards if s]
        with ProcessPoolExecutor(max_workers=len(shards)) as pool:
            chunks = list(pool.map(_run_replications, [(doc, s) for s in shards]))
        results = [item for chunk in chunks for item in chunk]
    results.sort(key=lambda item: item[0])
    finals = np.array([final for _, final, _ in results], dtype=float)
    curve = None
    if config.keep_curve:
        sample_times = curve_sample_times(config.horizon)
        stacked = np.vstack([sampled for _, _, sampled in results])
        curve = {
            "t": sample_times,
            "mean_cum_regret": stacked.mean(axis=0),
            "p5": np.quantile(stacked, 0.05, axis=0),
            "p95": np.quantile(stacked, 0.95, axis=0),
        }
    return RunRecord(
        config=doc,
        config_hash=config_hash(config),
        code_version=batchtail.__version__,
        seeds=[config.base_seed + r for r in reps],
        final_regrets=finals,
        wall_time_s=time.perf_counter() - started,
        curve=curve,
    )


# ---------------------------------------------------------------------------
# Scaling-law fitting
# ---------------------------------------------------------------------------


class FitResult(NamedTuple):
    slope: float
    intercept: float
    r_squared: float


def fit_scaling_exponent(points: Sequence[tuple[float, float]]) -> FitResult:
    """Least squares on (log T, log regret).

    Parameters
    ----------
    points : sequence of (horizon, mean final regret)
        At least 3 points with distinct positive horizons and strictly
        positive regrets.

    Returns
    -------
    FitResult
        ``slope`` is the scaling exponent; ``r_squared`` is 1.0 for an
        exact fit (including the constant-regret case).
    """
    if len(points) < 3:
        raise ValueError(f"need at least 3 points, got {len(points)}")
    horizons = np.array([p[0] for p in points], dtype=float)
    regrets = np.array([p[1] for p in points], dtype=float)
    if np.any(horizons <= 0) or len(set(horizons)) != len(horizons):
        raise ValueError("horizons must be distinct and positive")
    if np.any(regrets <= 0):
        raise ValueError("regrets must be positive for a log-log fit")
    x = np.log(horizons)
    y = np.log(regrets)
    x_bar, y_bar = x.mean(), y.mean()
    s_xx = float(((x - x_bar) ** 2).sum())
    s_xy = float(((x - x_bar) * (y - y_bar)).sum())
    slope = s_xy / s_xx
    intercept = y_bar - slope * x_bar
    residual = y - (intercept + slope * x)
    ss_res = float((residual**2).sum())
    ss_tot = float(((y - y_bar) ** 2).sum())
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return FitResult(slope=slope, intercept=intercept, r_squared=r_squared)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def export(record: RunRecord, out_dir: str | Path) -> Path:
    """Write ``results.csv``, ``manifest.json`` and optional ``curve.csv``.

    Returns the output directory.  Reloading with :func:`load_record`
    and exporting again reproduces ``results.csv`` byte for byte.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "results.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["replication", "seed", "final_regret"])
        for rep, (seed, final) in enumerate(zip(record.seeds, record.final_regrets)):
            writer.writerow([rep, seed, repr(float(final))])
    manifest = {
        "config": record.config,
        "config_hash": record.config_hash,
        "code_version": record.code_version,
        "wall_time_s": record.wall_time_s,
        "summary": record.summary(),
    }
    with (out / "manifest.json").open("w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if record.curve is not None:
        with (out / "curve.csv").open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "mean_cum_regret", "p5", "p95"])
            for i in range(len(record.curve["t"])):
                writer.writerow(
                    [
                        int(record.curve["t"][i]),
                        repr(float(record.curve["mean_cum_regret"][i])),
                        repr(float(record.curve["p5"][i])),
                        repr(float(record.curve["p95"][i])),
                    ]
                )
    return out


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse and validate a JSON config; errors carry file context."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    try:
        return ExperimentConfig.from_dict(doc)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def load_record(out_dir: str | Path) -> RunRecord:
    """Reload an exported RunRecord (inverse of :func:`export`)."""
    out = Path(out_dir)
    manifest_path = out / "manifest.json"
    try:
        manifest = json.loads(manifest_path.read_text())
    except OSError as exc:
        raise ConfigError(f"{manifest_path}: cannot read manifest: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{manifest_path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}"
        ) from exc
    seeds: list[int] = []
    finals: list[float] = []
    results_path = out / "results.csv"
    with results_path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["replication", "seed", "final_regret"]:
            raise ConfigError(f"{results_path}:1: unexpected header {header}")
        for lineno, row in enumerate(reader, start=2):
            try:
                seeds.append(int(row[1]))
                finals.append(float(row[2]))
            except (IndexError, ValueError) as exc:
                raise ConfigError(f"{results_path}:{lineno}: malformed row {row}") from exc
    curve = None
    curve_path = out / "curve.csv"
    if curve_path.exists():
        rows = []
        with curve_path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["t", "mean_cum_regret", "p5", "p95"]:
                raise ConfigError(f"{curve_path}:1: unexpected header {header}")
            for lineno, row in enumerate(reader, start=2):
                try:
                    rows.append((int(row[0]), float(row[1]), float(row[2]), float(row[3])))
                except (IndexError, ValueError) as exc:
                    raise ConfigError(f"{curve_path}:{lineno}: malformed row {row}") from exc
        curve = {
            "t": np.array([r[0] for r in rows], dtype=int),
            "mean_cum_regret": np.array([r[1] for r in rows], dtype=float),
            "p5": np.array([r[2] for r in rows], dtype=float),
            "p95": np.array([r[3] for r in rows], dtype=float),
        }
    return RunRecord(
        config=manifest["config"],
        config_hash=manifest["config_hash"],
        code_version=manifest["code_version"],
        seeds=seeds,
        final_regrets=np.array(finals, dtype=float),
        wall_time_s=manifest["wall_time_s"],
        curve=curve,
    )

"""Batched bandits on the unit cube with a Lipschitz mean reward.

The policy maintains a set of active dyadic cubes, pulls each cube's
center a scheduled number of times per batch, estimates cube values
robustly, discards cubes whose estimate trails the best by at least
four edge lengths, and subdivides the survivors so the next batch works
at a finer scale.  When the time budget runs out (or the schedule is
exhausted), a clean-up phase plays the best-estimate survivor's center
for every remaining step.

The module also ships problem-instance families with a known zooming
dimension, and a brute-force lattice estimator of that dimension used
to validate the analytic values.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from batchtail.estimators import HeavyTailSpec, median_of_means
from batchtail.grids import DiameterSchedule
from batchtail.rewards import PointMass, RewardDistribution, dist_to_dict, mean, sample_many

__all__ = [
    "Cube",
    "LipschitzInstance",
    "BlinState",
    "BlinHPolicy",
    "ZoomingFit",
    "partition",
    "eliminate_cubes",
    "next_batch_end",
    "run_blin_h",
    "make_lipschitz_instance",
    "cube_containing",
    "estimate_zooming_dimension",
]


# ---------------------------------------------------------------------------
# Dyadic cubes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Cube:
    """An axis-aligned dyadic cube ``[i * 2^-level, (i+1) * 2^-level]^d``.

    ``index`` holds one integer per coordinate, each in
    ``[0, 2^level)``; all derived geometry (corner, edge, center) is
    exact in binary floating point for any practical level.
    """

    level: int
    index: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.level < 0:
            raise ValueError(f"level must be >= 0, got {self.level}")
        if not self.index:
            raise ValueError("index must have at least one coordinate")
        top = 1 << self.level
        if any(not 0 <= i < top for i in self.index):
            raise ValueError(f"index {self.index} out of range for level {self.level}")

    @property
    def d(self) -> int:
        return len(self.index)

    @property
    def edge(self) -> float:
        return 2.0**-self.level

    @property
    def corner(self) -> tuple[float, ...]:
        return tuple(i * self.edge for i in self.index)

    @property
    def center(self) -> tuple[float, ...]:
        return tuple((i + 0.5) * self.edge for i in self.index)

    @property
    def seed_ints(self) -> tuple[int, ...]:
        """Stream key of this cube's center: ``(2, level, *index)``."""
        return (2, self.level, *self.index)

    def contains(self, point: Sequence[float]) -> bool:
        """Half-open membership; the domain's upper face is closed."""
        if len(point) != self.d:
            raise ValueError(f"point has {len(point)} coordinates, cube has {self.d}")
        top = 1 << self.level
        for i, x in zip(self.index, point):
            lo, hi = i * self.edge, (i + 1) * self.edge
            if x < lo:
                return False
            if x >= hi and not (i == top - 1 and x == 1.0):
                return False
        return True


def cube_containing(point: Sequence[float], level: int) -> Cube:
    """The level-``level`` dyadic cube containing ``point`` in [0,1]^d."""
    top = 1 << level
    index = []
    for x in point:
        if not 0.0 <= x <= 1.0:
            raise ValueError(f"point coordinate {x} outside [0, 1]")
        index.append(min(int(x * top), top - 1))
    return Cube(level=level, index=tuple(index))


def partition(cube: Cube, factor: int) -> list[Cube]:
    """Split a cube into ``factor^d`` equal subcubes (exact dyadic tiling).

    Parameters
    ----------
    cube : Cube
        Parent cube.
    factor : int
        Per-axis subdivision count; must be a power of 2, at least 2.

    Returns
    -------
    list of Cube
        Children in lexicographic offset order; their union is exactly
        the parent and their edges are ``cube.edge / factor``.
    """
    if factor < 2 or factor & (factor - 1):
        raise ValueError(f"factor must be a power of 2, at least 2, got {factor}")
    shift = factor.bit_length() - 1
    child_level = cube.level + shift
    base = tuple(i * factor for i in cube.index)
    return [
        Cube(level=child_level, index=tuple(b + o for b, o in zip(base, offset)))
        for offset in itertools.product(range(factor), repeat=cube.d)
    ]


# ---------------------------------------------------------------------------
# Problem instances
# ---------------------------------------------------------------------------

_MEAN_CHUNK = 8192


@dataclass(frozen=True, eq=False)
class LipschitzInstance:
    """A mean-reward function on [0,1]^d plus an additive noise law.

    The mean function is 1-Lipschitz under the sup norm (spot-checked at
    construction).  ``mu_star`` is its exact supremum, attained at
    ``argmax_point``.  ``noise`` is a zero-mean reward law added to the
    mean on every pull; instances built from mean formulas alone carry
    ``noise=None`` and refuse to sample.

    ``d_z_analytic`` is the family's known zooming dimension (the growth
    exponent of packing numbers of near-optimal level sets), used to
    size schedules and to validate the empirical estimator.
    """

    d: int
    mean_fn: Callable[[np.ndarray], np.ndarray]
    noise: RewardDistribution | None
    mu_star: float
    argmax_point: tuple[float, ...]
    d_z_analytic: float | None
    family_tag: str
    params: dict

    def mean_at(self, point: Sequence[float]) -> float:
        """Expected reward at one point."""
        out = self.mean_fn(np.asarray(point, dtype=float).reshape(1, self.d))
        return float(out[0])

    def mean_many(self, points: np.ndarray) -> np.ndarray:
        """Expected reward at each row of ``points`` (chunked evaluation)."""
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != self.d:
            raise ValueError(f"points must have shape (n, {self.d}), got {pts.shape}")
        if pts.shape[0] <= _MEAN_CHUNK:
            return np.asarray(self.mean_fn(pts), dtype=float)
        out = np.empty(pts.shape[0], dtype=float)
        for start in range(0, pts.shape[0], _MEAN_CHUNK):
            stop = start + _MEAN_CHUNK
            out[start:stop] = self.mean_fn(pts[start:stop])
        return out

    def gap_of(self, action: Cube) -> float:
        """True suboptimality of pulling this cube's center."""
        return self.mu_star - self.mean_at(action.center)

    def action_seed_ints(self, action: Cube) -> tuple[int, ...]:
        return action.seed_ints

    def sample_block(self, action: Cube, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw ``size`` rewards at the cube's center."""
        if self.noise is None:
            raise ValueError(
                f"family {self.family_tag!r} carries means only and cannot be sampled"
            )
        return self.mean_at(action.center) + sample_many(self.noise, rng, size)

    def to_dict(self) -> dict:
        return {
            "kind": "lipschitz",
            "family": self.family_tag,
            "params": dict(self.params),
            "noise": None if self.noise is None else dist_to_dict(self.noise),
        }


def _check_lipschitz(fn: Callable[[np.ndarray], np.ndarray], d: int) -> None:
    """Spot-check |f(x) - f(y)| <= sup-norm distance on random pairs."""
    rng = np.random.default_rng(2718)
    x = rng.uniform(size=(64, d))
    y = rng.uniform(size=(64, d))
    diffs = np.abs(np.asarray(fn(x)) - np.asarray(fn(y)))
    dists = np.max(np.abs(x - y), axis=1)
    worst = float(np.max(diffs - dists))
    if worst > 1e-9:
        raise ValueError(f"mean function violates 1-Lipschitzness by {worst:.3e}")


def _cone_max_fn(
    floor_value: float, anchors: np.ndarray, values: np.ndarray
) -> Callable[[np.ndarray], np.ndarray]:
    """max(floor, max_i values[i] - sup_dist(x, anchors[i])), vectorized."""

    def fn(points: np.ndarray) -> np.ndarray:
        dist = np.max(np.abs(points[:, None, :] - anchors[None, :, :]), axis=2)
        return np.maximum(floor_value, (values[None, :] - dist).max(axis=1))

    return fn


def _lattice_points(pitch: float, count: int, d: int) -> np.ndarray:
    """First ``count`` points of the pitch-spaced grid in [0,1]^d, lex order.

    Adjacent grid points are exactly ``pitch`` apart in sup norm, so any
    subset is pairwise separated by at least ``pitch``.
    """
    per_axis = math.floor(1.0 / pitch + 1e-9) + 1
    if count > per_axis**d:
        raise ValueError(
            f"cannot place {count} points at pairwise distance >= {pitch} in [0,1]^{d}"
        )
    coords = np.arange(per_axis, dtype=float) * pitch
    points = []
    for offsets in itertools.product(range(per_axis), repeat=d):
        points.append([coords[o] for o in offsets])
        if len(points) == count:
            break
    return np.array(points, dtype=float)


def _validate_center(center, d: int) -> tuple[float, ...]:
    center = tuple(float(c) for c in (center if center is not None else (0.5,) * d))
    if len(center) != d:
        raise ValueError(f"center must have {d} coordinates, got {len(center)}")
    if any(not 0.0 <= c <= 1.0 for c in center):
        raise ValueError(f"center {center} outside [0,1]^{d}")
    return center


def _make_peak(d: int, height: float, width: float, center) -> dict:
    """Cone of slope 1 around the maximizer, clipped ``width`` below it."""
    if width <= 0:
        raise ValueError(f"width must be positive, got {width}")
    c = _validate_center(center, d)
    c_arr = np.asarray(c, dtype=float)

    def fn(points: np.ndarray) -> np.ndarray:
        dist = np.max(np.abs(points - c_arr[None, :]), axis=1)
        return height - np.minimum(dist, width)

    return {
        "mean_fn": fn,
        "mu_star": float(height),
        "argmax_point": c,
        "d_z_analytic": 0.0,
        "params": {"d": d, "height": height, "width": width, "center": list(c)},
    }


def _make_plateau(d: int, height: float, width: float, center) -> dict:
    """Flat top of radius ``width`` around the center, then slope-1 decay."""
    if width <= 0:
        raise ValueError(f"width must be positive, got {width}")
    c = _validate_center(center, d)
    c_arr = np.asarray(c, dtype=float)

    def fn(points: np.ndarray) -> np.ndarray:
        dist = np.max(np.abs(points - c_arr[None, :]), axis=1)
        return height - np.maximum(0.0, dist - width)

    return {
        "mean_fn": fn,
        "mu_star": float(height),
        "argmax_point": c,
        "d_z_analytic": float(d),
        "params": {"d": d, "height": height, "width": width, "center": list(c)},
    }


def _make_static_lowerbound(d: int, r: float, n_points: int, i: int) -> dict:
    """One member of the single-scale hard family.

    ``n_points`` anchor points sit on a pitch-``r`` grid (pairwise
    sup-distance at least ``r``).  Member ``i=1`` peaks at the first
    anchor with value ``(3/4) r`` and holds every other anchor at
    ``(5/8) r``; member ``i>=2`` additionally lifts anchor ``i`` to
    ``(7/8) r``, overtaking the first.  Between anchors the mean is the
    upper envelope of slope-1 cones, floored at ``r/2``.
    """
    if not 0 < r <= 0.5:
        raise ValueError(f"scale must lie in (0, 1/2], got {r}")
    if n_points < 2:
        raise ValueError(f"need at least 2 anchor points, got {n_points}")
    if not 1 <= i <= n_points:
        raise ValueError(f"member index must lie in [1, {n_points}], got {i}")
    anchors = _lattice_points(r, n_points, d)
    values = np.full(n_points, 0.625 * r)
    values[0] = 0.75 * r
    if i >= 2:
        values[i - 1] = 0.875 * r
    star = int(np.argmax(values))
    return {
        "mean_fn": _cone_max_fn(0.5 * r, anchors, values),
        "mu_star": float(values[star]),
        "argmax_point": tuple(anchors[star]),
        "d_z_analytic": min(float(d), math.log(n_points) / math.log(1.0 / r)),
        "params": {"d": d, "r": r, "n_points": n_points, "i": i},
    }


def _make_adaptive_lowerbound(
    d: int, d_z: float, epsilon: float, T: int, M: int, j: int, k: int | None
) -> dict:
    """One member of the multi-scale hard family (means only, no sampler).

    Scale ``j`` uses radius ``r_j = 1 / (T_{j-1}^a * M)`` with
    ``a = 1/(d_z + 1 + 1/epsilon)`` and reference times
    ``T_j = T^{(1-a^j)/(1-a^M)}``, and places ``m_j = r_j^{-d_z}``
    anchors on a pitch-``r_j`` grid whose last anchor is the origin
    (shared across scales).  Member ``(j, k)`` with ``j < M`` peaks at
    anchor ``k`` with value ``r_1/2 + r_j/16 + r_M/16`` and lifts the
    origin to ``r_1/2 + r_M/16``; the final member ``j = M`` lifts only
    the origin.  Elsewhere the mean is the upper envelope of slope-1
    cones, floored at ``r_1/2``.
    """
    from batchtail._numeric import snap_floor

    if d < 1:
        raise ValueError(f"ambient dimension must be >= 1, got {d}")
    if not 0.0 <= d_z <= d:
        raise ValueError(f"zooming dimension must lie in [0, {d}], got {d_z}")
    if not 0.0 < epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in (0, 1], got {epsilon}")
    if T < 2:
        raise ValueError(f"horizon must be >= 2, got {T}")
    if M < 1:
        raise ValueError(f"scale count must be >= 1, got {M}")
    if not 1 <= j <= M:
        raise ValueError(f"scale index must lie in [1, {M}], got {j}")
    a = 1.0 / (d_z + 1.0 + 1.0 / epsilon)
    ref_times = [T ** ((1.0 - a**jj) / (1.0 - a**M)) for jj in range(M + 1)]
    radii = [1.0 / (ref_times[jj - 1] ** a * M) for jj in range(1, M + 1)]
    r_1, r_j, r_M = radii[0], radii[j - 1], radii[-1]
    floor_value = 0.5 * r_1
    if j == M:
        if k is not None:
            raise ValueError("the final scale has a single member; omit k")
        anchors = np.zeros((1, d))
        values = np.array([floor_value + r_M / 16.0])
        star = 0
    else:
        m_j = max(1, snap_floor(r_j**-d_z))
        if m_j < 2:
            raise ValueError(
                f"scale {j} admits {m_j} anchor(s); no lifted member exists"
            )
        if k is None or not 1 <= k <= m_j - 1:
            raise ValueError(f"member index must lie in [1, {m_j - 1}], got {k}")
        grid = _lattice_points(r_j, m_j, d)
        # the shared anchor (origin) is grid[0]; the lifted anchor is the
        # k-th of the remaining points
        anchors = np.vstack([grid[k], grid[0]])
        values = np.array(
            [floor_value + r_j / 16.0 + r_M / 16.0, floor_value + r_M / 16.0]
        )
        star = 0
    return {
        "mean_fn": _cone_max_fn(floor_value, anchors, values),
        "mu_star": float(values[star]),
        "argmax_point": tuple(anchors[star]),
        "d_z_analytic": float(d_z),
        "params": {
            "d": d,
            "d_z": d_z,
            "epsilon": epsilon,
            "T": T,
            "M": M,
            "j": j,
            "k": k,
        },
    }


_SAMPLED_FAMILIES = ("peak", "plateau", "static_lowerbound")


def make_lipschitz_instance(
    family: str,
    *,
    noise: RewardDistribution | None = None,
    **params,
) -> LipschitzInstance:
    """Build a named instance family member.

    Parameters
    ----------
    family : str
        One of ``peak``, ``plateau``, ``static_lowerbound``,
        ``adaptive_lowerbound``.
    noise : reward distribution, optional
        Zero-mean additive noise; defaults to a point mass at 0 for the
        samplable families.  The ``adaptive_lowerbound`` family defines
        means only and rejects any noise.
    **params
        Family parameters:

        - ``peak``/``plateau``: ``d``, ``height=1.0``, ``width``
          (default 1.0 for peak, 0.25 for plateau), ``center``
          (default the domain midpoint).
        - ``static_lowerbound``: ``d``, ``r``, ``n_points``, ``i``.
        - ``adaptive_lowerbound``: ``d``, ``d_z``, ``epsilon``, ``T``,
          ``M``, ``j``, ``k`` (``k`` omitted for ``j = M``).

    Returns
    -------
    LipschitzInstance
    """
    d = int(params.pop("d", 1))
    if d < 1:
        raise ValueError(f"ambient dimension must be >= 1, got {d}")
    if family == "peak":
        built = _make_peak(
            d,
            float(params.pop("height", 1.0)),
            float(params.pop("width", 1.0)),
            params.pop("center", None),
        )
    elif family == "plateau":
        built = _make_plateau(
            d,
            float(params.pop("height", 1.0)),
            float(params.pop("width", 0.25)),
            params.pop("center", None),
        )
    elif family == "static_lowerbound":
        built = _make_static_lowerbound(
            d,
            float(params.pop("r")),
            int(params.pop("n_points")),
            int(params.pop("i")),
        )
    elif family == "adaptive_lowerbound":
        if noise is not None:
            raise ValueError("adaptive_lowerbound carries means only; noise must be None")
        k = params.pop("k", None)
        built = _make_adaptive_lowerbound(
            d,
            float(params.pop("d_z")),
            float(params.pop("epsilon")),
            int(params.pop("T")),
            int(params.pop("M")),
            int(params.pop("j")),
            None if k is None else int(k),
        )
    else:
        raise ValueError(
            f"unknown family {family!r}; expected one of "
            f"{_SAMPLED_FAMILIES + ('adaptive_lowerbound',)}"
        )
    if params:
        raise ValueError(f"unexpected parameters for {family!r}: {sorted(params)}")
    if family in _SAMPLED_FAMILIES:
        if noise is None:
            noise = PointMass(0.0)
        if abs(mean(noise)) > 1e-12:
            raise ValueError(f"noise must have zero mean, got {mean(noise)}")
    else:
        noise = None
    _check_lipschitz(built["mean_fn"], d)
    return LipschitzInstance(
        d=d,
        mean_fn=built["mean_fn"],
        noise=noise,
        mu_star=built["mu_star"],
        argmax_point=built["argmax_point"],
        d_z_analytic=built["d_z_analytic"],
        family_tag=family,
        params=built["params"],
    )


# ---------------------------------------------------------------------------
# Narrowing policy
# ---------------------------------------------------------------------------


@dataclass
class BlinState:
    """Mutable per-run state of the narrowing policy.

    All active cubes share the current batch's edge length and are
    pairwise disjoint.  ``estimates`` holds the latest per-cube robust
    estimates, aligned with ``active_cubes`` at the time they were
    computed.
    """

    active_cubes: list[Cube]
    m: int
    schedule: DiameterSchedule
    t: int
    committed: Cube | None = None
    estimates: np.ndarray | None = None

    @classmethod
    def fresh(cls, schedule: DiameterSchedule, d: int) -> "BlinState":
        level = _edge_level(schedule.r[0])
        cubes = [
            Cube(level=level, index=idx)
            for idx in itertools.product(range(1 << level), repeat=d)
        ]
        return cls(active_cubes=cubes, m=1, schedule=schedule, t=0)


def _edge_level(edge: float) -> int:
    level = round(-math.log2(edge))
    if abs(2.0**-level - edge) > 1e-12:
        raise ValueError(f"edge {edge} is not a power of 2")
    return int(level)


def eliminate_cubes(
    cubes: Sequence[Cube], estimates: np.ndarray, r: float
) -> list[Cube]:
    """Keep exactly the cubes whose estimate trails the best by < 4r.

    The argmax cube always survives.

    Parameters
    ----------
    cubes : sequence of Cube
        Active cubes, aligned with ``estimates``.
    estimates : array of float
        Per-cube robust value estimates.
    r : float
        Current edge length; the elimination margin is ``4 * r``.
    """
    estimates = np.asarray(estimates, dtype=float)
    if len(cubes) == 0:
        raise ValueError("need at least one cube")
    if estimates.shape != (len(cubes),):
        raise ValueError(
            f"got {len(cubes)} cubes but estimates of shape {estimates.shape}"
        )
    if r <= 0:
        raise ValueError(f"edge length must be positive, got {r}")
    best = float(estimates.max())
    return [cube for cube, est in zip(cubes, estimates) if best - est < 4.0 * r]


def next_batch_end(state: BlinState, survivors: int, d: int) -> int:
    """Time at which the next batch would finish.

    Each survivor splits into ``(r_m / r_{m+1})^d`` subcubes, and each
    subcube's center is pulled ``n_{m+1}`` times, so the next batch ends
    at ``t + (r_m/r_{m+1})^d * survivors * n_{m+1}``.  The caller breaks
    to clean-up when this value reaches the horizon.
    """
    if survivors < 1:
        raise ValueError(f"survivor count must be >= 1, got {survivors}")
    m = state.m
    if m + 1 > state.schedule.batches:
        raise ValueError(f"schedule has no batch {m + 1}")
    r_m = state.schedule.r[m - 1]
    r_next = state.schedule.r[m]
    n_next = state.schedule.n[m]
    factor = int(round(r_m / r_next))
    return state.t + factor**d * survivors * n_next


class BlinHPolicy:
    """Batched narrowing over dyadic cubes with robust estimates.

    Per exploration batch ``m``: pull each active cube's center ``n_m``
    times, estimate each cube by a median of block means over exactly
    those pulls (confidence ``horizon**-3``), eliminate cubes trailing
    the best estimate by at least ``4 r_m``, and either subdivide the
    survivors or — when the next batch would not fit before the horizon,
    or the schedule is exhausted — commit to the best-estimate cube and
    spend all remaining steps on its center.

    With a single-entry schedule there are no estimates to rank, and the
    policy commits to the first active cube.
    """

    def __init__(
        self, d: int, horizon: int, schedule: DiameterSchedule, spec: HeavyTailSpec
    ) -> None:
        if d != schedule.d:
            raise ValueError(f"instance dimension {d} != schedule dimension {schedule.d}")
        if horizon != schedule.T:
            raise ValueError(f"horizon {horizon} != schedule horizon {schedule.T}")
        if abs(spec.epsilon - schedule.epsilon) > 1e-12:
            raise ValueError(
                f"spec epsilon {spec.epsilon} != schedule epsilon {schedule.epsilon}"
            )
        level = _edge_level(schedule.r[0])
        first_batch = (1 << (level * d)) * schedule.n[0]
        if first_batch > horizon:
            raise ValueError(
                f"first batch needs {first_batch} pulls but the horizon is {horizon}"
            )
        self.d = d
        self.horizon = horizon
        self.spec = spec
        self.estimator_delta = float(horizon) ** -3.0
        self.state = BlinState.fresh(schedule, d)
        self._pending: tuple[str, list[tuple[Cube, int]]] | None = None
        self._done = False

    def next_plan(self) -> list[tuple[Cube, int]] | None:
        if self._done:
            return None
        if self._pending is not None:
            raise RuntimeError("previous batch has not been observed yet")
        st = self.state
        if st.committed is None and st.schedule.batches == 1:
            st.committed = st.active_cubes[0]
        remaining = self.horizon - st.t
        if remaining <= 0:
            return None
        if st.committed is not None:
            runs = [(st.committed, remaining)]
            self._pending = ("cleanup", runs)
            return runs
        n_m = st.schedule.n[st.m - 1]
        if len(st.active_cubes) * n_m > remaining:
            # budget exhausted mid-batch: play a truncated prefix and stop
            runs = []
            for cube in st.active_cubes:
                take = min(n_m, remaining)
                runs.append((cube, take))
                remaining -= take
                if remaining == 0:
                    break
            self._pending = ("truncated", runs)
            return runs
        runs = [(cube, n_m) for cube in st.active_cubes]
        self._pending = ("explore", runs)
        return runs

    def observe(self, rewards: np.ndarray) -> None:
        if self._pending is None:
            raise RuntimeError("no outstanding batch to observe")
        kind, runs = self._pending
        self._pending = None
        rewards = np.asarray(rewards, dtype=float)
        length = sum(count for _, count in runs)
        if rewards.shape != (length,):
            raise ValueError(f"expected {length} rewards, got shape {rewards.shape}")
        st = self.state
        st.t += length
        if kind != "explore":
            self._done = True
            return
        n_m = st.schedule.n[st.m - 1]
        blocks = rewards.reshape(len(st.active_cubes), n_m)
        estimates = np.array(
            [median_of_means(block, self.estimator_delta) for block in blocks]
        )
        st.estimates = estimates
        r_m = st.schedule.r[st.m - 1]
        survivors = eliminate_cubes(st.active_cubes, estimates, r_m)
        best = st.active_cubes[int(np.argmax(estimates))]
        if st.m == st.schedule.batches - 1:
            st.active_cubes = survivors
            st.committed = best
            return
        if next_batch_end(st, len(survivors), self.d) >= self.horizon:
            st.active_cubes = survivors
            st.committed = best
            return
        factor = int(round(r_m / st.schedule.r[st.m]))
        st.active_cubes = [
            child for cube in survivors for child in partition(cube, factor)
        ]
        st.m += 1


def run_blin_h(
    instance: LipschitzInstance,
    schedule: DiameterSchedule,
    spec: HeavyTailSpec,
    T: int,
    seed: int,
    *,
    trace_actions: bool = False,
    perturb=None,
):
    """Run the narrowing policy once and return its regret trace.

    Parameters
    ----------
    instance : LipschitzInstance
        Must carry a sampler (``noise`` not None).
    schedule : DiameterSchedule
        Edge/budget schedule built for the same horizon and dimension.
    spec : HeavyTailSpec
        Moment certificate; its tail exponent must match the schedule's.
    T : int
        Horizon; must equal the schedule's.
    seed : int
        Reward-stream seed for this run.
    trace_actions : bool
        Keep the chronological action log on the trace.
    perturb : Perturbation, optional
        Shift one revealed reward (isolation testing).
    """
    from batchtail.harness import simulate

    if instance.noise is None:
        raise ValueError(
            f"family {instance.family_tag!r} carries means only and cannot be simulated"
        )
    if instance.d != schedule.d:
        raise ValueError(
            f"instance dimension {instance.d} != schedule dimension {schedule.d}"
        )
    policy = BlinHPolicy(d=instance.d, horizon=T, schedule=schedule, spec=spec)
    return simulate(
        policy, instance, T, seed, trace_actions=trace_actions, perturb=perturb
    )


# ---------------------------------------------------------------------------
# Zooming-dimension estimation
# ---------------------------------------------------------------------------


class ZoomingFit(NamedTuple):
    d_z_hat: float
    points: list[tuple[float, int]]


def _greedy_packing_count(points: np.ndarray, r: float) -> int:
    """Greedy sup-norm r-separated subset size, scanning in given order.

    A point is kept iff its sup-distance to every previously kept point
    is at least ``r``; a hash over cells of size ``r`` limits each check
    to the 3^d neighboring cells.
    """
    d = points.shape[1]
    cells: dict[tuple[int, ...], list[np.ndarray]] = {}
    neighborhood = list(itertools.product((-1, 0, 1), repeat=d))
    count = 0
    tol = 1e-12
    for p in points:
        cell = tuple(int(math.floor(x / r)) for x in p)
        ok = True
        for offset in neighborhood:
            bucket = cells.get(tuple(c + o for c, o in zip(cell, offset)))
            if not bucket:
                continue
            for q in bucket:
                if np.max(np.abs(p - q)) < r - tol:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            cells.setdefault(cell, []).append(p)
            count += 1
    return count


def estimate_zooming_dimension(
    instance: LipschitzInstance, resolutions: Sequence[float]
) -> ZoomingFit:
    """Fit the packing-growth exponent of near-optimal level sets.

    For each resolution ``r``, counts a greedy sup-norm ``r``-separated
    packing of the lattice points whose suboptimality gap is at most
    ``16 r``, then fits the slope of ``log N_r`` against ``log(1/r)``
    by least squares.

    Parameters
    ----------
    instance : LipschitzInstance
        Dimension at most 2 (the lattice is exponential in ``d``).
    resolutions : sequence of float
        At least 3 strictly decreasing values in ``(0, 1)``.

    Returns
    -------
    ZoomingFit
        The fitted exponent and the raw ``(r, N_r)`` points.
    """
    from batchtail.harness import fit_scaling_exponent

    if instance.d > 2:
        raise ValueError(f"lattice search supports d <= 2, got d={instance.d}")
    res = [float(r) for r in resolutions]
    if len(res) < 3:
        raise ValueError(f"need at least 3 resolutions, got {len(res)}")
    if any(not 0.0 < r < 1.0 for r in res):
        raise ValueError(f"resolutions must lie in (0, 1): {res}")
    if any(b >= a for a, b in zip(res, res[1:])):
        raise ValueError(f"resolutions must be strictly decreasing: {res}")
    finest_level = math.ceil(-math.log2(res[-1]) - 1e-9)
    lattice_level = finest_level + (4 if instance.d == 1 else 1)
    lattice_level = min(lattice_level, 16 if instance.d == 1 else 9)
    if 2.0**-lattice_level > res[-1]:
        raise ValueError(f"finest resolution {res[-1]} is below the lattice pitch")
    axis = np.arange((1 << lattice_level) + 1, dtype=float) / (1 << lattice_level)
    if instance.d == 1:
        lattice = axis.reshape(-1, 1)
    else:
        xx, yy = np.meshgrid(axis, axis, indexing="ij")
        lattice = np.column_stack([xx.ravel(), yy.ravel()])
    gaps = instance.mu_star - instance.mean_many(lattice)
    points: list[tuple[float, int]] = []
    for r in res:
        members = lattice[gaps <= 16.0 * r + 1e-12]
        points.append((r, _greedy_packing_count(members, r)))
    fit = fit_scaling_exponent([(1.0 / r, n) for r, n in points])
    return ZoomingFit(d_z_hat=fit.slope, points=points)

"""Communication grids and the cube-diameter schedule.

A batched policy may only observe rewards at a fixed set of time points
``0 = t_0 < t_1 < ... < t_M = T``.  This module builds the two static
grids used by the finite-arm policy (a tail-exponent-aware grid and a
plain geometric grid), the minimum batch budgets at which those grids
match fully-sequential performance, and the decreasing cube-edge
schedule (with per-cube sample budgets) that drives the continuum
policy.

All logarithms are natural; dyadic exponents divide by ``log 2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from batchtail._numeric import snap_floor
from batchtail.estimators import HeavyTailSpec

__all__ = [
    "Grid",
    "DiameterSchedule",
    "static_minimax_grid",
    "minimax_point_closed_form",
    "static_geometric_grid",
    "min_batches_minimax",
    "diameter_schedule",
    "default_lipschitz_batches",
]


@dataclass(frozen=True)
class Grid:
    """A communication grid: reveal times ``0 = t_0 < ... < t_M = T``.

    Parameters
    ----------
    points : tuple of int
        Strictly increasing reveal times starting at 0.
    requested_batches : int or None
        Batch count asked of the builder; differs from ``batches`` when
        flooring collapsed neighboring points at small horizons.
    """

    points: tuple[int, ...]
    requested_batches: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "points", tuple(int(p) for p in self.points))
        if len(self.points) < 2:
            raise ValueError("grid needs at least the two endpoints {0, T}")
        if self.points[0] != 0:
            raise ValueError(f"grid must start at 0, got {self.points[0]}")
        if any(b <= a for a, b in zip(self.points, self.points[1:])):
            raise ValueError(f"grid points must be strictly increasing: {self.points}")

    @property
    def batches(self) -> int:
        return len(self.points) - 1

    @property
    def horizon(self) -> int:
        return self.points[-1]

    def to_dict(self) -> dict:
        return {"points": list(self.points), "requested_batches": self.requested_batches}


def _finalize_points(raw: list[int], T: int, requested: int) -> Grid:
    pts = [0]
    for p in raw:
        p = min(int(p), T)
        if p > pts[-1]:
            pts.append(p)
    if pts[-1] != T:
        pts.append(T)
    return Grid(points=tuple(pts), requested_batches=requested)


def _validate_horizon_batches(T: int, M: int) -> None:
    if T < 2:
        raise ValueError(f"horizon must be >= 2, got {T}")
    if not 1 <= M <= T:
        raise ValueError(f"batch count must satisfy 1 <= M <= T, got M={M}, T={T}")


def minimax_point_closed_form(T: int, M: int, epsilon: float, m: int) -> float:
    """Real-valued ``m``-th point of the tail-aware grid, closed form.

    ``t_m = l**(1 + e - e*q**(m-1))`` with ``q = e/(1+e)`` and base
    factor ``l = T**(1/(1 + e - e*q**(M-1)))``.  Exposed for
    cross-checking against the recursive construction.
    """
    e = epsilon
    q = e / (1.0 + e)
    ell = T ** (1.0 / (1.0 + e - e * q ** (M - 1)))
    return ell ** (1.0 + e - e * q ** (m - 1))


def static_minimax_grid(T: int, M: int, epsilon: float) -> Grid:
    """Tail-exponent-aware grid: ``t_1 = l``, ``t_m = l * t_{m-1}**(e/(1+e))``.

    The base factor ``l = T**(1/(1 + e - e*(e/(1+e))**(M-1)))`` is chosen
    so that the recursion lands exactly on ``t_M = T``.  Points are
    floored, deduplicated, and the final point clamped to exactly ``T``.

    Parameters
    ----------
    T : int
        Horizon, at least 2.
    M : int
        Batch count, ``1 <= M <= T``.
    epsilon : float
        Tail exponent in ``(0, 1]``.

    Returns
    -------
    Grid
        Grid with at most ``M`` batches (fewer if flooring collided).
    """
    _validate_horizon_batches(T, M)
    if not 0.0 < epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in (0, 1], got {epsilon}")
    e = epsilon
    q = e / (1.0 + e)
    ell = T ** (1.0 / (1.0 + e - e * q ** (M - 1)))
    raw = []
    t = ell
    for _ in range(M):
        raw.append(snap_floor(t))
        t = ell * t**q
    return _finalize_points(raw, T, M)


def static_geometric_grid(T: int, M: int) -> Grid:
    """Geometric grid ``t_m = floor(T**(m/M))``, deduplicated.

    Parameters
    ----------
    T : int
        Horizon, at least 2.
    M : int
        Batch count, ``1 <= M <= T``.
    """
    _validate_horizon_batches(T, M)
    raw = [snap_floor(T ** (m / M)) for m in range(1, M + 1)]
    return _finalize_points(raw, T, M)


def min_batches_minimax(T: float, epsilon: float) -> int:
    """Batch budget at which the tail-aware grid matches full adaptivity.

    Returns ``ceil(log(log T) / log((1+e)/e)) + 1``.  Heavier tails
    (smaller ``epsilon``) need fewer batches.

    Parameters
    ----------
    T : float
        Horizon; must exceed ``e`` so the double logarithm is positive.
    epsilon : float
        Tail exponent in ``(0, 1]``.
    """
    if not T > math.e:
        raise ValueError(f"horizon must exceed e for a defined double log, got {T}")
    if not 0.0 < epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in (0, 1], got {epsilon}")
    ratio = math.log(math.log(T)) / math.log((1.0 + epsilon) / epsilon)
    return math.ceil(ratio - 1e-12) + 1


@dataclass(frozen=True)
class DiameterSchedule:
    """Cube-edge lengths and per-cube sample budgets, one pair per batch.

    Edges are exact powers of two (``r[m] = 2**-level``), strictly
    decreasing, so consecutive ratios are integer powers of 2 and cube
    subdivision is exact.  Budgets ``n[m]`` grow as edges shrink.

    Besides the sequences, the parameters that produced the schedule are
    kept so consumers can check consistency.
    """

    r: tuple[float, ...]
    n: tuple[int, ...]
    eta: float
    c1: float
    T: int
    d: int
    d_z: float
    epsilon: float

    def __post_init__(self) -> None:
        if any(b >= a for a, b in zip(self.r, self.r[1:])):
            raise ValueError(f"edge sequence must be strictly decreasing: {self.r}")
        for a, b in zip(self.r, self.r[1:]):
            ratio = a / b
            if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 2:
                raise ValueError(f"edge ratio {ratio} is not an integer power of 2")
        if any(x < 1 for x in self.n):
            raise ValueError(f"sample budgets must be >= 1: {self.n}")

    @property
    def batches(self) -> int:
        return len(self.r)

    def to_dict(self) -> dict:
        return {
            "r": list(self.r),
            "n": list(self.n),
            "eta": self.eta,
            "c1": self.c1,
            "T": self.T,
            "d": self.d,
            "d_z": self.d_z,
            "epsilon": self.epsilon,
        }


def _validate_lipschitz_params(T: int, d: int, d_z: float, epsilon: float) -> None:
    if T < 16:
        raise ValueError(f"horizon must be >= 16, got {T}")
    if d < 1:
        raise ValueError(f"ambient dimension must be >= 1, got {d}")
    if not 0.0 <= d_z <= d:
        raise ValueError(f"zooming dimension must lie in [0, d], got {d_z}")
    if not 0.0 < epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in (0, 1], got {epsilon}")


def diameter_schedule(
    T: int, d: int, d_z: float, epsilon: float, M: int, spec: HeavyTailSpec
) -> DiameterSchedule:
    """Decreasing dyadic edge schedule with per-cube sample budgets.

    The cumulative exponent follows a geometric decay: ``c_1 = (d_z +
    1/e) / ((d+1+1/e) * (d_z+1+1/e)) * log(T / log T)`` and ``c_{i+1} =
    eta * c_i`` with ``eta = (d+1-d_z)/(d+1+1/e)``.  The ``m``-th edge is
    ``2**-round(sum_{i<=m} c_i / log 2)``, clamped so each batch drops at
    least one dyadic level.  The per-cube budget is ``n_m = ceil(3 * c *
    v**(1/e) * log T * r_m**(-(1+e)/e))``, the sample count at which the
    robust estimate is accurate to within one edge length.

    Parameters
    ----------
    T : int
        Horizon, at least 16.
    d : int
        Ambient dimension, at least 1.
    d_z : float
        Zooming dimension, in ``[0, d]``.
    epsilon : float
        Tail exponent in ``(0, 1]``.
    M : int
        Number of schedule entries (batches), at least 1.
    spec : HeavyTailSpec
        Moment certificate supplying ``v`` and the radius constant ``c``.
    """
    _validate_lipschitz_params(T, d, d_z, epsilon)
    if M < 1:
        raise ValueError(f"batch count must be >= 1, got {M}")
    e = epsilon
    inv_e = 1.0 / e
    c1 = (d_z + inv_e) / ((d + 1 + inv_e) * (d_z + 1 + inv_e)) * math.log(T / math.log(T))
    eta = (d + 1 - d_z) / (d + 1 + inv_e)
    levels = []
    cumulative = 0.0
    c_i = c1
    prev_level = 0
    for _ in range(M):
        cumulative += c_i
        c_i *= eta
        level = max(round(cumulative / math.log(2.0)), prev_level + 1)
        levels.append(level)
        prev_level = level
    r = tuple(2.0 ** (-lv) for lv in levels)
    log_T = math.log(T)
    n = tuple(
        math.ceil(3.0 * spec.c * spec.v**inv_e * log_T * edge ** (-(1.0 + e) / e))
        for edge in r
    )
    return DiameterSchedule(r=r, n=n, eta=eta, c1=c1, T=T, d=d, d_z=d_z, epsilon=e)


def default_lipschitz_batches(T: int, d: int, d_z: float, epsilon: float) -> int:
    """Batch budget minimizing the continuum policy's regret bound.

    Returns ``ceil(log log(T / log T) / log((d+1+1/e)/(d+1-d_z)) + 1)``.

    Parameters as in :func:`diameter_schedule`.
    """
    _validate_lipschitz_params(T, d, d_z, epsilon)
    inner = math.log(math.log(T / math.log(T)))
    decay = math.log((d + 1 + 1.0 / epsilon) / (d + 1 - d_z))
    return math.ceil(inner / decay - 1e-12) + 1

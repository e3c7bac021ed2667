"""Samplable heavy-tailed reward distributions and problem instances.

The discrete two-point laws below realize the worst cases for mean
estimation under a bounded ``(1 + epsilon)``-th moment: almost all mass
sits at 0 while a small mass at a large value carries the mean.  A
shifted Pareto variant provides a continuous stress test, and a point
mass gives a degenerate control.  Finite-arm instances bundle one
distribution per arm together with exact means and gaps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import integrate

from batchtail._numeric import snap_floor

__all__ = [
    "TwoPointNu",
    "ThreePointV",
    "ParetoShifted",
    "PointMass",
    "RewardDistribution",
    "FiniteArmInstance",
    "AdaptiveLowerboundFamily",
    "nu_law",
    "mean",
    "atoms",
    "centered_moment",
    "sample",
    "sample_many",
    "verify_certificate",
    "make_static_lowerbound_family",
    "make_adaptive_lowerbound_family",
    "dist_to_dict",
    "dist_from_dict",
    "instance_to_dict",
    "instance_from_dict",
]


# ---------------------------------------------------------------------------
# Distribution variants
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TwoPointNu:
    """Two-point law on ``{0, 1/gamma}`` with mean ``delta0 + delta``.

    With ``gamma = (2 * delta0)**(1/epsilon)``, the upper point
    ``1/gamma`` carries mass ``gamma**(1+epsilon) - delta0*gamma +
    delta*gamma`` and the origin carries the rest.  The mean is exactly
    ``delta0 + delta`` while the centered ``(1 + epsilon)``-th moment
    stays bounded, which makes the law a canonical hard case for
    heavy-tailed mean estimation.

    Parameters
    ----------
    delta0 : float
        Base mean level, in ``(0, 1/2)``.
    delta : float
        Mean increment, zero or in ``(0, 1/2)``.
    epsilon : float
        Tail exponent in ``(0, 1]``.
    """

    delta0: float
    delta: float
    epsilon: float

    def __post_init__(self) -> None:
        if not 0.0 < self.delta0 < 0.5:
            raise ValueError(f"delta0 must lie in (0, 1/2), got {self.delta0}")
        if not (self.delta == 0.0 or 0.0 < self.delta < 0.5):
            raise ValueError(f"delta must be 0 or in (0, 1/2), got {self.delta}")
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        p = self.upper_mass
        if not 0.0 <= p <= 1.0:
            raise ValueError(
                f"parameters give upper mass {p} outside [0, 1]: "
                f"delta0={self.delta0}, delta={self.delta}, epsilon={self.epsilon}"
            )

    @property
    def gamma(self) -> float:
        return (2.0 * self.delta0) ** (1.0 / self.epsilon)

    @property
    def upper_value(self) -> float:
        return 1.0 / self.gamma

    @property
    def upper_mass(self) -> float:
        g = self.gamma
        return g ** (1.0 + self.epsilon) - self.delta0 * g + self.delta * g

    def mean(self) -> float:
        return self.delta0 + self.delta

    def atoms(self) -> list[tuple[float, float]]:
        p = self.upper_mass
        return [(0.0, 1.0 - p), (self.upper_value, p)]


@dataclass(frozen=True)
class ThreePointV:
    """Two-point law on ``{0, 1/r}`` with mean ``(3 - multiplier) * gap``.

    The implied gap unit is ``gap = r**epsilon / 3``; the upper mass is
    ``r**(1+epsilon) - multiplier * gap * r``.  Multipliers 0, 1, 2 give
    means ``3*gap``, ``2*gap``, ``gap``, i.e. three laws separated by
    exactly one and two gap units while remaining nearly
    indistinguishable on bounded samples.

    Parameters
    ----------
    r : float
        Inverse of the upper support point, in ``(0, 1]``.
    multiplier : int
        Number of gap units subtracted from the largest mean; 0, 1 or 2.
    epsilon : float
        Tail exponent in ``(0, 1]``.
    """

    r: float
    multiplier: int
    epsilon: float

    def __post_init__(self) -> None:
        if not self.r > 0.0:
            raise ValueError(f"r must be positive, got {self.r}")
        if self.multiplier not in (0, 1, 2):
            raise ValueError(f"multiplier must be 0, 1 or 2, got {self.multiplier}")
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        p = self.upper_mass
        if not 0.0 <= p <= 1.0:
            raise ValueError(
                f"parameters give upper mass {p} outside [0, 1]: "
                f"r={self.r}, multiplier={self.multiplier}, epsilon={self.epsilon}"
            )

    @property
    def gap(self) -> float:
        return self.r**self.epsilon / 3.0

    @property
    def upper_value(self) -> float:
        return 1.0 / self.r

    @property
    def upper_mass(self) -> float:
        return self.r ** (1.0 + self.epsilon) - self.multiplier * self.gap * self.r

    def mean(self) -> float:
        return (3 - self.multiplier) * self.gap

    def atoms(self) -> list[tuple[float, float]]:
        p = self.upper_mass
        return [(0.0, 1.0 - p), (self.upper_value, p)]


@dataclass(frozen=True)
class ParetoShifted:
    """Shifted Pareto law: ``shift + Y`` with ``P(Y > y) = (scale/y)**shape``.

    Continuous heavy tail on ``[shift + scale, inf)``.  The mean is
    ``shift + shape * scale / (shape - 1)``; centered moments of order
    ``>= shape`` are infinite.

    Parameters
    ----------
    shape : float
        Tail index, greater than 1 so the mean exists.
    scale : float
        Pareto scale (the minimum of the unshifted law), positive.
    shift : float
        Additive location shift.
    """

    shape: float
    scale: float
    shift: float = 0.0

    def __post_init__(self) -> None:
        if not self.shape > 1.0:
            raise ValueError(f"shape must exceed 1 for a finite mean, got {self.shape}")
        if not self.scale > 0.0:
            raise ValueError(f"scale must be positive, got {self.scale}")

    def mean(self) -> float:
        return self.shift + self.shape * self.scale / (self.shape - 1.0)


@dataclass(frozen=True)
class PointMass:
    """Degenerate law placing all mass at ``value``."""

    value: float

    def mean(self) -> float:
        return self.value

    def atoms(self) -> list[tuple[float, float]]:
        return [(self.value, 1.0)]


RewardDistribution = Union[TwoPointNu, ThreePointV, ParetoShifted, PointMass]

_DISCRETE = (TwoPointNu, ThreePointV, PointMass)


# ---------------------------------------------------------------------------
# Common operations
# ---------------------------------------------------------------------------


def nu_law(delta0: float, delta: float, epsilon: float) -> TwoPointNu:
    """Construct the two-point law with mean exactly ``delta0 + delta``.

    See :class:`TwoPointNu`; raises ``ValueError`` if the parameters
    produce a probability mass outside ``[0, 1]``.
    """
    return TwoPointNu(delta0=delta0, delta=delta, epsilon=epsilon)


def mean(dist: RewardDistribution) -> float:
    """Closed-form mean of any distribution variant."""
    return dist.mean()


def atoms(dist: RewardDistribution) -> list[tuple[float, float]]:
    """``(value, probability)`` pairs of a discrete variant.

    Raises ``TypeError`` for continuous variants.
    """
    if not isinstance(dist, _DISCRETE):
        raise TypeError(f"{type(dist).__name__} has no finite support")
    return dist.atoms()


def centered_moment(dist: RewardDistribution, order: float) -> float:
    """Centered absolute moment ``E|X - mean|**order``.

    Exact summation for discrete variants; adaptive quadrature with
    relative error below ``1e-8`` for the shifted Pareto.  Raises
    ``ValueError`` for a Pareto whose moment of the requested order is
    infinite (``shape <= order``).

    Parameters
    ----------
    dist : RewardDistribution
        The distribution.
    order : float
        Moment order, positive; typically ``1 + epsilon``.

    Returns
    -------
    float
        The centered moment.
    """
    if not order > 0.0:
        raise ValueError(f"order must be positive, got {order}")
    if isinstance(dist, _DISCRETE):
        mu = dist.mean()
        return float(sum(p * abs(v - mu) ** order for v, p in dist.atoms()))
    if isinstance(dist, ParetoShifted):
        if dist.shape <= order:
            raise ValueError(
                f"centered moment of order {order} is infinite for shape {dist.shape}"
            )
        a, s = dist.shape, dist.scale
        m = a * s / (a - 1.0)  # mean of the unshifted law; shift cancels

        def integrand(y: float) -> float:
            return abs(y - m) ** order * a * s**a / y ** (a + 1.0)

        left, _ = integrate.quad(integrand, s, m, epsabs=0.0, epsrel=1e-10)
        right, _ = integrate.quad(integrand, m, np.inf, epsabs=0.0, epsrel=1e-10)
        return left + right
    raise TypeError(f"unsupported distribution {type(dist).__name__}")


def sample_many(dist: RewardDistribution, rng: np.random.Generator, size: int) -> np.ndarray:
    """Draw ``size`` i.i.d. samples as a float array.

    Each non-degenerate draw consumes exactly one uniform variate from
    ``rng`` (inverse-CDF sampling), so identical generator states yield
    bit-identical sequences regardless of how draws are blocked.
    ``PointMass`` consumes no randomness.
    """
    if size < 0:
        raise ValueError(f"size must be nonnegative, got {size}")
    if isinstance(dist, PointMass):
        return np.full(size, dist.value, dtype=float)
    if isinstance(dist, (TwoPointNu, ThreePointV)):
        u = rng.random(size)
        return np.where(u < dist.upper_mass, dist.upper_value, 0.0)
    if isinstance(dist, ParetoShifted):
        u = rng.random(size)
        return dist.shift + dist.scale * (1.0 - u) ** (-1.0 / dist.shape)
    raise TypeError(f"unsupported distribution {type(dist).__name__}")


def sample(dist: RewardDistribution, rng: np.random.Generator) -> float:
    """One i.i.d. draw; see :func:`sample_many` for the determinism contract."""
    return float(sample_many(dist, rng, 1)[0])


def verify_certificate(
    dists: list[RewardDistribution], epsilon: float, v: float
) -> float:
    """Check ``E|X - mean|**(1+epsilon) <= v`` for every distribution.

    Returns the largest centered moment found; raises ``ValueError`` if
    any distribution violates the bound (or has an infinite moment).
    """
    worst = 0.0
    for i, dist in enumerate(dists):
        m = centered_moment(dist, 1.0 + epsilon)
        if m > v * (1.0 + 1e-9):
            raise ValueError(
                f"distribution {i} ({type(dist).__name__}) has centered "
                f"{1 + epsilon:g}-moment {m:.6g} > certified bound {v:g}"
            )
        worst = max(worst, m)
    return worst


# ---------------------------------------------------------------------------
# Finite-arm instances
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FiniteArmInstance:
    """A bandit instance: one reward distribution per arm.

    Means, the optimal arm (lowest index among maximizers) and the gaps
    ``mu_star - mu_i`` are computed on construction and cached.

    Parameters
    ----------
    arms : tuple of RewardDistribution
        Per-arm reward laws, at least one.
    label : str
        Free-form identifier used in serialized families.
    """

    arms: tuple[RewardDistribution, ...]
    label: str = ""
    means: tuple[float, ...] = field(init=False, compare=False)
    star: int = field(init=False, compare=False)
    gaps: tuple[float, ...] = field(init=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "arms", tuple(self.arms))
        if len(self.arms) == 0:
            raise ValueError("instance needs at least one arm")
        means = tuple(a.mean() for a in self.arms)
        star = int(np.argmax(means))
        gaps = tuple(means[star] - m for m in means)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "star", star)
        object.__setattr__(self, "gaps", gaps)

    @property
    def n_arms(self) -> int:
        return len(self.arms)

    @property
    def mu_star(self) -> float:
        return self.means[self.star]

    # -- simulation interface (see harness.simulate) --

    def gap_array(self) -> np.ndarray:
        return np.asarray(self.gaps, dtype=float)

    def gap_of(self, action: int) -> float:
        return self.gaps[action]

    def action_seed_ints(self, action: int) -> tuple[int, ...]:
        """Stable integer key identifying an arm's random stream."""
        return (1, int(action))

    def sample_block(self, action: int, rng: np.random.Generator, size: int) -> np.ndarray:
        return sample_many(self.arms[action], rng, size)


# ---------------------------------------------------------------------------
# Lower-bound families
# ---------------------------------------------------------------------------


def make_static_lowerbound_family(
    K: int, delta: float, epsilon: float
) -> list[FiniteArmInstance]:
    """Hard family for fixed communication grids.

    Builds ``K`` instances over the laws of :class:`ThreePointV` with
    ``r = (3*delta)**(1/epsilon)``: instance 1 plays multiplier 1 on arm
    1 and multiplier 2 elsewhere; instance ``i >= 2`` additionally puts
    multiplier 0 on arm ``i``.  In every instance arm ``i`` is the
    unique optimum and every suboptimal pull loses at least ``delta``.

    Parameters
    ----------
    K : int
        Number of arms, at least 2.
    delta : float
        Gap unit, in ``(0, 1/3]`` so that ``r <= 1``.
    epsilon : float
        Tail exponent in ``(0, 1]``.

    Returns
    -------
    list of FiniteArmInstance
        Instances labeled ``P[1]`` through ``P[K]``.
    """
    if K < 2:
        raise ValueError(f"need at least 2 arms, got {K}")
    if not 0.0 < epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in (0, 1], got {epsilon}")
    if not 0.0 < delta <= 1.0 / 3.0:
        raise ValueError(f"gap must lie in (0, 1/3] for valid masses, got {delta}")
    r = (3.0 * delta) ** (1.0 / epsilon)
    v1 = ThreePointV(r=r, multiplier=0, epsilon=epsilon)
    v2 = ThreePointV(r=r, multiplier=1, epsilon=epsilon)
    v3 = ThreePointV(r=r, multiplier=2, epsilon=epsilon)
    family = []
    for i in range(1, K + 1):
        arms: list[RewardDistribution] = [v2] + [v3] * (K - 1)
        if i >= 2:
            arms[i - 1] = v1
        family.append(FiniteArmInstance(arms=tuple(arms), label=f"P[{i}]"))
    return family


@dataclass(frozen=True)
class AdaptiveLowerboundFamily:
    """Hard family for adaptive grids, plus its phase bookkeeping.

    Attributes
    ----------
    instances : tuple of FiniteArmInstance
        ``(M-1)*(K-1) + 1`` instances labeled ``P[j,k]`` and ``P[M]``.
    phase_horizons : tuple of int
        The per-phase reference times ``T_1 <= ... <= T_M = T``.
    phase_gaps : tuple of float
        The per-phase gap levels, decreasing in ``j``.
    collisions : tuple of (int, int)
        1-based index pairs ``(j, j+1)`` whose phase horizons coincide
        after flooring (possible at small ``T``); reported, not merged.
    """

    instances: tuple[FiniteArmInstance, ...]
    phase_horizons: tuple[int, ...]
    phase_gaps: tuple[float, ...]
    collisions: tuple[tuple[int, int], ...]


def make_adaptive_lowerbound_family(
    K: int, M: int, T: int, epsilon: float, delta0: float = 0.25
) -> AdaptiveLowerboundFamily:
    """Hard family for adaptively chosen grids.

    Phase horizons and gap levels follow the displayed schedules

    ``T_j = floor(T**((1+e-e*q**(j-1)) / (1+e-e*q**(M-1))))`` with
    ``q = epsilon/(1+epsilon)``, and

    ``gap_j = K**(e/(1+e)) * T**(-(e/(1+e)) * (1+e-e*q**(j-2)) / (1+e-e*q**(M-1)))
    / ((12*sqrt(alpha)*M)**(2e/(1+e)) * 2**((3e+1)/(1+e)))`` with
    ``alpha = 6 * 2**(1/epsilon)``.

    Instance ``P[j,k]`` (``j < M``, ``k < K``) gives arm ``k`` the
    two-point law with mean increment ``gap_j + gap_M``, the last arm
    increment ``gap_M``, and all other arms increment 0; ``P[M]`` only
    raises the last arm.  All laws share the base level ``delta0``.

    Parameters
    ----------
    K : int
        Number of arms, at least 2.
    M : int
        Number of batches, at least 2.
    T : int
        Horizon, at least 2.
    epsilon : float
        Tail exponent in ``(0, 1]``.
    delta0 : float
        Base mean level of every arm, in ``(0, 1/2)``.

    Returns
    -------
    AdaptiveLowerboundFamily
        Instances plus phase horizons, gap levels, and collisions.
    """
    if K < 2:
        raise ValueError(f"need at least 2 arms, got {K}")
    if M < 2:
        raise ValueError(f"need at least 2 batches, got {M}")
    if T < 2:
        raise ValueError(f"horizon must be >= 2, got {T}")
    if not 0.0 < epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in (0, 1], got {epsilon}")
    e = epsilon
    q = e / (1.0 + e)
    denom = 1.0 + e - e * q ** (M - 1)
    horizons = tuple(
        snap_floor(T ** ((1.0 + e - e * q ** (j - 1)) / denom)) for j in range(1, M + 1)
    )
    alpha = 6.0 * 2.0 ** (1.0 / e)
    scale = (12.0 * math.sqrt(alpha) * M) ** (2.0 * e / (1.0 + e)) * 2.0 ** (
        (3.0 * e + 1.0) / (1.0 + e)
    )
    gaps = tuple(
        K ** (e / (1.0 + e))
        * T ** (-(e / (1.0 + e)) * (1.0 + e - e * q ** (j - 2)) / denom)
        / scale
        for j in range(1, M + 1)
    )
    bound = K ** (e / (1.0 + e))
    for j, g in enumerate(gaps, start=1):
        if not 0.0 < g <= bound:
            raise ValueError(
                f"phase gap {j} = {g:.6g} outside (0, {bound:.6g}]; "
                f"choose a larger T or smaller M"
            )
    gap_m = gaps[M - 1]
    collisions = tuple(
        (j, j + 1) for j in range(1, M) if horizons[j - 1] == horizons[j]
    )

    def law(increment: float) -> TwoPointNu:
        return nu_law(delta0, increment, epsilon)

    instances = []
    for j in range(1, M):
        for k in range(1, K):
            arms: list[RewardDistribution] = [law(0.0)] * K
            arms[k - 1] = law(gaps[j - 1] + gap_m)
            arms[K - 1] = law(gap_m)
            instances.append(FiniteArmInstance(arms=tuple(arms), label=f"P[{j},{k}]"))
    tail_arms: list[RewardDistribution] = [law(0.0)] * K
    tail_arms[K - 1] = law(gap_m)
    instances.append(FiniteArmInstance(arms=tuple(tail_arms), label=f"P[{M}]"))
    return AdaptiveLowerboundFamily(
        instances=tuple(instances),
        phase_horizons=horizons,
        phase_gaps=gaps,
        collisions=collisions,
    )


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

_KINDS = {
    TwoPointNu: "two_point_nu",
    ThreePointV: "three_point_v",
    ParetoShifted: "pareto_shifted",
    PointMass: "point_mass",
}


def dist_to_dict(dist: RewardDistribution) -> dict:
    """JSON-ready description of a distribution (variant tag + parameters)."""
    if isinstance(dist, TwoPointNu):
        params = {"delta0": dist.delta0, "delta": dist.delta, "epsilon": dist.epsilon}
    elif isinstance(dist, ThreePointV):
        params = {"r": dist.r, "multiplier": dist.multiplier, "epsilon": dist.epsilon}
    elif isinstance(dist, ParetoShifted):
        params = {"shape": dist.shape, "scale": dist.scale, "shift": dist.shift}
    elif isinstance(dist, PointMass):
        params = {"value": dist.value}
    else:
        raise TypeError(f"unsupported distribution {type(dist).__name__}")
    return {"kind": _KINDS[type(dist)], **params}


def dist_from_dict(doc: dict) -> RewardDistribution:
    """Inverse of :func:`dist_to_dict`; bit-exact round trip."""
    kinds = {v: k for k, v in _KINDS.items()}
    doc = dict(doc)
    kind = doc.pop("kind", None)
    if kind not in kinds:
        raise ValueError(f"unknown distribution kind {kind!r}")
    return kinds[kind](**doc)


def instance_to_dict(instance: FiniteArmInstance) -> dict:
    return {
        "arms": [dist_to_dict(a) for a in instance.arms],
        "label": instance.label,
    }


def instance_from_dict(doc: dict) -> FiniteArmInstance:
    return FiniteArmInstance(
        arms=tuple(dist_from_dict(a) for a in doc["arms"]),
        label=doc.get("label", ""),
    )

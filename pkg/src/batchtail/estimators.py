"""Robust mean estimation for heavy-tailed samples.

Rewards are only assumed to have a bounded centered moment of order
``1 + epsilon`` with ``epsilon`` in ``(0, 1]``; the variance may be
infinite.  Under that assumption the median-of-means estimator
concentrates at a sub-Gaussian-like rate, and :func:`concentration_radius`
gives the matching deviation bound used by the elimination policies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "HeavyTailSpec",
    "EstimatorConfig",
    "mom_group_count",
    "median_of_block_means",
    "median_of_means",
    "median_of_means_batch",
    "concentration_radius",
]


# ---------------------------------------------------------------------------
# Moment certificates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HeavyTailSpec:
    """Moment certificate for a reward distribution.

    Parameters
    ----------
    epsilon : float
        Tail exponent in ``(0, 1]``; the centered moment of order
        ``1 + epsilon`` is assumed finite.
    v : float
        Upper bound on the centered ``(1 + epsilon)``-th moment,
        ``E|X - mu|**(1 + epsilon) <= v``.
    c : float
        Positive constant scaling the confidence radius.  Larger values
        widen every deviation bound and elimination threshold.
    """

    epsilon: float
    v: float
    c: float = 12.0

    def __post_init__(self) -> None:
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        if not self.v > 0.0:
            raise ValueError(f"moment bound v must be positive, got {self.v}")
        if not self.c > 0.0:
            raise ValueError(f"radius constant c must be positive, got {self.c}")


@dataclass(frozen=True)
class EstimatorConfig:
    """Confidence level for a single mean estimate.

    Parameters
    ----------
    delta : float
        Failure probability in ``(0, 1)``: the deviation bound is allowed
        to fail with probability at most ``delta``.
    """

    delta: float

    def __post_init__(self) -> None:
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")


def _validate_delta(delta: float) -> None:
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")


# ---------------------------------------------------------------------------
# Median of means
# ---------------------------------------------------------------------------


def mom_group_count(n: int, delta: float) -> int:
    """Number of blocks used by median-of-means at sample size ``n``.

    The count is ``floor(min(8 * log(e**(1/8) / delta), n / 2))`` clamped
    to at least 1, so it never exceeds ``n / 2`` (every block keeps at
    least two samples whenever ``n >= 2``) and grows logarithmically in
    ``1 / delta``.

    Parameters
    ----------
    n : int
        Sample size, at least 1.
    delta : float
        Failure probability in ``(0, 1)``.

    Returns
    -------
    int
        Block count ``k`` with ``1 <= k <= max(1, n // 2)``.
    """
    if n < 1:
        raise ValueError(f"sample size must be >= 1, got {n}")
    _validate_delta(delta)
    raw = min(8.0 * math.log(math.exp(0.125) / delta), n / 2.0)
    return max(1, math.floor(raw))


def median_of_block_means(samples: np.ndarray, groups: int) -> float:
    """Median of block means with an explicit block count.

    The first ``groups * (n // groups)`` samples are split in order into
    ``groups`` contiguous blocks of equal size; trailing samples that do
    not fill a block are discarded.  For an even number of blocks the
    median is the average of the two central order statistics.

    Parameters
    ----------
    samples : array-like
        One-dimensional sample array with ``len(samples) >= groups``.
    groups : int
        Number of blocks, at least 1.

    Returns
    -------
    float
        The median of the block means.
    """
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"samples must be one-dimensional, got shape {arr.shape}")
    if groups < 1:
        raise ValueError(f"group count must be >= 1, got {groups}")
    if arr.size < groups:
        raise ValueError(
            f"need at least one sample per group: n={arr.size}, groups={groups}"
        )
    block = arr.size // groups
    means = arr[: groups * block].reshape(groups, block).mean(axis=1)
    return float(np.median(means))


def median_of_means(samples: np.ndarray, delta: float) -> float:
    """Median-of-means estimate of the mean at confidence ``1 - delta``.

    The block count is :func:`mom_group_count`; see
    :func:`median_of_block_means` for the splitting convention.  With one
    block this reduces to the empirical mean.

    Parameters
    ----------
    samples : array-like
        One-dimensional, nonempty sample array.
    delta : float
        Failure probability in ``(0, 1)``.

    Returns
    -------
    float
        Robust estimate of the mean.
    """
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"samples must be one-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError("samples must be nonempty")
    k = mom_group_count(arr.size, delta)
    return median_of_block_means(arr, k)


def median_of_means_batch(samples: np.ndarray, delta: float) -> np.ndarray:
    """Row-wise median-of-means over a 2-d array of independent trials.

    Equivalent to ``[median_of_means(row, delta) for row in samples]``
    but vectorized; every row has the same length, hence the same block
    count.

    Parameters
    ----------
    samples : array-like
        Array of shape ``(trials, n)`` with ``n >= 1``.
    delta : float
        Failure probability in ``(0, 1)``.

    Returns
    -------
    numpy.ndarray
        One estimate per row, shape ``(trials,)``.
    """
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"samples must be two-dimensional, got shape {arr.shape}")
    if arr.shape[1] == 0:
        raise ValueError("rows must be nonempty")
    trials, n = arr.shape
    k = mom_group_count(n, delta)
    block = n // k
    means = arr[:, : k * block].reshape(trials, k, block).mean(axis=2)
    return np.median(means, axis=1)


# ---------------------------------------------------------------------------
# Deviation bound
# ---------------------------------------------------------------------------


def concentration_radius(n: int, spec: HeavyTailSpec, delta: float) -> float:
    """Deviation bound for median-of-means at sample size ``n``.

    Returns ``v**(1/(1+eps)) * (c * log(1/delta) / n)**(eps/(1+eps))``:
    with probability at least ``1 - delta`` the estimate lies within this
    radius of the true mean.  The radius shrinks as ``n**(-eps/(1+eps))``
    and degrades gracefully as the tail gets heavier (``eps`` smaller).

    Parameters
    ----------
    n : int
        Sample size, at least 1.
    spec : HeavyTailSpec
        Moment certificate ``(epsilon, v, c)``.
    delta : float
        Failure probability in ``(0, 1)``.

    Returns
    -------
    float
        The confidence radius.
    """
    if n < 1:
        raise ValueError(f"sample size must be >= 1, got {n}")
    _validate_delta(delta)
    eps = spec.epsilon
    exponent = eps / (1.0 + eps)
    return spec.v ** (1.0 / (1.0 + eps)) * (spec.c * math.log(1.0 / delta) / n) ** exponent

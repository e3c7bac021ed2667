"""Batched successive elimination for finitely many heavy-tailed arms.

The policy plays the active arms in a balanced round robin within each
batch, re-estimates every arm's mean at the batch boundary with the
median-of-means estimator, discards arms whose estimate trails the best
by more than a tail-aware threshold, and commits to the empirical best
survivor for the final clean-up batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from batchtail.estimators import (
    HeavyTailSpec,
    median_of_means,
)
from batchtail.grids import Grid
from batchtail.harness import RegretTrace, simulate
from batchtail.rewards import FiniteArmInstance

__all__ = [
    "BaseHState",
    "BaseHPolicy",
    "elimination_threshold",
    "plan_batch",
    "ingest_batch",
    "run_base_h",
]


def elimination_threshold(tau: int, spec: HeavyTailSpec, T: int, K: int) -> float:
    """Estimate-difference cutoff at which an arm is discarded.

    Returns ``2**((1+2e)/(1+e)) * v**(1/(1+e)) * (c*log(T*K)/tau)**(e/(1+e))``
    — twice the concentration radius of a median-of-means estimate built
    from ``tau`` samples at confidence ``(T*K)**-2``, so that two
    in-radius estimates can only differ this much when the true gap is
    real.

    Parameters
    ----------
    tau : int
        Common per-arm sample count, at least 1.
    spec : HeavyTailSpec
        Moment certificate ``(epsilon, v, c)``.
    T : int
        Horizon (enters through the confidence level).
    K : int
        Arm count (idem).
    """
    if tau < 1:
        raise ValueError(f"sample count must be >= 1, got {tau}")
    e = spec.epsilon
    return (
        2.0 ** ((1.0 + 2.0 * e) / (1.0 + e))
        * spec.v ** (1.0 / (1.0 + e))
        * (spec.c * math.log(T * K) / tau) ** (e / (1.0 + e))
    )


@dataclass
class BaseHState:
    """Mutable per-run state of the elimination policy.

    Attributes
    ----------
    active : list of int
        Surviving arm indices, ascending; never empty.
    pulls : numpy.ndarray
        Lifetime pull count per arm (including eliminated arms).
    buffers : list of numpy.ndarray
        Chronological rewards per arm; ``len(buffers[i]) == pulls[i]``.
    committed : int or None
        Arm played exclusively once the clean-up phase starts.
    pending_plan : numpy.ndarray or None
        The schedule returned by the last :func:`plan_batch`, consumed
        by :func:`ingest_batch` to attribute rewards to arms.
    """

    active: list[int]
    pulls: np.ndarray
    buffers: list[np.ndarray]
    committed: int | None = None
    pending_plan: np.ndarray | None = None

    @classmethod
    def fresh(cls, n_arms: int) -> "BaseHState":
        if n_arms < 1:
            raise ValueError(f"need at least one arm, got {n_arms}")
        return cls(
            active=list(range(n_arms)),
            pulls=np.zeros(n_arms, dtype=np.int64),
            buffers=[np.empty(0, dtype=float) for _ in range(n_arms)],
        )


def plan_batch(state: BaseHState, t_start: int, t_end: int) -> np.ndarray:
    """Schedule of arm pulls for the batch ``(t_start, t_end]``.

    Before commitment this is a balanced round robin: arms currently
    behind on pulls are served first (ascending pull count, ties by
    ascending index), after which play cycles over the active arms in
    index order.  Per-arm counts after the batch differ by at most 1.
    After commitment every step plays the committed arm.  The schedule
    depends only on pre-batch state, never on in-batch rewards.

    Parameters
    ----------
    state : BaseHState
        Current policy state; its ``pending_plan`` is set to the result.
    t_start, t_end : int
        Batch boundaries with ``t_end > t_start``.

    Returns
    -------
    numpy.ndarray
        One arm index per step, length ``t_end - t_start``.
    """
    if t_end <= t_start:
        raise ValueError(f"batch must have positive length, got ({t_start}, {t_end}]")
    length = t_end - t_start
    if state.committed is not None:
        plan = np.full(length, state.committed, dtype=np.int64)
        state.pending_plan = plan
        return plan
    if not state.active:
        raise ValueError("active arm set is empty")
    arms = np.asarray(state.active, dtype=np.int64)
    counts = state.pulls[arms].copy()
    prefix_parts = []
    prefix_len = 0
    # serve arms in ascending pull count (ties by index) until balanced;
    # the active set normally has spread <= 1, so one partial sweep
    level = int(counts.min())
    top = int(counts.max())
    while level < top and prefix_len < length:
        wave = arms[counts <= level]
        prefix_parts.append(wave)
        prefix_len += wave.size
        counts[counts <= level] += 1
        level += 1
    prefix = (
        np.concatenate(prefix_parts) if prefix_parts else np.empty(0, dtype=np.int64)
    )
    remaining = length - prefix.size
    if remaining <= 0:
        plan = prefix[:length]
    else:
        reps = -(-remaining // arms.size)  # ceil: whole ascending cycles
        plan = np.concatenate([prefix, np.tile(arms, reps)])[:length]
    state.pending_plan = plan
    return plan


def _absorb(state: BaseHState, rewards: np.ndarray) -> None:
    """Attribute revealed rewards to arms via the pending schedule."""
    if state.pending_plan is None:
        raise ValueError("no pending schedule; call plan_batch first")
    plan = state.pending_plan
    rewards = np.asarray(rewards, dtype=float)
    if rewards.shape != plan.shape:
        raise ValueError(
            f"got {rewards.shape[0] if rewards.ndim else 0} rewards "
            f"for a schedule of length {plan.size}"
        )
    for arm in np.unique(plan):
        chunk = rewards[plan == arm]
        state.buffers[arm] = np.concatenate([state.buffers[arm], chunk])
        state.pulls[arm] += chunk.size
    state.pending_plan = None


def ingest_batch(
    state: BaseHState,
    rewards: np.ndarray,
    spec: HeavyTailSpec,
    delta: float,
    T: int,
    K: int,
    is_penultimate: bool,
) -> BaseHState:
    """Absorb a batch of revealed rewards and update the active set.

    Rewards are attributed to arms via the pending schedule.  With
    ``tau`` the smallest pull count among active arms, each active arm
    is re-estimated by median-of-means over its first ``tau`` samples at
    confidence ``delta``, and every arm whose estimate trails the best
    by at least :func:`elimination_threshold` is discarded (the argmax
    arm always survives).  When ``tau`` is 0 — possible when a batch is
    shorter than the active set — elimination is skipped.  At the
    penultimate boundary the policy commits to the arm with the highest
    estimate over each arm's full sample count (ties to the lowest
    index; arms without samples are skipped, and if no arm has samples
    the lowest active index is committed).

    Parameters
    ----------
    state : BaseHState
        State whose ``pending_plan`` matches ``rewards`` one-to-one.
    rewards : numpy.ndarray
        Revealed rewards in schedule order.
    spec : HeavyTailSpec
        Moment certificate.
    delta : float
        Per-estimate confidence, normally ``(T*K)**-2``.
    T, K : int
        Horizon and arm count (enter the elimination threshold).
    is_penultimate : bool
        Whether this boundary precedes the clean-up batch.

    Returns
    -------
    BaseHState
        The same object, updated in place.
    """
    _absorb(state, rewards)

    if state.committed is not None:
        return state

    tau = int(state.pulls[state.active].min())
    if tau >= 1:
        estimates = {
            arm: median_of_means(state.buffers[arm][:tau], delta)
            for arm in state.active
        }
        best = max(estimates.values())
        cutoff = elimination_threshold(tau, spec, T, K)
        state.active = [arm for arm in state.active if best - estimates[arm] < cutoff]

    if is_penultimate:
        sampled = [arm for arm in state.active if state.pulls[arm] >= 1]
        if not sampled:
            state.committed = state.active[0]
        else:
            full_estimates = {
                arm: median_of_means(state.buffers[arm], delta) for arm in sampled
            }
            best = max(full_estimates.values())
            state.committed = min(a for a in sampled if full_estimates[a] == best)
    return state


class BaseHPolicy:
    """Batched elimination policy bound to a grid and a moment certificate.

    The policy sees only the protocol surface — arm count, grid, and
    revealed rewards — never the instance's true means.

    Parameters
    ----------
    n_arms : int
        Number of arms.
    grid : Grid
        Communication grid; ``grid.horizon`` is the total step count.
    spec : HeavyTailSpec
        Moment certificate used for thresholds.
    """

    def __init__(self, n_arms: int, grid: Grid, spec: HeavyTailSpec):
        self.n_arms = n_arms
        self.grid = grid
        self.spec = spec
        self.state = BaseHState.fresh(n_arms)
        self.estimator_delta = float(grid.horizon * n_arms) ** -2.0
        self._batches_done = 0

    def next_plan(self) -> np.ndarray | None:
        if self._batches_done >= self.grid.batches:
            return None
        points = self.grid.points
        return plan_batch(
            self.state, points[self._batches_done], points[self._batches_done + 1]
        )

    def observe(self, rewards: np.ndarray) -> None:
        self._batches_done += 1
        boundary = self._batches_done
        last_elimination_boundary = self.grid.batches - 1
        if boundary > last_elimination_boundary:
            # final reveal at t_M = T: record rewards, nothing left to plan
            _absorb(self.state, rewards)
            return
        ingest_batch(
            self.state,
            rewards,
            self.spec,
            self.estimator_delta,
            T=self.grid.horizon,
            K=self.n_arms,
            is_penultimate=boundary == last_elimination_boundary,
        )


def run_base_h(
    instance: FiniteArmInstance,
    grid: Grid,
    spec: HeavyTailSpec,
    seed: int,
    *,
    trace_actions: bool = False,
) -> RegretTrace:
    """Run the elimination policy once and return its regret trace.

    Parameters
    ----------
    instance : FiniteArmInstance
        True reward laws (the policy never sees them).
    grid : Grid
        Communication grid whose horizon is the run length.
    spec : HeavyTailSpec
        Moment certificate shared by thresholds and estimates.
    seed : int
        Reward-stream seed; same seed, same trace, bit for bit.
    trace_actions : bool
        Keep the action log on the trace.
    """
    policy = BaseHPolicy(n_arms=instance.n_arms, grid=grid, spec=spec)
    return simulate(
        policy, instance, grid.horizon, seed, trace_actions=trace_actions
    )

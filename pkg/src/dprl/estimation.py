"""Visit counting and Monte-Carlo value estimation from logged trajectories.

Estimates are never imputed: a state or pair with no qualifying visits gets
``nan`` and a ``False`` support flag.  Returns from truncated trajectories
are used as-is, which biases values low by at most ``gamma**len * v_max``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import TrajectoryDataset

FIRST_VISIT = "first-visit"
EVERY_VISIT = "every-visit"
_MODES = (FIRST_VISIT, EVERY_VISIT)


@dataclass
class CountTable:
    """Dataset visit counts per pair and per state.

    ``n_s`` is always the row sum of ``n_sa`` under the same mode, so in
    first-visit mode it counts (trajectory, action-at-state) combinations
    rather than trajectories touching the state.
    """

    n_sa: np.ndarray
    n_s: np.ndarray
    mode: str


@dataclass
class ValueEstimates:
    """Monte-Carlo state and pair values with explicit support masks.

    Attributes:
        v_hat: ``(S,)`` values, ``nan`` where no trajectory visited the state.
        q_hat: ``(S, A)`` values, ``nan`` where the pair was never observed.
        state_support: ``(S,)`` bool, True where ``v_hat`` is defined.
        support_mask: ``(S, A)`` bool, True where ``q_hat`` is defined.
        mode: visit convention the estimates were computed under.
    """

    v_hat: np.ndarray
    q_hat: np.ndarray
    state_support: np.ndarray
    support_mask: np.ndarray
    mode: str


def discounted_suffix_returns(rewards: np.ndarray, gamma: float) -> np.ndarray:
    """``G[t] = sum_k gamma**(k - t) * rewards[k]`` for ``k`` from ``t`` on."""
    rewards = np.asarray(rewards, dtype=np.float64)
    out = np.empty_like(rewards)
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


def _check_mode(mode: str) -> None:
    if mode not in _MODES:
        raise ValueError(f"mode must be one of {_MODES}, got {mode!r}")


def count_visits(dataset: TrajectoryDataset, mode: str = FIRST_VISIT) -> CountTable:
    """Count (state, action) occurrences across the dataset.

    First-visit mode counts each pair at most once per trajectory, at the
    first time that action is taken in that state.
    """
    _check_mode(mode)
    n_sa = np.zeros((dataset.num_states, dataset.num_actions), dtype=np.int64)
    for traj in dataset:
        if mode == FIRST_VISIT:
            seen: set[tuple[int, int]] = set()
            for s, a in zip(traj.states, traj.actions):
                key = (int(s), int(a))
                if key not in seen:
                    seen.add(key)
                    n_sa[key] += 1
        else:
            np.add.at(n_sa, (traj.states, traj.actions), 1)
    return CountTable(n_sa=n_sa, n_s=n_sa.sum(axis=1), mode=mode)


def monte_carlo_estimates(
    dataset: TrajectoryDataset, gamma: float, mode: str = FIRST_VISIT
) -> ValueEstimates:
    """Estimate behavior values by averaging discounted suffix returns.

    In first-visit mode, ``v_hat(s)`` averages one return per trajectory that
    visits ``s`` (from the first visit) and ``q_hat(s, a)`` averages one
    return per trajectory in which ``a`` is taken at ``s`` (from the first
    such time).  Every-visit mode averages over all occurrences.
    """
    _check_mode(mode)
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    num_states, num_actions = dataset.num_states, dataset.num_actions
    v_returns: list[list[float]] = [[] for _ in range(num_states)]
    q_returns: list[list[list[float]]] = [
        [[] for _ in range(num_actions)] for _ in range(num_states)
    ]
    for traj in dataset:
        if len(traj) == 0:
            continue
        suffix = discounted_suffix_returns(traj.rewards, gamma)
        if mode == FIRST_VISIT:
            seen_s: set[int] = set()
            seen_sa: set[tuple[int, int]] = set()
            for t, (s, a) in enumerate(zip(traj.states, traj.actions)):
                s, a = int(s), int(a)
                if s not in seen_s:
                    seen_s.add(s)
                    v_returns[s].append(suffix[t])
                if (s, a) not in seen_sa:
                    seen_sa.add((s, a))
                    q_returns[s][a].append(suffix[t])
        else:
            for t, (s, a) in enumerate(zip(traj.states, traj.actions)):
                v_returns[int(s)].append(suffix[t])
                q_returns[int(s)][int(a)].append(suffix[t])

    v_hat = np.full(num_states, np.nan)
    q_hat = np.full((num_states, num_actions), np.nan)
    for s in range(num_states):
        if v_returns[s]:
            v_hat[s] = np.mean(np.asarray(v_returns[s]))
        for a in range(num_actions):
            if q_returns[s][a]:
                q_hat[s, a] = np.mean(np.asarray(q_returns[s][a]))
    return ValueEstimates(
        v_hat=v_hat,
        q_hat=q_hat,
        state_support=~np.isnan(v_hat),
        support_mask=~np.isnan(q_hat),
        mode=mode,
    )

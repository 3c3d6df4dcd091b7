"""Exact linear-algebra solvers for tabular MDPs.

Everything here works on expected rewards, so results are closed-form values
of the discounted criterion rather than sample estimates.  Terminal states
are pinned to value zero.
"""

from __future__ import annotations

import numpy as np

from .mdp import TabularMdp


def policy_state_values(mdp: TabularMdp, action_rows: np.ndarray) -> np.ndarray:
    """Solve the Bellman evaluation system for a stochastic tabular policy.

    Args:
        mdp: environment supplying transitions, expected rewards and gamma.
        action_rows: ``(S, A)`` row-stochastic action distribution.

    Returns:
        ``(S,)`` state values; exact up to machine precision (direct solve).
    """
    action_rows = np.asarray(action_rows, dtype=np.float64)
    if action_rows.shape != (mdp.num_states, mdp.num_actions):
        raise ValueError("action_rows shape must be (S, A)")
    r_bar = (mdp.rewards.mean() * action_rows).sum(axis=1)
    p_pi = np.einsum("sa,sat->st", action_rows, mdp.transitions)
    system = np.eye(mdp.num_states) - mdp.gamma * p_pi
    rhs = r_bar.copy()
    for t in mdp.terminal_states:
        system[t, :] = 0.0
        system[t, t] = 1.0
        rhs[t] = 0.0
    try:
        return np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError as exc:  # gamma < 1 makes this unreachable
        raise RuntimeError(f"policy evaluation system is singular: {exc}") from exc


def q_from_values(mdp: TabularMdp, values: np.ndarray) -> np.ndarray:
    """One-step lookahead: ``Q(s, a) = r(s, a) + gamma * P(s, a, .) @ V``."""
    values = np.asarray(values, dtype=np.float64).copy()
    for t in mdp.terminal_states:
        values[t] = 0.0
    q = mdp.rewards.mean() + mdp.gamma * mdp.transitions @ values
    for t in mdp.terminal_states:
        q[t, :] = 0.0
    return q


def optimal_values(mdp: TabularMdp) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact policy iteration for the optimal policy of a tabular MDP.

    Returns:
        Tuple ``(v_star, q_star, greedy)`` where ``greedy[s]`` is the
        lowest-index optimal action at ``s``.
    """
    num_states, num_actions = mdp.num_states, mdp.num_actions
    greedy = np.zeros(num_states, dtype=np.int64)
    all_states = np.arange(num_states)
    for _ in range(num_states * num_actions + 1):
        rows = np.zeros((num_states, num_actions))
        rows[all_states, greedy] = 1.0
        values = policy_state_values(mdp, rows)
        q = q_from_values(mdp, values)
        # Hold the incumbent action on (near-)ties; switching on solver
        # noise makes equal-value policies oscillate forever.
        best = np.argmax(q, axis=1)
        improved = q[all_states, best] > q[all_states, greedy] + 1e-10
        if not improved.any():
            ties = q >= q[all_states, best, None] - 1e-9
            return values, q, np.argmax(ties, axis=1)
        greedy = np.where(improved, best, greedy)
    raise RuntimeError("policy iteration failed to stabilize")

"""Shared builders for test fixtures; imported directly by test modules."""

from __future__ import annotations

import numpy as np

from dprl.mdp import (
    BehaviorPolicy,
    RewardSpec,
    TabularMdp,
    Trajectory,
    TrajectoryDataset,
)


def make_traj(states, actions, rewards, seed: int = 0) -> Trajectory:
    return Trajectory(
        states=np.asarray(states, dtype=np.int64),
        actions=np.asarray(actions, dtype=np.int64),
        rewards=np.asarray(rewards, dtype=np.float64),
        seed=seed,
    )


def make_dataset(
    trajectories,
    num_states: int,
    num_actions: int,
    master_seed: int = 0,
) -> TrajectoryDataset:
    return TrajectoryDataset(
        trajectories=list(trajectories),
        num_states=num_states,
        num_actions=num_actions,
        master_seed=master_seed,
    )


def deterministic_chain(
    num_states: int,
    gamma: float = 0.9,
    reward: float = 0.5,
    num_actions: int = 2,
) -> TabularMdp:
    """Line graph: every action moves right; last state is terminal.

    The step reward is ``reward`` everywhere for action 0 and half that for
    action 1, giving something for policies to disagree about.
    """
    transitions = np.zeros((num_states, num_actions, num_states))
    for s in range(num_states):
        nxt = min(s + 1, num_states - 1)
        transitions[s, :, nxt] = 1.0
    means = np.zeros((num_states, num_actions))
    means[:, 0] = reward
    means[:, 1:] = reward / 2.0
    return TabularMdp(
        transitions=transitions,
        rewards=RewardSpec.constant(means),
        gamma=gamma,
        start_state=0,
        terminal_states=frozenset({num_states - 1}),
        r_max=1.0,
        name=f"chain({num_states})",
    )


def three_state_eval_chain() -> tuple[TabularMdp, BehaviorPolicy]:
    """Chain s0 -> s1 -> s2(terminal) with interval rewards, gamma 0.8.

    Closed-form behaviour values under rows (0.6, 0.4):
    V(s1) = 0.42, V(s0) = 0.756, Q(s0, a0) = 0.636, Q(s0, a1) = 0.936.
    """
    transitions = np.zeros((3, 2, 3))
    transitions[0, :, 1] = 1.0
    transitions[1, :, 2] = 1.0
    transitions[2, :, 2] = 1.0
    lo = np.array([[0.2, 0.5], [0.0, 0.3], [0.0, 0.0]])
    hi = np.array([[0.4, 0.7], [1.0, 0.3], [0.0, 0.0]])
    mdp = TabularMdp(
        transitions=transitions,
        rewards=RewardSpec(lo=lo, hi=hi),
        gamma=0.8,
        start_state=0,
        terminal_states=frozenset({2}),
        r_max=1.0,
        name="eval-chain",
    )
    behavior = BehaviorPolicy(np.array([[0.6, 0.4]] * 3))
    return mdp, behavior


def uniform_behavior(num_states: int, num_actions: int) -> BehaviorPolicy:
    rows = np.full((num_states, num_actions), 1.0 / num_actions)
    return BehaviorPolicy(rows)


def random_mdp(
    rng: np.random.Generator,
    num_states: int,
    num_actions: int,
    gamma: float = 0.9,
) -> TabularMdp:
    """Dense random MDP with constant rewards and no terminal states."""
    raw = rng.random((num_states, num_actions, num_states)) ** 3
    transitions = raw / raw.sum(axis=2, keepdims=True)
    means = np.round(rng.random((num_states, num_actions)), 3)
    return TabularMdp(
        transitions=transitions,
        rewards=RewardSpec.constant(means),
        gamma=gamma,
        start_state=0,
        name="random",
    )

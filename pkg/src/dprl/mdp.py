"""Tabular MDP primitives: reward models, behavior policies, trajectory data.

Conventions used throughout the package:

* States and actions are integer indices.
* ``transitions`` is a dense ``(S, A, S)`` tensor of next-state probabilities.
* Rewards are uniform on a per-(state, action) interval ``[lo, hi]``; a
  constant reward is encoded as ``lo == hi``.  Supports always lie inside
  ``[0, r_max]`` so sampled rewards never need clipping.
* Episodes stop on entering a terminal state or at the horizon cap.  Terminal
  states never appear as acted-at steps in a trajectory.
"""

from __future__ import annotations

import json
from bisect import bisect_right
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

_ROW_SUM_TOL = 1e-9


@dataclass
class RewardSpec:
    """Per-(state, action) uniform reward distributions.

    Attributes:
        lo: ``(S, A)`` array of interval lower endpoints.
        hi: ``(S, A)`` array of interval upper endpoints, ``hi >= lo``.
    """

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self) -> None:
        self.lo = np.asarray(self.lo, dtype=np.float64)
        self.hi = np.asarray(self.hi, dtype=np.float64)
        if self.lo.shape != self.hi.shape or self.lo.ndim != 2:
            raise ValueError("reward bounds must be matching (S, A) arrays")
        if np.any(self.hi < self.lo):
            raise ValueError("reward interval has hi < lo")

    def mean(self) -> np.ndarray:
        """Expected reward per (state, action)."""
        return (self.lo + self.hi) / 2.0

    @staticmethod
    def constant(values: np.ndarray) -> "RewardSpec":
        values = np.asarray(values, dtype=np.float64)
        return RewardSpec(lo=values.copy(), hi=values.copy())


@dataclass
class TabularMdp:
    """Finite MDP with dense transition tensor and interval rewards.

    Attributes:
        transitions: ``(S, A, S)`` row-stochastic tensor.
        rewards: reward distributions, support inside ``[0, r_max]``.
        gamma: discount factor in ``(0, 1)``.
        start_state: initial state index.
        terminal_states: states that end an episode on entry.
        r_max: reward scale; ``v_max = r_max / (1 - gamma)`` is finite.
        name: short human-readable descriptor, e.g. ``forest(...)``.
    """

    transitions: np.ndarray
    rewards: RewardSpec
    gamma: float
    start_state: int
    terminal_states: frozenset[int] = field(default_factory=frozenset)
    r_max: float = 1.0
    name: str = ""

    def __post_init__(self) -> None:
        self.transitions = np.asarray(self.transitions, dtype=np.float64)
        if self.transitions.ndim != 3 or self.transitions.shape[0] != self.transitions.shape[2]:
            raise ValueError("transitions must have shape (S, A, S)")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if not np.isfinite(self.r_max) or self.r_max <= 0:
            raise ValueError("r_max must be positive and finite")
        sums = self.transitions.sum(axis=2)
        if np.max(np.abs(sums - 1.0)) > _ROW_SUM_TOL:
            bad = np.unravel_index(int(np.argmax(np.abs(sums - 1.0))), sums.shape)
            raise ValueError(f"transition row {bad} does not sum to 1")
        if np.any(self.transitions < 0.0):
            raise ValueError("transition probabilities must be nonnegative")
        if self.rewards.lo.shape != self.transitions.shape[:2]:
            raise ValueError("reward table shape must match (S, A)")
        if np.any(self.rewards.lo < 0.0) or np.any(self.rewards.hi > self.r_max + 1e-12):
            raise ValueError("reward support must lie inside [0, r_max]")
        if not 0 <= self.start_state < self.num_states:
            raise ValueError("start_state out of range")
        self.terminal_states = frozenset(int(t) for t in self.terminal_states)
        for t in self.terminal_states:
            if not 0 <= t < self.num_states:
                raise ValueError("terminal state out of range")

    @property
    def num_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transitions.shape[1]

    @property
    def v_max(self) -> float:
        return self.r_max / (1.0 - self.gamma)


@dataclass
class BehaviorPolicy:
    """Stationary stochastic data-collection policy over a tabular MDP."""

    action_probabilities: np.ndarray
    kind: str = "tabular-stochastic"

    def __post_init__(self) -> None:
        self.action_probabilities = np.asarray(self.action_probabilities, dtype=np.float64)
        if self.action_probabilities.ndim != 2:
            raise ValueError("action_probabilities must be (S, A)")
        sums = self.action_probabilities.sum(axis=1)
        if np.max(np.abs(sums - 1.0)) > _ROW_SUM_TOL or np.any(self.action_probabilities < 0):
            raise ValueError("every state's action distribution must be a probability row")

    @property
    def num_states(self) -> int:
        return self.action_probabilities.shape[0]

    @property
    def num_actions(self) -> int:
        return self.action_probabilities.shape[1]


@dataclass
class Trajectory:
    """One episode: aligned state/action/reward arrays plus its RNG seed.

    The state entry at position ``t`` is the state an action was taken in;
    the final arrival state (terminal or horizon cutoff) is not recorded.
    """

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    seed: int

    def __post_init__(self) -> None:
        self.states = np.asarray(self.states, dtype=np.int64)
        self.actions = np.asarray(self.actions, dtype=np.int64)
        self.rewards = np.asarray(self.rewards, dtype=np.float64)
        if not (len(self.states) == len(self.actions) == len(self.rewards)):
            raise ValueError("states, actions and rewards must have equal length")

    def __len__(self) -> int:
        return len(self.states)

    def steps(self) -> Iterator[tuple[int, int, float]]:
        for s, a, r in zip(self.states, self.actions, self.rewards):
            yield int(s), int(a), float(r)


@dataclass
class TrajectoryDataset:
    """A batch of trajectories plus provenance needed to regenerate it."""

    trajectories: list[Trajectory]
    num_states: int
    num_actions: int
    mdp_descriptor: str = ""
    behavior_descriptor: str = ""
    master_seed: int = 0

    def __len__(self) -> int:
        return len(self.trajectories)

    def __iter__(self) -> Iterator[Trajectory]:
        return iter(self.trajectories)

    def total_steps(self) -> int:
        return sum(len(t) for t in self.trajectories)


def trajectory_seed(master_seed: int, index: int) -> int:
    """Derive the per-trajectory RNG seed for trajectory ``index``.

    Uses numpy's splittable seed-sequence scheme so any single trajectory can
    be regenerated without simulating its predecessors.
    """
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(index,))
    return int(ss.generate_state(1, np.uint64)[0])


def simulate(
    mdp: TabularMdp,
    policy: BehaviorPolicy,
    num_trajectories: int,
    horizon: int,
    master_seed: int,
) -> TrajectoryDataset:
    """Roll out ``num_trajectories`` independent episodes.

    Args:
        mdp: environment to sample from.
        policy: row-stochastic action distribution per state.
        num_trajectories: episode count, >= 0.
        horizon: hard cap on episode length, >= 1.
        master_seed: root seed; per-trajectory streams are split from it.

    Returns:
        TrajectoryDataset that is bit-identical across repeat calls.
    """
    if policy.num_states != mdp.num_states or policy.num_actions != mdp.num_actions:
        raise ValueError("policy shape does not match the MDP")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if num_trajectories < 0:
        raise ValueError("num_trajectories must be >= 0")

    num_actions = mdp.num_actions
    num_states = mdp.num_states
    # Python lists + bisect beat per-step numpy calls at these sizes.
    behavior_cdf = np.cumsum(policy.action_probabilities, axis=1).tolist()
    transition_cdf = np.cumsum(mdp.transitions, axis=2).tolist()
    lo = mdp.rewards.lo.tolist()
    span = (mdp.rewards.hi - mdp.rewards.lo).tolist()
    terminal = mdp.terminal_states

    trajectories: list[Trajectory] = []
    for i in range(num_trajectories):
        seed = trajectory_seed(master_seed, i)
        rng = np.random.default_rng(seed)
        draws = rng.random((horizon, 3))
        states: list[int] = []
        actions: list[int] = []
        rewards: list[float] = []
        s = mdp.start_state
        for t in range(horizon):
            if s in terminal:
                break
            u_a, u_r, u_s = draws[t]
            a = min(bisect_right(behavior_cdf[s], u_a), num_actions - 1)
            r = lo[s][a] + u_r * span[s][a]
            ns = min(bisect_right(transition_cdf[s][a], u_s), num_states - 1)
            states.append(s)
            actions.append(a)
            rewards.append(r)
            s = ns
        trajectories.append(Trajectory(states=states, actions=actions, rewards=rewards, seed=seed))

    return TrajectoryDataset(
        trajectories=trajectories,
        num_states=mdp.num_states,
        num_actions=mdp.num_actions,
        mdp_descriptor=mdp.name,
        behavior_descriptor=policy.kind,
        master_seed=master_seed,
    )


def save_dataset(dataset: TrajectoryDataset, path: str | Path) -> None:
    """Write one JSON object per trajectory: ``{"seed": ..., "steps": [[s, a, r], ...]}``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for traj in dataset.trajectories:
            steps = [[int(s), int(a), float(r)] for s, a, r in traj.steps()]
            fh.write(json.dumps({"seed": traj.seed, "steps": steps}) + "\n")


def load_dataset(
    path: str | Path,
    num_states: int | None = None,
    num_actions: int | None = None,
    mdp_descriptor: str = "",
    behavior_descriptor: str = "",
    master_seed: int = 0,
) -> TrajectoryDataset:
    """Read a line-delimited trajectory file written by :func:`save_dataset`.

    State/action space sizes are inferred from the data when not supplied.
    """
    trajectories: list[Trajectory] = []
    max_state = -1
    max_action = -1
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            steps = record["steps"]
            states = [int(x[0]) for x in steps]
            actions = [int(x[1]) for x in steps]
            rewards = [float(x[2]) for x in steps]
            if states:
                max_state = max(max_state, max(states))
                max_action = max(max_action, max(actions))
            trajectories.append(
                Trajectory(states=states, actions=actions, rewards=rewards, seed=int(record["seed"]))
            )
    return TrajectoryDataset(
        trajectories=trajectories,
        num_states=num_states if num_states is not None else max_state + 1,
        num_actions=num_actions if num_actions is not None else max_action + 1,
        mdp_descriptor=mdp_descriptor,
        behavior_descriptor=behavior_descriptor,
        master_seed=master_seed,
    )

"""Tabular baseline learners: SPIBB-style, density-filtered, and cloning.

All three train on the same logged datasets as the decision-point pipeline
and output full per-state action distributions, so they plug into the same
exact evaluator.  Model-based pieces share one maximum-likelihood model of
the MDP; pairs never observed get an all-zero transition row, which behaves
like a transition to a zero-value sink.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .estimation import EVERY_VISIT, count_visits
from .mdp import BehaviorPolicy, TrajectoryDataset


@dataclass
class MleModel:
    """Empirical MDP estimate from a dataset.

    ``n_sa`` counts every reward observation; ``transition_counts`` only
    steps with a recorded successor, so a trajectory's final step (whose
    arrival state is not logged) contributes a reward but no transition.
    """

    p_hat: np.ndarray
    r_hat: np.ndarray
    n_sa: np.ndarray
    transition_counts: np.ndarray
    total_steps: int


@dataclass
class BaselinePolicy:
    """Stochastic tabular policy produced by a baseline learner."""

    action_probabilities: np.ndarray
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.action_probabilities = np.asarray(self.action_probabilities, dtype=np.float64)

    def act_distribution(self, state: int) -> np.ndarray:
        return self.action_probabilities[state]

    def to_json(self) -> str:
        payload = {
            "format": "dprl-policy",
            "kind": self.kind,
            "params": self.params,
            "rows": [[float(p) for p in row] for row in self.action_probabilities],
        }
        return json.dumps(payload, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "BaselinePolicy":
        payload = json.loads(text)
        if "rows" not in payload:
            raise ValueError("not a stochastic-row policy file")
        return BaselinePolicy(
            action_probabilities=np.array(payload["rows"], dtype=np.float64),
            kind=payload.get("kind", "unknown"),
            params=payload.get("params", {}),
        )

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json() + "\n", encoding="utf-8")

    @staticmethod
    def load(path: str | Path) -> "BaselinePolicy":
        return BaselinePolicy.from_json(Path(path).read_text(encoding="utf-8"))


def policy_rows(policy) -> np.ndarray:
    """Accept a behavior policy, baseline policy or raw (S, A) array."""
    if isinstance(policy, np.ndarray):
        return np.asarray(policy, dtype=np.float64)
    if isinstance(policy, (BehaviorPolicy, BaselinePolicy)):
        return policy.action_probabilities
    raise TypeError(f"cannot extract action rows from {type(policy).__name__}")


def fit_mle_model(
    dataset: TrajectoryDataset,
    num_states: int | None = None,
    num_actions: int | None = None,
) -> MleModel:
    """Maximum-likelihood transition and mean-reward tables."""
    num_states = num_states if num_states is not None else dataset.num_states
    num_actions = num_actions if num_actions is not None else dataset.num_actions
    transition_counts = np.zeros((num_states, num_actions, num_states), dtype=np.int64)
    n_sa = np.zeros((num_states, num_actions), dtype=np.int64)
    reward_sums = np.zeros((num_states, num_actions))
    for traj in dataset:
        states, actions, rewards = traj.states, traj.actions, traj.rewards
        np.add.at(n_sa, (states, actions), 1)
        np.add.at(reward_sums, (states, actions), rewards)
        if len(states) > 1:
            np.add.at(transition_counts, (states[:-1], actions[:-1], states[1:]), 1)
    successor_totals = transition_counts.sum(axis=2)
    p_hat = np.zeros_like(transition_counts, dtype=np.float64)
    np.divide(
        transition_counts,
        successor_totals[:, :, None],
        out=p_hat,
        where=successor_totals[:, :, None] > 0,
    )
    r_hat = np.zeros_like(reward_sums)
    np.divide(reward_sums, n_sa, out=r_hat, where=n_sa > 0)
    return MleModel(
        p_hat=p_hat,
        r_hat=r_hat,
        n_sa=n_sa,
        transition_counts=transition_counts,
        total_steps=dataset.total_steps(),
    )


def _evaluate_rows_on_model(model: MleModel, rows: np.ndarray, gamma: float) -> np.ndarray:
    r_pi = (model.r_hat * rows).sum(axis=1)
    p_pi = np.einsum("sa,sat->st", rows, model.p_hat)
    return np.linalg.solve(np.eye(len(r_pi)) - gamma * p_pi, r_pi)


def train_spibb(
    dataset: TrajectoryDataset,
    behavior,
    n_wedge,
    gamma: float,
    model: MleModel | None = None,
    max_iterations: int = 200,
) -> BaselinePolicy:
    """Constrained policy iteration keeping behavior mass on rare pairs.

    Probability mass on pairs with fewer than ``n_wedge`` observations is
    copied from ``behavior`` (true rows, or an estimate such as a cloned
    policy); the remaining mass concentrates on the best sufficiently
    observed action under the learned model.  ``n_wedge=inf`` therefore
    returns the behavior exactly, and ``n_wedge=1`` on full coverage is
    plain greedy policy iteration on the learned model.
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    if model is None:
        model = fit_mle_model(dataset)
    behavior_rows = policy_rows(behavior)
    num_states, num_actions = behavior_rows.shape
    observed_enough = model.n_sa >= n_wedge

    free_lists = [np.nonzero(observed_enough[s])[0] for s in range(num_states)]

    def rows_for(chosen: np.ndarray) -> np.ndarray:
        out = behavior_rows.copy()
        for s in range(num_states):
            if chosen[s] >= 0:
                free = free_lists[s]
                mass = behavior_rows[s, free].sum()
                out[s, free] = 0.0
                out[s, chosen[s]] += mass
        return out

    # chosen[s] = -1 marks states whose whole row stays behavior mass.
    chosen = np.full(num_states, -1, dtype=np.int64)
    rows = behavior_rows.copy()
    for _ in range(max_iterations):
        values = _evaluate_rows_on_model(model, rows, gamma)
        q = model.r_hat + gamma * model.p_hat @ values
        new_chosen = chosen.copy()
        for s in range(num_states):
            free = free_lists[s]
            if len(free) == 0:
                continue
            best = int(free[np.argmax(q[s, free])])
            # Hold the incumbent on near-ties; flipping between equal-value
            # allocations would never reach exact stability.
            if chosen[s] < 0 or q[s, best] > q[s, chosen[s]] + 1e-12:
                new_chosen[s] = best
        if np.array_equal(new_chosen, chosen):
            break
        chosen = new_chosen
        rows = rows_for(chosen)
    else:
        raise RuntimeError("constrained policy iteration did not stabilize")

    label = "true" if isinstance(behavior, BehaviorPolicy) else "estimated"
    return BaselinePolicy(
        action_probabilities=rows,
        kind="spibb",
        params={"n_wedge": float(n_wedge), "behavior": label},
    )


def train_pqi(
    dataset: TrajectoryDataset,
    density_threshold: float,
    gamma: float,
    model: MleModel | None = None,
) -> BaselinePolicy:
    """Plan on the learned model after discarding low-density pairs.

    Pairs whose empirical visit density falls below ``density_threshold``
    are filtered: they earn nothing and lead nowhere, i.e. their value is
    pessimistically zero.  Exact policy iteration on the filtered model
    yields a deterministic policy over surviving pairs; a state with no
    surviving pair falls back to its empirically most frequent action, and
    unseen states fall back to uniform.
    """
    if not 0.0 < density_threshold < 1.0:
        raise ValueError("density_threshold must lie in (0, 1)")
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    if model is None:
        model = fit_mle_model(dataset)
    num_states, num_actions = model.n_sa.shape
    if model.total_steps == 0:
        raise ValueError("dataset holds no steps")
    density = model.n_sa / model.total_steps
    surviving = density >= density_threshold

    r_mod = np.where(surviving, model.r_hat, 0.0)
    p_mod = np.where(surviving[:, :, None], model.p_hat, 0.0)

    # Per-state choice set: surviving actions, else the majority fallback.
    choice_sets: list[np.ndarray] = []
    seen = model.n_sa.sum(axis=1) > 0
    for s in range(num_states):
        if surviving[s].any():
            choice_sets.append(np.nonzero(surviving[s])[0])
        elif seen[s]:
            choice_sets.append(np.array([int(np.argmax(model.n_sa[s]))]))
        else:
            choice_sets.append(np.arange(num_actions))

    policy = np.array([c[0] for c in choice_sets], dtype=np.int64)
    for _ in range(num_states * num_actions + 1):
        r_pi = r_mod[np.arange(num_states), policy]
        p_pi = p_mod[np.arange(num_states), policy]
        values = np.linalg.solve(np.eye(num_states) - gamma * p_pi, r_pi)
        q = r_mod + gamma * p_mod @ values
        new_policy = policy.copy()
        changed = False
        for s, c in enumerate(choice_sets):
            best = int(c[int(np.argmax(q[s, c]))])
            # Switch only on strict improvement; ties keep the incumbent.
            if q[s, best] > q[s, policy[s]] + 1e-12:
                new_policy[s] = best
                changed = True
        if not changed:
            break
        policy = new_policy
    else:
        raise RuntimeError("filtered policy iteration did not stabilize")

    rows = np.zeros((num_states, num_actions))
    for s in range(num_states):
        if surviving[s].any() or seen[s]:
            rows[s, policy[s]] = 1.0
        else:
            rows[s, :] = 1.0 / num_actions
    return BaselinePolicy(
        action_probabilities=rows,
        kind="pqi",
        params={"density_threshold": density_threshold},
    )


def train_behavior_clone(
    dataset: TrajectoryDataset,
    num_states: int | None = None,
    num_actions: int | None = None,
) -> BaselinePolicy:
    """Per-state empirical action frequencies; uniform at unseen states."""
    num_states = num_states if num_states is not None else dataset.num_states
    num_actions = num_actions if num_actions is not None else dataset.num_actions
    counts = count_visits(dataset, mode=EVERY_VISIT)
    n_sa = np.zeros((num_states, num_actions))
    src = counts.n_sa
    n_sa[: src.shape[0], : src.shape[1]] = src
    rows = np.full((num_states, num_actions), 1.0 / num_actions)
    visited = n_sa.sum(axis=1) > 0
    rows[visited] = n_sa[visited] / n_sa[visited].sum(axis=1, keepdims=True)
    return BaselinePolicy(action_probabilities=rows, kind="behavior-clone", params={})

"""Exact policy evaluation, tail-risk summaries and seeded experiments.

A learned policy is always evaluated composed with the true logging policy:
wherever it defers, the logging policy acts.  Values are computed by a
direct Bellman solve on the true MDP, so per-seed results are deterministic
functions of the learned policy alone; a Monte-Carlo rollout estimator is
provided as a cross-check.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .baselines import (
    BaselinePolicy,
    train_behavior_clone,
    train_pqi,
    train_spibb,
)
from .discrete import DecisionPointPolicy, train_decision_point_policy
from .estimation import FIRST_VISIT
from .mdp import BehaviorPolicy, TabularMdp, simulate
from .solvers import policy_state_values


@dataclass
class MixedPolicy:
    """A learned policy backed by the logging policy at deferred states."""

    learned: DecisionPointPolicy | BaselinePolicy | None
    behavior: BehaviorPolicy

    def rows(self) -> np.ndarray:
        base = self.behavior.action_probabilities
        if self.learned is None:
            return base.copy()
        if isinstance(self.learned, DecisionPointPolicy):
            rows = base.copy()
            for s, a in self.learned.verdicts.items():
                rows[s, :] = 0.0
                rows[s, a] = 1.0
            return rows
        return np.asarray(self.learned.action_probabilities, dtype=np.float64).copy()


def exact_value(mdp: TabularMdp, policy: MixedPolicy) -> float:
    """Exact discounted start-state value of the composed policy."""
    return float(policy_state_values(mdp, policy.rows())[mdp.start_state])


def rollout_returns(
    mdp: TabularMdp,
    policy: MixedPolicy,
    rollouts: int,
    seed: int,
    horizon: int = 200,
) -> np.ndarray:
    """Discounted start-state returns of independent rollouts."""
    if rollouts < 1:
        raise ValueError("rollouts must be >= 1")
    rows = policy.rows()
    sampler = BehaviorPolicy(action_probabilities=rows, kind="rollout-mixture")
    dataset = simulate(mdp, sampler, rollouts, horizon, seed)
    out = np.empty(rollouts)
    for i, traj in enumerate(dataset):
        powers = mdp.gamma ** np.arange(len(traj))
        out[i] = float(np.dot(powers, traj.rewards))
    return out


def mc_value(
    mdp: TabularMdp,
    policy: MixedPolicy,
    rollouts: int,
    seed: int,
    horizon: int = 200,
) -> float:
    """Sample-mean cross-check of :func:`exact_value` (biased by truncation)."""
    return float(rollout_returns(mdp, policy, rollouts, seed, horizon=horizon).mean())


def cvar(values, alpha: float) -> float:
    """Mean of the worst ``ceil(alpha * len)`` values.

    ``alpha=1`` is the plain mean.  Sorting is stable so tied values cannot
    reorder across runs.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("values must be non-empty")
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    ordered = np.sort(values, kind="stable")
    k = math.ceil(alpha * values.size)
    return float(ordered[:k].mean())


@dataclass
class AlgorithmSpec:
    """One trainable entry of an experiment: a name, a label and parameters.

    Names: ``dprl``, ``spibb``, ``pqi``, ``behavior_clone``, ``behavior``.
    """

    name: str
    label: str
    params: dict = field(default_factory=dict)


@dataclass
class ExperimentResult:
    """Per-seed exact values and defer fractions for each algorithm label."""

    labels: list[str]
    seeds: list[int]
    values: dict[str, list[float]]
    defer_fractions: dict[str, list[float]]
    failures: dict[str, list[int]]
    config_hash: str = ""

    def finite_values(self, label: str) -> np.ndarray:
        vals = np.asarray(self.values[label], dtype=np.float64)
        return vals[np.isfinite(vals)]

    def cvar(self, label: str, alpha: float = 0.05) -> float:
        return cvar(self.finite_values(label), alpha)

    def mean_value(self, label: str) -> float:
        return float(self.finite_values(label).mean())

    def mean_defer_fraction(self, label: str) -> float:
        vals = np.asarray(self.defer_fractions[label], dtype=np.float64)
        finite = vals[np.isfinite(vals)]
        return float(finite.mean()) if finite.size else float("nan")

    def summary(self, alpha: float = 0.05) -> dict:
        out: dict = {"config_hash": self.config_hash, "num_seeds": len(self.seeds), "algorithms": {}}
        for label in self.labels:
            finite = self.finite_values(label)
            out["algorithms"][label] = {
                "cvar_5": cvar(finite, alpha) if finite.size else float("nan"),
                "mean_value": float(finite.mean()) if finite.size else float("nan"),
                "mean_defer_fraction": self.mean_defer_fraction(label),
                "num_failures": len(self.failures.get(label, [])),
            }
        return out


def _actionable_states(mdp: TabularMdp) -> int:
    return mdp.num_states - len(mdp.terminal_states)


def train_algorithm(
    spec: AlgorithmSpec,
    dataset,
    mdp: TabularMdp,
    behavior: BehaviorPolicy,
) -> tuple[DecisionPointPolicy | BaselinePolicy | None, float]:
    """Train one algorithm on a dataset; returns (policy, defer fraction)."""
    params = dict(spec.params)
    if spec.name == "dprl":
        policy = train_decision_point_policy(
            dataset,
            n_wedge=int(params.pop("n_wedge")),
            gamma=mdp.gamma,
            tail_mode=params.pop("tail_mode", "absorb"),
            tol=float(params.pop("tol", 1e-8)),
            count_mode=params.pop("count_mode", FIRST_VISIT),
        )
        defer = 1.0 - len(policy.verdicts) / max(1, _actionable_states(mdp))
        return policy, defer
    if spec.name == "spibb":
        source = params.pop("behavior", "true")
        if source == "true":
            reference = behavior
        elif source == "estimated":
            reference = train_behavior_clone(dataset, mdp.num_states, mdp.num_actions)
        else:
            raise ValueError("spibb behavior must be 'true' or 'estimated'")
        policy = train_spibb(
            dataset,
            reference,
            n_wedge=params.pop("n_wedge"),
            gamma=mdp.gamma,
        )
        return policy, 0.0
    if spec.name == "pqi":
        policy = train_pqi(
            dataset,
            density_threshold=float(params.pop("density_threshold")),
            gamma=mdp.gamma,
        )
        return policy, 0.0
    if spec.name == "behavior_clone":
        return train_behavior_clone(dataset, mdp.num_states, mdp.num_actions), 0.0
    if spec.name == "behavior":
        return None, 1.0
    raise ValueError(f"unknown algorithm {spec.name!r}")


def _run_single_seed(args) -> dict[str, tuple[float, float, bool]]:
    mdp, behavior, algorithms, seed, num_trajectories, horizon = args
    dataset = simulate(mdp, behavior, num_trajectories, horizon, seed)
    out: dict[str, tuple[float, float, bool]] = {}
    for spec in algorithms:
        try:
            learned, defer = train_algorithm(spec, dataset, mdp, behavior)
            value = exact_value(mdp, MixedPolicy(learned, behavior))
            out[spec.label] = (value, defer, False)
        except Exception:
            out[spec.label] = (float("nan"), float("nan"), True)
    return out


def run_reliability_experiment(
    mdp: TabularMdp,
    behavior: BehaviorPolicy,
    algorithms: list[AlgorithmSpec],
    num_seeds: int,
    num_trajectories: int,
    horizon: int,
    master_seed: int,
    jobs: int = 1,
    config_hash: str = "",
) -> ExperimentResult:
    """Repeat dataset draw, training and exact evaluation over seeds.

    Seed ``i`` uses master seed ``master_seed + i``; every algorithm in the
    list trains on the same per-seed dataset.  Results are assembled in seed
    order, so output is byte-identical no matter how many worker processes
    run the seeds.  A training failure marks that (algorithm, seed) cell as
    missing instead of aborting the experiment.
    """
    if num_seeds < 0:
        raise ValueError("num_seeds must be >= 0")
    labels = [spec.label for spec in algorithms]
    if len(set(labels)) != len(labels):
        raise ValueError("algorithm labels must be unique")
    seeds = [master_seed + i for i in range(num_seeds)]
    payloads = [(mdp, behavior, algorithms, seed, num_trajectories, horizon) for seed in seeds]
    if jobs > 1 and payloads:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_seed = list(pool.map(_run_single_seed, payloads))
    else:
        per_seed = [_run_single_seed(p) for p in payloads]

    values: dict[str, list[float]] = {label: [] for label in labels}
    defer_fractions: dict[str, list[float]] = {label: [] for label in labels}
    failures: dict[str, list[int]] = {label: [] for label in labels}
    for i, row in enumerate(per_seed):
        for label in labels:
            value, defer, failed = row[label]
            values[label].append(value)
            defer_fractions[label].append(defer)
            if failed:
                failures[label].append(seeds[i])
    return ExperimentResult(
        labels=labels,
        seeds=seeds,
        values=values,
        defer_fractions=defer_fractions,
        failures=failures,
        config_hash=config_hash,
    )

"""Decision-point policy improvement for tabular datasets.

The pipeline restricts policy improvement to state-action pairs that are
both well supported (visit count at least ``n_wedge``) and no worse than the
logging policy's own estimated state value.  States with no such action
defer to the logging policy at run time.  Over the decision-point states an
elevated semi-Markov model is built from consecutive first visits within
each trajectory, and exact policy iteration on that model yields the final
deterministic verdicts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .estimation import (
    FIRST_VISIT,
    CountTable,
    ValueEstimates,
    count_visits,
    monte_carlo_estimates,
)
from .mdp import TrajectoryDataset

TAIL_DROP = "drop"
TAIL_ABSORB = "absorb"
_TAIL_MODES = (TAIL_DROP, TAIL_ABSORB)


@dataclass
class DecisionPointSets:
    """Partition of observed states into decision points and deferrals.

    Attributes:
        advantageous: per decision-point state, the ascending tuple of
            actions passing both the count and the advantage gate.
        decision_states: states with at least one advantageous action.
        defer_states: observed states with none.
        n_wedge: visit-count threshold the sets were built with.
    """

    advantageous: dict[int, tuple[int, ...]]
    decision_states: frozenset[int]
    defer_states: frozenset[int]
    n_wedge: int


@dataclass
class SmdpModel:
    """Empirical semi-Markov model over decision-point states.

    Index ``i`` refers to ``states[i]``; the extra final column indexes the
    virtual absorbing end-of-episode state (zero value).  Cells with zero
    count hold 0 in every table.

    Attributes:
        states: ascending decision-point state ids.
        counts: ``(D, A, D + 1)`` segment counts.
        p_tilde: counts normalized over each ``(state, action)`` row.
        gamma_tilde: mean discount ``gamma**k`` across observed segments.
        r_tilde: mean discounted segment reward per transition.
        r_bar: ``(D, A)`` expected segment reward under ``p_tilde``.
        row_mask: ``(D, A)`` True where any segment was observed.
    """

    states: tuple[int, ...]
    gamma: float
    counts: np.ndarray
    p_tilde: np.ndarray
    gamma_tilde: np.ndarray
    r_tilde: np.ndarray
    r_bar: np.ndarray
    row_mask: np.ndarray
    tail_mode: str


@dataclass
class DecisionPointPolicy:
    """Deterministic verdicts at decision points, deferral elsewhere.

    ``act`` returns an action index for decision states and ``None`` (defer
    to the logging policy) for every other state, observed or not.
    """

    n_wedge: int
    verdicts: dict[int, int]
    defer_states: frozenset[int]
    iterations: int
    provenance: DecisionPointSets | None = None

    def act(self, state: int) -> int | None:
        return self.verdicts.get(int(state))

    def decision_state_ids(self) -> tuple[int, ...]:
        return tuple(sorted(self.verdicts))

    def to_json(self) -> str:
        verdicts: dict[str, object] = {str(s): int(a) for s, a in self.verdicts.items()}
        for s in sorted(self.defer_states):
            verdicts[str(s)] = "DEFER"
        payload = {
            "format": "dprl-policy",
            "kind": "decision-point",
            "n_wedge": self.n_wedge,
            "iterations": self.iterations,
            "decision_states": sorted(int(s) for s in self.verdicts),
            "verdicts": {k: verdicts[k] for k in sorted(verdicts, key=int)},
        }
        return json.dumps(payload, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "DecisionPointPolicy":
        payload = json.loads(text)
        if payload.get("kind") != "decision-point":
            raise ValueError("not a decision-point policy file")
        verdicts = {
            int(s): int(a) for s, a in payload["verdicts"].items() if a != "DEFER"
        }
        defer = frozenset(int(s) for s, a in payload["verdicts"].items() if a == "DEFER")
        return DecisionPointPolicy(
            n_wedge=int(payload["n_wedge"]),
            verdicts=verdicts,
            defer_states=defer,
            iterations=int(payload["iterations"]),
        )

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json() + "\n", encoding="utf-8")

    @staticmethod
    def load(path: str | Path) -> "DecisionPointPolicy":
        return DecisionPointPolicy.from_json(Path(path).read_text(encoding="utf-8"))


def identify_decision_points(
    counts: CountTable, estimates: ValueEstimates, n_wedge: int
) -> DecisionPointSets:
    """Gate actions by visit count and estimated advantage.

    An action qualifies at a state when its count is at least ``n_wedge``
    and its estimated value is at least the state's estimated value (ties
    qualify).  Undefined estimates never qualify.
    """
    if n_wedge < 1:
        raise ValueError("n_wedge must be >= 1")
    eligible = (
        (counts.n_sa >= n_wedge)
        & estimates.support_mask
        & estimates.state_support[:, None]
    )
    advantageous_mask = np.zeros_like(eligible)
    rows, cols = np.nonzero(eligible)
    if rows.size:
        advantageous_mask[rows, cols] = (
            estimates.q_hat[rows, cols] >= estimates.v_hat[rows]
        )
    advantageous: dict[int, tuple[int, ...]] = {}
    for s in np.nonzero(advantageous_mask.any(axis=1))[0]:
        advantageous[int(s)] = tuple(int(a) for a in np.nonzero(advantageous_mask[s])[0])
    observed = set(int(s) for s in np.nonzero(counts.n_s >= 1)[0])
    decision = frozenset(advantageous)
    return DecisionPointSets(
        advantageous=advantageous,
        decision_states=decision,
        defer_states=frozenset(observed - set(decision)),
        n_wedge=n_wedge,
    )


def make_smdp(
    dataset: TrajectoryDataset,
    dp: DecisionPointSets,
    gamma: float,
    tail_mode: str = TAIL_ABSORB,
) -> SmdpModel:
    """Accumulate the elevated transition model over decision points.

    Within each trajectory the first visit of every decision-point state is
    recorded; consecutive recorded times ``(t, t')`` contribute one segment
    keyed by the state-action at ``t`` and the state at ``t'``, carrying the
    discount ``gamma**(t' - t)`` and the discounted reward over steps ``t``
    through ``t' - 1``.  With ``tail_mode="absorb"`` the remainder of each
    trajectory after its last recorded visit becomes a segment into the
    virtual absorbing state, carrying the full discounted tail reward; with
    ``"drop"`` it is discarded.
    """
    if tail_mode not in _TAIL_MODES:
        raise ValueError(f"tail_mode must be one of {_TAIL_MODES}, got {tail_mode!r}")
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    states = tuple(sorted(dp.decision_states))
    pos = {s: i for i, s in enumerate(states)}
    num_dp = len(states)
    num_actions = dataset.num_actions
    counts = np.zeros((num_dp, num_actions, num_dp + 1), dtype=np.int64)
    disc = np.zeros((num_dp, num_actions, num_dp + 1))
    gain = np.zeros((num_dp, num_actions, num_dp + 1))

    for traj in dataset:
        length = len(traj)
        if length == 0 or num_dp == 0:
            continue
        visits: list[int] = []
        seen: set[int] = set()
        for t, s in enumerate(traj.states):
            s = int(s)
            if s in pos and s not in seen:
                seen.add(s)
                visits.append(t)
        if not visits:
            continue
        powers = gamma ** np.arange(length + 1)
        for t, t_next in zip(visits, visits[1:]):
            i = pos[int(traj.states[t])]
            a = int(traj.actions[t])
            j = pos[int(traj.states[t_next])]
            counts[i, a, j] += 1
            disc[i, a, j] += powers[t_next - t]
            gain[i, a, j] += float(np.dot(traj.rewards[t:t_next], powers[: t_next - t]))
        if tail_mode == TAIL_ABSORB:
            t = visits[-1]
            i = pos[int(traj.states[t])]
            a = int(traj.actions[t])
            counts[i, a, num_dp] += 1
            disc[i, a, num_dp] += powers[length - t]
            gain[i, a, num_dp] += float(np.dot(traj.rewards[t:], powers[: length - t]))

    observed = counts > 0
    p_tilde = np.zeros_like(disc)
    gamma_tilde = np.zeros_like(disc)
    r_tilde = np.zeros_like(disc)
    row_totals = counts.sum(axis=2)
    row_mask = row_totals > 0
    np.divide(counts, row_totals[:, :, None], out=p_tilde, where=row_totals[:, :, None] > 0)
    np.divide(disc, counts, out=gamma_tilde, where=observed)
    np.divide(gain, counts, out=r_tilde, where=observed)
    r_bar = (r_tilde * p_tilde).sum(axis=2)
    return SmdpModel(
        states=states,
        gamma=gamma,
        counts=counts,
        p_tilde=p_tilde,
        gamma_tilde=gamma_tilde,
        r_tilde=r_tilde,
        r_bar=r_bar,
        row_mask=row_mask,
        tail_mode=tail_mode,
    )


def smdp_policy_iteration(
    model: SmdpModel,
    dp: DecisionPointSets,
    estimates: ValueEstimates,
    tol: float = 1e-8,
    max_iterations: int | None = None,
    history: list | None = None,
) -> DecisionPointPolicy:
    """Exact policy iteration over the elevated model.

    The value vector is initialized from the logging policy's estimated
    state values and the initial verdict at each decision point is the
    highest-``q_hat`` advantageous action.  Each round alternates an exact
    evaluation solve (per-transition discounts, absorbing tail worth zero)
    with a greedy improvement restricted to the advantageous actions; pairs
    lacking elevated data are scored by their raw ``q_hat``.  Iteration
    stops when the sup-norm value change drops to ``tol`` or the verdicts
    stabilize.  Ties always resolve to the lowest action index.
    """
    states = model.states
    num_dp = len(states)
    if num_dp == 0:
        return DecisionPointPolicy(
            n_wedge=dp.n_wedge,
            verdicts={},
            defer_states=dp.defer_states,
            iterations=0,
            provenance=dp,
        )
    if max_iterations is None:
        max_iterations = max(64, 4 * num_dp * model.p_tilde.shape[1])
    q_hat = estimates.q_hat
    actions = [dp.advantageous[s] for s in states]
    # Discounted transition weights into decision-point columns only; the
    # absorbing column contributes no continuation value.
    weights = model.p_tilde[:, :, :num_dp] * model.gamma_tilde[:, :, :num_dp]

    def evaluate(policy: np.ndarray) -> np.ndarray:
        system = np.eye(num_dp)
        rhs = np.empty(num_dp)
        for i, s in enumerate(states):
            a = policy[i]
            if model.row_mask[i, a]:
                system[i, :] -= weights[i, a]
                rhs[i] = model.r_bar[i, a]
            else:
                rhs[i] = q_hat[s, a]  # no elevated data; pin to the raw estimate
        try:
            return np.linalg.solve(system, rhs)
        except np.linalg.LinAlgError as exc:
            diag = np.abs(np.diag(system) - 1.0)
            worst = states[int(np.argmax(diag))]
            raise RuntimeError(
                f"singular evaluation system; check segment discounts at decision state {worst}"
            ) from exc

    def improve(values: np.ndarray) -> np.ndarray:
        policy = np.empty(num_dp, dtype=np.int64)
        for i, s in enumerate(states):
            best_action = actions[i][0]
            best_score = -np.inf
            for a in actions[i]:
                if model.row_mask[i, a]:
                    score = model.r_bar[i, a] + float(np.dot(weights[i, a], values))
                else:
                    score = q_hat[s, a]
                if score > best_score:
                    best_score = score
                    best_action = a
            policy[i] = best_action
        return policy

    policy = np.array(
        [acts[int(np.argmax([q_hat[s, a] for a in acts]))] for s, acts in zip(states, actions)],
        dtype=np.int64,
    )
    previous = np.array([estimates.v_hat[s] for s in states])
    iterations = 0
    while iterations < max_iterations:
        iterations += 1
        values = evaluate(policy)
        if history is not None:
            history.append((values.copy(), policy.copy()))
        if float(np.max(np.abs(values - previous))) <= tol:
            break
        previous = values
        improved = improve(values)
        if np.array_equal(improved, policy):
            break
        policy = improved
    else:
        raise RuntimeError("semi-Markov policy iteration did not converge")

    return DecisionPointPolicy(
        n_wedge=dp.n_wedge,
        verdicts={int(s): int(a) for s, a in zip(states, policy)},
        defer_states=dp.defer_states,
        iterations=iterations,
        provenance=dp,
    )


def train_decision_point_policy(
    dataset: TrajectoryDataset,
    n_wedge: int,
    gamma: float,
    tail_mode: str = TAIL_ABSORB,
    tol: float = 1e-8,
    count_mode: str = FIRST_VISIT,
) -> DecisionPointPolicy:
    """Count, estimate, gate, elevate and optimize in one call."""
    counts = count_visits(dataset, mode=count_mode)
    estimates = monte_carlo_estimates(dataset, gamma, mode=count_mode)
    dp = identify_decision_points(counts, estimates, n_wedge)
    model = make_smdp(dataset, dp, gamma, tail_mode=tail_mode)
    return smdp_policy_iteration(model, dp, estimates, tol=tol)

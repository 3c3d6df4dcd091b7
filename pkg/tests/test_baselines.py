"""MLE model fitting and the three baseline trainers."""

import numpy as np
import pytest

import oracles
from conftest import make_dataset, make_traj, random_mdp, uniform_behavior
from dprl.baselines import (
    BaselinePolicy,
    fit_mle_model,
    policy_rows,
    train_behavior_clone,
    train_pqi,
    train_spibb,
)
from dprl.envs import build_forest_mdp
from dprl.estimation import EVERY_VISIT, count_visits
from dprl.evaluation import MixedPolicy, exact_value
from dprl.mdp import BehaviorPolicy, simulate

FOREST_BEHAVIOR_ROOT_VALUE = 0.54336744


def every_visit_counts(ds):
    return count_visits(ds, EVERY_VISIT)


class TestMleModel:
    def test_hand_counted_tables(self):
        ds = make_dataset(
            [
                make_traj([0, 1], [0, 0], [0.5, 0.3]),
                make_traj([0], [0], [0.7]),
            ],
            num_states=3,
            num_actions=2,
        )
        model = fit_mle_model(ds)
        assert model.total_steps == 3
        assert model.n_sa[0, 0] == 2 and model.n_sa[1, 0] == 1
        assert model.r_hat[0, 0] == pytest.approx(0.6)
        assert model.r_hat[1, 0] == pytest.approx(0.3)
        # only the first trajectory records a successor for (0, a0)
        assert model.transition_counts[0, 0, 1] == 1
        np.testing.assert_allclose(model.p_hat[0, 0], [0.0, 1.0, 0.0])
        # final steps leave no successor: the row stays an all-zero sink
        np.testing.assert_allclose(model.p_hat[1, 0], 0.0)
        np.testing.assert_allclose(model.p_hat[2], 0.0)

    def test_matches_loop_reconstruction_on_simulated_data(self):
        rng = np.random.default_rng(2)
        mdp = random_mdp(rng, num_states=4, num_actions=3)
        ds = simulate(mdp, uniform_behavior(4, 3), num_trajectories=25, horizon=6, master_seed=8)
        model = fit_mle_model(ds)
        p_hat, r_hat, r_n = oracles.mle_from_dataset_loops(ds, 4, 3)
        np.testing.assert_allclose(model.p_hat, p_hat, atol=1e-12)
        np.testing.assert_allclose(model.r_hat, r_hat, atol=1e-12)
        np.testing.assert_array_equal(model.n_sa, r_n)


class TestBaselinePolicy:
    def test_round_trip(self, tmp_path):
        policy = BaselinePolicy(
            action_probabilities=np.array([[0.25, 0.75]]),
            kind="spibb",
            params={"n_wedge": 3.0, "behavior": "true"},
        )
        path = tmp_path / "p.json"
        policy.save(path)
        back = BaselinePolicy.load(path)
        np.testing.assert_allclose(back.action_probabilities, policy.action_probabilities)
        assert back.kind == "spibb"
        assert back.params == {"n_wedge": 3.0, "behavior": "true"}

    def test_from_json_requires_rows(self):
        with pytest.raises(ValueError):
            BaselinePolicy.from_json('{"kind": "spibb"}')

    def test_policy_rows_accepts_three_forms(self):
        rows = np.array([[0.5, 0.5]])
        np.testing.assert_allclose(policy_rows(rows), rows)
        np.testing.assert_allclose(policy_rows(BehaviorPolicy(rows)), rows)
        np.testing.assert_allclose(
            policy_rows(BaselinePolicy(action_probabilities=rows, kind="x")), rows
        )


class TestSpibb:
    def test_under_observed_everywhere_returns_behavior(self):
        ds = make_dataset([make_traj([0], [0], [0.5])], 2, 2)
        behavior = uniform_behavior(2, 2)
        policy = train_spibb(ds, behavior, n_wedge=5, gamma=0.9)
        np.testing.assert_allclose(
            policy.action_probabilities, behavior.action_probabilities
        )

    def test_infinite_threshold_returns_behavior(self):
        rng = np.random.default_rng(3)
        mdp = random_mdp(rng, 3, 2)
        behavior = uniform_behavior(3, 2)
        ds = simulate(mdp, behavior, num_trajectories=10, horizon=5, master_seed=1)
        policy = train_spibb(ds, behavior, n_wedge=np.inf, gamma=0.9)
        np.testing.assert_array_equal(
            policy.action_probabilities, behavior.action_probabilities
        )

    def test_full_coverage_unit_threshold_is_greedy_model_optimum(self):
        rng = np.random.default_rng(4)
        mdp = random_mdp(rng, 3, 2)
        behavior = uniform_behavior(3, 2)
        ds = simulate(mdp, behavior, num_trajectories=60, horizon=8, master_seed=2)
        model = fit_mle_model(ds)
        assert np.all(model.n_sa >= 1)  # full coverage at this seed
        policy = train_spibb(ds, behavior, n_wedge=1, gamma=0.9)
        # every row is deterministic and model-optimal
        assert np.all(np.isin(policy.action_probabilities, [0.0, 1.0]))
        best_vec, best_rows = oracles.spibb_vertex_enumeration(
            ds, behavior.action_probabilities, 1, 0.9, 3, 2, every_visit_counts
        )
        np.testing.assert_allclose(policy.action_probabilities, best_rows)

    def test_matches_vertex_enumeration_on_five_state_chain(self):
        rng = np.random.default_rng(5)
        mdp = random_mdp(rng, 5, 3, gamma=0.9)
        behavior = uniform_behavior(5, 3)
        ds = simulate(mdp, behavior, num_trajectories=40, horizon=6, master_seed=3)
        policy = train_spibb(ds, behavior, n_wedge=3, gamma=0.9)
        best_vec, _ = oracles.spibb_vertex_enumeration(
            ds, behavior.action_probabilities, 3, 0.9, 5, 3, every_visit_counts
        )
        p_hat, r_hat, _ = oracles.mle_from_dataset_loops(ds, 5, 3)
        # compare full vectors via a loop-built solve
        a_mat = np.eye(5)
        b_vec = np.zeros(5)
        rows = policy.action_probabilities
        for s in range(5):
            for a in range(3):
                if rows[s, a] == 0.0:
                    continue
                b_vec[s] += rows[s, a] * r_hat[s, a]
                a_mat[s] -= 0.9 * rows[s, a] * p_hat[s, a]
        got = np.linalg.solve(a_mat, b_vec)
        np.testing.assert_allclose(got, best_vec, atol=1e-8)

    def test_one_step_grid_audit_at_fine_discretization(self):
        # no feasible 1e-3 reallocation improves any state's one-step value
        rng = np.random.default_rng(6)
        mdp = random_mdp(rng, 4, 3, gamma=0.9)
        behavior = uniform_behavior(4, 3)
        ds = simulate(mdp, behavior, num_trajectories=30, horizon=6, master_seed=4)
        n_wedge = 3
        policy = train_spibb(ds, behavior, n_wedge=n_wedge, gamma=0.9)
        rows = policy.action_probabilities
        p_hat, r_hat, r_n = oracles.mle_from_dataset_loops(ds, 4, 3)
        values = np.linalg.solve(
            np.eye(4) - 0.9 * np.einsum("sa,sap->sp", rows, p_hat),
            (rows * r_hat).sum(axis=1),
        )
        q = r_hat + 0.9 * p_hat @ values
        counts = every_visit_counts(ds)
        for s in range(4):
            free = np.nonzero(counts.n_sa[s] >= n_wedge)[0]
            if len(free) == 0:
                continue
            mass = behavior.action_probabilities[s, free].sum()
            fractions = np.linspace(0.0, 1.0, 1001)
            if len(free) == 1:
                allocations = np.array([[mass]])
            elif len(free) == 2:
                allocations = mass * np.stack([fractions, 1.0 - fractions], axis=1)
            else:
                f0, f1 = np.meshgrid(fractions, fractions, indexing="ij")
                keep = f0 + f1 <= 1.0 + 1e-12
                allocations = mass * np.stack(
                    [f0[keep], f1[keep], 1.0 - f0[keep] - f1[keep]], axis=1
                )
            grid_best = float((allocations @ q[s, free]).max())
            assert float(rows[s, free] @ q[s, free]) >= grid_best - 1e-9

    def test_mass_preservation_and_pinned_rare_pairs(self):
        rng = np.random.default_rng(7)
        for trial in range(10):
            mdp = random_mdp(rng, 4, 3)
            behavior = uniform_behavior(4, 3)
            ds = simulate(
                mdp, behavior, num_trajectories=12, horizon=5, master_seed=50 + trial
            )
            n_wedge = int(rng.integers(1, 6))
            policy = train_spibb(ds, behavior, n_wedge=n_wedge, gamma=0.9)
            rows = policy.action_probabilities
            np.testing.assert_allclose(rows.sum(axis=1), 1.0, atol=1e-9)
            counts = every_visit_counts(ds)
            rare = counts.n_sa < n_wedge
            # rare pairs keep their behavior probability exactly
            np.testing.assert_array_equal(
                rows[rare], behavior.action_probabilities[rare]
            )

    def test_estimated_behavior_label(self):
        ds = make_dataset([make_traj([0, 0], [0, 1], [0.1, 0.2])], 1, 2)
        clone = train_behavior_clone(ds)
        policy = train_spibb(ds, clone, n_wedge=1, gamma=0.9)
        assert policy.params["behavior"] == "estimated"
        true_policy = train_spibb(ds, uniform_behavior(1, 2), n_wedge=1, gamma=0.9)
        assert true_policy.params["behavior"] == "true"

    def test_gamma_validation(self):
        ds = make_dataset([make_traj([0], [0], [0.1])], 1, 1)
        with pytest.raises(ValueError):
            train_spibb(ds, uniform_behavior(1, 1), n_wedge=1, gamma=1.0)


class TestPqi:
    def two_arm_dataset(self):
        trajs = [make_traj([0], [0], [0.1]) for _ in range(10)]
        trajs += [make_traj([0], [1], [0.9]) for _ in range(10)]
        return make_dataset(trajs, num_states=2, num_actions=2)

    def test_greedy_pick_between_dense_arms(self):
        policy = train_pqi(self.two_arm_dataset(), density_threshold=0.1, gamma=0.9)
        np.testing.assert_allclose(policy.action_probabilities[0], [0.0, 1.0])

    def test_threshold_above_every_density_falls_back_to_majority(self):
        policy = train_pqi(self.two_arm_dataset(), density_threshold=0.9, gamma=0.9)
        # both arms filtered; the tie on counts resolves to the lowest index
        np.testing.assert_allclose(policy.action_probabilities[0], [1.0, 0.0])
        # unseen state falls back to uniform
        np.testing.assert_allclose(policy.action_probabilities[1], [0.5, 0.5])

    def test_zero_and_unit_thresholds_rejected(self):
        ds = self.two_arm_dataset()
        for bad in (0.0, 1.0, -0.5):
            with pytest.raises(ValueError):
                train_pqi(ds, density_threshold=bad, gamma=0.9)

    def test_chosen_actions_respect_the_filter(self):
        rng = np.random.default_rng(9)
        mdp = random_mdp(rng, 4, 3)
        ds = simulate(mdp, uniform_behavior(4, 3), num_trajectories=25, horizon=6, master_seed=6)
        model = fit_mle_model(ds)
        density = model.n_sa / model.total_steps
        for b in (0.005, 0.02, 0.08):
            policy = train_pqi(ds, density_threshold=b, gamma=0.9)
            for s in range(4):
                chosen = int(np.argmax(policy.action_probabilities[s]))
                if (density[s] >= b).any():
                    assert density[s, chosen] >= b

    def test_filtered_set_shrinks_as_threshold_grows(self):
        rng = np.random.default_rng(10)
        mdp = random_mdp(rng, 4, 3)
        ds = simulate(mdp, uniform_behavior(4, 3), num_trajectories=25, horizon=6, master_seed=7)
        model = fit_mle_model(ds)
        density = model.n_sa / model.total_steps
        previous = None
        for b in (0.001, 0.01, 0.05, 0.2):
            surviving = frozenset(map(tuple, np.argwhere(density >= b)))
            if previous is not None:
                assert surviving <= previous
            previous = surviving

    def test_forest_failure_mode_across_seeds(self):
        # with thin good-chain coverage the filter zeroes the good arm's
        # continuation, so the plan settles for the middle arm or worse
        mdp, behavior = build_forest_mdp(num_chains=10, depth=3, epsilon=0.1, gamma=0.99)
        failures = 0
        for seed in range(100):
            ds = simulate(mdp, behavior, num_trajectories=100, horizon=10, master_seed=seed)
            policy = train_pqi(ds, density_threshold=0.02, gamma=0.99)
            value = exact_value(mdp, MixedPolicy(learned=policy, behavior=behavior))
            if value <= FOREST_BEHAVIOR_ROOT_VALUE + 1e-9:
                failures += 1
        assert failures >= 80


class TestBehaviorClone:
    def test_observed_frequencies(self):
        ds = make_dataset(
            [make_traj([0, 0, 0], [0, 0, 1], [0.0, 0.0, 0.0])], 2, 2
        )
        clone = train_behavior_clone(ds)
        np.testing.assert_allclose(clone.action_probabilities[0], [2 / 3, 1 / 3])
        np.testing.assert_allclose(clone.action_probabilities[1], [0.5, 0.5])
        np.testing.assert_allclose(clone.action_probabilities.sum(axis=1), 1.0)
        assert clone.kind == "behavior-clone"

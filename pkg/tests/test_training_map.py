import numpy as np
import pytest

from conftest import random_hmm
from trainmap.errors import InputError
from trainmap.hmm import GaussianHmm, forward_filter, viterbi
from trainmap.trajectory import NormalizedTrajectory, NormStats
from trainmap.training_map import (
    annotate_edges,
    export_map,
    map_from_json,
    posterior_gradient,
    prune_transitions,
)


def fd_importance(model, seq, t, k, step=1e-5):
    """Central finite differences of log p(s_t = k | z_{1:t}) wrt z_t."""
    d = model.n_features
    grad = np.empty(d)
    for i in range(d):
        plus = seq.copy()
        plus[t, i] += step
        minus = seq.copy()
        minus[t, i] -= step
        gp, _ = forward_filter(model, plus[: t + 1])
        gm, _ = forward_filter(model, minus[: t + 1])
        grad[i] = (np.log(gp[t, k]) - np.log(gm[t, k])) / (2 * step)
    return np.abs(grad)


def make_traj(obs, seed=0):
    d = obs.shape[1]
    return NormalizedTrajectory(
        seed=seed,
        steps=np.arange(len(obs)),
        observations=obs,
        stats=NormStats(means=np.zeros(d), stds=np.ones(d), window=len(obs)),
        eval_accuracy=[None] * len(obs),
        feature_names=tuple(f"f{i}" for i in range(d)),
    )


def two_state_model(d=3, delta_feature=1, delta=2.0):
    means = np.zeros((2, d))
    means[1, delta_feature] = delta
    return GaussianHmm(
        initial=np.array([1.0, 0.0]),
        transition=np.array([[0.8, 0.2], [0.1, 0.9]]),
        means=means,
        covariances=np.repeat(np.eye(d)[None], 2, axis=0),
        feature_names=tuple(f"f{i}" for i in range(d)),
    )


class TestPosteriorGradient:
    def test_single_state_exactly_zero(self, rng):
        model = random_hmm(rng, k=1, d=4)
        for _ in range(5):
            obs = rng.normal(size=4)
            grad = posterior_gradient(model, np.array([1.0]), obs, 0)
            np.testing.assert_array_equal(grad, np.zeros(4))

    def test_zero_at_mean_with_point_posterior(self, rng):
        model = random_hmm(rng, k=3, d=2)
        filtered = np.array([0.0, 1.0, 0.0])
        grad = posterior_gradient(model, filtered, model.means[1], 1)
        np.testing.assert_allclose(grad, 0.0, atol=1e-12)

    def test_matches_finite_differences(self, rng):
        for _ in range(20):
            k = int(rng.integers(2, 5))
            d = int(rng.integers(2, 7))
            model = random_hmm(rng, k=k, d=d)
            seq = rng.normal(size=(4, d))
            filtered, _ = forward_filter(model, seq)
            t = 3
            state = int(rng.integers(k))
            closed = posterior_gradient(model, filtered[t], seq[t], state)
            approx = fd_importance(model, seq, t, state)
            denom = max(float(np.abs(approx).max()), 1e-12)
            assert float(np.abs(closed - approx).max()) / denom < 1e-4

    def test_rejects_bad_posterior(self, rng):
        model = random_hmm(rng, k=2, d=2)
        with pytest.raises(InputError, match="probability"):
            posterior_gradient(model, np.array([0.7, 0.7]), np.zeros(2), 0)


class TestPruneTransitions:
    def test_single_path(self, rng):
        model = random_hmm(rng, k=3, d=2)
        tmap = prune_transitions(model, [np.array([0, 0, 1])])
        assert tmap.edge(0, 0).observed and tmap.edge(0, 1).observed
        assert tmap.edge(0, 0).probability == pytest.approx(float(model.transition[0, 0]))
        assert not tmap.edge(1, 0).observed
        assert tmap.edge(2, 0).probability == 0.0
        occupancy = {s.id: s.occupancy for s in tmap.states}
        assert occupancy == {0: 2, 1: 1, 2: 0}

    def test_unused_edge_zeroed(self, rng):
        model = random_hmm(rng, k=3, d=2)
        tmap = prune_transitions(model, [np.array([0, 1, 2])])
        assert not tmap.edge(2, 0).observed
        assert tmap.edge(2, 0).probability == 0.0

    def test_soundness_on_random_paths(self, rng):
        model = random_hmm(rng, k=4, d=2)
        paths = [rng.integers(0, 4, size=rng.integers(2, 20)) for _ in range(10)]
        tmap = prune_transitions(model, paths)
        expected = set()
        for p in paths:
            expected.update(zip(p[:-1].tolist(), p[1:].tolist()))
        observed = {(e.source, e.target) for e in tmap.edges if e.observed}
        assert observed == expected

    def test_out_of_range_state(self, rng):
        model = random_hmm(rng, k=2, d=2)
        with pytest.raises(InputError, match="outside"):
            prune_transitions(model, [np.array([0, 5])])


class TestAnnotateEdges:
    def _decode_runs(self, model, seqs, convs=None):
        convs = convs or [None] * len(seqs)
        runs = []
        for i, (obs, conv) in enumerate(zip(seqs, convs)):
            traj = make_traj(obs, seed=i)
            runs.append((traj, viterbi(model, obs), conv))
        return runs

    def test_top_feature_is_separating_one(self, rng):
        model = two_state_model(d=3, delta_feature=1, delta=2.5)
        obs = np.vstack([
            rng.normal(scale=0.2, size=(6, 3)),
            rng.normal(scale=0.2, size=(6, 3)) + model.means[1],
        ])
        runs = self._decode_runs(model, [obs])
        tmap = annotate_edges(model, runs)
        ann = tmap.edge(0, 1).annotation
        assert ann is not None
        assert ann.top_features[0].feature == "f1"
        assert ann.top_features[0].delta == pytest.approx(2.5)
        assert ann.top_features[0].importance >= ann.top_features[-1].importance
        assert ann.runs_with_edge == 1

    def test_convergence_stats_population_std(self, rng):
        model = two_state_model()
        seq = np.vstack([
            rng.normal(scale=0.2, size=(4, 3)),
            rng.normal(scale=0.2, size=(4, 3)) + model.means[1],
        ])
        runs = self._decode_runs(model, [seq, seq.copy()], convs=[1739.0, 1881.0])
        tmap = annotate_edges(model, runs)
        ann = tmap.edge(0, 1).annotation
        assert ann.mean_convergence == pytest.approx(1810.0)
        assert ann.std_convergence == pytest.approx(71.0)
        assert ann.runs_with_edge == 2
        assert tmap.n_runs == 2

    def test_run_counted_once_despite_repeats(self, rng):
        model = two_state_model()
        block_a = rng.normal(scale=0.2, size=(3, 3))
        block_b = rng.normal(scale=0.2, size=(3, 3)) + model.means[1]
        seq = np.vstack([block_a, block_b, block_a + 0.01, block_b + 0.01])
        runs = self._decode_runs(model, [seq])
        path = runs[0][1]
        crossings = sum(1 for t in range(1, len(path)) if path[t - 1] == 0 and path[t] == 1)
        assert crossings == 2  # the construction visits 0 -> 1 twice
        tmap = annotate_edges(model, runs)
        assert tmap.edge(0, 1).annotation.runs_with_edge == 1

    def test_self_loops_not_feature_annotated(self, rng):
        model = two_state_model()
        seq = np.vstack([
            rng.normal(scale=0.2, size=(5, 3)),
            rng.normal(scale=0.2, size=(5, 3)) + model.means[1],
        ])
        tmap = annotate_edges(model, self._decode_runs(model, [seq]))
        assert tmap.edge(0, 0).annotation.top_features == []
        assert tmap.edge(0, 0).annotation.runs_with_edge == 1

    def test_permutation_invariance(self, rng):
        model = random_hmm(rng, k=3, d=3, mean_scale=4.0)
        seqs = [rng.normal(size=(12, 3)) + model.means[rng.integers(3)] for _ in range(4)]
        base = annotate_edges(model, self._decode_runs(model, seqs))

        perm = [2, 0, 1]  # new index of old state i is perm.index(i)
        permuted_model = GaussianHmm(
            initial=model.initial[perm],
            transition=model.transition[np.ix_(perm, perm)],
            means=model.means[perm],
            covariances=model.covariances[perm],
            feature_names=model.feature_names,
        )
        relabeled = annotate_edges(permuted_model, self._decode_runs(permuted_model, seqs))
        inv = [perm.index(j) for j in range(3)]
        for e in base.edges:
            twin = relabeled.edge(inv[e.source], inv[e.target])
            assert twin.observed == e.observed
            assert twin.probability == pytest.approx(e.probability)
            if e.annotation and e.annotation.top_features:
                assert [f.feature for f in twin.annotation.top_features] == [
                    f.feature for f in e.annotation.top_features
                ]
                np.testing.assert_allclose(
                    [f.importance for f in twin.annotation.top_features],
                    [f.importance for f in e.annotation.top_features],
                    rtol=1e-9,
                )


class TestExport:
    def _simple_map(self, rng):
        model = two_state_model()
        obs = np.vstack([
            rng.normal(scale=0.2, size=(4, 3)),
            rng.normal(scale=0.2, size=(4, 3)) + model.means[1],
        ])
        traj = make_traj(obs)
        return annotate_edges(model, [(traj, viterbi(model, obs), 100.0)])

    def test_dot_nodes_only_without_edges(self, rng):
        model = two_state_model()
        # single-state paths produce only the self loop on state 0
        obs = rng.normal(scale=0.2, size=(4, 3))
        traj = make_traj(obs)
        tmap = annotate_edges(model, [(traj, np.zeros(4, dtype=int), None)])
        dot = export_map(tmap, "dot")
        assert "s0 ->" in dot  # self loop
        assert "s1 ->" not in dot
        assert 's1 [label="1\\n(n=0)"];' in dot

    def test_dot_label_format(self, rng):
        dot = export_map(self._simple_map(rng), "dot")
        assert "digraph training_map" in dot
        assert "↑" in dot  # arrows present
        assert "| 1/1" in dot

    def test_deterministic_bytes(self, rng):
        tmap = self._simple_map(rng)
        assert export_map(tmap, "dot") == export_map(tmap, "dot")
        assert export_map(tmap, "json") == export_map(tmap, "json")

    def test_json_roundtrip_equal(self, rng):
        tmap = self._simple_map(rng)
        back = map_from_json(export_map(tmap, "json"))
        assert back == tmap

    def test_unknown_format(self, rng):
        with pytest.raises(InputError, match="unknown format"):
            export_map(self._simple_map(rng), "svg")

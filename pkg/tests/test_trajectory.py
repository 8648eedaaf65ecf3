import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trainmap.errors import InputError
from trainmap.metrics import MetricVector
from trainmap.trajectory import (
    NORMALIZATION_WINDOW,
    build_trajectory,
    group_by_seed,
    normalize,
    select_features,
)

NAMES = ("a", "b", "c")


def rows_from(seed, steps, values, evals=None):
    evals = evals if evals is not None else [None] * len(steps)
    return [
        MetricVector(seed=seed, step=s, eval_accuracy=e, values=np.asarray(v, dtype=float))
        for s, v, e in zip(steps, values, evals)
    ]


class TestBuildTrajectory:
    def test_sorts_by_step(self):
        rows = rows_from(0, [10, 0, 20], [[1, 1, 1], [0, 0, 0], [2, 2, 2]])
        traj = build_trajectory(rows, NAMES)
        np.testing.assert_array_equal(traj.steps, [0, 10, 20])
        np.testing.assert_array_equal(traj.observations[:, 0], [0, 1, 2])

    def test_duplicate_step(self):
        rows = rows_from(0, [5, 5], [[0, 0, 0], [1, 1, 1]])
        with pytest.raises(InputError, match="duplicate step 5"):
            build_trajectory(rows, NAMES)

    def test_too_short(self):
        with pytest.raises(InputError, match="at least 2"):
            build_trajectory(rows_from(0, [0], [[1, 2, 3]]), NAMES)

    def test_mixed_seeds(self):
        rows = rows_from(0, [0], [[1, 1, 1]]) + rows_from(1, [1], [[2, 2, 2]])
        with pytest.raises(InputError, match="multiple seeds"):
            build_trajectory(rows, NAMES)

    def test_sparse_eval_gaps_preserved(self, rng):
        n = 500
        evals = [None] * n
        evals[3] = 0.1
        evals[400] = 0.9
        rows = rows_from(2, list(range(n)), rng.normal(size=(n, 3)), evals)
        traj = build_trajectory(rows, NAMES)
        assert traj.eval_accuracy[3] == 0.1
        assert traj.eval_accuracy[400] == 0.9
        assert traj.eval_accuracy.count(None) == n - 2


class TestNormalize:
    def test_two_point_feature(self):
        rows = rows_from(0, [0, 1], [[0, 5, 1], [2, 5, 3]])
        norm = normalize(build_trajectory(rows, NAMES))
        np.testing.assert_allclose(norm.observations[:, 0], [-1.0, 1.0])
        assert norm.stats.means[0] == 1.0 and norm.stats.stds[0] == 1.0

    def test_constant_feature_degenerate(self):
        rows = rows_from(0, [0, 1, 2], [[7, 1, 0], [7, 2, 0], [7, 3, 0]])
        norm = normalize(build_trajectory(rows, NAMES))
        np.testing.assert_array_equal(norm.observations[:, 0], [0.0, 0.0, 0.0])
        assert norm.stats.degenerate[0]
        assert not norm.stats.degenerate[1]
        assert norm.stats.divisors[0] == 1.0

    def test_window_is_first_1000(self, rng):
        t_len = 1500
        values = rng.normal(size=(t_len, 3))
        values[NORMALIZATION_WINDOW:, 0] += 50.0  # shift outside the window
        traj = build_trajectory(rows_from(0, list(range(t_len)), values), NAMES)
        norm = normalize(traj)
        head = values[:NORMALIZATION_WINDOW, 0]
        assert norm.stats.window == NORMALIZATION_WINDOW
        assert norm.stats.means[0] == pytest.approx(head.mean(), abs=1e-12)
        assert norm.stats.stds[0] == pytest.approx(head.std(), abs=1e-12)

    def test_window_mean_zero_std_one(self, rng):
        values = rng.normal(size=(300, 3)) * [1.0, 10.0, 0.1] + [5, -2, 0]
        norm = normalize(build_trajectory(rows_from(0, list(range(300)), values), NAMES))
        window = norm.observations[: norm.stats.window]
        np.testing.assert_allclose(window.mean(axis=0), 0.0, atol=1e-9)
        np.testing.assert_allclose(window.std(axis=0), 1.0, atol=1e-9)

    def test_non_finite_rejected(self):
        rows = rows_from(0, [0, 1], [[0, 0, 0], [1, 1, 1]])
        traj = build_trajectory(rows, NAMES)
        traj.observations[1, 1] = np.nan
        with pytest.raises(InputError, match="non-finite"):
            normalize(traj)

    @given(
        scale=st.floats(min_value=0.01, max_value=100.0),
        shift=st.floats(min_value=-50.0, max_value=50.0),
    )
    @settings(max_examples=25, deadline=None)
    def test_affine_invariance(self, scale, shift):
        base = np.linspace(0.0, 1.0, 10).reshape(-1, 1) * [1.0, 2.0, 3.0]
        rows = rows_from(0, list(range(10)), base)
        norm = normalize(build_trajectory(rows, NAMES))
        transformed = base.copy()
        transformed[:, 0] = scale * transformed[:, 0] + shift
        norm2 = normalize(build_trajectory(rows_from(0, list(range(10)), transformed), NAMES))
        np.testing.assert_allclose(norm2.observations[:, 0], norm.observations[:, 0], atol=1e-9)

    def test_idempotent_on_window(self, rng):
        values = rng.normal(size=(50, 3)) * [2.0, 0.5, 7.0]
        norm = normalize(build_trajectory(rows_from(0, list(range(50)), values), NAMES))
        again = normalize(
            build_trajectory(rows_from(0, list(range(50)), norm.observations), NAMES)
        )
        np.testing.assert_allclose(again.observations, norm.observations, atol=1e-12)

    def test_per_seed_independence(self, rng):
        values_a = rng.normal(size=(20, 3))
        values_b = rng.normal(size=(20, 3)) + 100.0
        rows_a = rows_from(0, list(range(20)), values_a)
        rows_b = rows_from(1, list(range(20)), values_b)
        alone = normalize(build_trajectory(rows_a, NAMES))
        together = [normalize(t) for t in group_by_seed(rows_a + rows_b, NAMES)]
        np.testing.assert_array_equal(together[0].observations, alone.observations)


class TestSelectFeatures:
    def test_subset_and_order(self, rng):
        values = rng.normal(size=(5, 3))
        traj = build_trajectory(rows_from(0, list(range(5)), values), NAMES)
        sub = select_features(traj, ["c", "a"])
        assert sub.feature_names == ("c", "a")
        np.testing.assert_array_equal(sub.observations[:, 0], values[:, 2])
        np.testing.assert_array_equal(sub.observations[:, 1], values[:, 0])

    def test_unknown_feature(self, rng):
        traj = build_trajectory(rows_from(0, [0, 1], rng.normal(size=(2, 3))), NAMES)
        with pytest.raises(InputError, match="unknown feature"):
            select_features(traj, ["nope"])


def test_group_by_seed_orders_seeds(rng):
    rows = rows_from(5, [0, 1], rng.normal(size=(2, 3))) + rows_from(1, [0, 1], rng.normal(size=(2, 3)))
    trajs = group_by_seed(rows, NAMES)
    assert [t.seed for t in trajs] == [1, 5]

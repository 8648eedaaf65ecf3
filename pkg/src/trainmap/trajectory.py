"""Per-seed metric time series and z-score normalization.

Each training run (one random seed) yields a sequence of metric vectors. A
run's features are standardized against the mean and population standard
deviation estimated from its own first min(T, 1000) checkpoints, so trajectory
length does not skew the scale and seeds never influence each other.
Zero-variance features use divisor 1, which maps them to an all-zero column.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InputError
from .metrics import MetricVector

NORMALIZATION_WINDOW = 1000


@dataclass
class Trajectory:
    """Raw metric time series for one seed, rows sorted by step."""

    seed: int
    steps: np.ndarray  # (T,) strictly increasing ints
    observations: np.ndarray  # (T, d)
    eval_accuracy: list[float | None]
    feature_names: tuple[str, ...]


@dataclass
class NormStats:
    """Per-feature location/scale estimated on the normalization window."""

    means: np.ndarray  # (d,)
    stds: np.ndarray  # (d,) population std, >= 0; 0 marks a degenerate feature
    window: int

    @property
    def degenerate(self) -> np.ndarray:
        return self.stds == 0.0

    @property
    def divisors(self) -> np.ndarray:
        return np.where(self.degenerate, 1.0, self.stds)


@dataclass
class NormalizedTrajectory:
    """Z-scored metric time series plus the stats that produced it."""

    seed: int
    steps: np.ndarray
    observations: np.ndarray  # (T, d)
    stats: NormStats
    eval_accuracy: list[float | None]
    feature_names: tuple[str, ...]


def build_trajectory(rows: Sequence[MetricVector], feature_names: Sequence[str]) -> Trajectory:
    """Assemble one seed's rows into a step-sorted trajectory."""
    if len(rows) < 2:
        raise InputError(f"trajectory needs at least 2 checkpoints, got {len(rows)}")
    seeds = {r.seed for r in rows}
    if len(seeds) != 1:
        raise InputError(f"trajectory rows span multiple seeds: {sorted(seeds)}")
    seed = rows[0].seed
    steps = [r.step for r in rows]
    if len(set(steps)) != len(steps):
        dup = next(s for s in steps if steps.count(s) > 1)
        raise InputError(f"seed {seed}: duplicate step {dup}")
    order = np.argsort(steps, kind="stable")
    observations = np.vstack([rows[i].values for i in order])
    if not np.all(np.isfinite(observations)):
        raise InputError(f"seed {seed}: non-finite metric values")
    return Trajectory(
        seed=seed,
        steps=np.array([steps[i] for i in order], dtype=int),
        observations=observations,
        eval_accuracy=[rows[i].eval_accuracy for i in order],
        feature_names=tuple(feature_names),
    )


def normalize(traj: Trajectory) -> NormalizedTrajectory:
    """Z-score each feature against the trajectory's own leading window."""
    obs = np.asarray(traj.observations, dtype=float)
    if not np.all(np.isfinite(obs)):
        raise InputError(f"seed {traj.seed}: non-finite values in trajectory")
    window = min(len(obs), NORMALIZATION_WINDOW)
    head = obs[:window]
    stats = NormStats(means=head.mean(axis=0), stds=head.std(axis=0), window=window)
    normalized = (obs - stats.means) / stats.divisors
    return NormalizedTrajectory(
        seed=traj.seed,
        steps=traj.steps,
        observations=normalized,
        stats=stats,
        eval_accuracy=list(traj.eval_accuracy),
        feature_names=traj.feature_names,
    )


def select_features(traj: Trajectory, names: Sequence[str]) -> Trajectory:
    """Restrict a trajectory to the named feature columns, in the given order."""
    missing = [n for n in names if n not in traj.feature_names]
    if missing:
        raise InputError(f"unknown feature(s) {missing}; available: {list(traj.feature_names)}")
    idx = [traj.feature_names.index(n) for n in names]
    return Trajectory(
        seed=traj.seed,
        steps=traj.steps,
        observations=traj.observations[:, idx],
        eval_accuracy=list(traj.eval_accuracy),
        feature_names=tuple(names),
    )


def group_by_seed(rows: Sequence[MetricVector], feature_names: Sequence[str]) -> list[Trajectory]:
    """Split a flat row list into per-seed trajectories, ordered by seed."""
    by_seed: dict[int, list[MetricVector]] = {}
    for row in rows:
        by_seed.setdefault(row.seed, []).append(row)
    return [build_trajectory(by_seed[s], feature_names) for s in sorted(by_seed)]

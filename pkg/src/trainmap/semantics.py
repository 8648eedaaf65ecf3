"""Meaning for latent states: convergence prediction and detour detection.

A run's path through the state graph is reduced to its empirical state
distribution ("bag of states"). Ordinary least squares, with standardized
targets and no intercept (the simplex features already span the constant),
predicts convergence time from those distributions. A state is a detour when
some runs converge without visiting it and its coefficient is positive under
a statistically significant regression.

Run-to-run spread is summarized by the average pairwise Wasserstein distance
between state distributions; with the discrete 0/1 ground metric between
states this is the total-variation distance, so the value lives in [0, 1].
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats as scipy_stats

from .errors import InputError


@dataclass
class StateDistribution:
    """Empirical distribution over latent states for one run."""

    probabilities: np.ndarray  # (K,) sums to 1
    seed: int | None = None


@dataclass
class RegressionResult:
    coefficients: np.ndarray  # (K,)
    r_squared: float
    p_value: float
    n_runs: int
    target_mean: float
    target_std: float


@dataclass
class StateSemantics:
    id: int
    coefficient: float
    visited_by: int
    optional: bool
    detour: bool


@dataclass
class DetourReport:
    states: list[StateSemantics]
    significance_gate: float

    @property
    def detour_states(self) -> list[int]:
        return [s.id for s in self.states if s.detour]


def convergence_time(
    steps: Sequence[int],
    accuracies: Sequence[float | None],
    threshold: float,
) -> int | None:
    """First step whose evaluation accuracy reaches the threshold, else None."""
    if not 0.0 < threshold <= 1.0:
        raise InputError(f"convergence threshold must be in (0, 1], got {threshold}")
    if len(steps) != len(accuracies):
        raise InputError("steps and accuracies must align")
    pairs = [(int(s), float(a)) for s, a in zip(steps, accuracies) if a is not None]
    if not pairs:
        return None
    for step, acc in sorted(pairs):
        if not 0.0 <= acc <= 1.0:
            raise InputError(f"step {step}: accuracy {acc} outside [0, 1]")
        if acc >= threshold:
            return step
    return None


def unigram_features(path: Sequence[int], k: int) -> StateDistribution:
    """Fraction of time the path spends in each of the k states."""
    path = np.asarray(path, dtype=int)
    if path.size == 0:
        raise InputError("unigram_features: empty path")
    if path.min() < 0 or path.max() >= k:
        raise InputError(f"unigram_features: state {int(path.max())} outside 0..{k - 1}")
    counts = np.bincount(path, minlength=k)
    return StateDistribution(probabilities=counts / path.size)


def fit_regression(features: np.ndarray, targets: np.ndarray) -> RegressionResult:
    """Least squares from state distributions to standardized convergence times.

    Targets are z-scored over the runs; the fit has no intercept and uses the
    minimum-norm solution when the feature matrix is rank-deficient. The
    p-value comes from the overall F-statistic with (rank, n - rank) degrees
    of freedom.
    """
    features = np.asarray(features, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if features.ndim != 2:
        raise InputError(f"fit_regression: features must be 2-D, got shape {features.shape}")
    n, k = features.shape
    if targets.shape != (n,):
        raise InputError(f"fit_regression: {n} feature rows but {targets.shape} targets")
    if not np.all(np.isfinite(features)) or not np.all(np.isfinite(targets)):
        raise InputError("fit_regression: non-finite inputs")
    if n <= k:
        raise InputError(f"fit_regression: need more runs ({n}) than states ({k})")

    target_mean = float(targets.mean())
    target_std = float(targets.std())
    if target_std == 0.0:
        return RegressionResult(
            coefficients=np.zeros(k),
            r_squared=0.0,
            p_value=1.0,
            n_runs=n,
            target_mean=target_mean,
            target_std=target_std,
        )

    y = (targets - target_mean) / target_std
    coef, _, rank, _ = np.linalg.lstsq(features, y, rcond=None)
    residual = y - features @ coef
    sse = float(residual @ residual)
    sst = float(y @ y)  # standardized targets have zero mean
    r_squared = 1.0 - sse / sst

    df_model = int(rank)
    df_resid = n - df_model
    if sse <= 0.0:
        p_value = 0.0
    else:
        f_stat = ((sst - sse) / df_model) / (sse / df_resid)
        p_value = float(scipy_stats.f.sf(f_stat, df_model, df_resid))
    return RegressionResult(
        coefficients=coef,
        r_squared=r_squared,
        p_value=p_value,
        n_runs=n,
        target_mean=target_mean,
        target_std=target_std,
    )


def detect_detours(
    regression: RegressionResult,
    paths: Sequence[np.ndarray],
    gate: float = 0.05,
) -> DetourReport:
    """Flag optional states with positive coefficients under a significant fit."""
    if not paths:
        raise InputError("detect_detours: no paths")
    k = len(regression.coefficients)
    n = len(paths)
    significant = regression.p_value < gate
    states = []
    for j in range(k):
        visited_by = sum(1 for p in paths if j in np.asarray(p, dtype=int))
        optional = 0 < visited_by < n
        coefficient = float(regression.coefficients[j])
        states.append(
            StateSemantics(
                id=j,
                coefficient=coefficient,
                visited_by=visited_by,
                optional=optional,
                detour=bool(optional and coefficient > 0.0 and significant),
            )
        )
    return DetourReport(states=states, significance_gate=gate)


def dissimilarity(distributions: Sequence[StateDistribution]) -> float:
    """Average pairwise Wasserstein distance under the 0/1 ground metric.

    With the discrete metric, W(p, q) = ||p - q||_1 / 2 (total variation);
    the sum runs over ordered pairs j <= i, whose diagonal terms vanish.
    """
    n = len(distributions)
    if n < 2:
        raise InputError(f"dissimilarity: need at least 2 runs, got {n}")
    k = len(distributions[0].probabilities)
    for i, dist in enumerate(distributions):
        if len(dist.probabilities) != k:
            raise InputError(f"dissimilarity: run {i} has {len(dist.probabilities)} states, expected {k}")
    total = 0.0
    for i in range(n):
        for j in range(i + 1):
            diff = distributions[i].probabilities - distributions[j].probabilities
            total += 0.5 * float(np.abs(diff).sum())
    return 2.0 * total / (n * (n - 1))


def report_to_json(
    regression: RegressionResult,
    detours: DetourReport,
    dissim: float,
    threshold: float,
) -> str:
    """Regression/detour report JSON v1."""
    doc = {
        "r_squared": regression.r_squared,
        "p_value": regression.p_value,
        "n_runs": regression.n_runs,
        "threshold": threshold,
        "states": [
            {
                "id": s.id,
                "coefficient": s.coefficient,
                "visited_by": s.visited_by,
                "optional": s.optional,
                "detour": s.detour,
            }
            for s in detours.states
        ],
        "dissimilarity": dissim,
    }
    return json.dumps(doc, indent=2) + "\n"


def dropped_run_warning(seed: int, threshold: float) -> None:
    warnings.warn(
        f"seed {seed}: evaluation accuracy never reaches {threshold}; run excluded from regression",
        UserWarning,
        stacklevel=2,
    )

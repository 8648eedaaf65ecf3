"""Shared fixtures and independent oracles.

The enumeration oracles deliberately avoid the library's own emission and
recursion code: densities come from scipy.stats.multivariate_normal and the
path sums/maxima are computed by brute force over all K^T state paths.
"""

from __future__ import annotations

import itertools

import numpy as np
import pytest
from scipy.special import logsumexp
from scipy.stats import multivariate_normal

from trainmap.hmm import GaussianHmm


def random_hmm(rng: np.random.Generator, k: int, d: int, mean_scale: float = 2.0) -> GaussianHmm:
    """Random valid model with full covariances."""
    initial = rng.dirichlet(np.ones(k))
    transition = np.vstack([rng.dirichlet(np.ones(k)) for _ in range(k)])
    means = rng.normal(scale=mean_scale, size=(k, d))
    covs = np.empty((k, d, d))
    for j in range(k):
        w = rng.normal(size=(d, d))
        covs[j] = w @ w.T + 0.5 * np.eye(d)
    return GaussianHmm(
        initial=initial,
        transition=transition,
        means=means,
        covariances=covs,
        feature_names=tuple(f"f{i}" for i in range(d)),
    )


def path_log_scores(model: GaussianHmm, seq: np.ndarray) -> np.ndarray:
    """Log p(path, seq) for every one of the K^T paths, via scipy densities."""
    k = model.n_states
    t_len = len(seq)
    log_b = np.empty((t_len, k))
    for j in range(k):
        log_b[:, j] = multivariate_normal(model.means[j], model.covariances[j]).logpdf(seq)
    if log_b.ndim == 1:  # scipy squeezes T=1
        log_b = log_b.reshape(t_len, k)
    with np.errstate(divide="ignore"):
        log_pi = np.log(model.initial)
        log_a = np.log(model.transition)
    paths = np.array(list(itertools.product(range(k), repeat=t_len)), dtype=int)
    scores = log_pi[paths[:, 0]] + log_b[0, paths[:, 0]]
    for t in range(1, t_len):
        scores = scores + log_a[paths[:, t - 1], paths[:, t]] + log_b[t, paths[:, t]]
    return scores


def enumerate_loglik(model: GaussianHmm, seq: np.ndarray) -> float:
    return float(logsumexp(path_log_scores(model, seq)))


def enumerate_best_score(model: GaussianHmm, seq: np.ndarray) -> float:
    return float(path_log_scores(model, seq).max())


def score_path(model: GaussianHmm, seq: np.ndarray, path: np.ndarray) -> float:
    """Log p(path, seq) for one specific path, via scipy densities."""
    k = model.n_states
    log_b = np.empty((len(seq), k))
    for j in range(k):
        log_b[:, j] = multivariate_normal(model.means[j], model.covariances[j]).logpdf(seq)
    with np.errstate(divide="ignore"):
        log_pi = np.log(model.initial)
        log_a = np.log(model.transition)
    score = log_pi[path[0]] + log_b[0, path[0]]
    for t in range(1, len(seq)):
        score += log_a[path[t - 1], path[t]] + log_b[t, path[t]]
    return float(score)


def best_permutation(true_means: np.ndarray, fit_means: np.ndarray) -> tuple[int, ...]:
    """Permutation p minimizing total distance of fit_means[p[j]] to true_means[j]."""
    k = len(true_means)
    best, best_cost = None, np.inf
    for perm in itertools.permutations(range(k)):
        cost = sum(np.linalg.norm(fit_means[perm[j]] - true_means[j]) for j in range(k))
        if cost < best_cost:
            best, best_cost = perm, cost
    return best


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


# one status line per acceptance criterion at the end of the run
_acceptance_results: dict[str, str] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when == "call" and "test_acceptance" in str(item.fspath):
        _acceptance_results[item.name] = report.outcome.upper()


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.write_line("")
    terminalreporter.write_line("acceptance criteria:")
    for name in sorted(_acceptance_results):
        terminalreporter.write_line(f"  {name}: {_acceptance_results[name]}")

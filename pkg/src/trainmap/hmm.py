"""Gaussian hidden Markov model: estimation, decoding, sampling, selection.

The model is a discrete-time Markov chain over K latent states, each emitting
a d-dimensional Gaussian with full covariance. Fitting uses expectation-
maximization (Baum-Welch) over multiple observation sequences with the scaled
forward-backward recursions of Rabiner's tutorial; per-step renormalization
keeps everything in range, and emission log-densities are shifted by their
per-step maximum before exponentiation so underflow never produces NaN.

State count is chosen by fitting each candidate K on an 80/20 trajectory
split and keeping the K with the lowest BIC on the held-out sequences. A
k-means clustering over pooled observations (with a spherical-Gaussian BIC)
is provided as a baseline that ignores temporal structure.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .errors import InputError, NumericalError
from .trajectory import NormalizedTrajectory

_LOG_2PI = math.log(2.0 * math.pi)
_TINY = np.finfo(float).tiny

MODEL_FORMAT_VERSION = 1


@dataclass
class GaussianHmm:
    """Fitted model parameters. Treat instances as immutable after creation."""

    initial: np.ndarray  # (K,) simplex
    transition: np.ndarray  # (K,K) row-stochastic
    means: np.ndarray  # (K,d)
    covariances: np.ndarray  # (K,d,d) symmetric positive-definite
    feature_names: tuple[str, ...]
    _chols: np.ndarray | None = field(default=None, init=False, repr=False, compare=False)

    @property
    def n_states(self) -> int:
        return len(self.initial)

    @property
    def n_features(self) -> int:
        return self.means.shape[1]

    def validate(self) -> None:
        k, d = self.n_states, self.n_features
        if self.transition.shape != (k, k) or self.means.shape != (k, d) or self.covariances.shape != (k, d, d):
            raise InputError("model: inconsistent parameter shapes")
        if len(self.feature_names) != d:
            raise InputError(f"model: {len(self.feature_names)} feature names for {d} features")
        if np.any(self.initial < 0) or abs(self.initial.sum() - 1.0) > 1e-9:
            raise InputError("model: initial distribution is not a probability vector")
        if np.any(self.transition < 0) or np.max(np.abs(self.transition.sum(axis=1) - 1.0)) > 1e-9:
            raise InputError("model: transition matrix rows must sum to 1")
        if np.max(np.abs(self.covariances - np.transpose(self.covariances, (0, 2, 1)))) > 1e-8:
            raise InputError("model: covariance matrices must be symmetric")
        self.cholesky_factors()  # raises if not positive definite

    def cholesky_factors(self) -> np.ndarray:
        """Lower-triangular factors of the state covariances, cached."""
        if self._chols is None:
            try:
                self._chols = np.linalg.cholesky(self.covariances)
            except np.linalg.LinAlgError as exc:
                raise NumericalError(f"model: covariance not positive definite ({exc})") from exc
        return self._chols


@dataclass
class FitConfig:
    """Baum-Welch settings; defaults suit z-scored metric trajectories."""

    max_iters: int = 200
    tol: float = 1e-4
    jitter: float = 1e-6
    restarts: int = 5
    rng_seed: int = 0


@dataclass
class FitReport:
    """Per-fit diagnostics for the restart that won."""

    log_likelihoods: list[float]
    converged: bool
    iterations: int
    restart_index: int
    rng_seed: int
    events: list[str] = field(default_factory=list)


@dataclass
class InformationCriteria:
    loglik: float
    aic: float
    bic: float
    n_params: int
    n_obs: int


@dataclass
class SelectionRow:
    k: int
    train_loglik: float
    val_loglik: float
    aic: float
    bic: float
    n_params: int
    chosen: bool


@dataclass
class SelectionTable:
    rows: list[SelectionRow]

    @property
    def chosen_k(self) -> int:
        return next(r.k for r in self.rows if r.chosen)


# ---------------------------------------------------------------------------
# Emission densities
# ---------------------------------------------------------------------------


def _log_emissions(obs: np.ndarray, means: np.ndarray, chols: np.ndarray) -> np.ndarray:
    """Log N(obs; mu_k, Sigma_k) for each row and state; obs (n,d) -> (n,K)."""
    n, d = obs.shape
    k = means.shape[0]
    out = np.empty((n, k))
    for j in range(k):
        diff = (obs - means[j]).T  # (d,n)
        y = solve_triangular(chols[j], diff, lower=True, check_finite=False)
        logdet = float(np.log(np.diag(chols[j])).sum())
        out[:, j] = -0.5 * (d * _LOG_2PI + np.einsum("ij,ij->j", y, y)) - logdet
    return out


def log_emission(model: GaussianHmm, obs: np.ndarray) -> np.ndarray:
    """Per-state Gaussian log-density of a single observation vector."""
    obs = np.asarray(obs, dtype=float)
    if obs.shape != (model.n_features,):
        raise InputError(f"observation shape {obs.shape} does not match d={model.n_features}")
    if not np.all(np.isfinite(obs)):
        raise InputError("observation contains non-finite values")
    return _log_emissions(obs[None, :], model.means, model.cholesky_factors())[0]


def _check_sequence(model: GaussianHmm, seq: np.ndarray) -> np.ndarray:
    seq = np.asarray(seq, dtype=float)
    if seq.ndim != 2 or seq.shape[1] != model.n_features:
        raise InputError(f"sequence shape {seq.shape} does not match (T, {model.n_features})")
    if not np.all(np.isfinite(seq)):
        raise InputError("sequence contains non-finite values")
    return seq


# ---------------------------------------------------------------------------
# Scaled forward / backward recursions (batched over equal-length sequences)
# ---------------------------------------------------------------------------


def _forward_batch(initial, transition, log_b):
    """Scaled forward pass. log_b is (B,T,K); returns (alpha, shifts, norms, loglik)."""
    n_seq, n_steps, k = log_b.shape
    shifts = log_b.max(axis=2)  # (B,T)
    b = np.exp(log_b - shifts[:, :, None])  # max entry 1 per (seq, t)
    alpha = np.empty_like(b)
    norms = np.empty((n_seq, n_steps))
    a = initial[None, :] * b[:, 0]
    norms[:, 0] = np.maximum(a.sum(axis=1), _TINY)
    alpha[:, 0] = a / norms[:, 0, None]
    for t in range(1, n_steps):
        a = (alpha[:, t - 1] @ transition) * b[:, t]
        norms[:, t] = np.maximum(a.sum(axis=1), _TINY)
        alpha[:, t] = a / norms[:, t, None]
    loglik = (np.log(norms) + shifts).sum(axis=1)
    return alpha, b, norms, loglik


def _backward_batch(transition, b, norms):
    """Scaled backward pass matching _forward_batch's normalizers."""
    n_seq, n_steps, k = b.shape
    beta = np.empty_like(b)
    beta[:, n_steps - 1] = 1.0
    for t in range(n_steps - 2, -1, -1):
        beta[:, t] = ((b[:, t + 1] * beta[:, t + 1]) @ transition.T) / norms[:, t + 1, None]
    return beta


def forward_filter(model: GaussianHmm, seq: np.ndarray) -> tuple[np.ndarray, float]:
    """Filtered state posteriors p(s_t = k | z_{1:t}) and total log-likelihood."""
    seq = _check_sequence(model, seq)
    log_b = _log_emissions(seq, model.means, model.cholesky_factors())[None]
    alpha, _, _, loglik = _forward_batch(model.initial, model.transition, log_b)
    return alpha[0], float(loglik[0])


def viterbi(model: GaussianHmm, seq: np.ndarray) -> np.ndarray:
    """Most probable state path in log space; ties resolve to the lowest index."""
    seq = _check_sequence(model, seq)
    log_b = _log_emissions(seq, model.means, model.cholesky_factors())
    with np.errstate(divide="ignore"):
        log_pi = np.log(model.initial)
        log_a = np.log(model.transition)
    n_steps, k = log_b.shape
    score = log_pi + log_b[0]
    back = np.empty((n_steps, k), dtype=int)
    for t in range(1, n_steps):
        cand = score[:, None] + log_a  # (from, to)
        back[t] = cand.argmax(axis=0)
        score = cand.max(axis=0) + log_b[t]
    path = np.empty(n_steps, dtype=int)
    path[-1] = int(score.argmax())
    for t in range(n_steps - 2, -1, -1):
        path[t] = back[t + 1][path[t + 1]]
    return path


def sample(model: GaussianHmm, n_steps: int, rng_seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Ancestral sampling; deterministic for a given rng_seed."""
    if n_steps < 1:
        raise InputError("sample: n_steps must be positive")
    model.validate()
    rng = np.random.default_rng(rng_seed)
    chols = model.cholesky_factors()
    k, d = model.n_states, model.n_features
    states = np.empty(n_steps, dtype=int)
    obs = np.empty((n_steps, d))
    state = int(rng.choice(k, p=model.initial))
    for t in range(n_steps):
        if t > 0:
            state = int(rng.choice(k, p=model.transition[state]))
        states[t] = state
        obs[t] = model.means[state] + chols[state] @ rng.standard_normal(d)
    return obs, states


# ---------------------------------------------------------------------------
# Baum-Welch
# ---------------------------------------------------------------------------


def _group_by_length(seqs: list[np.ndarray]) -> dict[int, list[int]]:
    groups: dict[int, list[int]] = {}
    for i, s in enumerate(seqs):
        groups.setdefault(len(s), []).append(i)
    return groups


def _em_step(initial, transition, means, covs, seqs, groups, jitter, rng, events):
    """One EM iteration over all sequences; returns updated params and the
    log-likelihood of the *incoming* parameters."""
    k, d = means.shape
    try:
        chols = np.linalg.cholesky(covs)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"covariance lost positive definiteness ({exc})") from exc

    loglik = 0.0
    pi_acc = np.zeros(k)
    trans_num = np.zeros((k, k))
    trans_den = np.zeros(k)
    w_sum = np.zeros(k)
    mean_num = np.zeros((k, d))
    m2 = np.zeros((k, d, d))
    n_seqs = 0

    for length, idxs in sorted(groups.items()):
        batch = np.stack([seqs[i] for i in idxs])  # (B,T,d)
        flat = batch.reshape(-1, d)
        log_b = _log_emissions(flat, means, chols).reshape(len(idxs), length, k)
        alpha, b, norms, ll = _forward_batch(initial, transition, log_b)
        beta = _backward_batch(transition, b, norms)
        loglik += float(ll.sum())
        n_seqs += len(idxs)

        g = alpha * beta
        gamma = g / np.maximum(g.sum(axis=2, keepdims=True), _TINY)
        pi_acc += gamma[:, 0].sum(axis=0)
        w_sum += gamma.sum(axis=(0, 1))
        mean_num += np.einsum("btk,btd->kd", gamma, batch)
        m2 += np.einsum("btk,btd,bte->kde", gamma, batch, batch)
        trans_den += gamma[:, :-1].sum(axis=(0, 1))
        for t in range(length - 1):
            w = alpha[:, t, :, None] * transition[None, :, :] * (
                b[:, t + 1] * beta[:, t + 1] / norms[:, t + 1, None]
            )[:, None, :]
            w /= np.maximum(w.sum(axis=(1, 2), keepdims=True), _TINY)
            trans_num += w.sum(axis=0)

    new_pi = pi_acc / n_seqs
    new_pi = np.maximum(new_pi, 0.0)
    new_pi /= new_pi.sum()

    new_trans = np.empty_like(transition)
    for j in range(k):
        if trans_den[j] > _TINY:
            new_trans[j] = trans_num[j] / trans_den[j]
        else:
            new_trans[j] = 1.0 / k
    new_trans = np.maximum(new_trans, 0.0)
    new_trans /= new_trans.sum(axis=1, keepdims=True)

    new_means = np.empty_like(means)
    new_covs = np.empty_like(covs)
    pooled = None
    total_w = w_sum.sum()
    for j in range(k):
        if w_sum[j] < max(1e-10, 1e-12 * total_w):
            # state starved of responsibility: re-seed it from a random observation
            events.append(f"state {j} had no responsibility mass; reinitialized")
            if pooled is None:
                pooled = np.concatenate(seqs, axis=0)
            new_means[j] = pooled[int(rng.integers(len(pooled)))]
            pooled_cov = np.atleast_2d(np.cov(pooled, rowvar=False, bias=True))
            new_covs[j] = pooled_cov + jitter * np.eye(d)
            new_trans[j] = 1.0 / k
            continue
        new_means[j] = mean_num[j] / w_sum[j]
        cov = m2[j] / w_sum[j] - np.outer(new_means[j], new_means[j])
        cov = 0.5 * (cov + cov.T)
        new_covs[j] = cov + jitter * np.eye(d)

    return new_pi, new_trans, new_means, new_covs, loglik


def _fit_single(seqs, groups, k, config: FitConfig, restart: int):
    rng = np.random.default_rng([config.rng_seed, restart])
    d = seqs[0].shape[1]
    pooled = np.concatenate(seqs, axis=0)

    centers, _, _ = _kmeans(pooled, k, rng)
    means = centers.copy()
    pooled_cov = np.atleast_2d(np.cov(pooled, rowvar=False, bias=True))
    covs = np.repeat((pooled_cov + config.jitter * np.eye(d))[None], k, axis=0)
    initial = rng.dirichlet(np.full(k, 20.0))
    transition = np.vstack([rng.dirichlet(np.full(k, 20.0)) for _ in range(k)])

    events: list[str] = []
    history: list[float] = []
    converged = False
    iterations = 0
    for _ in range(config.max_iters):
        iterations += 1
        prev = (initial, transition, means, covs)
        initial, transition, means, covs, ll = _em_step(
            initial, transition, means, covs, seqs, groups, config.jitter, rng, events
        )
        if history and ll < history[-1] - 1e-9:
            # numerical regression: keep the previous parameters and stop
            events.append(f"log-likelihood decreased at iteration {iterations}; kept previous parameters")
            initial, transition, means, covs = prev
            converged = True
            break
        history.append(ll)
        if len(history) >= 2 and history[-1] - history[-2] < config.tol:
            converged = True
            break

    model = GaussianHmm(
        initial=initial,
        transition=transition,
        means=means,
        covariances=covs,
        feature_names=tuple(f"f{i}" for i in range(d)),
    )
    # score the returned parameters so the last history entry matches the model
    final_ll = _total_loglik(model, seqs)
    if not history or final_ll >= history[-1] - 1e-9:
        history.append(final_ll)
    report = FitReport(
        log_likelihoods=history,
        converged=converged,
        iterations=iterations,
        restart_index=restart,
        rng_seed=config.rng_seed,
        events=events,
    )
    return model, report


def _total_loglik(model: GaussianHmm, seqs: Sequence[np.ndarray]) -> float:
    chols = model.cholesky_factors()
    total = 0.0
    for length, idxs in sorted(_group_by_length(list(seqs)).items()):
        batch = np.stack([np.asarray(seqs[i], dtype=float) for i in idxs])
        log_b = _log_emissions(batch.reshape(-1, model.n_features), model.means, chols)
        log_b = log_b.reshape(len(idxs), length, model.n_states)
        _, _, _, ll = _forward_batch(model.initial, model.transition, log_b)
        total += float(ll.sum())
    return total


def baum_welch(
    train: Sequence[np.ndarray],
    k: int,
    config: FitConfig | None = None,
    feature_names: Sequence[str] | None = None,
) -> tuple[GaussianHmm, FitReport]:
    """Fit a K-state model to one or more sequences by EM with restarts.

    Parameters
    ----------
    train : sequences of shape (T_i, d), all with the same d.
    k : number of latent states, >= 1.
    config : iteration limits, tolerance, covariance jitter, restart count,
        and the seed from which all restart randomness derives.
    feature_names : optional names attached to the returned model.

    Returns the restart with the highest final training log-likelihood.
    """
    config = config or FitConfig()
    if k < 1:
        raise InputError(f"baum_welch: k must be >= 1, got {k}")
    seqs = [np.asarray(s, dtype=float) for s in train]
    if not seqs:
        raise InputError("baum_welch: no training sequences")
    d = seqs[0].shape[1] if seqs[0].ndim == 2 else 0
    for i, s in enumerate(seqs):
        if s.ndim != 2 or s.shape[1] != d or len(s) == 0:
            raise InputError(f"baum_welch: sequence {i} has shape {s.shape}, expected (T, {d})")
        if not np.all(np.isfinite(s)):
            raise InputError(f"baum_welch: sequence {i} contains non-finite values")
    total_steps = sum(len(s) for s in seqs)
    if total_steps <= k:
        raise InputError(f"baum_welch: {total_steps} timesteps cannot support {k} states")

    groups = _group_by_length(seqs)
    best: tuple[GaussianHmm, FitReport] | None = None
    for restart in range(max(1, config.restarts)):
        model, report = _fit_single(seqs, groups, k, config, restart)
        if best is None or report.log_likelihoods[-1] > best[1].log_likelihoods[-1]:
            best = (model, report)
    model, report = best
    if feature_names is not None:
        if len(feature_names) != d:
            raise InputError(f"baum_welch: {len(feature_names)} feature names for d={d}")
        model.feature_names = tuple(feature_names)
    return model, report


# ---------------------------------------------------------------------------
# Model selection
# ---------------------------------------------------------------------------


def n_parameters(k: int, d: int) -> int:
    """Free parameters: initial (K-1) + transitions K(K-1) + means + covariances."""
    return (k - 1) + k * (k - 1) + k * d + k * (d * (d + 1)) // 2


def information_criteria(model: GaussianHmm, seqs: Sequence[np.ndarray]) -> InformationCriteria:
    """AIC/BIC of the model on the given sequences; n counts timesteps."""
    seqs = [np.asarray(s, dtype=float) for s in seqs]
    if not seqs:
        raise InputError("information_criteria: no sequences")
    loglik = _total_loglik(model, seqs)
    n_obs = sum(len(s) for s in seqs)
    p = n_parameters(model.n_states, model.n_features)
    return InformationCriteria(
        loglik=loglik,
        aic=2.0 * p - 2.0 * loglik,
        bic=p * math.log(n_obs) - 2.0 * loglik,
        n_params=p,
        n_obs=n_obs,
    )


def split_trajectories(n: int, val_frac: float, split_seed: int) -> tuple[list[int], list[int]]:
    """Deterministic shuffled train/validation index split."""
    if not 0.0 < val_frac < 1.0:
        raise InputError(f"validation fraction must be in (0, 1), got {val_frac}")
    perm = np.random.default_rng(split_seed).permutation(n)
    n_val = min(max(1, int(round(n * val_frac))), n - 1)
    val = sorted(int(i) for i in perm[:n_val])
    train = sorted(int(i) for i in perm[n_val:])
    return train, val


def select_model(
    trajs: Sequence[NormalizedTrajectory],
    k_range: Iterable[int],
    config: FitConfig | None = None,
    split_seed: int = 0,
    val_frac: float = 0.2,
) -> tuple[GaussianHmm, SelectionTable]:
    """Fit every K on the train split, keep the lowest validation BIC."""
    config = config or FitConfig()
    ks = sorted(set(int(k) for k in k_range))
    if not ks:
        raise InputError("select_model: empty state-count range")
    n = len(trajs)
    if n < 5:
        raise InputError(f"select_model: need at least 5 trajectories for an 80/20 split, got {n}")
    feature_names = trajs[0].feature_names
    train_idx, val_idx = split_trajectories(n, val_frac, split_seed)
    train_seqs = [trajs[i].observations for i in train_idx]
    val_seqs = [trajs[i].observations for i in val_idx]

    fits: list[tuple[GaussianHmm, FitReport, InformationCriteria]] = []
    for k in ks:
        model, report = baum_welch(train_seqs, k, config, feature_names=feature_names)
        fits.append((model, report, information_criteria(model, val_seqs)))

    best = min(range(len(ks)), key=lambda i: (fits[i][2].bic, ks[i]))
    rows = [
        SelectionRow(
            k=ks[i],
            train_loglik=fits[i][1].log_likelihoods[-1],
            val_loglik=fits[i][2].loglik,
            aic=fits[i][2].aic,
            bic=fits[i][2].bic,
            n_params=fits[i][2].n_params,
            chosen=(i == best),
        )
        for i in range(len(ks))
    ]
    return fits[best][0], SelectionTable(rows=rows)


def selection_table_csv(table: SelectionTable) -> str:
    lines = ["k,train_loglik,val_loglik,aic,bic,n_params,chosen"]
    for r in table.rows:
        lines.append(
            f"{r.k},{r.train_loglik!r},{r.val_loglik!r},{r.aic!r},{r.bic!r},"
            f"{r.n_params},{'true' if r.chosen else 'false'}"
        )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# K-means (initialization and clustering baseline)
# ---------------------------------------------------------------------------


def _sq_distances(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d2 = (
        (points * points).sum(axis=1)[:, None]
        - 2.0 * points @ centers.T
        + (centers * centers).sum(axis=1)[None, :]
    )
    return np.maximum(d2, 0.0)


def _kmeans(points: np.ndarray, k: int, rng: np.random.Generator, max_iters: int = 100):
    """Lloyd's algorithm with k-means++ seeding; deterministic given rng."""
    n = len(points)
    if k > n:
        raise InputError(f"kmeans: k={k} exceeds the number of points ({n})")
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[int(rng.integers(n))]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[j] = points[idx]
        d2 = np.minimum(d2, ((points - centers[j]) ** 2).sum(axis=1))

    labels = np.full(n, -1, dtype=int)
    for _ in range(max_iters):
        d2 = _sq_distances(points, centers)
        new_labels = d2.argmin(axis=1)
        for j in range(k):
            mask = new_labels == j
            if mask.any():
                centers[j] = points[mask].mean(axis=0)
            else:
                centers[j] = points[int(d2[np.arange(n), new_labels].argmax())]
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    d2 = _sq_distances(points, centers)
    labels = d2.argmin(axis=1)
    sse = float(d2[np.arange(n), labels].sum())
    return centers, labels, sse


def kmeans_baseline(
    trajs: Sequence[NormalizedTrajectory],
    k_range: Iterable[int],
    rng_seed: int = 0,
) -> tuple[np.ndarray, SelectionTable]:
    """Cluster pooled observations per K; BIC uses a hard-assignment mixture of
    spherical Gaussians with one shared variance (mean within-cluster squared
    distance / d)."""
    ks = sorted(set(int(k) for k in k_range))
    if not ks:
        raise InputError("kmeans_baseline: empty cluster-count range")
    points = np.concatenate([t.observations for t in trajs], axis=0)
    if len(points) == 0:
        raise InputError("kmeans_baseline: no observations")
    n, d = points.shape

    rows = []
    all_labels = []
    for k in ks:
        rng = np.random.default_rng([rng_seed, k])
        _, labels, sse = _kmeans(points, k, rng)
        var = max(sse / (n * d), _TINY)
        # hard-assignment mixture likelihood: cluster proportions plus a
        # spherical Gaussian around each centroid with one shared variance
        counts = np.bincount(labels, minlength=k)
        occupied = counts[counts > 0]
        loglik = float((occupied * np.log(occupied / n)).sum())
        loglik += -0.5 * n * d * (_LOG_2PI + math.log(var) + 1.0)
        p = k * d + (k - 1) + 1
        rows.append(
            SelectionRow(
                k=k,
                train_loglik=loglik,
                val_loglik=loglik,
                aic=2.0 * p - 2.0 * loglik,
                bic=p * math.log(n) - 2.0 * loglik,
                n_params=p,
                chosen=False,
            )
        )
        all_labels.append(labels)
    best = min(range(len(ks)), key=lambda i: (rows[i].bic, ks[i]))
    rows[best].chosen = True
    return all_labels[best], SelectionTable(rows=rows)


# ---------------------------------------------------------------------------
# Model file v1
# ---------------------------------------------------------------------------


def model_to_json(model: GaussianHmm, fit: FitConfig | None = None) -> str:
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "n_states": model.n_states,
        "n_features": model.n_features,
        "feature_names": list(model.feature_names),
        "initial": [float(x) for x in model.initial],
        "transition": [[float(x) for x in row] for row in model.transition],
        "means": [[float(x) for x in row] for row in model.means],
        "covariances": [[[float(x) for x in row] for row in mat] for mat in model.covariances],
        "norm_degenerate_divisor": 1.0,
        "fit": None
        if fit is None
        else {
            "rng_seed": fit.rng_seed,
            "restarts": fit.restarts,
            "jitter": fit.jitter,
            "tol": fit.tol,
            "max_iters": fit.max_iters,
        },
    }
    return json.dumps(doc, indent=2) + "\n"


def model_from_json(text: str) -> GaussianHmm:
    try:
        doc = json.loads(text)
    except ValueError as exc:
        raise InputError(f"model file: invalid JSON ({exc})") from exc
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise InputError(f"model file: unknown format_version {doc.get('format_version')!r}")
    try:
        model = GaussianHmm(
            initial=np.array(doc["initial"], dtype=float),
            transition=np.array(doc["transition"], dtype=float),
            means=np.array(doc["means"], dtype=float),
            covariances=np.array(doc["covariances"], dtype=float),
            feature_names=tuple(doc["feature_names"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"model file: malformed field ({exc})") from exc
    if model.means.shape != (doc["n_states"], doc["n_features"]):
        raise InputError("model file: n_states/n_features disagree with parameter arrays")
    model.validate()
    return model

"""Annotated state graph extracted from a fitted model and decoded runs.

The map keeps every state as a vertex. An edge is "observed" when some decoded
path takes it; unobserved edges get weight zero. Each observed cross-state
edge carries the three features whose changes most influence the belief in the
destination state, measured by the absolute gradient of the filtered log
posterior with respect to the observation, averaged over every occurrence of
that transition across runs. Feature movement is reported as the difference of
learned state means (in z-score units), and edges additionally record how many
runs take them and the mean convergence step of those runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .errors import InputError
from .hmm import GaussianHmm, forward_filter
from .trajectory import NormalizedTrajectory

MAP_FORMAT_VERSION = 1
TOP_FEATURES = 3


@dataclass
class FeatureDelta:
    feature: str
    delta: float  # mean[to] - mean[from], z-score units
    importance: float


@dataclass
class EdgeAnnotation:
    top_features: list[FeatureDelta]
    runs_with_edge: int
    mean_convergence: float | None = None
    std_convergence: float | None = None


@dataclass
class MapState:
    id: int
    occupancy: int


@dataclass
class MapEdge:
    source: int
    target: int
    probability: float  # learned transition probability; 0 when pruned
    observed: bool
    annotation: EdgeAnnotation | None = None


@dataclass
class TrainingMap:
    states: list[MapState]
    edges: list[MapEdge]
    n_runs: int

    def edge(self, source: int, target: int) -> MapEdge:
        k = len(self.states)
        return self.edges[source * k + target]


def posterior_gradient(
    model: GaussianHmm,
    filtered: np.ndarray,
    obs: np.ndarray,
    k: int,
) -> np.ndarray:
    """Elementwise |d log p(s_t = k | z_{1:t}) / d z_t| at one timestep.

    ``filtered`` is the filtered posterior over states at time t. The gradient
    has the closed form  Sigma_k^{-1}(mu_k - z) - sum_h p(h) Sigma_h^{-1}(mu_h - z),
    evaluated here with triangular solves against cached factorizations.
    """
    filtered = np.asarray(filtered, dtype=float)
    obs = np.asarray(obs, dtype=float)
    if filtered.shape != (model.n_states,):
        raise InputError(f"filtered posterior shape {filtered.shape} does not match K={model.n_states}")
    if abs(filtered.sum() - 1.0) > 1e-6 or np.any(filtered < -1e-12):
        raise InputError("filtered posterior is not a probability vector")
    if obs.shape != (model.n_features,):
        raise InputError(f"observation shape {obs.shape} does not match d={model.n_features}")
    if not np.all(np.isfinite(obs)):
        raise InputError("observation contains non-finite values")
    if not 0 <= k < model.n_states:
        raise InputError(f"state index {k} out of range for K={model.n_states}")

    terms = _precision_terms(model, obs)  # (K, d): Sigma_h^{-1} (mu_h - obs)
    return np.abs(terms[k] - filtered @ terms)


def _precision_terms(model: GaussianHmm, obs: np.ndarray) -> np.ndarray:
    chols = model.cholesky_factors()
    out = np.empty((model.n_states, model.n_features))
    for h in range(model.n_states):
        y = solve_triangular(chols[h], model.means[h] - obs, lower=True, check_finite=False)
        out[h] = solve_triangular(chols[h].T, y, lower=False, check_finite=False)
    return out


def prune_transitions(model: GaussianHmm, paths: Sequence[np.ndarray]) -> TrainingMap:
    """Map skeleton: occupancy counts plus edges surviving the decoded paths."""
    k = model.n_states
    occupancy = np.zeros(k, dtype=int)
    taken = np.zeros((k, k), dtype=bool)
    for i, path in enumerate(paths):
        path = np.asarray(path, dtype=int)
        if path.size == 0:
            raise InputError(f"path {i} is empty")
        if path.min() < 0 or path.max() >= k:
            raise InputError(f"path {i} contains state {int(path.max())} outside 0..{k - 1}")
        occupancy += np.bincount(path, minlength=k)
        taken[path[:-1], path[1:]] = True

    states = [MapState(id=j, occupancy=int(occupancy[j])) for j in range(k)]
    edges = [
        MapEdge(
            source=i,
            target=j,
            probability=float(model.transition[i, j]) if taken[i, j] else 0.0,
            observed=bool(taken[i, j]),
        )
        for i in range(k)
        for j in range(k)
    ]
    return TrainingMap(states=states, edges=edges, n_runs=len(paths))


def annotate_edges(
    model: GaussianHmm,
    runs: Sequence[tuple[NormalizedTrajectory, np.ndarray, float | None]],
) -> TrainingMap:
    """Build and annotate the full training map from decoded runs.

    Each run is (normalized trajectory, decoded path, convergence step or
    None). For every cross-state transition occurrence the posterior-gradient
    importance is computed at the step where the state changes; occurrences
    are averaged uniformly across all runs.
    """
    k = model.n_states
    paths = [np.asarray(p, dtype=int) for (_, p, _) in runs]
    tmap = prune_transitions(model, paths)

    importance_sum: dict[tuple[int, int], np.ndarray] = {}
    occurrence_count: dict[tuple[int, int], int] = {}
    runs_with_edge: dict[tuple[int, int], int] = {}
    convergences: dict[tuple[int, int], list[float]] = {}

    for (traj, path, conv) in zip((r[0] for r in runs), paths, (r[2] for r in runs)):
        if len(traj.observations) != len(path):
            raise InputError(
                f"seed {traj.seed}: decoded path length {len(path)} does not match "
                f"trajectory length {len(traj.observations)}"
            )
        filtered, _ = forward_filter(model, traj.observations)
        edges_in_run = set()
        for t in range(1, len(path)):
            j, h = int(path[t - 1]), int(path[t])
            edges_in_run.add((j, h))
            if j == h:
                continue
            grad = posterior_gradient(model, filtered[t], traj.observations[t], h)
            key = (j, h)
            if key not in importance_sum:
                importance_sum[key] = np.zeros(model.n_features)
                occurrence_count[key] = 0
            importance_sum[key] += grad
            occurrence_count[key] += 1
        for key in edges_in_run:
            runs_with_edge[key] = runs_with_edge.get(key, 0) + 1
            if conv is not None:
                convergences.setdefault(key, []).append(float(conv))

    for edge in tmap.edges:
        key = (edge.source, edge.target)
        if not edge.observed or edge.source == edge.target:
            continue
        if occurrence_count.get(key, 0) == 0:
            raise InputError(f"edge {key} observed but has no transition occurrences")
        avg = importance_sum[key] / occurrence_count[key]
        order = np.argsort(-avg, kind="stable")[:TOP_FEATURES]
        top = [
            FeatureDelta(
                feature=model.feature_names[i],
                delta=float(model.means[edge.target, i] - model.means[edge.source, i]),
                importance=float(avg[i]),
            )
            for i in order
        ]
        conv_list = convergences.get(key, [])
        if conv_list:
            arr = np.array(conv_list)
            mean_conv, std_conv = float(arr.mean()), float(arr.std())
        else:
            mean_conv = std_conv = None
        edge.annotation = EdgeAnnotation(
            top_features=top,
            runs_with_edge=runs_with_edge[key],
            mean_convergence=mean_conv,
            std_convergence=std_conv,
        )
    # self-loops keep run counts but no feature annotation
    for edge in tmap.edges:
        if edge.observed and edge.source == edge.target and edge.annotation is None:
            edge.annotation = EdgeAnnotation(
                top_features=[],
                runs_with_edge=runs_with_edge[(edge.source, edge.target)],
            )
    return tmap


def _format_delta(fd: FeatureDelta) -> str:
    arrow = "↓" if fd.delta < 0 else "↑"
    return f"{fd.feature} {arrow}{abs(fd.delta):.2f}"


def export_map(tmap: TrainingMap, fmt: str = "dot") -> str:
    """Render the map as Graphviz DOT or as JSON; output is deterministic."""
    if fmt == "json":
        return _map_to_json(tmap)
    if fmt != "dot":
        raise InputError(f"export_map: unknown format {fmt!r} (expected 'dot' or 'json')")
    lines = ["digraph training_map {", "  rankdir=LR;"]
    for state in sorted(tmap.states, key=lambda s: s.id):
        lines.append(f'  s{state.id} [label="{state.id}\\n(n={state.occupancy})"];')
    for edge in sorted(tmap.edges, key=lambda e: (e.source, e.target)):
        if not edge.observed:
            continue
        if edge.source == edge.target:
            lines.append(f'  s{edge.source} -> s{edge.target} [label="p={edge.probability:.2f}"];')
            continue
        ann = edge.annotation
        if ann is None or not ann.top_features:
            label = ""
        else:
            parts = ", ".join(_format_delta(fd) for fd in ann.top_features)
            label = f"{parts} | {ann.runs_with_edge}/{tmap.n_runs}"
        lines.append(f'  s{edge.source} -> s{edge.target} [label="{label}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def _map_to_json(tmap: TrainingMap) -> str:
    doc = {
        "format_version": MAP_FORMAT_VERSION,
        "n_runs": tmap.n_runs,
        "states": [{"id": s.id, "occupancy": s.occupancy} for s in tmap.states],
        "edges": [
            {
                "from": e.source,
                "to": e.target,
                "transition_prob": e.probability,
                "observed": e.observed,
                "annotation": None
                if e.annotation is None
                else {
                    "top_features": [
                        {"feature": fd.feature, "delta": fd.delta, "importance": fd.importance}
                        for fd in e.annotation.top_features
                    ],
                    "runs_with_edge": e.annotation.runs_with_edge,
                    "mean_convergence": e.annotation.mean_convergence,
                    "std_convergence": e.annotation.std_convergence,
                },
            }
            for e in tmap.edges
        ],
    }
    return json.dumps(doc, indent=2) + "\n"


def map_from_json(text: str) -> TrainingMap:
    try:
        doc = json.loads(text)
    except ValueError as exc:
        raise InputError(f"map file: invalid JSON ({exc})") from exc
    if doc.get("format_version") != MAP_FORMAT_VERSION:
        raise InputError(f"map file: unknown format_version {doc.get('format_version')!r}")
    states = [MapState(id=int(s["id"]), occupancy=int(s["occupancy"])) for s in doc["states"]]
    edges = []
    for e in doc["edges"]:
        ann = e.get("annotation")
        annotation = None
        if ann is not None:
            annotation = EdgeAnnotation(
                top_features=[
                    FeatureDelta(
                        feature=str(fd["feature"]),
                        delta=float(fd["delta"]),
                        importance=float(fd["importance"]),
                    )
                    for fd in ann["top_features"]
                ],
                runs_with_edge=int(ann["runs_with_edge"]),
                mean_convergence=None if ann["mean_convergence"] is None else float(ann["mean_convergence"]),
                std_convergence=None if ann["std_convergence"] is None else float(ann["std_convergence"]),
            )
        edges.append(
            MapEdge(
                source=int(e["from"]),
                target=int(e["to"]),
                probability=float(e["transition_prob"]),
                observed=bool(e["observed"]),
                annotation=annotation,
            )
        )
    return TrainingMap(states=states, edges=edges, n_runs=int(doc["n_runs"]))

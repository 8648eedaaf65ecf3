"""Command-line pipeline: bundles -> metrics CSV -> model -> map/report.

Every command is a pure function of its input files and the three named
seeds (--fit-seed, --split-seed, --sample-seed), so reruns produce
byte-identical outputs. Exit codes: 0 success, 1 input error, 2 numerical
failure.
"""

from __future__ import annotations

import functools
import sys
from pathlib import Path

import click
import numpy as np

from . import bundle as bundle_mod
from . import hmm as hmm_mod
from . import semantics as sem_mod
from . import training_map as map_mod
from .errors import InputError, NumericalError
from .metrics import METRIC_NAMES, MetricVector, compute_metrics, read_metrics_csv, write_metrics_csv
from .trajectory import group_by_seed, normalize, select_features


def _pipeline_errors(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except InputError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)
        except NumericalError as exc:
            click.echo(f"numerical error: {exc}", err=True)
            sys.exit(2)

    return wrapper


def _parse_features(features: str | None, available: list[str]) -> list[str] | None:
    if features is None or features == "all":
        return None
    names = [n.strip() for n in features.split(",") if n.strip()]
    if not names:
        raise InputError("--features: no feature names given")
    missing = [n for n in names if n not in available]
    if missing:
        raise InputError(f"--features: unknown feature(s) {missing}; available: {available}")
    return names


def _load_normalized(csv_path: str, feature_subset: list[str] | None):
    feature_names, rows = read_metrics_csv(csv_path)
    trajs = group_by_seed(rows, feature_names)
    if feature_subset is not None:
        trajs = [select_features(t, feature_subset) for t in trajs]
    return feature_names, [normalize(t) for t in trajs]


def _load_for_model(csv_path: str, model: hmm_mod.GaussianHmm):
    feature_names, rows = read_metrics_csv(csv_path)
    missing = [n for n in model.feature_names if n not in feature_names]
    if missing:
        raise InputError(
            f"{csv_path}: feature columns {missing} required by the model are missing "
            f"(file has {feature_names})"
        )
    trajs = group_by_seed(rows, feature_names)
    trajs = [select_features(t, list(model.feature_names)) for t in trajs]
    return [normalize(t) for t in trajs]


@click.group()
def main():
    """Model training trajectories with a Gaussian HMM and map their states."""


@main.command("metrics")
@click.argument("bundles", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--output", "-o", required=True, type=click.Path(), help="Metrics CSV to write.")
@_pipeline_errors
def cmd_metrics(bundles, output):
    """Compute per-checkpoint metrics from checkpoint bundles."""
    rows: list[MetricVector] = []
    seen: dict[tuple[int, int], str] = {}
    for path in bundles:
        snapshot = bundle_mod.read_bundle(path)
        key = (snapshot.seed, snapshot.step)
        if key in seen:
            raise InputError(f"{path}: duplicate (seed={key[0]}, step={key[1]}) already provided by {seen[key]}")
        seen[key] = str(path)
        rows.append(compute_metrics(snapshot))
    write_metrics_csv(output, rows, METRIC_NAMES)
    click.echo(f"wrote {output} ({len(rows)} rows)")


@main.command("fit")
@click.argument("metrics_csv", type=click.Path(exists=True))
@click.option("--output", "-o", "prefix", required=True, type=click.Path(), help="Output prefix.")
@click.option("--features", default="all", show_default=True, help="Comma-separated feature subset.")
@click.option("--k-min", default=1, show_default=True, type=int)
@click.option("--k-max", default=6, show_default=True, type=int)
@click.option("--restarts", default=5, show_default=True, type=int)
@click.option("--max-iters", default=200, show_default=True, type=int)
@click.option("--tol", default=1e-4, show_default=True, type=float)
@click.option("--jitter", default=1e-6, show_default=True, type=float)
@click.option("--val-frac", default=0.2, show_default=True, type=float)
@click.option("--fit-seed", default=0, show_default=True, type=int)
@click.option("--split-seed", default=0, show_default=True, type=int)
@_pipeline_errors
def cmd_fit(metrics_csv, prefix, features, k_min, k_max, restarts, max_iters, tol, jitter, val_frac, fit_seed, split_seed):
    """Normalize per seed, select the state count by validation BIC, fit."""
    feature_names, rows = read_metrics_csv(metrics_csv)
    subset = _parse_features(features, feature_names)
    _, trajs = _load_normalized(metrics_csv, subset)
    if k_min > k_max:
        raise InputError(f"--k-min {k_min} exceeds --k-max {k_max}")
    config = hmm_mod.FitConfig(
        max_iters=max_iters, tol=tol, jitter=jitter, restarts=restarts, rng_seed=fit_seed
    )
    model, table = hmm_mod.select_model(
        trajs, range(k_min, k_max + 1), config, split_seed=split_seed, val_frac=val_frac
    )
    model_path = Path(f"{prefix}.model.json")
    selection_path = Path(f"{prefix}.selection.csv")
    model_path.write_text(hmm_mod.model_to_json(model, config), encoding="utf-8")
    selection_path.write_text(hmm_mod.selection_table_csv(table), encoding="utf-8")
    click.echo(f"wrote {model_path} (K={model.n_states}) and {selection_path}")


@main.command("map")
@click.argument("model_json", type=click.Path(exists=True))
@click.argument("metrics_csv", type=click.Path(exists=True))
@click.option("--output", "-o", "prefix", required=True, type=click.Path(), help="Output prefix.")
@click.option("--threshold", default=0.9, show_default=True, type=float, help="Convergence accuracy threshold.")
@_pipeline_errors
def cmd_map(model_json, metrics_csv, prefix, threshold):
    """Decode every seed, prune unvisited transitions, annotate edges."""
    model = hmm_mod.model_from_json(Path(model_json).read_text(encoding="utf-8"))
    trajs = _load_for_model(metrics_csv, model)
    runs = []
    for traj in trajs:
        path = hmm_mod.viterbi(model, traj.observations)
        conv = None
        if any(a is not None for a in traj.eval_accuracy):
            conv = sem_mod.convergence_time(traj.steps, traj.eval_accuracy, threshold)
        runs.append((traj, path, None if conv is None else float(conv)))
    tmap = map_mod.annotate_edges(model, runs)
    dot_path = Path(f"{prefix}.map.dot")
    json_path = Path(f"{prefix}.map.json")
    dot_path.write_text(map_mod.export_map(tmap, "dot"), encoding="utf-8")
    json_path.write_text(map_mod.export_map(tmap, "json"), encoding="utf-8")
    click.echo(f"wrote {dot_path} and {json_path}")


@main.command("regress")
@click.argument("model_json", type=click.Path(exists=True))
@click.argument("metrics_csv", type=click.Path(exists=True))
@click.option("--output", "-o", "prefix", required=True, type=click.Path(), help="Output prefix.")
@click.option("--threshold", default=0.9, show_default=True, type=float, help="Convergence accuracy threshold.")
@click.option("--gate", default=0.05, show_default=True, type=float, help="Significance gate on the regression p-value.")
@_pipeline_errors
def cmd_regress(model_json, metrics_csv, prefix, threshold, gate):
    """Predict convergence time from state distributions; flag detour states."""
    model = hmm_mod.model_from_json(Path(model_json).read_text(encoding="utf-8"))
    trajs = _load_for_model(metrics_csv, model)
    paths = []
    distributions = []
    conv_by_seed: dict[int, int | None] = {}
    for traj in trajs:
        if all(a is None for a in traj.eval_accuracy):
            raise InputError(f"seed {traj.seed}: no eval_acc values; regression needs evaluation accuracy")
        path = hmm_mod.viterbi(model, traj.observations)
        paths.append(path)
        dist = sem_mod.unigram_features(path, model.n_states)
        dist.seed = traj.seed
        distributions.append(dist)
        conv_by_seed[traj.seed] = sem_mod.convergence_time(traj.steps, traj.eval_accuracy, threshold)

    converged = [i for i, t in enumerate(trajs) if conv_by_seed[t.seed] is not None]
    for i, traj in enumerate(trajs):
        if i not in converged:
            sem_mod.dropped_run_warning(traj.seed, threshold)
    if not converged:
        raise InputError(f"no seed crosses the accuracy threshold {threshold}")

    features = np.vstack([distributions[i].probabilities for i in converged])
    targets = np.array([float(conv_by_seed[trajs[i].seed]) for i in converged])
    regression = sem_mod.fit_regression(features, targets)
    detours = sem_mod.detect_detours(regression, [paths[i] for i in converged], gate)
    dissim = sem_mod.dissimilarity(distributions) if len(distributions) >= 2 else 0.0

    report_path = Path(f"{prefix}.report.json")
    hist_path = Path(f"{prefix}.convergence.csv")
    report_path.write_text(sem_mod.report_to_json(regression, detours, dissim, threshold), encoding="utf-8")
    lines = ["seed,convergence_step"]
    for i in converged:
        seed = trajs[i].seed
        lines.append(f"{seed},{conv_by_seed[seed]}")
    hist_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    click.echo(f"wrote {report_path} and {hist_path}")


@main.command("sample")
@click.argument("model_json", type=click.Path(exists=True))
@click.option("--output", "-o", "prefix", required=True, type=click.Path(), help="Output prefix.")
@click.option("--runs", "-n", default=1, show_default=True, type=int)
@click.option("--length", "-t", default=100, show_default=True, type=int)
@click.option("--sample-seed", default=0, show_default=True, type=int)
@_pipeline_errors
def cmd_sample(model_json, prefix, runs, length, sample_seed):
    """Draw synthetic trajectories from a model (with ground-truth states)."""
    model = hmm_mod.model_from_json(Path(model_json).read_text(encoding="utf-8"))
    if runs < 1 or length < 1:
        raise InputError("--runs and --length must be positive")
    rows = []
    state_lines = ["seed,step,state"]
    for run in range(runs):
        obs, states = hmm_mod.sample(model, length, rng_seed=[sample_seed, run])
        for t in range(length):
            rows.append(MetricVector(seed=run, step=t, eval_accuracy=None, values=obs[t]))
            state_lines.append(f"{run},{t},{int(states[t])}")
    csv_path = Path(f"{prefix}.metrics.csv")
    states_path = Path(f"{prefix}.states.csv")
    write_metrics_csv(csv_path, rows, model.feature_names)
    states_path.write_text("\n".join(state_lines) + "\n", encoding="utf-8")
    click.echo(f"wrote {csv_path} and {states_path}")


@main.command("baseline")
@click.argument("metrics_csv", type=click.Path(exists=True))
@click.option("--output", "-o", "prefix", required=True, type=click.Path(), help="Output prefix.")
@click.option("--features", default="all", show_default=True, help="Comma-separated feature subset.")
@click.option("--k-min", default=1, show_default=True, type=int)
@click.option("--k-max", default=6, show_default=True, type=int)
@click.option("--fit-seed", default=0, show_default=True, type=int)
@_pipeline_errors
def cmd_baseline(metrics_csv, prefix, features, k_min, k_max, fit_seed):
    """K-means clustering baseline over pooled normalized observations."""
    feature_names, _ = read_metrics_csv(metrics_csv)
    subset = _parse_features(features, feature_names)
    _, trajs = _load_normalized(metrics_csv, subset)
    if len(trajs) < 5:
        raise InputError(f"baseline needs at least 5 seeds, got {len(trajs)}")
    if k_min > k_max:
        raise InputError(f"--k-min {k_min} exceeds --k-max {k_max}")
    labels, table = hmm_mod.kmeans_baseline(trajs, range(k_min, k_max + 1), rng_seed=fit_seed)

    selection_path = Path(f"{prefix}.selection.csv")
    labels_path = Path(f"{prefix}.labels.csv")
    selection_path.write_text(hmm_mod.selection_table_csv(table), encoding="utf-8")
    lines = ["seed,step,label"]
    i = 0
    for traj in trajs:
        for step in traj.steps:
            lines.append(f"{traj.seed},{int(step)},{int(labels[i])}")
            i += 1
    labels_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    click.echo(f"wrote {selection_path} and {labels_path}")


if __name__ == "__main__":
    main()

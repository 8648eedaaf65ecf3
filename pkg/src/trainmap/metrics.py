"""Per-checkpoint weight statistics.

Fourteen scalars summarize one checkpoint's included weight matrices and bias
vectors: elementwise L1 and Frobenius norms averaged over matrices, the
per-matrix L1/L2 sparsity ratio, pooled mean/median/variance of weights and of
biases, averaged trace and spectral norm and their ratio, and the pooled mean
and variance of all singular values. Variances are population variances
(no Bessel correction). Per-matrix quantities are averaged over the K included
matrices; pooled quantities concatenate entries (or singular values) of every
included matrix first.

Checkpoints without bias parameters report 0 for the three bias statistics and
emit a MissingBiasWarning so downstream keeps a fixed feature dimension.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .bundle import WeightSnapshot
from .errors import InputError, NumericalError

METRIC_NAMES: tuple[str, ...] = (
    "l1",
    "l2",
    "l1_over_l2",
    "mean_w",
    "median_w",
    "var_w",
    "mean_b",
    "median_b",
    "var_b",
    "trace",
    "spectral",
    "trace_over_spectral",
    "mean_sv",
    "var_sv",
)

CSV_FIXED_COLUMNS = ("seed", "step", "eval_acc")


class MissingBiasWarning(UserWarning):
    """Raised when a snapshot has no bias parameters; bias stats default to 0."""


@dataclass
class MetricVector:
    """One checkpoint's metric row: values aligned with a feature-name list."""

    seed: int
    step: int
    eval_accuracy: float | None
    values: np.ndarray


def singular_values(matrix: np.ndarray) -> np.ndarray:
    """Singular values of a 2-D matrix, descending, each >= 0."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2:
        raise InputError(f"singular_values: expected a 2-D matrix, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise InputError("singular_values: matrix contains non-finite entries")
    return np.linalg.svd(matrix, compute_uv=False)


def compute_metrics(snapshot: WeightSnapshot) -> MetricVector:
    """Compute the 14 metrics for one snapshot (order given by METRIC_NAMES)."""
    weights = snapshot.included_weights()
    if not weights:
        raise InputError(f"seed {snapshot.seed} step {snapshot.step}: no included weight matrices")
    k = len(weights)

    l1_terms, fro_terms, ratio_terms = [], [], []
    trace_terms, spectral_terms, ts_ratio_terms = [], [], []
    sv_pool = []
    for tensor in weights:
        w = np.asarray(tensor.data, dtype=float)
        l1 = float(np.abs(w).sum())
        fro = float(np.linalg.norm(w))
        svs = singular_values(w)
        sigma_max = float(svs[0])
        if sigma_max == 0.0:
            raise NumericalError(
                f"seed {snapshot.seed} step {snapshot.step}: weight {tensor.name!r} is all-zero; "
                "l1_over_l2 and trace_over_spectral are undefined"
            )
        l1_terms.append(l1)
        fro_terms.append(fro)
        ratio_terms.append(l1 / fro)
        trace_terms.append(float(np.trace(w)))
        spectral_terms.append(sigma_max)
        ts_ratio_terms.append(float(np.trace(w)) / sigma_max)
        sv_pool.append(svs)

    pooled_w = np.concatenate([np.asarray(t.data, dtype=float).ravel() for t in weights])
    pooled_sv = np.concatenate(sv_pool)

    biases = snapshot.included_biases()
    if biases:
        pooled_b = np.concatenate([np.asarray(t.data, dtype=float).ravel() for t in biases])
        mean_b = float(pooled_b.mean())
        median_b = float(np.median(pooled_b))
        var_b = float(pooled_b.var())
    else:
        warnings.warn(
            MissingBiasWarning(
                f"seed {snapshot.seed} step {snapshot.step}: no bias parameters; bias metrics set to 0"
            ),
            stacklevel=2,
        )
        mean_b = median_b = var_b = 0.0

    values = np.array(
        [
            sum(l1_terms) / k,
            sum(fro_terms) / k,
            sum(ratio_terms) / k,
            float(pooled_w.mean()),
            float(np.median(pooled_w)),
            float(pooled_w.var()),
            mean_b,
            median_b,
            var_b,
            sum(trace_terms) / k,
            sum(spectral_terms) / k,
            sum(ts_ratio_terms) / k,
            float(pooled_sv.mean()),
            float(pooled_sv.var()),
        ]
    )
    if not np.all(np.isfinite(values)):
        bad = METRIC_NAMES[int(np.flatnonzero(~np.isfinite(values))[0])]
        raise NumericalError(f"seed {snapshot.seed} step {snapshot.step}: metric {bad!r} is non-finite")
    return MetricVector(seed=snapshot.seed, step=snapshot.step, eval_accuracy=snapshot.eval_accuracy, values=values)


def _format_float(x: float) -> str:
    return repr(float(x))


def write_metrics_csv(
    path: str | Path,
    rows: Iterable[MetricVector],
    feature_names: Sequence[str] = METRIC_NAMES,
) -> None:
    """Write metric rows sorted by (seed, step); eval_acc blank when unknown."""
    ordered = sorted(rows, key=lambda r: (r.seed, r.step))
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(list(CSV_FIXED_COLUMNS) + list(feature_names))
        for row in ordered:
            if len(row.values) != len(feature_names):
                raise InputError(
                    f"seed {row.seed} step {row.step}: {len(row.values)} values for "
                    f"{len(feature_names)} feature columns"
                )
            acc = "" if row.eval_accuracy is None else _format_float(row.eval_accuracy)
            writer.writerow(
                [str(int(row.seed)), str(int(row.step)), acc] + [_format_float(v) for v in row.values]
            )


def read_metrics_csv(path: str | Path) -> tuple[list[str], list[MetricVector]]:
    """Read a metrics CSV; returns (feature names, rows). Errors carry line numbers."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}:1: empty metrics CSV") from None
        if tuple(header[: len(CSV_FIXED_COLUMNS)]) != CSV_FIXED_COLUMNS or len(header) <= len(CSV_FIXED_COLUMNS):
            raise InputError(
                f"{path}:1: header must start with {','.join(CSV_FIXED_COLUMNS)} "
                "followed by at least one feature column"
            )
        feature_names = header[len(CSV_FIXED_COLUMNS) :]
        rows: list[MetricVector] = []
        for lineno, record in enumerate(reader, start=2):
            if not record:
                continue
            if len(record) != len(header):
                raise InputError(f"{path}:{lineno}: expected {len(header)} fields, got {len(record)}")
            try:
                seed = int(record[0])
                step = int(record[1])
                acc = None if record[2] == "" else float(record[2])
                values = np.array([float(v) for v in record[3:]], dtype=float)
            except ValueError as exc:
                raise InputError(f"{path}:{lineno}: {exc}") from None
            if not np.all(np.isfinite(values)):
                raise InputError(f"{path}:{lineno}: non-finite metric value")
            rows.append(MetricVector(seed=seed, step=step, eval_accuracy=acc, values=values))
    return feature_names, rows

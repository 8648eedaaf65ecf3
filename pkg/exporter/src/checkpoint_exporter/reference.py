"""Reference computation of the per-checkpoint metric vector.

Kept deliberately separate from the analysis pipeline so exported bundles can
be cross-checked end to end: this module computes the fourteen statistics
straight from the classified tensors, while the pipeline computes them from
the bundle files. Names match the metrics CSV header columns.
"""

from __future__ import annotations

import statistics

import numpy as np

from .rules import ClassifiedTensor, ExporterError

METRIC_ORDER = (
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


def reference_metrics(classified: list[ClassifiedTensor]) -> dict[str, float]:
    weights = [t.data.astype(np.float64) for t in classified if t.kind == "weight"]
    biases = [t.data.astype(np.float64) for t in classified if t.kind == "bias"]
    if not weights:
        raise ExporterError("no weight matrices to compute metrics on")

    l1_list, fro_list, trace_list, spectral_list = [], [], [], []
    sv_values: list[float] = []
    for w in weights:
        l1_list.append(float(sum(abs(x) for x in w.ravel())))
        fro_list.append(float(sum(x * x for x in w.ravel()) ** 0.5))
        rows, cols = w.shape
        trace_list.append(float(sum(w[i, i] for i in range(min(rows, cols)))))
        svs = [float(s) for s in np.linalg.svd(w, compute_uv=False)]
        spectral_list.append(svs[0])
        if spectral_list[-1] == 0.0:
            raise ExporterError("all-zero weight matrix; ratio metrics undefined")
        sv_values.extend(svs)

    k = len(weights)
    weight_values = [float(x) for w in weights for x in w.ravel()]
    bias_values = [float(x) for b in biases for x in b.ravel()]

    out = {
        "l1": sum(l1_list) / k,
        "l2": sum(fro_list) / k,
        "l1_over_l2": sum(a / b for a, b in zip(l1_list, fro_list)) / k,
        "mean_w": statistics.fmean(weight_values),
        "median_w": statistics.median(weight_values),
        "var_w": statistics.pvariance(weight_values),
        "trace": sum(trace_list) / k,
        "spectral": sum(spectral_list) / k,
        "trace_over_spectral": sum(t / s for t, s in zip(trace_list, spectral_list)) / k,
        "mean_sv": statistics.fmean(sv_values),
        "var_sv": statistics.pvariance(sv_values),
    }
    if bias_values:
        out["mean_b"] = statistics.fmean(bias_values)
        out["median_b"] = statistics.median(bias_values)
        out["var_b"] = statistics.pvariance(bias_values)
    else:
        out["mean_b"] = out["median_b"] = out["var_b"] = 0.0
    return {name: out[name] for name in METRIC_ORDER}

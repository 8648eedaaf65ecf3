"""Tensor classification: which checkpoint entries become weights, biases,
or excluded blobs.

User rules are an ordered list; the first matching pattern wins and a
catch-all ("*") is mandatory. Without a rules file, defaults apply:
embedding/normalization tensors are excluded by name marker, rank >= 3
tensors are flattened to (dim0, rest) weights, 2-D tensors are weights,
1-D tensors named like a bias and paired with an included weight are biases,
and everything else is excluded with a warning.
"""

from __future__ import annotations

import fnmatch
import json
import re
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

ACTIONS = ("include_weight", "include_bias", "exclude")

# name segments that mark embedding or normalization parameters
DEFAULT_MARKERS = (
    "embed",
    "embedding",
    "emb",
    "wte",
    "wpe",
    "ln",
    "layernorm",
    "layer_norm",
    "norm",
    "bn",
    "batchnorm",
    "batch_norm",
    "running_mean",
    "running_var",
    "num_batches_tracked",
)


class ExporterError(ValueError):
    """Raised for unusable checkpoints, rules, or bundles."""


@dataclass
class ExportRule:
    pattern: str  # fnmatch glob against the tensor name
    action: str
    reshape: tuple[int, int] | None = None

    def matches(self, name: str) -> bool:
        return fnmatch.fnmatchcase(name, self.pattern)


@dataclass
class ClassifiedTensor:
    name: str
    kind: str  # weight | bias | excluded
    data: np.ndarray  # float32, rank 1 or 2


def load_rules(path: str | Path) -> list[ExportRule]:
    try:
        entries = json.loads(Path(path).read_text(encoding="utf-8"))
    except ValueError as exc:
        raise ExporterError(f"{path}: invalid rules JSON ({exc})") from exc
    if not isinstance(entries, list) or not entries:
        raise ExporterError(f"{path}: rules must be a non-empty JSON list")
    rules = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict) or "pattern" not in entry or "action" not in entry:
            raise ExporterError(f"{path}: rule {i} needs 'pattern' and 'action'")
        if entry["action"] not in ACTIONS:
            raise ExporterError(f"{path}: rule {i} action {entry['action']!r} not in {ACTIONS}")
        reshape = entry.get("reshape")
        if reshape is not None:
            if not (isinstance(reshape, list) and len(reshape) == 2 and all(int(x) != 0 for x in reshape)):
                raise ExporterError(f"{path}: rule {i} reshape must be [rows, cols]")
            reshape = (int(reshape[0]), int(reshape[1]))
        rules.append(ExportRule(pattern=str(entry["pattern"]), action=entry["action"], reshape=reshape))
    if not any(r.pattern == "*" for r in rules):
        raise ExporterError(f"{path}: rules need a catch-all pattern '*'")
    return rules


def _has_marker(name: str) -> bool:
    segments = re.split(r"[./_]", name.lower())
    joined = name.lower()
    for marker in DEFAULT_MARKERS:
        if "_" in marker and marker in joined:
            return True
        if any(seg.startswith(marker) for seg in segments):
            return True
    return False


def _flatten(name: str, array: np.ndarray, reshape: tuple[int, int] | None) -> np.ndarray:
    if reshape is not None:
        try:
            return array.reshape(reshape)
        except ValueError as exc:
            raise ExporterError(f"tensor {name!r}: cannot reshape {array.shape} to {reshape}") from exc
    if array.ndim == 0:
        return array.reshape(1)
    if array.ndim <= 2:
        return array
    return array.reshape(array.shape[0], -1)


def _cast_f32(name: str, array: np.ndarray, kind: str) -> np.ndarray:
    if not np.issubdtype(array.dtype, np.floating):
        if kind != "excluded":
            raise ExporterError(f"tensor {name!r}: non-floating dtype {array.dtype} cannot be a {kind}")
        warnings.warn(f"tensor {name!r}: non-floating dtype {array.dtype} cast to f32", stacklevel=3)
    return np.ascontiguousarray(array, dtype=np.float32)


def _classify_with_rules(
    tensors: dict[str, np.ndarray], rules: list[ExportRule]
) -> list[ClassifiedTensor]:
    out = []
    for name, array in tensors.items():
        rule = next((r for r in rules if r.matches(name)), None)
        if rule is None:
            raise ExporterError(f"tensor {name!r}: no rule matches and no catch-all given")
        kind = {"include_weight": "weight", "include_bias": "bias", "exclude": "excluded"}[rule.action]
        data = _flatten(name, np.asarray(array), rule.reshape)
        if kind == "weight" and data.ndim != 2:
            raise ExporterError(f"tensor {name!r}: weight must be 2-D after reshape, got {data.shape}")
        if kind == "bias" and data.ndim != 1:
            raise ExporterError(f"tensor {name!r}: bias must be 1-D, got {data.shape}")
        out.append(ClassifiedTensor(name=name, kind=kind, data=_cast_f32(name, data, kind)))
    return out


def _classify_default(tensors: dict[str, np.ndarray]) -> list[ClassifiedTensor]:
    names = set(tensors)
    included_weights = set()
    kinds: dict[str, str] = {}
    for name, array in tensors.items():
        array = np.asarray(array)
        if _has_marker(name):
            kinds[name] = "excluded"
        elif array.ndim >= 2:
            kinds[name] = "weight"
            included_weights.add(name)
        else:
            kinds[name] = ""  # rank <= 1, settled in the second pass

    for name, array in tensors.items():
        if kinds[name]:
            continue
        sibling = re.sub(r"bias$", "weight", name)
        if name.endswith("bias") and sibling in names and kinds.get(sibling) == "weight":
            kinds[name] = "bias"
        else:
            warnings.warn(f"tensor {name!r}: no classification rule applies; excluded", stacklevel=3)
            kinds[name] = "excluded"

    out = []
    for name, array in tensors.items():
        data = _flatten(name, np.asarray(array), None)
        out.append(ClassifiedTensor(name=name, kind=kinds[name], data=_cast_f32(name, data, kinds[name])))
    return out


def classify_tensors(
    tensors: dict[str, np.ndarray], rules: list[ExportRule] | None = None
) -> list[ClassifiedTensor]:
    """Classify every tensor; order follows the checkpoint's own ordering."""
    if not tensors:
        raise ExporterError("checkpoint holds no tensors")
    if rules is not None:
        return _classify_with_rules(tensors, rules)
    return _classify_default(tensors)

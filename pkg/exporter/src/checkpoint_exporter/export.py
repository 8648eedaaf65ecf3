"""Checkpoint loading, bundle writing, and round-trip verification.

Supports PyTorch checkpoint files (a state dict, or a dict wrapping one under
'state_dict' or 'model') and .npz archives. Bundle output is deterministic:
the same checkpoint and rules produce byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .rules import ClassifiedTensor, ExporterError, ExportRule, classify_tensors

BUNDLE_FORMAT_VERSION = 1


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    """Read a checkpoint into an ordered name -> array mapping."""
    path = Path(path)
    if not path.is_file():
        raise ExporterError(f"{path}: checkpoint file not found")
    if path.suffix == ".npz":
        archive = np.load(path)
        return {name: archive[name] for name in archive.files}

    import torch

    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise ExporterError(f"{path}: cannot load checkpoint ({exc})") from exc
    if isinstance(payload, dict):
        for key in ("state_dict", "model"):
            inner = payload.get(key)
            if isinstance(inner, dict) and inner and all(torch.is_tensor(v) for v in inner.values()):
                payload = inner
                break
    if not isinstance(payload, dict) or not payload:
        raise ExporterError(f"{path}: checkpoint does not contain a state dict")
    tensors = {}
    for name, value in payload.items():
        if not torch.is_tensor(value):
            raise ExporterError(f"{path}: entry {name!r} is not a tensor")
        tensors[str(name)] = value.detach().cpu().numpy()
    return tensors


def _tensor_filename(index: int, name: str) -> str:
    safe = "".join(c if c.isalnum() or c in "._-" else "_" for c in name)
    return f"{index:04d}_{safe}.bin"


def export_checkpoint(
    source: str | Path,
    out_dir: str | Path,
    seed: int,
    step: int,
    eval_accuracy: float | None = None,
    rules: list[ExportRule] | None = None,
) -> dict:
    """Export one checkpoint as a bundle directory; returns the manifest."""
    if step < 0:
        raise ExporterError(f"step must be >= 0, got {step}")
    if eval_accuracy is not None and not 0.0 <= eval_accuracy <= 1.0:
        raise ExporterError(f"eval accuracy must be in [0, 1], got {eval_accuracy}")
    tensors = load_checkpoint(source)
    classified = classify_tensors(tensors, rules)
    if not any(t.kind == "weight" for t in classified):
        raise ExporterError(f"{source}: no tensor classified as a weight matrix")

    entries = []
    blobs = []
    for i, tensor in enumerate(classified):
        fname = _tensor_filename(i, tensor.name)
        entries.append(
            {
                "name": tensor.name,
                "kind": tensor.kind,
                "dtype": "f32",
                "shape": [int(s) for s in tensor.data.shape],
                "file": fname,
            }
        )
        blobs.append((fname, np.ascontiguousarray(tensor.data, dtype="<f4").tobytes(order="C")))

    manifest = {
        "format_version": BUNDLE_FORMAT_VERSION,
        "seed": int(seed),
        "step": int(step),
        "eval_accuracy": None if eval_accuracy is None else float(eval_accuracy),
        "tensors": entries,
    }
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    for fname, payload in blobs:
        (out_dir / fname).write_bytes(payload)
    return manifest


def read_bundle(bundle_dir: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    """Read a bundle directory back to (manifest, name -> float32 array)."""
    bundle_dir = Path(bundle_dir)
    manifest_path = bundle_dir / "manifest.json"
    if not manifest_path.is_file():
        raise ExporterError(f"{bundle_dir}: missing manifest.json")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    tensors = {}
    for entry in manifest["tensors"]:
        raw = (bundle_dir / entry["file"]).read_bytes()
        shape = tuple(entry["shape"])
        expected = 4 * int(np.prod(shape))
        if len(raw) != expected:
            raise ExporterError(
                f"{bundle_dir}: tensor {entry['name']!r} holds {len(raw)} bytes, expected {expected}"
            )
        tensors[entry["name"]] = np.frombuffer(raw, dtype="<f4").reshape(shape)
    return manifest, tensors


@dataclass
class TensorCheck:
    name: str
    kind: str
    exact_after_cast: bool
    cast_deviation: float  # |source - float32(source)|, max over entries


@dataclass
class RoundtripReport:
    checks: list[TensorCheck] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.exact_after_cast for c in self.checks)

    @property
    def max_cast_deviation(self) -> float:
        return max((c.cast_deviation for c in self.checks), default=0.0)


def verify_roundtrip(
    source: str | Path,
    bundle_dir: str | Path,
    rules: list[ExportRule] | None = None,
) -> RoundtripReport:
    """Check that bundle tensors equal the float32-cast source exactly.

    Raises on any mismatch; precision lost by the float64 -> float32 cast is
    reported per tensor, not treated as failure.
    """
    tensors = load_checkpoint(source)
    classified = {t.name: t for t in classify_tensors(tensors, rules)}
    _, bundle_tensors = read_bundle(bundle_dir)

    report = RoundtripReport()
    for name, expected in classified.items():
        if name not in bundle_tensors:
            raise ExporterError(f"bundle is missing tensor {name!r}")
        got = bundle_tensors[name]
        exact = got.shape == expected.data.shape and np.array_equal(got, expected.data)
        original = np.asarray(tensors[name], dtype=np.float64).reshape(expected.data.shape)
        cast_dev = float(np.abs(original - expected.data.astype(np.float64)).max()) if original.size else 0.0
        report.checks.append(
            TensorCheck(name=name, kind=expected.kind, exact_after_cast=exact, cast_deviation=cast_dev)
        )
        if not exact:
            raise ExporterError(f"tensor {name!r}: bundle values do not match the float32-cast source")
    return report

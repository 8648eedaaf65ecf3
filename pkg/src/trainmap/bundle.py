"""Checkpoint bundle v1 reader/writer.

A bundle is a directory (or zip archive with the same layout) holding
``manifest.json`` plus one raw binary file per tensor: little-endian IEEE-754
float32, row-major, no header. The manifest schema:

    {
      "format_version": 1,
      "seed": int,
      "step": int,
      "eval_accuracy": float | null,
      "tensors": [
        {"name": str, "kind": "weight"|"bias"|"excluded",
         "dtype": "f32", "shape": [int, ...], "file": str}
      ]
    }

Tensors marked ``excluded`` (embeddings, normalization layers, ...) are kept
in the snapshot but skipped by metric computation. The exclusion decision
belongs to whatever wrote the bundle; this module never applies name
heuristics.
"""

from __future__ import annotations

import io
import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
VALID_KINDS = ("weight", "bias", "excluded")


@dataclass
class TensorRecord:
    """One named tensor: a 2-D weight matrix, 1-D bias vector, or excluded blob."""

    name: str
    kind: str
    data: np.ndarray  # float32, shape preserved

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape


@dataclass
class WeightSnapshot:
    """All tensors of one model checkpoint, tagged with seed and step."""

    seed: int
    step: int
    tensors: list[TensorRecord] = field(default_factory=list)
    eval_accuracy: float | None = None

    def included_weights(self) -> list[TensorRecord]:
        return [t for t in self.tensors if t.kind == "weight"]

    def included_biases(self) -> list[TensorRecord]:
        return [t for t in self.tensors if t.kind == "bias"]


def validate_manifest(manifest: dict) -> None:
    """Check manifest structure; raise InputError naming the offending field."""
    if not isinstance(manifest, dict):
        raise InputError("manifest: expected a JSON object")
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise InputError(f"manifest.format_version: unknown version {version!r} (expected {FORMAT_VERSION})")
    for key in ("seed", "step"):
        if not isinstance(manifest.get(key), int) or isinstance(manifest.get(key), bool):
            raise InputError(f"manifest.{key}: expected an integer, got {manifest.get(key)!r}")
    if manifest["step"] < 0:
        raise InputError(f"manifest.step: must be >= 0, got {manifest['step']}")
    acc = manifest.get("eval_accuracy")
    if acc is not None:
        if not isinstance(acc, (int, float)) or isinstance(acc, bool) or not 0.0 <= float(acc) <= 1.0:
            raise InputError(f"manifest.eval_accuracy: expected a fraction in [0, 1] or null, got {acc!r}")
    entries = manifest.get("tensors")
    if not isinstance(entries, list) or not entries:
        raise InputError("manifest.tensors: expected a non-empty list")

    seen: set[str] = set()
    for i, entry in enumerate(entries):
        where = f"manifest.tensors[{i}]"
        if not isinstance(entry, dict):
            raise InputError(f"{where}: expected an object")
        name = entry.get("name")
        if not isinstance(name, str) or not name:
            raise InputError(f"{where}.name: expected a non-empty string")
        if name in seen:
            raise InputError(f"{where}.name: duplicate tensor name {name!r}")
        seen.add(name)
        kind = entry.get("kind")
        if kind not in VALID_KINDS:
            raise InputError(f"{where}.kind: {kind!r} is not one of {VALID_KINDS}")
        dtype = entry.get("dtype")
        if dtype != "f32":
            raise InputError(f"{where}.dtype: unsupported dtype {dtype!r} (only 'f32' in v1)")
        shape = entry.get("shape")
        if (
            not isinstance(shape, list)
            or not shape
            or not all(isinstance(s, int) and not isinstance(s, bool) and s > 0 for s in shape)
        ):
            raise InputError(f"{where}.shape: expected a list of positive integers, got {shape!r}")
        if len(shape) > 2:
            raise InputError(f"{where}.shape: rank {len(shape)} not supported (max 2; reshape or exclude upstream)")
        if kind == "weight" and len(shape) != 2:
            raise InputError(f"{where}.shape: kind 'weight' requires a 2-D shape, got {shape!r}")
        if kind == "bias" and len(shape) != 1:
            raise InputError(f"{where}.shape: kind 'bias' requires a 1-D shape, got {shape!r}")
        if not isinstance(entry.get("file"), str) or not entry["file"]:
            raise InputError(f"{where}.file: expected a non-empty string")


class _DirSource:
    def __init__(self, root: Path):
        self.root = root

    def read(self, name: str) -> bytes:
        path = self.root / name
        if not path.is_file():
            raise InputError(f"{self.root}: missing bundle file {name!r}")
        return path.read_bytes()


class _ZipSource:
    def __init__(self, archive: zipfile.ZipFile, label: str):
        self.archive = archive
        self.label = label

    def read(self, name: str) -> bytes:
        try:
            return self.archive.read(name)
        except KeyError:
            raise InputError(f"{self.label}: missing bundle file {name!r}") from None


def _load_tensor(source, entry: dict, index: int) -> TensorRecord:
    shape = tuple(entry["shape"])
    count = int(np.prod(shape))
    raw = source.read(entry["file"])
    expected = 4 * count
    if len(raw) != expected:
        raise InputError(
            f"tensor {entry['name']!r}: file {entry['file']!r} holds {len(raw)} bytes, "
            f"expected {expected} for shape {list(shape)}"
        )
    flat = np.frombuffer(raw, dtype="<f4")
    bad = np.flatnonzero(~np.isfinite(flat))
    if bad.size:
        raise InputError(f"tensor {entry['name']!r}: non-finite value at flat index {int(bad[0])}")
    return TensorRecord(name=entry["name"], kind=entry["kind"], data=flat.reshape(shape))


def read_bundle(path: str | Path) -> WeightSnapshot:
    """Read and validate a checkpoint bundle from a directory or zip archive."""
    path = Path(path)
    if path.is_dir():
        source = _DirSource(path)
    elif path.is_file() and zipfile.is_zipfile(path):
        source = _ZipSource(zipfile.ZipFile(path), str(path))
    else:
        raise InputError(f"{path}: not a bundle directory or zip archive")

    try:
        manifest = json.loads(source.read(MANIFEST_NAME).decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise InputError(f"{path}/{MANIFEST_NAME}: invalid JSON ({exc})") from exc
    validate_manifest(manifest)

    tensors = [_load_tensor(source, entry, i) for i, entry in enumerate(manifest["tensors"])]
    snapshot = WeightSnapshot(
        seed=manifest["seed"],
        step=manifest["step"],
        tensors=tensors,
        eval_accuracy=None if manifest["eval_accuracy"] is None else float(manifest["eval_accuracy"]),
    )
    if not snapshot.included_weights():
        raise InputError(f"{path}: no included weight matrices (all tensors bias or excluded)")
    return snapshot


def _tensor_filename(index: int, name: str) -> str:
    safe = "".join(c if c.isalnum() or c in "._-" else "_" for c in name)
    return f"{index:04d}_{safe}.bin"


def write_bundle(snapshot: WeightSnapshot, path: str | Path) -> None:
    """Write a snapshot as a bundle; a ``.zip`` suffix selects archive form.

    Tensor bytes round-trip exactly: data is stored as little-endian float32.
    """
    entries = []
    blobs: list[tuple[str, bytes]] = []
    for i, tensor in enumerate(snapshot.tensors):
        if tensor.kind not in VALID_KINDS:
            raise InputError(f"tensor {tensor.name!r}: invalid kind {tensor.kind!r}")
        data = np.ascontiguousarray(tensor.data, dtype="<f4")
        fname = _tensor_filename(i, tensor.name)
        entries.append(
            {
                "name": tensor.name,
                "kind": tensor.kind,
                "dtype": "f32",
                "shape": [int(s) for s in data.shape],
                "file": fname,
            }
        )
        blobs.append((fname, data.tobytes(order="C")))

    manifest = {
        "format_version": FORMAT_VERSION,
        "seed": int(snapshot.seed),
        "step": int(snapshot.step),
        "eval_accuracy": None if snapshot.eval_accuracy is None else float(snapshot.eval_accuracy),
        "tensors": entries,
    }
    validate_manifest(manifest)
    manifest_bytes = json.dumps(manifest, indent=2).encode("utf-8")

    path = Path(path)
    if path.suffix == ".zip":
        buffer = io.BytesIO()
        with zipfile.ZipFile(buffer, "w", compression=zipfile.ZIP_STORED) as archive:
            # fixed timestamp keeps archive bytes reproducible
            for name, payload in [(MANIFEST_NAME, manifest_bytes)] + blobs:
                info = zipfile.ZipInfo(name, date_time=(1980, 1, 1, 0, 0, 0))
                archive.writestr(info, payload)
        path.write_bytes(buffer.getvalue())
    else:
        path.mkdir(parents=True, exist_ok=True)
        (path / MANIFEST_NAME).write_bytes(manifest_bytes)
        for name, payload in blobs:
            (path / name).write_bytes(payload)

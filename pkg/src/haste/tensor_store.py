"""Bit-exact file IO shared by every stage of the toolkit.

Five on-disk artifacts, all deliberately dumb:

* HSTE tensor files: little-endian binary, float32 payload only.
* Embedding manifests: JSON listing per-layer tensor files plus optional
  labels/predictions paths, all relative to the manifest.
* Label files: two-column CSV (``index,label``), LF line endings.
* Subset files: JSON with the selected sample indices.
* Score tables: CSV with header ``candidate,metric,score,accuracy``.

Everything is validated at load time so downstream code can assume clean
inputs. Loaded objects are immutable in spirit: nothing here mutates them,
and they are safe to share across threads. Storage is float32; all
downstream arithmetic is done in float64.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"HSTE"
FORMAT_VERSION = 1
DTYPE_F32 = 0

# magic(4) + version u32(4) + dtype u8(1) + ndim u8(1) + reserved u16(2)
_HEADER = struct.Struct("<4sIBBH")


@dataclass(frozen=True)
class EmbeddingSet:
    """Per-sample feature blocks, one ``[n, d_l]`` float array per layer."""

    layers: tuple[tuple[str, np.ndarray], ...]
    n: int
    sample_ids: tuple[str, ...] | None = None

    def layer(self, name: str) -> np.ndarray:
        for layer_name, block in self.layers:
            if layer_name == name:
                return block
        raise KeyError(f"no layer named {name!r}")

    @property
    def layer_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.layers)


@dataclass(frozen=True)
class PredictionMatrix:
    """Row-stochastic softmax outputs of a source model, shape ``[n, |Z|]``."""

    rows: np.ndarray
    class_names: tuple[str, ...] | None = None

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def num_classes(self) -> int:
        return self.rows.shape[1]


@dataclass(frozen=True)
class LabelVector:
    """Integer target labels in ``[0, num_classes)``."""

    labels: np.ndarray
    num_classes: int

    @property
    def n(self) -> int:
        return self.labels.shape[0]


@dataclass(frozen=True)
class SubsetIndex:
    """Ordered list of distinct sample indices into a set of ``source_n`` rows.

    Order carries meaning (selection rank, e.g. descending hardness), so it
    is preserved through IO round-trips.
    """

    indices: np.ndarray
    source_n: int
    method: str = "manual"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        object.__setattr__(self, "indices", idx)
        if idx.ndim != 1:
            raise ValueError("subset indices must be one-dimensional")
        if idx.size and (idx.min() < 0 or idx.max() >= self.source_n):
            raise ValueError(
                f"subset index out of range for source_n={self.source_n}"
            )
        if np.unique(idx).size != idx.size:
            raise ValueError("subset indices must be distinct")

    def __len__(self) -> int:
        return int(self.indices.size)


def _check_finite(arr: np.ndarray, context: str) -> None:
    if not np.all(np.isfinite(arr)):
        bad = int(np.flatnonzero(~np.isfinite(arr).ravel())[0])
        raise ValueError(f"{context}: non-finite element at flat index {bad}")


def validate_tensor(arr: np.ndarray, context: str = "tensor") -> np.ndarray:
    """Coerce to float32 and enforce the on-disk tensor invariants."""
    arr = np.ascontiguousarray(arr, dtype=np.float32)
    if arr.ndim < 1:
        raise ValueError(f"{context}: zero-dimensional tensors not supported")
    if any(s < 1 for s in arr.shape):
        raise ValueError(f"{context}: all dimensions must be >= 1, got {arr.shape}")
    _check_finite(arr, context)
    return arr


def write_tensor(path: str | Path, t: np.ndarray) -> None:
    """Write ``t`` as an HSTE file (float32, little-endian, row-major)."""
    path = Path(path)
    t = validate_tensor(t, str(path))
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, DTYPE_F32, t.ndim, 0)
    dims = struct.pack(f"<{t.ndim}Q", *t.shape)
    payload = t.astype("<f4", copy=False).tobytes(order="C")
    path.write_bytes(header + dims + payload)


def read_tensor(path: str | Path) -> np.ndarray:
    """Read an HSTE file back into a float32 array, bit-exactly."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, version, dtype, ndim, reserved = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic bytes {magic!r}")
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {version}")
    if dtype != DTYPE_F32:
        raise ValueError(f"{path}: unsupported dtype code {dtype}")
    if ndim < 1:
        raise ValueError(f"{path}: ndim must be >= 1")
    offset = _HEADER.size
    if len(raw) < offset + 8 * ndim:
        raise ValueError(f"{path}: truncated dimension list")
    shape = struct.unpack_from(f"<{ndim}Q", raw, offset)
    offset += 8 * ndim
    if any(s < 1 for s in shape):
        raise ValueError(f"{path}: all dimensions must be >= 1, got {shape}")
    count = int(np.prod(shape))
    expected = offset + 4 * count
    if len(raw) != expected:
        raise ValueError(
            f"{path}: payload size mismatch ({len(raw)} bytes, expected {expected})"
        )
    data = np.frombuffer(raw, dtype="<f4", count=count, offset=offset)
    arr = data.reshape(shape).copy()
    _check_finite(arr, str(path))
    return arr


def read_embedding_set(manifest_path: str | Path) -> EmbeddingSet:
    """Load an embedding manifest and all tensor blocks it references.

    Layers are loaded in manifest order; the shared leading dimension and
    layer-name uniqueness are verified.
    """
    manifest_path = Path(manifest_path)
    manifest = json.loads(manifest_path.read_text())
    entries = manifest.get("layers", [])
    if not entries:
        raise ValueError(f"{manifest_path}: no layers")
    base = manifest_path.parent
    layers: list[tuple[str, np.ndarray]] = []
    seen: set[str] = set()
    n = None
    for entry in entries:
        name = entry["name"]
        if name in seen:
            raise ValueError(f"{manifest_path}: duplicate layer name {name!r}")
        seen.add(name)
        block = read_tensor(base / entry["file"])
        if block.ndim != 2:
            raise ValueError(
                f"{manifest_path}: layer {name!r} must be 2-D, got shape {block.shape}"
            )
        if "dim" in entry and block.shape[1] != entry["dim"]:
            raise ValueError(
                f"{manifest_path}: layer {name!r} dim mismatch: "
                f"file has {block.shape[1]}, manifest says {entry['dim']}"
            )
        if n is None:
            n = block.shape[0]
        elif block.shape[0] != n:
            raise ValueError(
                f"{manifest_path}: row-count mismatch: layer {name!r} has "
                f"{block.shape[0]} rows, expected {n}"
            )
        layers.append((name, block))
    declared = manifest.get("n")
    if declared is not None and declared != n:
        raise ValueError(
            f"{manifest_path}: row-count mismatch: manifest says n={declared}, "
            f"tensors have {n}"
        )
    return EmbeddingSet(layers=tuple(layers), n=int(n))


def read_predictions(path: str | Path) -> PredictionMatrix:
    """Load a prediction matrix and enforce row-stochasticity (1e-5)."""
    rows = read_tensor(path)
    if rows.ndim != 2:
        raise ValueError(f"{path}: predictions must be 2-D, got shape {rows.shape}")
    if rows.min() < 0.0 or rows.max() > 1.0:
        raise ValueError(f"{path}: prediction entries must lie in [0, 1]")
    sums = rows.astype(np.float64).sum(axis=1)
    worst = np.abs(sums - 1.0).max()
    if worst > 1e-5:
        bad = int(np.abs(sums - 1.0).argmax())
        raise ValueError(
            f"{path}: row {bad} sums to {sums[bad]:.8f}, outside 1e-5 of 1"
        )
    return PredictionMatrix(rows=rows)


def read_manifest(manifest_path: str | Path) -> dict:
    """Return the raw manifest dict with file paths resolved to absolute."""
    manifest_path = Path(manifest_path)
    manifest = json.loads(manifest_path.read_text())
    base = manifest_path.parent
    for entry in manifest.get("layers", []):
        entry["file"] = str(base / entry["file"])
    for key in ("labels", "predictions"):
        if manifest.get(key):
            manifest[key] = str(base / manifest[key])
    return manifest


def read_manifest_predictions(manifest_path: str | Path) -> PredictionMatrix:
    manifest = read_manifest(manifest_path)
    if not manifest.get("predictions"):
        raise ValueError(f"{manifest_path}: manifest has no predictions entry")
    return read_predictions(manifest["predictions"])


def read_manifest_labels(
    manifest_path: str | Path, num_classes: int | None = None
) -> LabelVector:
    manifest = read_manifest(manifest_path)
    if not manifest.get("labels"):
        raise ValueError(f"{manifest_path}: manifest has no labels entry")
    return read_labels(manifest["labels"], num_classes)


def write_manifest(
    manifest_path: str | Path,
    layers: list[tuple[str, str, int]],
    n: int,
    labels: str | None = None,
    predictions: str | None = None,
) -> None:
    """Write a manifest; ``layers`` entries are (name, relative file, dim)."""
    manifest = {
        "n": int(n),
        "layers": [
            {"name": name, "file": file, "dim": int(dim)}
            for name, file, dim in layers
        ],
        "labels": labels,
        "predictions": predictions,
    }
    Path(manifest_path).write_text(json.dumps(manifest, indent=2) + "\n")


def read_labels(path: str | Path, num_classes: int | None = None) -> LabelVector:
    """Read a labels CSV; rows must cover indices 0..n-1 contiguously.

    With ``num_classes=None`` the class count is inferred as max label + 1.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["index", "label"]:
            raise ValueError(f"{path}: expected header 'index,label', got {header}")
        pairs = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                pairs.append((int(row[0]), int(row[1])))
            except (ValueError, IndexError):
                raise ValueError(f"{path} line {lineno}: malformed row {row}") from None
    if not pairs:
        raise ValueError(f"{path}: no label rows")
    pairs.sort()
    labels = np.empty(len(pairs), dtype=np.int64)
    for expected, (idx, label) in enumerate(pairs):
        if idx != expected:
            if idx > expected:
                raise ValueError(f"{path}: index gap at {expected}")
            raise ValueError(f"{path}: duplicate index {idx}")
        labels[expected] = label
    if labels.min() < 0:
        raise ValueError(f"{path}: negative label at index {int(labels.argmin())}")
    if num_classes is None:
        num_classes = int(labels.max()) + 1
    elif labels.max() >= num_classes:
        bad = int(labels.argmax())
        raise ValueError(
            f"{path}: label out of range at index {bad} "
            f"({int(labels.max())} >= {num_classes})"
        )
    return LabelVector(labels=labels, num_classes=int(num_classes))


def write_labels(path: str | Path, labels: LabelVector) -> None:
    lines = ["index,label"]
    lines += [f"{i},{int(y)}" for i, y in enumerate(labels.labels)]
    Path(path).write_text("\n".join(lines) + "\n", newline="\n")


def read_subset(path: str | Path) -> SubsetIndex:
    path = Path(path)
    payload = json.loads(path.read_text())
    try:
        return SubsetIndex(
            indices=np.asarray(payload["indices"], dtype=np.int64),
            source_n=int(payload["source_n"]),
            method=payload.get("method", "manual"),
            params=payload.get("params", {}),
        )
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None


def write_subset(path: str | Path, subset: SubsetIndex) -> None:
    payload = {
        "source_n": int(subset.source_n),
        "indices": [int(i) for i in subset.indices],
        "method": subset.method,
        "params": subset.params,
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n")


def read_scores(path: str | Path) -> list[tuple[str, str, float, float | None]]:
    """Read a scores CSV into (candidate, metric, score, accuracy) tuples."""
    path = Path(path)
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["candidate", "metric", "score", "accuracy"]:
            raise ValueError(
                f"{path}: expected header 'candidate,metric,score,accuracy', got {header}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ValueError(f"{path} line {lineno}: expected 4 columns, got {row}")
            candidate, metric, score, accuracy = row
            out.append(
                (
                    candidate,
                    metric,
                    float(score),
                    float(accuracy) if accuracy != "" else None,
                )
            )
    return out


def write_scores(
    path: str | Path, rows: list[tuple[str, str, float, float | None]]
) -> None:
    lines = ["candidate,metric,score,accuracy"]
    for candidate, metric, score, accuracy in rows:
        acc = "" if accuracy is None else repr(float(accuracy))
        lines.append(f"{candidate},{metric},{float(score)!r},{acc}")
    Path(path).write_text("\n".join(lines) + "\n", newline="\n")

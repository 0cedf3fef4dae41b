"""Writers for the toolkit's on-disk formats.

The extractor talks to the scoring toolkit only through files, so the
formats are implemented here from their wire definitions rather than
imported: HSTE tensors (magic `HSTE`, u32 LE version 1, u8 dtype 0 for
float32, u8 ndim, u16 reserved, u64 LE dims, row-major float32 payload),
the embedding manifest JSON, and the two-column labels CSV.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

_HEADER = struct.Struct("<4sIBBH")


def write_tensor(path: str | Path, array: np.ndarray) -> None:
    array = np.ascontiguousarray(array, dtype=np.float32)
    if array.ndim < 1 or any(s < 1 for s in array.shape):
        raise ValueError(f"cannot write tensor of shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise ValueError(f"{path}: non-finite element in tensor")
    header = _HEADER.pack(b"HSTE", 1, 0, array.ndim, 0)
    dims = struct.pack(f"<{array.ndim}Q", *array.shape)
    Path(path).write_bytes(header + dims + array.astype("<f4").tobytes(order="C"))


def write_labels(path: str | Path, labels: list[int]) -> None:
    lines = ["index,label"] + [f"{i},{int(y)}" for i, y in enumerate(labels)]
    Path(path).write_text("\n".join(lines) + "\n", newline="\n")


def write_manifest(
    path: str | Path,
    layers: list[tuple[str, str, int]],
    n: int,
    labels: str | None,
    predictions: str | None,
) -> None:
    manifest = {
        "n": int(n),
        "layers": [
            {"name": name, "file": file, "dim": int(dim)}
            for name, file, dim in layers
        ],
        "labels": labels,
        "predictions": predictions,
    }
    Path(path).write_text(json.dumps(manifest, indent=2) + "\n")

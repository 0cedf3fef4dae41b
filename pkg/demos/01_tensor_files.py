"""Round-trip the on-disk formats: tensors, manifests, labels, subsets.

Everything downstream reads through these loaders, so this is the place to
see what a dataset directory looks like on disk.
"""

import json
import tempfile
from pathlib import Path

import numpy as np

from haste import tensor_store as ts

workdir = Path(tempfile.mkdtemp(prefix="haste_demo_"))
print(f"writing into {workdir}\n")

# A tensor file is magic bytes, a fixed header, u64 dims, then f32 payload.
block = np.arange(12, dtype=np.float32).reshape(4, 3)
ts.write_tensor(workdir / "embeddings.hste", block)
back = ts.read_tensor(workdir / "embeddings.hste")
print("tensor round-trip bit-exact:", np.array_equal(block, back))
print("file size:", (workdir / "embeddings.hste").stat().st_size, "bytes")

# Labels are a two-column CSV, indices contiguous from zero.
labels = ts.LabelVector(labels=np.array([0, 1, 1, 0]), num_classes=2)
ts.write_labels(workdir / "labels.csv", labels)
print("\nlabels.csv:")
print((workdir / "labels.csv").read_text())

# Predictions are just another tensor, but the loader enforces that rows
# are probability distributions.
preds = np.array(
    [[0.9, 0.1], [0.2, 0.8], [0.4, 0.6], [0.7, 0.3]], dtype=np.float32
)
ts.write_tensor(workdir / "predictions.hste", preds)

# The manifest ties the pieces together with paths relative to itself.
ts.write_manifest(
    workdir / "manifest.json",
    layers=[("block3", "embeddings.hste", 3)],
    n=4,
    labels="labels.csv",
    predictions="predictions.hste",
)
print("manifest.json:")
print(json.dumps(json.loads((workdir / "manifest.json").read_text()), indent=2))

embeddings = ts.read_embedding_set(workdir / "manifest.json")
print("\nloaded embedding set: n =", embeddings.n, "layers =", embeddings.layer_names)
loaded_preds = ts.read_manifest_predictions(workdir / "manifest.json")
print("prediction rows sum to one:", loaded_preds.rows.sum(axis=1))

# Subsets carry their selection order; here, samples 2 and 0 in that order.
subset = ts.SubsetIndex(indices=np.array([2, 0]), source_n=4, method="manual")
ts.write_subset(workdir / "subset.json", subset)
print("\nsubset round-trip order:", ts.read_subset(workdir / "subset.json").indices)

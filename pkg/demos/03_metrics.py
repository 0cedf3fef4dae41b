"""The transferability metrics, plain and wrapped.

A metric consumes a source model's softmax outputs (or embeddings, for the
Gaussian one) on the target samples plus the target labels, and returns a
single number meant to rank models by how well they would fine-tune.
Passing a hard subset evaluates the same metric on fewer, harder rows.
"""

import numpy as np

from haste import metrics as mx
from haste.hardness import HardnessVector, select_hard_subset
from haste.tensor_store import LabelVector, PredictionMatrix

rng = np.random.default_rng(1)

# A model that mostly gets it right: each target class y lines up with
# source class y, with some softmax spread.
n, num_y, num_z = 120, 3, 5
y = rng.integers(0, num_y, size=n)
logits = 0.5 * rng.normal(size=(n, num_z))
logits[np.arange(n), y] += 2.5
rows = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
preds = PredictionMatrix(rows=rows.astype(np.float32))
labels = LabelVector(labels=y, num_classes=num_y)

print("log-likelihood of labels under the empirical mixture head:")
print("  leep:", round(mx.leep(preds, labels).value, 4))

print("negative conditional entropy given the argmax dummy labels:")
print("  nce (hard counts):", round(mx.nce(preds, labels).value, 4))
print("  nce (soft mass):  ",
      round(mx.nce(preds, labels, conditional_mode='soft').value, 4))

# GBC works in an embedding space: overlapping class Gaussians pull the
# score toward -num_pairs, separated ones toward zero.
features = rng.normal(size=(n, 8)) + 3.0 * np.eye(8)[y % 8]
print("class-separability in embedding space:")
print("  gbc:", round(mx.gbc(features, labels, mode="spherical").value, 4))

# The wrapper: same metric, hardest 25% of the rows only. Here hardness is
# synthetic; see demo 02 for computing it from embeddings.
h = HardnessVector(scores=rng.uniform(0, 2, size=n), method="ca")
wrapped = mx.haste_score("leep", h, 0.25, preds=preds, labels=labels)
print("\nhard-subset wrapper:")
print(f"  {wrapped.metric}: {wrapped.value:.4f} "
      f"(on {wrapped.subset_size}/{wrapped.total_n} rows)")

# Ensembles: sum of member scores, or score of averaged probabilities.
noisier = np.exp(0.5 * logits) / np.exp(0.5 * logits).sum(axis=1, keepdims=True)
member2 = PredictionMatrix(rows=noisier.astype(np.float32))
print("\nensemble scores over two members:")
print("  ms-leep:", round(mx.ms_leep([preds, member2], labels).value, 4))
print("  e-leep: ", round(mx.e_leep([preds, member2], labels).value, 4))

# For the averaged-probability ensemble on hard subsets, members first
# agree on a common subset by union of their per-member hard subsets.
h2 = HardnessVector(scores=rng.uniform(0, 2, size=n), method="ca")
common = mx.union_subsets([select_hard_subset(h, 0.2), select_hard_subset(h2, 0.2)])
print("  union subset size:", len(common))
print("  e-leep on union: ",
      round(mx.e_leep([preds, member2], labels, common).value, 4))

"""Score sample hardness two ways and carve up the target set.

The class-agnostic route compares every target sample against a source
dataset in the model's embedding spaces; the class-specific route measures
how far each sample sits from its own class in a single embedding space.
"""

import numpy as np

from haste import hardness as hd
from haste.tensor_store import EmbeddingSet, LabelVector

rng = np.random.default_rng(0)

# Toy setup: 2-D embeddings, two target classes around (4, 0) and (0, 4).
# The source dataset lives in the same region as the bulk of the target
# data; a handful of target samples are planted far away.
n_source, n_target = 40, 30
means = np.array([[4.0, 0.0], [0.0, 4.0]])
source = means[rng.integers(0, 2, n_source)] + 0.4 * rng.normal(size=(n_source, 2))

labels = rng.integers(0, 2, n_target)
target = means[labels] + 0.4 * rng.normal(size=(n_target, 2))
outliers = [3, 11, 19]
target[outliers] = -means[labels[outliers]] + 0.4 * rng.normal(size=(3, 2))


def one_layer(block):
    return EmbeddingSet(
        layers=(("block3", block.astype(np.float32)),), n=block.shape[0]
    )


# Class-agnostic: normalize, take layer-averaged cosine similarities, then
# hardness is one minus the mean similarity to the source set.
src = hd.normalize_per_layer(one_layer(source))
tgt = hd.normalize_per_layer(one_layer(target))
sim = hd.similarity_matrix(src, tgt)
h_ca = hd.hardness_class_agnostic(sim)
print("class-agnostic hardness, planted outliers vs rest:")
print("  outliers:", np.round(h_ca.scores[outliers], 3))
print("  typical: ", np.round(np.delete(h_ca.scores, outliers)[:5], 3))

# Class-specific: fit one Gaussian per class, hardness is the Mahalanobis
# distance from a sample to its own class mean.
label_vec = LabelVector(labels=labels, num_classes=2)
gaussians = hd.class_gaussians(target, label_vec, mode="full")
h_cs = hd.hardness_class_specific(target, label_vec, gaussians)
print("\nclass-specific hardness, same comparison:")
print("  outliers:", np.round(h_cs.scores[outliers], 3))
print("  typical: ", np.round(np.delete(h_cs.scores, outliers)[:5], 3))

# The hard subset is the top fraction by hardness, hardest first.
subset = hd.select_hard_subset(h_ca, fraction=0.2)
print("\ntop-20% hard subset (ca):", subset.indices)
print("planted outliers recovered:", set(outliers) <= set(subset.indices.tolist()))

# Buckets split the full ranking into equal slices, bucket 1 hardest.
buckets = hd.bucketize(h_ca, 3)
print("bucket sizes:", [len(b) for b in buckets])

# Stochastic augmentation appends a few easier samples after the hard ones.
augmented = hd.augment_with_easy(subset, h_ca, easy_fraction=0.1, seed=1)
print("after easy augmentation:", augmented.indices)

# If the source set is large, a per-class fraction keeps similarity cheap.
source_labels = LabelVector(labels=rng.integers(0, 2, n_source), num_classes=2)
keep = hd.subsample_source(source_labels, fraction=0.25, seed=0)
print("\nsource subsample kept", len(keep), "of", n_source, "samples")

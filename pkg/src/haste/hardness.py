"""Per-sample hardness scores and hard-subset construction.

Two complementary scoring routes:

* Class-agnostic: one minus the layer-averaged cosine similarity between a
  target sample and every source sample. Needs matching embedding layers
  for the source and target sets, no target labels.
* Class-specific: Mahalanobis distance of each sample from its own class
  Gaussian fit in a single embedding space. Needs target labels, no source
  data.

Hard subsets, hardness buckets, and stochastic easy-sample augmentation
are all derived from a hardness vector by rank.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .tensor_store import EmbeddingSet, LabelVector, SubsetIndex

# Target columns per similarity chunk. Fixed so the reduction order (and
# therefore the bits of the result) never depends on the worker count.
_CHUNK = 256


@dataclass(frozen=True)
class ClassGaussian:
    """Gaussian fit to one class: mean plus full or spherical covariance."""

    class_id: int
    mean: np.ndarray
    covariance: np.ndarray | float  # d x d matrix, or scalar variance
    count: int

    @property
    def spherical(self) -> bool:
        return np.isscalar(self.covariance)


@dataclass(frozen=True)
class HardnessVector:
    """Non-negative hardness score per target sample."""

    scores: np.ndarray
    method: str  # "ca" | "cs"

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        object.__setattr__(self, "scores", scores)
        if self.method not in ("ca", "cs"):
            raise ValueError(f"unknown hardness method {self.method!r}")
        if not np.all(np.isfinite(scores)):
            raise ValueError("hardness scores must be finite")
        lo, hi = (0.0, 2.0) if self.method == "ca" else (0.0, np.inf)
        # Cosine arithmetic can stray past the bound by a few ulps; clamp
        # that, reject anything larger.
        if scores.size and (scores.min() < lo - 1e-9 or scores.max() > hi + 1e-9):
            raise ValueError(
                f"{self.method} hardness out of range "
                f"[{scores.min():.6g}, {scores.max():.6g}]"
            )
        object.__setattr__(self, "scores", np.clip(scores, lo, hi))

    @property
    def n(self) -> int:
        return int(self.scores.size)


def _max_workers() -> int:
    cap = os.environ.get("HASTE_THREADS", "")
    try:
        return max(1, int(cap))
    except ValueError:
        return 1


def normalize_per_layer(e: EmbeddingSet) -> EmbeddingSet:
    """L2-normalize every row of every layer block.

    Raises on rows with norm <= 1e-12, reporting the layer and sample index.
    """
    out = []
    for name, block in e.layers:
        norms = np.linalg.norm(block.astype(np.float64), axis=1)
        if norms.min() <= 1e-12:
            bad = int(norms.argmin())
            raise ValueError(
                f"zero-norm embedding: layer {name!r}, sample {bad}"
            )
        out.append((name, (block / norms[:, None]).astype(np.float32)))
    return EmbeddingSet(layers=tuple(out), n=e.n, sample_ids=e.sample_ids)


def similarity_matrix(src: EmbeddingSet, tgt: EmbeddingSet) -> np.ndarray:
    """Layer-averaged dot products between all source/target sample pairs.

    Both sets must already be row-normalized (so the dot product is cosine
    similarity) and share the same layer schema. The result is ``[M, N]``
    float64 with M source rows and N target rows, accumulated chunk by
    chunk in a fixed order so the bits never depend on parallelism.
    """
    if src.layer_names != tgt.layer_names:
        raise ValueError(
            f"layer-schema mismatch: source {src.layer_names} vs "
            f"target {tgt.layer_names}"
        )
    for (name, sblock), (_, tblock) in zip(src.layers, tgt.layers):
        if sblock.shape[1] != tblock.shape[1]:
            raise ValueError(
                f"layer-schema mismatch: layer {name!r} has dim "
                f"{sblock.shape[1]} in source, {tblock.shape[1]} in target"
            )
        _check_normalized(sblock, name, "source")
        _check_normalized(tblock, name, "target")

    num_layers = len(src.layers)
    sim = np.zeros((src.n, tgt.n), dtype=np.float64)
    starts = range(0, tgt.n, _CHUNK)

    def fill(start: int) -> None:
        stop = min(start + _CHUNK, tgt.n)
        acc = np.zeros((src.n, stop - start), dtype=np.float64)
        for (_, sblock), (_, tblock) in zip(src.layers, tgt.layers):
            acc += sblock.astype(np.float64) @ tblock[start:stop].astype(np.float64).T
        sim[:, start:stop] = acc / num_layers

    workers = _max_workers()
    if workers == 1:
        for start in starts:
            fill(start)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(fill, starts))
    return sim


def _check_normalized(block: np.ndarray, name: str, side: str) -> None:
    norms = np.linalg.norm(block.astype(np.float64), axis=1)
    if np.abs(norms - 1.0).max() > 1e-4:
        bad = int(np.abs(norms - 1.0).argmax())
        raise ValueError(
            f"{side} layer {name!r} is not normalized "
            f"(row {bad} has norm {norms[bad]:.6f}); run normalize_per_layer first"
        )


def hardness_class_agnostic(sim: np.ndarray) -> HardnessVector:
    """Hardness of each target sample: one minus its mean source similarity."""
    sim = np.asarray(sim, dtype=np.float64)
    if sim.ndim != 2:
        raise ValueError(f"similarity matrix must be 2-D, got shape {sim.shape}")
    if not np.all(np.isfinite(sim)):
        raise ValueError("similarity matrix contains non-finite entries")
    scores = 1.0 - sim.mean(axis=0)
    return HardnessVector(scores=scores, method="ca")


def subsample_source(labels: LabelVector, fraction: float, seed: int) -> SubsetIndex:
    """Uniform per-class subsample: ceil(fraction * N_c) samples per class."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    rng = np.random.default_rng(seed)
    chosen = []
    for c in range(labels.num_classes):
        members = np.flatnonzero(labels.labels == c)
        if members.size == 0:
            continue
        k = int(np.ceil(fraction * members.size))
        chosen.append(rng.choice(members, size=k, replace=False))
    indices = np.sort(np.concatenate(chosen))
    return SubsetIndex(
        indices=indices,
        source_n=labels.n,
        method="manual",
        params={"fraction": fraction, "seed": seed, "kind": "source-subsample"},
    )


def class_gaussians(
    features: np.ndarray,
    labels: LabelVector,
    mode: str = "full",
    ridge: float = 1e-6,
) -> list[ClassGaussian]:
    """Fit one Gaussian per class with the biased (1/N_c) covariance.

    Full mode adds ``ridge * (tr(cov)/d) * I``; spherical mode collapses the
    covariance to the mean per-dimension variance, floored at 1e-12.
    """
    if mode not in ("full", "spherical"):
        raise ValueError(f"unknown covariance mode {mode!r}")
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise ValueError(f"features must be 2-D, got shape {features.shape}")
    if features.shape[0] != labels.n:
        raise ValueError(
            f"features have {features.shape[0]} rows, labels have {labels.n}"
        )
    d = features.shape[1]
    out = []
    for c in range(labels.num_classes):
        members = features[labels.labels == c]
        if members.shape[0] == 0:
            raise ValueError(f"class {c} has no samples")
        mu = members.mean(axis=0)
        centered = members - mu
        if mode == "full":
            cov = centered.T @ centered / members.shape[0]
            cov += ridge * (np.trace(cov) / d) * np.eye(d)
            out.append(ClassGaussian(c, mu, cov, members.shape[0]))
        else:
            var = float(np.mean(centered**2))
            out.append(ClassGaussian(c, mu, max(var, 1e-12), members.shape[0]))
    return out


def hardness_class_specific(
    features: np.ndarray,
    labels: LabelVector,
    gaussians: list[ClassGaussian],
) -> HardnessVector:
    """Mahalanobis distance of each sample from its own class Gaussian.

    Distances are computed by Cholesky solves, never by inverting the
    covariance; a covariance that fails the factorization is an error.
    """
    features = np.asarray(features, dtype=np.float64)
    by_class = {g.class_id: g for g in gaussians}
    scores = np.empty(labels.n, dtype=np.float64)
    factor_cache: dict[int, np.ndarray] = {}
    for c in range(labels.num_classes):
        members = np.flatnonzero(labels.labels == c)
        if members.size == 0:
            continue
        if c not in by_class:
            raise ValueError(f"no Gaussian supplied for class {c}")
        g = by_class[c]
        diff = features[members] - g.mean
        if g.spherical:
            scores[members] = np.linalg.norm(diff, axis=1) / np.sqrt(g.covariance)
            continue
        if c not in factor_cache:
            try:
                factor_cache[c] = np.linalg.cholesky(g.covariance)
            except np.linalg.LinAlgError:
                raise ValueError(
                    f"class {c} covariance is not positive-definite after "
                    "regularization"
                ) from None
        chol = factor_cache[c]
        solved = np.linalg.solve(chol, diff.T)  # lower-triangular system
        scores[members] = np.sqrt(np.sum(solved**2, axis=0))
    return HardnessVector(scores=scores, method="cs")


def _round_half_up(x: float) -> int:
    # Avoids Python's banker's rounding so subset sizes are reproducible.
    return int(np.floor(x + 0.5))


def rank_by_hardness(h: HardnessVector) -> np.ndarray:
    """Sample indices sorted by descending hardness, ties by ascending index."""
    return np.argsort(-h.scores, kind="stable")


def select_hard_subset(h: HardnessVector, fraction: float) -> SubsetIndex:
    """Top ``max(1, round(fraction * N))`` samples by descending hardness."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    k = max(1, _round_half_up(fraction * h.n))
    order = rank_by_hardness(h)
    return SubsetIndex(
        indices=order[:k],
        source_n=h.n,
        method=h.method,
        params={"fraction": fraction},
    )


def bucketize(h: HardnessVector, num_buckets: int) -> list[SubsetIndex]:
    """Split the hardness-sorted samples into contiguous buckets.

    Bucket sizes differ by at most one, with earlier (harder) buckets taking
    the remainder. Bucket 1 is the hardest.
    """
    if num_buckets < 1:
        raise ValueError(f"num_buckets must be >= 1, got {num_buckets}")
    if num_buckets > h.n:
        raise ValueError(f"num_buckets={num_buckets} exceeds sample count {h.n}")
    order = rank_by_hardness(h)
    base, rem = divmod(h.n, num_buckets)
    buckets = []
    start = 0
    for b in range(num_buckets):
        size = base + (1 if b < rem else 0)
        buckets.append(
            SubsetIndex(
                indices=order[start : start + size],
                source_n=h.n,
                method="bucket",
                params={"bucket": b + 1, "num_buckets": num_buckets},
            )
        )
        start += size
    return buckets


def augment_with_easy(
    hard: SubsetIndex,
    h: HardnessVector,
    easy_fraction: float,
    seed: int,
) -> SubsetIndex:
    """Append ``round(easy_fraction * N)`` uniformly drawn non-hard samples."""
    if not 0.0 <= easy_fraction <= 1.0:
        raise ValueError(f"easy_fraction must be in [0, 1], got {easy_fraction}")
    if hard.source_n != h.n:
        raise ValueError(
            f"subset source_n={hard.source_n} does not match hardness length {h.n}"
        )
    extra = _round_half_up(easy_fraction * h.n)
    if extra == 0:
        return hard
    complement = np.setdiff1d(np.arange(h.n), hard.indices)
    if extra > complement.size:
        raise ValueError(
            f"requested {extra} easy samples but only {complement.size} remain"
        )
    rng = np.random.default_rng(seed)
    added = np.sort(rng.choice(complement, size=extra, replace=False))
    return SubsetIndex(
        indices=np.concatenate([hard.indices, added]),
        source_n=hard.source_n,
        method=hard.method,
        params={**hard.params, "easy_fraction": easy_fraction, "seed": seed},
    )

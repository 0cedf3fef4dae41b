"""Seeded synthetic model-selection experiments.

Real transfer accuracies come from fine-tuning runs that take GPU-days;
this generator stands in for them at desk scale. It builds a target
dataset from class Gaussians, plants a contaminated subpopulation (samples
pulled toward a wrong class), and simulates a pool of source models of
varying quality.

The construction bakes in the phenomenon the hard-subset wrapper exploits:
every candidate handles the clean samples easily, and each candidate's
confidence on them is a random trait unrelated to its quality, so scores
computed on the full set are partly noise. Quality differences only show
on the contaminated samples, which is exactly where the hardness scores
point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bounds import fit_optimal_head
from .evaluation import ExperimentRecord
from .hardness import (
    HardnessVector,
    class_gaussians,
    hardness_class_agnostic,
    hardness_class_specific,
    normalize_per_layer,
    select_hard_subset,
    similarity_matrix,
)
from .metrics import leep
from .tensor_store import (
    EmbeddingSet,
    LabelVector,
    PredictionMatrix,
    SubsetIndex,
)


@dataclass(frozen=True)
class SynthConfig:
    """Generator knobs. The defaults make a 10-candidate selection task."""

    num_classes: int = 4
    num_source_classes: int = 6
    feature_dim: int = 16
    n_train: int = 600
    n_heldout: int = 300
    n_source: int = 200
    num_candidates: int = 10
    contamination: float = 0.3
    noise_levels: tuple[float, ...] | None = None  # default linspace(.05, .9)
    easy_confidence: tuple[float, float] = (1.5, 5.0)
    hard_scale: float = 4.0
    logit_noise: float = 0.3
    fraction: float = 0.25
    hardness_method: str = "cs"

    def __post_init__(self):
        if not 0.0 <= self.contamination <= 1.0:
            raise ValueError(
                f"infeasible config: contamination {self.contamination} not in [0, 1]"
            )
        if self.num_source_classes < self.num_classes:
            raise ValueError(
                "infeasible config: need at least as many source classes as "
                "target classes"
            )
        if self.num_classes < 2:
            raise ValueError("infeasible config: need at least 2 target classes")
        if self.hardness_method not in ("ca", "cs"):
            raise ValueError(f"unknown hardness method {self.hardness_method!r}")
        if not 0.0 < self.fraction <= 1.0:
            raise ValueError(f"fraction must be in (0, 1], got {self.fraction}")

    def resolved_noise_levels(self) -> np.ndarray:
        if self.noise_levels is not None:
            if len(self.noise_levels) != self.num_candidates:
                raise ValueError(
                    "infeasible config: noise_levels length does not match "
                    "num_candidates"
                )
            return np.asarray(self.noise_levels, dtype=np.float64)
        return np.linspace(0.05, 0.9, self.num_candidates)


@dataclass(frozen=True)
class SynthExperiment:
    """Everything the generator produced, for inspection and reuse."""

    config: SynthConfig
    seed: int
    candidates: tuple[str, ...]
    noise_levels: np.ndarray
    features_train: np.ndarray
    labels_train: LabelVector
    features_heldout: np.ndarray
    labels_heldout: LabelVector
    preds_train: tuple[PredictionMatrix, ...]
    preds_heldout: tuple[PredictionMatrix, ...]
    accuracies: np.ndarray
    hardness: HardnessVector
    hard_subset: SubsetIndex
    contaminated_train: np.ndarray  # bool mask over train samples
    source_embeddings: EmbeddingSet  # normalized, single layer
    target_embeddings: EmbeddingSet  # normalized view of features_train


def _sample_features(
    rng: np.random.Generator,
    means: np.ndarray,
    n: int,
    contamination: float,
    num_classes: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Draw features, labels, contamination flags, confusers, difficulties."""
    d = means.shape[1]
    labels = rng.integers(0, num_classes, size=n)
    contaminated = rng.random(n) < contamination
    confusers = np.array(
        [
            rng.choice([c for c in range(num_classes) if c != y])
            for y in labels
        ],
        dtype=np.int64,
    )
    # Per-sample difficulty spreads the noise level at which a candidate
    # starts misreading the sample, so candidate accuracy degrades smoothly
    # instead of cliff-dropping once half the confuser mass wins.
    difficulty = rng.uniform(0.4, 1.6, size=n)
    lam = rng.uniform(0.45, 0.75, size=n)
    noise = rng.normal(size=(n, d))
    x = np.where(
        contaminated[:, None],
        (1 - lam[:, None]) * means[labels]
        + lam[:, None] * means[confusers]
        + 1.0 * noise,
        means[labels] + 0.5 * noise,
    )
    return x, labels, contaminated, confusers, difficulty


def _candidate_predictions(
    rng: np.random.Generator,
    labels: np.ndarray,
    contaminated: np.ndarray,
    confusers: np.ndarray,
    difficulty: np.ndarray,
    noise_level: float,
    easy_confidence: float,
    config: SynthConfig,
) -> np.ndarray:
    """Softmax outputs of one simulated source model on one split."""
    n = labels.size
    num_z = config.num_source_classes
    logits = config.logit_noise * rng.normal(size=(n, num_z))
    idx = np.arange(n)
    # Target class y maps to source class y; extra source classes act as
    # distractor mass only.
    easy = ~contaminated
    logits[idx[easy], labels[easy]] += easy_confidence
    hard = contaminated
    pull = noise_level * difficulty[hard]
    logits[idx[hard], labels[hard]] += config.hard_scale * (1.0 - pull)
    logits[idx[hard], confusers[hard]] += config.hard_scale * pull
    logits -= logits.max(axis=1, keepdims=True)
    probs = np.exp(logits)
    probs /= probs.sum(axis=1, keepdims=True)
    return probs.astype(np.float32)


def _head_accuracy(
    preds_train: PredictionMatrix,
    labels_train: LabelVector,
    preds_heldout: PredictionMatrix,
    labels_heldout: LabelVector,
) -> float:
    """Refit the mixture head on train rows, score argmax accuracy held out."""
    fit = fit_optimal_head(preds_train, labels_train, tol=1e-6, max_iter=200)
    scores = preds_heldout.rows.astype(np.float64) @ fit.q.T
    predicted = np.argmax(scores, axis=1)
    return float(np.mean(predicted == labels_heldout.labels))


def _embedding_set(features: np.ndarray, layer: str = "features") -> EmbeddingSet:
    block = np.ascontiguousarray(features, dtype=np.float32)
    return EmbeddingSet(layers=((layer, block),), n=block.shape[0])


def synth_experiment(
    config: SynthConfig, seed: int
) -> tuple[list[ExperimentRecord], SynthExperiment]:
    """Generate one seeded experiment and its score/accuracy records.

    Records cover the baseline metric ("leep") and its hard-subset variant
    ("haste-leep") for every candidate; the returned bundle carries the raw
    artifacts for anything further (buckets, other metrics, CA hardness).
    """
    rng = np.random.default_rng(seed)
    d = config.feature_dim
    if d < config.num_classes:
        raise ValueError("infeasible config: feature_dim below num_classes")
    # Random orthonormal class directions, scaled for clear separation.
    basis, _ = np.linalg.qr(rng.normal(size=(d, config.num_classes)))
    means = 4.0 * basis.T

    x_train, y_train, contam_train, conf_train, diff_train = _sample_features(
        rng, means, config.n_train, config.contamination, config.num_classes
    )
    x_held, y_held, contam_held, conf_held, diff_held = _sample_features(
        rng, means, config.n_heldout, config.contamination, config.num_classes
    )
    x_source, _, _, _, _ = _sample_features(
        rng, means, config.n_source, 0.0, config.num_classes
    )
    labels_train = LabelVector(labels=y_train, num_classes=config.num_classes)
    labels_held = LabelVector(labels=y_held, num_classes=config.num_classes)

    noise_levels = config.resolved_noise_levels()
    confidences = rng.uniform(*config.easy_confidence, size=config.num_candidates)

    preds_train = []
    preds_held = []
    accuracies = []
    for m in range(config.num_candidates):
        pm_train = PredictionMatrix(
            rows=_candidate_predictions(
                rng, y_train, contam_train, conf_train, diff_train,
                noise_levels[m], confidences[m], config,
            )
        )
        pm_held = PredictionMatrix(
            rows=_candidate_predictions(
                rng, y_held, contam_held, conf_held, diff_held,
                noise_levels[m], confidences[m], config,
            )
        )
        preds_train.append(pm_train)
        preds_held.append(pm_held)
        accuracies.append(_head_accuracy(pm_train, labels_train, pm_held, labels_held))

    source_set = normalize_per_layer(_embedding_set(x_source))
    target_set = normalize_per_layer(_embedding_set(x_train))
    if config.hardness_method == "ca":
        hardness = hardness_class_agnostic(similarity_matrix(source_set, target_set))
    else:
        gaussians = class_gaussians(x_train, labels_train, mode="full")
        hardness = hardness_class_specific(x_train, labels_train, gaussians)
    hard_subset = select_hard_subset(hardness, config.fraction)

    candidates = tuple(f"cand{m:02d}" for m in range(config.num_candidates))
    records = []
    for m, name in enumerate(candidates):
        full = leep(preds_train[m], labels_train)
        hard = leep(preds_train[m], labels_train, hard_subset)
        records.append(
            ExperimentRecord(name, "leep", full.value, accuracies[m])
        )
        records.append(
            ExperimentRecord(name, "haste-leep", hard.value, accuracies[m])
        )
    bundle = SynthExperiment(
        config=config,
        seed=seed,
        candidates=candidates,
        noise_levels=noise_levels,
        features_train=x_train,
        labels_train=labels_train,
        features_heldout=x_held,
        labels_heldout=labels_held,
        preds_train=tuple(preds_train),
        preds_heldout=tuple(preds_held),
        accuracies=np.asarray(accuracies),
        hardness=hardness,
        hard_subset=hard_subset,
        contaminated_train=contam_train,
        source_embeddings=source_set,
        target_embeddings=target_set,
    )
    return records, bundle


def bucket_scores(
    bundle: SynthExperiment, buckets: list[SubsetIndex]
) -> np.ndarray:
    """LEEP per (bucket, candidate); rows follow the bucket order given."""
    out = np.empty((len(buckets), len(bundle.candidates)), dtype=np.float64)
    for b, subset in enumerate(buckets):
        for m in range(len(bundle.candidates)):
            out[b, m] = leep(bundle.preds_train[m], bundle.labels_train, subset).value
    return out

"""Transferability metrics, each evaluable on the full set or any subset.

LEEP, NCE, and GBC score a single source model; MS-LEEP and E-LEEP score
an ensemble. Passing a hard subset instead of the full index set is the
whole trick: every empirical distribution is rebuilt from the subset
alone, so a metric restricted to the hard subset behaves exactly like the
metric on a smaller dataset.

All log-likelihoods use the natural logarithm and float64 accumulation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hardness import HardnessVector, class_gaussians, select_hard_subset
from .tensor_store import LabelVector, PredictionMatrix, SubsetIndex


@dataclass(frozen=True)
class EmpiricalJoint:
    """Empirical joint/marginal/conditional over (target, source) labels.

    ``conditional[:, z]`` is a distribution over target labels given source
    class z. Columns with no prediction mass (``zero_support``) are left as
    zeros and must never be read; the mixture in LEEP never touches them
    because the corresponding softmax entries are all zero on the subset.
    """

    joint: np.ndarray  # [Y, Z]
    marginal_z: np.ndarray  # [Z]
    conditional: np.ndarray  # [Y, Z]
    zero_support: np.ndarray  # [Z] bool
    n: int


@dataclass(frozen=True)
class MetricScore:
    metric: str
    value: float
    subset_size: int
    total_n: int
    params: dict = field(default_factory=dict)


def _subset_rows(
    preds: PredictionMatrix,
    labels: LabelVector,
    subset: SubsetIndex | None,
) -> tuple[np.ndarray, np.ndarray]:
    """Select and validate the working rows, returning float64 copies."""
    if preds.n != labels.n:
        raise ValueError(
            f"predictions have {preds.n} rows, labels have {labels.n}"
        )
    rows = preds.rows.astype(np.float64)
    y = labels.labels
    if subset is not None:
        if subset.source_n != preds.n:
            raise ValueError(
                f"subset source_n={subset.source_n} does not match n={preds.n}"
            )
        if len(subset) == 0:
            raise ValueError("empty subset")
        rows = rows[subset.indices]
        y = y[subset.indices]
    return rows, y


def empirical_joint(
    preds: PredictionMatrix,
    labels: LabelVector,
    subset: SubsetIndex | None = None,
) -> EmpiricalJoint:
    """Accumulate softmax mass into the joint over (target, source) labels."""
    rows, y = _subset_rows(preds, labels, subset)
    n = rows.shape[0]
    joint = np.zeros((labels.num_classes, rows.shape[1]), dtype=np.float64)
    np.add.at(joint, y, rows)
    joint /= n
    marginal_z = joint.sum(axis=0)
    zero_support = marginal_z == 0.0
    safe = np.where(zero_support, 1.0, marginal_z)
    conditional = joint / safe[None, :]
    conditional[:, zero_support] = 0.0
    return EmpiricalJoint(
        joint=joint,
        marginal_z=marginal_z,
        conditional=conditional,
        zero_support=zero_support,
        n=n,
    )


def _mixture_probabilities(
    rows: np.ndarray, y: np.ndarray, conditional: np.ndarray
) -> np.ndarray:
    # Per-sample probability of the true label under the mixture head
    # sum_z P(y|z) f(x)_z.
    return np.einsum("iz,iz->i", conditional[y], rows)


def leep(
    preds: PredictionMatrix,
    labels: LabelVector,
    subset: SubsetIndex | None = None,
) -> MetricScore:
    """Average log-likelihood of the target labels under the mixture head.

    The empirical conditional is rebuilt from the evaluated rows themselves,
    so scoring a subset is the same as scoring a smaller dataset.
    """
    rows, y = _subset_rows(preds, labels, subset)
    joint = empirical_joint(preds, labels, subset)
    mix = _mixture_probabilities(rows, y, joint.conditional)
    if mix.min() <= 0.0:
        bad = int(mix.argmin())
        raise ValueError(f"zero mixture probability for sample {bad}")
    value = float(np.mean(np.log(mix)))
    return MetricScore(
        metric="leep",
        value=value,
        subset_size=rows.shape[0],
        total_n=preds.n,
        params={},
    )


def dummy_labels(
    preds: PredictionMatrix, subset: SubsetIndex | None = None
) -> np.ndarray:
    """Most likely source class per sample; ties go to the lowest index."""
    rows = preds.rows
    if subset is not None:
        rows = rows[subset.indices]
    return np.argmax(rows, axis=1)


def nce(
    preds: PredictionMatrix,
    labels: LabelVector,
    subset: SubsetIndex | None = None,
    conditional_mode: str = "hard",
) -> MetricScore:
    """Negative conditional entropy of target labels given dummy labels.

    Hard mode (the standalone baseline) estimates P(y|z) from counts of
    (label, dummy label) pairs. Soft mode reuses the softmax-mass
    conditional that LEEP builds; it can hit zero-probability pairs, which
    are an error rather than a silent -inf.
    """
    if conditional_mode not in ("hard", "soft"):
        raise ValueError(f"unknown conditional mode {conditional_mode!r}")
    rows, y = _subset_rows(preds, labels, subset)
    z = np.argmax(rows, axis=1)
    n = rows.shape[0]
    if conditional_mode == "hard":
        counts = np.zeros((labels.num_classes, rows.shape[1]), dtype=np.float64)
        np.add.at(counts, (y, z), 1.0)
        col = counts.sum(axis=0)
        probs = counts[y, z] / col[z]
    else:
        joint = empirical_joint(preds, labels, subset)
        probs = joint.conditional[y, z]
        if probs.min() <= 0.0:
            bad = int(probs.argmin())
            raise ValueError(
                f"zero conditional probability for sample {bad} in soft mode"
            )
    value = float(np.mean(np.log(probs)))
    return MetricScore(
        metric="nce",
        value=value,
        subset_size=n,
        total_n=preds.n,
        params={"conditional_mode": conditional_mode},
    )


def _bhattacharyya(
    mu_a: np.ndarray,
    cov_a: np.ndarray | float,
    mu_b: np.ndarray,
    cov_b: np.ndarray | float,
    d: int,
) -> float:
    diff = mu_a - mu_b
    if np.isscalar(cov_a) and np.isscalar(cov_b):
        pooled = 0.5 * (cov_a + cov_b)
        quad = float(diff @ diff) / pooled
        logdet = d * (np.log(pooled) - 0.5 * (np.log(cov_a) + np.log(cov_b)))
    else:
        pooled = 0.5 * (np.asarray(cov_a) + np.asarray(cov_b))
        try:
            chol = np.linalg.cholesky(pooled)
        except np.linalg.LinAlgError:
            raise ValueError("pooled covariance is not positive-definite") from None
        solved = np.linalg.solve(chol, diff)
        quad = float(solved @ solved)
        logdet = (
            2.0 * float(np.sum(np.log(np.diag(chol))))
            - 0.5 * (_logdet_pd(cov_a) + _logdet_pd(cov_b))
        )
    return 0.125 * quad + 0.5 * logdet


def _logdet_pd(cov: np.ndarray) -> float:
    try:
        chol = np.linalg.cholesky(np.asarray(cov))
    except np.linalg.LinAlgError:
        raise ValueError("class covariance is not positive-definite") from None
    return 2.0 * float(np.sum(np.log(np.diag(chol))))


def gbc(
    features: np.ndarray,
    labels: LabelVector,
    subset: SubsetIndex | None = None,
    mode: str = "spherical",
    ridge: float = 1e-6,
) -> MetricScore:
    """Negated sum of pairwise Bhattacharyya coefficients between classes.

    Each class present in the evaluated rows is fit as a Gaussian in the
    feature space; heavily overlapping classes drag the score toward
    -C(C-1)/2, well-separated ones toward 0.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.shape[0] != labels.n:
        raise ValueError(
            f"features have {features.shape[0]} rows, labels have {labels.n}"
        )
    y = labels.labels
    if subset is not None:
        if subset.source_n != labels.n:
            raise ValueError(
                f"subset source_n={subset.source_n} does not match n={labels.n}"
            )
        if len(subset) == 0:
            raise ValueError("empty subset")
        features = features[subset.indices]
        y = y[subset.indices]
    present = np.unique(y)
    if present.size < 2:
        raise ValueError(
            f"GBC needs at least 2 classes in the subset, found {present.size}"
        )
    # Re-index the present classes so the Gaussian fit sees no empty class.
    remap = {int(c): i for i, c in enumerate(present)}
    compact = LabelVector(
        labels=np.asarray([remap[int(c)] for c in y], dtype=np.int64),
        num_classes=present.size,
    )
    gaussians = class_gaussians(features, compact, mode=mode, ridge=ridge)
    d = features.shape[1]
    total = 0.0
    for i in range(len(gaussians)):
        for j in range(i + 1, len(gaussians)):
            bd = _bhattacharyya(
                gaussians[i].mean,
                gaussians[i].covariance,
                gaussians[j].mean,
                gaussians[j].covariance,
                d,
            )
            total -= float(np.exp(-bd))
    return MetricScore(
        metric="gbc",
        value=total,
        subset_size=y.size,
        total_n=labels.n,
        params={"mode": mode, "ridge": ridge, "feature_space": "embedding"},
    )


def haste_score(
    metric: str,
    hardness: HardnessVector,
    fraction: float,
    preds: PredictionMatrix | None = None,
    labels: LabelVector | None = None,
    features: np.ndarray | None = None,
    mode: str = "spherical",
    ridge: float = 1e-6,
) -> MetricScore:
    """Evaluate a metric on the hard subset selected from ``hardness``.

    This is the wrapper the whole toolkit is named for: the metric itself is
    unchanged, only the rows it sees are restricted to the hardest
    ``fraction`` of the target set.
    """
    subset = select_hard_subset(hardness, fraction)
    if metric == "leep":
        base = leep(preds, labels, subset)
    elif metric == "nce":
        base = nce(preds, labels, subset)
    elif metric == "gbc":
        base = gbc(features, labels, subset, mode=mode, ridge=ridge)
    else:
        raise ValueError(f"unknown metric {metric!r}")
    return MetricScore(
        metric=f"haste-{base.metric}",
        value=base.value,
        subset_size=base.subset_size,
        total_n=base.total_n,
        params={**base.params, "hardness_method": hardness.method, "fraction": fraction},
    )


def ms_leep(
    member_preds: list[PredictionMatrix],
    labels: LabelVector,
    member_subsets: list[SubsetIndex | None] | None = None,
) -> MetricScore:
    """Sum of per-member LEEP scores; members may use different subsets."""
    if not member_preds:
        raise ValueError("ensemble must have at least one member")
    if member_subsets is None:
        member_subsets = [None] * len(member_preds)
    if len(member_subsets) != len(member_preds):
        raise ValueError(
            f"{len(member_preds)} members but {len(member_subsets)} subsets"
        )
    scores = [
        leep(preds, labels, subset)
        for preds, subset in zip(member_preds, member_subsets)
    ]
    return MetricScore(
        metric="ms-leep",
        value=float(sum(s.value for s in scores)),
        subset_size=scores[0].subset_size,
        total_n=labels.n,
        params={"members": len(member_preds)},
    )


def union_subsets(subsets: list[SubsetIndex]) -> SubsetIndex:
    """Sorted-ascending union of the given subsets."""
    if not subsets:
        raise ValueError("no subsets to union")
    source_n = subsets[0].source_n
    for s in subsets[1:]:
        if s.source_n != source_n:
            raise ValueError(
                f"source_n mismatch in union: {s.source_n} vs {source_n}"
            )
    merged = np.unique(np.concatenate([s.indices for s in subsets]))
    return SubsetIndex(
        indices=merged, source_n=source_n, method="manual", params={"kind": "union"}
    )


def e_leep(
    member_preds: list[PredictionMatrix],
    labels: LabelVector,
    subset: SubsetIndex | None = None,
) -> MetricScore:
    """LEEP of the ensemble-averaged per-sample probabilities.

    Each member builds its own conditional on the common subset; the
    per-sample mixture probabilities are averaged over members (weight 1/K,
    which keeps the score <= 0) before the log.
    """
    if not member_preds:
        raise ValueError("ensemble must have at least one member")
    per_member = []
    for preds in member_preds:
        rows, y = _subset_rows(preds, labels, subset)
        joint = empirical_joint(preds, labels, subset)
        per_member.append(_mixture_probabilities(rows, y, joint.conditional))
    avg = np.mean(per_member, axis=0)
    if avg.min() <= 0.0:
        bad = int(avg.argmin())
        raise ValueError(f"zero averaged probability for sample {bad}")
    value = float(np.mean(np.log(avg)))
    n = per_member[0].size
    return MetricScore(
        metric="e-leep",
        value=value,
        subset_size=n,
        total_n=labels.n,
        params={"members": len(member_preds), "member_weight": "1/K"},
    )

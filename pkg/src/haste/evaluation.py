"""Correlation between metric scores and transfer accuracies.

The protocol: each candidate (source architecture, target dataset, or
ensemble) contributes one (score, accuracy) pair per metric; a metric is
judged by the correlation of its scores with the accuracies across
candidates, and a modified metric by its relative improvement over the
baseline it wraps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

IMPROVEMENT_EPS = 1e-12


@dataclass(frozen=True)
class ExperimentRecord:
    candidate: str
    metric: str
    score: float
    accuracy: float

    def __post_init__(self):
        if not np.isfinite(self.score) or not np.isfinite(self.accuracy):
            raise ValueError(
                f"non-finite record for ({self.candidate}, {self.metric})"
            )


@dataclass(frozen=True)
class CorrelationReport:
    coefficient_name: str
    coefficients: dict[str, float]  # metric -> coefficient
    improvements: dict[str, float | None]  # metric -> percent vs its baseline
    baselines: dict[str, str]  # metric -> baseline metric
    num_candidates: int
    params: dict = field(default_factory=dict)


def pearson(x, y) -> float:
    """Product-moment correlation; errors on constant input."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"need two equal-length vectors, got {x.shape} and {y.shape}")
    if x.size < 2:
        raise ValueError("need at least 2 points")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = np.sqrt(np.sum(xc * xc))
    sy = np.sqrt(np.sum(yc * yc))
    if sx == 0.0 or sy == 0.0:
        raise ValueError("correlation undefined for a constant vector")
    return float(np.clip(np.sum(xc * yc) / (sx * sy), -1.0, 1.0))


def kendall_tau(x, y) -> float:
    """Tie-corrected Kendall rank correlation (tau-b)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"need two equal-length vectors, got {x.shape} and {y.shape}")
    if x.size < 2:
        raise ValueError("need at least 2 points")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise ValueError("correlation undefined for an all-tied vector")
    tau = stats.kendalltau(x, y, variant="b").statistic
    return float(tau)


def weighted_kendall_tau(x, y) -> float:
    """Rank correlation with additive hyperbolic weights on the x-ranking.

    A pair (i, j) weighs 1/(r_i + 1) + 1/(r_j + 1), with r the zero-based
    descending rank in x, so disagreements near the top of the x-ranking
    cost more. Normalized so perfect agreement scores 1. Ties in x have no
    well-defined rank under this scheme and are rejected.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"need two equal-length vectors, got {x.shape} and {y.shape}")
    if x.size < 2:
        raise ValueError("need at least 2 points")
    if np.unique(x).size != x.size:
        raise ValueError("ties in the reference vector are not supported")
    order = np.argsort(-x, kind="stable")
    rank = np.empty(x.size, dtype=np.int64)
    rank[order] = np.arange(x.size)
    num = 0.0
    den = 0.0
    for i in range(x.size):
        for j in range(i + 1, x.size):
            w = 1.0 / (rank[i] + 1) + 1.0 / (rank[j] + 1)
            sign = np.sign((x[i] - x[j]) * (y[i] - y[j]))
            num += w * sign
            den += w
    return float(num / den)


_COEFFICIENTS = {
    "pearson": pearson,
    "kendall": kendall_tau,
    "wkendall": weighted_kendall_tau,
}


def relative_improvement(modified: float, baseline: float) -> float | None:
    """Percent change of a coefficient over its baseline, sign-safe.

    The denominator is |baseline| so improving on a negative baseline still
    reads as positive. Returns None when the baseline is too close to zero
    for the percentage to mean anything.
    """
    if abs(baseline) <= IMPROVEMENT_EPS:
        return None
    return 100.0 * (modified - baseline) / abs(baseline)


def evaluate(
    records: list[ExperimentRecord],
    coefficient: str = "pearson",
    baseline_pairs: dict[str, str] | None = None,
) -> CorrelationReport:
    """Correlate each metric's scores with accuracy across candidates.

    Every metric must be present for every candidate. ``baseline_pairs``
    maps a modified metric to the baseline it should be compared against,
    e.g. ``{"haste-leep": "leep"}``.
    """
    if coefficient not in _COEFFICIENTS:
        raise ValueError(f"unknown coefficient {coefficient!r}")
    baseline_pairs = baseline_pairs or {}
    coef_fn = _COEFFICIENTS[coefficient]

    metrics = sorted({r.metric for r in records})
    candidates = sorted({r.candidate for r in records})
    if len(candidates) < 2:
        raise ValueError("need at least 2 candidates")
    table: dict[tuple[str, str], tuple[float, float]] = {}
    for r in records:
        key = (r.metric, r.candidate)
        if key in table:
            raise ValueError(f"duplicate record for {key}")
        table[key] = (r.score, r.accuracy)
    coefficients = {}
    for metric in metrics:
        missing = [c for c in candidates if (metric, c) not in table]
        if missing:
            raise ValueError(
                f"metric {metric!r} missing for candidates {missing}"
            )
        scores = np.asarray([table[(metric, c)][0] for c in candidates])
        accs = np.asarray([table[(metric, c)][1] for c in candidates])
        coefficients[metric] = coef_fn(scores, accs)
    improvements: dict[str, float | None] = {}
    for modified, baseline in baseline_pairs.items():
        if baseline not in coefficients:
            raise ValueError(f"unknown baseline metric {baseline!r}")
        if modified not in coefficients:
            raise ValueError(f"unknown modified metric {modified!r}")
        improvements[modified] = relative_improvement(
            coefficients[modified], coefficients[baseline]
        )
    return CorrelationReport(
        coefficient_name=coefficient,
        coefficients=coefficients,
        improvements=improvements,
        baselines=dict(baseline_pairs),
        num_candidates=len(candidates),
        params={"weighting": "additive-hyperbolic"} if coefficient == "wkendall" else {},
    )


def summarize_improvements(
    reports: list[CorrelationReport], baseline_pairs: dict[str, str]
) -> dict[str, dict[str, float | None]]:
    """Aggregate improvements across experiments, both ways.

    ``mean_of_percents`` averages each experiment's percent improvement;
    ``percent_of_means`` first averages the raw coefficients across
    experiments and then takes the percent change. The two differ whenever
    baselines vary in magnitude, so both are reported, labeled.
    """
    out: dict[str, dict[str, float | None]] = {}
    for modified, baseline in baseline_pairs.items():
        percents = []
        mods = []
        bases = []
        for report in reports:
            if modified not in report.coefficients or baseline not in report.coefficients:
                raise ValueError(
                    f"report missing {modified!r} or {baseline!r} coefficients"
                )
            mods.append(report.coefficients[modified])
            bases.append(report.coefficients[baseline])
            pct = relative_improvement(
                report.coefficients[modified], report.coefficients[baseline]
            )
            if pct is not None:
                percents.append(pct)
        out[modified] = {
            "mean_of_percents": float(np.mean(percents)) if percents else None,
            "percent_of_means": relative_improvement(
                float(np.mean(mods)), float(np.mean(bases))
            ),
        }
    return out


def format_report(report: CorrelationReport) -> str:
    """Aligned text table of coefficients and improvements."""
    rows = []
    for metric in sorted(report.coefficients):
        coef = report.coefficients[metric]
        if metric in report.improvements:
            pct = report.improvements[metric]
            vs = report.baselines[metric]
            extra = f"{pct:+.2f}% vs {vs}" if pct is not None else f"undefined vs {vs}"
        else:
            extra = ""
        rows.append((metric, f"{coef:+.4f}", extra))
    name_w = max(len(r[0]) for r in rows)
    val_w = max(len(r[1]) for r in rows)
    lines = [
        f"{report.coefficient_name} over {report.num_candidates} candidates",
    ]
    for metric, coef, extra in rows:
        line = f"  {metric:<{name_w}}  {coef:>{val_w}}"
        if extra:
            line += f"  {extra}"
        lines.append(line)
    return "\n".join(lines)

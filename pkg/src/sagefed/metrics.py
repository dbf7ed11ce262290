"""Round-level diagnostics: pseudo-label quality, confidence entropy,
interpolation-weight statistics, class-imbalance KL, and rank histograms
measuring how one model's pseudo-labels sit inside the other's ranking.

Undefined quantities (no decisions, empty pools) are represented as None
and serialized downstream as NaN.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .pseudo import DecisionKind, PseudoLabelDecision

ENTROPY_BINS = 20


def pseudo_label_accuracy(pairs) -> tuple[int, float | None]:
    """Count non-abstained decisions and their argmax-vs-truth accuracy.

    pairs: iterable of (PseudoLabelDecision, true label). Accuracy is None
    when every decision abstained.
    """
    count = 0
    correct = 0
    for decision, truth in pairs:
        if decision.abstained:
            continue
        count += 1
        correct += int(int(decision.target.argmax()) == int(truth))
    return count, (correct / count if count else None)


def confidence_entropy(values, bins: int = ENTROPY_BINS) -> float | None:
    """Shannon entropy (nats) of a fixed-bin histogram of confidences in [0,1]."""
    if bins < 2:
        raise ValueError(f"need >= 2 bins, got {bins}")
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return None
    if np.any(values < 0) or np.any(values > 1):
        raise ValueError("confidences must lie in [0,1]")
    counts, _ = np.histogram(values, bins=bins, range=(0.0, 1.0))
    p = counts[counts > 0] / values.size
    return float(-(p * np.log(p)).sum())


def prediction_rank(class_idx: int, reference: np.ndarray) -> int:
    """1 + number of classes whose reference probability strictly exceeds
    the probability of class_idx; ties share the best rank."""
    reference = np.asarray(reference, dtype=np.float64)
    if not 0 <= class_idx < reference.shape[0]:
        raise ValueError(f"class {class_idx} outside [0, {reference.shape[0]})")
    return 1 + int((reference > reference[class_idx]).sum())


def consensus_rank_histogram(pairs) -> np.ndarray:
    """Histogram over ranks 1..C of source-argmax classes within reference
    predictions. pairs: iterable of (source argmax class, reference)."""
    hist = None
    for class_idx, reference in pairs:
        reference = np.asarray(reference, dtype=np.float64)
        if hist is None:
            hist = np.zeros(reference.shape[0], dtype=np.int64)
        hist[prediction_rank(class_idx, reference) - 1] += 1
    if hist is None:
        return np.zeros(0, dtype=np.int64)
    return hist


def heterogeneity_kl(dist: np.ndarray) -> float:
    """KL divergence of a class distribution from uniform, in nats."""
    dist = np.asarray(dist, dtype=np.float64)
    if np.any(dist < 0) or abs(dist.sum() - 1.0) > 1e-9:
        raise ValueError("input is not a distribution")
    c = dist.shape[0]
    nz = dist[dist > 0]
    return float((nz * np.log(nz * c)).sum())


@dataclass
class LambdaStats:
    """Interpolation-weight summary for one client's soft corrections."""

    mean: float | None
    per_class: list[float | None]
    majority_mean: float | None
    minority_mean: float | None
    majority_classes: list[int]


def lambda_statistics(decisions, class_dist: np.ndarray) -> LambdaStats:
    """Mean interpolation weight overall, per local class, and split by the
    client's class mix. Majority classes are those whose mass in class_dist
    is at or above the median mass.
    """
    class_dist = np.asarray(class_dist, dtype=np.float64)
    c = class_dist.shape[0]
    median = float(np.median(class_dist))
    majority = [int(i) for i in range(c) if class_dist[i] >= median]
    by_class: list[list[float]] = [[] for _ in range(c)]
    for d in decisions:
        if d.kind is DecisionKind.CORRECTED_SOFT:
            by_class[d.class_local].append(d.lam)
    all_lams = [v for lams in by_class for v in lams]
    maj = [v for i in majority for v in by_class[i]]
    mino = [v for i in range(c) if i not in majority for v in by_class[i]]
    mean = lambda xs: (sum(xs) / len(xs)) if xs else None
    return LambdaStats(
        mean=mean(all_lams),
        per_class=[mean(lams) for lams in by_class],
        majority_mean=mean(maj),
        minority_mean=mean(mino),
        majority_classes=majority,
    )


@dataclass
class RoundMetrics:
    """Everything recorded about one federated round."""

    round: int
    test_accuracy: float
    pseudo_count: int
    pseudo_accuracy: float | None
    mean_lambda: float | None
    lambda_by_class: list[float | None]
    lambda_majority_mean: float | None
    lambda_minority_mean: float | None
    entropy_local: float | None
    entropy_global: float | None
    consensus_local_in_global: list[int]
    consensus_global_in_local: list[int]
    n_corrected_soft: int = 0
    n_hard_local: int = 0
    n_hard_global: int = 0
    n_abstain: int = 0
    per_client: dict[int, dict] = field(default_factory=dict)


def summarize_decisions(pairs) -> dict[str, int]:
    """Decision-kind and branch counts over (decision, truth) pairs."""
    out = {"corrected_soft": 0, "hard_local": 0, "hard_global": 0, "abstain": 0}
    for d, _ in pairs:
        if d.kind is DecisionKind.CORRECTED_SOFT:
            out["corrected_soft"] += 1
        elif d.kind is DecisionKind.HARD:
            out["hard_local" if d.branch == "local" else "hard_global"] += 1
        else:
            out["abstain"] += 1
    return out

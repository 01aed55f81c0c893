"""Test error, group-fairness violations, detection quality, aggregation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import GROUP_A, GROUP_B, Dataset
from .errors import MetricUndefinedError


@dataclass(frozen=True)
class EvalReport:
    """Metrics of one trained classifier on one evaluation set."""

    test_error: float
    deo: float
    dp_distance: float
    p_percent: float
    group_rates: dict
    label_source: str = "true"  # "true" when ground-truth labels were used
    detection_precision: float | None = None
    detection_recall: float | None = None
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "test_error": self.test_error,
            "deo": self.deo,
            "dp_distance": self.dp_distance,
            "p_percent": self.p_percent,
            "group_rates": self.group_rates,
            "label_source": self.label_source,
            "detection_precision": self.detection_precision,
            "detection_recall": self.detection_recall,
            "flags": list(self.flags),
        }


@dataclass(frozen=True)
class AggregateReport:
    """Per-metric mean and sample standard deviation over trials."""

    trial_count: int
    means: dict = field(default_factory=dict)
    stds: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "trial_count": self.trial_count,
            "metrics": {
                name: {"mean": self.means[name], "std": self.stds[name]}
                for name in sorted(self.means)
            },
        }


def _check_paired(predictions: np.ndarray, other: np.ndarray, name: str):
    if predictions.shape != other.shape:
        raise ValueError(f"predictions and {name} must have equal length")
    if predictions.size == 0:
        raise ValueError("metrics need at least one instance")


def test_error(predictions: np.ndarray, labels: np.ndarray) -> float:
    """Misclassification rate."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    _check_paired(predictions, labels, "labels")
    return float(np.mean(predictions != labels))


def _positive_rate(predictions: np.ndarray, mask: np.ndarray, group: str) -> float:
    if not mask.any():
        raise MetricUndefinedError(f"group {group} has no instances")
    return float(np.mean(predictions[mask] == 1))


def deo(predictions: np.ndarray, labels: np.ndarray, groups: np.ndarray) -> float:
    """Absolute gap in true-positive rates between the two groups.

    Undefined (raises) when either group has no positive-labeled instances;
    a silent 0 would mask the missing conditioning event.
    """
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    groups = np.asarray(groups)
    _check_paired(predictions, labels, "labels")
    tpr = {}
    for group, name in ((GROUP_A, "A"), (GROUP_B, "B")):
        mask = (groups == group) & (labels == 1)
        if not mask.any():
            raise MetricUndefinedError(f"group {name} has no positive-labeled instances")
        tpr[group] = np.mean(predictions[mask] == 1)
    return float(abs(tpr[GROUP_A] - tpr[GROUP_B]))


def dp_distance(predictions: np.ndarray, groups: np.ndarray) -> float:
    """Absolute gap in positive-prediction rates between the two groups."""
    predictions = np.asarray(predictions)
    groups = np.asarray(groups)
    _check_paired(predictions, groups, "groups")
    rate_a = _positive_rate(predictions, groups == GROUP_A, "A")
    rate_b = _positive_rate(predictions, groups == GROUP_B, "B")
    return float(abs(rate_a - rate_b))


def p_percent(predictions: np.ndarray, groups: np.ndarray) -> float:
    """min(r, 1/r) for the ratio r of group positive-prediction rates.

    1 means parity. If either group's rate is zero the ratio degenerates and
    the convention is to return 0.
    """
    predictions = np.asarray(predictions)
    groups = np.asarray(groups)
    _check_paired(predictions, groups, "groups")
    rate_a = _positive_rate(predictions, groups == GROUP_A, "A")
    rate_b = _positive_rate(predictions, groups == GROUP_B, "B")
    if rate_a == 0.0 or rate_b == 0.0:
        return 0.0
    ratio = rate_a / rate_b
    return float(min(ratio, 1.0 / ratio))


def detection_scores(removed_indices: np.ndarray, dataset: Dataset) -> tuple[float, float]:
    """Precision and recall of the removed set against actually flipped labels.

    Conventions: precision is 1 when nothing was removed, recall is 1 when
    nothing was flipped.
    """
    if dataset.true_label is None:
        raise ValueError("detection scores require true labels")
    removed = np.zeros(len(dataset), dtype=bool)
    removed[np.asarray(removed_indices, dtype=np.int64)] = True
    flipped = dataset.observed_label != dataset.true_label
    hits = int((removed & flipped).sum())
    precision = hits / int(removed.sum()) if removed.any() else 1.0
    recall = hits / int(flipped.sum()) if flipped.any() else 1.0
    return float(precision), float(recall)


def aggregate(reports: list[EvalReport]) -> AggregateReport:
    """Mean and sample (n-1) standard deviation of every numeric metric.

    A single trial has standard deviation 0 by convention. Optional metrics
    are aggregated over the trials that define them.
    """
    if not reports:
        raise ValueError("aggregate needs at least one report")
    series: dict[str, list[float]] = {}
    for report in reports:
        record = report.to_dict()
        for name in (
            "test_error",
            "deo",
            "dp_distance",
            "p_percent",
            "detection_precision",
            "detection_recall",
        ):
            if record[name] is not None:
                series.setdefault(name, []).append(float(record[name]))
    means = {name: float(np.mean(vals)) for name, vals in series.items()}
    stds = {
        name: (float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0)
        for name, vals in series.items()
    }
    return AggregateReport(trial_count=len(reports), means=means, stds=stds)


def evaluate(
    predictions: np.ndarray,
    dataset: Dataset,
    detection_precision: float | None = None,
    detection_recall: float | None = None,
) -> EvalReport:
    """Build a full report for predictions on an evaluation dataset.

    Error and DEO are measured against true labels when the dataset has them,
    otherwise against observed labels (recorded in `label_source`).
    """
    predictions = np.asarray(predictions)
    if dataset.true_label is not None:
        labels, source = dataset.true_label, "true"
    else:
        labels, source = dataset.observed_label, "observed"
    groups = dataset.sensitive
    rate_a = _positive_rate(predictions, groups == GROUP_A, "A")
    rate_b = _positive_rate(predictions, groups == GROUP_B, "B")
    p_pct = p_percent(predictions, groups)
    flags = () if rate_a > 0 and rate_b > 0 else ("p_percent_degenerate_rate",)

    def group_tpr(group):
        mask = (groups == group) & (labels == 1)
        return float(np.mean(predictions[mask] == 1)) if mask.any() else None

    return EvalReport(
        test_error=test_error(predictions, labels),
        deo=deo(predictions, labels, groups),
        dp_distance=dp_distance(predictions, groups),
        p_percent=p_pct,
        group_rates={
            "positive_rate_a": rate_a,
            "positive_rate_b": rate_b,
            "tpr_a": group_tpr(GROUP_A),
            "tpr_b": group_tpr(GROUP_B),
        },
        label_source=source,
        detection_precision=detection_precision,
        detection_recall=detection_recall,
        flags=flags,
    )

"""Co-trained selection loop.

Two group-specific models each take one SGD step per batch on their own
group's instances, then both evaluate the entire batch. Each model's
confidence thresholds identify instances whose inferred true label disagrees
with the observed one; the union of both models' suspects is dropped and the
final model takes its step on the survivors. Unassigned instances (clearing
no threshold) always survive.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .confident import (
    ConfidenceMatrix,
    JointEstimate,
    compute_thresholds,
    estimate_joint,
    infer_true_labels,
    mean_thresholds,
    off_diagonal,
)
from .data import GROUP_A, GROUP_B, Dataset, batches
from .errors import EmptyGroupError
from .seeding import derive_seed

MODE_MEAN = "mean"  # plain per-class mean thresholds ("M")
MODE_TRUNCATED = "truncated"  # truncated means lowered by the margin ("T")

TRACE_SCHEMA_VERSION = 1

# Seed-derivation tags for the three models and the batch order.
_TAG_THETA = 0
_TAG_THETA_A = 1
_TAG_THETA_B = 2
_TAG_BATCHES = 3


@dataclass(frozen=True)
class CoteachConfig:
    """Selection hyperparameters plus the shared training configuration."""

    train: nn.TrainConfig = field(default_factory=nn.TrainConfig)
    nu: float = 1e-2
    n_select_fraction: float = 0.6
    threshold_mode: str = MODE_TRUNCATED
    thresholds_scope: str = "batch"  # "epoch" recomputes once per epoch (ablation)
    force_infinite_thresholds: bool = False  # degrade to ERM; used by equivalence tests
    final_retrain: bool = False  # optional from-scratch pass on the final selected set

    def __post_init__(self):
        if self.nu <= 0:
            raise ValueError("nu must be positive")
        if not 0.0 < self.n_select_fraction <= 1.0:
            raise ValueError("n_select_fraction must lie in (0, 1]")
        if self.threshold_mode not in (MODE_MEAN, MODE_TRUNCATED):
            raise ValueError(f"unknown threshold_mode {self.threshold_mode!r}")
        if self.thresholds_scope not in ("batch", "epoch"):
            raise ValueError(f"unknown thresholds_scope {self.thresholds_scope!r}")


@dataclass(frozen=True, eq=False)
class SelectionStep:
    """Outcome of one batch's selection, with positions local to the batch."""

    kept: np.ndarray
    removed_a: np.ndarray
    removed_b: np.ndarray
    thresholds_a: np.ndarray
    thresholds_b: np.ndarray
    joint_a: JointEstimate
    joint_b: JointEstimate


@dataclass(frozen=True, eq=False)
class BatchTrace:
    """Per-batch diagnostics; index arrays refer to the training dataset."""

    epoch: int
    batch: int
    indices: np.ndarray
    removed_a: np.ndarray
    removed_b: np.ndarray
    kept: np.ndarray
    thresholds_a: np.ndarray
    thresholds_b: np.ndarray
    loss_a: float
    loss_b: float
    loss_selected: float | None


@dataclass(frozen=True, eq=False)
class TrainingResult:
    model: nn.ModelParams
    model_a: nn.ModelParams
    model_b: nn.ModelParams
    traces: list[BatchTrace]


def _operative_thresholds(
    conf: ConfidenceMatrix, labels: np.ndarray, k: int, config: CoteachConfig
) -> np.ndarray:
    if config.force_infinite_thresholds:
        return np.full(k, np.inf)
    if config.threshold_mode == MODE_MEAN:
        return mean_thresholds(conf, labels, k)
    n = len(labels)
    threshold_set = compute_thresholds(
        conf, labels, k, nu=config.nu, n_select=config.n_select_fraction * n
    )
    return threshold_set.adjusted_mu


def select_fair_subset(
    batch: Dataset,
    params_a: nn.ModelParams,
    params_b: nn.ModelParams,
    config: CoteachConfig,
    thresholds_a: np.ndarray | None = None,
    thresholds_b: np.ndarray | None = None,
) -> SelectionStep:
    """Evaluate the whole batch with both models and drop joint suspects.

    Thresholds are computed from this batch's confidences unless explicit
    vectors are supplied (epoch-scope ablation). Returns positions within the
    batch.
    """
    labels = batch.observed_label
    conf_a = ConfidenceMatrix(nn.forward(params_a, batch.features), "theta_A")
    conf_b = ConfidenceMatrix(nn.forward(params_b, batch.features), "theta_B")
    if thresholds_a is None:
        thresholds_a = _operative_thresholds(conf_a, labels, batch.k, config)
    if thresholds_b is None:
        thresholds_b = _operative_thresholds(conf_b, labels, batch.k, config)

    inferred_a = infer_true_labels(conf_a, labels, thresholds_a)
    inferred_b = infer_true_labels(conf_b, labels, thresholds_b)
    outcome_a = off_diagonal(labels, inferred_a)
    outcome_b = off_diagonal(labels, inferred_b)

    removed = np.zeros(len(batch), dtype=bool)
    removed[outcome_a.off_diagonal] = True
    removed[outcome_b.off_diagonal] = True
    return SelectionStep(
        kept=np.flatnonzero(~removed),
        removed_a=outcome_a.off_diagonal,
        removed_b=outcome_b.off_diagonal,
        thresholds_a=np.asarray(thresholds_a, dtype=float),
        thresholds_b=np.asarray(thresholds_b, dtype=float),
        joint_a=estimate_joint(labels, inferred_a, batch.k),
        joint_b=estimate_joint(labels, inferred_b, batch.k),
    )


def _epoch_thresholds(
    dataset: Dataset, params: nn.ModelParams, config: CoteachConfig, source: str
) -> np.ndarray:
    conf = ConfidenceMatrix(nn.forward(params, dataset.features), source)
    return _operative_thresholds(conf, dataset.observed_label, dataset.k, config)


def run_training(dataset: Dataset, config: CoteachConfig) -> TrainingResult:
    """Run the full co-trained selection loop over the dataset.

    Per epoch and batch: the batch splits by group, each group model takes
    one SGD step on its own group's rows, both models veto suspects over the
    full batch, and the final model steps on the survivors. Everything is
    deterministic given the config seed.
    """
    train = config.train
    d, k = dataset.dim, dataset.k
    theta = nn.init_params(d, train.hidden_width, k, derive_seed(train.seed, _TAG_THETA))
    theta_a = nn.init_params(d, train.hidden_width, k, derive_seed(train.seed, _TAG_THETA_A))
    theta_b = nn.init_params(d, train.hidden_width, k, derive_seed(train.seed, _TAG_THETA_B))
    batch_seed = derive_seed(train.seed, _TAG_BATCHES)

    traces: list[BatchTrace] = []
    for epoch in range(train.epochs):
        epoch_thr_a = epoch_thr_b = None
        if config.thresholds_scope == "epoch":
            epoch_thr_a = _epoch_thresholds(dataset, theta_a, config, "theta_A")
            epoch_thr_b = _epoch_thresholds(dataset, theta_b, config, "theta_B")
        for batch_index, indices in enumerate(batches(dataset, train.batch_size, batch_seed, epoch)):
            batch = dataset.subset(indices)
            mask_a = batch.sensitive == GROUP_A
            mask_b = batch.sensitive == GROUP_B
            if not mask_a.any() or not mask_b.any():
                raise EmptyGroupError(
                    f"epoch {epoch} batch {batch_index} lost a group despite the merge rule"
                )

            features, labels = batch.features, batch.observed_label
            theta_a = nn.sgd_step(
                theta_a,
                nn.gradient(theta_a, features[mask_a], labels[mask_a]),
                train.learning_rate,
            )
            theta_b = nn.sgd_step(
                theta_b,
                nn.gradient(theta_b, features[mask_b], labels[mask_b]),
                train.learning_rate,
            )

            step = select_fair_subset(batch, theta_a, theta_b, config, epoch_thr_a, epoch_thr_b)
            removed_count = len(np.union1d(step.removed_a, step.removed_b))
            assert len(step.kept) == len(batch) - removed_count

            loss_selected = None
            if len(step.kept):
                theta = nn.sgd_step(
                    theta,
                    nn.gradient(theta, features[step.kept], labels[step.kept]),
                    train.learning_rate,
                )
                loss_selected = nn.loss(theta, features[step.kept], labels[step.kept])

            traces.append(
                BatchTrace(
                    epoch=epoch,
                    batch=batch_index,
                    indices=indices,
                    removed_a=indices[step.removed_a],
                    removed_b=indices[step.removed_b],
                    kept=indices[step.kept],
                    thresholds_a=step.thresholds_a,
                    thresholds_b=step.thresholds_b,
                    loss_a=nn.loss(theta_a, features[mask_a], labels[mask_a]),
                    loss_b=nn.loss(theta_b, features[mask_b], labels[mask_b]),
                    loss_selected=loss_selected,
                )
            )

    if config.final_retrain:
        kept_final, _ = final_epoch_selection(traces)
        theta = train_baseline_erm(dataset.subset(kept_final), train)

    return TrainingResult(model=theta, model_a=theta_a, model_b=theta_b, traces=traces)


def train_baseline_erm(dataset: Dataset, train: nn.TrainConfig) -> nn.ModelParams:
    """Plain SGD on all observed labels, no selection; the control arm.

    Uses the same seed derivation and batch order as the selection loop, so
    a selection loop that never removes anything reproduces it bit for bit.
    """
    theta = nn.init_params(
        dataset.dim, train.hidden_width, dataset.k, derive_seed(train.seed, _TAG_THETA)
    )
    batch_seed = derive_seed(train.seed, _TAG_BATCHES)
    for epoch in range(train.epochs):
        for indices in batches(dataset, train.batch_size, batch_seed, epoch):
            batch = dataset.subset(indices)
            theta = nn.sgd_step(
                theta,
                nn.gradient(theta, batch.features, batch.observed_label),
                train.learning_rate,
            )
    return theta


def final_epoch_selection(traces: list[BatchTrace]) -> tuple[np.ndarray, np.ndarray]:
    """Union of kept and removed dataset indices over the last epoch."""
    if not traces:
        raise ValueError("no traces recorded")
    last = max(trace.epoch for trace in traces)
    kept = [t.kept for t in traces if t.epoch == last]
    removed = [np.union1d(t.removed_a, t.removed_b) for t in traces if t.epoch == last]
    return np.concatenate(kept), np.concatenate(removed) if removed else np.array([], dtype=int)


def _finite_list(values: np.ndarray) -> list:
    # +inf thresholds (empty classes) are not valid JSON numbers.
    return [float(v) if np.isfinite(v) else None for v in values]


def trace_record(trace: BatchTrace, include_indices: bool = False) -> dict:
    """JSON-serializable view of one batch trace."""
    record = {
        "schema_version": TRACE_SCHEMA_VERSION,
        "epoch": trace.epoch,
        "batch": trace.batch,
        "batch_size": len(trace.indices),
        "removed_a_count": len(trace.removed_a),
        "removed_b_count": len(trace.removed_b),
        "kept_count": len(trace.kept),
        "thresholds_a": _finite_list(trace.thresholds_a),
        "thresholds_b": _finite_list(trace.thresholds_b),
        "loss_a": trace.loss_a,
        "loss_b": trace.loss_b,
        "loss_selected": trace.loss_selected,
    }
    if include_indices:
        record["indices"] = trace.indices.tolist()
        record["removed_a"] = trace.removed_a.tolist()
        record["removed_b"] = trace.removed_b.tolist()
        record["kept"] = trace.kept.tolist()
    return record


def write_trace_jsonl(traces: list[BatchTrace], path: str | Path, include_indices: bool = False):
    """One JSON record per batch; index arrays are omitted unless requested."""
    with Path(path).open("w", encoding="utf-8") as handle:
        for trace in traces:
            handle.write(json.dumps(trace_record(trace, include_indices)) + "\n")

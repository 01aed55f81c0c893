"""Confidence-threshold estimation and label-error identification.

Given per-instance predicted probabilities and observed labels, this module
computes per-class probabilistic thresholds (plain means, truncated means,
and margin-adjusted variants), infers each instance's most plausible true
label restricted to classes whose threshold it clears, and tallies the
(observed, inferred) pairs into a calibrated joint estimate. Instances whose
inferred label disagrees with their observed label are the removal
candidates; instances clearing no threshold stay unassigned and are kept.

All operations are pure functions of their arguments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateThresholdError

UNASSIGNED = -1

_ORDER_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class ConfidenceMatrix:
    """Predicted class probabilities from one model, one row per instance."""

    probs: np.ndarray  # [N, k]
    source_model: str = "model"

    def __post_init__(self):
        if self.probs.ndim != 2:
            raise ValueError("probs must be a matrix")
        if len(self.probs):
            if np.any(self.probs <= 0.0) or np.any(self.probs >= 1.0):
                raise ValueError("probabilities must lie strictly inside (0, 1)")
            sums = self.probs.sum(axis=1)
            if np.max(np.abs(sums - 1.0)) > 1e-9:
                raise ValueError("probability rows must sum to 1")
        self.probs.setflags(write=False)


def _as_probs(conf) -> np.ndarray:
    if isinstance(conf, ConfidenceMatrix):
        return conf.probs
    return np.asarray(conf, dtype=float)


def self_confidence(conf, labels: np.ndarray) -> np.ndarray:
    """Each instance's predicted probability for its own observed label."""
    probs = _as_probs(conf)
    labels = np.asarray(labels)
    if len(labels) and (labels.min() < 0 or labels.max() >= probs.shape[1]):
        raise ValueError("label out of range for the confidence matrix")
    return probs[np.arange(len(labels)), labels]


def psi(x):
    """Influence function log(1 + x + x^2/2) for nonnegative x.

    Non-decreasing, with log(1+x) <= psi(x) <= x, so extreme values are
    damped before averaging while small ones pass through almost unchanged.
    """
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0):
        raise ValueError("psi is defined for nonnegative inputs only")
    out = np.log1p(arr + 0.5 * arr * arr)
    return float(out) if np.isscalar(x) or arr.ndim == 0 else out


def _per_class_mean(values: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    """Mean of values within each observed class; empty classes get +inf."""
    sums = np.bincount(labels, weights=values, minlength=k)
    counts = np.bincount(labels, minlength=k)
    out = np.full(k, np.inf)
    nonzero = counts > 0
    out[nonzero] = sums[nonzero] / counts[nonzero]
    return out


def mean_thresholds(conf, labels: np.ndarray, k: int) -> np.ndarray:
    """Per-class mean self-confidence; classes with no members get +inf
    (no instance can then be assigned that class)."""
    probs = _as_probs(conf)
    labels = np.asarray(labels)
    return _per_class_mean(probs[np.arange(len(labels)), labels], labels, k)


def truncated_thresholds(conf, labels: np.ndarray, k: int) -> np.ndarray:
    """Per-class mean of psi(self-confidence); +inf for empty classes."""
    probs = _as_probs(conf)
    labels = np.asarray(labels)
    return _per_class_mean(psi(probs[np.arange(len(labels)), labels]), labels, k)


def q_factor(nu: float, n: int) -> float:
    """Concentration numerator nu * (N + nu*log(2N)/N^2) with epsilon=1/(2N)."""
    if n < 1:
        raise ValueError("N must be at least 1")
    if nu <= 0:
        raise ValueError("nu must be positive")
    return nu * (n + nu * np.log(2.0 * n) / float(n) ** 2)


def concentration_margin(nu: float, n: int, n_select: float) -> float:
    """Threshold widening Q / (N_s - nu); requires N_s > nu."""
    q = q_factor(nu, n)
    if n_select <= nu:
        raise DegenerateThresholdError(
            f"selection count {n_select} must exceed nu={nu} for the margin to be defined"
        )
    return q / (n_select - nu)


def adjusted_thresholds(truncated: np.ndarray, margin: float) -> np.ndarray:
    """Truncated thresholds lowered by the concentration margin.

    Values may go nonpositive, in which case that class's gate is open to
    every instance; they are deliberately not clamped.
    """
    if not np.isfinite(margin):
        raise ValueError("margin must be finite")
    return np.asarray(truncated, dtype=float) - margin


@dataclass(frozen=True, eq=False)
class ThresholdSet:
    """All three per-class threshold variants plus the quantities behind them."""

    mean_t: np.ndarray
    truncated_t: np.ndarray
    adjusted_mu: np.ndarray
    nu: float
    n_select: float
    epsilon: float
    q_factor: float

    def __post_init__(self):
        if self.n_select > self.nu:
            if np.any(self.truncated_t > self.mean_t + _ORDER_TOL) or np.any(
                self.adjusted_mu > self.truncated_t + _ORDER_TOL
            ):
                raise ValueError("threshold ordering mu <= truncated <= mean violated")
        for arr in (self.mean_t, self.truncated_t, self.adjusted_mu):
            arr.setflags(write=False)

    @property
    def margin(self) -> float:
        return self.q_factor / (self.n_select - self.nu)


def compute_thresholds(conf, labels: np.ndarray, k: int, nu: float, n_select: float) -> ThresholdSet:
    """Mean, truncated, and margin-adjusted thresholds for one model's
    confidences over an evaluation population of size len(labels)."""
    labels = np.asarray(labels)
    n = len(labels)
    margin = concentration_margin(nu, n, n_select)
    truncated = truncated_thresholds(conf, labels, k)
    return ThresholdSet(
        mean_t=mean_thresholds(conf, labels, k),
        truncated_t=truncated,
        adjusted_mu=adjusted_thresholds(truncated, margin),
        nu=nu,
        n_select=float(n_select),
        epsilon=1.0 / (2.0 * n),
        q_factor=q_factor(nu, n),
    )


def infer_true_labels(conf, labels: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    """Most confident class among those whose threshold the instance clears.

    Returns UNASSIGNED where no class clears. Exact ties on the maximum break
    toward the instance's observed label, then toward the lowest class index,
    so a tie never creates a removal.
    """
    probs = _as_probs(conf)
    labels = np.asarray(labels)
    thresholds = np.asarray(thresholds, dtype=float)
    if thresholds.shape != (probs.shape[1],):
        raise ValueError("thresholds length must equal the class count")

    passing = probs >= thresholds
    gated = np.where(passing, probs, -np.inf)
    best = gated.max(axis=1)
    inferred = np.argmax(gated, axis=1).astype(np.int64)

    rows = np.arange(len(labels))
    own = passing[rows, labels] & (probs[rows, labels] == best)
    inferred[own] = labels[own]
    inferred[~passing.any(axis=1)] = UNASSIGNED
    return inferred


def count_matrix(labels: np.ndarray, inferred: np.ndarray, k: int) -> tuple[np.ndarray, int]:
    """Tally of (observed, inferred) label pairs, excluding unassigned rows.

    count[j, i] is the number of instances observed as j whose inferred true
    label is i; the second return value is how many rows were unassigned.
    """
    labels = np.asarray(labels)
    inferred = np.asarray(inferred)
    if labels.shape != inferred.shape:
        raise ValueError("labels and inferred labels must have equal length")
    assigned = inferred != UNASSIGNED
    pairs = labels[assigned] * k + inferred[assigned]
    count = np.bincount(pairs, minlength=k * k).reshape(k, k)
    return count, int((~assigned).sum())


def confident_joint(count: np.ndarray, per_class_sizes: np.ndarray) -> np.ndarray:
    """Row-calibrate the count matrix so row j sums to the size of class j.

    Rows of the count matrix that sum to zero stay zero rather than erroring,
    which keeps the joint distribution computable.
    """
    count = np.asarray(count, dtype=float)
    sizes = np.asarray(per_class_sizes, dtype=float)
    row_sums = count.sum(axis=1, keepdims=True)
    safe = np.where(row_sums == 0.0, 1.0, row_sums)
    return count / safe * sizes[:, None]


def joint_distribution(calibrated: np.ndarray) -> np.ndarray:
    """Normalize the calibrated counts into a distribution summing to 1."""
    calibrated = np.asarray(calibrated, dtype=float)
    total = calibrated.sum()
    if total <= 0.0:
        raise ValueError("cannot normalize an all-zero calibrated count matrix")
    return calibrated / total


@dataclass(frozen=True, eq=False)
class JointEstimate:
    """Count matrix, calibrated joint, and normalized joint distribution."""

    count: np.ndarray
    confident_joint: np.ndarray
    joint_dist: np.ndarray
    per_class_sizes: np.ndarray
    unassigned: int

    def to_dict(self) -> dict:
        return {
            "count": self.count.tolist(),
            "confident_joint": self.confident_joint.tolist(),
            "joint_dist": self.joint_dist.tolist(),
            "per_class_sizes": self.per_class_sizes.tolist(),
            "unassigned": self.unassigned,
        }


def estimate_joint(labels: np.ndarray, inferred: np.ndarray, k: int) -> JointEstimate:
    """Full count -> calibrated joint -> distribution pipeline.

    If nothing was assigned the distribution is all zeros instead of erroring,
    matching the degenerate-row convention.
    """
    labels = np.asarray(labels)
    count, unassigned = count_matrix(labels, inferred, k)
    sizes = np.bincount(labels, minlength=k)
    calibrated = confident_joint(count, sizes)
    total = calibrated.sum()
    dist = calibrated / total if total > 0 else np.zeros_like(calibrated)
    return JointEstimate(
        count=count,
        confident_joint=calibrated,
        joint_dist=dist,
        per_class_sizes=sizes,
        unassigned=unassigned,
    )


@dataclass(frozen=True, eq=False)
class SelectionOutcome:
    """Removal candidates (inferred label disagrees with the observed one)
    and the kept complement; unassigned instances are always kept."""

    inferred_z: np.ndarray
    off_diagonal: np.ndarray
    kept: np.ndarray

    def __post_init__(self):
        if np.intersect1d(self.off_diagonal, self.kept).size:
            raise ValueError("off-diagonal and kept sets must be disjoint")


def off_diagonal(labels: np.ndarray, inferred: np.ndarray) -> SelectionOutcome:
    """Split instances into removal candidates and kept ones."""
    labels = np.asarray(labels)
    inferred = np.asarray(inferred)
    if labels.shape != inferred.shape:
        raise ValueError("labels and inferred labels must have equal length")
    flagged = (inferred != UNASSIGNED) & (inferred != labels)
    return SelectionOutcome(
        inferred_z=inferred,
        off_diagonal=np.flatnonzero(flagged),
        kept=np.flatnonzero(~flagged),
    )

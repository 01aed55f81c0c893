"""Group-dependent label-bias injection for binary tasks.

Observed labels are produced from true labels by one-directional flips:
privileged-group negatives may be flipped to positive and disadvantaged-group
positives to negative, each with its own probability. True labels are always
retained so downstream selection quality stays measurable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import GROUP_A, GROUP_B, Dataset


@dataclass(frozen=True)
class BiasSpec:
    """Flip probabilities per group plus the injection seed.

    `mode` is a documentation tag only; the two rates fully determine what
    happens ("symmetric" means rho_a == rho_b, "asymmetric" means rho_a=0).
    """

    rho_a: float
    rho_b: float
    seed: int = 0
    mode: str = "symmetric"

    def __post_init__(self):
        for name, value in (("rho_a", self.rho_a), ("rho_b", self.rho_b)):
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be a probability in [0, 1]")


@dataclass(frozen=True)
class FlipSummary:
    """Counts of observed-vs-true disagreements by group and direction."""

    a_up: int  # group A, true 0 observed 1
    a_down: int  # group A, true 1 observed 0
    b_up: int  # group B, true 0 observed 1
    b_down: int  # group B, true 1 observed 0

    @property
    def total(self) -> int:
        return self.a_up + self.a_down + self.b_up + self.b_down


def inject_bias(dataset: Dataset, spec: BiasSpec) -> Dataset:
    """Flip eligible labels independently; deterministic for a fixed seed.

    Eligible instances are (group A, true label 0), flipped to 1 with
    probability rho_a, and (group B, true label 1), flipped to 0 with
    probability rho_b. Every other instance keeps its true label. One draw is
    consumed per eligible instance in dataset order from a counter-based
    Philox stream, so the outcome is order-stable.
    """
    if dataset.true_label is None:
        raise ValueError("bias injection requires true labels")
    if dataset.k != 2:
        raise ValueError("bias injection is defined for binary labels only")

    z = dataset.true_label
    eligible_a = (dataset.sensitive == GROUP_A) & (z == 0)
    eligible_b = (dataset.sensitive == GROUP_B) & (z == 1)
    eligible = eligible_a | eligible_b

    draws = np.random.Generator(np.random.Philox(spec.seed)).random(int(eligible.sum()))
    rate = np.where(eligible_a[eligible], spec.rho_a, spec.rho_b)
    flip = np.zeros(len(dataset), dtype=bool)
    flip[eligible] = draws < rate

    observed = z.copy()
    observed[flip & eligible_a] = 1
    observed[flip & eligible_b] = 0

    result = dataset.with_observed_labels(observed)
    changed = result.observed_label != z
    assert not np.any(changed & ~eligible), "only eligible instances may be flipped"
    return result


def flip_summary(dataset: Dataset) -> FlipSummary:
    """Exact counts of observed labels that disagree with true labels."""
    if dataset.true_label is None:
        raise ValueError("flip summary requires true labels")
    z, y, s = dataset.true_label, dataset.observed_label, dataset.sensitive
    return FlipSummary(
        a_up=int(((s == GROUP_A) & (z == 0) & (y == 1)).sum()),
        a_down=int(((s == GROUP_A) & (z == 1) & (y == 0)).sum()),
        b_up=int(((s == GROUP_B) & (z == 0) & (y == 1)).sum()),
        b_down=int(((s == GROUP_B) & (z == 1) & (y == 0)).sum()),
    )

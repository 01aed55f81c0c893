"""Dataset container, CSV ingestion, synthetic generation, and views.

Datasets are immutable: every derived view (group partition, split, batch)
is index-based and produces fresh arrays, so they can be shared freely.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateSplitError,
    EmptyFileError,
    EmptyGroupError,
    LabelRangeError,
    MissingColumnError,
    MissingValueError,
    NonNumericCellError,
)
from .seeding import derive_rng

GROUP_A = 0  # privileged
GROUP_B = 1  # disadvantaged

# Synthetic generator constants. Features come from a two-component 2-D
# Gaussian mixture; the true label is the mixture's own Bayes rule (so the
# optimal classifier has zero error); group membership is drawn from the
# component log-odds of the point rotated by pi/4, shifted so the privileged
# group carries about 75.2% of the data.
SYNTH_MEAN_POS = np.array([2.0, 2.0])
SYNTH_COV_POS = np.array([[5.0, 1.0], [1.0, 5.0]])
SYNTH_MEAN_NEG = np.array([-2.0, -2.0])
SYNTH_COV_NEG = np.array([[10.0, 1.0], [1.0, 3.0]])
SYNTH_ROTATION = np.pi / 4
SYNTH_GROUP_LOG_ODDS_SHIFT = 2.3103


@dataclass(frozen=True)
class CsvSchema:
    """Names the role of each CSV column; nothing is ever inferred."""

    feature_columns: tuple[str, ...]
    sensitive_column: str
    privileged_value: str
    label_column: str
    true_label_column: str | None = None
    unprivileged_value: str = "B"
    class_count: int = 2
    delimiter: str = ","

    def __post_init__(self):
        if not self.feature_columns:
            raise ValueError("schema needs at least one feature column")
        if self.class_count < 2:
            raise ValueError("class_count must be at least 2")


SYNTH_SCHEMA = CsvSchema(
    feature_columns=("x0", "x1"),
    sensitive_column="group",
    privileged_value="A",
    label_column="label",
    true_label_column="true_label",
)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix plus sensitive group, observed and optional true labels."""

    features: np.ndarray  # [N, d] float64
    sensitive: np.ndarray  # [N] in {GROUP_A, GROUP_B}
    observed_label: np.ndarray  # [N] ints in [0, k)
    k: int
    true_label: np.ndarray | None = None  # [N] ints in [0, k)
    schema: CsvSchema = SYNTH_SCHEMA

    def __post_init__(self):
        n = self.features.shape[0]
        if self.features.ndim != 2:
            raise ValueError("features must be a matrix")
        for name, arr in (("sensitive", self.sensitive), ("observed_label", self.observed_label)):
            if arr.shape != (n,):
                raise ValueError(f"{name} length does not match feature rows")
        if self.true_label is not None and self.true_label.shape != (n,):
            raise ValueError("true_label length does not match feature rows")
        if n > 0:
            if not np.isin(self.sensitive, (GROUP_A, GROUP_B)).all():
                raise ValueError("sensitive values must be GROUP_A or GROUP_B")
            for name, arr in self._label_arrays():
                if arr.min() < 0 or arr.max() >= self.k:
                    raise ValueError(f"{name} values must lie in [0, {self.k})")
        for arr in (self.features, self.sensitive, self.observed_label, self.true_label):
            if arr is not None:
                arr.setflags(write=False)

    def _label_arrays(self):
        yield "observed_label", self.observed_label
        if self.true_label is not None:
            yield "true_label", self.true_label

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, indices: np.ndarray) -> "Dataset":
        indices = np.asarray(indices)
        return replace(
            self,
            features=self.features[indices].copy(),
            sensitive=self.sensitive[indices].copy(),
            observed_label=self.observed_label[indices].copy(),
            true_label=None if self.true_label is None else self.true_label[indices].copy(),
        )

    def with_observed_labels(self, observed: np.ndarray) -> "Dataset":
        return replace(self, observed_label=np.array(observed))

    def with_features(self, features: np.ndarray) -> "Dataset":
        return replace(self, features=np.array(features, dtype=float))


@dataclass(frozen=True)
class SplitSpec:
    """How to carve a validation set and how many shuffled trials to run."""

    validation_fraction: float = 0.1
    shuffle_seed: int = 0
    trial_count: int = 10

    def __post_init__(self):
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in [0, 1)")
        if self.trial_count < 1:
            raise ValueError("trial_count must be at least 1")


def _mixture_log_odds(x: np.ndarray) -> np.ndarray:
    """log f_pos(x) - log f_neg(x) for the synthetic mixture components."""

    def logpdf(points, mean, cov):
        inv = np.linalg.inv(cov)
        _, logdet = np.linalg.slogdet(cov)
        diff = points - mean
        return -0.5 * np.einsum("ni,ij,nj->n", diff, inv, diff) - 0.5 * (
            2 * np.log(2 * np.pi) + logdet
        )

    return logpdf(x, SYNTH_MEAN_POS, SYNTH_COV_POS) - logpdf(x, SYNTH_MEAN_NEG, SYNTH_COV_NEG)


def generate_synthetic(n: int, seed: int) -> Dataset:
    """Seeded synthetic dataset with 2-D features, two classes, two groups.

    Observed labels start equal to the true labels; bias is injected
    separately. For any n >= 2 both groups are guaranteed nonempty.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = derive_rng(seed)
    component = rng.random(n) < 0.5
    noise = rng.standard_normal((n, 2))
    group_draw = rng.random(n)

    chol_pos = np.linalg.cholesky(SYNTH_COV_POS)
    chol_neg = np.linalg.cholesky(SYNTH_COV_NEG)
    x = np.where(
        component[:, None],
        SYNTH_MEAN_POS + noise @ chol_pos.T,
        SYNTH_MEAN_NEG + noise @ chol_neg.T,
    )

    z = (_mixture_log_odds(x) >= 0.0).astype(np.int64)

    c, s = np.cos(SYNTH_ROTATION), np.sin(SYNTH_ROTATION)
    rotated = x @ np.array([[c, -s], [s, c]])
    p_privileged = 1.0 / (1.0 + np.exp(-(_mixture_log_odds(rotated) + SYNTH_GROUP_LOG_ODDS_SHIFT)))
    sensitive = np.where(group_draw < p_privileged, GROUP_A, GROUP_B).astype(np.int64)

    # Guarantee both groups for n >= 2 by flipping the most marginal draw.
    if n >= 2:
        if (sensitive == GROUP_B).sum() == 0:
            sensitive[np.argmin(p_privileged)] = GROUP_B
        elif (sensitive == GROUP_A).sum() == 0:
            sensitive[np.argmax(p_privileged)] = GROUP_A

    return Dataset(
        features=x,
        sensitive=sensitive,
        observed_label=z.copy(),
        true_label=z.copy(),
        k=2,
        schema=SYNTH_SCHEMA,
    )


def _parse_label(cell: str, k: int, row: int, column: str) -> int:
    text = cell.strip()
    try:
        value = int(text)
    except ValueError:
        raise LabelRangeError(
            f"row {row}: label column {column!r} has non-integer value {cell!r}"
        ) from None
    if not 0 <= value < k:
        raise LabelRangeError(
            f"row {row}: label {value} out of range for {k} classes in column {column!r}"
        )
    return value


def load_csv(path: str | Path, schema: CsvSchema) -> Dataset:
    """Read a delimited text file into a Dataset according to the schema.

    Row order is preserved; columns not named by the schema are ignored.
    Missing columns, empty cells, non-numeric feature cells, out-of-range
    labels and empty files each raise their own error type.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle, delimiter=schema.delimiter)
        rows = list(reader)
    if not rows:
        raise EmptyFileError(f"{path}: file is empty")
    header, data_rows = rows[0], rows[1:]
    if not data_rows:
        raise EmptyFileError(f"{path}: no data rows after the header")

    positions: dict[str, int] = {}
    needed = list(schema.feature_columns) + [schema.sensitive_column, schema.label_column]
    if schema.true_label_column is not None:
        needed.append(schema.true_label_column)
    for name in needed:
        if name not in header:
            raise MissingColumnError(f"{path}: column {name!r} not found in header")
        positions[name] = header.index(name)

    n, d = len(data_rows), len(schema.feature_columns)
    features = np.empty((n, d))
    sensitive = np.empty(n, dtype=np.int64)
    observed = np.empty(n, dtype=np.int64)
    true_labels = np.empty(n, dtype=np.int64) if schema.true_label_column else None

    for i, row in enumerate(data_rows):
        def cell(column: str) -> str:
            pos = positions[column]
            if pos >= len(row) or row[pos].strip() == "":
                raise MissingValueError(f"{path}: row {i}: missing value in column {column!r}")
            return row[pos]

        for j, column in enumerate(schema.feature_columns):
            text = cell(column)
            try:
                features[i, j] = float(text)
            except ValueError:
                raise NonNumericCellError(
                    f"{path}: row {i}: non-numeric feature value {text!r} in column {column!r}"
                ) from None
        sensitive[i] = (
            GROUP_A if cell(schema.sensitive_column).strip() == schema.privileged_value else GROUP_B
        )
        observed[i] = _parse_label(cell(schema.label_column), schema.class_count, i, schema.label_column)
        if true_labels is not None:
            true_labels[i] = _parse_label(
                cell(schema.true_label_column), schema.class_count, i, schema.true_label_column
            )

    return Dataset(
        features=features,
        sensitive=sensitive,
        observed_label=observed,
        true_label=true_labels,
        k=schema.class_count,
        schema=schema,
    )


def write_csv(dataset: Dataset, path: str | Path):
    """Write a Dataset using its schema; floats use shortest round-trip form."""
    schema = dataset.schema
    path = Path(path)
    columns = list(schema.feature_columns) + [schema.sensitive_column, schema.label_column]
    if dataset.true_label is not None:
        if schema.true_label_column is None:
            raise ValueError("dataset has true labels but the schema names no column for them")
        columns.append(schema.true_label_column)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, delimiter=schema.delimiter, lineterminator="\n")
        writer.writerow(columns)
        for i in range(len(dataset)):
            row = [repr(float(v)) for v in dataset.features[i]]
            row.append(
                schema.privileged_value
                if dataset.sensitive[i] == GROUP_A
                else schema.unprivileged_value
            )
            row.append(str(int(dataset.observed_label[i])))
            if dataset.true_label is not None:
                row.append(str(int(dataset.true_label[i])))
            writer.writerow(row)


def partition_by_group(dataset: Dataset) -> tuple[Dataset, Dataset, np.ndarray, np.ndarray]:
    """Split into the privileged and disadvantaged subsets.

    Returns (subset_a, subset_b, indices_a, indices_b) where the index arrays
    map each subset row back to its original position.
    """
    indices_a = np.flatnonzero(dataset.sensitive == GROUP_A)
    indices_b = np.flatnonzero(dataset.sensitive == GROUP_B)
    if len(indices_a) == 0 or len(indices_b) == 0:
        missing = "A" if len(indices_a) == 0 else "B"
        raise EmptyGroupError(f"group {missing} has no instances; both groups are required")
    return dataset.subset(indices_a), dataset.subset(indices_b), indices_a, indices_b


def split_train_val(dataset: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Seeded uniform shuffle, then carve off the validation fraction."""
    n = len(dataset)
    perm = derive_rng(spec.shuffle_seed).permutation(n)
    n_val = int(n * spec.validation_fraction)
    if spec.validation_fraction > 0 and (n_val == 0 or n_val == n):
        raise DegenerateSplitError(
            f"validation_fraction {spec.validation_fraction} leaves an empty side for n={n}"
        )
    return dataset.subset(perm[n_val:]), dataset.subset(perm[:n_val])


def batches(dataset: Dataset, batch_size: int, seed: int, epoch: int) -> list[np.ndarray]:
    """Epoch-seeded permutation cut into consecutive batches of indices.

    If the final batch lacks either group it is merged into the previous one,
    since each training step needs both groups present.
    """
    if batch_size < 2:
        raise ValueError("batch_size must be at least 2")
    n = len(dataset)
    perm = derive_rng(seed, epoch).permutation(n)
    chunks = [perm[start : start + batch_size] for start in range(0, n, batch_size)]
    if len(chunks) >= 2:
        last_groups = set(dataset.sensitive[chunks[-1]])
        if last_groups != {GROUP_A, GROUP_B}:
            chunks[-2] = np.concatenate([chunks[-2], chunks[-1]])
            chunks.pop()
    return chunks


@dataclass(frozen=True, eq=False)
class Standardization:
    """Per-feature train-set mean and population std used for the transform."""

    mean: np.ndarray
    std: np.ndarray


def standardize(train: Dataset, *others: Dataset) -> tuple[tuple[Dataset, ...], Standardization]:
    """Z-score all datasets using train statistics only.

    Features whose train-set variance is zero map to 0 everywhere.
    """
    if len(train) == 0:
        raise ValueError("train dataset is empty")
    mean = train.features.mean(axis=0)
    std = train.features.std(axis=0)
    safe_std = np.where(std == 0.0, 1.0, std)

    def transform(ds: Dataset) -> Dataset:
        scaled = (ds.features - mean) / safe_std
        scaled[:, std == 0.0] = 0.0
        return ds.with_features(scaled)

    transformed = tuple(transform(ds) for ds in (train, *others))
    return transformed, Standardization(mean=mean, std=std)

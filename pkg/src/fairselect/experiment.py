"""Configuration-driven experiment runner behind the CLI subcommands.

A single JSON config fully determines every output number: the dataset
source, bias rates, split protocol, selection hyperparameters, and seeds.
Each trial reshuffles the data, holds out an unbiased test split, injects
bias into the remaining pool, carves a biased validation set, trains the
configured pipeline, and reports accuracy plus fairness violations. Outputs
carry no timestamps, so identical configs produce identical bytes.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import nn
from .bias import BiasSpec, inject_bias
from .coteach import (
    MODE_MEAN,
    MODE_TRUNCATED,
    CoteachConfig,
    TrainingResult,
    final_epoch_selection,
    run_training,
    trace_record,
    train_baseline_erm,
)
from .data import CsvSchema, Dataset, SplitSpec, generate_synthetic, load_csv, split_train_val, standardize, write_csv
from .errors import ConfigError, DegenerateThresholdError, FairselectError, MetricUndefinedError
from .metrics import AggregateReport, EvalReport, aggregate, deo, detection_scores, evaluate
from .seeding import derive_rng, derive_seed

RUN_SCHEMA_VERSION = 1

MODE_ERM = "erm"
_MODE_ALIASES = {"m": MODE_MEAN, "t": MODE_TRUNCATED, "mean": MODE_MEAN, "truncated": MODE_TRUNCATED, "erm": MODE_ERM}
_MODE_LABELS = {MODE_MEAN: "M", MODE_TRUNCATED: "T", MODE_ERM: "ERM"}

# Seed-derivation tags for per-trial streams.
_TAG_TEST_SHUFFLE = 10
_TAG_BIAS = 11
_TAG_TRAIN = 12
_TAG_VAL_SPLIT = 13


@dataclass(frozen=True)
class SyntheticSource:
    n: int = 95_750
    seed: int = 13


@dataclass(frozen=True)
class CsvSource:
    path: str
    schema: CsvSchema


@dataclass(frozen=True)
class RunConfig:
    """Everything one experiment needs; see README for the JSON layout."""

    seed: int
    output_dir: str
    source: SyntheticSource | CsvSource
    rho_a: float = 0.0
    rho_b: float = 0.0
    bias_mode: str = "symmetric"
    validation_fraction: float = 0.1
    test_fraction: float = 0.2
    trial_count: int = 10
    mode: str = MODE_TRUNCATED
    nu: float = 1e-2
    n_select: float = 0.6
    train: nn.TrainConfig = field(default_factory=nn.TrainConfig)
    sweep_nu: tuple[float, ...] = ()
    sweep_n_select: tuple[float, ...] = ()
    trace_indices: bool = False

    def __post_init__(self):
        if self.mode not in (MODE_MEAN, MODE_TRUNCATED, MODE_ERM):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError("test_fraction must lie in (0, 1)")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ConfigError("validation_fraction must lie in [0, 1)")
        if self.trial_count < 1:
            raise ConfigError("trial_count must be at least 1")


def canonical_mode(name: str) -> str:
    try:
        return _MODE_ALIASES[str(name).lower()]
    except KeyError:
        raise ConfigError(f"unknown mode {name!r}") from None


def parse_config(raw: dict, overrides: dict | None = None) -> RunConfig:
    """Build a RunConfig from a JSON document plus CLI field overrides."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    raw = json.loads(json.dumps(raw))  # deep copy, keeps caller's dict intact
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        section = raw
        *parents, leaf = key.split(".")
        for part in parents:
            section = section.setdefault(part, {})
        section[leaf] = value

    dataset = raw.get("dataset")
    if not isinstance(dataset, dict) or len(dataset) != 1:
        raise ConfigError("config needs exactly one dataset source (synthetic or csv)")
    kind, spec = next(iter(dataset.items()))
    if kind == "synthetic":
        source = SyntheticSource(n=int(spec.get("n", 95_750)), seed=int(spec.get("seed", 13)))
    elif kind == "csv":
        try:
            schema_raw = dict(spec["schema"])
            schema = CsvSchema(
                feature_columns=tuple(schema_raw.pop("feature_columns")),
                sensitive_column=schema_raw.pop("sensitive_column"),
                privileged_value=str(schema_raw.pop("privileged_value")),
                label_column=schema_raw.pop("label_column"),
                true_label_column=schema_raw.pop("true_label_column", None),
                unprivileged_value=str(schema_raw.pop("unprivileged_value", "B")),
                class_count=int(schema_raw.pop("class_count", 2)),
                delimiter=str(schema_raw.pop("delimiter", ",")),
            )
            if schema_raw:
                raise ConfigError(f"unknown schema fields: {sorted(schema_raw)}")
            source = CsvSource(path=str(spec["path"]), schema=schema)
        except KeyError as exc:
            raise ConfigError(f"csv dataset source is missing {exc}") from None
    else:
        raise ConfigError(f"unknown dataset source {kind!r}")

    bias = raw.get("bias", {})
    split = raw.get("split", {})
    coteach = raw.get("coteach", {})
    train_raw = coteach.get("train", {})
    sweep = raw.get("sweep", {})
    try:
        train = nn.TrainConfig(
            learning_rate=float(train_raw.get("learning_rate", 0.01)),
            epochs=int(train_raw.get("epochs", 10)),
            batch_size=int(train_raw.get("batch_size", 256)),
            hidden_width=int(train_raw.get("hidden_width", 32)),
            seed=0,  # per-trial seeds are derived from the master seed
        )
        return RunConfig(
            seed=int(raw.get("seed", 0)),
            output_dir=str(raw.get("output_dir", "out")),
            source=source,
            rho_a=float(bias.get("rho_a", 0.0)),
            rho_b=float(bias.get("rho_b", 0.0)),
            bias_mode=str(bias.get("mode", "symmetric")),
            validation_fraction=float(split.get("validation_fraction", 0.1)),
            test_fraction=float(split.get("test_fraction", 0.2)),
            trial_count=int(split.get("trial_count", 10)),
            mode=canonical_mode(coteach.get("mode", "T")),
            nu=float(coteach.get("nu", 1e-2)),
            n_select=float(coteach.get("n_select", 0.6)),
            train=train,
            sweep_nu=tuple(float(v) for v in sweep.get("nu", ())),
            sweep_n_select=tuple(float(v) for v in sweep.get("n_select", ())),
            trace_indices=bool(raw.get("trace_indices", False)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config value: {exc}") from None


def config_to_dict(config: RunConfig) -> dict:
    """Resolved config as a JSON document (the one archived next to outputs)."""
    if isinstance(config.source, SyntheticSource):
        dataset = {"synthetic": {"n": config.source.n, "seed": config.source.seed}}
    else:
        schema = asdict(config.source.schema)
        schema["feature_columns"] = list(config.source.schema.feature_columns)
        dataset = {"csv": {"path": config.source.path, "schema": schema}}
    doc = {
        "seed": config.seed,
        "output_dir": config.output_dir,
        "dataset": dataset,
        "bias": {"rho_a": config.rho_a, "rho_b": config.rho_b, "mode": config.bias_mode},
        "split": {
            "validation_fraction": config.validation_fraction,
            "test_fraction": config.test_fraction,
            "trial_count": config.trial_count,
        },
        "coteach": {
            "mode": _MODE_LABELS[config.mode],
            "nu": config.nu,
            "n_select": config.n_select,
            "train": {
                "learning_rate": config.train.learning_rate,
                "epochs": config.train.epochs,
                "batch_size": config.train.batch_size,
                "hidden_width": config.train.hidden_width,
            },
        },
        "trace_indices": config.trace_indices,
    }
    if config.sweep_nu or config.sweep_n_select:
        doc["sweep"] = {"nu": list(config.sweep_nu), "n_select": list(config.sweep_n_select)}
    return doc


def load_dataset(config: RunConfig) -> tuple[Dataset, str]:
    """Materialize the configured dataset.

    CSVs without a true-label column treat observed labels as ground truth
    (bias is injected relative to them); the provenance string records this.
    """
    if isinstance(config.source, SyntheticSource):
        return generate_synthetic(config.source.n, config.source.seed), "generator"
    dataset = load_csv(config.source.path, config.source.schema)
    if dataset.true_label is None:
        dataset = replace(dataset, true_label=dataset.observed_label.copy())
        return dataset, "observed_as_true"
    return dataset, "column"


def _labels_checksum(labels: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(labels, dtype=np.int64).tobytes()).hexdigest()


@dataclass(frozen=True)
class TrialResult:
    record: dict
    report: EvalReport
    traces: list


def run_trial(dataset: Dataset, config: RunConfig, trial: int) -> TrialResult:
    """One shuffled trial: split, bias, train, evaluate."""
    n = len(dataset)
    perm = derive_rng(config.seed, _TAG_TEST_SHUFFLE, trial).permutation(n)
    test_count = int(n * config.test_fraction)
    if test_count == 0 or test_count == n:
        raise ConfigError(f"test_fraction {config.test_fraction} leaves an empty side for n={n}")
    test = dataset.subset(perm[:test_count])
    pool = dataset.subset(perm[test_count:])

    # The test split keeps ground-truth labels; verify nothing touches them.
    test_checksum = _labels_checksum(test.true_label)

    biased_pool = inject_bias(
        pool,
        BiasSpec(
            rho_a=config.rho_a,
            rho_b=config.rho_b,
            seed=derive_seed(config.seed, _TAG_BIAS, trial),
            mode=config.bias_mode,
        ),
    )
    train_set, val_set = split_train_val(
        biased_pool,
        SplitSpec(
            validation_fraction=config.validation_fraction,
            shuffle_seed=derive_seed(config.seed, _TAG_VAL_SPLIT, trial),
            trial_count=config.trial_count,
        ),
    )
    (train_std, val_std, test_std), _ = standardize(train_set, val_set, test)

    train_config = replace(config.train, seed=derive_seed(config.seed, _TAG_TRAIN, trial))
    selection = None
    detection = (None, None)
    traces: list = []
    if config.mode == MODE_ERM:
        theta = train_baseline_erm(train_std, train_config)
    else:
        result: TrainingResult = run_training(
            train_std,
            CoteachConfig(
                train=train_config,
                nu=config.nu,
                n_select_fraction=config.n_select,
                threshold_mode=config.mode,
            ),
        )
        theta = result.model
        traces = result.traces
        kept_final, removed_final = final_epoch_selection(result.traces)
        detection = detection_scores(removed_final, train_std)
        flipped = train_std.observed_label != train_std.true_label
        selection = {
            "train_flip_fraction": float(flipped.mean()),
            "selected_flip_fraction": float(flipped[kept_final].mean()) if len(kept_final) else 0.0,
            "kept_count": int(len(kept_final)),
            "removed_count": int(len(removed_final)),
        }

    predictions = nn.predict_labels(theta, test_std.features)
    report = evaluate(
        predictions, test_std, detection_precision=detection[0], detection_recall=detection[1]
    )

    validation = {"error": None, "deo": None}
    if len(val_std) > 0:
        val_pred = nn.predict_labels(theta, val_std.features)
        validation["error"] = float(np.mean(val_pred != val_std.observed_label))
        try:
            validation["deo"] = deo(val_pred, val_std.observed_label, val_std.sensitive)
        except MetricUndefinedError:
            validation["deo"] = None

    assert _labels_checksum(test.true_label) == test_checksum, "test labels were modified"

    record = {
        "schema_version": RUN_SCHEMA_VERSION,
        "trial": trial,
        "mode": _MODE_LABELS[config.mode],
        "rho_a": config.rho_a,
        "rho_b": config.rho_b,
        "nu": config.nu,
        "n_select": config.n_select,
        "test": report.to_dict(),
        "validation": validation,
        "selection": selection,
    }
    return TrialResult(record=record, report=report, traces=traces)


def _aggregate_validation(records: list[dict]) -> dict:
    out = {}
    for key in ("error", "deo"):
        values = [r["validation"][key] for r in records if r["validation"][key] is not None]
        if values:
            out[key] = {
                "mean": float(np.mean(values)),
                "std": float(np.std(values, ddof=1)) if len(values) > 1 else 0.0,
            }
    return out


def aggregate_records(records: list[dict], reports: list[EvalReport]) -> dict:
    agg: AggregateReport = aggregate(reports)
    first = records[0]
    return {
        "schema_version": RUN_SCHEMA_VERSION,
        "mode": first["mode"],
        "rho_a": first["rho_a"],
        "rho_b": first["rho_b"],
        "nu": first["nu"],
        "n_select": first["n_select"],
        "trial_count": agg.trial_count,
        "metrics": agg.to_dict()["metrics"],
        "validation": _aggregate_validation(records),
    }


def render_table(rows: list[dict]) -> str:
    """Aligned text table with one row per aggregate (Err. in percent)."""
    headers = ["mode", "rho_a", "rho_b", "trials", "err_pct", "deo", "dp", "p_pct"]
    lines = []
    for row in rows:
        metrics = row["metrics"]

        def cell(name, scale=1.0):
            if name not in metrics:
                return "-"
            return f"{metrics[name]['mean'] * scale:.2f} ± {metrics[name]['std'] * scale:.2f}"

        lines.append(
            [
                row["mode"],
                f"{row['rho_a']:.2f}",
                f"{row['rho_b']:.2f}",
                str(row["trial_count"]),
                cell("test_error", 100.0),
                cell("deo"),
                cell("dp_distance"),
                cell("p_percent"),
            ]
        )
    widths = [max(len(h), *(len(line[i]) for line in lines)) for i, h in enumerate(headers)]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    out = [fmt.format(*headers)]
    out.extend(fmt.format(*line) for line in lines)
    return "\n".join(out) + "\n"


def _write_json(path: Path, document: dict):
    path.write_text(json.dumps(document, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_run(config: RunConfig, output_dir: str | Path | None = None) -> dict:
    """Run all trials, write per-trial and aggregate outputs, return the aggregate."""
    out = Path(output_dir if output_dir is not None else config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "config.json", config_to_dict(config))

    dataset, provenance = load_dataset(config)
    records, reports = [], []
    with (out / "trace.jsonl").open("w", encoding="utf-8") as trace_file:
        for trial in range(config.trial_count):
            result = run_trial(dataset, config, trial)
            result.record["true_label_provenance"] = provenance
            records.append(result.record)
            reports.append(result.report)
            _write_json(out / f"trial_{trial}.json", result.record)
            for trace in result.traces:
                record = trace_record(trace, include_indices=config.trace_indices)
                record["trial"] = trial
                trace_file.write(json.dumps(record) + "\n")

    aggregate_doc = aggregate_records(records, reports)
    _write_json(out / "aggregate.json", aggregate_doc)
    (out / "aggregate.txt").write_text(render_table([aggregate_doc]), encoding="utf-8")
    return aggregate_doc


def cmd_synth(config: RunConfig, out_path: str | Path) -> Path:
    """Generate the synthetic dataset and write it (true labels included)."""
    if not isinstance(config.source, SyntheticSource):
        raise ConfigError("synth needs a synthetic dataset source")
    dataset = generate_synthetic(config.source.n, config.source.seed)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_csv(dataset, out_path)
    return out_path


def _cell_name(nu: float, n_select: float) -> str:
    return f"nu_{nu:g}__ns_{n_select:g}"


def cmd_sweep(config: RunConfig, output_dir: str | Path | None = None) -> dict:
    """Run the full (nu, n_select) grid; each cell is an independent run.

    Cells whose margin is degenerate are recorded as failed without aborting
    the sweep. The cell with the lowest mean validation error (ties broken by
    validation DEO) is flagged as selected.
    """
    if not config.sweep_nu or not config.sweep_n_select:
        raise ConfigError("sweep requires nonempty nu and n_select grids")
    out = Path(output_dir if output_dir is not None else config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "config.json", config_to_dict(config))

    cells = []
    for nu in sorted(config.sweep_nu):
        for n_select in sorted(config.sweep_n_select):
            cell_dir = out / "cells" / _cell_name(nu, n_select)
            cell_config = replace(
                config, nu=nu, n_select=n_select, sweep_nu=(), sweep_n_select=()
            )
            cell = {"nu": nu, "n_select": n_select, "dir": str(cell_dir.relative_to(out))}
            try:
                aggregate_doc = cmd_run(cell_config, cell_dir)
            except (DegenerateThresholdError, ConfigError) as exc:
                cell.update(status="failed", error=f"{type(exc).__name__}: {exc}")
            else:
                cell.update(status="ok", aggregate=aggregate_doc)
            cells.append(cell)

    def selection_key(cell):
        validation = cell["aggregate"].get("validation", {})
        error = validation.get("error", {}).get("mean")
        tie = validation.get("deo", {}).get("mean")
        return (
            error if error is not None else float("inf"),
            tie if tie is not None else float("inf"),
        )

    succeeded = [c for c in cells if c["status"] == "ok"]
    selected = min(succeeded, key=selection_key) if succeeded else None
    for cell in cells:
        cell["selected"] = selected is not None and cell is selected

    sweep_doc = {
        "schema_version": RUN_SCHEMA_VERSION,
        "mode": _MODE_LABELS[config.mode],
        "rho_a": config.rho_a,
        "rho_b": config.rho_b,
        "cells": cells,
    }
    _write_json(out / "sweep.json", sweep_doc)
    (out / "sweep.txt").write_text(_render_sweep(sweep_doc), encoding="utf-8")
    return sweep_doc


def _render_sweep(sweep_doc: dict) -> str:
    lines = ["nu        n_select  status  err_pct          deo              selected"]
    for cell in sweep_doc["cells"]:
        if cell["status"] == "ok":
            metrics = cell["aggregate"]["metrics"]
            err = f"{metrics['test_error']['mean'] * 100:.2f} ± {metrics['test_error']['std'] * 100:.2f}"
            vio = f"{metrics['deo']['mean']:.3f} ± {metrics['deo']['std']:.3f}"
        else:
            err = vio = "-"
        lines.append(
            f"{cell['nu']:<8g}  {cell['n_select']:<8g}  {cell['status']:<6}  "
            f"{err:<15}  {vio:<15}  {'*' if cell['selected'] else ''}"
        )
    return "\n".join(lines) + "\n"


def cmd_report(run_dir: str | Path, output_dir: str | Path | None = None) -> dict:
    """Re-aggregate trial files under a directory, grouped by (mode, bias).

    The regenerated aggregates match the ones written at run time exactly.
    """
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise FairselectError(f"{run_dir}: not a directory")
    trial_paths = sorted(run_dir.rglob("trial_*.json"))
    if not trial_paths:
        raise FairselectError(f"{run_dir}: no trial_*.json files found")

    groups: dict[tuple, list[dict]] = {}
    for path in trial_paths:
        try:
            record = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise FairselectError(f"{path}: unreadable trial file ({exc})") from None
        for key in ("mode", "rho_a", "rho_b", "nu", "n_select", "test"):
            if key not in record:
                raise FairselectError(f"{path}: trial file is missing field {key!r}")
        groups.setdefault(
            (record["mode"], record["rho_a"], record["rho_b"], record["nu"], record["n_select"]),
            [],
        ).append(record)

    rows = []
    for key in sorted(groups, key=str):
        records = sorted(groups[key], key=lambda r: r["trial"])
        reports = [_report_from_record(r) for r in records]
        rows.append(aggregate_records(records, reports))

    report_doc = {"schema_version": RUN_SCHEMA_VERSION, "rows": rows}
    out = Path(output_dir) if output_dir is not None else run_dir
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "report.json", report_doc)
    (out / "report.txt").write_text(render_table(rows), encoding="utf-8")
    return report_doc


def _report_from_record(record: dict) -> EvalReport:
    test = record["test"]
    return EvalReport(
        test_error=test["test_error"],
        deo=test["deo"],
        dp_distance=test["dp_distance"],
        p_percent=test["p_percent"],
        group_rates=test["group_rates"],
        label_source=test["label_source"],
        detection_precision=test["detection_precision"],
        detection_recall=test["detection_recall"],
        flags=tuple(test["flags"]),
    )

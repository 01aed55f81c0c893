"""Published JSON schemas for every file the runner writes."""

_METRIC_STAT = {
    "type": "object",
    "properties": {"mean": {"type": "number"}, "std": {"type": "number", "minimum": 0}},
    "required": ["mean", "std"],
    "additionalProperties": False,
}

_NULLABLE_NUMBER = {"type": ["number", "null"]}

EVAL_REPORT_SCHEMA = {
    "type": "object",
    "properties": {
        "test_error": {"type": "number", "minimum": 0, "maximum": 1},
        "deo": {"type": "number", "minimum": 0, "maximum": 1},
        "dp_distance": {"type": "number", "minimum": 0, "maximum": 1},
        "p_percent": {"type": "number", "minimum": 0, "maximum": 1},
        "group_rates": {"type": "object"},
        "label_source": {"enum": ["true", "observed"]},
        "detection_precision": _NULLABLE_NUMBER,
        "detection_recall": _NULLABLE_NUMBER,
        "flags": {"type": "array", "items": {"type": "string"}},
    },
    "required": ["test_error", "deo", "dp_distance", "p_percent", "label_source"],
}

TRIAL_SCHEMA = {
    "type": "object",
    "properties": {
        "schema_version": {"const": 1},
        "trial": {"type": "integer", "minimum": 0},
        "mode": {"enum": ["M", "T", "ERM"]},
        "rho_a": {"type": "number"},
        "rho_b": {"type": "number"},
        "nu": {"type": "number"},
        "n_select": {"type": "number"},
        "test": EVAL_REPORT_SCHEMA,
        "validation": {
            "type": "object",
            "properties": {"error": _NULLABLE_NUMBER, "deo": _NULLABLE_NUMBER},
        },
        "selection": {
            "type": ["object", "null"],
            "properties": {
                "train_flip_fraction": {"type": "number"},
                "selected_flip_fraction": {"type": "number"},
                "kept_count": {"type": "integer"},
                "removed_count": {"type": "integer"},
            },
        },
        "true_label_provenance": {"enum": ["generator", "column", "observed_as_true"]},
    },
    "required": ["schema_version", "trial", "mode", "rho_a", "rho_b", "test"],
}

AGGREGATE_SCHEMA = {
    "type": "object",
    "properties": {
        "schema_version": {"const": 1},
        "mode": {"enum": ["M", "T", "ERM"]},
        "rho_a": {"type": "number"},
        "rho_b": {"type": "number"},
        "nu": {"type": "number"},
        "n_select": {"type": "number"},
        "trial_count": {"type": "integer", "minimum": 1},
        "metrics": {"type": "object", "additionalProperties": _METRIC_STAT},
        "validation": {"type": "object", "additionalProperties": _METRIC_STAT},
    },
    "required": ["schema_version", "mode", "trial_count", "metrics"],
}

SWEEP_SCHEMA = {
    "type": "object",
    "properties": {
        "schema_version": {"const": 1},
        "mode": {"enum": ["M", "T", "ERM"]},
        "cells": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "nu": {"type": "number"},
                    "n_select": {"type": "number"},
                    "dir": {"type": "string"},
                    "status": {"enum": ["ok", "failed"]},
                    "selected": {"type": "boolean"},
                    "aggregate": AGGREGATE_SCHEMA,
                    "error": {"type": "string"},
                },
                "required": ["nu", "n_select", "status", "selected"],
            },
        },
    },
    "required": ["schema_version", "cells"],
}

REPORT_SCHEMA = {
    "type": "object",
    "properties": {
        "schema_version": {"const": 1},
        "rows": {"type": "array", "items": AGGREGATE_SCHEMA},
    },
    "required": ["schema_version", "rows"],
}

TRACE_RECORD_SCHEMA = {
    "type": "object",
    "properties": {
        "schema_version": {"const": 1},
        "trial": {"type": "integer"},
        "epoch": {"type": "integer", "minimum": 0},
        "batch": {"type": "integer", "minimum": 0},
        "batch_size": {"type": "integer", "minimum": 1},
        "removed_a_count": {"type": "integer", "minimum": 0},
        "removed_b_count": {"type": "integer", "minimum": 0},
        "kept_count": {"type": "integer", "minimum": 0},
        "thresholds_a": {"type": "array", "items": {"type": ["number", "null"]}},
        "thresholds_b": {"type": "array", "items": {"type": ["number", "null"]}},
        "loss_a": {"type": "number"},
        "loss_b": {"type": "number"},
        "loss_selected": _NULLABLE_NUMBER,
    },
    "required": ["schema_version", "epoch", "batch", "kept_count"],
}

PARAMS_CHECKPOINT_SCHEMA = {
    "type": "object",
    "properties": {
        "format": {"const": "fairselect-params"},
        "version": {"const": 1},
        "dims": {
            "type": "object",
            "properties": {
                "d": {"type": "integer", "minimum": 1},
                "hidden": {"type": "integer", "minimum": 1},
                "k": {"type": "integer", "minimum": 2},
            },
            "required": ["d", "hidden", "k"],
        },
        "layer1_weights": {"type": "array"},
        "layer1_bias": {"type": "array"},
        "layer2_weights": {"type": "array"},
        "layer2_bias": {"type": "array"},
    },
    "required": ["format", "version", "dims"],
}

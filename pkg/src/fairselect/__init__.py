"""Removing group-dependent label bias via co-trained confident selection."""

from .bias import BiasSpec, FlipSummary, flip_summary, inject_bias
from .confident import (
    ConfidenceMatrix,
    JointEstimate,
    SelectionOutcome,
    ThresholdSet,
    UNASSIGNED,
    adjusted_thresholds,
    compute_thresholds,
    concentration_margin,
    confident_joint,
    count_matrix,
    estimate_joint,
    infer_true_labels,
    joint_distribution,
    mean_thresholds,
    off_diagonal,
    psi,
    self_confidence,
    truncated_thresholds,
)
from .coteach import (
    MODE_MEAN,
    MODE_TRUNCATED,
    CoteachConfig,
    TrainingResult,
    final_epoch_selection,
    run_training,
    select_fair_subset,
    train_baseline_erm,
    write_trace_jsonl,
)
from .data import (
    GROUP_A,
    GROUP_B,
    CsvSchema,
    Dataset,
    SplitSpec,
    batches,
    generate_synthetic,
    load_csv,
    partition_by_group,
    split_train_val,
    standardize,
    write_csv,
)
from .errors import (
    ConfigError,
    DatasetError,
    DegenerateThresholdError,
    EmptyFileError,
    EmptyGroupError,
    FairselectError,
    LabelRangeError,
    MetricUndefinedError,
    MissingColumnError,
    MissingValueError,
    NonNumericCellError,
)
from .experiment import RunConfig, cmd_report, cmd_run, cmd_sweep, cmd_synth, parse_config
from .metrics import (
    AggregateReport,
    EvalReport,
    aggregate,
    deo,
    detection_scores,
    dp_distance,
    evaluate,
    p_percent,
    test_error,
)
from .nn import (
    ModelParams,
    TrainConfig,
    forward,
    gradient,
    init_params,
    load_params,
    loss,
    predict_labels,
    save_params,
    sgd_step,
)

__version__ = "0.1.0"

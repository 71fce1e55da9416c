from .metrics import (
    MetricsReport,
    build_metrics_report,
    pr_auc,
    pr_curve,
    roc_auc,
    roc_curve,
    threshold_band,
    youden_threshold,
)
from .zoo import (
    ZooConfig,
    build_zoo,
    load_manifest,
    load_zoo_model,
    manifest_hash,
    validate_zoo,
    zoo_entries,
)
from .experiments import (
    DFExperimentResult,
    DLExperimentResult,
    RecoveryResult,
    imbalanced_eval,
    run_df_experiment,
    run_dl_experiment,
    run_recovery_experiment,
    validation_pool,
)

__all__ = [
    "MetricsReport", "build_metrics_report", "pr_auc", "pr_curve", "roc_auc",
    "roc_curve", "threshold_band", "youden_threshold",
    "ZooConfig", "build_zoo", "load_manifest", "load_zoo_model",
    "manifest_hash", "validate_zoo", "zoo_entries",
    "DFExperimentResult", "DLExperimentResult", "RecoveryResult",
    "imbalanced_eval", "run_df_experiment", "run_dl_experiment",
    "run_recovery_experiment", "validation_pool",
]

"""trojanscan: data-limited and data-free Trojan detection for small CNNs.

The package trains small convolutional classifiers on synthetic image
data, plants trigger-driven backdoors, and detects them two ways: a
data-limited detector that couples universal and per-image adversarial
perturbations through representation similarity, and a data-free detector
that inverts inputs to maximize neuron activation and watches the class
logits. Both ride on one block-alternating proximal gradient solver.
"""

from .base import ParamsMixin, check_images, check_labels, derive_seed
from .data import (
    DatasetBundle,
    PoisonConfig,
    TriggerSpec,
    attack_success_rate,
    generate_synthetic_dataset,
    load_dataset,
    make_trigger,
    poison_dataset,
    save_dataset,
    stamp,
)
from .detect import (
    DataFreeDetector,
    DataLimitedDetector,
    decide_mad,
    decide_threshold,
    detection_index,
    invert_input,
    logit_increase,
    refine,
    similarity_scores,
)
from .errors import (
    ConfigError,
    FormatError,
    NumericalError,
    ShapeMismatchError,
    TrainingDivergedError,
    TrojanScanError,
    TruncatedFileError,
    VersionError,
)
from .eval import (
    ZooConfig,
    build_zoo,
    imbalanced_eval,
    pr_auc,
    roc_auc,
    run_df_experiment,
    run_dl_experiment,
    run_recovery_experiment,
    validate_zoo,
)
from .nn import (
    CNNClassifier,
    ModelBundle,
    build_cnn,
    forward,
    input_gradient,
    load_model,
    save_model,
    train,
)
from .solver import SolverConfig, clip_box, project_simplex, prox_l1_box, solve

__version__ = "0.1.0"

__all__ = [
    "ParamsMixin", "check_images", "check_labels", "derive_seed",
    "DatasetBundle", "PoisonConfig", "TriggerSpec", "attack_success_rate",
    "generate_synthetic_dataset", "load_dataset", "make_trigger",
    "poison_dataset", "save_dataset", "stamp",
    "DataFreeDetector", "DataLimitedDetector", "decide_mad",
    "decide_threshold", "detection_index", "invert_input", "logit_increase",
    "refine", "similarity_scores",
    "ConfigError", "FormatError", "NumericalError", "ShapeMismatchError",
    "TrainingDivergedError", "TrojanScanError", "TruncatedFileError",
    "VersionError",
    "ZooConfig", "build_zoo", "imbalanced_eval", "pr_auc", "roc_auc",
    "run_df_experiment", "run_dl_experiment", "run_recovery_experiment",
    "validate_zoo",
    "CNNClassifier", "ModelBundle", "build_cnn", "forward", "input_gradient",
    "load_model", "save_model", "train",
    "SolverConfig", "clip_box", "project_simplex", "prox_l1_box", "solve",
]

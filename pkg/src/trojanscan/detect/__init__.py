from .data_limited import (
    DataLimitedDetector,
    DLDetectionResult,
    ValidationSet,
    build_validation_set,
    compute_per_image_perturbations,
    compute_universal_perturbation,
    cosine_similarity,
    decide_mad,
    decide_threshold,
    detection_index,
    similarity_scores,
    untargeted_universal_loss,
)
from .data_free import (
    DataFreeDetector,
    DFDetectionResult,
    InversionResult,
    SeedBatch,
    clean_seeds,
    decide,
    invert_input,
    logit_increase,
    noise_seeds,
    perturbation_mass_fraction,
    refine,
)
from .problems import (
    ActivationInversionProblem,
    PerImagePerturbationProblem,
    UniversalPerturbationProblem,
    hinged_margin,
    inversion_objective,
    stamp_relaxed,
)

__all__ = [
    "DataLimitedDetector", "DLDetectionResult", "ValidationSet",
    "build_validation_set", "compute_per_image_perturbations",
    "compute_universal_perturbation", "cosine_similarity", "decide_mad",
    "decide_threshold", "detection_index", "similarity_scores",
    "untargeted_universal_loss",
    "DataFreeDetector", "DFDetectionResult", "InversionResult", "SeedBatch",
    "clean_seeds", "decide", "invert_input", "logit_increase", "noise_seeds",
    "perturbation_mass_fraction", "refine",
    "ActivationInversionProblem", "PerImagePerturbationProblem",
    "UniversalPerturbationProblem", "hinged_margin", "inversion_objective",
    "stamp_relaxed",
]

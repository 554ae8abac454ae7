"""Subtype-aware alignment of irregular longitudinal trajectories.

The pipeline embeds every (subject, candidate shift) pair as a ridge-fitted
cubic-spline coefficient vector, alternates silhouette-selected clustering
with per-subject shift updates against trimmed centroids, and finally
reassigns outlying subjects jointly over shifts and clusters.
"""

from .cluster import (
    KSelection,
    Partition,
    SilhouetteReport,
    distance_matrix,
    kmeans,
    kmedoids,
    select_k,
    silhouette,
)
from .dataset import (
    CohortDataset,
    CohortFormatError,
    LoadReport,
    Trajectory,
    load_cohort,
    read_cohort_csv,
    save_cohort,
    shift_trajectory,
)
from .evaluate import (
    AgreementMetrics,
    RecoveryMetrics,
    ReplicateSummary,
    agreement,
    recovery,
    summarize,
    window_coverage_mask,
)
from .register import (
    ConfigError,
    RegistrationConfig,
    RegistrationResult,
    check_stopping,
    finalize,
    register,
    register_embedded,
    trimmed_centroid,
    update_shifts,
)
from .simulate import (
    CorruptionSpec,
    GroundTruth,
    ScenarioSpec,
    corrupt,
    generate,
    inflate_noise,
)
from .spline import (
    BasisSpec,
    EmbeddingTensor,
    KnotVector,
    ShiftGrid,
    basis_eval,
    build_embedding,
    load_embedding,
    make_basis,
    ridge_fit,
)

__version__ = "0.1.0"

__all__ = [
    "AgreementMetrics",
    "BasisSpec",
    "CohortDataset",
    "CohortFormatError",
    "ConfigError",
    "CorruptionSpec",
    "EmbeddingTensor",
    "GroundTruth",
    "KSelection",
    "KnotVector",
    "LoadReport",
    "Partition",
    "RecoveryMetrics",
    "RegistrationConfig",
    "RegistrationResult",
    "ReplicateSummary",
    "ScenarioSpec",
    "ShiftGrid",
    "SilhouetteReport",
    "Trajectory",
    "agreement",
    "basis_eval",
    "build_embedding",
    "check_stopping",
    "corrupt",
    "distance_matrix",
    "finalize",
    "generate",
    "inflate_noise",
    "kmeans",
    "kmedoids",
    "load_cohort",
    "load_embedding",
    "make_basis",
    "read_cohort_csv",
    "recovery",
    "register",
    "register_embedded",
    "ridge_fit",
    "save_cohort",
    "select_k",
    "shift_trajectory",
    "silhouette",
    "summarize",
    "trimmed_centroid",
    "update_shifts",
    "window_coverage_mask",
]

"""Goodness-of-fit testing for log-linear models on clustered multinomial data.

Clustered sampling inflates multinomial covariances by the design effect
1 + (n - 1) rho2; this package estimates that inflation (semiparametrically
or nonparametrically), fits log-linear models by minimum power divergence,
and corrects divergence-based goodness-of-fit statistics so their chi-square
calibration survives the clustering. A Monte Carlo harness estimates the
resulting test sizes under Dirichlet-multinomial, random-clumped, and
n-inflated generating laws.
"""

from .dispersion import (
    DispersionEstimate,
    brier_design_effect,
    semiparametric_design_effect,
    weights_and_effective_size,
    within_group_chisq,
)
from .divergence import divergence, phi_lambda
from .estimation import (
    ClusterDataset,
    ClusterTable,
    FitError,
    FitOptions,
    FitResult,
    collapse,
    group_collapse,
    independence_mle,
    qmpe,
)
from .gof import (
    GofResult,
    ScanResult,
    chi_square_sf,
    gof_test,
    raw_statistic,
    table_scan,
)
from .model import (
    LogLinearModel,
    ValidationReport,
    build_probabilities,
    cell_index,
    independence_design,
    load_design_csv,
    sigma_matrix,
    validate_design,
)
from .simgen import (
    GeneratorSpec,
    SizeRow,
    StudyConfig,
    StudyResult,
    gen_cluster,
    gen_clusters,
    gen_dataset,
    size_study,
)

__version__ = "0.1.0"

__all__ = [
    "ClusterDataset",
    "ClusterTable",
    "DispersionEstimate",
    "FitError",
    "FitOptions",
    "FitResult",
    "GeneratorSpec",
    "GofResult",
    "LogLinearModel",
    "ScanResult",
    "SizeRow",
    "StudyConfig",
    "StudyResult",
    "ValidationReport",
    "brier_design_effect",
    "build_probabilities",
    "cell_index",
    "chi_square_sf",
    "collapse",
    "divergence",
    "gen_cluster",
    "gen_clusters",
    "gen_dataset",
    "gof_test",
    "group_collapse",
    "independence_design",
    "independence_mle",
    "load_design_csv",
    "phi_lambda",
    "qmpe",
    "raw_statistic",
    "semiparametric_design_effect",
    "sigma_matrix",
    "size_study",
    "table_scan",
    "validate_design",
    "weights_and_effective_size",
    "within_group_chisq",
]

"""Instrumental-variable estimation via the unified C-matrix family.

Every estimator in this package solves (X'C'X)^{-1} X'C'y for a matrix C
drawn from one of five parametric families built on the instrument
projector. That single representation covers OLS, TSLS, the k-class,
jackknife IV estimators and their leverage-corrected, approximately
unbiased variants — plus each family's finite-sample bias coefficient and
a seeded Monte Carlo harness for stress-testing them.
"""

from .bias import (
    ADVISORY_TOL,
    DEFAULT_TOL,
    BiasCoefficient,
    bias_coefficient,
    bias_coefficient_for,
    is_approximately_unbiased,
    vanishing_bound,
    vanishing_probe,
)
from .design import (
    DEFAULT_BA_THRESHOLD,
    DesignData,
    LeverageReport,
    PartialledData,
    ProjectionDecomposition,
    StackedDesign,
    leverage_report,
    partial_out,
    project,
    stack,
)
from .errors import (
    DataFileError,
    DesignError,
    NearSingularError,
    OracleInfeasibleError,
    RankDeficiencyError,
    SingularWeightError,
)
from .estimators import (
    COND_LIMIT,
    EstimateResult,
    EstimatorSpec,
    FAMILY_KINDS,
    Family,
    NAMED_ESTIMATORS,
    apply_c,
    estimate,
    jive1_loo_oracle,
    k_class,
    lambda1,
    lambda2,
    omega1,
    omega2,
    resolve_named,
    spec_for,
    standard_errors,
)
from .io import (
    SCHEMA_VERSION,
    ColumnManifest,
    LoadedDataset,
    load_csv,
    read_density_csv,
    read_estimates_csv,
    read_summary_csv,
    read_summary_json,
    read_table_csv,
    write_dataset,
    write_density_csv,
    write_estimates_csv,
    write_summary_csv,
    write_summary_json,
    write_table_csv,
)
from .simulate import (
    DEFAULT_NAMES,
    GROUP_SIZES,
    GroupHet,
    Homoskedastic,
    MonteCarloSummary,
    OUTLIER_NAMES,
    Outlier,
    PRESETS,
    RoundDraw,
    default_estimators,
    density_export,
    generate,
    preset,
    round_rng,
    run,
    summarize,
)
from .sklearn_api import CMatrixIV

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # errors
    "DataFileError",
    "DesignError",
    "NearSingularError",
    "OracleInfeasibleError",
    "RankDeficiencyError",
    "SingularWeightError",
    # design
    "DEFAULT_BA_THRESHOLD",
    "DesignData",
    "LeverageReport",
    "PartialledData",
    "ProjectionDecomposition",
    "StackedDesign",
    "leverage_report",
    "partial_out",
    "project",
    "stack",
    # estimators
    "COND_LIMIT",
    "EstimateResult",
    "EstimatorSpec",
    "FAMILY_KINDS",
    "Family",
    "NAMED_ESTIMATORS",
    "apply_c",
    "estimate",
    "jive1_loo_oracle",
    "k_class",
    "lambda1",
    "lambda2",
    "omega1",
    "omega2",
    "resolve_named",
    "spec_for",
    "standard_errors",
    # bias
    "ADVISORY_TOL",
    "DEFAULT_TOL",
    "BiasCoefficient",
    "bias_coefficient",
    "bias_coefficient_for",
    "is_approximately_unbiased",
    "vanishing_bound",
    "vanishing_probe",
    # simulate
    "DEFAULT_NAMES",
    "GROUP_SIZES",
    "GroupHet",
    "Homoskedastic",
    "MonteCarloSummary",
    "OUTLIER_NAMES",
    "Outlier",
    "PRESETS",
    "RoundDraw",
    "default_estimators",
    "density_export",
    "generate",
    "preset",
    "round_rng",
    "run",
    "summarize",
    # io
    "SCHEMA_VERSION",
    "ColumnManifest",
    "LoadedDataset",
    "load_csv",
    "read_density_csv",
    "read_estimates_csv",
    "read_summary_csv",
    "read_summary_json",
    "read_table_csv",
    "write_dataset",
    "write_density_csv",
    "write_estimates_csv",
    "write_summary_csv",
    "write_summary_json",
    "write_table_csv",
    # sklearn surface
    "CMatrixIV",
]

"""trfopt: trust-region filter optimization for grey-box problems."""

from .problem import (
    BlackBoxEvaluator,
    BlackBoxFault,
    EvalCache,
    GlassBoxModel,
    GreyBoxProblem,
    VariablePartition,
    infeasibility,
    initial_infeasibility,
    subprocess_blackbox,
)
from .spectral import (
    ProjectionPolicy,
    SpectralFault,
    adaptive_select,
    eigendecompose,
    local_hessian,
    project_absolute,
    project_clamp,
    project_diagonal_loading,
)
from .subsolver import (
    NlpSubproblem,
    SubSolution,
    SubStatus,
    TrustConstraint,
    cauchy_decrease_diagnostic,
    kkt_report,
    register_external_solver,
    solve_compatibility,
    solve_criticality,
    solve_nlp,
    solve_trsp,
)
from .surrogate import (
    IllPoisedDesignError,
    KernelSpec,
    SampleSet,
    SurrogateKind,
    SurrogateModel,
    design_samples,
    fit,
    fully_linear_diagnostic,
    gp_posterior,
    required_samples,
)
from .trf import (
    FilterSet,
    SolveReport,
    StepOutcome,
    TraceRecord,
    TrfConfig,
    add_to_filter,
    check_termination,
    criticality_update,
    default_config,
    filter_acceptable,
    reduction_ratio,
    restoration,
    switching_condition,
    trace_csv,
    trf_solve,
    update_radius,
)

__version__ = "0.1.0"

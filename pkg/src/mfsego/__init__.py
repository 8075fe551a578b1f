"""Constrained multi-fidelity Bayesian optimization (MFSEGO).

Recursive co-kriging surrogates, a constrained log-EI infill search,
four fidelity-selection criteria, the analytical benchmark problems,
and the campaign/metrics tooling to compare solvers by data profiles.
"""

__version__ = "0.1.0"

from .acquisition import Incumbent, ei, erfcx, log1mexp, log_ei, pof
from .doe import Bounds, Design, NestedDesign, augment_nested, build_nested, lhs_sample
from .errors import (
    ConfigError,
    DomainError,
    FitError,
    MfsegoError,
    SolverError,
    StateError,
    StructureError,
)
from .fidelity import (
    CostModel,
    FidelityCriterion,
    ReductionTable,
    normalized_reduction,
    reduction_table,
    select_level,
    variance_reduction,
)
from .gp import GpModel, KernelParams, Posterior, gp_build, gp_fit, kernel_corr
from .metrics import DataProfile, data_profile, rscv, tau_solved
from .mfgp import (
    LevelPosterior,
    MfGpModel,
    mfgp_build,
    mfgp_fit,
    mfgp_predict,
    total_variance_identity_check,
    variance_contribution,
)
from .optimizer import (
    FidelityDataset,
    LevelSamples,
    OptimizerConfig,
    ProblemDef,
    RunRecord,
    evaluate_design,
    evaluate_doe,
    mfsego_run,
    sego_run,
    warm_start_hyperparams,
)
from .problems import get_problem, make_problem_def, verify_table1
from .subsolver import AcqProblem, SubsolveResult, select_incumbent, solve

__all__ = [name for name in dir() if not name.startswith("_")]

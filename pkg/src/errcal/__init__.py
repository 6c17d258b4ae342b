"""Regression calibration for linear regression with correlated measurement
error in the outcome and covariates."""

from .calibration import (
    CalibrationFit,
    NuisanceEstimates,
    calibrate_case1,
    calibrate_case2,
    calibrate_case3,
    moment_correction,
    naive_fit,
    nuisance_case1,
    nuisance_case2,
    nuisance_case3,
    true_fit,
)
from .core_stats import SampleMoments, ols, sample_moments, solve_symmetric, unvech, vech
from .data import Dataset, SubjectRecord
from .error_models import ErrorSpec, ModelSpec, ScenarioSpec, generate, get_scenario, load_registry, whi_scenario
from .errors import (
    AllReplicatesFailed,
    DegenerateNuisance,
    ErrcalError,
    InsufficientData,
    InvalidScenario,
    LayoutError,
    NearSingular,
    NotSymmetric,
    PsiNotRoot,
    RankDeficient,
    UnstableBootstrap,
)
from .inference import SandwichResult, ThetaVector, bootstrap, fit, psi, psi_matrix, sandwich
from .montecarlo import MonteCarloSummary, RunSpec, mc_tolerance, run

__version__ = "0.1.0"

__all__ = [
    "CalibrationFit",
    "NuisanceEstimates",
    "calibrate_case1",
    "calibrate_case2",
    "calibrate_case3",
    "moment_correction",
    "naive_fit",
    "nuisance_case1",
    "nuisance_case2",
    "nuisance_case3",
    "true_fit",
    "SampleMoments",
    "ols",
    "sample_moments",
    "solve_symmetric",
    "unvech",
    "vech",
    "Dataset",
    "SubjectRecord",
    "ErrorSpec",
    "ModelSpec",
    "ScenarioSpec",
    "generate",
    "get_scenario",
    "load_registry",
    "whi_scenario",
    "AllReplicatesFailed",
    "DegenerateNuisance",
    "ErrcalError",
    "InsufficientData",
    "InvalidScenario",
    "LayoutError",
    "NearSingular",
    "NotSymmetric",
    "PsiNotRoot",
    "RankDeficient",
    "UnstableBootstrap",
    "SandwichResult",
    "ThetaVector",
    "bootstrap",
    "fit",
    "psi",
    "psi_matrix",
    "sandwich",
    "MonteCarloSummary",
    "RunSpec",
    "mc_tolerance",
    "run",
]

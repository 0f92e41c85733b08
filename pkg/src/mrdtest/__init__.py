"""Maximum residual down multiple testing for correlated normal data."""

__version__ = "0.1.0"

from .covariance import ActiveSet, CovarianceModel
from .critical_values import (
    CriticalSchedule,
    DunnettCalibration,
    mc_max_quantile,
    normal_quantile,
    normal_upper_quantile,
    schedule_mrd_two_sided,
    schedule_one_sided,
    schedule_step_down,
)
from .estimators import (
    BenjaminiHochberg,
    DunnettStepDown,
    HolmStepDown,
    LikelihoodRatioStepDown,
    MaximumResidualDown,
)
from .exceptions import (
    FactorizationError,
    MRDError,
    NumericalFailure,
    ParameterDomainError,
    ScheduleError,
)
from .procedures import (
    DecisionVector,
    bh_step_up,
    dunnett_step_down,
    holm_step_down_marginal,
    lrsd,
    marginal_pvalue,
    mrd,
)
from .projection import one_sided_lrt, project_nonneg_orthant
from .residuals import residual_vector
from .scenarios import Scenario, generate, mean_pattern_table, triples_pattern
from .simulation import SimulationSummary, compare_procedures, run_simulation

__all__ = [
    "ActiveSet", "BenjaminiHochberg", "CovarianceModel", "CriticalSchedule", "DecisionVector",
    "DunnettCalibration", "DunnettStepDown", "FactorizationError", "HolmStepDown",
    "LikelihoodRatioStepDown", "MRDError", "MaximumResidualDown", "NumericalFailure",
    "ParameterDomainError", "Scenario", "ScheduleError", "SimulationSummary", "bh_step_up",
    "compare_procedures", "dunnett_step_down", "generate", "holm_step_down_marginal", "lrsd",
    "marginal_pvalue", "mc_max_quantile", "mean_pattern_table", "mrd", "normal_quantile",
    "normal_upper_quantile", "one_sided_lrt", "project_nonneg_orthant", "residual_vector",
    "run_simulation", "schedule_mrd_two_sided", "schedule_one_sided", "schedule_step_down",
    "triples_pattern",
]

"""Joint Bayesian structure learning for populations of dynamic networks.

Exact posterior edge marginals for a shared latent network and for every
individual network, from interventional time-course data, via model
averaging over an in-degree-restricted parent-set space.
"""

from .data import (
    GenerationRegime,
    GroundTruth,
    IndividualData,
    PopulationDataset,
    TimeCourse,
    contaminate,
    generate_population,
    load_dataset,
    save_dataset,
)
from .elicitation import (
    ElicitationResult,
    expected_shd,
    h_from_temperature,
    temperature_from_h,
    two_step_elicitation,
)
from .engine import EdgePosterior, Hyperparameters, PhaseCache, run
from .estimators import EstimatorKind, run_estimator
from .evaluation import AurReport, RegimeSweep, analytic_prior_baseline, aur, run_sweep, task_aur
from .graphs import Network, ParentSpace, enumerate_parent_space, shd, shd_network
from .likelihood import (
    PhiPolicy,
    RegressionView,
    ScoreTable,
    build_regression_view,
    build_score_table,
    log_marginal_likelihood,
    select_phi,
)

__version__ = "0.1.0"

__all__ = [
    "GenerationRegime",
    "GroundTruth",
    "IndividualData",
    "PopulationDataset",
    "TimeCourse",
    "contaminate",
    "generate_population",
    "load_dataset",
    "save_dataset",
    "ElicitationResult",
    "expected_shd",
    "h_from_temperature",
    "temperature_from_h",
    "two_step_elicitation",
    "EdgePosterior",
    "Hyperparameters",
    "PhaseCache",
    "run",
    "EstimatorKind",
    "run_estimator",
    "AurReport",
    "RegimeSweep",
    "analytic_prior_baseline",
    "aur",
    "run_sweep",
    "task_aur",
    "Network",
    "ParentSpace",
    "enumerate_parent_space",
    "shd",
    "shd_network",
    "PhiPolicy",
    "RegressionView",
    "ScoreTable",
    "build_regression_view",
    "build_score_table",
    "log_marginal_likelihood",
    "select_phi",
]

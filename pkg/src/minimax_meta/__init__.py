"""Distribution-agnostic meta-learning as a min-max problem.

The model parameters ``w`` minimize and the task weights ``p`` on the
simplex maximize ``phi(w, p) = sum_i p_i F_i(w)``, where ``F_i`` is the
expected loss of task ``i`` after one stochastic gradient step. The package
provides the stochastic meta-gradients, the projected descent-ascent solver,
the problem constants and exact diagnostics on analytic task suites.
"""

from .constants import ConstantsInput, ConstantsReport, constants_report
from .diagnostics import (
    DiagnosticsRecord,
    duality_gap,
    projected_grad,
    run_constants,
    stationarity_certificate,
)
from .errors import ConfigError, DegenerateProblemError, RunAborted, UnsupportedSuiteError
from .estimators import (
    GradientEstimate,
    Minibatch,
    estimate,
    estimate_grad_p,
    estimate_grad_w,
    exact_grad_p,
    exact_grad_w,
    sample_minibatch,
)
from .geometry import FeasibleSet, project_ball, project_simplex, prox_step
from .solver import RunConfig, RunOutput, SaddleState, run_da_maml, run_maml_baseline, step
from .tasks import (
    NoiseModel,
    QuadraticTask,
    TaskSet,
    TrigQuadraticTask,
    quadratic_suite,
    suite_constants,
    trig_suite,
)

__version__ = "0.1.0"

__all__ = [
    "ConstantsInput",
    "ConstantsReport",
    "constants_report",
    "DiagnosticsRecord",
    "duality_gap",
    "projected_grad",
    "run_constants",
    "stationarity_certificate",
    "ConfigError",
    "DegenerateProblemError",
    "RunAborted",
    "UnsupportedSuiteError",
    "GradientEstimate",
    "Minibatch",
    "estimate",
    "estimate_grad_p",
    "estimate_grad_w",
    "exact_grad_p",
    "exact_grad_w",
    "sample_minibatch",
    "FeasibleSet",
    "project_ball",
    "project_simplex",
    "prox_step",
    "RunConfig",
    "RunOutput",
    "SaddleState",
    "run_da_maml",
    "run_maml_baseline",
    "step",
    "NoiseModel",
    "QuadraticTask",
    "TaskSet",
    "TrigQuadraticTask",
    "quadratic_suite",
    "suite_constants",
    "trig_suite",
]

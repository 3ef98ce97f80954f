"""Relaxation Crank-Nicolson B-spline Galerkin solver for the nonlinear
Schroedinger equation with a posteriori error estimators."""
from .apost_estimators import (
    Constants,
    EstimatorReport,
    accumulate_report,
    compute_functionals,
    effectivity,
    eta2,
    eta2_diff,
    etainf,
    local_estimators,
)
from .exceptions import (
    ConfigurationError,
    CriticalMassError,
    NonPositiveInputError,
    OrderOfComputationError,
    RelaxNLSError,
    SingularMatrixError,
    SolverError,
)
from .experiments import (
    RunConfig,
    TableRow,
    choose_timestep,
    eoc,
    run_realization,
    soliton,
    soliton_problem,
    sweep,
    zero_problem,
)
from .fem_core import SplineFun, assemble_mass, assemble_stiffness, discrete_laplacian, l2_project
from .nls_stepper import ProblemSpec, TimeGrid, run
from .spline_mesh import SplineSpace, build_space, gauss_rule

__version__ = "0.1.0"


def __getattr__(name):
    # keeps scikit-learn an import-on-demand dependency
    if name == "RelaxationCNGalerkin":
        from .estimator import RelaxationCNGalerkin

        return RelaxationCNGalerkin
    raise AttributeError(name)

"""Estimator-style front end: ``fit`` solves and estimates, ``predict`` evaluates."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .apost_estimators import Constants, accumulate_report, compute_functionals, local_estimators
from .experiments import choose_timestep
from .fem_core import SplineFun
from .nls_stepper import ProblemSpec, TimeGrid, run
from .spline_mesh import build_space


class RelaxationCNGalerkin(BaseEstimator):
    """Relaxation Crank-Nicolson / B-spline Galerkin solver with a posteriori estimates.

    Parameters
    ----------
    M : int
        Number of uniform elements.
    degree : int
        Spline degree ``r``.
    domain : tuple of float
        Interval ``(a, b)`` with homogeneous Dirichlet conditions.
    T : float
        Final time.
    p, alpha, lam : float
        Equation ``u_t - i alpha u_xx = i lam |u|^(2p) u``.
    n_steps : int, optional
        Uniform step count. Defaults to ``floor(T h^(-(r+1)/2))``.
    convention : {"formula", "table"}
        Norm convention of the time and data estimators.
    constants : Constants, optional
        Absolute constants, all one by default.
    extended : bool
        March with long double residual correction, see :func:`run`.

    Attributes
    ----------
    space_ : SplineSpace
    result_ : RunResult
    report_ : EstimatorReport
    coef_ : ndarray
        Coefficients of the discrete solution at ``T``.
    """

    def __init__(
        self,
        M: int = 2400,
        degree: int = 2,
        domain=(-30.0, 30.0),
        T: float = 1.0,
        p: float = 1.0,
        alpha: float = 1.0,
        lam: float = 2.0,
        n_steps=None,
        convention: str = "formula",
        constants=None,
        extended: bool = True,
    ):
        self.M = M
        self.degree = degree
        self.domain = domain
        self.T = T
        self.p = p
        self.alpha = alpha
        self.lam = lam
        self.n_steps = n_steps
        self.convention = convention
        self.constants = constants
        self.extended = extended

    def fit(self, u0, u_exact=None, du0=None):
        """Solve from initial data ``u0(x)`` and accumulate the estimators.

        ``u_exact(x, t)``, when given, is used for the exact-error column.
        """
        a, b = map(float, self.domain)
        problem = ProblemSpec(self.p, self.alpha, self.lam, a, b, self.T, u0, u_exact, du0)
        consts = self.constants or Constants()
        N = self.n_steps or choose_timestep(self.M, self.degree, self.T, a, b)
        self.space_ = build_space(a, b, self.M, self.degree)
        fn = compute_functionals(problem, consts)
        self.result_ = run(
            problem, self.space_, TimeGrid.uniform(self.T, N), beta=consts.beta,
            keep_history=False, extended=self.extended,
            on_step=lambda rec: local_estimators(rec, consts, fn, self.convention),
        )
        self.report_ = accumulate_report(self.result_, fn, consts)
        self.coef_ = self.result_.UN.coeffs
        return self

    def predict(self, X):
        """Discrete solution at time ``T`` evaluated at the points ``X``."""
        check_is_fitted(self, "coef_")
        X = np.asarray(X, dtype=float)
        return SplineFun(self.space_, self.coef_)(X.ravel()).reshape(X.shape)

    def error_bound(self) -> float:
        """Computable ``L^inf(L^2)`` error bound of the fitted run."""
        check_is_fitted(self, "report_")
        return self.report_.bound

"""Relaxation Crank-Nicolson-Galerkin time stepping for the cubic-type NLS

    u_t - i alpha u_xx = i lambda |u|^(2p) u   on (a, b) x (0, T],  u = 0 at a, b.

The nonlinear coefficient is carried by an auxiliary real spline ``Phi``
extrapolated from past values, so every step is a single banded linear solve.
The mesh is fixed, hence the L2 projection between consecutive spaces is the
identity on splines.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .exceptions import ConfigurationError, CriticalMassError
from .fem_core import (
    BandedLU,
    BandedMatrix,
    Discretization,
    SplineFun,
    band_matvec_ext,
    discretization,
)
from .spline_mesh import SplineSpace

__all__ = [
    "ProblemSpec",
    "TimeGrid",
    "StepState",
    "StepRecord",
    "RunResult",
    "EvaluatedSpline",
    "init_state",
    "phi_update",
    "cn_step",
    "advance",
    "compute_W",
    "run",
    "gamma_of_u0",
]


@dataclass(frozen=True)
class ProblemSpec:
    """Parameters and data of the NLS problem.

    ``u0(x)`` and ``u_exact(x, t)`` must accept numpy arrays. ``du0`` is the
    optional analytic x-derivative of ``u0``; when absent a finite-difference
    stencil is used wherever it is needed.
    """

    p: float
    alpha: float
    lam: float
    a: float
    b: float
    T: float
    u0: Callable
    u_exact: Optional[Callable] = None
    du0: Optional[Callable] = None
    name: str = "custom"

    def __post_init__(self):
        if not 0.5 <= self.p <= 2.0:
            raise ConfigurationError(f"p must lie in [1/2, 2] for d=1, got {self.p}")
        if not self.alpha > 0:
            raise ConfigurationError(f"alpha must be positive, got {self.alpha}")
        if not self.T > 0:
            raise ConfigurationError(f"T must be positive, got {self.T}")
        if not self.b > self.a:
            raise ConfigurationError(f"need a < b, got ({self.a}, {self.b})")

    @property
    def critical(self) -> bool:
        return self.p == 2.0

    def f(self, z):
        """The power nonlinearity ``|z|^(2p) z``."""
        return np.abs(z) ** (2 * self.p) * z


@dataclass(frozen=True)
class TimeGrid:
    t: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        if t.ndim != 1 or t.size < 2 or t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise ConfigurationError("time grid must start at 0 and increase strictly")
        object.__setattr__(self, "t", t)

    @classmethod
    def uniform(cls, T: float, N: int) -> "TimeGrid":
        if int(N) != N or N < 1:
            raise ConfigurationError(f"number of steps must be a positive integer, got {N!r}")
        t = np.linspace(0.0, T, int(N) + 1)
        return cls(t)

    @property
    def N(self) -> int:
        return self.t.size - 1

    @property
    def T(self) -> float:
        return float(self.t[-1])

    @property
    def k(self) -> np.ndarray:
        return np.diff(self.t)

    @property
    def k_max(self) -> float:
        return float(self.k.max())

    @property
    def ratio_const(self) -> float:
        """Smallest ``c`` with ``k_n <= c k_(n-1)``."""
        k = self.k
        return float((k[1:] / k[:-1]).max()) if k.size > 1 else 1.0


class EvaluatedSpline:
    """A spline together with the grid data every estimator needs.

    Holds values on the quadrature and L-infinity sample grids, the discrete
    Laplacian, the elliptic residual ``V'' - Delta_h V`` on both grids and the
    derived residual norms. Computed once per time level and reused by the
    two intervals that share it.
    """

    __slots__ = ("coeffs", "lap", "q0", "s0", "res_q", "eta2", "etainf", "linf")

    def __init__(self, disc: Discretization, coeffs, lap=None, with_values: bool = True):
        self.coeffs = np.asarray(coeffs, dtype=complex)
        self.lap = disc.laplacian(self.coeffs) if lap is None else lap
        h2 = disc.space.h**2
        two = np.stack([self.coeffs, self.lap], axis=1)
        sq = disc.values(self.coeffs, 2) - disc.values(self.lap)
        self.res_q = sq
        ss = disc.samples(two)
        self.s0 = ss[..., 0]
        res_s = disc.samples(self.coeffs, 2) - ss[..., 1]
        self.q0 = disc.values(self.coeffs) if with_values else None
        self.eta2 = h2 * disc.l2(sq)
        self.etainf = h2 * float(np.abs(res_s).max(initial=0.0))
        self.linf = float(np.abs(self.s0).max(initial=0.0))


@dataclass
class StepState:
    """Mutable marching state: ``U`` is ``U^n`` and ``Phi_prev`` is ``Phi^(n-1/2)``."""

    problem: ProblemSpec
    space: SplineSpace
    grid: TimeGrid
    disc: Discretization
    n: int
    U: EvaluatedSpline
    Phi_prev: np.ndarray
    init_error: float = 0.0
    Phi_half: Optional[np.ndarray] = None
    M_phi: Optional[BandedMatrix] = None
    U_next: Optional[EvaluatedSpline] = None
    phi_imag: float = 0.0
    # long double copies of U^n, U^(n+1) when marching in extended precision
    U_ext: Optional[np.ndarray] = None
    U_next_ext: Optional[np.ndarray] = None
    ext_ops: dict = field(default_factory=dict, repr=False)

    @property
    def extended(self) -> bool:
        return self.U_ext is not None

    def k(self, n: int) -> float:
        return float(self.grid.k[n])

    def k_prev(self, n: int) -> float:
        # k_{-1} := k_0
        return float(self.grid.k[max(n - 1, 0)])


@dataclass
class StepRecord:
    """Solver output on one interval ``I_n = (t_n, t_(n+1))``.

    Spline fields are dropped (set to ``None``) after the step callback when a
    run does not keep its history. ``locals`` receives the estimator values.
    """

    n: int
    t_n: float
    k_n: float
    problem: ProblemSpec
    U_n: Optional[SplineFun]
    U_np1: Optional[SplineFun]
    Phi_half: Optional[SplineFun]
    W_left: Optional[SplineFun]
    W_right: Optional[SplineFun]
    dbarW: Optional[SplineFun]
    locals: dict = field(default_factory=dict)
    cache: dict = field(default_factory=dict, repr=False)

    def drop_splines(self):
        self.U_n = self.U_np1 = self.Phi_half = None
        self.W_left = self.W_right = self.dbarW = None
        self.cache = {}


@dataclass
class RunResult:
    problem: ProblemSpec
    space: SplineSpace
    grid: TimeGrid
    records: list
    diagnostics: dict
    U0: SplineFun
    UN: SplineFun
    q_space: int
    s_inf: int

    @property
    def E_exact(self) -> float:
        err = self.diagnostics.get("error")
        if err is None:
            raise ValueError("problem has no exact solution")
        return float(np.max(err))


def gamma_of_u0(problem: ProblemSpec, mass: float, beta: float = 1.0) -> float:
    """Smallness functional ``beta^(2p+2) lambda / (alpha (p+1)) ||u0||^(2p)``."""
    p = problem.p
    return beta ** (2 * p + 2) * problem.lam / (problem.alpha * (p + 1)) * mass ** (2 * p)


def init_state(
    problem: ProblemSpec,
    space: SplineSpace,
    grid: TimeGrid,
    q_space: int | None = None,
    s_inf: int = 8,
    beta: float = 1.0,
    extended: bool = False,
) -> StepState:
    """Project the initial data: ``U^0 = P u0`` and ``Phi^(-1/2) = P |u0|^(2p)``.

    With ``extended`` the coefficients are also carried in long double, see
    :func:`cn_step`.
    """
    if (space.a, space.b) != (problem.a, problem.b):
        raise ConfigurationError("space and problem live on different intervals")
    if not np.isclose(grid.T, problem.T, rtol=1e-12, atol=0.0):
        raise ConfigurationError(f"time grid ends at {grid.T}, problem at {problem.T}")
    disc = discretization(space, q_space, s_inf)
    u0 = np.asarray(problem.u0(disc.xq), dtype=complex)
    if problem.critical and problem.lam > 0:
        g = gamma_of_u0(problem, disc.l2(u0), beta)
        if g >= 1.0:
            raise CriticalMassError(f"Gamma(u0) = {g:.6g} >= 1: blowup regime, refusing to run")
    U0_ext = disc.project_function_ext(problem.u0) if extended else None
    U0 = disc.project_values(u0) if U0_ext is None else U0_ext.astype(complex)
    phi = disc.project_values(np.abs(u0) ** (2 * problem.p)).real
    state = StepState(problem, space, grid, disc, 0, EvaluatedSpline(disc, U0), phi.astype(complex))
    state.init_error = _exact_error(problem, space, disc, U0, 0.0)
    state.U_ext = U0_ext
    return state


def phi_update(state: StepState, n: int | None = None) -> np.ndarray:
    """Relaxation update of the nonlinear coefficient, returns ``Phi^(n+1/2)``."""
    n = state.n if n is None else n
    k, kp = state.k(n), state.k_prev(n)
    disc, p = state.disc, state.problem.p
    proj = disc.project_values(np.abs(state.U.q0) ** (2 * p))
    phi = ((k + kp) / kp) * proj - (k / kp) * state.Phi_prev
    # |U|^(2p) is real, so is every projection and the recursion; the
    # round-off imaginary part is recorded before it is discarded
    state.phi_imag = float(np.abs(phi.imag).max(initial=0.0))
    phi = phi.real.astype(complex)
    state.Phi_half = phi
    state.M_phi = disc.weighted_mass(disc.values(phi).real)
    return phi


def system_matrices(disc: Discretization, problem: ProblemSpec, k: float, M_phi: BandedMatrix):
    """Left and right Crank-Nicolson matrices of one step."""
    M, S = disc.mass, disc.stiffness
    ia, il = 0.5j * problem.alpha, 0.5j * problem.lam
    lhs = BandedMatrix(M.data / k + ia * S.data - il * M_phi.data, M.bw)
    rhs = BandedMatrix(M.data / k - ia * S.data + il * M_phi.data, M.bw)
    return lhs, rhs


def _cn_solve_ext(state: StepState, k: float, lu: BandedLU, sweeps: int = 2) -> np.ndarray:
    """Mixed-precision step: long double residuals, double LU corrections.

    Undamped stiff modes of Crank-Nicolson accumulate the per-step rounding
    of the right-hand side as a random walk, which is then amplified by
    ``h^-2 / k`` in the time derivative of ``W``. Assembling and applying
    both matrices in long double and carrying ``U`` in long double removes
    most of it.
    """
    disc, pr = state.disc, state.problem
    ld = np.longdouble
    ops = state.ext_ops.get(k)
    if ops is None:
        if len(state.ext_ops) >= 16:
            state.ext_ops.clear()
        Mk = disc.mass.data.astype(ld) / ld(k)
        aS = (0.5j * pr.alpha) * disc.stiffness.data.astype(ld)
        ops = state.ext_ops[k] = (Mk + aS, Mk - aS)
    lP = (0.5j * pr.lam) * state.M_phi.data.astype(ld)
    lhs, rhs = ops[0] - lP, ops[1] + lP
    bw = disc.mass.bw
    b = band_matvec_ext(rhs, bw, state.U_ext)
    U1 = lu.solve(b.astype(complex)).astype(np.clongdouble)
    for _ in range(sweeps):
        U1 += lu.solve((b - band_matvec_ext(lhs, bw, U1)).astype(complex))
    return U1


def cn_step(state: StepState, n: int | None = None) -> np.ndarray:
    """Solve the linear Crank-Nicolson system for ``U^(n+1)``."""
    n = state.n if n is None else n
    if state.M_phi is None:
        phi_update(state, n)
    lhs, rhs = system_matrices(state.disc, state.problem, state.k(n), state.M_phi)
    lu = BandedLU(lhs)
    if state.extended:
        state.U_next_ext = _cn_solve_ext(state, state.k(n), lu)
        U1 = state.U_next_ext.astype(complex)
    else:
        U1 = lu.solve(rhs @ state.U.coeffs)
    state.U_next = EvaluatedSpline(state.disc, U1)
    return U1


def advance(state: StepState) -> None:
    """Move the state from level ``n`` to ``n + 1``."""
    state.Phi_prev = state.Phi_half
    state.U, state.U_ext = state.U_next, state.U_next_ext
    state.U_next = state.U_next_ext = state.Phi_half = state.M_phi = None
    state.n += 1


def compute_W(state: StepState, n: int | None = None):
    """``W(t_n)``, ``W(t_(n+1))`` and the slope of the affine-in-time ``W``.

    ``W(t) = i alpha Lap_h U(t) + i lambda P(Phi^(n+1/2) U(t))``.
    """
    n = state.n if n is None else n
    if state.U_next is None:
        cn_step(state, n)
    disc, pr = state.disc, state.problem
    U0, U1 = state.U, state.U_next
    prod = disc.mass_solve(np.stack([state.M_phi @ U0.coeffs, state.M_phi @ U1.coeffs], axis=1))
    W_left = 1j * pr.alpha * U0.lap + 1j * pr.lam * prod[:, 0]
    W_right = 1j * pr.alpha * U1.lap + 1j * pr.lam * prod[:, 1]
    if state.extended and state.U_next_ext is not None:
        # W is linear in U: difference before rounding to double
        dU = (state.U_next_ext - state.U_ext).astype(complex)
        dPU = disc.mass_solve(state.M_phi @ dU)
        dbarW = (1j * pr.alpha * disc.laplacian(dU) + 1j * pr.lam * dPU) / state.k(n)
    else:
        dbarW = (W_right - W_left) / state.k(n)
    return W_left, W_right, dbarW, prod


def _exact_error(problem, space, disc, coeffs, t) -> float:
    if problem.u_exact is None:
        return float("nan")
    from .fem_core import error_vs_exact

    return error_vs_exact(SplineFun(space, coeffs), lambda x: problem.u_exact(x, t), disc.q)


def run(
    problem: ProblemSpec,
    space: SplineSpace,
    grid: TimeGrid,
    *,
    q_space: int | None = None,
    s_inf: int = 8,
    beta: float = 1.0,
    keep_history: bool = True,
    on_step: Callable[[StepRecord], None] | None = None,
    extended: bool = False,
) -> RunResult:
    """March the scheme over ``grid``.

    ``on_step`` sees every :class:`StepRecord` while its splines are still
    attached; with ``keep_history=False`` they are released afterwards, which
    keeps memory flat for long runs. ``extended`` solves each step with
    long double residual correction (slower, far less round-off in the
    time derivative of ``W`` on fine meshes).
    """
    state = init_state(problem, space, grid, q_space, s_inf, beta, extended)
    disc = state.disc
    N, p, lam, alpha = grid.N, problem.p, problem.lam, problem.alpha

    mass = np.empty(N + 1)
    energy = np.empty(N + 1)
    error = np.empty(N + 1) if problem.u_exact is not None else None
    phi_imag = 0.0

    def diagnose(i, ev: EvaluatedSpline):
        c = ev.coeffs
        mass[i] = np.sqrt(max(np.real(np.vdot(c, disc.mass @ c)), 0.0))
        grad2 = np.real(np.vdot(c, disc.stiffness @ c))
        lq = float(((np.abs(ev.q0) ** (2 * p + 2)) @ disc.wq).sum())
        energy[i] = grad2 - lam / (alpha * (p + 1)) * lq
        if error is not None:
            error[i] = _exact_error(problem, space, disc, c, grid.t[i])

    diagnose(0, state.U)
    U0 = SplineFun(space, state.U.coeffs)
    records = []
    for n in range(N):
        state.n = n
        phi = phi_update(state, n)
        phi_imag = max(phi_imag, state.phi_imag)
        cn_step(state, n)
        W_left, W_right, dbarW, prod = compute_W(state, n)
        rec = StepRecord(
            n=n,
            t_n=float(grid.t[n]),
            k_n=state.k(n),
            problem=problem,
            U_n=SplineFun(space, state.U.coeffs),
            U_np1=SplineFun(space, state.U_next.coeffs),
            Phi_half=SplineFun(space, phi),
            W_left=SplineFun(space, W_left),
            W_right=SplineFun(space, W_right),
            dbarW=SplineFun(space, dbarW),
        )
        rec.cache.update(disc=disc, U0=state.U, U1=state.U_next, PphiU=prod, M_phi=state.M_phi)
        diagnose(n + 1, state.U_next)
        if on_step is not None:
            on_step(rec)
        if not keep_history:
            rec.drop_splines()
        else:
            rec.cache = {"disc": disc}
        records.append(rec)
        advance(state)

    diagnostics = {
        "mass": mass,
        "energy": energy,
        "error": error,
        "init_error": state.init_error,
        "phi_imag_max": phi_imag,
    }
    return RunResult(
        problem, space, grid, records, diagnostics, U0, SplineFun(space, state.U.coeffs),
        disc.q, disc.s_inf,
    )

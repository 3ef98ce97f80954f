"""Complex Galerkin algebra on a :class:`~relaxnls.spline_mesh.SplineSpace`.

Everything quadrature-related is precomputed once per ``(space, q_space, s_inf)``
in a :class:`Discretization`, which the module-level functions share through a
small cache. Splines are evaluated element by element from precomputed basis
tables; several coefficient vectors can be pushed through one call.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import cholesky_banded, lapack

from . import _kernels
from .exceptions import ComplexWeightError, SingularMatrixError
from .spline_mesh import SplineSpace, basis_derivatives, gauss_rule

__all__ = [
    "SplineFun",
    "BandedMatrix",
    "BandedLU",
    "Norms",
    "Discretization",
    "default_q_space",
    "discretization",
    "assemble_mass",
    "assemble_stiffness",
    "assemble_weighted_mass",
    "solve_banded",
    "l2_project",
    "discrete_laplacian",
    "norms",
    "error_vs_exact",
]

DEFAULT_S_INF = 8
PIVOT_TOL = 1e-300


def default_q_space(degree: int) -> int:
    """Gauss points per element: exact for mass/stiffness, accurate for cubic-in-r products."""
    return max(degree + 2, math.ceil((3 * degree + 2) / 2))


# ---------------------------------------------------------------------------
# banded storage
# ---------------------------------------------------------------------------


def band_matvec_ext(ab: np.ndarray, bw: int, x: np.ndarray) -> np.ndarray:
    """``A x`` in long double for ``A`` in LAPACK band layout and a vector ``x``."""
    x = np.asarray(x, dtype=np.clongdouble)
    n = x.size
    out = np.zeros(n, dtype=np.clongdouble)
    for o in range(-bw, bw + 1):
        if o >= 0:
            out[: n - o] += ab[bw - o, o:] * x[o:]
        else:
            out[-o:] += ab[bw - o, : n + o] * x[: n + o]
    return out

@dataclass(frozen=True, eq=False)
class BandedMatrix:
    """Square band matrix in LAPACK ``ab`` layout: ``data[bw + i - j, j] = A[i, j]``."""

    data: np.ndarray
    bw: int

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    @property
    def hermitian(self) -> bool:
        return _is_hermitian(self.data, self.bw)

    def __matmul__(self, x):
        x = np.asarray(x)
        xc, tail = _kernels.as_columns(x)
        out = np.empty_like(xc)
        _kernels.band_matvec(np.ascontiguousarray(self.data), self.bw, xc, out)
        out = out.reshape(x.shape)
        if not (np.iscomplexobj(x) or np.iscomplexobj(self.data)):
            return out.real.copy()
        return out

    def __add__(self, other: "BandedMatrix") -> "BandedMatrix":
        if other.bw != self.bw:
            raise ValueError("bandwidth mismatch")
        return BandedMatrix(self.data + other.data, self.bw)

    def __sub__(self, other: "BandedMatrix") -> "BandedMatrix":
        return self + (-1.0) * other

    def __mul__(self, c) -> "BandedMatrix":
        return BandedMatrix(c * self.data, self.bw)

    __rmul__ = __mul__

    def todense(self) -> np.ndarray:
        n, bw = self.dim, self.bw
        A = np.zeros((n, n), dtype=self.data.dtype)
        for d in range(-bw, bw + 1):
            j = np.arange(max(0, -d), min(n, n - d))
            A[j + d, j] = self.data[bw + d, j]
        return A

    def norm_inf(self) -> float:
        return float(np.abs(self.todense()).sum(axis=1).max()) if self.dim else 0.0


def _is_hermitian(ab, bw, tol=1e-12) -> bool:
    n = ab.shape[1]
    scale = max(np.abs(ab).max(initial=0.0), 1.0)
    for d in range(1, bw + 1):
        upper = ab[bw - d, d:]  # A[j - d, j]
        lower = ab[bw + d, : n - d]  # A[j + d, j]
        if np.abs(upper - np.conj(lower)).max(initial=0.0) > tol * scale:
            return False
    return np.abs(ab[bw].imag).max(initial=0.0) <= tol * scale


class BandedLU:
    """LU factorisation with partial pivoting of a :class:`BandedMatrix` (LAPACK gbtrf)."""

    def __init__(self, A: BandedMatrix):
        bw, n = A.bw, A.dim
        cplx = np.iscomplexobj(A.data)
        self._trf, self._trs = (
            (lapack.zgbtrf, lapack.zgbtrs) if cplx else (lapack.dgbtrf, lapack.dgbtrs)
        )
        ab = np.zeros((3 * bw + 1, n), dtype=complex if cplx else float)
        ab[bw:] = A.data
        lu, piv, info = self._trf(ab, bw, bw)
        if info > 0 or np.abs(lu[2 * bw]).min(initial=np.inf) < PIVOT_TOL:
            raise SingularMatrixError("banded matrix is singular to working precision")
        if info < 0:
            raise ValueError(f"illegal argument to gbtrf ({info})")
        self.bw, self.dim = bw, n
        self.complex = cplx
        self._lu, self._piv = lu, piv

    def solve(self, rhs):
        rhs = np.asarray(rhs)
        if not self.complex and np.iscomplexobj(rhs):
            return self.solve(rhs.real) + 1j * self.solve(rhs.imag)
        x, info = self._trs(self._lu, self.bw, self.bw, rhs, self._piv)
        if info != 0:
            raise SingularMatrixError(f"gbtrs failed ({info})")
        return x


def solve_banded(A: BandedMatrix, rhs) -> np.ndarray:
    """Solve ``A x = rhs`` by banded LU with partial pivoting."""
    return BandedLU(A).solve(rhs)


# ---------------------------------------------------------------------------
# discretisation tables
# ---------------------------------------------------------------------------


class Discretization:
    """Quadrature, collocation and Gram-matrix data for one spline space.

    Parameters
    ----------
    space : SplineSpace
    q_space : int, optional
        Gauss points per element, see :func:`default_q_space`.
    s_inf : int
        Interior sample points per element for L-infinity norms (both knots
        are sampled as well).
    """

    def __init__(self, space: SplineSpace, q_space: int | None = None, s_inf: int = DEFAULT_S_INF):
        self.space = space
        self.q = default_q_space(space.degree) if q_space is None else int(q_space)
        self.s_inf = int(s_inf)
        E, r, h = space.num_elements, space.degree, space.h

        rule = gauss_rule(self.q)
        xi, w = rule.on_unit_interval()
        self.xi = xi
        self.xq = space.element_points(xi)  # (E, q)
        self.wq = w * h  # physical weights, same on every element
        self.tables = space.element_tables(xi, 2)  # (3, E, q, r+1)

        xs = np.linspace(0.0, 1.0, self.s_inf + 2)
        self.xs = space.element_points(xs)
        self.sample_tables = space.element_tables(xs, 2)

        # products w_m B_i B_j etc., flattened over (i, j)
        B0, B1 = self.tables[0], self.tables[1]
        self._prod0 = np.einsum("m,emi,emj->emij", self.wq, B0, B0).reshape(E, self.q, -1)
        stiff_local = np.einsum("m,emi,emj->eij", self.wq, B1, B1)
        self.mass = self._assemble(self._prod0.sum(axis=1).reshape(E, r + 1, r + 1))
        self.stiffness = self._assemble(stiff_local)
        self._chol = cholesky_banded(self.mass.data[: r + 1], lower=False)

    # -- construction helpers ------------------------------------------------

    def _assemble(self, local) -> BandedMatrix:
        """Scatter element matrices ``local[e, i, j]`` into Dirichlet band storage."""
        E, r = self.space.num_elements, self.space.degree
        full = np.zeros((2 * r + 1, self.space.n_full), dtype=local.dtype)
        for i in range(r + 1):
            for j in range(r + 1):
                full[r + i - j, j : j + E] += local[:, i, j]
        ab = full[:, 1:-1].copy()
        n = self.space.dim
        for d in range(-r, r + 1):
            c = np.arange(n)
            ab[r + d, (c + d < 0) | (c + d >= n)] = 0.0
        return BandedMatrix(ab, r)

    # -- evaluation ----------------------------------------------------------

    def _collocate(self, table, coeffs):
        c, tail = _kernels.as_columns(coeffs)
        if c.shape[0] != self.space.dim:
            raise ValueError(f"expected {self.space.dim} coefficients, got {c.shape[0]}")
        full = np.zeros((self.space.n_full, c.shape[1]), dtype=complex)
        full[1:-1] = c
        out = np.empty(table.shape[:2] + (c.shape[1],), dtype=complex)
        _kernels.collocate(table, full, out)
        return out.reshape(table.shape[:2] + tail)

    def values(self, coeffs, deriv: int = 0) -> np.ndarray:
        """Spline values at the quadrature grid, shape ``(E, q)`` (or ``(E, q, m)``)."""
        return self._collocate(self.tables[deriv], coeffs)

    def samples(self, coeffs, deriv: int = 0) -> np.ndarray:
        """Spline values at the L-infinity sample grid (knots included)."""
        return self._collocate(self.sample_tables[deriv], coeffs)

    def integrate(self, vals) -> complex | float:
        """Quadrature of grid values ``vals`` of shape ``(E, q)``."""
        return (vals @ self.wq).sum()

    def l2(self, vals) -> float:
        vals = np.ascontiguousarray(vals, dtype=complex)
        if vals.ndim != 2:
            return math.sqrt(float(((vals.real**2 + vals.imag**2) @ self.wq).sum()))
        return math.sqrt(_kernels.weighted_sq(vals, self.wq))

    # -- Galerkin operations -------------------------------------------------

    def load(self, vals) -> np.ndarray:
        """Load vector ``<f, B_i>`` from grid values of ``f``."""
        vals = np.asarray(vals)
        tail = vals.shape[2:]
        v = np.ascontiguousarray(vals.reshape(vals.shape[:2] + (-1,)), dtype=complex)
        full = np.zeros((self.space.n_full, v.shape[2]), dtype=complex)
        _kernels.load(self.tables[0], self.wq, v, full)
        return full[1:-1].reshape((self.space.dim,) + tail)

    def mass_solve(self, rhs) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=complex)
        b = np.ascontiguousarray(rhs).view(float).reshape(rhs.shape[0], -1)
        x, info = lapack.dpbtrs(self._chol, b, lower=0)
        if info != 0:
            raise SingularMatrixError(f"pbtrs failed ({info})")
        return np.ascontiguousarray(x).view(complex).reshape(rhs.shape)

    def project_values(self, vals) -> np.ndarray:
        """Coefficients of the L2 projection of a function given on the quadrature grid."""
        return self.mass_solve(self.load(vals))

    def project_function_ext(self, f, sweeps: int = 3) -> np.ndarray:
        """L2 projection of a callable ``f(x)`` carried out in long double.

        Points, values and the load vector are formed in long double and the
        mass solve is refined against a long double residual. Returns long
        double complex coefficients. ``f`` should preserve the dtype of ``x``
        to benefit.
        """
        ld = np.longdouble
        sp = self.space
        E, r = sp.num_elements, sp.degree
        h = (ld(sp.b) - ld(sp.a)) / E
        x = ld(sp.a) + (np.arange(E, dtype=ld)[:, None] + self.xi.astype(ld)) * h
        vals = np.asarray(f(x)).astype(np.clongdouble)
        loc = np.einsum("m,emj,em->ej", self.wq.astype(ld), self.tables[0].astype(ld), vals)
        full = np.zeros(sp.n_full, dtype=np.clongdouble)
        for j in range(r + 1):
            full[j : j + E] += loc[:, j]
        b = full[1:-1]
        M = self.mass.data.astype(ld)
        U = self.mass_solve(b.astype(complex)).astype(np.clongdouble)
        for _ in range(sweeps):
            U += self.mass_solve((b - band_matvec_ext(M, self.mass.bw, U)).astype(complex))
        return U

    def laplacian(self, coeffs) -> np.ndarray:
        """Coefficients of the discrete Laplacian, ``M (-w) = S v``."""
        return -self.mass_solve(self.stiffness @ np.asarray(coeffs, dtype=complex))

    def weighted_mass(self, wvals) -> BandedMatrix:
        """Gram matrix ``int w B_i B_j`` for a real weight given on the quadrature grid."""
        wvals = np.asarray(wvals)
        if np.iscomplexobj(wvals):
            scale = np.abs(wvals).max(initial=0.0)
            if np.abs(wvals.imag).max(initial=0.0) > 1e-10 * scale:
                raise ComplexWeightError("weight has a non-negligible imaginary part")
            wvals = wvals.real
        E, r = self.space.num_elements, self.space.degree
        local = np.matmul(wvals[:, None, :], self._prod0)[:, 0, :]
        return self._assemble(local.reshape(E, r + 1, r + 1))


@lru_cache(maxsize=32)
def discretization(space: SplineSpace, q_space: int | None = None, s_inf: int = DEFAULT_S_INF):
    return Discretization(space, q_space, s_inf)


# ---------------------------------------------------------------------------
# spline functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SplineFun:
    """Complex coefficient vector of a spline in the Dirichlet space ``space``."""

    space: SplineSpace
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != (self.space.dim,):
            raise ValueError(f"expected {self.space.dim} coefficients, got shape {c.shape}")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, space: SplineSpace) -> "SplineFun":
        return cls(space, np.zeros(space.dim, dtype=complex))

    def full_coeffs(self) -> np.ndarray:
        return np.concatenate([[0.0], self.coeffs, [0.0]])

    def __call__(self, x, deriv: int = 0) -> np.ndarray:
        """Point values (or derivatives up to order 2) at arbitrary ``x`` in ``[a, b]``."""
        s = self.space
        x = np.asarray(x, dtype=float)
        flat = np.clip(x.ravel(), s.a, s.b)
        e = s.element_of(flat)
        ders = basis_derivatives(s.knots, s.degree, e + s.degree, flat, deriv)[deriv]
        full = self.full_coeffs()
        idx = e[None, :] + np.arange(s.degree + 1)[:, None]
        return (ders * full[idx]).sum(axis=0).reshape(x.shape)

    def _check(self, other):
        if other.space != self.space:
            raise ValueError("splines live in different spaces")

    def __add__(self, other):
        self._check(other)
        return SplineFun(self.space, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check(other)
        return SplineFun(self.space, self.coeffs - other.coeffs)

    def __neg__(self):
        return SplineFun(self.space, -self.coeffs)

    def __mul__(self, c):
        return SplineFun(self.space, c * self.coeffs)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return SplineFun(self.space, self.coeffs / c)


@dataclass(frozen=True)
class Norms:
    l2: float
    h1_semi: float
    l2p2: float
    linf: float


# ---------------------------------------------------------------------------
# module-level operations
# ---------------------------------------------------------------------------


def assemble_mass(space: SplineSpace, q_space: int | None = None) -> BandedMatrix:
    return discretization(space, q_space).mass


def assemble_stiffness(space: SplineSpace, q_space: int | None = None) -> BandedMatrix:
    return discretization(space, q_space).stiffness


def assemble_weighted_mass(space: SplineSpace, w, q_space: int | None = None) -> BandedMatrix:
    """Gram matrix weighted by ``w``: a SplineFun, a callable of x, or grid values."""
    disc = discretization(space, q_space)
    if isinstance(w, SplineFun):
        vals = disc.values(w.coeffs)
    elif callable(w):
        vals = np.asarray(w(disc.xq))
    else:
        vals = np.asarray(w)
    return disc.weighted_mass(vals)


def l2_project(space: SplineSpace, f, q_space: int | None = None) -> SplineFun:
    """L2 projection of a pointwise-evaluable function onto the Dirichlet space."""
    disc = discretization(space, q_space)
    vals = np.asarray(f(disc.xq), dtype=complex)
    return SplineFun(space, disc.project_values(vals))


def discrete_laplacian(v: SplineFun, q_space: int | None = None) -> SplineFun:
    disc = discretization(v.space, q_space)
    return SplineFun(v.space, disc.laplacian(v.coeffs))


def norms(v: SplineFun, p: float, q_space: int | None = None, s_inf: int = DEFAULT_S_INF) -> Norms:
    """L2, H1-seminorm, L^(2p+2) and sampled L-infinity norms of ``v``."""
    disc = discretization(v.space, q_space, s_inf)
    vals = disc.values(v.coeffs)
    mod = np.abs(vals)
    qq = 2 * p + 2
    lq = float(((mod**qq) @ disc.wq).sum()) ** (1.0 / qq)
    return Norms(
        l2=disc.l2(vals),
        h1_semi=disc.l2(disc.values(v.coeffs, 1)),
        l2p2=lq,
        linf=float(np.abs(disc.samples(v.coeffs)).max(initial=0.0)),
    )


def error_vs_exact(v: SplineFun, u_exact, q_space: int | None = None) -> float:
    """``||u_exact - v||`` by Gauss quadrature two orders above the working rule."""
    q = default_q_space(v.space.degree) if q_space is None else q_space
    disc = discretization(v.space, min(q + 2, 16))
    diff = np.asarray(u_exact(disc.xq), dtype=complex) - disc.values(v.coeffs)
    return disc.l2(diff)

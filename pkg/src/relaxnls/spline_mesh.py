"""Uniform clamped B-spline spaces on an interval and Gauss-Legendre rules.

The full basis of a space with ``E`` elements and degree ``r`` has ``E + r``
functions. Homogeneous Dirichlet conditions are imposed by dropping the first
and the last of them, so the free (Dirichlet) index ``i`` corresponds to the
full index ``i + 1``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .exceptions import InvalidDimensionError, OutOfDomainError, UnsupportedOrderError

__all__ = [
    "SplineSpace",
    "QuadRule",
    "build_space",
    "eval_basis",
    "gauss_rule",
    "basis_derivatives",
]

MAX_GAUSS_ORDER = 16


@dataclass(frozen=True)
class QuadRule:
    """Gauss-Legendre rule on the reference interval [-1, 1]."""

    order: int
    nodes: np.ndarray
    weights: np.ndarray

    def on_unit_interval(self):
        """Nodes and weights mapped to [0, 1]."""
        return 0.5 * (self.nodes + 1.0), 0.5 * self.weights


def gauss_rule(order: int) -> QuadRule:
    """Return the ``order``-point Gauss-Legendre rule on [-1, 1]."""
    if int(order) != order or not 1 <= order <= MAX_GAUSS_ORDER:
        raise UnsupportedOrderError(
            f"Gauss order must be an integer in [1, {MAX_GAUSS_ORDER}], got {order!r}"
        )
    nodes, weights = np.polynomial.legendre.leggauss(int(order))
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadRule(int(order), nodes, weights)


@dataclass(frozen=True)
class SplineSpace:
    """Clamped uniform B-spline space of degree ``degree`` on ``[a, b]``.

    Immutable and hashable; derived arrays are cached on first access.
    """

    a: float
    b: float
    num_elements: int
    degree: int

    @property
    def h(self) -> float:
        return (self.b - self.a) / self.num_elements

    @property
    def dim(self) -> int:
        """Number of free coefficients once the two boundary functions are removed."""
        return self.num_elements + self.degree - 2

    @property
    def n_full(self) -> int:
        return self.num_elements + self.degree

    @cached_property
    def breakpoints(self) -> np.ndarray:
        x = self.a + self.h * np.arange(self.num_elements + 1)
        x[-1] = self.b
        x.setflags(write=False)
        return x

    @cached_property
    def knots(self) -> np.ndarray:
        r = self.degree
        t = np.concatenate([np.full(r, self.a), self.breakpoints, np.full(r, self.b)])
        t.setflags(write=False)
        return t

    def element_of(self, x) -> np.ndarray:
        """Index of the element containing ``x`` (right endpoint maps to the last element)."""
        e = np.floor((np.asarray(x, dtype=float) - self.a) / self.h).astype(np.intp)
        return np.clip(e, 0, self.num_elements - 1)

    def element_points(self, xi) -> np.ndarray:
        """Physical points ``a + (e + xi) h`` for every element ``e``, shape ``(E, len(xi))``."""
        xi = np.asarray(xi, dtype=float)
        e = np.arange(self.num_elements)[:, None]
        return self.a + (e + xi[None, :]) * self.h

    def element_tables(self, xi, nder: int = 2) -> np.ndarray:
        """Basis derivatives at reference points ``xi`` in [0, 1] of every element.

        Returns an array of shape ``(nder + 1, E, len(xi), degree + 1)``; entry
        ``[k, e, m, j]`` is the ``k``-th derivative of full basis function
        ``e + j`` at ``a + (e + xi[m]) h``.
        """
        xi = np.asarray(xi, dtype=float)
        E, r = self.num_elements, self.degree
        x = self.element_points(xi).ravel()
        spans = np.repeat(np.arange(E) + r, xi.size)
        ders = basis_derivatives(self.knots, r, spans, x, nder)
        # (nder+1, r+1, npts) -> (nder+1, E, nq, r+1)
        tab = np.ascontiguousarray(
            ders.reshape(nder + 1, r + 1, E, xi.size).transpose(0, 2, 3, 1)
        )
        if E > 2 * r:
            # interior elements are translates of one another; a shared table
            # keeps element-to-element rounding out of the assembled matrices
            ref = basis_derivatives(
                np.arange(2.0 * r + 2), r, np.full(xi.size, r), r + xi, nder
            )
            ref = ref / (self.h ** np.arange(nder + 1))[:, None, None]
            tab[:, r : E - r] = ref.transpose(0, 2, 1)[:, None]
        return tab


def build_space(a: float, b: float, num_elements: int, degree: int) -> SplineSpace:
    """Validated constructor for :class:`SplineSpace`."""
    if not (np.isfinite(a) and np.isfinite(b)) or not b > a:
        raise InvalidDimensionError(f"need a < b, got a={a}, b={b}")
    if int(degree) != degree or degree < 1:
        raise InvalidDimensionError(f"degree must be a positive integer, got {degree!r}")
    if int(num_elements) != num_elements or num_elements < 2 * degree:
        raise InvalidDimensionError(
            f"num_elements must be an integer >= 2*degree={2 * degree}, got {num_elements!r}"
        )
    return SplineSpace(float(a), float(b), int(num_elements), int(degree))


def basis_derivatives(knots, degree, spans, x, nder):
    """Nonzero B-splines and their derivatives (Piegl & Tiller, algorithm A2.3).

    Vectorised over the evaluation points.

    Parameters
    ----------
    knots : ndarray
        Knot vector.
    degree : int
        Polynomial degree ``p``.
    spans : array_like of int
        Knot span index of every point, ``knots[s] <= x < knots[s + 1]``.
    x : array_like of float
        Evaluation points.
    nder : int
        Highest derivative requested. Derivatives above ``p`` are zero.

    Returns
    -------
    ders : ndarray, shape (nder + 1, p + 1, npts)
        ``ders[k, j]`` is the ``k``-th derivative of basis ``span - p + j``.
    """
    p = degree
    x = np.atleast_1d(np.asarray(x, dtype=float))
    spans = np.atleast_1d(np.asarray(spans, dtype=np.intp))
    npts = x.size
    n = min(nder, p)

    ndu = np.empty((p + 1, p + 1, npts))
    left = np.empty((p + 1, npts))
    right = np.empty((p + 1, npts))
    ndu[0, 0] = 1.0
    for j in range(1, p + 1):
        left[j] = x - knots[spans + 1 - j]
        right[j] = knots[spans + j] - x
        saved = np.zeros(npts)
        for r in range(j):
            ndu[j, r] = right[r + 1] + left[j - r]
            temp = ndu[r, j - 1] / ndu[j, r]
            ndu[r, j] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        ndu[j, j] = saved

    ders = np.zeros((nder + 1, p + 1, npts))
    ders[0] = ndu[:, p]
    a = np.empty((2, p + 1, npts))
    for r in range(p + 1):
        s1, s2 = 0, 1
        a[0, 0] = 1.0
        for k in range(1, n + 1):
            d = np.zeros(npts)
            rk, pk = r - k, p - k
            if r >= k:
                a[s2, 0] = a[s1, 0] / ndu[pk + 1, rk]
                d += a[s2, 0] * ndu[rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[s2, j] = (a[s1, j] - a[s1, j - 1]) / ndu[pk + 1, rk + j]
                d += a[s2, j] * ndu[rk + j, pk]
            if r <= pk:
                a[s2, k] = -a[s1, k - 1] / ndu[pk + 1, r]
                d += a[s2, k] * ndu[r, pk]
            ders[k, r] = d
            s1, s2 = s2, s1
    factor = p
    for k in range(1, n + 1):
        ders[k] *= factor
        factor *= p - k
    return ders


def eval_basis(space: SplineSpace, x: float, deriv: int = 0):
    """Evaluate the ``degree + 1`` basis functions supported at ``x``.

    Returns ``(first_index, values)``. ``first_index`` is in Dirichlet
    numbering, so slot ``j`` belongs to free basis function ``first_index + j``;
    slots whose index falls outside ``[0, dim)`` are the removed boundary
    functions. For degree 1 the second derivative is zero on element interiors.
    """
    if deriv not in (0, 1, 2):
        raise ValueError(f"deriv must be 0, 1 or 2, got {deriv!r}")
    x = float(x)
    tol = 1e-12 * (space.b - space.a)
    if not (space.a - tol <= x <= space.b + tol):
        raise OutOfDomainError(f"x={x} outside [{space.a}, {space.b}]")
    x = min(max(x, space.a), space.b)
    e = int(space.element_of(x))
    ders = basis_derivatives(space.knots, space.degree, [e + space.degree], [x], deriv)
    return e - 1, ders[deriv, :, 0].copy()

"""Compiled inner loops for element-local spline evaluation and assembly."""
import numba
import numpy as np


@numba.njit(cache=True)
def collocate(tab, full, out):
    """``out[e, m, c] = sum_j tab[e, m, j] * full[e + j, c]``."""
    E, npts, nb = tab.shape
    ncol = full.shape[1]
    for e in range(E):
        for m in range(npts):
            for c in range(ncol):
                s = 0j
                for j in range(nb):
                    s += tab[e, m, j] * full[e + j, c]
                out[e, m, c] = s


@numba.njit(cache=True)
def load(tab, w, vals, full):
    """``full[e + j, c] += sum_m tab[e, m, j] * w[m] * vals[e, m, c]`` (full zeroed by caller)."""
    E, npts, nb = tab.shape
    ncol = vals.shape[2]
    for e in range(E):
        for m in range(npts):
            for c in range(ncol):
                v = w[m] * vals[e, m, c]
                for j in range(nb):
                    full[e + j, c] += tab[e, m, j] * v


@numba.njit(cache=True)
def band_matvec(ab, bw, x, out):
    """``out = A x`` for ``A`` in LAPACK band layout, ``x`` of shape (n, ncol)."""
    n = ab.shape[1]
    ncol = x.shape[1]
    for i in range(n):
        lo = max(0, i - bw)
        hi = min(n, i + bw + 1)
        for c in range(ncol):
            s = 0j
            for j in range(lo, hi):
                s += ab[bw + i - j, j] * x[j, c]
            out[i, c] = s


@numba.njit(cache=True)
def weighted_sq(vals, w):
    """``sum_e sum_m w[m] |vals[e, m]|^2``."""
    E, npts = vals.shape
    s = 0.0
    for e in range(E):
        for m in range(npts):
            v = vals[e, m]
            s += w[m] * (v.real * v.real + v.imag * v.imag)
    return s


@numba.njit(cache=True)
def power_residual_sq(u0, u1, pr0, pr1, theta, two_p, w):
    """``sum w |f(U) - P(Phi U)|^2`` at ``U = (1-theta) u0 + theta u1``, ``f(z) = |z|^(2p) z``."""
    E, npts = u0.shape
    s = 0.0
    a = 1.0 - theta
    for e in range(E):
        for m in range(npts):
            z = a * u0[e, m] + theta * u1[e, m]
            mod2 = z.real * z.real + z.imag * z.imag
            if two_p == 2.0:
                fz = mod2 * z
            elif mod2 > 0:
                fz = (mod2 ** (0.5 * two_p)) * z
            else:
                fz = 0j
            r = fz - (a * pr0[e, m] + theta * pr1[e, m])
            s += w[m] * (r.real * r.real + r.imag * r.imag)
    return s


def as_columns(x):
    """View ``x`` as a contiguous complex (n, ncol) array; returns it with the trailing shape."""
    x = np.asarray(x)
    tail = x.shape[1:]
    return np.ascontiguousarray(x.reshape(x.shape[0], -1), dtype=complex), tail

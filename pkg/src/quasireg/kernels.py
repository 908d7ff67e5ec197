"""Hot loops of the solver: cosine tables, series evaluation, coefficient sums.

All kernels take points already mapped to the unit cube (``U = F(X)``), so
the CDF is evaluated once per point and shared by every basis index.
Each kernel has a numba version and a numpy version with the same
signature; :mod:`quasireg._backend` picks one at import time.
"""
import math

import numpy as np

from ._backend import USE_NUMBA, njit, prange

SQRT2 = math.sqrt(2.0)


# ---------------------------------------------------------------- numba


@njit(inline="always")
def _fill_table(u_row, kmax, tab_row):
    # tab_row[l, k] = C_k(u_l); cos(k*pi*u) by rotation, error O(k eps)
    for l in range(u_row.shape[0]):
        theta = math.pi * u_row[l]
        c1 = math.cos(theta)
        s1 = math.sin(theta)
        c = 1.0
        s = 0.0
        tab_row[l, 0] = 1.0
        for k in range(1, kmax[l] + 1):
            c, s = c * c1 - s * s1, s * c1 + c * s1
            tab_row[l, k] = SQRT2 * c


@njit(parallel=True)
def _cosine_table_numba(U, kmax):
    P, d = U.shape
    tab = np.empty((P, d, kmax.max() + 1))
    for p in prange(P):
        _fill_table(U[p], kmax, tab[p])
    return tab


@njit(parallel=True)
def _series_numba(U, idx, kmax, coeffs):
    P, d = U.shape
    G = idx.shape[0]
    tab = np.empty((P, d, kmax.max() + 1))
    out = np.empty(P)
    for p in prange(P):
        t = tab[p]
        _fill_table(U[p], kmax, t)
        s = 0.0
        for g in range(G):
            v = coeffs[g]
            for l in range(d):
                v *= t[l, idx[g, l]]
            s += v
        out[p] = s
    return out


@njit(inline="always")
def _clenshaw(x, coeffs):
    # sum_k b_k cos(k theta) at x = cos(theta), b_0 = a_0, b_k = sqrt(2) a_k
    y1 = 0.0
    y2 = 0.0
    for k in range(coeffs.shape[0] - 1, 0, -1):
        y = SQRT2 * coeffs[k] + 2.0 * x * y1 - y2
        y2 = y1
        y1 = y
    return coeffs[0] + x * y1 - y2


@njit(parallel=True)
def _series_1d_numba(u, coeffs):
    P = u.shape[0]
    K = coeffs.shape[0] - 1
    out = np.empty(P)
    # four independent recurrences per pass hide the latency of each chain
    for q in prange(P // 4):
        p = 4 * q
        x0 = math.cos(math.pi * u[p])
        x1 = math.cos(math.pi * u[p + 1])
        x2 = math.cos(math.pi * u[p + 2])
        x3 = math.cos(math.pi * u[p + 3])
        a0 = b0 = a1 = b1 = a2 = b2 = a3 = b3 = 0.0
        for k in range(K, 0, -1):
            c = SQRT2 * coeffs[k]
            a0, b0 = c + 2.0 * x0 * a0 - b0, a0
            a1, b1 = c + 2.0 * x1 * a1 - b1, a1
            a2, b2 = c + 2.0 * x2 * a2 - b2, a2
            a3, b3 = c + 2.0 * x3 * a3 - b3, a3
        out[p] = coeffs[0] + x0 * a0 - b0
        out[p + 1] = coeffs[0] + x1 * a1 - b1
        out[p + 2] = coeffs[0] + x2 * a2 - b2
        out[p + 3] = coeffs[0] + x3 * a3 - b3
    for p in range(P - P % 4, P):
        out[p] = _clenshaw(math.cos(math.pi * u[p]), coeffs)
    return out


_PBLOCK = 256


@njit(parallel=True)
def _project_numba(U, S, idx, kmax):
    P, d = U.shape
    G = idx.shape[0]
    nb = (P + _PBLOCK - 1) // _PBLOCK
    part = np.zeros((nb, G))
    # fixed path blocks with private partial sums, added in block order below:
    # the result does not depend on how blocks are spread over threads
    for b in prange(nb):
        t = np.empty((d, kmax.max() + 1))
        acc = part[b]
        for p in range(b * _PBLOCK, min(P, (b + 1) * _PBLOCK)):
            _fill_table(U[p], kmax, t)
            sp = S[p]
            for g in range(G):
                v = sp
                for l in range(d):
                    v *= t[l, idx[g, l]]
                acc[g] += v
    out = np.zeros(G)
    for b in range(nb):
        out += part[b]
    return out


# ---------------------------------------------------------------- numpy

_ROWS = 2048


def _cosine_table_numpy(U, kmax):
    k = np.arange(int(kmax.max()) + 1, dtype=np.float64)
    tab = SQRT2 * np.cos(np.pi * U[:, :, None] * k)
    tab[:, :, 0] = 1.0
    return tab


def _basis_matrix(U, idx, kmax):
    tab = _cosine_table_numpy(U, kmax)
    phi = tab[:, 0, idx[:, 0]]
    for l in range(1, idx.shape[1]):
        phi = phi * tab[:, l, idx[:, l]]
    return phi


def _series_numpy(U, idx, kmax, coeffs):
    out = np.empty(U.shape[0])
    for a in range(0, U.shape[0], _ROWS):
        out[a:a + _ROWS] = _basis_matrix(U[a:a + _ROWS], idx, kmax) @ coeffs
    return out


def _project_numpy(U, S, idx, kmax):
    out = np.zeros(idx.shape[0])
    for a in range(0, U.shape[0], _ROWS):
        out += S[a:a + _ROWS] @ _basis_matrix(U[a:a + _ROWS], idx, kmax)
    return out


if USE_NUMBA:
    _cosine_table, _series, _project = _cosine_table_numba, _series_numba, _project_numba
else:
    _cosine_table, _series, _project = _cosine_table_numpy, _series_numpy, _project_numpy


def _prep(U, idx):
    U = np.ascontiguousarray(U, dtype=np.float64)
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    return U, idx, np.ascontiguousarray(idx.max(axis=0), dtype=np.int64)


def cosine_table(U, kmax):
    """``tab[p, l, k] = C_k(U[p, l])`` for ``k <= kmax[l]`` (entries beyond are unspecified)."""
    U = np.ascontiguousarray(U, dtype=np.float64)
    return _cosine_table(U, np.ascontiguousarray(kmax, dtype=np.int64))


def series(U, idx, coeffs):
    """``sum_g coeffs[g] * prod_l C_{idx[g, l]}(U[p, l])`` for every row p of U."""
    U, idx, kmax = _prep(U, idx)
    coeffs = np.ascontiguousarray(coeffs, dtype=np.float64)
    if USE_NUMBA and idx.shape[1] == 1 and np.array_equal(idx[:, 0], np.arange(idx.shape[0])):
        return _series_1d_numba(np.ascontiguousarray(U[:, 0]), coeffs)
    return _series(U, idx, kmax, coeffs)


def project(U, S, idx):
    """``sum_p S[p] * prod_l C_{idx[g, l]}(U[p, l])`` for every index row g."""
    U, idx, kmax = _prep(U, idx)
    return _project(U, np.ascontiguousarray(S, dtype=np.float64), idx, kmax)

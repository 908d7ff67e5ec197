"""Cosine basis on the unit cube and the Student-cosine basis on R^d.

``C_k(u) = 1`` for ``k = 0`` and ``sqrt(2) cos(k pi u)`` otherwise, tensorised
over coordinates; ``phi_k = C_k o F`` where ``F`` is the coordinatewise CDF of
the sampling measure. The ``phi_k`` are orthonormal in L2 of that measure.
"""
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .dist import DomainError, SamplingMeasure
from .mindex import MultiIndexSet


class ContractError(ValueError):
    pass


def cosine_eval(k, u):
    """One-dimensional cosine basis function ``C_k(u)``."""
    u = np.asarray(u, dtype=np.float64)
    if np.any((u < 0.0) | (u > 1.0)) or np.any(np.isnan(u)):
        raise DomainError("cosine basis is defined on [0, 1]")
    if k < 0:
        raise ValueError("k must be non-negative")
    out = np.ones_like(u) if k == 0 else math.sqrt(2.0) * np.cos(k * math.pi * u)
    return float(out) if out.ndim == 0 else out


def phi_eval(k, x, measure: SamplingMeasure):
    """``phi_k(x) = prod_l C_{k_l}(F_l(x_l))``; x has shape ``(dim,)`` or ``(n, dim)``."""
    k = tuple(int(v) for v in np.atleast_1d(k))
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0 and measure.dim == 1:
        x = x.reshape(1)
    if len(k) != measure.dim or x.shape[-1] != measure.dim:
        raise ContractError("multi-index and point must both have length dim")
    if not np.all(np.isfinite(x)):
        raise DomainError("phi needs finite points")
    u = measure.to_unit(x)
    out = np.ones(x.shape[:-1])
    for l, kl in enumerate(k):
        if kl:
            out = out * (math.sqrt(2.0) * np.cos(kl * math.pi * u[..., l]))
    return float(out) if out.ndim == 0 else out


def christoffel(gamma: MultiIndexSet):
    """``sum_k ||phi_k||_inf^2 = sum_k 2 ** (number of non-zero entries of k)``."""
    nnz = np.count_nonzero(gamma.indices, axis=1)
    return float(np.sum(np.ldexp(1.0, nnz)))


@dataclass(frozen=True)
class BasisContext:
    measure: SamplingMeasure
    gamma: MultiIndexSet

    def __post_init__(self):
        if self.measure.dim != self.gamma.dim:
            raise ContractError("measure and index set dimensions differ")

    def eval_series(self, coeffs, x):
        """``sum_k coeffs[k] phi_k(x)`` at one point ``(dim,)`` or many ``(n, dim)``."""
        coeffs = np.asarray(coeffs, dtype=np.float64)
        if coeffs.shape != (len(self.gamma),):
            raise ContractError(f"expected {len(self.gamma)} coefficients, got {coeffs.shape}")
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        X = x.reshape(-1, self.measure.dim)
        if not np.all(np.isfinite(X)):
            raise DomainError("series needs finite points")
        out = kernels.series(self.measure.to_unit(X), self.gamma.indices, coeffs)
        return float(out[0]) if single else out

    def basis_matrix(self, x):
        """``Phi[n, r] = phi_{gamma[r]}(x[n])``; for diagnostics and tests."""
        X = np.asarray(x, dtype=np.float64).reshape(-1, self.measure.dim)
        tab = kernels.cosine_table(self.measure.to_unit(X), self.gamma.max_degrees)
        idx = self.gamma.indices
        phi = tab[:, 0, idx[:, 0]]
        for l in range(1, idx.shape[1]):
            phi = phi * tab[:, l, idx[:, l]]
        return phi


def eval_series(coeffs, x, context: BasisContext):
    return context.eval_series(coeffs, x)

"""Product Student sampling measure.

Each coordinate has density ``c_mu * (1 + (x - c)^2) ** (-(mu + 1) / 2)``,
i.e. a standard Student t with ``mu`` degrees of freedom scaled by
``1/sqrt(mu)`` and shifted by ``c``. Closed forms are used for ``mu`` in
{1, 2}; other values go through the regularized incomplete beta function.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .rng import PathStream

U_GUARD = 1e-15


class DomainError(ValueError):
    pass


def student_constant(mu):
    """Normalising constant ``Gamma((mu+1)/2) / (Gamma(mu/2) sqrt(pi))``."""
    return math.exp(math.lgamma((mu + 1.0) / 2.0) - math.lgamma(mu / 2.0)) / math.sqrt(math.pi)


def _cdf_std(z, mu):
    if mu == 2.0:
        r = np.sqrt(1.0 + z * z)
        # 0.5 * (1 + z/r), written to avoid cancellation for z << 0
        lower = 0.5 / (r * (r + np.abs(z)))
        return np.where(z < 0, lower, 1.0 - lower)
    if mu == 1.0:
        return 0.5 + np.arctan(z) / math.pi
    tail = 0.5 * special.betainc(mu / 2.0, 0.5, 1.0 / (1.0 + z * z))
    return np.where(z < 0, tail, 1.0 - tail)


def _inv_cdf_std(u, mu):
    if mu == 2.0:
        return (u - 0.5) / np.sqrt(u * (1.0 - u))
    if mu == 1.0:
        # tan(pi*(u - 1/2)) = -1/tan(pi*u); the latter is exact near u = 0
        t = np.minimum(u, 1.0 - u)
        z = -1.0 / np.tan(math.pi * t)
        return np.where(u > 0.5, -z, z)
    t = np.minimum(u, 1.0 - u)
    w = special.betaincinv(mu / 2.0, 0.5, 2.0 * t)
    z = -np.sqrt(np.maximum(1.0 / w - 1.0, 0.0))
    # Newton polish on the cdf; beyond 1e100 the density underflows and
    # betaincinv's own relative accuracy is already the best available
    c = student_constant(mu)
    ok = np.abs(z) < 1e100
    zs = np.where(ok, z, 0.0)
    for _ in range(2):
        dens = c * (1.0 + zs * zs) ** (-(mu + 1.0) / 2.0)
        zs = zs - (_cdf_std(zs, mu) - t) / dens
    z = np.where(ok, zs, z)
    return np.where(u > 0.5, -z, z)


@dataclass(frozen=True)
class SamplingMeasure:
    """Product measure on R^d with Student marginals of parameter ``mu``."""

    mu: float
    dim: int
    center: tuple = field(default=None)

    def __post_init__(self):
        if not (self.mu > 0 and math.isfinite(self.mu)):
            raise ValueError(f"mu must be a positive finite number, got {self.mu}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim}")
        object.__setattr__(self, "mu", float(self.mu))
        object.__setattr__(self, "dim", int(self.dim))
        c = (0.0,) * self.dim if self.center is None else tuple(float(v) for v in self.center)
        if len(c) != self.dim or not all(math.isfinite(v) for v in c):
            raise ValueError("center must be a finite vector of length dim")
        object.__setattr__(self, "center", c)

    @property
    def c_mu(self):
        return student_constant(self.mu)

    @property
    def closed_form(self):
        return self.mu in (1.0, 2.0)

    def _shift(self, x, coord):
        x = np.asarray(x, dtype=np.float64)
        if coord is not None:
            return x - self.center[coord]
        if x.ndim == 0:
            return x - self.center[0]
        return x - np.asarray(self.center)

    def pdf(self, x, coord=None):
        """Marginal density, elementwise.

        Array input is read with coordinates along the last axis unless
        ``coord`` pins a single marginal; scalars use coordinate 0.
        """
        z = self._shift(x, coord)
        if not np.all(np.isfinite(z)):
            raise DomainError("pdf needs finite arguments")
        out = self.c_mu * (1.0 + z * z) ** (-(self.mu + 1.0) / 2.0)
        return float(out) if out.ndim == 0 else out

    def cdf(self, x, coord=None):
        z = self._shift(x, coord)
        out = _cdf_std(z, self.mu)
        return float(out) if np.ndim(out) == 0 else out

    def inv_cdf(self, u, coord=None):
        u = np.asarray(u, dtype=np.float64)
        if not np.all((u > 0.0) & (u < 1.0)):
            raise DomainError("inv_cdf needs u strictly inside (0, 1)")
        return self._inv(u, coord)

    def _inv(self, u, coord):
        u = np.clip(u, U_GUARD, 1.0 - U_GUARD)
        z = _inv_cdf_std(u, self.mu)
        if coord is not None:
            out = z + self.center[coord]
        elif z.ndim == 0:
            out = z + self.center[0]
        else:
            out = z + np.asarray(self.center)
        return float(out) if np.ndim(out) == 0 else out

    def from_uniform(self, U):
        """Map uniforms of shape ``(..., dim)`` to points distributed as the measure.

        Unlike :meth:`inv_cdf` this clamps 0 and 1 into the guard band
        instead of raising.
        """
        return np.asarray(self._inv(np.asarray(U, dtype=np.float64), None), dtype=np.float64)

    def to_unit(self, X):
        """Coordinatewise CDF of points of shape ``(..., dim)``; lands in [0, 1]."""
        return np.asarray(_cdf_std(np.asarray(X, dtype=np.float64) - np.asarray(self.center),
                                   self.mu), dtype=np.float64)

    def sample(self, stream: PathStream):
        """One point from the first ``dim`` draws of ``stream``."""
        return self.from_uniform(stream.uniforms(0, self.dim))

    def tail_constant(self):
        """``(c_mu / mu) ** (1/mu)``: ``inv_cdf(u) ~ -tail_constant * u**(-1/mu)`` as u -> 0."""
        return (self.c_mu / self.mu) ** (1.0 / self.mu)

    def describe(self):
        return {"mu": self.mu, "dim": self.dim, "center": list(self.center)}

"""Forward model: problem data, a-priori bound, Euler paths.

Model functions are vectorised over a leading batch axis:

* ``drift(t, X)`` with ``X`` of shape ``(P, d)`` returns something broadcastable
  to ``(P, d)``;
* ``diffusion(t, X)`` returns something broadcastable to ``(P, d, q_w)``, or a
  scalar ``s`` meaning ``s * Identity`` (then ``q_w`` must equal ``d``);
* ``driver(t, X, y)`` and ``terminal(X)`` return shape ``(P,)``.

Path ``m`` of cloud ``i`` reads its Brownian increment for step ``j`` from
draws ``d + (j - i) * q_w ...`` of its substream; draws ``0 .. d-1`` are
reserved for the starting point.
"""
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .rng import TRAIN, PathStream, ndtri, stream_uniforms


class SimulationError(ArithmeticError):
    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


@dataclass(frozen=True)
class ProblemSpec:
    """Decoupled forward-backward problem without gradient dependence.

    ``C_eta`` bounds the ratio of conditional moments of the Euler scheme;
    no closed form exists, so it is left to the caller and defaults to 1.
    With polynomial growth (``eta_g`` or ``eta_f`` > 0) that default can
    understate the true bound.
    """

    dim: int
    horizon: float
    drift: Callable
    diffusion: Callable
    driver: Callable
    terminal: Callable
    brownian_dim: Optional[int] = None
    C_g: float = 1.0
    eta_g: float = 0.0
    C_f: float = 0.0
    eta_f: float = 0.0
    L_f: float = 0.0
    C_eta: float = 1.0
    state_bound: Optional[float] = None
    name: str = "custom"

    def __post_init__(self):
        if self.brownian_dim is None:
            object.__setattr__(self, "brownian_dim", self.dim)
        if self.dim < 1 or self.brownian_dim < 1:
            raise ValueError("dimensions must be positive")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        for name in ("C_g", "eta_g", "C_f", "eta_f", "L_f"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and non-negative")
        if not (math.isfinite(self.C_eta) and self.C_eta >= 1):
            raise ValueError("C_eta must be >= 1")

    @property
    def growth(self):
        return max(self.eta_g, self.eta_f)


def lstar_bound(x, spec: ProblemSpec):
    """A-priori bound on |y_i(x)|, for a point ``(d,)`` or points ``(n, d)``."""
    x = np.asarray(x, dtype=np.float64)
    const = spec.C_eta * (spec.C_g + spec.horizon * spec.C_f) * math.exp(
        spec.C_eta * spec.L_f * spec.horizon)
    if spec.growth == 0:
        out = np.full(x.shape[:-1], const)
    else:
        out = const * (1.0 + np.sum(x * x, axis=-1)) ** (spec.growth / 2.0)
    return float(out) if out.ndim == 0 else out


@dataclass
class PathBundle:
    """Points ``X_start .. X_N`` of one path, or only ``(X_start, response)``."""

    start: int
    points: Optional[np.ndarray] = None
    initial: Optional[np.ndarray] = None
    response: Optional[float] = None

    def __post_init__(self):
        if self.initial is None and self.points is not None:
            self.initial = self.points[0]


def increment_offset(spec: ProblemSpec, start, step):
    return spec.dim + (step - start) * spec.brownian_dim


def euler_step(spec: ProblemSpec, t, X, dW, dt, step=None):
    """``X + b(t, X) dt + sigma(t, X) dW`` for a batch ``X`` of shape ``(P, d)``."""
    sig = np.asarray(spec.diffusion(t, X), dtype=np.float64)
    drift = np.asarray(spec.drift(t, X), dtype=np.float64)
    if sig.ndim == 0:
        Xn = X + drift * dt + sig * dW
    else:
        Xn = X + drift * dt + np.einsum("...ij,...j->...i", sig, dW)
    if not np.all(np.isfinite(Xn)):
        raise SimulationError("non-finite state", step)
    if spec.state_bound is not None and np.max(np.abs(Xn)) > spec.state_bound:
        raise SimulationError(f"state left the box |x| <= {spec.state_bound}", step)
    return Xn


def brownian_increments(spec, seed, domain, cloud, m0, count, start, step, dt):
    U = stream_uniforms(seed, domain, cloud, m0, count,
                        increment_offset(spec, start, step), spec.brownian_dim)
    return ndtri(U) * math.sqrt(dt)


def simulate(spec: ProblemSpec, steps, X0, start, seed, m0=0, domain=TRAIN, cloud=None):
    """Yield ``(j, X_j, X_{j+1})`` for ``j = start .. steps-1``.

    ``X0`` holds the step-``start`` points of paths ``m0 .. m0+len(X0)-1``;
    their substreams live in ``cloud`` (default: ``start``).
    """
    dt = spec.horizon / steps
    cloud = start if cloud is None else cloud
    X = np.asarray(X0, dtype=np.float64)
    count = X.shape[0]
    for j in range(start, steps):
        dW = brownian_increments(spec, seed, domain, cloud, m0, count, start, j, dt)
        Xn = euler_step(spec, j * dt, X, dW, dt, step=j)
        yield j, X, Xn
        X = Xn


def euler_path(stream: PathStream, x0, start, spec: ProblemSpec, steps, dt=None):
    """Single Euler path from ``x0`` at step ``start`` using ``stream``'s increments."""
    if not 0 <= start <= steps:
        raise ValueError("need 0 <= start <= steps")
    if dt is not None and not math.isclose(dt, spec.horizon / steps, rel_tol=1e-12):
        raise ValueError("time step must equal horizon / steps")
    x0 = np.asarray(x0, dtype=np.float64).reshape(1, spec.dim)
    points = [x0[0]]
    for _, _, Xn in simulate(spec, steps, x0, start, stream.seed, stream.path, stream.domain,
                             cloud=stream.cloud):
        points.append(Xn[0])
    return PathBundle(start=start, points=np.array(points))

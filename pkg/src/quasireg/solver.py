"""Backward quasi-regression iteration.

For i = N-1 .. 0 a fresh cloud of M Euler paths is started from the sampling
measure at step i. Each path yields a damped response

    S = [g(X_N) + dt * sum_{j >= i} f(t_j, X_j, T(yhat_{j+1}(X_{j+1})))] / w(X_i)

with ``w(x) = (1 + |x|^2) ** (q/2)`` and ``T`` the clamp to the a-priori
bound at ``X_{j+1}``. Coefficient k at step i is the plain average of
``S * phi_k(X_i)`` over the cloud; no linear system is solved.

Paths are processed in fixed chunks of ``chunk_size``; per-chunk partial
sums are added in chunk order, so results do not depend on thread count.
"""
import enum
import json
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from ._backend import backend_name, default_workers, set_workers
from .basis import BasisContext, ContractError, christoffel
from .dist import SamplingMeasure
from .engine import ProblemSpec, lstar_bound, simulate
from .mindex import MultiIndexSet, build
from .rng import TRAIN, stream_uniforms

log = logging.getLogger(__name__)

FORMAT = "quasireg.coefficient-table"
VERSION = 1


class NumericalError(ArithmeticError):
    def __init__(self, message, step=None, index=None):
        super().__init__(message)
        self.step = step
        self.index = index


class MemoryMode(str, enum.Enum):
    STORE_CLOUD = "store"
    RECOMPUTE = "recompute"


@dataclass(frozen=True)
class RunConfig:
    steps: int
    paths: int
    gamma: MultiIndexSet
    measure: SamplingMeasure
    q: float = 0.0
    seed: int = 0
    workers: Optional[int] = None
    memory_mode: MemoryMode = MemoryMode.STORE_CLOUD
    chunk_size: int = 4096

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.paths < 1:
            raise ValueError("paths must be >= 1")
        if not (self.q >= 0 and math.isfinite(self.q)):
            raise ValueError("q must be finite and >= 0")
        if self.chunk_size < 1:
            raise ValueError("chunk_size must be >= 1")
        if self.gamma.dim != self.measure.dim:
            raise ValueError("index set and measure dimensions differ")
        object.__setattr__(self, "memory_mode", MemoryMode(self.memory_mode))

    @property
    def statistical_ratio(self):
        """Christoffel number over M, the driver of the statistical error."""
        return christoffel(self.gamma) / self.paths

    def snapshot(self, spec: ProblemSpec):
        return {
            "problem": spec.name,
            "dim": spec.dim,
            "horizon": spec.horizon,
            "steps": self.steps,
            "paths": self.paths,
            "q": self.q,
            "seed": self.seed,
            "chunk_size": self.chunk_size,
            "measure": self.measure.describe(),
        }


def truncate(v, bound):
    """Clamp ``v`` to ``[-bound, bound]``."""
    out = np.clip(v, -np.asarray(bound), np.asarray(bound))
    return float(out) if np.ndim(out) == 0 else out


def damping(X, q):
    """``(1 + |x|^2) ** (q/2)`` over the last axis."""
    X = np.asarray(X, dtype=np.float64)
    if q == 0:
        return np.ones(X.shape[:-1])
    return (1.0 + np.sum(X * X, axis=-1)) ** (q / 2.0)


@dataclass
class CoefficientTable:
    """Coefficients per time step, aligned with ``gamma``'s order.

    Row ``i`` of ``coeffs`` defines the damped estimate
    ``yhat_i(x) = sum_k coeffs[i, k] phi_k(x)``. Rows not yet computed are NaN.
    ``metadata`` holds run facts that do not affect the numbers (timings,
    thread count, memory mode) and is kept out of the JSON artifact.
    """

    config: dict
    gamma: MultiIndexSet
    measure: SamplingMeasure
    coeffs: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def steps(self):
        return self.coeffs.shape[0]

    @property
    def q(self):
        return float(self.config["q"])

    @property
    def context(self):
        return BasisContext(self.measure, self.gamma)

    def damped(self, i, x):
        """Series value at step i, in the damped scale."""
        if not 0 <= i < self.steps:
            raise IndexError(f"step {i} outside 0..{self.steps - 1}")
        row = self.coeffs[i]
        if np.isnan(row).any():
            raise ContractError(f"coefficients for step {i} are not computed")
        return self.context.eval_series(row, x)

    def evaluate(self, i, x):
        """Estimate of ``y_i(x)`` (undamped)."""
        val = self.damped(i, x)
        w = damping(x, self.q)
        out = val * w
        return float(out) if np.ndim(out) == 0 else out

    def to_dict(self):
        keys = [list(k) for k in self.gamma]
        return {
            "format": FORMAT,
            "version": VERSION,
            "config": self.config,
            "gamma": self.gamma.describe(),
            "steps": [
                {"i": i, "coefficients": [[k, float(v)] for k, v in zip(keys, row)]}
                for i, row in enumerate(self.coeffs)
            ],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, doc):
        if doc.get("format") != FORMAT:
            raise ValueError("not a coefficient table document")
        if doc.get("version") != VERSION:
            raise ValueError(f"unsupported table version {doc.get('version')}")
        g = doc["gamma"]
        if g["kind"] == "full":
            gamma = build(g["dim"], "full", orders=g["params"])
        else:
            gamma = build(g["dim"], g["kind"], deg=g["params"][0])
        m = doc["config"]["measure"]
        measure = SamplingMeasure(m["mu"], m["dim"], m["center"])
        keys = [tuple(k) for k in gamma]
        coeffs = np.full((len(doc["steps"]), len(gamma)), np.nan)
        for step in doc["steps"]:
            got = [tuple(k) for k, _ in step["coefficients"]]
            if got != keys:
                raise ValueError(f"step {step['i']}: multi-indices do not match the index set")
            coeffs[step["i"]] = [v for _, v in step["coefficients"]]
        return cls(doc["config"], gamma, measure, coeffs)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def save(self, path, meta_path=None):
        """Write the artifact; timings and run facts go to ``<path>.meta.json``."""
        with open(path, "w") as fh:
            fh.write(self.to_json())
            fh.write("\n")
        meta_path = meta_path or f"{path}.meta.json"
        with open(meta_path, "w") as fh:
            json.dump(self.metadata, fh, indent=2, sort_keys=True)
        return path

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(fh.read())


def _empty_table(spec, config):
    coeffs = np.full((config.steps, len(config.gamma)), np.nan)
    return CoefficientTable(config.snapshot(spec), config.gamma, config.measure, coeffs)


def _initial_points(config, cloud, m0, count, seed=None, domain=TRAIN):
    d = config.measure.dim
    U = stream_uniforms(config.seed if seed is None else seed, domain, cloud, m0, count, 0, d)
    return config.measure.from_uniform(U)


class _Counter:
    __slots__ = ("hits", "evaluations")

    def __init__(self):
        self.hits = 0
        self.evaluations = 0


def _chunk_responses(spec, config, coeffs, i, X0, m0, counter):
    """Damped responses of paths ``m0 ..`` of cloud i started at ``X0``."""
    N = config.steps
    dt = spec.horizon / N
    q = config.q
    idx = config.gamma.indices
    measure = config.measure
    acc = np.zeros(X0.shape[0])
    Xn = X0
    for j, Xj, Xn in simulate(spec, N, X0, i, config.seed, m0):
        if j + 1 == N:
            y = np.asarray(spec.terminal(Xn), dtype=np.float64)
        else:
            row = coeffs[j + 1]
            if np.isnan(row[0]):
                raise ContractError(f"coefficients for step {j + 1} are missing")
            y = kernels.series(measure.to_unit(Xn), idx, row) * damping(Xn, q)
        bound = lstar_bound(Xn, spec)
        counter.hits += int(np.count_nonzero(np.abs(y) > bound))
        counter.evaluations += y.shape[0]
        y = np.clip(y, -bound, bound)
        acc += np.asarray(spec.driver(j * dt, Xj, y), dtype=np.float64)
    S = (np.asarray(spec.terminal(Xn), dtype=np.float64) + dt * acc) / damping(X0, q)
    if not np.all(np.isfinite(S)):
        bad = int(np.flatnonzero(~np.isfinite(S))[0])
        raise NumericalError(f"non-finite response on path {m0 + bad} of step {i}", step=i)
    return S


def response(path, table: CoefficientTable, spec: ProblemSpec, config: RunConfig):
    """Damped response of a single stored path (``path.points`` = X_i .. X_N)."""
    pts = np.asarray(path.points, dtype=np.float64)
    N = config.steps
    i = path.start
    if pts.shape[0] != N - i + 1:
        raise ContractError("path must hold X_i .. X_N")
    dt = spec.horizon / N
    acc = 0.0
    for j in range(i, N):
        Xn = pts[j - i + 1:j - i + 2]
        if j + 1 == N:
            y = np.asarray(spec.terminal(Xn), dtype=np.float64)
        else:
            y = np.atleast_1d(table.damped(j + 1, Xn)) * damping(Xn, config.q)
        bound = lstar_bound(Xn, spec)
        y = np.clip(y, -bound, bound)
        acc += float(np.asarray(spec.driver(j * dt, pts[j - i:j - i + 1], y))[0])
    gN = float(np.asarray(spec.terminal(pts[-1:]))[0])
    return (gN + dt * acc) / float(damping(pts[0], config.q))


def _chunks(total, size):
    for m0 in range(0, total, size):
        yield m0, min(size, total - m0)


def cloud_responses(spec, config, table, i):
    """``(X_i, S)`` for the whole cloud of step i, replayed from the seed.

    Diagnostic companion to :func:`solve_step`: with them a caller can form
    per-path contributions ``S_m * K(X_m, x)`` and hence standard errors.
    """
    counter = _Counter()
    X = _initial_points(config, i, 0, config.paths)
    S = np.concatenate([
        _chunk_responses(spec, config, table.coeffs, i, X[m0:m0 + n], m0, counter)
        for m0, n in _chunks(config.paths, config.chunk_size)])
    return X, S


def solve_step(spec, config, table, i, counter):
    """Coefficients at step i; needs rows i+1 .. N-1 of ``table``."""
    M = config.paths
    idx = config.gamma.indices
    store = config.memory_mode is MemoryMode.STORE_CLOUD
    S = np.empty(M)
    cloud = np.empty((M, config.measure.dim)) if store else None
    # phase 1: simulate and respond
    for m0, n in _chunks(M, config.chunk_size):
        X0 = _initial_points(config, i, m0, n)
        S[m0:m0 + n] = _chunk_responses(spec, config, table.coeffs, i, X0, m0, counter)
        if store:
            cloud[m0:m0 + n] = X0
    # phase 2: projections, reduced in chunk order
    total = np.zeros(len(config.gamma))
    for m0, n in _chunks(M, config.chunk_size):
        X0 = cloud[m0:m0 + n] if store else _initial_points(config, i, m0, n)
        total += kernels.project(config.measure.to_unit(X0), S[m0:m0 + n], idx)
    alpha = total / M
    if not np.all(np.isfinite(alpha)):
        r = int(np.flatnonzero(~np.isfinite(alpha))[0])
        k = tuple(int(v) for v in idx[r])
        raise NumericalError(f"non-finite coefficient at step {i}, index {k}", step=i, index=k)
    return alpha


def backward_solve(spec: ProblemSpec, config: RunConfig) -> CoefficientTable:
    if spec.dim != config.measure.dim:
        raise ContractError("problem and measure dimensions differ")
    workers = config.workers or default_workers()
    set_workers(workers)
    table = _empty_table(spec, config)
    counter = _Counter()
    step_seconds = [0.0] * config.steps
    t_start = time.perf_counter()
    for i in range(config.steps - 1, -1, -1):
        t0 = time.perf_counter()
        table.coeffs[i] = solve_step(spec, config, table, i, counter)
        step_seconds[i] = time.perf_counter() - t0
        log.debug("step %d done in %.3fs", i, step_seconds[i])
    table.metadata = {
        "backend": backend_name(),
        "workers": workers,
        "memory_mode": config.memory_mode.value,
        "wall_seconds": time.perf_counter() - t_start,
        "step_seconds": step_seconds,
        "truncation_hits": counter.hits,
        "truncation_evaluations": counter.evaluations,
        "christoffel": christoffel(config.gamma),
        "statistical_ratio": config.statistical_ratio,
    }
    return table


def evaluate_solution(table: CoefficientTable, i, x, config: Optional[RunConfig] = None):
    """Undamped estimate of ``y_i(x)`` from a finished table."""
    if config is not None and config.q != table.q:
        raise ContractError("config and table disagree on q")
    return table.evaluate(i, x)

"""Sinusoidal benchmark with known solution, accuracy metrics and intervals.

The problem is ``du/dt + (1/2) Lap u + f(t, x, u) = 0`` with ``u(T) = g`` and
Brownian forward dynamics, where

    g(x)       = 1 + kappa + sin(lambda * sum(x))
    f(t, x, y) = min(1, [y - 1 - kappa - sin(lambda * sum(x)) * e(t)]^2)
    e(t)       = exp(lambda^2 d (t - T) / 2)

so that ``u(t, x) = 1 + kappa + sin(lambda * sum(x)) * e(t)`` exactly.
"""
import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from .engine import ProblemSpec
from .rng import EVAL, stream_uniforms
from .solver import CoefficientTable, RunConfig, backward_solve, damping


@dataclass(frozen=True)
class SinBenchmark:
    d: int = 1
    kappa: float = 0.6
    lam: Optional[float] = None
    T: float = 1.0

    def __post_init__(self):
        if self.lam is None:
            object.__setattr__(self, "lam", 1.0 / math.sqrt(self.d))

    def _decay(self, t):
        return np.exp(self.lam ** 2 * self.d * (np.asarray(t) - self.T) / 2.0)

    def exact_solution(self, t, x):
        x = np.asarray(x, dtype=np.float64)
        out = 1.0 + self.kappa + np.sin(self.lam * np.sum(x, axis=-1)) * self._decay(t)
        return float(out) if np.ndim(out) == 0 else out

    def terminal(self, x):
        return 1.0 + self.kappa + np.sin(self.lam * np.sum(x, axis=-1))

    def driver(self, t, x, y):
        gap = y - 1.0 - self.kappa - np.sin(self.lam * np.sum(x, axis=-1)) * self._decay(t)
        return np.minimum(1.0, gap * gap)


def exact_solution(t, x, benchmark: SinBenchmark):
    return benchmark.exact_solution(t, x)


def make_problem(benchmark: SinBenchmark, C_eta=1.0) -> ProblemSpec:
    """Problem data for the benchmark.

    ``g`` and ``f`` are bounded, so both growth exponents vanish. The driver is
    ``min(1, z^2)`` in ``z = y - const``, whose slope in y is at most 2.
    """
    d = benchmark.d
    return ProblemSpec(
        dim=d,
        horizon=benchmark.T,
        drift=lambda t, X: 0.0,
        diffusion=lambda t, X: 1.0,
        driver=benchmark.driver,
        terminal=benchmark.terminal,
        brownian_dim=d,
        C_g=2.0 + benchmark.kappa,
        eta_g=0.0,
        C_f=1.0,
        eta_f=0.0,
        L_f=2.0,
        C_eta=C_eta,
        name=f"sin-d{d}",
    )


@dataclass
class MetricReport:
    """Log-scale mean squared errors of a table against the exact solution.

    ``mse_*`` compare in the damped scale (both sides divided by
    ``(1+|x|^2)^(q/2)``); ``*_undamped`` compare ``u`` itself. Totals of zero
    give ``-inf``.
    """

    mse_max: float
    mse_av: float
    n_eval: int
    step_sq_errors: list
    mse_max_undamped: float = float("nan")
    mse_av_undamped: float = float("nan")
    row: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)

    CSV_COLUMNS = ("d", "dt", "q", "kind", "deg", "size", "M", "seed",
                   "mse_max", "mse_av", "wall_seconds")

    def csv_row(self, header=False):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if header:
            w.writerow(self.CSV_COLUMNS)
        r = dict(self.row, mse_max=f"{self.mse_max:.6f}", mse_av=f"{self.mse_av:.6f}")
        w.writerow([r.get(c, "") for c in self.CSV_COLUMNS])
        return buf.getvalue()


def _log_or_neg_inf(v):
    return math.log(v) if v > 0 else float("-inf")


def eval_points(measure, steps, eval_seed, n_eval):
    """``R[i, m]``: evaluation points from the reserved evaluation stream domain."""
    out = np.empty((steps, n_eval, measure.dim))
    for i in range(steps):
        U = stream_uniforms(eval_seed, EVAL, i, 0, n_eval, 0, measure.dim)
        out[i] = measure.from_uniform(U)
    return out


def metrics_from_errors(err):
    """``(MSE_max, MSE_av)`` from an ``(N, n_eval)`` error array."""
    err = np.asarray(err, dtype=np.float64)
    per_step = np.sum(err * err, axis=1)
    n_eval = err.shape[1]
    return (_log_or_neg_inf(np.max(per_step) / n_eval),
            _log_or_neg_inf(np.sum(per_step) / (n_eval * err.shape[0])), per_step)


def mse_metrics(table: CoefficientTable, benchmark: SinBenchmark, eval_seed, n_eval=1000):
    N = table.steps
    q = table.q
    dt = benchmark.T / N
    R = eval_points(table.measure, N, eval_seed, n_eval)
    err = np.empty((N, n_eval))
    err_u = np.empty((N, n_eval))
    for i in range(N):
        w = damping(R[i], q)
        est = table.damped(i, R[i])
        exact = benchmark.exact_solution(i * dt, R[i])
        err[i] = est - exact / w
        err_u[i] = est * w - exact
    mse_max, mse_av, per_step = metrics_from_errors(err)
    mse_max_u, mse_av_u, _ = metrics_from_errors(err_u)
    return MetricReport(mse_max, mse_av, n_eval, per_step.tolist(), mse_max_u, mse_av_u)


def confidence_interval(values, level=0.99):
    """Normal-approximation interval ``mean +- z * sd / sqrt(n)``."""
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        raise ValueError("need at least two values")
    z = stats.norm.ppf((1.0 + level) / 2.0)
    half = z * np.std(v, ddof=1) / math.sqrt(v.size)
    m = float(np.mean(v))
    return m - half, m + half


def run_row(benchmark: SinBenchmark, config: RunConfig, eval_seed=None, n_eval=1000):
    """Solve once and score: returns ``(table, report)`` with the CSV row filled."""
    t0 = time.perf_counter()
    table = backward_solve(make_problem(benchmark), config)
    wall = time.perf_counter() - t0
    eval_seed = config.seed if eval_seed is None else eval_seed
    report = mse_metrics(table, benchmark, eval_seed, n_eval)
    g = config.gamma
    report.row = {
        "d": benchmark.d,
        "dt": benchmark.T / config.steps,
        "q": config.q,
        "kind": g.kind,
        "deg": g.params[0] if g.kind != "full" or len(set(g.params)) == 1 else "x".join(map(str, g.params)),
        "size": len(g),
        "M": config.paths,
        "seed": config.seed,
        "wall_seconds": f"{wall:.3f}",
    }
    return table, report

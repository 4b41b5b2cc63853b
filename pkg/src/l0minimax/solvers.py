"""Proximal gradient descent ascent solvers (PGDA and APGDA)."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .certify import residuals, strong_residuals
from .penalties import DensitySpec
from .problems import BoxSet, SaddleProblem, eval_f, eval_fR

ALGOS = ("pgda", "apgda")


class ConfigError(ValueError):
    """Inconsistent solver configuration."""


class DivergenceError(RuntimeError):
    """Non-finite iterate; carries the last finite state."""

    def __init__(self, msg: str, iteration: int, x: np.ndarray, y: np.ndarray):
        super().__init__(msg)
        self.iteration = iteration
        self.x = x
        self.y = y


def project_box(v, box: BoxSet) -> np.ndarray:
    return np.clip(np.asarray(v, dtype=float), box.lower, box.upper)


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto ``{y >= 0, sum(y) = 1}`` (sort-based)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(v - theta, 0.0)


def prox_box_weighted_l1(v, weights, gamma: float, box: BoxSet) -> np.ndarray:
    """Coordinatewise argmin of ``gamma/2 (x - v)^2 + w |x|`` over the box."""
    if not gamma > 0:
        raise ConfigError(f"gamma must be positive, got {gamma}")
    v = np.asarray(v, dtype=float)
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise ConfigError("weights must be nonnegative")
    soft = np.sign(v) * np.maximum(np.abs(v) - w / gamma, 0.0)
    return np.clip(soft, box.lower, box.upper)


def _project_y(problem: SaddleProblem, v) -> np.ndarray:
    if problem.y_simplex:
        return project_simplex(v)
    return project_box(v, problem.y_box)


def _grads(problem: SaddleProblem, eps: Optional[float]):
    if eps is None:
        return problem.grad_x, problem.grad_y
    if problem.smoothed is None:
        raise ConfigError("smoothing requested for a problem without a smoothed evaluator")
    return (lambda x, y: problem.smoothed(x, y, eps)[1]), (lambda x, y: problem.smoothed(x, y, eps)[2])


def pgda_step(problem: SaddleProblem, x, y, gamma: float, eps: Optional[float] = None):
    """One PGDA step; the ascent step uses the updated ``x``."""
    if not gamma > 0:
        raise ConfigError(f"gamma must be positive, got {gamma}")
    gx, gy = _grads(problem, eps)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xn = project_box(x - gx(x, y) / gamma, problem.x_box)
    yn = _project_y(problem, y + gy(xn, y) / gamma)
    return xn, yn


def apgda_weights(v, lam: float, mu: float) -> np.ndarray:
    """``lam/mu`` where ``|v_i| < mu`` and 0 otherwise (ties get 0)."""
    return np.where(np.abs(np.asarray(v, dtype=float)) < mu, lam / mu, 0.0)


def _check_apgda_shape(problem: SaddleProblem, spec: DensitySpec) -> None:
    if spec.kind != "capped_l1":
        raise ConfigError("APGDA is defined for the capped-l1 relaxation")
    if problem.y_simplex:
        raise ConfigError("APGDA does not support simplex-constrained y")
    for name, terms, box in (("x", problem.g, problem.x_box), ("y", problem.h, problem.y_box)):
        if not terms.is_l0:
            raise ConfigError(f"APGDA needs l0 penalties on {name}")
        if not (np.all(box.lower < 0) and np.all(box.upper > 0)):
            raise ConfigError(f"APGDA needs a box containing 0 in its interior for {name}")


def apgda_step(problem: SaddleProblem, x, y, spec: DensitySpec, mu: float, gamma: float, eps: Optional[float] = None):
    """One APGDA step with the iterate-dependent weighted-l1 majorization.

    The ascent step evaluates ``grad_y`` at the updated ``x``, as PGDA does.
    """
    _check_apgda_shape(problem, spec)
    if not mu > 0:
        raise ConfigError(f"mu must be positive, got {mu}")
    gx, gy = _grads(problem, eps)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    wx = apgda_weights(x, problem.lambda1, mu)
    xn = prox_box_weighted_l1(x - gx(x, y) / gamma, wx, gamma, problem.x_box)
    wy = apgda_weights(y, problem.lambda2, mu)
    yn = prox_box_weighted_l1(y + gy(xn, y) / gamma, wy, gamma, problem.y_box)
    return xn, yn


@dataclass
class SolverConfig:
    gamma: Optional[float] = None
    mu: Optional[float] = None
    max_iters: int = 100_000
    tol: float = 1e-6
    x0: Optional[np.ndarray] = None
    y0: Optional[np.ndarray] = None
    gamma_multiplier: float = 1.0
    eps: Optional[float] = None

    def resolve(self, problem: SaddleProblem, algo: str):
        gamma = self.gamma
        if gamma is None:
            if problem.gamma is None:
                raise ConfigError("gamma is required: the problem has no curvature bound")
            gamma = problem.gamma * self.gamma_multiplier
        if not (gamma > 0 and math.isfinite(gamma)):
            raise ConfigError(f"gamma must be positive and finite, got {gamma}")
        if algo == "apgda" and not (self.mu is not None and self.mu > 0):
            raise ConfigError("APGDA requires mu > 0")
        if self.max_iters < 0:
            raise ConfigError("max_iters must be nonnegative")
        if not self.tol >= 0:
            raise ConfigError("tol must be nonnegative")
        x0 = np.full(problem.n, 0.2) if self.x0 is None else np.asarray(self.x0, dtype=float)
        if self.y0 is not None:
            y0 = np.asarray(self.y0, dtype=float)
        elif problem.y_simplex:
            y0 = np.full(problem.m, 1.0 / problem.m)
        else:
            y0 = np.full(problem.m, 0.2)
        x0 = project_box(x0, problem.x_box)
        y0 = _project_y(problem, y0)
        return float(gamma), x0, y0


@dataclass
class SolveTrace:
    algo: str
    iterates: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    sparsity: list = field(default_factory=list)
    termination: str = "MaxIters"
    gamma: float = float("nan")
    mu: Optional[float] = None

    @property
    def x(self) -> np.ndarray:
        return self.iterates[-1][0]

    @property
    def y(self) -> np.ndarray:
        return self.iterates[-1][1]

    @property
    def iterations(self) -> int:
        return len(self.iterates) - 1

    @property
    def final_residual(self) -> float:
        return float(sum(self.residuals[-1]))


def _simplex_residual(problem: SaddleProblem, x, y, gy) -> float:
    # prox-gradient mapping with unit step stands in for the box residual
    return float(np.abs(project_simplex(y + gy) - y).sum())


def _residual(problem, algo, x, y, mu, eps):
    if problem.y_simplex or eps is not None:
        gx, gy = _grads(problem, eps)
        gxv = gx(x, y)
        p = float(np.abs(project_box(x - gxv, problem.x_box) - x).sum())
        gyv = gy(x, y)
        q = _simplex_residual(problem, x, y, gyv) if problem.y_simplex else float(
            np.abs(project_box(y + gyv, problem.y_box) - y).sum()
        )
        return p, q
    if algo == "pgda":
        return residuals(problem, x, y)
    return strong_residuals(problem, x, y, mu)


def run(problem: SaddleProblem, algo: str, config: SolverConfig, spec: Optional[DensitySpec] = None) -> SolveTrace:
    """Iterate until the residual drops to ``tol`` or ``max_iters`` is reached.

    The residual is ``p + q`` for PGDA and ``p~ + q~`` for APGDA. When the
    problem has a simplex ``y`` set or smoothing is active, the
    prox-gradient mapping norm is used instead.
    """
    algo = algo.lower()
    if algo not in ALGOS:
        raise ConfigError(f"unknown algorithm {algo!r}")
    spec = spec or DensitySpec.capped_l1()
    gamma, x, y = config.resolve(problem, algo)
    if algo == "apgda":
        _check_apgda_shape(problem, spec)
    mu = config.mu
    trace = SolveTrace(algo=algo, gamma=gamma, mu=mu)

    def record(xv, yv):
        trace.iterates.append((xv, yv))
        trace.residuals.append(_residual(problem, algo, xv, yv, mu, config.eps))
        trace.sparsity.append((int(np.count_nonzero(xv)), int(np.count_nonzero(yv))))

    record(x, y)
    for k in range(config.max_iters):
        if sum(trace.residuals[-1]) <= config.tol:
            trace.termination = "Tolerance"
            return trace
        if algo == "pgda":
            xn, yn = pgda_step(problem, x, y, gamma, config.eps)
        else:
            xn, yn = apgda_step(problem, x, y, spec, mu, gamma, config.eps)
        if not (np.all(np.isfinite(xn)) and np.all(np.isfinite(yn))):
            raise DivergenceError(f"non-finite iterate at step {k + 1}", k, x, y)
        x, y = xn, yn
        record(x, y)
    if sum(trace.residuals[-1]) <= config.tol:
        trace.termination = "Tolerance"
    return trace


# --------------------------------------------------------------------------- CSV export


def trace_columns(problem: SaddleProblem) -> list[str]:
    return (
        ["iter", "residual_p", "residual_q", "nnz_x", "nnz_y", "f_value", "fR_value"]
        + [f"x_{i}" for i in range(problem.n)]
        + [f"y_{j}" for j in range(problem.m)]
    )


def _g17(v: float) -> str:
    return f"{v:.17g}"


def trace_to_csv(
    problem: SaddleProblem,
    trace: SolveTrace,
    mu: Optional[float] = None,
    spec: Optional[DensitySpec] = None,
    certificate=None,
) -> str:
    """Render a trace as CSV; a certificate is appended as ``#`` comment lines."""
    spec = spec or DensitySpec.capped_l1()
    mu = mu if mu is not None else trace.mu
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(trace_columns(problem))
    for k, ((x, y), (p, q), (nx, ny)) in enumerate(zip(trace.iterates, trace.residuals, trace.sparsity)):
        f = eval_f(problem, x, y).total
        fr = eval_fR(problem, x, y, spec, mu) if mu else float("nan")
        w.writerow([k, _g17(p), _g17(q), nx, ny, _g17(f), _g17(fr)] + [_g17(v) for v in x] + [_g17(v) for v in y])
    out = buf.getvalue()
    out += f"# termination = {trace.termination}\n# iterations = {trace.iterations}\n# gamma = {_g17(trace.gamma)}\n"
    if certificate is not None:
        out += certificate.to_text(prefix="# ")
    return out


__all__ = [
    "ALGOS",
    "ConfigError",
    "DivergenceError",
    "project_box",
    "project_simplex",
    "prox_box_weighted_l1",
    "pgda_step",
    "apgda_weights",
    "apgda_step",
    "SolverConfig",
    "SolveTrace",
    "run",
    "trace_columns",
    "trace_to_csv",
]

"""Stationarity residuals, safe relaxation thresholds and verdicts."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from numbers import Rational
from typing import Optional

import numpy as np

from .penalties import (
    DensitySpec,
    Interval,
    ParameterError,
    density_constants,
    density_limit,
    relax_subgradient,
    second_order_interval,
)
from .problems import FEAS_SLACK, SaddleProblem

DEFAULT_TOL = 1e-6
_KINK_SNAP = 1e-12


class UnsupportedError(ValueError):
    """Certificate requested for a shape the checks do not cover."""


class MissingConstantError(ValueError):
    """A regularity constant needed by a threshold formula is absent."""


# --------------------------------------------------------------------------- residuals


def _require_box_y(problem: SaddleProblem) -> None:
    if problem.y_simplex:
        raise UnsupportedError("residuals require box feasible sets; y lives on a simplex")


def residual_R(problem: SaddleProblem, x, y) -> np.ndarray:
    """Per-coordinate first-order residual of the minimization in ``x``."""
    x = np.asarray(x, dtype=float)
    g = np.asarray(problem.grad_x(x, np.asarray(y, dtype=float)), dtype=float)
    up, lo = problem.x_box.at_upper(x), problem.x_box.at_lower(x)
    return np.where(up, np.maximum(g, 0.0), np.where(lo, np.maximum(-g, 0.0), np.abs(g)))


def residual_S(problem: SaddleProblem, x, y) -> np.ndarray:
    """Per-coordinate first-order residual of the maximization in ``y``."""
    _require_box_y(problem)
    y = np.asarray(y, dtype=float)
    g = np.asarray(problem.grad_y(np.asarray(x, dtype=float), y), dtype=float)
    up, lo = problem.y_box.at_upper(y), problem.y_box.at_lower(y)
    return np.where(up, np.maximum(-g, 0.0), np.where(lo, np.maximum(g, 0.0), np.abs(g)))


def residuals(problem: SaddleProblem, x, y) -> tuple[float, float]:
    """``(p, q) = (sum R_i, sum S_j)``."""
    return float(residual_R(problem, x, y).sum()), float(residual_S(problem, x, y).sum())


def strong_residuals(problem: SaddleProblem, x, y, mu) -> tuple[float, float]:
    """``(p~, q~)``: residuals plus the gap ``max(mu - |v|, 0)`` over nonzero coordinates."""
    if not mu > 0:
        raise ParameterError(f"mu must be positive, got {mu}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    R, S = residual_R(problem, x, y), residual_S(problem, x, y)
    nx, ny = x != 0, y != 0
    pt = np.sum(R[nx] + np.maximum(mu - np.abs(x[nx]), 0.0))
    qt = np.sum(S[ny] + np.maximum(mu - np.abs(y[ny]), 0.0))
    return float(pt), float(qt)


# --------------------------------------------------------------------------- thresholds


def _exact(v) -> bool:
    return isinstance(v, Rational) and not isinstance(v, bool)


def _div(a, b):
    """``a / b`` with ``+inf`` for a positive numerator over zero; exact on rationals."""
    if b == 0 or a == math.inf:
        return math.inf
    if _exact(a) and _exact(b):
        return Fraction(a) / b
    return float(a) / float(b)


def _min(*vals):
    return min(vals, key=lambda v: float(v))


@dataclass(frozen=True)
class MuBounds:
    mu_bar1: Optional[float]
    mu_bar2: Optional[float] = None


def _regularity(problem: SaddleProblem):
    reg = problem.regularity
    if reg is None or reg.tau is None or reg.sigma is None or reg.L_c1 is None:
        raise MissingConstantError("problem lacks (tau, sigma, L_c1)")
    return reg


def mu_bar1(problem: SaddleProblem, spec: DensitySpec = DensitySpec.capped_l1()):
    """``min{tau/alpha, lambda*sigma*rho_lower/L_c1}`` with ``lambda = min(lambda1, lambda2)``."""
    if spec.kind != "capped_l1":
        raise UnsupportedError("mu_bar1 requires the capped-l1 density")
    reg = _regularity(problem)
    lam = min(problem.lambda1, problem.lambda2)
    rho = density_constants(spec).rho_lower
    return _min(_div(reg.tau, spec.alpha), _div(lam * reg.sigma * rho, reg.L_c1))


def mu_bar2(problem: SaddleProblem, spec: DensitySpec):
    """Four-term threshold for densities that are Lipschitz on their support."""
    if not spec.lipschitz_on_support:
        raise UnsupportedError("mu_bar2 is not defined for capped_l1")
    reg = _regularity(problem)
    if reg.L_c2 is None or reg.L_g2 is None or reg.L_h2 is None:
        raise MissingConstantError("mu_bar2 needs L_c2, L_g2 and L_h2")
    k = density_constants(spec)
    a, tau, sig = spec.alpha, reg.tau, reg.sigma
    l1, l2 = problem.lambda1, problem.lambda2
    lam = min(l1, l2)
    t1 = _div(tau, a)
    t2 = math.inf if k.rho2_lower == math.inf else _div(lam * sig * k.rho2_lower, reg.L_c1)
    t3 = _div(l1 * k.rho2_check * sig * sig, _div(tau * reg.L_c2, a) + l1 * k.rho2_upper * reg.L_g2)
    t4 = _div(l2 * k.rho2_check * sig * sig, _div(tau * reg.L_c2, a) + l2 * k.rho2_upper * reg.L_h2)
    return _min(t1, t2, t3, t4)


def mu_bounds(problem: SaddleProblem, spec: Optional[DensitySpec] = None) -> MuBounds:
    b1 = mu_bar1(problem)
    b2 = mu_bar2(problem, spec) if spec is not None and spec.lipschitz_on_support else None
    return MuBounds(b1, b2)


# --------------------------------------------------------------------------- lower bound


@dataclass(frozen=True)
class LowerBoundResult:
    ok: bool
    violations: tuple = ()

    def __bool__(self) -> bool:
        return self.ok


def lower_bound_check(problem: SaddleProblem, x, y, nu) -> LowerBoundResult:
    """Check that no penalty argument lies in the open interval ``(0, nu)``.

    Violations are reported as ``(var, coordinate, branch)`` with branch 0
    for ``g_i`` and 1 for ``g_{n+i}``.
    """
    if not nu > 0:
        raise ParameterError(f"nu must be positive, got {nu}")
    out = []
    for var, terms, v in (("x", problem.g, x), ("y", problem.h, y)):
        vals = terms.values(v)
        for br, i in zip(*np.nonzero((vals > 0) & (vals < nu))):
            out.append((var, int(i), int(br)))
    out.sort(key=lambda t: (t[0], t[1], t[2]))
    return LowerBoundResult(not out, tuple(out))


# --------------------------------------------------------------------------- stationarity


def _normal_cone(box, v) -> Interval:
    up, lo = box.at_upper(v), box.at_lower(v)
    return [
        Interval(0.0, math.inf) if u else Interval(-math.inf, 0.0) if l_ else Interval(0.0, 0.0)
        for u, l_ in zip(up, lo)
    ]


def _kinks(spec: DensitySpec, mu) -> list[float]:
    pts = [0.0, float(mu), float(spec.alpha * mu)]
    return pts


def _snap(t: float, kinks: list[float]) -> float:
    for k in kinks:
        if abs(t - k) <= _KINK_SNAP * max(1.0, abs(k)):
            return k
    return t


def _plus_sub(t: float) -> Interval:
    if t > 0:
        return Interval(1.0, 1.0)
    if t < 0:
        return Interval(0.0, 0.0)
    return Interval(0.0, 1.0)


def _dc_concave_slopes(spec: DensitySpec, t: float, mu: float, rho0: float) -> set[float]:
    """One-sided derivatives of ``rho0 * t_+ / mu - r(t, mu)``.

    This concave-part derivative set is the selection set of the DC split;
    for capped-l1 at ``t = mu`` it holds both branch slopes.
    """
    if t < 0:
        return {0.0}
    if t == 0:
        return {0.0, float(rho0 - density_limit(spec, 0.0, "right")) / mu}
    s = t / mu
    left = (rho0 - float(density_limit(spec, s, "left"))) / mu
    right = (rho0 - float(density_limit(spec, s, "right"))) / mu
    return {left, right}


@dataclass
class StationarityReport:
    ok: bool
    slack_x: np.ndarray
    slack_y: np.ndarray
    second_order_x: Optional[np.ndarray] = None
    second_order_y: Optional[np.ndarray] = None
    failures: list = field(default_factory=list)
    tol: float = DEFAULT_TOL

    def __bool__(self) -> bool:
        return self.ok


def _check_shapes(problem: SaddleProblem) -> None:
    if problem.y_simplex:
        raise UnsupportedError("stationarity checks require box feasible sets")


def _d_stat_side(terms, v, grad, lam, box, spec, mu, sign: float) -> np.ndarray:
    rho0 = float(density_limit(spec, 0.0, "right"))
    kinks = _kinks(spec, mu)
    vals = terms.values(v)
    cones = _normal_cone(box, v)
    slack = np.zeros(v.size)
    for i in range(v.size):
        ts = [_snap(float(vals[k, i]), kinks) for k in (0, 1)]
        sl = [float(terms.slope[k, i]) for k in (0, 1)]
        rhs = Interval(sign * grad[i], sign * grad[i]) + cones[i]
        for t, s in zip(ts, sl):
            rhs = rhs + _plus_sub(t).scale(lam * rho0 / mu * s)
        best = math.inf
        for z0, z1 in product(_dc_concave_slopes(spec, ts[0], mu, rho0), _dc_concave_slopes(spec, ts[1], mu, rho0)):
            lhs = lam * (z0 * sl[0] + z1 * sl[1])
            best = min(best, rhs.distance(lhs))
        slack[i] = best
    return slack


def weak_d_stationarity_check(
    problem: SaddleProblem, x, y, mu, spec: DensitySpec = DensitySpec.capped_l1(), tol: float = DEFAULT_TOL
) -> StationarityReport:
    """Existence of branch selections making both first-order DC inclusions hold.

    The relaxation is split as ``rho0 * t_+ / mu - h(t)`` with ``h`` convex;
    for capped-l1 this is ``t_+/mu - (t - mu)_+/mu``. For each coordinate
    the slack is the distance of the best selection's left-hand side to the
    interval of the right-hand side; all slacks must be at most ``tol``.
    """
    _check_shapes(problem)
    if not mu > 0:
        raise ParameterError(f"mu must be positive, got {mu}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    gx = np.asarray(problem.grad_x(x, y), dtype=float)
    gy = np.asarray(problem.grad_y(x, y), dtype=float)
    sx = _d_stat_side(problem.g, x, gx, problem.lambda1, problem.x_box, spec, float(mu), 1.0)
    sy = _d_stat_side(problem.h, y, gy, problem.lambda2, problem.y_box, spec, float(mu), -1.0)
    fails = [("x", int(i)) for i in np.flatnonzero(sx > tol)] + [("y", int(j)) for j in np.flatnonzero(sy > tol)]
    return StationarityReport(not fails, sx, sy, failures=fails, tol=tol)


def _first_order_side(terms, v, grad, lam, box, spec, mu, sign: float) -> np.ndarray:
    kinks = _kinks(spec, mu)
    vals = terms.values(v)
    cones = _normal_cone(box, v)
    slack = np.zeros(v.size)
    for i in range(v.size):
        iv = Interval(sign * grad[i], sign * grad[i]) + cones[i]
        for k in (0, 1):
            t = _snap(float(vals[k, i]), kinks)
            iv = iv + relax_subgradient(spec, t, mu).scale(lam * float(terms.slope[k, i]))
        slack[i] = iv.distance(0.0)
    return slack


def _second_order_side(terms, v, curv, lam, spec, mu, tau, sign: float):
    kinks = _kinks(spec, mu)
    vals = terms.values(v)
    best = np.full(v.size, math.inf)
    unique_fail = []
    for i in range(v.size):
        active = [k for k in (0, 1) if 0 < vals[k, i] < tau]
        if not active:
            continue
        if len(active) > 1:
            unique_fail.append(i)
            best[i] = -math.inf
            continue
        k = active[0]
        t = _snap(float(vals[k, i]), kinks)
        s = float(terms.slope[k, i])
        iv = second_order_interval(spec, t, mu).scale(lam * s * s) + sign * float(curv[i])
        best[i] = iv.hi
    return best, unique_fail


def weak_second_order_check(
    problem: SaddleProblem, x, y, spec: DensitySpec, mu, tol: float = DEFAULT_TOL
) -> StationarityReport:
    """First-order inclusions with the relaxed subgradient plus second-order sign test.

    For every coordinate whose penalty argument lies in ``(0, tau)`` some
    element of the generalized second-order interval must be nonnegative.
    With capped-l1 this is the second-order analogue (the density has zero
    slope on its support).
    """
    _check_shapes(problem)
    if not mu > 0:
        raise ParameterError(f"mu must be positive, got {mu}")
    if problem.hess_xx_diag is None or problem.hess_yy_diag is None:
        raise UnsupportedError("weak second-order check needs diagonal curvature evaluators")
    reg = _regularity(problem)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    mu = float(mu)
    gx = np.asarray(problem.grad_x(x, y), dtype=float)
    gy = np.asarray(problem.grad_y(x, y), dtype=float)
    sx = _first_order_side(problem.g, x, gx, problem.lambda1, problem.x_box, spec, mu, 1.0)
    sy = _first_order_side(problem.h, y, gy, problem.lambda2, problem.y_box, spec, mu, -1.0)
    hx = np.asarray(problem.hess_xx_diag(x, y), dtype=float)
    hy = np.asarray(problem.hess_yy_diag(x, y), dtype=float)
    wx, ux = _second_order_side(problem.g, x, hx, problem.lambda1, spec, mu, float(reg.tau), 1.0)
    wy, uy = _second_order_side(problem.h, y, hy, problem.lambda2, spec, mu, float(reg.tau), -1.0)
    fails = [("x", int(i)) for i in np.flatnonzero(sx > tol)] + [("y", int(j)) for j in np.flatnonzero(sy > tol)]
    fails += [("x2", int(i)) for i in np.flatnonzero(wx < -tol)] + [("y2", int(j)) for j in np.flatnonzero(wy < -tol)]
    return StationarityReport(not fails, sx, sy, wx, wy, fails, tol)


# --------------------------------------------------------------------------- certificate

VERDICTS = ("SaddleOfSmooth", "MuStrongLocalSaddle", "None")


@dataclass
class Certificate:
    p: float
    q: float
    p_tilde: float
    q_tilde: float
    per_coord_R: np.ndarray
    per_coord_S: np.ndarray
    lower_bound_ok: bool
    violations: tuple
    verdict: str
    mu: float
    tol: float

    @property
    def is_saddle_of_smooth(self) -> bool:
        return self.p <= self.tol and self.q <= self.tol

    @property
    def is_mu_strong(self) -> bool:
        return self.p_tilde <= self.tol and self.q_tilde <= self.tol

    def to_lines(self) -> list[str]:
        viol = ";".join(f"{v}{i}.{b}" for v, i, b in self.violations) or "none"
        return [
            f"verdict = {self.verdict}",
            f"p = {self.p:.17g}",
            f"q = {self.q:.17g}",
            f"p_tilde = {self.p_tilde:.17g}",
            f"q_tilde = {self.q_tilde:.17g}",
            f"mu = {self.mu:.17g}",
            f"tol = {self.tol:.17g}",
            f"lower_bound_ok = {str(self.lower_bound_ok).lower()}",
            f"violations = {viol}",
        ]

    def to_text(self, prefix: str = "") -> str:
        return "".join(f"{prefix}{line}\n" for line in self.to_lines())


def certify(problem: SaddleProblem, x, y, mu, tol: float = DEFAULT_TOL) -> Certificate:
    """Residual-based verdict at ``(x, y)``.

    ``SaddleOfSmooth`` when ``c`` is smooth and ``p, q <= tol``; otherwise
    ``MuStrongLocalSaddle`` when ``p~, q~ <= tol``; otherwise ``None``.
    Both flags are exposed separately on the certificate.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    problem.check_feasible(x, y)
    R, S = residual_R(problem, x, y), residual_S(problem, x, y)
    pt, qt = strong_residuals(problem, x, y, mu)
    lb = lower_bound_check(problem, x, y, mu)
    cert = Certificate(
        float(R.sum()), float(S.sum()), pt, qt, R, S, lb.ok, lb.violations, "None", float(mu), float(tol)
    )
    if problem.smooth_c and cert.is_saddle_of_smooth:
        cert.verdict = "SaddleOfSmooth"
    elif cert.is_mu_strong:
        cert.verdict = "MuStrongLocalSaddle"
    return cert


__all__ = [
    "DEFAULT_TOL",
    "UnsupportedError",
    "MissingConstantError",
    "residual_R",
    "residual_S",
    "residuals",
    "strong_residuals",
    "MuBounds",
    "mu_bar1",
    "mu_bar2",
    "mu_bounds",
    "LowerBoundResult",
    "lower_bound_check",
    "StationarityReport",
    "weak_d_stationarity_check",
    "weak_second_order_check",
    "Certificate",
    "certify",
    "FEAS_SLACK",
]

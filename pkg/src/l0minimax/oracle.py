"""Brute-force grid oracle for saddle, local saddle and minimax points.

Intended for instances with at most three variables in total. Grids always
contain the breakpoints where the objective jumps, so for piecewise
bilinear examples the grid answers coincide with the continuous ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Callable, Optional, Sequence

import numpy as np

from .certify import lower_bound_check
from .penalties import DensitySpec, ParameterError
from .problems import SaddleProblem, eval_f, eval_fR

TIE_TOL = 1e-12
MAX_PAIRS = 10**7


class GridTooLargeError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    """Per-axis sorted grid values, x axes first then y axes."""

    axes: tuple
    step: Fraction
    n: int

    @property
    def x_axes(self):
        return self.axes[: self.n]

    @property
    def y_axes(self):
        return self.axes[self.n :]


def _axis(lo: float, hi: float, step: Fraction, extra: Sequence[float]) -> np.ndarray:
    lo_f, hi_f = Fraction(lo), Fraction(hi)
    pts = set()
    k = 0
    while lo_f + k * step <= hi_f:
        pts.add(float(lo_f + k * step))
        k += 1
    pts.update(float(v) for v in (lo, hi))
    pts.update(float(v) for v in extra if lo - TIE_TOL <= float(v) <= hi + TIE_TOL)
    vals = np.array(sorted(pts))
    keep = np.concatenate([[True], np.diff(vals) > TIE_TOL])
    return np.clip(vals[keep], lo, hi)


def build_grid(
    problem: SaddleProblem,
    step,
    breakpoints: Optional[Sequence[float]] = None,
    spec: Optional[DensitySpec] = None,
    mu: Optional[float] = None,
) -> GridSpec:
    """Grid containing box endpoints, 0, penalty zeros and relaxation thresholds.

    ``step`` is a rational refinement step (``Fraction``, int, or a string
    such as ``"1/4"``). When ``spec`` and ``mu`` are given, the points where
    a penalty argument equals ``mu`` or ``alpha * mu`` are added as well.
    """
    step = Fraction(step)
    if step <= 0:
        raise ParameterError("grid step must be positive")
    axes = []
    levels = [0.0]
    if spec is not None and mu is not None:
        levels += [float(mu), float(spec.alpha * mu)]
    for terms, box in ((problem.g, problem.x_box), (problem.h, problem.y_box)):
        for i in range(box.dim):
            extra = [0.0] + list(breakpoints or [])
            for k in (0, 1):
                s, c = terms.slope[k, i], terms.intercept[k, i]
                if s != 0:
                    extra += [(lev - c) / s for lev in levels]
            axes.append(_axis(box.lower[i], box.upper[i], step, extra))
    total = np.prod([a.size for a in axes], dtype=float)
    if total > MAX_PAIRS:
        raise GridTooLargeError(f"grid has {total:.0f} point pairs (limit {MAX_PAIRS})")
    return GridSpec(tuple(axes), step, problem.n)


@dataclass
class GridEval:
    X: np.ndarray
    Y: np.ndarray
    F: np.ndarray


def evaluate_grid(problem: SaddleProblem, grid: GridSpec, objective: Optional[Callable] = None) -> GridEval:
    X = np.array(list(product(*grid.x_axes)), dtype=float).reshape(-1, problem.n)
    Y = np.array(list(product(*grid.y_axes)), dtype=float).reshape(-1, problem.m)
    if X.shape[0] * Y.shape[0] > MAX_PAIRS:
        raise GridTooLargeError("grid too large")
    fn = objective or (lambda x, y: eval_f(problem, x, y).total)
    F = np.array([[fn(x, y) for y in Y] for x in X], dtype=float)
    return GridEval(X, Y, F)


def _pt(x, y) -> tuple:
    return tuple(float(v) for v in x) + tuple(float(v) for v in y)


@dataclass
class OracleReport:
    minmax_value: float
    maxmin_value: float
    saddle_set: list
    global_minimax_set: list
    local_saddle_candidates: list = field(default_factory=list)
    gap_witness: Optional[tuple] = None
    delta: Optional[float] = None

    def to_lines(self) -> list[str]:
        fmt = lambda pts: ";".join("(" + ",".join(f"{v:.17g}" for v in p) + ")" for p in pts) or "none"  # noqa: E731
        lines = [
            f"minmax_value = {self.minmax_value:.17g}",
            f"maxmin_value = {self.maxmin_value:.17g}",
            f"saddle_set = {fmt(self.saddle_set)}",
            f"global_minimax_set = {fmt(self.global_minimax_set)}",
        ]
        if self.delta is not None:
            lines.append(f"delta = {self.delta:.17g}")
            lines.append(f"local_saddle_candidates = {fmt([p for p, _ in self.local_saddle_candidates])}")
        if self.gap_witness is not None:
            lines.append(f"gap_witness = {fmt(list(self.gap_witness))}")
        return lines


def _saddle_mask(F: np.ndarray) -> np.ndarray:
    rowmax = F.max(axis=1, keepdims=True)
    colmin = F.min(axis=0, keepdims=True)
    return (F >= rowmax - TIE_TOL) & (F <= colmin + TIE_TOL)


def grid_minmax(
    problem: SaddleProblem,
    grid: GridSpec,
    objective: Optional[Callable] = None,
    delta: Optional[float] = None,
    ev: Optional[GridEval] = None,
) -> OracleReport:
    """Exact min-max / max-min values and solution sets on the grid."""
    ev = ev or evaluate_grid(problem, grid, objective)
    X, Y, F = ev.X, ev.Y, ev.F
    p = F.max(axis=1)
    q = F.min(axis=0)
    vmin, vmax = p.min(), q.max()
    saddles = [_pt(X[i], Y[j]) for i, j in zip(*np.nonzero(_saddle_mask(F)))]
    minimax = []
    for i in np.flatnonzero(p <= vmin + TIE_TOL):
        for j in np.flatnonzero(F[i] >= p[i] - TIE_TOL):
            minimax.append(_pt(X[i], Y[j]))
    rep = OracleReport(float(vmin), float(vmax), sorted(saddles), sorted(minimax))
    if vmin > vmax + TIE_TOL:
        i, j = int(np.argmin(p)), int(np.argmax(q))
        rep.gap_witness = (_pt(X[i], Y[np.argmax(F[i])]), _pt(X[np.argmin(F[:, j])], Y[j]))
    if delta is not None:
        rep.delta = float(delta)
        rep.local_saddle_candidates = [(pt, float(delta)) for pt in local_saddle_scan(problem, grid, delta, ev=ev)]
    return rep


def _neighbors(P: np.ndarray, delta: float) -> np.ndarray:
    d = np.linalg.norm(P[:, None, :] - P[None, :, :], axis=2)
    return d <= delta + TIE_TOL


def local_saddle_scan(
    problem: SaddleProblem,
    grid: GridSpec,
    delta: Optional[float] = None,
    objective: Optional[Callable] = None,
    ev: Optional[GridEval] = None,
) -> list:
    """Grid points satisfying the saddle inequalities against grid points within ``delta``.

    ``delta`` defaults to twice the refinement step.
    """
    delta = float(2 * grid.step) if delta is None else float(delta)
    if not delta > 0:
        raise ParameterError("delta must be positive")
    ev = ev or evaluate_grid(problem, grid, objective)
    X, Y, F = ev.X, ev.Y, ev.F
    NX, NY = _neighbors(X, delta), _neighbors(Y, delta)
    ymax = np.stack([np.where(NY[j][None, :], F, -np.inf).max(axis=1) for j in range(Y.shape[0])], axis=1)
    xmin = np.stack([np.where(NX[i][:, None], F, np.inf).min(axis=0) for i in range(X.shape[0])], axis=0)
    ok = (F >= ymax - TIE_TOL) & (F <= xmin + TIE_TOL)
    return sorted(_pt(X[i], Y[j]) for i, j in zip(*np.nonzero(ok)))


def local_minimax_check(
    problem: SaddleProblem,
    grid: GridSpec,
    point: Sequence[float],
    delta: float,
    objective: Optional[Callable] = None,
    ev: Optional[GridEval] = None,
) -> bool:
    """Grid test of the local minimax inequalities with ``pi(delta) = delta``.

    Requires ``f(x*, y) <= f(x*, y*)`` for grid ``y`` within ``delta`` of
    ``y*`` and ``f(x*, y*) <= max f(x, y')`` over grid ``y'`` within
    ``delta`` of ``y*`` for every grid ``x`` within ``delta`` of ``x*``.
    """
    ev = ev or evaluate_grid(problem, grid, objective)
    X, Y, F = ev.X, ev.Y, ev.F
    pt = np.asarray(point, dtype=float)
    xs, ys = pt[: problem.n], pt[problem.n :]
    i = int(np.argmin(np.linalg.norm(X - xs, axis=1)))
    j = int(np.argmin(np.linalg.norm(Y - ys, axis=1)))
    if np.linalg.norm(X[i] - xs) > TIE_TOL or np.linalg.norm(Y[j] - ys) > TIE_TOL:
        raise ValueError("point is not on the grid")
    ny = np.linalg.norm(Y - Y[j], axis=1) <= delta + TIE_TOL
    nx = np.linalg.norm(X - X[i], axis=1) <= delta + TIE_TOL
    v = F[i, j]
    if np.any(F[i, ny] > v + TIE_TOL):
        return False
    return bool(np.all(F[np.ix_(nx, ny)].max(axis=1) >= v - TIE_TOL))


def strong_local_filter(candidates, problem: SaddleProblem, nu: float) -> list:
    """Keep candidates whose penalty arguments avoid ``(0, nu)``."""
    out = []
    for c in candidates:
        pt = c[0] if isinstance(c, tuple) and len(c) == 2 and isinstance(c[0], tuple) else c
        pt = np.asarray(pt, dtype=float)
        if lower_bound_check(problem, pt[: problem.n], pt[problem.n :], nu).ok:
            out.append(tuple(float(v) for v in pt))
    return out


@dataclass
class ExactnessReport:
    saddle_f: list
    saddle_fR: list
    saddle_equal: bool
    local_fR: list
    strong_local_f: list
    local_contained: bool
    nu: float
    relaxed_saddles_bounded: bool
    delta: float


def relaxation_exactness_probe(
    problem: SaddleProblem, spec: DensitySpec, mu: float, grid: GridSpec, delta: Optional[float] = None
) -> ExactnessReport:
    """Compare saddle structure of the original and relaxed objectives on one grid."""
    if not (mu is not None and mu > 0):
        raise ParameterError(f"mu must be positive, got {mu}")
    delta = float(2 * grid.step) if delta is None else float(delta)
    ev_f = evaluate_grid(problem, grid)
    ev_r = evaluate_grid(problem, grid, lambda x, y: eval_fR(problem, x, y, spec, mu))
    sf = grid_minmax(problem, grid, ev=ev_f).saddle_set
    sr = grid_minmax(problem, grid, ev=ev_r).saddle_set
    nu = float(spec.alpha * mu)
    loc_r = local_saddle_scan(problem, grid, delta, ev=ev_r)
    strong_f = strong_local_filter(local_saddle_scan(problem, grid, delta, ev=ev_f), problem, nu)
    bounded = all(
        lower_bound_check(problem, np.array(p[: problem.n]), np.array(p[problem.n :]), nu).ok for p in sr
    )
    return ExactnessReport(
        saddle_f=sf,
        saddle_fR=sr,
        saddle_equal=sf == sr,
        local_fR=loc_r,
        strong_local_f=strong_f,
        local_contained=set(loc_r) <= set(strong_f),
        nu=nu,
        relaxed_saddles_bounded=bounded,
        delta=delta,
    )


__all__ = [
    "GridSpec",
    "GridTooLargeError",
    "build_grid",
    "evaluate_grid",
    "OracleReport",
    "grid_minmax",
    "local_saddle_scan",
    "local_minimax_check",
    "strong_local_filter",
    "ExactnessReport",
    "relaxation_exactness_probe",
]

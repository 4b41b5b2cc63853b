"""Smoothing functions for the plus function and the absolute value.

Four closed-form smoothers ``phi(s, eps)`` of ``s_+`` are available under the
names ``logexp``, ``sqrt``, ``pquad`` (default) and ``exp``. The absolute
value is smoothed by ``theta(s, eps) = phi(s, eps) + phi(-s, eps)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

VARIANTS = ("logexp", "sqrt", "pquad", "exp")
DEFAULT_VARIANT = "pquad"

# sup_s |phi(s, eps) - s_+| = KAPPA[variant] * eps, attained at s = 0
KAPPA = {"logexp": math.log(2.0), "sqrt": 1.0, "pquad": 0.25, "exp": 0.5}

_CUT = 36.0


def _variant(v: str) -> str:
    key = str(v).strip().lower()
    aliases = {"sqrtshift": "sqrt", "piecewisequad": "pquad", "exppiece": "exp", "log": "logexp"}
    key = aliases.get(key, key)
    if key not in VARIANTS:
        raise ValueError(f"unknown smoothing variant {v!r}; expected one of {VARIANTS}")
    return key


def _check_eps(eps):
    arr = np.asarray(eps, dtype=float)
    if not (np.all(np.isfinite(arr)) and np.all(arr > 0)):
        raise ValueError(f"eps must be positive and finite, got {eps}")
    return float(arr) if arr.ndim == 0 else arr


def _out(res: np.ndarray, s):
    return float(res) if np.ndim(s) == 0 else res


def smooth_plus(variant: str, s, eps):
    """Smoothed plus function ``phi(s, eps)``."""
    v, eps = _variant(variant), _check_eps(eps)
    x = np.asarray(s, dtype=float)
    z = x / eps
    with np.errstate(over="ignore", invalid="ignore"):
        if v == "logexp":
            mid = x + eps * np.log1p(np.exp(-np.clip(z, -_CUT, _CUT)))
            res = np.where(z > _CUT, x + eps * np.exp(-np.abs(z)), np.where(z < -_CUT, eps * np.exp(-np.abs(z)), mid))
        elif v == "sqrt":
            r = np.hypot(x, 2 * eps)
            # cancellation-free form for negative s
            res = np.where(x >= 0, (x + r) / 2, 2 * eps * eps / np.where(r - x > 0, r - x, 1.0))
        elif v == "pquad":
            res = np.where(np.abs(x) > eps, np.maximum(x, 0.0), (x + eps) ** 2 / (4 * eps))
        else:
            e = np.exp(-np.abs(z))
            res = np.where(x > 0, x + eps / 2 * e, eps / 2 * e)
    return _out(res, s)


def smooth_plus_grad(variant: str, s, eps):
    """Derivative of :func:`smooth_plus` in ``s``; always within ``[0, 1]``."""
    v, eps = _variant(variant), _check_eps(eps)
    x = np.asarray(s, dtype=float)
    z = x / eps
    with np.errstate(over="ignore", invalid="ignore"):
        if v == "logexp":
            res = 0.5 * (1 + np.tanh(z / 2))
        elif v == "sqrt":
            res = 0.5 * (1 + x / np.hypot(x, 2 * eps))
        elif v == "pquad":
            res = np.where(np.abs(x) > eps, (x > 0).astype(float), (x + eps) / (2 * eps))
        else:
            e = np.exp(-np.abs(z))
            res = np.where(x > 0, 1 - e / 2, e / 2)
    return _out(np.clip(res, 0.0, 1.0), s)


def smooth_abs(variant: str, s, eps):
    """Smoothed absolute value ``theta(s, eps) = phi(s) + phi(-s)``."""
    x = np.asarray(s, dtype=float)
    return _out(np.asarray(smooth_plus(variant, x, eps) + smooth_plus(variant, -x, eps)), s)


def smooth_abs_grad(variant: str, s, eps):
    x = np.asarray(s, dtype=float)
    return _out(np.asarray(smooth_plus_grad(variant, x, eps) - smooth_plus_grad(variant, -x, eps)), s)


def plus_clarke(s0: float) -> tuple[float, float]:
    """Clarke subdifferential of ``s_+`` at ``s0`` as ``(lo, hi)``."""
    if s0 > 0:
        return 1.0, 1.0
    if s0 < 0:
        return 0.0, 0.0
    return 0.0, 1.0


@dataclass
class ConsistencyReport:
    s0: float
    clarke: tuple[float, float]
    limits: list[float] = field(default_factory=list)
    max_violation: float = 0.0
    tol: float = 1e-6

    @property
    def ok(self) -> bool:
        return self.max_violation <= self.tol


def consistency_probe(variant: str, s0: float, sequences, tol: float = 1e-6) -> ConsistencyReport:
    """Check gradient consistency of a smoother at ``s0``.

    Each sequence is an iterable of ``(s, eps)`` pairs tending to
    ``(s0, 0)``; its limit is estimated by the gradient at the last term.
    The report records how far any limit falls outside the Clarke set of
    ``s_+`` at ``s0``; ``ok`` allows ``tol`` for the finite truncation
    (the ``sqrt`` smoother converges only algebraically).
    """
    lo, hi = plus_clarke(s0)
    rep = ConsistencyReport(s0=float(s0), clarke=(lo, hi), tol=tol)
    for seq in sequences:
        seq = list(seq)
        if not seq:
            continue
        s, eps = seq[-1]
        g = float(smooth_plus_grad(variant, s, eps))
        rep.limits.append(g)
        rep.max_violation = max(rep.max_violation, lo - g, g - hi, 0.0)
    return rep


def dr_regression_smoothed(problem, x, y, eps, variant: str | None = None):
    """Smoothed distributionally robust regression objective.

    Returns ``(value, grad_x, grad_y)`` of
    ``sum_i y_i * loss_i(x) - beta * phi(||A y - b||^2 - delta^2, eps)``
    where ``loss_i`` is the smoothed l1 residual ``theta(c_i^T x - d_i)`` or
    the smoothed censored residual ``(phi(c_i^T x) - d_i)^2``.
    """
    data = problem.params
    variant = variant or data.get("variant", DEFAULT_VARIANT)
    C = np.asarray(data["C"], dtype=float)
    d = np.asarray(data["d"], dtype=float)
    A = np.asarray(data["A"], dtype=float)
    b = np.asarray(data["b"], dtype=float)
    beta, delta = float(data["beta"]), float(data["delta"])
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != (C.shape[1],) or y.shape != (C.shape[0],):
        raise ValueError(f"dimension mismatch: x {x.shape}, y {y.shape}, C {C.shape}")
    u = C @ x
    if data["loss"] == "l1":
        loss = smooth_abs(variant, u - d, eps)
        dloss = smooth_abs_grad(variant, u - d, eps)
    else:
        pu = smooth_plus(variant, u, eps)
        loss = (pu - d) ** 2
        dloss = 2 * (pu - d) * smooth_plus_grad(variant, u, eps)
    r = A @ y - b
    w = r @ r - delta**2
    value = float(y @ loss - beta * smooth_plus(variant, w, eps))
    gx = C.T @ (y * dloss)
    gy = loss - beta * smooth_plus_grad(variant, w, eps) * 2 * (A.T @ r)
    return value, gx, gy

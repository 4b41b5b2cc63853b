"""Density-built continuous relaxations of the step function ``(t_+)^0``.

Every relaxation has the form ``r(t, mu) = int_0^{t/mu} rho(s) ds`` for a
density ``rho`` supported on ``[0, alpha]``. Four densities are provided:

* ``capped_l1`` -- uniform density on ``[0, 1]``
* ``scad``      -- scaled SCAD, flat then linearly decaying on ``[0, alpha]``
* ``mcp``       -- scaled MCP, linearly decaying on ``[0, alpha]``
* ``hard``      -- scaled hard thresholding, ``2(1 - s)`` on ``(0, 1)``

Scalar inputs that are ``int`` or ``Fraction`` are evaluated in exact
rational arithmetic; arrays are evaluated elementwise in floating point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational
from typing import Optional

import numpy as np

__all__ = [
    "KINDS",
    "ParameterError",
    "UnsupportedKindError",
    "DensitySpec",
    "DensityConstants",
    "Interval",
    "density_value",
    "relax_value",
    "relax_subgradient",
    "relax_second_order",
    "dc_split_capped_l1",
    "density_constants",
    "density_limit",
    "second_order_interval",
    "scad_function",
    "mcp_function",
]

KINDS = ("capped_l1", "scad", "mcp", "hard")

_ALIASES = {
    "cappedl1": "capped_l1",
    "capped": "capped_l1",
    "scadscaled": "scad",
    "mcpscaled": "mcp",
    "hardthreshold": "hard",
}


class ParameterError(ValueError):
    """Invalid numeric parameter (for instance a nonpositive ``mu``)."""


class UnsupportedKindError(ValueError):
    """Operation not defined for the requested density kind."""


def _exact(v) -> bool:
    return isinstance(v, Rational) and not isinstance(v, bool)


def _check_mu(mu) -> None:
    if _exact(mu):
        if mu <= 0:
            raise ParameterError(f"mu must be positive, got {mu}")
        return
    try:
        fmu = float(mu)
    except (TypeError, ValueError) as exc:
        raise ParameterError(f"mu must be a real number, got {mu!r}") from exc
    if not (math.isfinite(fmu) and fmu > 0):
        raise ParameterError(f"mu must be positive and finite, got {mu}")


@dataclass(frozen=True)
class Interval:
    """Closed interval ``[lo, hi]``; ``lo`` may be ``-inf`` and ``hi`` ``+inf``."""

    lo: float
    hi: float

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    @classmethod
    def point(cls, v) -> "Interval":
        return cls(v, v)

    @classmethod
    def hull(cls, *values) -> "Interval":
        return cls(min(values), max(values))

    def __add__(self, other):
        if isinstance(other, Interval):
            return Interval(self.lo + other.lo, self.hi + other.hi)
        return Interval(self.lo + other, self.hi + other)

    __radd__ = __add__

    def scale(self, k) -> "Interval":
        a, b = self.lo * k, self.hi * k
        return Interval(min(a, b), max(a, b))

    def contains(self, v, tol: float = 0.0) -> bool:
        return self.lo - tol <= v <= self.hi + tol

    def distance(self, v) -> float:
        """Distance from ``v`` to the interval (0 when inside)."""
        if v < self.lo:
            return self.lo - v
        if v > self.hi:
            return v - self.hi
        return 0 * v


@dataclass(frozen=True)
class DensitySpec:
    """A density kind together with its support endpoint ``alpha``.

    ``alpha`` is fixed to 1 for ``capped_l1`` and ``hard``, must exceed 1
    for ``scad`` and must be positive for ``mcp``.
    """

    kind: str
    alpha: float = 1

    def __post_init__(self):
        kind = str(self.kind).strip().lower().replace("-", "_")
        kind = _ALIASES.get(kind.replace("_", ""), kind)
        if kind not in KINDS:
            raise ParameterError(f"unknown density kind {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "kind", kind)
        a = self.alpha
        if not _exact(a):
            a = float(a)
            if not math.isfinite(a):
                raise ParameterError(f"alpha must be finite, got {a}")
            object.__setattr__(self, "alpha", a)
        if kind in ("capped_l1", "hard") and a != 1:
            raise ParameterError(f"{kind} requires alpha = 1, got {a}")
        if kind == "scad" and not a > 1:
            raise ParameterError(f"scad requires alpha > 1, got {a}")
        if kind == "mcp" and not a > 0:
            raise ParameterError(f"mcp requires alpha > 0, got {a}")

    @classmethod
    def capped_l1(cls) -> "DensitySpec":
        return cls("capped_l1", 1)

    @classmethod
    def scad(cls, alpha) -> "DensitySpec":
        return cls("scad", alpha)

    @classmethod
    def mcp(cls, alpha) -> "DensitySpec":
        return cls("mcp", alpha)

    @classmethod
    def hard(cls) -> "DensitySpec":
        return cls("hard", 1)

    @property
    def lipschitz_on_support(self) -> bool:
        """True when the density is Lipschitz on its support (all kinds except capped-l1)."""
        return self.kind != "capped_l1"


# Each piece is (a, b, rho, drho): rho and its derivative on the open interval (a, b).
_Piece = tuple


def _pieces(spec: DensitySpec) -> list[_Piece]:
    a = spec.alpha
    one = Fraction(1) if _exact(a) else 1.0
    if spec.kind == "capped_l1":
        return [(0, 1, lambda s: one, lambda s: 0 * one)]
    if spec.kind == "scad":
        flat = 2 * one / (a + 1)
        slope = -2 * one / ((a - 1) * (a + 1))
        return [
            (0, 1, lambda s: flat, lambda s: 0 * one),
            (1, a, lambda s: (2 * a - 2 * s) / ((a - 1) * (a + 1)), lambda s: slope),
        ]
    if spec.kind == "mcp":
        return [(0, a, lambda s: 2 * one / a - 2 * s / (a * a), lambda s: -2 * one / (a * a))]
    return [(0, 1, lambda s: 2 * (one - s), lambda s: -2 * one)]


def _one_sided(pieces, s, side: str, which: int):
    """Limit of piece entry ``which`` (2 = rho, 3 = rho') from ``side``."""
    for p in pieces:
        lo, hi = p[0], p[1]
        if (side == "right" and lo <= s < hi) or (side == "left" and lo < s <= hi):
            return p[which](s)
    return 0 * s


def _density_scalar(spec: DensitySpec, s):
    a = spec.alpha
    if spec.kind == "capped_l1":
        return 1 if 0 <= s <= 1 else 0
    if spec.kind == "scad":
        if 0 <= s <= 1:
            return (Fraction(2) if _exact(s) and _exact(a) else 2.0) / (a + 1)
        if 1 < s <= a:
            return (2 * a - 2 * s) / ((a - 1) * (a + 1))
        return 0
    if spec.kind == "mcp":
        if 0 <= s <= a:
            two = Fraction(2) if _exact(s) and _exact(a) else 2.0
            return two / a - 2 * s / (a * a)
        return 0
    if 0 < s < 1:
        return 2 * (1 - s)
    return 0


def density_value(spec: DensitySpec, s):
    """Density ``rho(s)``; zero outside ``[0, alpha]``.

    Examples
    --------
    >>> density_value(DensitySpec.hard(), 0.25)
    1.5
    """
    if np.ndim(s) == 0:
        return _density_scalar(spec, s if _exact(s) else float(s))
    arr = np.asarray(s, dtype=float)
    return np.vectorize(lambda v: float(_density_scalar(spec, v)), otypes=[float])(arr)


def _relax_scalar(spec: DensitySpec, t, mu):
    if t <= 0:
        return 0 * t
    a = spec.alpha
    # compare t against alpha*mu directly so that the exact regime is exact
    if t >= a * mu:
        return 0 * t + 1
    s = t / mu
    if spec.kind == "capped_l1":
        val = s
    elif spec.kind == "scad":
        if s <= 1:
            val = 2 * s / (a + 1)
        else:
            val = (2 * a * s - s * s - 1) / ((a - 1) * (a + 1))
    elif spec.kind == "mcp":
        val = 2 * s / a - s * s / (a * a)
    else:
        val = 1 - (1 - s) ** 2
    return min(val, 0 * val + 1)


def relax_value(spec: DensitySpec, t, mu):
    """Relaxation ``r(t, mu)`` in closed form; lies in ``[0, 1]``.

    Equals ``(t_+)^0`` whenever ``t <= 0`` or ``t >= alpha * mu`` and never
    exceeds it elsewhere.
    """
    _check_mu(mu)
    if np.ndim(t) == 0:
        if _exact(t) and _exact(mu):
            return _relax_scalar(spec, t, mu)
        return float(_relax_scalar(spec, float(t), float(mu)))
    arr = np.asarray(t, dtype=float)
    fmu = float(mu)
    return np.vectorize(lambda v: float(_relax_scalar(spec, v, fmu)), otypes=[float])(arr)


def _coerce(iv: Interval, exact: bool) -> Interval:
    return iv if exact else Interval(float(iv.lo), float(iv.hi))


def relax_subgradient(spec: DensitySpec, t, mu) -> Interval:
    """Hull of the one-sided limits of ``rho(t/mu)/mu`` at ``t``."""
    _check_mu(mu)
    exact = _exact(t) and _exact(mu)
    if t < 0:
        return _coerce(Interval.point(0 * t), exact)
    s = t / mu
    pieces = _pieces(spec)
    left = 0 * s if t == 0 else _one_sided(pieces, s, "left", 2)
    right = _one_sided(pieces, s, "right", 2)
    return _coerce(Interval.hull(left / mu, right / mu), exact)


def _second_order(spec: DensitySpec, t, mu) -> Interval:
    # At the support endpoint s = alpha only the limit from inside the
    # support is used; interior kinks take the hull of both sides.
    exact = _exact(t) and _exact(mu)
    s = t / mu
    a = spec.alpha
    pieces = _pieces(spec)
    mu2 = mu * mu
    if t > a * mu:
        return _coerce(Interval.point(0 * s), exact)
    if t == a * mu:
        s = a
    left = _one_sided(pieces, s, "left", 3)
    if s == a:
        return _coerce(Interval.point(left / mu2), exact)
    right = _one_sided(pieces, s, "right", 3)
    return _coerce(Interval.hull(left / mu2, right / mu2), exact)


def relax_second_order(spec: DensitySpec, t, mu) -> Interval:
    """Generalized second derivative ``d rho(t/mu) / mu^2`` for ``t > 0``.

    Raises
    ------
    UnsupportedKindError
        For ``capped_l1``, whose density is not Lipschitz on its support.
    """
    _check_mu(mu)
    if not spec.lipschitz_on_support:
        raise UnsupportedKindError("second-order information is not defined for capped_l1")
    if not t > 0:
        raise ParameterError(f"t must be positive, got {t}")
    return _second_order(spec, t, mu)


def dc_split_capped_l1(t, mu):
    """Return ``(t_+/mu, (t - mu)_+/mu)``; their difference is the capped-l1 relaxation."""
    _check_mu(mu)
    zero = 0 * t
    return max(t, zero) / mu, max(t - mu, zero) / mu


@dataclass(frozen=True)
class DensityConstants:
    """Constants of the assumption a density satisfies.

    ``rho2_lower`` for ``mcp`` and ``hard`` is derived (infimum of ``rho``
    over the region where its derivative exceeds ``-rho2_check``); that
    region is empty for both, giving ``+inf``.
    """

    rho_lower: Optional[float] = None
    rho_upper: Optional[float] = None
    rho2_lower: Optional[float] = None
    rho2_check: Optional[float] = None
    rho2_upper: Optional[float] = None
    rho_zero: Optional[float] = None
    rho2_lower_derived: bool = False


def _derived_rho2_lower(spec: DensitySpec, rho2_check):
    pieces = _pieces(spec)
    cands = []
    for lo, hi, rho, drho in pieces:
        mid = (lo + hi) / 2
        if drho(mid) > -rho2_check:
            # rho is monotone on each piece
            cands.extend([rho(lo), rho(hi)])
    for (_, hi, rho_l, drho_l), (lo, _, rho_r, drho_r) in zip(pieces, pieces[1:]):
        if max(drho_l(hi), drho_r(lo)) > -rho2_check:
            cands.append(rho_l(hi))
    return min(cands) if cands else math.inf


def density_constants(spec: DensitySpec) -> DensityConstants:
    a = spec.alpha
    one = Fraction(1) if _exact(a) else 1.0
    if spec.kind == "capped_l1":
        return DensityConstants(rho_lower=one, rho_upper=one)
    if spec.kind == "scad":
        check = 2 * one / ((a + 1) * (a - 1))
        top = 2 * one / (a + 1)
        return DensityConstants(rho2_lower=2 * one / (a + 1), rho2_check=check, rho2_upper=top, rho_zero=top)
    if spec.kind == "mcp":
        check = 2 * one / (a * a)
        return DensityConstants(
            rho2_lower=_derived_rho2_lower(spec, check),
            rho2_check=check,
            rho2_upper=2 * one / a,
            rho_zero=2 * one / a,
            rho2_lower_derived=True,
        )
    check = 2 * one
    return DensityConstants(
        rho2_lower=_derived_rho2_lower(spec, check),
        rho2_check=check,
        rho2_upper=2 * one,
        rho_zero=2 * one,
        rho2_lower_derived=True,
    )


def density_limit(spec: DensitySpec, s, side: str = "right"):
    """One-sided limit of ``rho`` at ``s``."""
    return _one_sided(_pieces(spec), s, side, 2)


def second_order_interval(spec: DensitySpec, t, mu) -> Interval:
    """Second-order set of ``r`` at ``t > 0`` for any kind (capped-l1 gives 0)."""
    _check_mu(mu)
    return _second_order(spec, t, mu)


def scad_function(t, mu, alpha):
    """Unscaled SCAD penalty with threshold ``mu`` evaluated at ``t >= 0``."""
    t = np.asarray(t, dtype=float)
    mid = (2 * alpha * mu * t - t**2 - mu**2) / (2 * (alpha - 1) * mu)
    return np.where(t <= mu, t, np.where(t <= alpha * mu, mid, (alpha + 1) * mu / 2))


def mcp_function(t, mu, alpha):
    """Unscaled MCP penalty with parameter ``mu`` evaluated at ``t >= 0``."""
    t = np.asarray(t, dtype=float)
    return np.where(t < alpha * mu, t - t**2 / (2 * alpha * mu), alpha * mu / 2)


"""Problem data model and builders for cardinality-penalized saddle problems.

A :class:`SaddleProblem` describes

    min_x max_y  c(x, y) + lambda1 * ||g(x)_+||_0 - lambda2 * ||h(y)_+||_0

over boxes, where every penalty argument is a per-coordinate affine map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from types import SimpleNamespace
from typing import Any, Callable, Optional

import numpy as np
from scipy.special import expit

from .penalties import DensitySpec, relax_value
from .smoothing import DEFAULT_VARIANT, dr_regression_smoothed, smooth_abs, smooth_abs_grad

FEAS_SLACK = 1e-12


class InfeasiblePointError(ValueError):
    """Point outside the feasible set; ``constraint`` names the violation."""

    def __init__(self, constraint: str):
        super().__init__(f"infeasible point: {constraint}")
        self.constraint = constraint


@dataclass(frozen=True, eq=False)
class BoxSet:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float)).copy()
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float)).copy()
        if lo.shape != hi.shape:
            raise ValueError("box bounds must have equal shapes")
        if not np.all(lo < hi):
            raise ValueError("box requires lower < upper elementwise")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def uniform(cls, dim: int, lo: float, hi: float) -> "BoxSet":
        return cls(np.full(dim, float(lo)), np.full(dim, float(hi)))

    @property
    def dim(self) -> int:
        return self.lower.size

    def contains(self, v, slack: float = FEAS_SLACK) -> bool:
        v = np.asarray(v, dtype=float)
        return bool(np.all(v >= self.lower - slack) and np.all(v <= self.upper + slack))

    def at_upper(self, v, slack: float = FEAS_SLACK) -> np.ndarray:
        return np.abs(np.asarray(v, dtype=float) - self.upper) <= slack

    def at_lower(self, v, slack: float = FEAS_SLACK) -> np.ndarray:
        return np.abs(np.asarray(v, dtype=float) - self.lower) <= slack


@dataclass(frozen=True, eq=False)
class PenaltyTermSpec:
    """Per-coordinate affine penalty arguments.

    Row 0 holds ``g_i(t) = slope[0, i] * t + intercept[0, i]`` and row 1
    holds ``g_{n+i}``. An absent term is the constant ``-1`` (slope 0),
    which never contributes to the count.
    """

    slope: np.ndarray
    intercept: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.slope, dtype=float).reshape(2, -1).copy()
        c = np.asarray(self.intercept, dtype=float).reshape(2, -1).copy()
        if s.shape != c.shape:
            raise ValueError("slope and intercept shapes differ")
        object.__setattr__(self, "slope", s)
        object.__setattr__(self, "intercept", c)

    @classmethod
    def l0(cls, n: int) -> "PenaltyTermSpec":
        """``||x||_0`` written as ``(x)_+`` and ``(-x)_+`` counts."""
        return cls(np.vstack([np.ones(n), -np.ones(n)]), np.zeros((2, n)))

    @classmethod
    def one_sided(cls, n: int) -> "PenaltyTermSpec":
        return cls(np.vstack([np.ones(n), np.zeros(n)]), np.vstack([np.zeros(n), -np.ones(n)]))

    @classmethod
    def bounds(cls, lower, upper) -> "PenaltyTermSpec":
        """Penalize leaving ``[lower, upper]``: ``x - upper`` and ``lower - x``."""
        lo, hi = np.asarray(lower, dtype=float), np.asarray(upper, dtype=float)
        return cls(np.vstack([np.ones_like(lo), -np.ones_like(lo)]), np.vstack([-hi, lo]))

    @classmethod
    def absent(cls, n: int) -> "PenaltyTermSpec":
        return cls(np.zeros((2, n)), -np.ones((2, n)))

    @property
    def dim(self) -> int:
        return self.slope.shape[1]

    def values(self, v) -> np.ndarray:
        return self.slope * np.asarray(v, dtype=float)[None, :] + self.intercept

    def count(self, v) -> int:
        return int(np.count_nonzero(self.values(v) > 0))

    @property
    def is_l0(self) -> bool:
        return bool(
            np.all(self.slope[0] == 1) and np.all(self.slope[1] == -1) and np.all(self.intercept == 0)
        )

    @property
    def is_absent(self) -> bool:
        return bool(np.all(self.slope == 0) and np.all(self.intercept < 0))


@dataclass(frozen=True)
class Regularity:
    """Constants tau, sigma and the Lipschitz bounds used by the mu thresholds."""

    tau: float
    sigma: float
    L_c1: float
    L_c2: Optional[float] = 0.0
    L_g2: Optional[float] = 0.0
    L_h2: Optional[float] = 0.0


@dataclass(frozen=True)
class ObjectiveValue:
    c_part: float
    l0_x: int
    l0_y: int
    total: float


@dataclass(frozen=True, eq=False)
class SaddleProblem:
    name: str
    n: int
    m: int
    c_value: Callable[[np.ndarray, np.ndarray], float]
    grad_x: Callable[[np.ndarray, np.ndarray], np.ndarray]
    grad_y: Callable[[np.ndarray, np.ndarray], np.ndarray]
    x_box: BoxSet
    y_box: BoxSet
    g: PenaltyTermSpec
    h: PenaltyTermSpec
    lambda1: float
    lambda2: float
    regularity: Optional[Regularity] = None
    gamma: Optional[float] = None
    hess_xx_diag: Optional[Callable] = None
    hess_yy_diag: Optional[Callable] = None
    y_simplex: bool = False
    smooth_c: bool = True
    smoothed: Optional[Callable] = None
    builder: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.lambda1 > 0 and self.lambda2 > 0):
            raise ValueError("lambda1 and lambda2 must be positive")
        if self.x_box.dim != self.n or self.y_box.dim != self.m:
            raise ValueError("box dimensions do not match n, m")
        if self.g.dim != self.n or self.h.dim != self.m:
            raise ValueError("penalty dimensions do not match n, m")

    def check_feasible(self, x, y) -> None:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.shape != (self.n,) or y.shape != (self.m,):
            raise InfeasiblePointError(f"shape x{x.shape} y{y.shape}, expected ({self.n},) ({self.m},)")
        for name, v, box in (("x", x, self.x_box), ("y", y, self.y_box)):
            bad = np.flatnonzero((v < box.lower - FEAS_SLACK) | (v > box.upper + FEAS_SLACK))
            if bad.size:
                i = int(bad[0])
                raise InfeasiblePointError(f"{name}[{i}]={v[i]!r} outside [{box.lower[i]}, {box.upper[i]}]")
        if self.y_simplex and abs(y.sum() - 1.0) > 1e-9:
            raise InfeasiblePointError(f"sum(y)={y.sum()!r} != 1")

    def with_lambdas(self, lambda1: float, lambda2: float) -> "SaddleProblem":
        return replace(self, lambda1=lambda1, lambda2=lambda2)


def eval_f(problem: SaddleProblem, x, y) -> ObjectiveValue:
    """Objective with exact l0 counts (only strictly positive arguments count)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    problem.check_feasible(x, y)
    c = float(problem.c_value(x, y))
    kx, ky = problem.g.count(x), problem.h.count(y)
    return ObjectiveValue(c, kx, ky, c + problem.lambda1 * kx - problem.lambda2 * ky)


def relaxed_terms(spec: DensitySpec, terms: PenaltyTermSpec, v, mu) -> float:
    vals = terms.values(v)
    return float(np.sum(relax_value(spec, vals.ravel(), mu)))


def eval_fR(problem: SaddleProblem, x, y, spec: DensitySpec, mu) -> float:
    """Objective with every step term replaced by ``r(., mu)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    problem.check_feasible(x, y)
    c = float(problem.c_value(x, y))
    return c + problem.lambda1 * relaxed_terms(spec, problem.g, x, mu) - problem.lambda2 * relaxed_terms(
        spec, problem.h, y, mu
    )


# --------------------------------------------------------------------------- toy examples

TOY_CASES = (
    "ex2_3_case1",
    "ex2_3_case2",
    "ex2_3_case3",
    "ex2_1",
    "ex5_1",
    "ex5_2",
    "ex5_3",
)


def toy_bilinear_instance(case: str) -> SaddleProblem:
    """Small instances from the worked examples.

    ``ex2_3_case*`` is ``(x-1)(y-1) + l1*||x||_0 - l2*||y||_0`` on
    ``[-2, 2]^2`` with ``(l1, l2)`` equal to (3, 1), (3, 3) and (1, 1).
    ``ex5_1`` shares the data of ``ex2_3_case2`` and ``ex5_2`` that of
    ``ex2_3_case3``. ``ex5_3`` is ``(x-1)(1-y) + ||x||_0 - ||y||_0`` and
    ``ex2_1`` is ``|x1+x2-1|(y+1) + ||x||_0 - 3||y||_0`` on
    ``[-1, 1]^2 x [-1, 1]``.
    """
    key = case.lower().replace("-", "_")
    lambdas = {
        "ex2_3_case1": (3, 1),
        "ex2_3_case2": (3, 3),
        "ex2_3_case3": (1, 1),
        "ex5_1": (3, 3),
        "ex5_2": (1, 1),
    }
    zero = lambda x, y: np.zeros(1)  # noqa: E731
    if key in lambdas:
        l1, l2 = lambdas[key]
        return SaddleProblem(
            name=key,
            n=1,
            m=1,
            c_value=lambda x, y: float((x[0] - 1) * (y[0] - 1)),
            grad_x=lambda x, y: np.array([y[0] - 1.0]),
            grad_y=lambda x, y: np.array([x[0] - 1.0]),
            x_box=BoxSet.uniform(1, -2, 2),
            y_box=BoxSet.uniform(1, -2, 2),
            g=PenaltyTermSpec.l0(1),
            h=PenaltyTermSpec.l0(1),
            lambda1=l1,
            lambda2=l2,
            regularity=Regularity(tau=2, sigma=1, L_c1=3),
            gamma=1.0,
            hess_xx_diag=zero,
            hess_yy_diag=zero,
            builder="toy",
            params={"case": key},
        )
    if key == "ex5_3":
        return SaddleProblem(
            name=key,
            n=1,
            m=1,
            c_value=lambda x, y: float((x[0] - 1) * (1 - y[0])),
            grad_x=lambda x, y: np.array([1.0 - y[0]]),
            grad_y=lambda x, y: np.array([1.0 - x[0]]),
            x_box=BoxSet.uniform(1, -2, 2),
            y_box=BoxSet.uniform(1, -2, 2),
            g=PenaltyTermSpec.l0(1),
            h=PenaltyTermSpec.l0(1),
            lambda1=1,
            lambda2=1,
            regularity=Regularity(tau=2, sigma=1, L_c1=3),
            gamma=1.0,
            hess_xx_diag=zero,
            hess_yy_diag=zero,
            builder="toy",
            params={"case": key},
        )
    if key == "ex2_1":

        def gx(x, y):
            return np.sign(x[0] + x[1] - 1) * (y[0] + 1) * np.ones(2)

        return SaddleProblem(
            name=key,
            n=2,
            m=1,
            c_value=lambda x, y: float(abs(x[0] + x[1] - 1) * (y[0] + 1)),
            grad_x=gx,
            grad_y=lambda x, y: np.array([abs(x[0] + x[1] - 1)]),
            x_box=BoxSet.uniform(2, -1, 1),
            y_box=BoxSet.uniform(1, -1, 1),
            g=PenaltyTermSpec.l0(2),
            h=PenaltyTermSpec.l0(1),
            lambda1=1,
            lambda2=3,
            regularity=Regularity(tau=1, sigma=1, L_c1=3, L_c2=None),
            smooth_c=False,
            builder="toy",
            params={"case": key},
        )
    raise ValueError(f"unknown toy case {case!r}; expected one of {TOY_CASES}")


# --------------------------------------------------------------------------- seeded RNG

RNG_NAME = "pcg64-raw-v1"


class StreamRNG:
    """Seeded generator built on raw PCG64 words.

    Stream ``k`` is ``PCG64(SeedSequence(seed).spawn(K)[k])``. Only raw
    64-bit outputs are consumed, through the derivations below, so the
    sampling does not depend on numpy's distribution code:

    * bit: top bit of one word
    * integer in ``[0, k)``: word mod k, rejecting words at or above the
      largest multiple of k below 2**64
    * k distinct indices from ``[0, n)``: partial Fisher-Yates
    """

    def __init__(self, seed: int, n_streams: int):
        children = np.random.SeedSequence(int(seed)).spawn(n_streams)
        self._bits = [np.random.PCG64(c) for c in children]

    def words(self, stream: int, count: int) -> np.ndarray:
        return np.asarray(self._bits[stream].random_raw(count), dtype=np.uint64)

    def bits(self, stream: int, count: int) -> np.ndarray:
        return (self.words(stream, count) >> np.uint64(63)).astype(np.int64)

    def below(self, stream: int, k: int) -> int:
        limit = (2**64 // k) * k
        while True:
            w = int(self.words(stream, 1)[0])
            if w < limit:
                return w % k

    def sample_without_replacement(self, stream: int, n: int, k: int) -> list[int]:
        pool = list(range(n))
        for i in range(k):
            j = i + self.below(stream, n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]


# --------------------------------------------------------------------------- logistic instance


def logistic_from_data(A, a, b, alpha, beta, lambda1: float = 1.0, lambda2: float = 1.0, seed=None, nnz=None):
    """Logistic saddle problem from explicit data.

    ``a`` is ``N x n`` with rows ``a_k``; ``b`` is ``N x m`` with rows ``b_k``.
    """
    A = np.array(A, dtype=float)
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    al = np.array(alpha, dtype=float)
    be = np.array(beta, dtype=float)
    n, m = A.shape
    if a.shape[1] != n or b.shape[1] != m or a.shape[0] != b.shape[0] or al.size != a.shape[0] or be.size != b.shape[0]:
        raise ValueError("logistic data dimensions are inconsistent")

    def c_value(x, y):
        return float(
            np.sum(np.logaddexp(0.0, -al * (a @ x))) + x @ A @ y - np.sum(np.logaddexp(0.0, -be * (b @ y)))
        )

    def grad_x(x, y):
        return -a.T @ (al * expit(-al * (a @ x))) + A @ y

    def grad_y(x, y):
        return b.T @ (be * expit(-be * (b @ y))) + A.T @ x

    def hxx(x, y):
        s = expit(-al * (a @ x))
        return (a**2).T @ (al**2 * s * (1 - s))

    def hyy(x, y):
        s = expit(-be * (b @ y))
        return -((b**2).T @ (be**2 * s * (1 - s)))

    params = {"A": A, "a": a, "b": b, "alpha": al, "beta": be, "lambda1": float(lambda1), "lambda2": float(lambda2)}
    if seed is not None:
        params["seed"] = int(seed)
    if nnz is not None:
        params["nnz"] = int(nnz)
    L = _logistic_L1(A, a, b)
    return SaddleProblem(
        name="logistic",
        n=n,
        m=m,
        c_value=c_value,
        grad_x=grad_x,
        grad_y=grad_y,
        x_box=BoxSet.uniform(n, -1, 1),
        y_box=BoxSet.uniform(m, -1, 1),
        g=PenaltyTermSpec.l0(n),
        h=PenaltyTermSpec.l0(m),
        lambda1=float(lambda1),
        lambda2=float(lambda2),
        regularity=Regularity(tau=1, sigma=1, L_c1=L, L_c2=None),
        gamma=_logistic_gamma(a, b),
        hess_xx_diag=hxx,
        hess_yy_diag=hyy,
        builder="logistic",
        params=params,
    )


def logistic_instance(
    n: int = 20, m: int = 30, N: int = 50, nnz_per_sample: int = 2, seed: int = 0, lambda1: float = 1.0, lambda2: float = 1.0
) -> SaddleProblem:
    """Seeded random logistic saddle problem on ``[-1, 1]^n x [-1, 1]^m``.

    Streams: 0 -> entries of ``A`` (row-major bits), 1 -> supports of
    ``a_k``, 2 -> supports of ``b_k``, 3 -> signs ``alpha_k``, 4 -> signs
    ``beta_k``.
    """
    if min(n, m, N) < 1:
        raise ValueError("n, m, N must be at least 1")
    if not 1 <= nnz_per_sample <= min(n, m):
        raise ValueError("nnz_per_sample must lie in [1, min(n, m)]")
    rng = StreamRNG(seed, 5)
    A = rng.bits(0, n * m).reshape(n, m).astype(float)
    a = np.zeros((N, n))
    b = np.zeros((N, m))
    for k in range(N):
        a[k, rng.sample_without_replacement(1, n, nnz_per_sample)] = 1.0
    for k in range(N):
        b[k, rng.sample_without_replacement(2, m, nnz_per_sample)] = 1.0
    alpha = 2.0 * rng.bits(3, N) - 1.0
    beta = 2.0 * rng.bits(4, N) - 1.0
    return logistic_from_data(A, a, b, alpha, beta, lambda1, lambda2, seed=seed, nnz=nnz_per_sample)


def _inf_norm_stacked(rows: np.ndarray) -> float:
    # induced infinity norm of the matrix whose columns are the rows a_k
    return float(np.abs(rows).sum(axis=0).max()) if rows.size else 0.0


def _logistic_L1(A, a, b) -> float:
    nA = float(np.abs(A).sum(axis=1).max()) if A.size else 0.0
    nAT = float(np.abs(A).sum(axis=0).max()) if A.size else 0.0
    return max(_inf_norm_stacked(a) + nA, _inf_norm_stacked(b) + nAT)


def _logistic_gamma(a, b) -> float:
    return max(_inf_norm_stacked(a), _inf_norm_stacked(b))


def lipschitz_L1(problem: SaddleProblem) -> float:
    """``max{||a||_inf + ||A||_inf, ||b||_inf + ||A^T||_inf}`` for a logistic instance."""
    if problem.builder != "logistic":
        raise ValueError("lipschitz_L1 is defined for logistic instances")
    p = problem.params
    return _logistic_L1(p["A"], p["a"], p["b"])


def gamma_bound(problem: SaddleProblem) -> float:
    """``max{||a||_inf, ||b||_inf}`` for a logistic instance."""
    if problem.builder != "logistic":
        raise ValueError("gamma_bound is defined for logistic instances")
    return _logistic_gamma(problem.params["a"], problem.params["b"])


# --------------------------------------------------------------------------- DR regression


def dr_regression_instance(
    C,
    d,
    A,
    b,
    delta: float,
    beta: float,
    loss: str = "l1",
    lambda1: float = 1.0,
    x_bound: float = 10.0,
    variant: str = DEFAULT_VARIANT,
) -> SaddleProblem:
    """Penalized distributionally robust regression over the simplex.

    ``c(x, y) = sum_i y_i loss_i(x) - beta * (||A y - b||^2 - delta^2)_+``
    with ``loss_i = |c_i^T x - d_i|`` (``l1``) or
    ``(max(c_i^T x, 0) - d_i)^2`` (``censored``). ``x`` carries an l0
    penalty; ``y`` has none.
    """
    C = np.atleast_2d(np.array(C, dtype=float))
    d = np.atleast_1d(np.array(d, dtype=float))
    A = np.atleast_2d(np.array(A, dtype=float))
    b = np.atleast_1d(np.array(b, dtype=float))
    M, n = C.shape
    if d.shape != (M,) or A.shape[1] != M or b.shape != (A.shape[0],):
        raise ValueError("dimension mismatch in DR regression data")
    if loss not in ("l1", "censored"):
        raise ValueError(f"unknown loss {loss!r}")
    params = {
        "C": C, "d": d, "A": A, "b": b, "delta": float(delta), "beta": float(beta),
        "loss": loss, "lambda1": float(lambda1), "x_bound": float(x_bound), "variant": variant,
    }

    def losses(x):
        u = C @ x
        if loss == "l1":
            return np.abs(u - d), np.sign(u - d)
        pu = np.maximum(u, 0.0)
        return (pu - d) ** 2, 2 * (pu - d) * (u > 0)

    def c_value(x, y):
        r = A @ y - b
        return float(y @ losses(x)[0] - beta * max(r @ r - delta**2, 0.0))

    def grad_x(x, y):
        return C.T @ (y * losses(x)[1])

    def grad_y(x, y):
        r = A @ y - b
        return losses(x)[0] - beta * float(r @ r - delta**2 > 0) * 2 * (A.T @ r)

    ns = SimpleNamespace(params=params)
    return SaddleProblem(
        name=f"dr_{loss}",
        n=n,
        m=M,
        c_value=c_value,
        grad_x=grad_x,
        grad_y=grad_y,
        x_box=BoxSet.uniform(n, -x_bound, x_bound),
        y_box=BoxSet.uniform(M, 0, 1),
        g=PenaltyTermSpec.l0(n),
        h=PenaltyTermSpec.absent(M),
        lambda1=float(lambda1),
        lambda2=1.0,
        y_simplex=True,
        smooth_c=False,
        smoothed=lambda x, y, eps: dr_regression_smoothed(ns, x, y, eps),
        builder="dr_regression",
        params=params,
    )


# --------------------------------------------------------------------------- bond portfolio


def bond_prices(cashflows, y) -> np.ndarray:
    """``p_i = sum_t alpha_{i,t} exp(-t (u_t + s_i))`` with ``y = (u, s)``."""
    cf = np.atleast_2d(np.asarray(cashflows, dtype=float))
    n, T = cf.shape
    y = np.asarray(y, dtype=float)
    t = np.arange(1, T + 1)
    disc = np.exp(-t[None, :] * (y[None, :T] + y[T:, None]))
    return (cf * disc).sum(axis=1)


def bond_portfolio_instance(
    cashflows,
    phi_params: Optional[dict] = None,
    A=None,
    b=None,
    lam: float = 1.0,
    beta: float = 0.0,
    lambda1: float = 1.0,
    x_max: float = 1.0,
    y_bounds: tuple[float, float] = (0.0, 1.0),
    variant: str = DEFAULT_VARIANT,
) -> SaddleProblem:
    """Robust bond portfolio with sparse selection.

    ``c(x, y) = phi(x) - lam * sum_i x_i p_i(y) - beta * ||A y - b||_1``
    where ``y = (u_1..u_T, s_1..s_n)`` holds yields and spreads and
    ``phi(x) = weight/2 * ||x - target||^2`` is a quadratic tracking error.
    """
    cf = np.atleast_2d(np.array(cashflows, dtype=float))
    if np.any(cf < 0):
        raise ValueError("cashflows must be nonnegative")
    n, T = cf.shape
    m = T + n
    phi_params = dict(phi_params or {"weight": 0.0})
    w = float(phi_params.get("weight", 0.0))
    target = np.broadcast_to(np.asarray(phi_params.get("target", 0.0), dtype=float), (n,)).copy()
    A = np.zeros((0, m)) if A is None else np.atleast_2d(np.array(A, dtype=float))
    b = np.zeros(A.shape[0]) if b is None else np.atleast_1d(np.array(b, dtype=float))
    if A.shape[1] != m or b.shape != (A.shape[0],):
        raise ValueError(f"A must be k x {m} and b length k")
    t = np.arange(1, T + 1, dtype=float)
    params = {
        "cashflows": cf, "weight": w, "target": target, "A": A, "b": b, "lam": float(lam),
        "beta": float(beta), "lambda1": float(lambda1), "x_max": float(x_max),
        "y_lower": float(y_bounds[0]), "y_upper": float(y_bounds[1]), "variant": variant,
    }

    def terms(y):
        return cf * np.exp(-t[None, :] * (y[None, :T] + y[T:, None]))

    def c_value(x, y):
        r = A @ y - b
        return float(w / 2 * np.sum((x - target) ** 2) - lam * x @ terms(y).sum(axis=1) - beta * np.abs(r).sum())

    def grad_x(x, y):
        return w * (x - target) - lam * terms(y).sum(axis=1)

    def _grad_y_smooth(x, y):
        wt = x[:, None] * terms(y) * t[None, :]
        return lam * np.concatenate([wt.sum(axis=0), wt.sum(axis=1)])

    def grad_y(x, y):
        return _grad_y_smooth(x, y) - beta * A.T @ np.sign(A @ y - b)

    def smoothed(x, y, eps):
        r = A @ y - b
        val = w / 2 * np.sum((x - target) ** 2) - lam * x @ terms(y).sum(axis=1) - beta * np.sum(smooth_abs(variant, r, eps))
        gy = _grad_y_smooth(x, y) - beta * A.T @ smooth_abs_grad(variant, r, eps)
        return float(val), grad_x(x, y), gy

    return SaddleProblem(
        name="bond_portfolio",
        n=n,
        m=m,
        c_value=c_value,
        grad_x=grad_x,
        grad_y=grad_y,
        x_box=BoxSet.uniform(n, 0, x_max),
        y_box=BoxSet.uniform(m, y_bounds[0], y_bounds[1]),
        g=PenaltyTermSpec.l0(n),
        h=PenaltyTermSpec.absent(m),
        lambda1=float(lambda1),
        lambda2=1.0,
        smooth_c=beta == 0.0,
        smoothed=smoothed,
        builder="bond_portfolio",
        params=params,
    )


# --------------------------------------------------------------------------- serialization

FORMAT_TAG = "l0minimax-instance-1"

_BUILDERS: dict[str, Callable[..., SaddleProblem]] = {
    "toy": lambda case: toy_bilinear_instance(case),
    "logistic": logistic_from_data,
    "dr_regression": dr_regression_instance,
    "bond_portfolio": lambda cashflows, weight, target, y_lower, y_upper, **kw: bond_portfolio_instance(
        cashflows, {"weight": weight, "target": target}, y_bounds=(y_lower, y_upper), **kw
    ),
}


def _fmt_float(v: float) -> str:
    # repr is the shortest string that round-trips the double exactly
    return repr(float(v))


def _encode(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return f"bool {int(v)}"
    if isinstance(v, (int, np.integer)):
        return f"int {int(v)}"
    if isinstance(v, (float, np.floating)):
        return f"float {_fmt_float(v)}"
    if isinstance(v, str):
        if "\n" in v:
            raise ValueError("strings may not contain newlines")
        return f"str {v}"
    arr = np.asarray(v, dtype=float)
    shape = "x".join(str(s) for s in arr.shape) if arr.ndim else "scalar"
    body = " ".join(_fmt_float(e) for e in arr.ravel())
    return f"array {shape} : {body}".rstrip()


def _decode(text: str) -> Any:
    kind, _, rest = text.partition(" ")
    if kind == "bool":
        return bool(int(rest))
    if kind == "int":
        return int(rest)
    if kind == "float":
        return float(rest)
    if kind == "str":
        return rest
    if kind == "array":
        shape_s, _, body = rest.partition(":")
        shape = tuple(int(s) for s in shape_s.strip().split("x"))
        vals = np.array([float(t) for t in body.split()], dtype=float)
        if vals.size != math.prod(shape):
            raise ValueError(f"array size {vals.size} does not match shape {shape}")
        return vals.reshape(shape)
    raise ValueError(f"unknown value tag {kind!r}")


def dump_instance(problem: SaddleProblem) -> str:
    """Serialize a built-in instance to the flat key-value format.

    Grammar (one entry per line, keys sorted within each section)::

        line  := key " = " value
        value := "int " INT | "float " FLOAT | "bool " 0|1 | "str " TEXT
               | "array " DIMS " : " FLOAT*     (row-major, DIMS like 3x4)

    ``format`` and ``builder`` come first, then ``meta.*`` entries
    (dimensions, weights, boxes) used for validation on load, then
    ``param.*`` entries fed to the builder. Floats use the shortest
    decimal form that round-trips bit-exactly.
    """
    if problem.builder not in _BUILDERS:
        raise ValueError(f"problem built by {problem.builder!r} cannot be serialized")
    meta = {
        "n": problem.n,
        "m": problem.m,
        "lambda1": float(problem.lambda1),
        "lambda2": float(problem.lambda2),
        "x_lower": problem.x_box.lower,
        "x_upper": problem.x_box.upper,
        "y_lower": problem.y_box.lower,
        "y_upper": problem.y_box.upper,
    }
    lines = [f"format = str {FORMAT_TAG}", f"builder = str {problem.builder}"]
    lines += [f"meta.{k} = {_encode(meta[k])}" for k in sorted(meta)]
    lines += [f"param.{k} = {_encode(problem.params[k])}" for k in sorted(problem.params)]
    return "\n".join(lines) + "\n"


def parse_key_values(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines, skipping blanks and ``#`` comments."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        out[key.strip()] = value.strip()
    return out


def load_instance(text: str) -> SaddleProblem:
    kv = parse_key_values(text)
    if _decode(kv.get("format", "str ?")) != FORMAT_TAG:
        raise ValueError("not an l0minimax instance file")
    builder = _decode(kv["builder"])
    if builder not in _BUILDERS:
        raise ValueError(f"unknown builder {builder!r}")
    params = {k[6:]: _decode(v) for k, v in kv.items() if k.startswith("param.")}
    problem = _BUILDERS[builder](**params)
    meta = {k[5:]: _decode(v) for k, v in kv.items() if k.startswith("meta.")}
    checks = {
        "n": problem.n,
        "m": problem.m,
        "lambda1": problem.lambda1,
        "lambda2": problem.lambda2,
        "x_lower": problem.x_box.lower,
        "x_upper": problem.x_box.upper,
        "y_lower": problem.y_box.lower,
        "y_upper": problem.y_box.upper,
    }
    for k, v in meta.items():
        if k in checks and not np.array_equal(np.asarray(checks[k]), np.asarray(v)):
            raise ValueError(f"instance metadata mismatch for {k}")
    return problem

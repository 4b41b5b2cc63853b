import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from l0minimax.problems import dr_regression_instance
from l0minimax.smoothing import (
    KAPPA,
    VARIANTS,
    consistency_probe,
    dr_regression_smoothed,
    smooth_abs,
    smooth_abs_grad,
    smooth_plus,
    smooth_plus_grad,
)
from oracles import fd_grad


def test_examples():
    assert smooth_plus("logexp", 0.0, 1.0) == pytest.approx(math.log(2), abs=1e-15)
    assert smooth_plus("sqrt", 0.0, 0.5) == pytest.approx(0.5, abs=1e-15)
    assert smooth_plus("pquad", 2.0, 1.0) == 2.0
    assert smooth_plus_grad("logexp", 0.0, 1.0) == 0.5
    assert smooth_plus_grad("pquad", -2.0, 1.0) == 0.0
    assert smooth_plus_grad("sqrt", 3.0, 1e-3) == pytest.approx(1.0, abs=1e-6)
    assert smooth_abs("logexp", 0.0, 1.0) == pytest.approx(2 * math.log(2), abs=1e-15)
    assert smooth_abs("pquad", 5.0, 1.0) == 5.0
    # frozen from direct evaluation of the closed form
    assert smooth_abs("sqrt", 1.0, 0.1) == pytest.approx(1.019803902718557, abs=1e-12)


def test_unknown_variant_and_eps():
    with pytest.raises(ValueError):
        smooth_plus("huber", 0.0, 1.0)
    with pytest.raises(ValueError):
        smooth_plus("pquad", 0.0, 0.0)


@pytest.mark.parametrize("variant", VARIANTS)
def test_no_overflow(variant):
    s = np.array([-1e300, -1e6, 1e6, 1e300])
    v = smooth_plus(variant, s, 1e-3)
    assert np.all(np.isfinite(v))
    np.testing.assert_allclose(v, np.maximum(s, 0), rtol=1e-12, atol=1e-12)
    g = smooth_plus_grad(variant, s, 1e-3)
    np.testing.assert_allclose(g, [0, 0, 1, 1])


@pytest.mark.parametrize("variant", VARIANTS)
def test_stable_branch_continuity(variant):
    eps = 0.5
    for s0 in (36 * eps, -36 * eps):
        a, b = smooth_plus(variant, s0 * (1 - 1e-12), eps), smooth_plus(variant, s0 * (1 + 1e-12), eps)
        assert abs(a - b) < 1e-9


@pytest.mark.parametrize("variant", VARIANTS)
@pytest.mark.parametrize("eps", [1.0, 0.1, 0.01])
def test_uniform_gap(variant, eps):
    s = np.linspace(-20 * eps, 20 * eps, 400001)
    gap = smooth_plus(variant, s, eps) - np.maximum(s, 0)
    assert gap.min() >= -1e-15
    assert gap.max() <= KAPPA[variant] * eps * (1 + 1e-12)
    # kappa is attained at s = 0
    assert gap.max() == pytest.approx(KAPPA[variant] * eps, rel=1e-9)


@pytest.mark.parametrize("variant", VARIANTS)
def test_gradient_fd(variant):
    rng = np.random.default_rng(0)
    for eps in (1.0, 0.1, 0.01):
        s = rng.uniform(-3 * eps, 3 * eps, 200)
        h = 1e-7 * eps
        fd = (smooth_plus(variant, s + h, eps) - smooth_plus(variant, s - h, eps)) / (2 * h)
        np.testing.assert_allclose(smooth_plus_grad(variant, s, eps), fd, atol=1e-5)
        fd_abs = (smooth_abs(variant, s + h, eps) - smooth_abs(variant, s - h, eps)) / (2 * h)
        np.testing.assert_allclose(smooth_abs_grad(variant, s, eps), fd_abs, atol=1e-5)


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(VARIANTS), st.floats(-50, 50), st.floats(-50, 50), st.floats(1e-3, 1.0))
def test_convex_monotone_bounds(variant, a, b, eps):
    fa, fb = smooth_plus(variant, a, eps), smooth_plus(variant, b, eps)
    fm = smooth_plus(variant, (a + b) / 2, eps)
    assert fm <= (fa + fb) / 2 + 1e-12 * (1 + abs(a) + abs(b))
    if a <= b:
        assert fa <= fb + 1e-12
    g = smooth_plus_grad(variant, a, eps)
    assert 0.0 <= g <= 1.0
    assert -1.0 <= smooth_abs_grad(variant, a, eps) <= 1.0
    th = smooth_abs(variant, a, eps)
    assert th == pytest.approx(smooth_abs(variant, -a, eps), abs=1e-12)
    assert th >= abs(a) - 2 * KAPPA[variant] * eps - 1e-12


@pytest.mark.parametrize("variant", VARIANTS)
def test_consistency(variant):
    seqs = lambda s0: [  # noqa: E731
        [(s0 + 1 / k, 1 / k) for k in range(1, 2001)],
        [(s0 - 1 / k, 1 / k) for k in range(1, 2001)],
        [(s0 + 0.5 / k, 1 / k) for k in range(1, 2001)],
        [(s0, 1 / k) for k in range(1, 2001)],
        [(s0 + 1 / k**2, 1 / k) for k in range(1, 2001)],
    ]
    for s0 in (-1.0, 0.0, 1.0):
        rep = consistency_probe(variant, s0, seqs(s0))
        assert rep.ok, rep
        if s0 != 0:
            np.testing.assert_allclose(rep.limits, 1.0 if s0 > 0 else 0.0, atol=1e-6)
        else:
            assert all(0 <= v <= 1 for v in rep.limits)


@pytest.mark.parametrize("variant", VARIANTS)
def test_definition_limit(variant):
    for sbar in (-0.7, 0.0, 0.4):
        k = np.arange(1, 5001)
        vals = smooth_plus(variant, sbar + (-1.0) ** k / k, 1.0 / k)
        assert abs(vals[-1] - max(sbar, 0)) < 1e-3


def _dr(loss, beta=0.7, seed=0, M=6, n=4):
    rng = np.random.default_rng(seed)
    C = rng.normal(size=(M, n))
    d = rng.normal(size=M)
    A = rng.normal(size=(3, M))
    b = rng.normal(size=3)
    return dr_regression_instance(C, d, A, b, delta=0.3, beta=beta, loss=loss)


class TestDR:
    def test_single_term(self):
        p = dr_regression_instance([[1.0, 2.0]], [3.0], [[1.0]], [0.0], 0.1, 0.0, "l1")
        x = np.array([1.0, 1.0])
        v, _, _ = dr_regression_smoothed(p, x, np.array([1.0]), 0.1)
        assert v == pytest.approx(smooth_abs("pquad", 0.0, 0.1), abs=1e-15)
        assert p.c_value(np.array([0.5, 0.25]), np.array([1.0])) == pytest.approx(2.0)

    def test_small_eps_limit(self):
        p = _dr("l1", beta=0.0)
        rng = np.random.default_rng(1)
        for _ in range(20):
            x = rng.normal(size=4)
            y = rng.dirichlet(np.ones(6))
            for variant in ("logexp", "sqrt", "pquad", "exp"):
                v, _, _ = dr_regression_smoothed(p, x, y, 1e-6, variant)
                assert abs(v - p.c_value(x, y)) <= 2 * math.log(2) * 1e-6 * 1.5 + 1e-12

    @pytest.mark.parametrize("loss", ["l1", "censored"])
    @pytest.mark.parametrize("variant", VARIANTS)
    def test_gradient_fd(self, loss, variant):
        p = _dr(loss)
        rng = np.random.default_rng(2)
        for _ in range(20):
            x = rng.normal(size=4)
            y = rng.dirichlet(np.ones(6))
            eps = 0.3
            _, gx, gy = dr_regression_smoothed(p, x, y, eps, variant)
            np.testing.assert_allclose(gx, fd_grad(lambda v: dr_regression_smoothed(p, v, y, eps, variant)[0], x), atol=1e-5)
            np.testing.assert_allclose(gy, fd_grad(lambda v: dr_regression_smoothed(p, x, v, eps, variant)[0], y), atol=1e-5)

    @pytest.mark.parametrize("variant", VARIANTS)
    def test_midpoint_convex_concave(self, variant):
        p = _dr("l1", beta=1.3, seed=3)
        rng = np.random.default_rng(4)
        for _ in range(1000):
            eps = rng.uniform(0.01, 1.0)
            x1, x2 = rng.normal(size=(2, 4)) * 2
            y1, y2, y = rng.dirichlet(np.ones(6), size=3)
            x = rng.normal(size=4)
            f = lambda a, b: dr_regression_smoothed(p, a, b, eps, variant)[0]  # noqa: E731
            assert f((x1 + x2) / 2, y) <= (f(x1, y) + f(x2, y)) / 2 + 1e-10
            assert f(x, (y1 + y2) / 2) >= (f(x, y1) + f(x, y2)) / 2 - 1e-10

    def test_censored_uniform_at_zero(self):
        p = _dr("censored", beta=0.0)
        d = p.params["d"]
        y = np.full(6, 1 / 6)
        assert p.c_value(np.zeros(4), y) == pytest.approx(np.mean(d**2), abs=1e-14)

    def test_kink_consistency(self):
        # c_1^T x - d_1 = 0: smoothed x-gradients along eps -> 0 lie in [-1, 1] * c_1
        C = np.array([[1.0, -2.0]])
        p = dr_regression_instance(C, [0.0], [[1.0]], [0.0], 0.1, 0.0, "l1")
        y = np.array([1.0])
        for k in range(1, 200):
            x = np.array([2.0, 1.0]) + (-1) ** k / k * np.array([1.0, 0.0])
            _, gx, _ = dr_regression_smoothed(p, x, y, 1.0 / k)
            t = gx[0] / C[0, 0]
            assert -1 <= t <= 1
            np.testing.assert_allclose(gx, t * C[0], atol=1e-15)

    def test_dimension_mismatch(self):
        p = _dr("l1")
        with pytest.raises(ValueError):
            dr_regression_smoothed(p, np.zeros(3), np.full(6, 1 / 6), 0.1)

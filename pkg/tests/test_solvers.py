import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from l0minimax.certify import lower_bound_check, mu_bar1, residuals, strong_residuals
from l0minimax.penalties import DensitySpec
from l0minimax.problems import (
    BoxSet,
    PenaltyTermSpec,
    SaddleProblem,
    dr_regression_instance,
    logistic_instance,
    toy_bilinear_instance,
)
from l0minimax.solvers import (
    ConfigError,
    DivergenceError,
    SolverConfig,
    apgda_step,
    apgda_weights,
    pgda_step,
    project_box,
    project_simplex,
    prox_box_weighted_l1,
    run,
    trace_columns,
    trace_to_csv,
)
from oracles import convex_argmin, golden_section

CAPPED = DensitySpec.capped_l1()


def bilinear(n=1, m=1, lo=-1.0, hi=1.0):
    """c(x, y) = x.y on a symmetric box."""
    return SaddleProblem(
        name="xy",
        n=n,
        m=m,
        c_value=lambda x, y: float(x @ y),
        grad_x=lambda x, y: np.asarray(y, float).copy(),
        grad_y=lambda x, y: np.asarray(x, float).copy(),
        x_box=BoxSet.uniform(n, lo, hi),
        y_box=BoxSet.uniform(m, lo, hi),
        g=PenaltyTermSpec.l0(n),
        h=PenaltyTermSpec.l0(m),
        lambda1=1.0,
        lambda2=1.0,
        gamma=1.0,
    )


def quiet(n=1, m=1):
    p = bilinear(n, m)
    from dataclasses import replace

    return replace(
        p,
        c_value=lambda x, y: 0.0,
        grad_x=lambda x, y: np.zeros(n),
        grad_y=lambda x, y: np.zeros(m),
    )


@pytest.fixture(scope="module")
def logistic():
    return logistic_instance(20, 30, 50, 2, seed=0)


class TestProjections:
    def test_box(self):
        box = BoxSet.uniform(2, -1, 1)
        np.testing.assert_array_equal(project_box([0.3, -0.2], box), [0.3, -0.2])
        np.testing.assert_array_equal(project_box([3, -3], box), [1, -1])

    def test_box_grid_oracle(self):
        rng = np.random.default_rng(0)
        box = BoxSet([-1.0, 0.0], [0.5, 2.0])
        gx, gy = np.meshgrid(np.linspace(-1, 0.5, 151), np.linspace(0, 2, 201))
        pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
        for _ in range(50):
            v = rng.uniform(-3, 3, 2)
            best = pts[np.argmin(np.linalg.norm(pts - v, axis=1))]
            assert np.linalg.norm(project_box(v, box) - best) <= 0.01

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-5, 5), min_size=1, max_size=6))
    def test_box_idempotent(self, v):
        box = BoxSet.uniform(len(v), -1, 1)
        p = project_box(v, box)
        np.testing.assert_array_equal(project_box(p, box), p)

    def test_simplex(self):
        np.testing.assert_allclose(project_simplex([0.2, 0.8]), [0.2, 0.8])
        np.testing.assert_allclose(project_simplex([2.0, 0.0]), [1.0, 0.0])
        np.testing.assert_allclose(project_simplex([0.0, 0.0, 0.0]), [1 / 3] * 3)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-5, 5), min_size=2, max_size=6))
    def test_simplex_optimality(self, v):
        v = np.asarray(v)
        p = project_simplex(v)
        assert p.min() >= 0 and p.sum() == pytest.approx(1.0)
        # variational inequality against the vertices
        for k in range(v.size):
            e = np.zeros(v.size)
            e[k] = 1.0
            assert (v - p) @ (e - p) <= 1e-9


class TestProx:
    def test_examples(self):
        box = BoxSet.uniform(1, -1, 1)
        assert prox_box_weighted_l1([0.5], [0.2], 1.0, box)[0] == pytest.approx(0.3)
        assert prox_box_weighted_l1([0.0], [0.2], 1.0, box)[0] == 0
        assert prox_box_weighted_l1([3.0], [0.5], 1.0, box)[0] == 1

    def test_errors(self):
        box = BoxSet.uniform(1, -1, 1)
        with pytest.raises(ConfigError):
            prox_box_weighted_l1([0.5], [0.2], 0.0, box)
        with pytest.raises(ConfigError):
            prox_box_weighted_l1([0.5], [-0.2], 1.0, box)

    def test_golden_section_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(10_000):
            lo = rng.uniform(-3, 0.5)
            hi = lo + rng.uniform(0.01, 4)
            v, w, g = rng.uniform(-4, 4), rng.uniform(0, 3) * (rng.random() < 0.8), rng.uniform(0.1, 5)
            f = lambda t: g / 2 * (t - v) ** 2 + w * abs(t)  # noqa: E731
            got = prox_box_weighted_l1([v], [w], g, BoxSet([lo], [hi]))[0]
            ref = convex_argmin(lambda t: g * (t - v) + (w if t >= 0 else -w), lo, hi)
            assert abs(got - ref) <= 1e-9
            # value-based golden section agrees up to its sqrt(eps) resolution
            coarse = golden_section(f, lo, hi)
            assert f(got) <= f(coarse) + 1e-12

    def test_weights(self):
        np.testing.assert_array_equal(apgda_weights([0.05, 0.1, -0.2, 0.0], 2.0, 0.1), [20, 0, 0, 20])


class TestSteps:
    def test_pgda_fixed_point(self):
        p = quiet(2, 2)
        x, y = np.array([0.3, -0.1]), np.array([0.0, 0.5])
        xn, yn = pgda_step(p, x, y, 1.0)
        np.testing.assert_array_equal(xn, x)
        np.testing.assert_array_equal(yn, y)

    def test_pgda_hand(self):
        # from (1, 0): x' = clip(1 - 0) = 1, y' = clip(0 + x') = 1
        xn, yn = pgda_step(bilinear(), np.array([1.0]), np.array([0.0]), 1.0)
        assert (xn[0], yn[0]) == (1.0, 1.0)
        # from (0.5, 0.5) with gamma 2: x' = 0.5 - 0.25, y' = 0.5 + 0.25/2
        xn, yn = pgda_step(bilinear(), np.array([0.5]), np.array([0.5]), 2.0)
        assert (xn[0], yn[0]) == (0.25, 0.625)

    def test_pgda_model_decrease(self, logistic):
        rng = np.random.default_rng(0)
        g = 2.0
        for _ in range(20):
            x, y = rng.uniform(-1, 1, 20), rng.uniform(-1, 1, 30)
            xn, yn = pgda_step(logistic, x, y, g)
            gx = logistic.grad_x(x, y)
            assert gx @ (xn - x) + g / 2 * np.sum((xn - x) ** 2) <= 1e-15
            gy = logistic.grad_y(xn, y)
            assert gy @ (yn - y) - g / 2 * np.sum((yn - y) ** 2) >= -1e-15

    def test_pgda_errors(self):
        with pytest.raises(ConfigError):
            pgda_step(bilinear(), np.zeros(1), np.zeros(1), 0.0)

    def test_apgda_fixed_point_large(self):
        p = quiet(2, 1)
        x, y = np.array([0.5, -0.3]), np.array([0.2])
        xn, yn = apgda_step(p, x, y, CAPPED, 0.1, 1.0)
        np.testing.assert_array_equal(xn, x)
        np.testing.assert_array_equal(yn, y)

    def test_apgda_snap_to_zero(self):
        xn, yn = apgda_step(quiet(), np.array([0.01]), np.array([-0.02]), CAPPED, 0.1, 1.0)
        assert xn[0] == 0 and yn[0] == 0

    def test_apgda_small_pull_gives_zero(self):
        rng = np.random.default_rng(3)
        mu, gamma = 0.1, 2.0
        for _ in range(200):
            x = rng.uniform(-mu, mu, 1)
            shift = rng.uniform(-0.99, 0.99) / (gamma * mu) * 1.0
            gvec = np.array([-shift * gamma])
            from dataclasses import replace

            p = replace(quiet(), grad_x=lambda a, b, gv=gvec: gv)
            xn, _ = apgda_step(p, x, np.zeros(1), CAPPED, mu, gamma)
            if abs(x[0] + shift) < 1.0 / (gamma * mu):
                assert xn[0] == 0

    def test_apgda_rejects(self):
        with pytest.raises(ConfigError):
            apgda_step(quiet(), np.zeros(1), np.zeros(1), DensitySpec.mcp(2), 0.1, 1.0)
        with pytest.raises(ConfigError):
            apgda_step(quiet(), np.zeros(1), np.zeros(1), CAPPED, 0.0, 1.0)
        with pytest.raises(ConfigError):
            apgda_step(bilinear(lo=0.0), np.zeros(1), np.zeros(1), CAPPED, 0.1, 1.0)
        dr = dr_regression_instance(np.eye(2), [1.0, 1.0], np.eye(2), [0.0, 0.0], 0.1, 0.0)
        with pytest.raises(ConfigError):
            run(dr, "apgda", SolverConfig(gamma=1.0, mu=0.1))


def _phi_d(s_tilde: float, mu: float):
    """Right derivative of the majorizing penalty term in s."""
    if abs(s_tilde) < mu:
        return lambda t: (1.0 if t >= 0 else -1.0) / mu
    return lambda t: 0.0


def qd_bruteforce(problem, x, y, mu, gamma):
    """Coordinatewise minimization of the majorized model Q_d by bisection."""
    gx = problem.grad_x(x, y)
    xn = np.empty_like(x)
    for i in range(x.size):
        dphi = _phi_d(x[i], mu)
        d = lambda t, i=i, dphi=dphi: gx[i] + gamma * (t - x[i]) + problem.lambda1 * dphi(t)
        xn[i] = convex_argmin(d, problem.x_box.lower[i], problem.x_box.upper[i])
    gy = problem.grad_y(xn, y)
    yn = np.empty_like(y)
    for j in range(y.size):
        dphi = _phi_d(y[j], mu)
        # minimize the negated concave y-model
        d = lambda t, j=j, dphi=dphi: -gy[j] + gamma * (t - y[j]) + problem.lambda2 * dphi(t)
        yn[j] = convex_argmin(d, problem.y_box.lower[j], problem.y_box.upper[j])
    return xn, yn


class TestAPGDAOracle:
    def test_step_matches_bruteforce(self, logistic):
        mu = 0.9 * float(mu_bar1(logistic))
        gamma = logistic.gamma
        rng = np.random.default_rng(7)
        starts = [(np.full(20, 0.2), np.full(30, 0.2))]
        starts += [(rng.uniform(-1, 1, 20) * (rng.random(20) < 0.5), rng.uniform(-0.1, 0.1, 30)) for _ in range(5)]
        for x, y in starts:
            got = apgda_step(logistic, x, y, CAPPED, mu, gamma)
            ref = qd_bruteforce(logistic, x, y, mu, gamma)
            np.testing.assert_allclose(got[0], ref[0], atol=1e-9, rtol=0)
            np.testing.assert_allclose(got[1], ref[1], atol=1e-9, rtol=0)


class TestRun:
    def test_tol_infinite(self, logistic):
        tr = run(logistic, "pgda", SolverConfig(tol=math.inf))
        assert tr.iterations == 0 and tr.termination == "Tolerance"

    def test_max_iters(self, logistic):
        tr = run(logistic, "pgda", SolverConfig(tol=0.0, max_iters=5))
        assert tr.iterations == 5 and tr.termination == "MaxIters"
        assert len(tr.iterates) == len(tr.residuals) == len(tr.sparsity) == 6

    def test_config_errors(self, logistic):
        with pytest.raises(ConfigError):
            run(logistic, "apgda", SolverConfig())
        with pytest.raises(ConfigError):
            run(logistic, "newton", SolverConfig())
        with pytest.raises(ConfigError):
            run(bilinear(), "pgda", SolverConfig(gamma=-1.0))
        with pytest.raises(ConfigError):
            run(logistic, "pgda", SolverConfig(max_iters=-1))
        from dataclasses import replace

        with pytest.raises(ConfigError):
            run(replace(bilinear(), gamma=None), "pgda", SolverConfig())

    def test_default_start(self, logistic):
        tr = run(logistic, "pgda", SolverConfig(tol=math.inf))
        np.testing.assert_array_equal(tr.x, np.full(20, 0.2))
        np.testing.assert_array_equal(tr.y, np.full(30, 0.2))

    def test_toy_relaxed_apgda(self):
        p = toy_bilinear_instance("ex2_3_case2")
        # from inside the mu-band both coordinates snap to the saddle point (0, 0)
        tr = run(p, "apgda", SolverConfig(mu=0.1, tol=1e-8, x0=[0.05], y0=[0.05]))
        assert tr.termination == "Tolerance"
        assert tr.x[0] == 0 and tr.y[0] == 0
        assert sum(strong_residuals(p, tr.x, tr.y, 0.1)) <= 1e-8

    def test_toy_relaxed_apgda_from_default_start(self):
        # from (0.2, 0.2) the run settles at the boundary local saddle point (2, 0)
        p = toy_bilinear_instance("ex2_3_case2")
        tr = run(p, "apgda", SolverConfig(gamma=2.0, mu=0.1, tol=1e-8, x0=[0.2], y0=[0.2]))
        assert tr.termination == "Tolerance"
        assert (tr.x[0], tr.y[0]) == (2.0, 0.0)
        assert sum(strong_residuals(p, tr.x, tr.y, 0.1)) == 0

    def test_pgda_limit_and_feasibility(self, logistic):
        tr = run(logistic, "pgda", SolverConfig(tol=1e-6))
        assert tr.termination == "Tolerance"
        assert sum(residuals(logistic, tr.x, tr.y)) <= 1e-6
        lo, hi = -1 - 1e-12, 1 + 1e-12
        for x, y in tr.iterates:
            assert np.all((x >= lo) & (x <= hi)) and np.all((y >= lo) & (y <= hi))
        assert all(r[0] >= 0 and r[1] >= 0 for r in tr.residuals)

    def test_apgda_limit(self, logistic):
        mu = 0.9 * float(mu_bar1(logistic))
        tr = run(logistic, "apgda", SolverConfig(mu=mu, tol=1e-6))
        assert tr.termination == "Tolerance"
        assert lower_bound_check(logistic, tr.x, tr.y, mu).ok
        for x, y in tr.iterates:
            assert np.all(np.abs(x) <= 1 + 1e-12) and np.all(np.abs(y) <= 1 + 1e-12)

    def test_divergence(self):
        from dataclasses import replace

        calls = {"n": 0}

        def gx(x, y):
            calls["n"] += 1
            return np.array([np.nan]) if calls["n"] > 2 else np.full(1, 0.1)

        p = replace(bilinear(), grad_x=gx, grad_y=lambda x, y: np.zeros(1))
        with pytest.raises(DivergenceError) as exc:
            run(p, "pgda", SolverConfig(tol=0.0, max_iters=10))
        assert np.all(np.isfinite(exc.value.x))

    def test_dr_pgda(self):
        rng = np.random.default_rng(0)
        C, d = rng.normal(size=(6, 3)), rng.normal(size=6)
        A, b = rng.normal(size=(2, 6)), rng.normal(size=2)
        p = dr_regression_instance(C, d, A, b, 0.5, 0.1, "l1", x_bound=5.0)
        tr = run(p, "pgda", SolverConfig(gamma=50.0, eps=0.05, tol=1e-6, max_iters=20000))
        assert abs(tr.y.sum() - 1) <= 1e-12 and tr.y.min() >= 0
        assert tr.final_residual <= 1e-6 or tr.termination == "MaxIters"
        assert tr.final_residual < tr.residuals[0][0] + tr.residuals[0][1]


class TestCSV:
    def test_schema(self, logistic):
        mu = 0.03
        tr = run(logistic, "apgda", SolverConfig(mu=mu, tol=0.0, max_iters=3))
        text = trace_to_csv(logistic, tr, mu)
        body = [line for line in text.splitlines() if not line.startswith("#")]
        rows = list(csv.reader(io.StringIO("\n".join(body))))
        assert rows[0] == trace_columns(logistic)
        assert rows[0][:7] == ["iter", "residual_p", "residual_q", "nnz_x", "nnz_y", "f_value", "fR_value"]
        assert rows[0][7] == "x_0" and rows[0][-1] == "y_29"
        assert len(rows) == 5
        for row in rows[1:]:
            assert len(row) == 7 + 50
            for cell in row[7:]:
                assert float(cell) == float(f"{float(cell):.17g}")
        assert float(rows[1][7]) == 0.2
        assert "# termination = MaxIters" in text

    def test_roundtrip_precision(self, logistic):
        tr = run(logistic, "pgda", SolverConfig(tol=0.0, max_iters=2))
        rows = [r for r in csv.reader(io.StringIO(trace_to_csv(logistic, tr, 0.03))) if not r[0].startswith("#")]
        np.testing.assert_array_equal(np.array(rows[-1][7:27], dtype=float), tr.x)

    def test_certificate_footer(self, logistic):
        from l0minimax.certify import certify

        tr = run(logistic, "pgda", SolverConfig(tol=0.0, max_iters=1))
        cert = certify(logistic, tr.x, tr.y, 0.03)
        text = trace_to_csv(logistic, tr, 0.03, certificate=cert)
        assert "# verdict = " in text and text.endswith("\n")

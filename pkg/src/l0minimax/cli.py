"""Command-line interface: ``l0minimax {solve,certify,oracle,repro-logistic}``."""

from __future__ import annotations

import argparse
import math
import os
import sys
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from . import certify as cert
from .oracle import build_grid, grid_minmax, local_minimax_check
from .penalties import KINDS, DensitySpec, ParameterError
from .problems import (
    InfeasiblePointError,
    SaddleProblem,
    dump_instance,
    lipschitz_L1,
    load_instance,
    logistic_instance,
    parse_key_values,
    toy_bilinear_instance,
)
from .solvers import ConfigError, DivergenceError, SolverConfig, run, trace_to_csv

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
MU_AUTO_FACTOR = 0.97

EXPERIMENT_SIZES = {"n": 20, "m": 30, "N": 50, "nnz": 2}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value file; flags override its entries")
    p.add_argument("--instance", help="instance file written by repro-logistic or solve")
    p.add_argument("--builder", help="logistic or a toy case such as ex2_3_case1")
    p.add_argument("--density", choices=KINDS)
    p.add_argument("--alpha", type=float, help="support parameter for scad/mcp")
    p.add_argument("--mu", help="relaxation parameter or 'auto'")
    p.add_argument("--seed", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--out")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="l0minimax", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="run PGDA or APGDA and write a trace CSV")
    _add_common(s)
    s.add_argument("--algo", choices=("pgda", "apgda"))
    s.add_argument("--gamma", help="prox parameter or 'auto'")
    s.add_argument("--max-iters", type=int)
    s.add_argument("--save-instance", help="also write the instance file here")

    c = sub.add_parser("certify", help="certificate for a given point")
    _add_common(c)
    c.add_argument("--x", help="comma-separated x")
    c.add_argument("--y", help="comma-separated y")

    o = sub.add_parser("oracle", help="grid oracle on a built-in example")
    o.add_argument("--config")
    o.add_argument("--builder")
    o.add_argument("--grid-step")
    o.add_argument("--breakpoints", help="comma-separated extra breakpoints (rationals allowed)")
    o.add_argument("--delta", help="local scan radius (default: twice the step)")
    o.add_argument("--out")

    r = sub.add_parser("repro-logistic", help="seeded logistic experiment with both solvers")
    r.add_argument("--config")
    r.add_argument("--seed", type=int)
    r.add_argument("--tol", type=float)
    r.add_argument("--max-iters", type=int)
    r.add_argument("--out")
    return ap


_DEFAULTS = {
    "algo": "pgda",
    "density": "capped_l1",
    "mu": "auto",
    "gamma": "auto",
    "seed": 0,
    "tol": 1e-6,
    "max_iters": 100_000,
    "grid_step": "1/4",
    "builder": None,
}


def _merge(args: argparse.Namespace) -> dict:
    """Defaults, then config file entries, then explicit flags."""
    cfg = dict(_DEFAULTS)
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                file_kv = parse_key_values(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        for k, v in file_kv.items():
            cfg[k.replace("-", "_")] = v
    for k, v in vars(args).items():
        if v is not None:
            cfg[k] = v
    return cfg


def _as_float(v, name: str) -> float:
    try:
        return float(Fraction(str(v))) if "/" in str(v) else float(v)
    except (TypeError, ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"{name} must be a number, got {v!r}") from exc


def _as_int(v, name: str) -> int:
    try:
        return int(v)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be an integer, got {v!r}") from exc


def _problem(cfg: dict) -> SaddleProblem:
    if cfg.get("instance"):
        try:
            with open(cfg["instance"]) as fh:
                return load_instance(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read instance {cfg['instance']}: {exc}") from exc
    b = cfg.get("builder")
    if b is None:
        raise ConfigError("either --instance or --builder is required")
    if b == "logistic":
        return logistic_instance(
            EXPERIMENT_SIZES["n"], EXPERIMENT_SIZES["m"], EXPERIMENT_SIZES["N"], EXPERIMENT_SIZES["nnz"], _as_int(cfg["seed"], "seed")
        )
    return toy_bilinear_instance(b)


def _spec(cfg: dict) -> DensitySpec:
    kind = cfg.get("density", "capped_l1")
    alpha = cfg.get("alpha")
    if alpha is None:
        alpha = {"scad": 3.7, "mcp": 2.0}.get(kind, 1)
    return DensitySpec(kind, _as_float(alpha, "alpha"))


def _mu(cfg: dict, problem: SaddleProblem) -> float:
    v = cfg.get("mu", "auto")
    if str(v).lower() == "auto":
        return MU_AUTO_FACTOR * float(cert.mu_bar1(problem))
    mu = _as_float(v, "mu")
    if not (mu > 0 and math.isfinite(mu)):
        raise ConfigError(f"mu must be positive, got {mu}")
    return mu


def _gamma(cfg: dict) -> Optional[float]:
    v = cfg.get("gamma", "auto")
    return None if str(v).lower() == "auto" else _as_float(v, "gamma")


def _write(path: str, text: str) -> None:
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc}") from exc


def _vector(text: Optional[str], dim: int, name: str) -> np.ndarray:
    if text is None:
        raise ConfigError(f"--{name} is required")
    try:
        v = np.array([_as_float(t, name) for t in str(text).split(",")], dtype=float)
    except ConfigError:
        raise
    if v.shape != (dim,):
        raise ConfigError(f"--{name} needs {dim} entries, got {v.size}")
    return v


def cmd_solve(cfg: dict) -> int:
    problem = _problem(cfg)
    spec = _spec(cfg)
    algo = str(cfg["algo"]).lower()
    if algo == "apgda" and spec.kind != "capped_l1":
        raise ConfigError("APGDA requires --density capped_l1")
    mu = _mu(cfg, problem)
    conf = SolverConfig(
        gamma=_gamma(cfg), mu=mu, max_iters=_as_int(cfg["max_iters"], "max-iters"), tol=_as_float(cfg["tol"], "tol")
    )
    trace = run(problem, algo, conf, spec)
    c = cert.certify(problem, trace.x, trace.y, mu, cert.DEFAULT_TOL)
    text = trace_to_csv(problem, trace, mu, spec, c)
    if cfg.get("out"):
        _write(cfg["out"], text)
    else:
        sys.stdout.write(text)
    if cfg.get("save_instance"):
        _write(cfg["save_instance"], dump_instance(problem))
    print(f"{algo}: {trace.termination} after {trace.iterations} iterations, residual {trace.final_residual:.3e}, "
          f"verdict {c.verdict}", file=sys.stderr)
    return EXIT_OK


def cmd_certify(cfg: dict) -> int:
    problem = _problem(cfg)
    x = _vector(cfg.get("x"), problem.n, "x")
    y = _vector(cfg.get("y"), problem.m, "y")
    mu = _mu(cfg, problem)
    c = cert.certify(problem, x, y, mu, _as_float(cfg["tol"], "tol"))
    text = c.to_text()
    if cfg.get("out"):
        _write(cfg["out"], text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_oracle(cfg: dict) -> int:
    if not cfg.get("builder"):
        raise ConfigError("--builder is required")
    problem = toy_bilinear_instance(cfg["builder"])
    try:
        step = Fraction(str(cfg["grid_step"]))
        bps = [float(Fraction(t)) for t in str(cfg.get("breakpoints") or "").split(",") if t.strip()]
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"bad grid specification: {exc}") from exc
    grid = build_grid(problem, step, bps)
    delta = _as_float(cfg["delta"], "delta") if cfg.get("delta") else float(2 * step)
    rep = grid_minmax(problem, grid, delta=delta)
    lines = [f"builder = {problem.name}", f"grid_step = {step}"] + rep.to_lines()
    flags = [local_minimax_check(problem, grid, p, delta) for p in rep.global_minimax_set]
    lines.append("global_minimax_local_test = " + ",".join("pass" if f else "fail" for f in flags))
    text = "\n".join(lines) + "\n"
    if cfg.get("out"):
        _write(cfg["out"], text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_repro_logistic(cfg: dict) -> int:
    seed = _as_int(cfg["seed"], "seed")
    out_dir = cfg.get("out") or "repro_out"
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out_dir}: {exc}") from exc
    problem = logistic_instance(EXPERIMENT_SIZES["n"], EXPERIMENT_SIZES["m"], EXPERIMENT_SIZES["N"], EXPERIMENT_SIZES["nnz"], seed)
    L = lipschitz_L1(problem)
    mb1 = float(cert.mu_bar1(problem))
    mu = MU_AUTO_FACTOR * mb1
    spec = DensitySpec.capped_l1()
    tol = _as_float(cfg["tol"], "tol")
    iters = _as_int(cfg["max_iters"], "max-iters")
    _write(os.path.join(out_dir, "instance.txt"), dump_instance(problem))
    rows = []
    for algo in ("pgda", "apgda"):
        trace = run(problem, algo, SolverConfig(mu=mu, max_iters=iters, tol=tol), spec)
        c = cert.certify(problem, trace.x, trace.y, mu, cert.DEFAULT_TOL)
        _write(os.path.join(out_dir, f"{algo}_trace.csv"), trace_to_csv(problem, trace, mu, spec, c))
        rows.append((algo, trace, c))
    print(f"seed = {seed}  L_c1 = {L:.6g}  mu_bar1 = {mb1:.6g}  mu = {mu:.6g}  gamma = {rows[0][1].gamma:.6g}")
    print(f"{'algo':6} {'iters':>6} {'stop':>9} {'p':>10} {'q':>10} {'p~':>10} {'q~':>10} {'nnz_x':>5} {'nnz_y':>5}  verdict")
    for algo, trace, c in rows:
        nx, ny = trace.sparsity[-1]
        print(f"{algo:6} {trace.iterations:6d} {trace.termination:>9} {c.p:10.3e} {c.q:10.3e} "
              f"{c.p_tilde:10.3e} {c.q_tilde:10.3e} {nx:5d} {ny:5d}  {c.verdict}")
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "certify": cmd_certify, "oracle": cmd_oracle, "repro-logistic": cmd_repro_logistic}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        cfg = _merge(args)
        return COMMANDS[args.command](cfg)
    except DivergenceError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FloatingPointError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ParameterError, InfeasiblePointError, cert.UnsupportedError, cert.MissingConstantError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

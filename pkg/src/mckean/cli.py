"""Command-line front end: run sweeps, demos, and the fast invariant check."""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from mckean import __version__
from mckean.experiments import (
    ConfigError,
    ExperimentConfig,
    default_threads,
    dispatch,
    run_variance_bias_sweep,
    write_outputs,
)


def _add_common(p: argparse.ArgumentParser, config_required: bool = True) -> None:
    p.add_argument("--config", required=config_required, help="JSON experiment config")
    p.add_argument("--out", required=True, help="output CSV path (metadata sidecar written next to it)")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--threads", type=int, default=None, help="worker processes (default: MCKEAN_THREADS or all cores)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mckean", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("run", "run whatever mode the config names"),
        ("sweep", "variance or bias sweep over (N, eps) cells"),
        ("chaos", "coupled self-convergence study against a large-N reference"),
        ("dtsweep", "time-step refinement study"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_common(p)

    p = sub.add_parser("demo-nonuniqueness", help="two distinct solutions of the scalar linking equation")
    _add_common(p, config_required=False)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--cap", type=float, default=4.0)
    p.add_argument("--t-max", type=float, default=2.0)
    p.add_argument("--dt", type=float, default=1e-3)

    p = sub.add_parser("check", help="fast invariant suite (exits nonzero on failure)")
    p.add_argument("--threads", type=int, default=None)
    return parser


def _load_config(args, mode: str | None = None) -> ExperimentConfig:
    if args.config is not None:
        cfg = ExperimentConfig.from_json(args.config)
    else:
        cfg = ExperimentConfig(mode=mode or "demo")
    if args.seed is not None:
        cfg.seed = int(args.seed)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run_command(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


def _run_command(args) -> int:
    threads = getattr(args, "threads", None) or default_threads()

    if args.command == "check":
        return run_check(threads)

    start = time.monotonic()
    if args.command == "demo-nonuniqueness":
        cfg = _load_config(args, mode="demo")
        if args.config is None:
            cfg.demo_alpha, cfg.demo_cap = args.alpha, args.cap
            cfg.demo_t_max, cfg.demo_dt = args.t_max, args.dt
        result = dispatch(cfg, threads=1)
    else:
        cfg = _load_config(args)
        if args.command == "sweep" and cfg.mode not in ("variance-sweep", "bias-sweep"):
            raise ConfigError(f"mode: sweep needs variance-sweep or bias-sweep, got {cfg.mode}")
        if args.command == "chaos" and cfg.mode != "chaos-study":
            raise ConfigError(f"mode: chaos needs chaos-study, got {cfg.mode}")
        if args.command == "dtsweep" and cfg.mode != "dt-sweep":
            raise ConfigError(f"mode: dtsweep needs dt-sweep, got {cfg.mode}")
        result = dispatch(cfg, threads)
    write_outputs(result, cfg, args.out, wall_time=time.monotonic() - start)
    print(f"wrote {len(result.rows)} rows to {args.out}")
    return 0


def run_check(threads: int) -> int:
    """Small battery of invariants; prints one line per check, < 60 s."""
    from mckean.kernels import Kernel
    from mckean.linking import EmpiricalPathMeasure, ZERO_LAMBDA, solve_picard
    from mckean.testcase import BarenblattParams, PorousMediaCase
    from mckean.experiments import build_case, build_sampler
    from mckean.particles import GridSchedule, run as run_system
    from mckean.sampling import RngStream

    failures = 0

    def report(name: str, ok: bool, detail: str = "") -> None:
        nonlocal failures
        print(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f" ({detail})" if detail else ""))
        failures += 0 if ok else 1

    k = Kernel(1, 0.7)
    xs = np.linspace(-7.0, 7.0, 4001)
    mass = np.trapezoid(k.eval(xs[:, None]), xs)
    report("kernel mass (d=1 quadrature)", abs(mass - 1.0) < 1e-8, f"mass={mass:.12f}")

    params = BarenblattParams(m=1.5, dim=1)
    case = PorousMediaCase(params)
    grid = np.linspace(-5.0, 5.0, 40001)
    m0 = np.trapezoid(case.initial_density(grid), grid)
    report("profile initial mass", abs(m0 - 1.0) < 1e-6, f"mass={m0:.9f}")

    paths = np.random.default_rng(3).normal(size=(6, 5, 1)).cumsum(axis=1)
    measure = EmpiricalPathMeasure(np.linspace(0.0, 1.0, 5), paths)
    ld = solve_picard(measure, k, ZERO_LAMBDA)
    diff = paths[:, None, :, :] - paths[None, :, :, :]
    kmats = k.eval_sq_dist(np.moveaxis(np.einsum("ijkd,ijkd->ijk", diff, diff), 2, 0))
    kde = np.einsum("kij,jk->ik", kmats, np.tile(measure.weights[:, None], (1, 5)))
    report(
        "zero-rate fixed point equals plain KDE",
        np.array_equal(kde, ld.u_on_paths) and ld.iterations <= 2,
    )

    cfg = ExperimentConfig(mode="variance-sweep", A=0.0, N=[512], eps=[0.5], M=4, Q=200, seed=11)
    case = build_case(cfg)
    sampler = build_sampler(case)
    ens = run_system(Kernel(1, 0.5), GridSchedule(1.0, 10), sampler, case, RngStream(11), 512)
    box = np.linspace(-12.0, 12.0, 8001)
    mass = np.trapezoid(ens.eval_density(box[:, None]), box)
    report("conservative-case final mass", abs(mass - 1.0) < 1e-6, f"mass={mass:.9f}")

    r1 = run_variance_bias_sweep(cfg, threads=1)
    r2 = run_variance_bias_sweep(cfg, threads=threads)
    report("determinism across worker counts", r1.rows == r2.rows)

    print("check:", "ok" if failures == 0 else f"{failures} failure(s)")
    return 0 if failures == 0 else 1


if __name__ == "__main__":
    sys.exit(main())

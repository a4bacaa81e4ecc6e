"""Sweep orchestration: configs, replica scheduling, and CSV emission.

Work is split into independent (cell, replica) tasks dispatched to a process
pool.  Every task derives its randomness from keyed streams, so results are
a pure function of (config, seed) no matter how many workers run or in what
order tasks complete; results are gathered by key, never by completion
order.
"""

from __future__ import annotations

import dataclasses
import json
import os
import subprocess
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from mckean import metrics
from mckean.kernels import Kernel
from mckean.linking import nonuniqueness_demo
from mckean.particles import (
    GridSchedule,
    ParticleBlowUpError,
    coupled_refinement_run,
    run as run_system,
)
from mckean.sampling import PURPOSE_EVAL_POINTS, RejectionSampler, RngStream
from mckean.testcase import BarenblattParams, BarenblattVariant, PorousMediaCase, TiltVariant

CSV_HEADER = "mode,d,N,eps,n,replica,metric,value,seed"

MODES = ("variance-sweep", "bias-sweep", "dt-sweep", "chaos-study", "demo")

# Evaluation points where the initial density is this many times smaller than
# its peak are excluded from error averages (the count is reported).
TINY_DENSITY_RATIO = 1e-8


class ConfigError(ValueError):
    """Malformed experiment configuration; the message names the field."""


@dataclasses.dataclass
class ExperimentConfig:
    """Everything a sweep needs; serializable to/from JSON."""

    mode: str
    d: int = 1
    m: float = 1.5
    T: float = 1.0
    n: int = 10
    mu: list | None = None
    A: object = 2.0 / 3.0
    variant: str = "squared-radius"
    tilt: str = "benchmark"
    f_floor: float = 1e-12
    N: list | None = None
    eps: list | None = None
    M: int = 50
    Q: int = 1000
    seed: int = 20260809
    n_list: list | None = None
    N_ref: int | None = None
    chaos_eps: float | None = None
    proposal_std: float | None = None
    demo_alpha: float = 0.5
    demo_cap: float = 4.0
    demo_t_max: float = 2.0
    demo_dt: float = 1e-3

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode: expected one of {MODES}, got {self.mode!r}")
        if not self.T > 0:
            raise ConfigError(f"T: must be positive, got {self.T}")
        if self.n < 1:
            raise ConfigError(f"n: must be >= 1, got {self.n}")
        if self.d < 1:
            raise ConfigError(f"d: must be >= 1, got {self.d}")
        if not self.m > 1.0:
            raise ConfigError(f"m: must exceed 1, got {self.m}")
        if self.M < 1:
            raise ConfigError(f"M: must be >= 1, got {self.M}")
        if self.Q < 1:
            raise ConfigError(f"Q: must be >= 1, got {self.Q}")
        self.N = [4096] if self.N is None else [int(v) for v in self.N]
        if any(v < 1 for v in self.N):
            raise ConfigError(f"N: all particle counts must be >= 1, got {self.N}")
        self.eps = [0.5] if self.eps is None else [float(v) for v in self.eps]
        if any(not v > 0 for v in self.eps):
            raise ConfigError(f"eps: all bandwidths must be positive, got {self.eps}")
        self.n_list = [8, 16, 32, 64] if self.n_list is None else [int(v) for v in self.n_list]
        if any(v < 1 for v in self.n_list):
            raise ConfigError(f"n_list: entries must be >= 1, got {self.n_list}")
        if self.N_ref is None:
            self.N_ref = 2 * max(self.N)
        if self.mode == "chaos-study" and self.N_ref < max(self.N):
            raise ConfigError(f"N_ref: must be the largest count, got {self.N_ref} < {max(self.N)}")
        try:
            BarenblattVariant(self.variant)
        except ValueError as exc:
            raise ConfigError(f"variant: {exc}") from None
        try:
            TiltVariant(self.tilt)
        except ValueError as exc:
            raise ConfigError(f"tilt: {exc}") from None
        self.seed = int(self.seed)

    @classmethod
    def from_json(cls, path: str) -> "ExperimentConfig":
        with open(path) as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file: invalid JSON ({exc})") from None
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config field(s): {sorted(unknown)}")
        if "mode" not in raw:
            raise ConfigError("mode: required field is missing")
        return cls(**raw)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def build_case(cfg: ExperimentConfig) -> PorousMediaCase:
    params = BarenblattParams(m=cfg.m, dim=cfg.d, variant=BarenblattVariant(cfg.variant))
    return PorousMediaCase(
        params,
        mu=cfg.mu,
        A=np.asarray(cfg.A, dtype=float),
        f_floor=cfg.f_floor,
        tilt=TiltVariant(cfg.tilt),
    )


def build_sampler(case: PorousMediaCase, proposal_std: float | None = None) -> RejectionSampler:
    return RejectionSampler(
        density=case.initial_density,
        dim=case.dim,
        support_radius=case.initial_support_radius(),
        center=case.mu,
        proposal_std=proposal_std,
    )


def draw_eval_points(cfg: ExperimentConfig, case: PorousMediaCase) -> np.ndarray:
    """Shared evaluation points, drawn once per experiment.

    All (N, eps) cells score against the same points: common random numbers
    keep cross-cell comparisons from being dominated by evaluation noise.
    """
    sampler = build_sampler(case, cfg.proposal_std)
    stream = RngStream(cfg.seed, purpose=PURPOSE_EVAL_POINTS)
    return sampler.sample(stream, cfg.Q)


@dataclasses.dataclass
class SweepResult:
    """Long-format rows; deterministic given (config, seed)."""

    rows: list

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(CSV_HEADER + "\n")
            for row in self.rows:
                fh.write(",".join(_format_field(v) for v in row) + "\n")


def _format_field(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


# -- worker tasks (top level so they pickle) ---------------------------------


# A particle whose accumulated log-weight leaves this window has escaped the
# coefficient floor region (sane runs of the benchmark stay below ~5):
# classified as a blow-up even when the position arithmetic is still finite.
LOG_WEIGHT_LIMIT = 50.0

# A cell whose replica ensemble keeps at least this fraction alive still
# reports statistics (over the survivors, next to the error row); below it
# the survivors are a conditioned subpopulation with no meaningful ensemble
# statistics and the cell reports the error row alone.
CELL_SURVIVAL_FRACTION = 0.9


def _density_replica_task(args) -> tuple:
    """One particle-system replica; returns density values at shared points."""
    cfg_dict, count, eps, replica, eval_points = args
    cfg = ExperimentConfig(**cfg_dict)
    case = build_case(cfg)
    sampler = build_sampler(case, cfg.proposal_std)
    kernel = Kernel(cfg.d, eps)
    schedule = GridSchedule(cfg.T, cfg.n)
    stream = RngStream(cfg.seed, replica=replica)
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            ens = run_system(kernel, schedule, sampler, case, stream, count)
            bad = ~np.isfinite(ens.log_weights) | (np.abs(ens.log_weights) > LOG_WEIGHT_LIMIT)
            if bad.any():
                raise ParticleBlowUpError(int(np.argmax(bad)), schedule.steps)
            values = ens.eval_density(np.atleast_2d(eval_points))
        if not np.all(np.isfinite(values)):
            raise ParticleBlowUpError(int(np.argmax(~np.isfinite(values))), schedule.steps)
        return (count, eps, replica), ("ok", values, float(np.mean(np.exp(ens.log_weights))))
    except ParticleBlowUpError as exc:
        return (count, eps, replica), ("blowup", exc.particle, exc.step)


def _chaos_replica_task(args) -> tuple:
    """Reference run plus coupled smaller runs sharing the Brownian prefix."""
    cfg_dict, replica, eval_points = args
    cfg = ExperimentConfig(**cfg_dict)
    case = build_case(cfg)
    sampler = build_sampler(case, cfg.proposal_std)
    eps = cfg.chaos_eps if cfg.chaos_eps is not None else cfg.eps[0]
    kernel = Kernel(cfg.d, eps)
    schedule = GridSchedule(cfg.T, cfg.n)
    stream = RngStream(cfg.seed, replica=replica)
    pts = np.atleast_2d(eval_points)

    ref = run_system(kernel, schedule, sampler, case, stream, cfg.N_ref, record_trajectory=True)
    ref_traj = ref.trajectory
    ref_density = ref.eval_density(pts)
    out = {}
    for count in cfg.N:
        if count == cfg.N_ref:
            out[count] = (0.0, 0.0)
            continue
        ens = run_system(kernel, schedule, sampler, case, stream, count, record_trajectory=True)
        diff = ens.trajectory - ref_traj[:count]
        sup_sq = np.max(np.einsum("nkd,nkd->nk", diff, diff), axis=1)
        path_mse = float(np.mean(sup_sq))
        dens = ens.eval_density(pts)
        sup_err_sq = float(np.max((dens - ref_density) ** 2))
        out[count] = (path_mse, sup_err_sq)
    return replica, out


def _dt_replica_task(args) -> tuple:
    """Coupled dt vs dt/2 refinement; returns the strong-error statistic."""
    cfg_dict, steps, replica = args
    cfg = ExperimentConfig(**cfg_dict)
    case = build_case(cfg)
    sampler = build_sampler(case, cfg.proposal_std)
    kernel = Kernel(cfg.d, cfg.eps[0])
    schedule = GridSchedule(cfg.T, steps)
    stream = RngStream(cfg.seed, replica=replica)
    count = cfg.N[0]
    try:
        coarse, fine = coupled_refinement_run(kernel, schedule, sampler, case, stream, count)
        diff = fine.trajectory[:, ::2, :] - coarse.trajectory
        sup_sq = np.max(np.einsum("nkd,nkd->nk", diff, diff), axis=1)
        return (steps, replica), ("ok", float(np.mean(sup_sq)))
    except ParticleBlowUpError as exc:
        return (steps, replica), ("blowup", exc.particle, exc.step)


def _run_tasks(task_fn, task_args, threads: int) -> dict:
    """Execute tasks and gather results keyed deterministically."""
    results = {}
    if threads <= 1 or len(task_args) <= 1:
        for args in task_args:
            key, value = task_fn(args)
            results[key] = value
        return results
    with ProcessPoolExecutor(max_workers=threads) as pool:
        for key, value in pool.map(task_fn, task_args, chunksize=1):
            results[key] = value
    return results


# -- sweep drivers ------------------------------------------------------------


def run_variance_bias_sweep(cfg: ExperimentConfig, threads: int = 1) -> SweepResult:
    """Replica runs on every (N, eps) cell; variance/bias/mise rows at t = T.

    Particle blow-ups mark the cell with an error row carrying the count; the
    sweep continues.  A cell keeping at least CELL_SURVIVAL_FRACTION of its
    replicas also reports statistics over the survivors; one losing more is
    aborted (its surviving replicas are a conditioned subpopulation).
    """
    if cfg.mode not in ("variance-sweep", "bias-sweep"):
        raise ConfigError(f"mode: expected variance-sweep or bias-sweep, got {cfg.mode}")
    case = build_case(cfg)
    eval_points = draw_eval_points(cfg, case)
    v0 = np.asarray(case.initial_density(eval_points))
    keep = v0 >= TINY_DENSITY_RATIO * float(v0.max())
    excluded = int(np.sum(~keep))
    exact = np.asarray(case.exact_solution(cfg.T, eval_points))

    tasks = [
        (cfg.to_dict(), count, eps, r, eval_points)
        for count in cfg.N
        for eps in cfg.eps
        for r in range(cfg.M)
    ]
    results = _run_tasks(_density_replica_task, tasks, threads)

    rows = []
    for count in cfg.N:
        for eps in cfg.eps:
            cell = [results[(count, eps, r)] for r in range(cfg.M)]
            alive = [r for r in range(cfg.M) if cell[r][0] == "ok"]
            base = (cfg.mode, cfg.d, count, eps, cfg.n)
            n_blown = cfg.M - len(alive)
            if n_blown:
                rows.append((*base, -1, "blowup", float(n_blown), cfg.seed))
            if len(alive) < max(2, int(np.ceil(CELL_SURVIVAL_FRACTION * cfg.M))):
                continue
            values = np.vstack([cell[r][1][keep] for r in alive])
            bv = metrics.bias_variance(values, exact[keep], v0[keep], cfg.T)
            rows.append((*base, -1, "variance", bv.variance, cfg.seed))
            rows.append((*base, -1, "bias_sq", bv.bias_sq, cfg.seed))
            rows.append((*base, -1, "bias_sq_stderr", bv.bias_sq_stderr, cfg.seed))
            rows.append((*base, -1, "mise", bv.mise, cfg.seed))
            rows.append((*base, -1, "excluded_points", float(excluded), cfg.seed))
            est = metrics.mise(values, exact[keep], v0[keep], cfg.T)
            for idx, r in enumerate(alive):
                rows.append((*base, r, "mise_replica", float(est.per_replica[idx]), cfg.seed))
    return SweepResult(rows)


def run_chaos_study(cfg: ExperimentConfig, threads: int = 1) -> SweepResult:
    """Self-convergence toward a large-N reference under coupled noise.

    The exact mean-field dynamics is not available in closed form, so each
    smaller system is coupled to the reference (same initial draws and same
    Brownian rows) and the mean squared sup-path deviation plays the role of
    the chaos error; the sup-norm density gap at t = T is reported alongside.
    """
    if cfg.mode != "chaos-study":
        raise ConfigError(f"mode: expected chaos-study, got {cfg.mode}")
    case = build_case(cfg)
    eval_points = draw_eval_points(cfg, case)
    tasks = [(cfg.to_dict(), r, eval_points) for r in range(cfg.M)]
    results = _run_tasks(_chaos_replica_task, tasks, threads)

    eps = cfg.chaos_eps if cfg.chaos_eps is not None else cfg.eps[0]
    rows = []
    for count in cfg.N:
        base = (cfg.mode, cfg.d, count, eps, cfg.n)
        path = np.array([results[r][count][0] for r in range(cfg.M)])
        dens = np.array([results[r][count][1] for r in range(cfg.M)])
        rows.append((*base, -1, "coupled_path_mse", float(path.mean()), cfg.seed))
        # The reference shares its first N particles with the compared run, so
        # every 1/N-type error component cancels by the factor (1 - N/N_ref);
        # dividing it back out gives the estimate of the uncoupled chaos error.
        share = 1.0 - count / cfg.N_ref
        if share > 0.0:
            rows.append((*base, -1, "chaos_mse_debiased", float(path.mean() / share), cfg.seed))
        rows.append((*base, -1, "density_sup_err_sq", float(dens.mean()), cfg.seed))
        for r in range(cfg.M):
            rows.append((*base, r, "coupled_path_mse_replica", float(path[r]), cfg.seed))
    return SweepResult(rows)


def run_dt_sweep(cfg: ExperimentConfig, threads: int = 1) -> SweepResult:
    """Strong error between dt and dt/2 runs driven by the same noise."""
    if cfg.mode != "dt-sweep":
        raise ConfigError(f"mode: expected dt-sweep, got {cfg.mode}")
    if any(n % 2 for n in cfg.n_list):
        raise ConfigError(f"n_list: coarse step counts must be even, got {cfg.n_list}")
    tasks = [(cfg.to_dict(), steps, r) for steps in cfg.n_list for r in range(cfg.M)]
    results = _run_tasks(_dt_replica_task, tasks, threads)

    rows = []
    for steps in cfg.n_list:
        cell = [results[(steps, r)] for r in range(cfg.M)]
        alive = [r for r in range(cfg.M) if cell[r][0] == "ok"]
        base = (cfg.mode, cfg.d, cfg.N[0], cfg.eps[0], steps)
        n_blown = cfg.M - len(alive)
        if n_blown:
            rows.append((*base, -1, "blowup", float(n_blown), cfg.seed))
        if len(alive) < max(1, int(np.ceil(CELL_SURVIVAL_FRACTION * cfg.M))):
            continue
        mses = np.array([cell[r][1] for r in alive])
        rows.append((*base, -1, "refinement_mse", float(mses.mean()), cfg.seed))
        for r in alive:
            rows.append((*base, r, "refinement_mse_replica", float(cell[r][1]), cfg.seed))
    return SweepResult(rows)


def run_demo(cfg: ExperimentConfig) -> SweepResult:
    """Two distinct solutions of the scalar self-consistency equation."""
    times, phi1, phi2 = nonuniqueness_demo(cfg.demo_alpha, cfg.demo_cap, cfg.demo_t_max, cfg.demo_dt)
    rows = []
    for k, t in enumerate(times):
        rows.append(("demo", 1, 0, 0.0, k, -1, "t", float(t), cfg.seed))
        rows.append(("demo", 1, 0, 0.0, k, -1, "phi1", float(phi1[k]), cfg.seed))
        rows.append(("demo", 1, 0, 0.0, k, -1, "phi2", float(phi2[k]), cfg.seed))
    return SweepResult(rows)


def dispatch(cfg: ExperimentConfig, threads: int = 1) -> SweepResult:
    if cfg.mode in ("variance-sweep", "bias-sweep"):
        return run_variance_bias_sweep(cfg, threads)
    if cfg.mode == "chaos-study":
        return run_chaos_study(cfg, threads)
    if cfg.mode == "dt-sweep":
        return run_dt_sweep(cfg, threads)
    return run_demo(cfg)


def write_outputs(result: SweepResult, cfg: ExperimentConfig, out_path: str, wall_time: float) -> None:
    result.to_csv(out_path)
    meta = {
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "git_revision": _git_revision(),
        "wall_time_seconds": wall_time,
        "variance_normalizer": "population (1/M)",
        "csv_header": CSV_HEADER,
    }
    with open(out_path + ".meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _git_revision() -> str | None:
    try:
        out = subprocess.run(
            ["git", "rev-parse", "HEAD"],
            capture_output=True,
            text=True,
            timeout=10,
            cwd=os.path.dirname(os.path.abspath(__file__)),
        )
    except Exception:
        return None
    return out.stdout.strip() if out.returncode == 0 else None


def default_threads() -> int:
    env = os.environ.get("MCKEAN_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"MCKEAN_THREADS: expected an integer, got {env!r}") from None
    return os.cpu_count() or 1

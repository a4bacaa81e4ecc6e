"""Euler-discretized weakly interacting particle system with exponential weights.

Each step freezes a snapshot of the ensemble, evaluates the weighted kernel
density estimate at every particle (the O(N^2) hot loop), then moves all
particles with independent Gaussian increments and accumulates the
per-particle log-weights by the left-endpoint rule.  The sum defining the
density estimate runs over all particles including the one being evaluated.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from mckean.kernels import Kernel
from mckean.sampling import PURPOSE_BROWNIAN, PURPOSE_INIT, RngStream, gaussian_increments

_QUERY_CHUNK = 256
_SOURCE_CHUNK = 4096


def _weighted_kde(
    positions: np.ndarray,
    weights: np.ndarray,
    queries: np.ndarray,
    bandwidth: float,
    scale: float,
    chunk: int = _QUERY_CHUNK,
) -> np.ndarray:
    """Blocked evaluation of ``scale * sum_j w_j exp(-|q - x_j|^2 / (2 eps^2))``.

    Block sizes keep each pairwise tile a few MB so the subtract/square/exp
    passes run out of cache instead of main memory.
    """
    inv = 1.0 / (2.0 * bandwidth * bandwidth)
    out = np.zeros(len(queries))
    one_dim = positions.shape[1] == 1
    q1 = queries[:, 0] if one_dim else None
    p1 = positions[:, 0] if one_dim else None
    for js in range(0, len(positions), _SOURCE_CHUNK):
        pos = positions[js : js + _SOURCE_CHUNK]
        wj = weights[js : js + _SOURCE_CHUNK]
        if not one_dim:
            pos_sq = np.einsum("nd,nd->n", pos, pos)
        for qs in range(0, len(queries), chunk):
            if one_dim:
                tile = np.subtract.outer(q1[qs : qs + chunk], p1[js : js + _SOURCE_CHUNK])
                np.square(tile, out=tile)
            else:
                q = queries[qs : qs + chunk]
                tile = q @ pos.T
                tile *= -2.0
                tile += np.einsum("qd,qd->q", q, q)[:, None]
                tile += pos_sq[None, :]
                np.maximum(tile, 0.0, out=tile)
            tile *= -inv
            np.exp(tile, out=tile)
            out[qs : qs + chunk] += tile @ wj
    return out * scale


@dataclass(frozen=True)
class GridSchedule:
    """Uniform grid 0 = t_0 < ... < t_n = T with dt = T/n."""

    horizon: float
    steps: int

    def __post_init__(self):
        if not self.horizon > 0.0:
            raise ValueError("horizon must be positive")
        if self.steps < 1:
            raise ValueError("need at least one step")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.steps + 1)

    def left_endpoint(self, s: float) -> float:
        """r(s): the grid time t_k with s in [t_k, t_{k+1})."""
        if s < 0.0 or s > self.horizon:
            raise ValueError(f"s={s} outside [0, {self.horizon}]")
        k = min(int(s / self.dt), self.steps)
        return k * self.dt


class ParticleBlowUpError(RuntimeError):
    """A particle position became non-finite during a step."""

    def __init__(self, particle: int, step: int):
        super().__init__(f"non-finite position for particle {particle} after step {step}")
        self.particle = particle
        self.step = step


class ParticleEnsemble:
    """State of the discretized system at grid index ``step_index``.

    ``log_weights[i]`` accumulates ``dt * lambda`` along particle i's path,
    so the represented (non-conservative) density estimate at a point y is
    ``mean_j K(y - x_j) exp(log_weights[j])``.
    """

    def __init__(
        self,
        kernel: Kernel,
        schedule: GridSchedule,
        positions: np.ndarray,
        record_trajectory: bool = False,
    ):
        positions = np.asarray(positions, dtype=float)
        if positions.ndim != 2 or positions.shape[1] != kernel.dim:
            raise ValueError(f"positions must have shape (N, {kernel.dim})")
        if not np.all(np.isfinite(positions)):
            raise ValueError("initial positions must be finite")
        self.kernel = kernel
        self.schedule = schedule
        self.positions = positions.copy()
        self.log_weights = np.zeros(len(positions))
        self.step_index = 0
        self.trajectory = None
        if record_trajectory:
            self.trajectory = np.empty((len(positions), schedule.steps + 1, kernel.dim))
            self.trajectory[:, 0, :] = positions

    @property
    def n_particles(self) -> int:
        return len(self.positions)

    @property
    def dim(self) -> int:
        return self.kernel.dim

    @property
    def time(self) -> float:
        return self.step_index * self.schedule.dt

    def eval_density(self, queries: np.ndarray, chunk: int = _QUERY_CHUNK) -> np.ndarray:
        """Weighted kernel density estimate at ``queries`` (Q, d).

        Direct O(N * Q) kernel sums.  The pairwise blocks are sized to stay
        cache-resident and all elementwise work happens in place; the final
        reduction is a BLAS matrix-vector product whose summation order is a
        function of shapes only, so results are identical across worker
        counts.
        """
        queries = np.atleast_2d(np.asarray(queries, dtype=float))
        return _weighted_kde(
            self.positions,
            np.exp(self.log_weights),
            queries,
            self.kernel.bandwidth,
            self.kernel.norm_const / self.n_particles,
            chunk,
        )

    def step(self, coeffs, stream: RngStream) -> None:
        """Advance one grid step against a frozen snapshot.

        Phase 1 evaluates the density estimate at every particle from the
        snapshot; phase 2 moves positions with N(0, dt I) increments keyed by
        (replica, step); phase 3 accumulates log-weights from the snapshot
        values.  The phases never read what they write, so particles may be
        processed in parallel within each phase.
        """
        dw = gaussian_increments(
            stream.child(purpose=PURPOSE_BROWNIAN, step=self.step_index),
            self.n_particles,
            coeffs.noise_dim(),
            self.schedule.dt,
        )
        self.step_with_increments(coeffs, dw)

    def step_with_increments(self, coeffs, dw: np.ndarray) -> None:
        """One Euler step with externally supplied Brownian increments."""
        if self.step_index >= self.schedule.steps:
            raise ValueError("grid exhausted: step_index == steps")
        t_k = self.time
        dt = self.schedule.dt
        z = self.eval_density(self.positions)

        phi_scalar = getattr(coeffs, "phi_scalar", None)
        if phi_scalar is not None:
            move = phi_scalar(t_k, self.positions, z)[:, None] * dw
        else:
            phi = coeffs.phi_batch(t_k, self.positions, z)
            move = np.einsum("ndp,np->nd", phi, dw)
        new_pos = self.positions + move + coeffs.g_batch(t_k, self.positions, z) * dt
        new_logw = self.log_weights + dt * coeffs.lambda_batch(t_k, self.positions, z)

        bad = ~np.isfinite(new_pos).all(axis=1)
        if bad.any():
            raise ParticleBlowUpError(int(np.argmax(bad)), self.step_index)
        self.positions = new_pos
        self.log_weights = new_logw
        self.step_index += 1
        if self.trajectory is not None:
            self.trajectory[:, self.step_index, :] = new_pos


def init_ensemble(
    kernel: Kernel,
    schedule: GridSchedule,
    sampler,
    stream: RngStream,
    count: int,
    record_trajectory: bool = False,
) -> ParticleEnsemble:
    """Fresh ensemble of ``count`` i.i.d. initial positions, zero log-weights."""
    positions = sampler.sample(stream.child(purpose=PURPOSE_INIT, step=0), count)
    return ParticleEnsemble(kernel, schedule, positions, record_trajectory=record_trajectory)


def run(
    kernel: Kernel,
    schedule: GridSchedule,
    sampler,
    coeffs,
    stream: RngStream,
    count: int,
    record_trajectory: bool = False,
) -> ParticleEnsemble:
    """Initialize and advance the system through all n grid steps."""
    ens = init_ensemble(kernel, schedule, sampler, stream, count, record_trajectory)
    for _ in range(schedule.steps):
        ens.step(coeffs, stream)
    return ens


def coupled_refinement_run(
    kernel: Kernel,
    schedule: GridSchedule,
    sampler,
    coeffs,
    stream: RngStream,
    count: int,
) -> tuple[ParticleEnsemble, ParticleEnsemble]:
    """Run the system at dt and dt/2 driven by the same Brownian path.

    Increments are generated on the fine grid (2n steps); the coarse run
    consumes pairwise sums.  Both runs share initial positions.  Returns
    (coarse, fine) ensembles with trajectories recorded for strong-error
    measurement.
    """
    fine_schedule = GridSchedule(schedule.horizon, 2 * schedule.steps)
    positions = sampler.sample(stream.child(purpose=PURPOSE_INIT, step=0), count)

    fine = ParticleEnsemble(kernel, fine_schedule, positions, record_trajectory=True)
    for _ in range(fine_schedule.steps):
        fine.step(coeffs, stream)

    coarse = ParticleEnsemble(kernel, schedule, positions, record_trajectory=True)
    p = coeffs.noise_dim()
    for k in range(schedule.steps):
        fine_a = gaussian_increments(
            stream.child(purpose=PURPOSE_BROWNIAN, step=2 * k), count, p, fine_schedule.dt
        )
        fine_b = gaussian_increments(
            stream.child(purpose=PURPOSE_BROWNIAN, step=2 * k + 1), count, p, fine_schedule.dt
        )
        coarse.step_with_increments(coeffs, fine_a + fine_b)
    return coarse, fine


# -- binary trajectory dump ---------------------------------------------------


def write_trajectory(path: str, ens: ParticleEnsemble, seed: int) -> None:
    """Dump a recorded trajectory.

    Little-endian header (N, d, n as int64, T as float64, seed as uint64)
    followed by row-major float64 positions per step.
    """
    if ens.trajectory is None:
        raise ValueError("ensemble was run without trajectory recording")
    with open(path, "wb") as fh:
        fh.write(
            struct.pack(
                "<qqqdQ",
                ens.n_particles,
                ens.dim,
                ens.schedule.steps,
                ens.schedule.horizon,
                seed & 0xFFFFFFFFFFFFFFFF,
            )
        )
        # (step, particle, coordinate) layout: one row-major block per step.
        np.ascontiguousarray(np.moveaxis(ens.trajectory, 1, 0)).astype("<f8").tofile(fh)


def read_trajectory(path: str) -> tuple[dict, np.ndarray]:
    """Inverse of write_trajectory; returns (header fields, (N, n+1, d) array)."""
    with open(path, "rb") as fh:
        n, d, steps, horizon, seed = struct.unpack("<qqqdQ", fh.read(40))
        flat = np.fromfile(fh, dtype="<f8")
    traj = np.moveaxis(flat.reshape(steps + 1, n, d), 0, 1)
    header = {"n_particles": n, "dim": d, "steps": steps, "horizon": horizon, "seed": seed}
    return header, traj

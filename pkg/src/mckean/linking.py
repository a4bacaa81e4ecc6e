"""Self-consistency equation on an empirical path measure.

Given N weighted paths on a time grid, the table
``u[j, k] = u(t_k, path_j(t_k))`` must satisfy

    u(t, y) = sum_j w_j K(y - path_j(t)) * exp(Int_0^t lambda(s, path_j(s), u(s, path_j(s))) ds)

with the time integral taken by the left-endpoint rule on the grid (the same
rule the discretized particle system uses).  The table map is a contraction
in an exponentially weighted norm as long as ``M > M_K e^{T M_L} L_L``; the
solver iterates it from the zero table and reports the measured contraction
factors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from mckean.kernels import Kernel


@dataclass(frozen=True)
class LambdaField:
    """Bounded Lipschitz exponential-growth rate with declared constants.

    ``fn(t, pts, z)`` must be vectorized over a batch: ``pts`` has shape
    ``(n, d)`` and ``z`` shape ``(n,)``.
    """

    fn: object
    m_bound: float
    l_bound: float

    def __call__(self, t: float, pts: np.ndarray, z: np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(t, pts, z), dtype=float)


ZERO_LAMBDA = LambdaField(fn=lambda t, pts, z: np.zeros(len(pts)), m_bound=0.0, l_bound=0.0)


@dataclass
class EmpiricalPathMeasure:
    """Uniform (or explicitly weighted) measure on N sampled paths.

    ``paths`` has shape ``(N, n+1, d)`` over a strictly increasing grid
    starting at 0.
    """

    grid: np.ndarray
    paths: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.paths = np.asarray(self.paths, dtype=float)
        if self.paths.ndim != 3:
            raise ValueError(f"paths must have shape (N, n+1, d), got {self.paths.shape}")
        if self.grid.ndim != 1 or len(self.grid) != self.paths.shape[1]:
            raise ValueError("grid length must match the path time axis")
        if self.grid[0] != 0.0 or np.any(np.diff(self.grid) <= 0.0):
            raise ValueError("grid must be strictly increasing and start at 0")
        n = self.paths.shape[0]
        if self.weights is None:
            self.weights = np.full(n, 1.0 / n)
        else:
            self.weights = np.asarray(self.weights, dtype=float)
            if self.weights.shape != (n,) or np.any(self.weights < 0.0):
                raise ValueError("weights must be N nonnegative reals")
            if abs(self.weights.sum() - 1.0) > 1e-12:
                raise ValueError("weights must sum to 1 within 1e-12")

    @property
    def n_paths(self) -> int:
        return self.paths.shape[0]

    @property
    def dim(self) -> int:
        return self.paths.shape[2]

    def truncated(self, k: int) -> "EmpiricalPathMeasure":
        """Measure induced on the sub-grid t_0..t_k (paths cut after t_k)."""
        return EmpiricalPathMeasure(self.grid[: k + 1], self.paths[:, : k + 1, :], self.weights)


class PicardNonConvergenceError(RuntimeError):
    """Iteration exhausted ``max_iter`` without reaching tolerance.

    Signals that ``M_K e^{T M_L} L_L`` is too large for the plain iteration;
    the last sup-norm residual is attached.
    """

    def __init__(self, residual: float, max_iter: int):
        super().__init__(
            f"fixed-point iteration did not reach tolerance after {max_iter} "
            f"iterations (last residual {residual:.3e})"
        )
        self.residual = residual


@dataclass
class LinkedDensity:
    """Fixed point of the table map, with its exponential weights.

    ``u_on_paths[j, k]`` is the self-consistent density seen by path j at
    grid time k; ``v_weights[j, k]`` the accumulated exponential weight.
    ``evaluate(k, queries)`` reconstructs ``u(t_k, y)`` off-path by an O(N)
    kernel sum (no interpolation).
    """

    measure: EmpiricalPathMeasure
    kernel: Kernel
    lam: LambdaField
    u_on_paths: np.ndarray
    v_weights: np.ndarray
    iterations: int
    residuals: np.ndarray

    def evaluate(self, k: int, queries) -> np.ndarray | float:
        q, single = _as_queries(queries, self.measure.dim)
        diff = q[:, None, :] - self.measure.paths[None, :, k, :]
        sq = np.einsum("qnd,qnd->qn", diff, diff)
        vals = self.kernel.eval_sq_dist(sq) @ (self.measure.weights * self.v_weights[:, k])
        return float(vals[0]) if single else vals


def _as_queries(x, dim: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    if dim == 1:
        if x.ndim == 0:
            return x.reshape(1, 1), True
        if x.ndim == 1:
            return x[:, None], False
        return x, False
    if x.ndim == 1:
        return x[None, :], True
    return x, False


def _v_weights_from_table(measure: EmpiricalPathMeasure, lam: LambdaField, table: np.ndarray) -> np.ndarray:
    """Left-endpoint exponential weights V[j, k] given a density table."""
    grid, paths = measure.grid, measure.paths
    n_steps = len(grid) - 1
    logv = np.zeros_like(table)
    for k in range(n_steps):
        dt = grid[k + 1] - grid[k]
        rate = lam(grid[k], paths[:, k, :], table[:, k])
        logv[:, k + 1] = logv[:, k] + dt * rate
    return np.exp(logv)


def _kernel_tables(measure: EmpiricalPathMeasure, kernel: Kernel) -> np.ndarray:
    """Stack of per-time kernel Gram matrices K[k][i, j] = K(X_k^i - X_k^j)."""
    paths = measure.paths
    diff = paths[:, None, :, :] - paths[None, :, :, :]
    sq = np.einsum("ijkd,ijkd->ijk", diff, diff)
    return kernel.eval_sq_dist(np.moveaxis(sq, 2, 0))


def solve_picard(
    measure: EmpiricalPathMeasure,
    kernel: Kernel,
    lam: LambdaField,
    tol: float = 1e-10,
    max_iter: int = 200,
) -> LinkedDensity:
    """Iterate the table map from the zero table until sup-change <= tol.

    The zero start is deterministic and any start converges by contraction.
    When ``lam`` is identically zero the first update already lands on the
    kernel density estimate of each marginal and the loop exits after one
    check.
    """
    if not tol > 0.0:
        raise ValueError("tol must be positive")
    kmats = _kernel_tables(measure, kernel)  # (n+1, N, N)
    w = measure.weights
    table = np.zeros((measure.n_paths, len(measure.grid)))
    residuals = []
    for it in range(max_iter):
        v = _v_weights_from_table(measure, lam, table)
        new_table = np.einsum("kij,jk->ik", kmats, w[:, None] * v)
        resid = float(np.max(np.abs(new_table - table)))
        residuals.append(resid)
        table = new_table
        if resid <= tol:
            v = _v_weights_from_table(measure, lam, table)
            return LinkedDensity(measure, kernel, lam, table, v, it + 1, np.asarray(residuals))
    raise PicardNonConvergenceError(residuals[-1], max_iter)


def picard_contraction_factors(density: LinkedDensity, m_norm: float) -> np.ndarray:
    """Per-iteration contraction ratios of the solved iteration.

    Measured in the weighted norm ``sum_j w_j max_k e^{-M t_k} |z_jk|`` used
    by the fixed-point argument.  Re-runs the iteration from zero, recording
    ``|F(Z_{r+1}) - F(Z_r)| / |Z_{r+1} - Z_r|``.
    """
    measure, kernel, lam = density.measure, density.kernel, density.lam
    kmats = _kernel_tables(measure, kernel)
    w = measure.weights
    decay = np.exp(-m_norm * measure.grid)[None, :]

    def weighted_norm(z):
        return float(np.sum(w * np.max(decay * np.abs(z), axis=1)))

    table = np.zeros_like(density.u_on_paths)
    prev_diff = None
    ratios = []
    for _ in range(len(density.residuals)):
        v = _v_weights_from_table(measure, lam, table)
        new_table = np.einsum("kij,jk->ik", kmats, w[:, None] * v)
        diff = weighted_norm(new_table - table)
        if prev_diff is not None and prev_diff > 0.0:
            ratios.append(diff / prev_diff)
        prev_diff = diff
        table = new_table
        if diff == 0.0:
            break
    return np.asarray(ratios)


# -- stability constants and the inequality check ---------------------------


def stability_constants(kernel: Kernel, lam: LambdaField, t: float) -> tuple[float, float]:
    """The pair ``(C'(t), C(t))`` controlling the measure-stability bound.

    ``C'(t) = 2 e^{2 t M_L} (L_K^2 + 2 M_K^2 L_L^2 t)`` and
    ``C(t) = 2 C'(t) (t + 2) (1 + e^{2 t C'(t)})``.
    """
    if t < 0.0:
        raise ValueError("t must be nonnegative")
    mk, lk = kernel.sup_bound(), kernel.lipschitz_bound()
    cp = 2.0 * np.exp(2.0 * t * lam.m_bound) * (lk**2 + 2.0 * mk**2 * lam.l_bound**2 * t)
    c = 2.0 * cp * (t + 2.0) * (1.0 + np.exp(2.0 * t * cp))
    return float(cp), float(c)


def stability_constant_clamped(kernel: Kernel, lam: LambdaField, t: float) -> float:
    """Constant for the variant bound using the clamped path distance.

    ``2 e^{2 t M_L} (max(L_K, 2 M_K)^2 + 2 M_K^2 max(L_L, 2 M_L)^2 t)``.
    """
    if t < 0.0:
        raise ValueError("t must be nonnegative")
    mk, lk = kernel.sup_bound(), kernel.lipschitz_bound()
    return float(
        2.0
        * np.exp(2.0 * t * lam.m_bound)
        * (max(lk, 2.0 * mk) ** 2 + 2.0 * mk**2 * max(lam.l_bound, 2.0 * lam.m_bound) ** 2 * t)
    )


@dataclass
class StabilityReport:
    max_ratio: float
    samples: int
    passed: bool
    worst: dict = field(default_factory=dict)


def check_stability_inequality(
    measure_a: EmpiricalPathMeasure,
    measure_b: EmpiricalPathMeasure,
    kernel: Kernel,
    lam: LambdaField,
    samples: int = 1000,
    rng: np.random.Generator | None = None,
    query_scale: float = 3.0,
    clamped: bool = False,
) -> StabilityReport:
    """Empirically verify the squared-difference stability bound.

    Samples random ``(t_k, y, y')`` and checks
    ``|u_a(t_k, y) - u_b(t_k, y')|^2 <= C(t_k) (|y - y'|^2 + W_k^2)`` where
    ``W_k^2`` is the identity-coupling upper bound on the squared path
    distance up to ``t_k`` (so the right side only grows and the theorem's
    inequality is preserved).  The optional clamped form caps each path
    deviation at 1 and uses the matching constant.
    """
    if measure_a.n_paths != measure_b.n_paths or len(measure_a.grid) != len(measure_b.grid):
        raise ValueError("measures must share N and the time grid for the identity coupling")
    if np.any(measure_a.grid != measure_b.grid):
        raise ValueError("measures must share N and the time grid for the identity coupling")
    rng = rng or np.random.default_rng(0)
    ua = solve_picard(measure_a, kernel, lam)
    ub = solve_picard(measure_b, kernel, lam)

    diff = measure_a.paths - measure_b.paths
    dev = np.einsum("nkd,nkd->nk", diff, diff)
    sup_dev = np.maximum.accumulate(dev, axis=1)
    if clamped:
        sup_dev = np.minimum(sup_dev, 1.0)
    w2_bound = measure_a.weights @ sup_dev  # (n+1,), squared

    n_times = len(measure_a.grid)
    d = measure_a.dim
    max_ratio = 0.0
    worst = {}
    for _ in range(samples):
        k = int(rng.integers(n_times))
        y = rng.uniform(-query_scale, query_scale, d)
        yp = rng.uniform(-query_scale, query_scale, d)
        lhs = (ua.evaluate(k, y[None, :])[0] - ub.evaluate(k, yp[None, :])[0]) ** 2
        t = float(measure_a.grid[k])
        if clamped:
            c = stability_constant_clamped(kernel, lam, t)
        else:
            _, c = stability_constants(kernel, lam, t)
        rhs = c * (float(np.sum((y - yp) ** 2)) + float(w2_bound[k]))
        ratio = 0.0 if lhs == 0.0 else lhs / rhs
        if ratio > max_ratio:
            max_ratio = ratio
            worst = {"t": t, "lhs": float(lhs), "rhs": float(rhs)}
    return StabilityReport(max_ratio=max_ratio, samples=samples, passed=max_ratio <= 1.0, worst=worst)


# -- the scalar non-uniqueness demonstration --------------------------------


def nonuniqueness_demo(
    alpha: float, c_cap: float, t_max: float, dt: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Two distinct solutions of ``phi(t) = exp(Int_0^t beta(phi(r)) dr)``.

    ``beta(r) = |r - 1|^alpha`` on ``[0, c_cap]``, frozen at ``|c_cap - 1|^alpha``
    above and equal to 1 below 0: bounded, uniformly continuous, vanishing
    only at r = 1.  ``phi_1 == 1`` trivially solves the equation; the second
    solution is the inverse of ``F(u) = Int_1^u dr / (r beta(r))``, which is
    finite near 1 because ``alpha < 1`` and grows without bound, so F is a
    homeomorphism of [1, inf) onto the nonnegative reals.

    Returns ``(times, phi1, phi2)`` on the uniform grid.
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    if not c_cap > 1.0:
        raise ValueError("c_cap must exceed 1")
    times = np.arange(0.0, t_max + 0.5 * dt, dt)
    phi1 = np.ones_like(times)

    # F on (1, c_cap] after the substitution s = w^{1/(1-alpha)} that removes
    # the endpoint singularity: F(1 + w^{1/(1-a)}) = (1/(1-a)) Int_0^w dw' / (1 + s(w')).
    w_cap = (c_cap - 1.0) ** (1.0 - alpha)
    w_grid = np.linspace(0.0, w_cap, 200_001)
    s = w_grid ** (1.0 / (1.0 - alpha))
    integrand = 1.0 / (1.0 + s)
    f_vals = np.concatenate(
        [[0.0], np.cumsum((integrand[1:] + integrand[:-1]) * 0.5 * np.diff(w_grid))]
    ) / (1.0 - alpha)
    u_grid = 1.0 + s
    f_cap = f_vals[-1]

    phi2 = np.empty_like(times)
    inside = times <= f_cap
    phi2[inside] = np.interp(times[inside], f_vals, u_grid)
    # Beyond c_cap, beta is constant and F inverts in closed form.
    rate = (c_cap - 1.0) ** alpha
    phi2[~inside] = c_cap * np.exp(rate * (times[~inside] - f_cap))
    return times, phi1, phi2


def integral_equation_residual(times: np.ndarray, phi: np.ndarray, alpha: float, c_cap: float) -> float:
    """Max deviation of phi from exp of the left-endpoint integral of beta."""
    beta = np.where(
        phi <= 0.0, 1.0, np.where(phi >= c_cap, (c_cap - 1.0) ** alpha, np.abs(phi - 1.0) ** alpha)
    )
    dt = np.diff(times)
    integral = np.concatenate([[0.0], np.cumsum(beta[:-1] * dt)])
    return float(np.max(np.abs(phi - np.exp(integral))))

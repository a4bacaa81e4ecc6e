"""Error functionals: importance-weighted MISE, bias/variance split, path
distances, and log-log rate fits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MiseEstimate:
    """Monte Carlo estimate of the mean integrated squared error at time t.

    ``value`` is the grand mean (1/(M Q)) sum_ij |u_i(X_j) - v(X_j)|^2 / v0(X_j);
    ``per_replica`` holds the Q-averages for each of the M replicas.
    """

    t: float
    value: float
    replicas: int
    eval_points: int
    per_replica: np.ndarray


@dataclass(frozen=True)
class BiasVariance:
    """Variance / squared-bias split of the MISE estimate.

    Uses the 1/M (population) normalizer for the replica variance so that
    ``mise == variance + bias_sq`` holds exactly (up to roundoff); recorded in
    output metadata as convention "population".
    """

    t: float
    variance: float
    bias_sq: float
    mise: float
    replicas: int
    eval_points: int
    bias_sq_stderr: float


def _check_inputs(replica_values: np.ndarray, exact_values: np.ndarray, initial_values: np.ndarray):
    replica_values = np.asarray(replica_values, dtype=float)
    exact_values = np.asarray(exact_values, dtype=float)
    initial_values = np.asarray(initial_values, dtype=float)
    if replica_values.ndim != 2:
        raise ValueError("replica_values must have shape (M, Q)")
    m, q = replica_values.shape
    if exact_values.shape != (q,) or initial_values.shape != (q,):
        raise ValueError("exact_values and initial_values must have shape (Q,)")
    if np.any(initial_values <= 0.0):
        raise ValueError("initial density must be positive at every evaluation point")
    return replica_values, exact_values, initial_values


def mise(
    replica_values: np.ndarray,
    exact_values: np.ndarray,
    initial_values: np.ndarray,
    t: float,
) -> MiseEstimate:
    """Importance-weighted MISE from per-replica density values.

    ``replica_values[i, j]`` is replica i's density estimate at evaluation
    point X_j; points are drawn from the initial density whose values at X_j
    are ``initial_values`` (the importance weights cancel that sampling law,
    so the average estimates the integral of the squared error).
    """
    u, v, v0 = _check_inputs(replica_values, exact_values, initial_values)
    per_replica = np.mean((u - v[None, :]) ** 2 / v0[None, :], axis=1)
    return MiseEstimate(
        t=t,
        value=float(per_replica.mean()),
        replicas=u.shape[0],
        eval_points=u.shape[1],
        per_replica=per_replica,
    )


def bias_variance(
    replica_values: np.ndarray,
    exact_values: np.ndarray,
    initial_values: np.ndarray,
    t: float,
) -> BiasVariance:
    """Split the MISE estimate into replica variance and squared bias.

    The mean field is approximated by the replica average.  Requires M >= 2.
    ``bias_sq_stderr`` is a delete-one-replica jackknife standard error of
    the squared-bias estimate, used to flag points where bias is buried in
    Monte Carlo noise.
    """
    u, v, v0 = _check_inputs(replica_values, exact_values, initial_values)
    m = u.shape[0]
    if m < 2:
        raise ValueError("bias/variance split requires at least 2 replicas")
    mean_u = u.mean(axis=0)
    variance = float(np.mean(((u - mean_u[None, :]) ** 2).mean(axis=0) / v0))
    bias_sq = float(np.mean((mean_u - v) ** 2 / v0))

    # Delete-one jackknife on the squared-bias statistic.
    loo_mean = (mean_u[None, :] * m - u) / (m - 1)
    loo_stats = np.mean((loo_mean - v[None, :]) ** 2 / v0[None, :], axis=1)
    jack = float(np.sqrt((m - 1) / m * np.sum((loo_stats - loo_stats.mean()) ** 2)))

    total = mise(u, v, v0, t)
    return BiasVariance(
        t=t,
        variance=variance,
        bias_sq=bias_sq,
        mise=total.value,
        replicas=m,
        eval_points=u.shape[1],
        bias_sq_stderr=jack,
    )


# -- path-space and marginal distances ---------------------------------------


def path_w2_upper(paths_a: np.ndarray, paths_b: np.ndarray, upto: int | None = None, clamp: bool = False) -> float:
    """Identity-coupling upper bound on the order-2 path distance.

    ``sqrt( (1/N) sum_j sup_{k <= upto} |a_jk - b_jk|^2 )`` over trajectories
    of shape (N, n+1, d).  Pairing path j with path j is one admissible
    coupling, hence an upper bound on the optimal one.  With ``clamp`` each
    squared deviation is capped at 1 (the bounded variant of the distance).
    """
    a = np.asarray(paths_a, dtype=float)
    b = np.asarray(paths_b, dtype=float)
    if a.shape != b.shape or a.ndim != 3:
        raise ValueError("trajectories must share shape (N, n+1, d)")
    k = a.shape[1] - 1 if upto is None else upto
    diff = a[:, : k + 1, :] - b[:, : k + 1, :]
    sup_sq = np.max(np.einsum("nkd,nkd->nk", diff, diff), axis=1)
    if clamp:
        sup_sq = np.minimum(sup_sq, 1.0)
    return float(np.sqrt(np.mean(sup_sq)))


def marginal_w2_1d(samples_a: np.ndarray, samples_b: np.ndarray) -> float:
    """Exact order-2 distance between two 1-d empirical laws of equal size.

    The optimal pairing in one dimension is the sorted (quantile) coupling.
    """
    a = np.asarray(samples_a, dtype=float).reshape(-1)
    b = np.asarray(samples_b, dtype=float).reshape(-1)
    if a.shape != b.shape:
        raise ValueError("equal sample counts required")
    return float(np.sqrt(np.mean((np.sort(a) - np.sort(b)) ** 2)))


def loglog_slope(xs, ys) -> tuple[float, float, float]:
    """Ordinary least squares of log y on log x: (slope, intercept, r^2)."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1 or len(xs) < 3:
        raise ValueError("need at least 3 paired points")
    if np.any(xs <= 0.0) or np.any(ys <= 0.0):
        raise ValueError("log-log fit requires strictly positive data")
    lx, ly = np.log(xs), np.log(ys)
    dx = lx - lx.mean()
    dy = ly - ly.mean()
    sxx = float(np.dot(dx, dx))
    if sxx == 0.0:
        raise ValueError("x values must not be all equal")
    slope = float(np.dot(dx, dy)) / sxx
    intercept = float(ly.mean() - slope * lx.mean())
    resid = ly - (slope * lx + intercept)
    syy = float(np.dot(dy, dy))
    r2 = 1.0 if syy == 0.0 else 1.0 - float(np.dot(resid, resid)) / syy
    return slope, intercept, r2

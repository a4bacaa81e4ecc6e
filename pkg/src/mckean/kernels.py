"""Gaussian mollifier family used to regularize empirical measures.

The family is ``K_eps(x) = eps^{-d} * phi_d(x/eps)`` with ``phi_d`` the
standard centered Gaussian density on R^d.  Only the Gaussian member is
implemented: the interface is deliberately closed, which keeps the kernel
bounded, Lipschitz, of unit mass, and with integrable Fourier transform
without any per-kernel bookkeeping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Kernel:
    """Scaled Gaussian density on R^d with bandwidth ``eps``.

    Immutable and stateless: safe to share across any number of workers.
    """

    dim: int
    bandwidth: float

    def __post_init__(self):
        if self.dim < 1 or int(self.dim) != self.dim:
            raise ValueError(f"dim must be a positive integer, got {self.dim}")
        if not (self.bandwidth > 0.0) or not math.isfinite(self.bandwidth):
            raise ValueError(f"bandwidth must be a positive real, got {self.bandwidth}")

    @property
    def norm_const(self) -> float:
        """Height at the origin: eps^{-d} (2 pi)^{-d/2}."""
        return self.bandwidth ** (-self.dim) * (2.0 * math.pi) ** (-self.dim / 2.0)

    def eval(self, x) -> np.ndarray | float:
        """Evaluate the kernel at one point (shape ``(d,)``) or a batch ``(n, d)``.

        Raises ValueError on non-finite coordinates.
        """
        x = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(x)):
            raise ValueError("kernel evaluated at non-finite coordinates")
        single = x.ndim <= 1
        pts = np.atleast_2d(x)
        if pts.shape[-1] != self.dim:
            raise ValueError(f"expected points in R^{self.dim}, got shape {x.shape}")
        sq = np.einsum("nd,nd->n", pts, pts)
        vals = self.norm_const * np.exp(-sq / (2.0 * self.bandwidth**2))
        return float(vals[0]) if single else vals

    def eval_sq_dist(self, sq_dist: np.ndarray) -> np.ndarray:
        """Evaluate from precomputed squared distances (hot-path form)."""
        return self.norm_const * np.exp(-sq_dist / (2.0 * self.bandwidth**2))

    def sup_bound(self) -> float:
        """Uniform bound M_K = eps^{-d} (2 pi)^{-d/2}."""
        return self.norm_const

    def lipschitz_bound(self) -> float:
        """Global Lipschitz constant L_K.

        The gradient magnitude ``|x|/eps^2 * K(x)`` is maximal at ``|x| = eps``,
        giving ``eps^{-d-1} (2 pi)^{-d/2} e^{-1/2}``.
        """
        return self.norm_const / self.bandwidth * math.exp(-0.5)

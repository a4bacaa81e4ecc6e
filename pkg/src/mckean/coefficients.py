"""Coefficient-bundle interface consumed by the particle engine.

A bundle exposes the drift/diffusion/growth triple both pointwise (the
contract surface) and in vectorized form.  Besides the porous-media test
problem, only simple synthetic bundles are provided; they are mostly useful
for closed-form checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class CoefficientBounds:
    """Declared sup and Lipschitz constants over the working region."""

    m_phi: float
    m_g: float
    m_lambda: float
    l_lambda: float


@dataclass
class ConstantCoefficients:
    """Bundle with constant diffusion matrix, drift vector, and growth rate."""

    phi0: np.ndarray
    g0: np.ndarray
    lambda0: float

    def __post_init__(self):
        self.phi0 = np.atleast_2d(np.asarray(self.phi0, dtype=float))
        self.g0 = np.atleast_1d(np.asarray(self.g0, dtype=float))
        if self.phi0.shape[0] != self.g0.shape[0]:
            raise ValueError("phi0 rows must match drift dimension")

    @property
    def dim(self) -> int:
        return self.g0.shape[0]

    def noise_dim(self) -> int:
        return self.phi0.shape[1]

    def phi(self, t, x, z) -> np.ndarray:
        return self.phi0

    def g_drift(self, t, x, z) -> np.ndarray:
        return self.g0

    def lambda_rate(self, t, x, z) -> float:
        return self.lambda0

    def phi_batch(self, t, pts, z) -> np.ndarray:
        return np.broadcast_to(self.phi0, (len(pts), *self.phi0.shape))

    def g_batch(self, t, pts, z) -> np.ndarray:
        return np.broadcast_to(self.g0, (len(pts), self.dim))

    def lambda_batch(self, t, pts, z) -> np.ndarray:
        return np.full(len(pts), self.lambda0)

    def bounds(self) -> CoefficientBounds:
        return CoefficientBounds(
            m_phi=float(np.linalg.norm(self.phi0)),
            m_g=float(np.linalg.norm(self.g0)),
            m_lambda=abs(self.lambda0),
            l_lambda=0.0,
        )


@dataclass
class CallableCoefficients:
    """Bundle built from three vectorized callables ``fn(t, pts, z)``.

    ``phi_fn`` must return the scalar diffusion factor (isotropic diffusion);
    ``g_fn`` the (N, d) drift; ``lambda_fn`` the (N,) growth rate.
    """

    dim: int
    phi_fn: object
    g_fn: object
    lambda_fn: object
    declared: CoefficientBounds | None = field(default=None)

    def noise_dim(self) -> int:
        return self.dim

    def phi_scalar(self, t, pts, z) -> np.ndarray:
        return np.asarray(self.phi_fn(t, pts, z), dtype=float)

    def g_batch(self, t, pts, z) -> np.ndarray:
        return np.asarray(self.g_fn(t, pts, z), dtype=float)

    def lambda_batch(self, t, pts, z) -> np.ndarray:
        return np.asarray(self.lambda_fn(t, pts, z), dtype=float)

"""Weighted interacting particle systems for nonlinear, nonconservative PDEs.

The package simulates an Euler-discretized system of N diffusing particles
whose drift/diffusion coefficients depend on a mollified, exponentially
weighted estimate of their own density, and provides the machinery to
measure how fast the estimate converges: in the particle number N, in the
mollifier bandwidth, and in the time step.
"""

from mckean.kernels import Kernel
from mckean.testcase import BarenblattParams, BarenblattVariant, PorousMediaCase
from mckean.particles import GridSchedule, ParticleEnsemble

__all__ = [
    "Kernel",
    "BarenblattParams",
    "BarenblattVariant",
    "PorousMediaCase",
    "GridSchedule",
    "ParticleEnsemble",
]

__version__ = "0.1.0"

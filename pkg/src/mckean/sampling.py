"""Reproducible randomness: keyed counter-based streams and initial sampling.

Every random draw in the package comes from a Philox generator keyed by
``(master_seed, purpose, replica, step)``.  Philox is counter-based, so a
stream is a pure function of its key: draws do not depend on the order in
which other streams are consumed, which makes runs reproducible under any
parallel schedule and makes coupling experiments exact.

Per-particle draws are laid out as rows of a per-``(replica, step)`` block:
row ``i`` of the Gaussian-increment block is particle ``i``'s increment.
Because blocks are filled sequentially in row-major order, a block of N
rows is a prefix of the block of N' > N rows drawn from the same key; a run
with fewer particles therefore reuses exactly the first N Brownian streams
of a larger coupled run.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Fixed purpose tags; part of the reproducibility contract.
PURPOSE_INIT = 1
PURPOSE_BROWNIAN = 2
PURPOSE_EVAL_POINTS = 3
PURPOSE_GENERIC = 7


@dataclass(frozen=True)
class RngStream:
    """A value-like handle on one keyed stream.

    Same key => same draw sequence, regardless of call order across streams.
    Streams with distinct keys are independent for all practical purposes
    (Philox guarantees distinct keys index distinct random sequences).
    """

    master_seed: int
    purpose: int = PURPOSE_GENERIC
    replica: int = 0
    step: int = 0

    def child(self, purpose: int | None = None, replica: int | None = None, step: int | None = None) -> "RngStream":
        return RngStream(
            master_seed=self.master_seed,
            purpose=self.purpose if purpose is None else purpose,
            replica=self.replica if replica is None else replica,
            step=self.step if step is None else step,
        )

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(
            entropy=int(self.master_seed) & 0xFFFFFFFFFFFFFFFF,
            spawn_key=(int(self.purpose), int(self.replica) & 0xFFFFFFFFFFFFFFFF, int(self.step)),
        )
        return np.random.Generator(np.random.Philox(seq))


def gaussian_increments(stream: RngStream, count: int, dim: int, dt: float) -> np.ndarray:
    """Block of ``count`` i.i.d. N(0, dt I_dim) rows; row i = particle i."""
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    block = stream.generator().standard_normal((count, dim))
    return block * np.sqrt(dt)


class EnvelopeError(ValueError):
    """Raised when the rejection envelope fails its construction audit."""


class AcceptanceRateError(RuntimeError):
    """Raised when the proposal is so badly matched that acceptance < 1%."""


class RejectionSampler:
    """Exact sampler for a compactly supported density via a Gaussian proposal.

    The envelope constant is found numerically: the ratio density/proposal is
    maximized over a dense audit grid covering the support, then inflated by
    a 5% safety factor.  The audit grid is kept so tests can re-check
    ``density <= envelope * proposal`` everywhere.
    """

    def __init__(
        self,
        density,
        dim: int,
        support_radius: float,
        center=None,
        proposal_std: float | None = None,
        safety: float = 1.05,
        audit_points: int = 10_000,
    ):
        self.density = density
        self.dim = dim
        self.center = np.zeros(dim) if center is None else np.asarray(center, dtype=float).reshape(dim)
        self.support_radius = float(support_radius)
        self.proposal_std = (
            1.2 * self.support_radius / 2.0 if proposal_std is None else float(proposal_std)
        )
        if dim == 1:
            grid = np.linspace(-self.support_radius, self.support_radius, audit_points)[:, None]
        else:
            # Deterministic audit cloud filling the support ball.
            g = np.random.Generator(np.random.Philox(np.random.SeedSequence(1234567)))
            raw = g.standard_normal((audit_points, dim))
            raw /= np.linalg.norm(raw, axis=1, keepdims=True)
            radii = self.support_radius * g.random(audit_points) ** (1.0 / dim)
            grid = raw * radii[:, None]
        self._audit_grid = self.center + grid
        with np.errstate(over="ignore", divide="ignore"):
            ratio = np.asarray(self.density(self._audit_grid)) / self._proposal_pdf(self._audit_grid)
        peak = float(np.max(ratio))
        if not np.isfinite(peak) or peak <= 0.0:
            raise EnvelopeError("density/proposal ratio is degenerate on the audit grid")
        self.envelope = safety * peak
        self.acceptance_rate: float | None = None

    def _proposal_pdf(self, pts: np.ndarray) -> np.ndarray:
        diff = pts - self.center
        sq = np.einsum("nd,nd->n", diff, diff)
        s = self.proposal_std
        return np.exp(-sq / (2.0 * s * s)) / (s * np.sqrt(2.0 * np.pi)) ** self.dim

    def audit_max_ratio(self) -> float:
        """Max of density / (envelope * proposal) over the audit grid (<= 1)."""
        ratio = np.asarray(self.density(self._audit_grid)) / (
            self.envelope * self._proposal_pdf(self._audit_grid)
        )
        return float(np.max(ratio))

    def sample(self, stream: RngStream, count: int) -> np.ndarray:
        """Draw ``count`` exact i.i.d. points.

        Accepted points are produced in proposal order, so the first N draws
        of a larger request form a prefix: coupled runs with different sizes
        share their initial particles.  Raises AcceptanceRateError when the
        measured acceptance rate falls below 1%.
        """
        gen = stream.generator()
        out = []
        accepted = 0
        proposed = 0
        # Fixed batch size keeps the candidate sequence independent of
        # `count`, so the first N accepted points form a prefix shared by
        # coupled runs of different sizes.
        batch = 4096
        while accepted < count:
            pts = self.center + self.proposal_std * gen.standard_normal((batch, self.dim))
            u = gen.random(batch)
            keep = u * self.envelope * self._proposal_pdf(pts) < np.asarray(self.density(pts))
            sel = pts[keep]
            out.append(sel)
            accepted += len(sel)
            proposed += batch
            if proposed >= 100 * count and accepted < 0.01 * proposed:
                raise AcceptanceRateError(
                    f"acceptance rate {accepted / proposed:.4f} below 1%; "
                    "proposal poorly matched to the target density"
                )
        self.acceptance_rate = accepted / proposed
        pts = np.concatenate(out, axis=0)[:count]
        return pts

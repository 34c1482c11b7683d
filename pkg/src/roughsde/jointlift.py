"""Canonical joint lift of a deterministic rough path and Brownian motion.

The lifted path lives in dimension d+e with block structure per step

    [ eta-block        cross          ]
    [ by-parts block   Brownian block ]

The diagonal blocks are copied verbatim from the inputs.  The upper cross
block integrates the (deterministic) first level of the rough path against
the Brownian increments with a chord rule on the fine grid; the lower block
follows from integration by parts, which enforces exact geometricity.  For
two deterministic rough paths no such cross block exists in general; the
construction relies on the driving noise being Brownian.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .brownian import coarsen_chord_lift, derive_rng, refine_times, sample_brownian
from .errors import GridError, ValidationError
from .paths import BVGridPath, RoughPathGrid, rho_alpha, rough_to_json

__all__ = [
    "JointLift",
    "cross_integral",
    "build_joint_lift",
    "sample_joint_lift",
    "lipschitz_probe",
    "interp_level1",
]


@dataclass(frozen=True)
class JointLift:
    """Joint rough path over (eta, B) plus provenance of its inputs."""

    grid: RoughPathGrid
    d: int
    e: int
    provenance: dict = field(default_factory=dict)

    def eta_block(self) -> RoughPathGrid:
        d = self.d
        return RoughPathGrid(
            d,
            self.grid.times,
            self.grid.level1s[:, :d],
            self.grid.level2s[:, :d, :d],
            self.grid.alpha,
        )

    def brownian_block(self) -> RoughPathGrid:
        d = self.d
        return RoughPathGrid(
            self.e,
            self.grid.times,
            self.grid.level1s[:, d:],
            self.grid.level2s[:, d:, d:],
            self.grid.alpha,
        )

    def to_json(self) -> str:
        obj = json.loads(rough_to_json(self.grid))
        obj["d"] = self.d
        obj["e"] = self.e
        obj["provenance"] = self.provenance
        return json.dumps(obj)


def eta_hash(eta: RoughPathGrid) -> str:
    return hashlib.sha256(rough_to_json(eta).encode()).hexdigest()[:16]


def interp_level1(eta: RoughPathGrid, fine_times: np.ndarray) -> np.ndarray:
    """First-level path of eta, linearly interpolated onto a finer grid."""
    vals = eta.level1_values()
    return np.column_stack(
        [np.interp(fine_times, eta.times, vals[:, k]) for k in range(eta.dim)]
    )


def _check_refining(coarse: np.ndarray, fine: np.ndarray, refine: int):
    if fine.size - 1 != (coarse.size - 1) * refine:
        raise GridError("fine grid must refine the coarse grid by the stated factor")
    if not np.allclose(fine[::refine], coarse, rtol=0.0, atol=1e-12):
        raise GridError("fine grid does not contain the coarse grid points")


def cross_integral(
    eta1: BVGridPath, B: BVGridPath, out_times=None
) -> np.ndarray:
    """Per-step integrals of the deterministic path against B, chord rule.

    Both paths must share one fine grid.  Each fine step contributes the
    time-averaged integrand times the Brownian increment, which is the exact
    Riemann-Stieltjes value when B is replaced by its piecewise-linear
    interpolant.  Returns increments of the running integral over the steps
    of ``out_times`` (default: the fine grid itself), shape (n_out, d, e).
    """
    if eta1.times.size != B.times.size or not np.array_equal(eta1.times, B.times):
        raise GridError("integrand and integrator must share one grid")
    avg = 0.5 * (eta1.values[:-1] + eta1.values[1:])
    dB = B.increments()
    fine_inc = np.einsum("ka,kb->kab", avg, dB)
    if out_times is None:
        return fine_inc
    out = np.asarray(out_times, dtype=float)
    idx = np.searchsorted(B.times, out)
    if not np.array_equal(B.times[idx], out):
        raise GridError("output times must be fine grid points")
    cum = np.concatenate(
        [np.zeros((1, eta1.dim, B.dim)), np.cumsum(fine_inc, axis=0)], axis=0
    )
    return np.diff(cum[idx], axis=0)


def _joint_step_blocks(eta: RoughPathGrid, eta_fine: np.ndarray, B_vals: np.ndarray, refine: int):
    """Per-step block assembly shared by the single and batched builders.

    ``B_vals`` has shape (..., n_fine+1, e); leading axes are batch axes.
    Returns level1 (..., n, d+e) and level2 (..., n, d+e, d+e).
    """
    d = eta.dim
    n = eta.n_steps
    e = B_vals.shape[-1]
    lead = B_vals.shape[:-2]

    bw1, bw2 = coarsen_chord_lift(B_vals, refine)  # (..., n, e), (..., n, e, e)

    # centered, time-averaged integrand per fine step, grouped by coarse step
    avg = 0.5 * (eta_fine[:-1] + eta_fine[1:])
    starts = np.repeat(eta_fine[:-1:refine], refine, axis=0)
    centered = (avg - starts).reshape(n, refine, d)
    dB = np.diff(B_vals, axis=-2).reshape(lead + (n, refine, e))
    cross = np.einsum("kra,...krb->...kab", centered, dB)  # (..., n, d, e)

    u = np.broadcast_to(eta.level1s, lead + (n, d))
    w = bw1
    lower = np.einsum("...ka,...kb->...kab", w, u) - np.swapaxes(cross, -1, -2)

    level1 = np.concatenate([u, w], axis=-1)
    level2 = np.zeros(lead + (n, d + e, d + e))
    level2[..., :, :d, :d] = eta.level2s
    level2[..., :, d:, d:] = bw2
    level2[..., :, :d, d:] = cross
    level2[..., :, d:, :d] = lower
    return level1, level2


def build_joint_lift(
    eta: RoughPathGrid,
    B: BVGridPath,
    refine: int,
    provenance: dict | None = None,
    geometricity_tol: float = 1e-8,
) -> JointLift:
    """Assemble the joint lift of a geometric rough path and a Brownian sample.

    ``B`` must be sampled on the grid refining ``eta.times`` by ``refine``.
    Diagonal blocks are copied from the inputs; the upper cross block uses
    the chord-rule integral of eta's interpolated first level against B, and
    the lower block is filled by integration by parts so each increment is
    geometric to machine precision.
    """
    if refine < 1:
        raise ValidationError("refine must be >= 1")
    resid = eta.max_geometricity_residual()
    scale = max(1.0, float(np.max(np.abs(eta.level1s))) ** 2)
    if resid > geometricity_tol * scale:
        raise ValidationError(
            f"eta is not geometric (residual {resid:.3e})"
        )
    _check_refining(eta.times, B.times, refine)
    eta_fine = interp_level1(eta, B.times)
    level1, level2 = _joint_step_blocks(eta, eta_fine, B.values, refine)
    grid = RoughPathGrid(eta.dim + B.dim, eta.times, level1, level2, eta.alpha)
    prov = {"eta_hash": eta_hash(eta), "refine": refine}
    if provenance:
        prov.update(provenance)
    return JointLift(grid, eta.dim, B.dim, prov)


def sample_joint_lift(
    eta: RoughPathGrid, e: int, seed, refine: int
) -> tuple[JointLift, BVGridPath]:
    """Sample a fresh Brownian path on the refined grid and lift jointly."""
    fine = sample_brownian(refine_times(eta.times, refine), e, seed)
    lift = build_joint_lift(eta, fine, refine, provenance={"seed": _seed_repr(seed)})
    return lift, fine


def _seed_repr(seed):
    return int(seed) if np.isscalar(seed) else "generator"


def batch_joint_increments(eta: RoughPathGrid, B_batch: np.ndarray, refine: int):
    """Joint-lift step increments for a batch of Brownian samples.

    ``B_batch`` has shape (P, n_fine+1, e).  Returns (level1, level2) with
    shapes (P, n, d+e) and (P, n, d+e, d+e), bit-identical per path to the
    single-path builder.
    """
    fine_t = refine_times(eta.times, refine)
    if B_batch.shape[-2] != fine_t.size:
        raise GridError("batch sample length does not match the refined grid")
    eta_fine = interp_level1(eta, fine_t)
    return _joint_step_blocks(eta, eta_fine, B_batch, refine)


def lipschitz_probe(
    eta: RoughPathGrid,
    eta_bar: RoughPathGrid,
    ensemble,
    alpha: float,
    alpha_prime: float,
    q: float = 2.0,
    e: int = 2,
    refine: int | None = None,
):
    """Monte Carlo estimate of the L^q distance between the two joint lifts.

    Shares the Brownian samples between both lifts (common random numbers)
    and returns (lhs, rhs): the empirical L^q norm of the alpha'-Hoelder
    distance of the lifts, and the alpha-Hoelder distance of the inputs.
    Diagnostic only; no pass/fail decision here.
    """
    if not alpha_prime < alpha:
        raise ValidationError("alpha_prime must be strictly smaller than alpha")
    if not np.array_equal(eta.times, eta_bar.times):
        raise GridError("probe requires both rough paths on one grid")
    r = ensemble.refine if refine is None else refine
    samples = np.empty(ensemble.n_paths)
    for i in range(ensemble.n_paths):
        rng = derive_rng(ensemble.master_seed, i)
        fine = sample_brownian(refine_times(eta.times, r), e, rng)
        lift_a = build_joint_lift(eta, fine, r)
        lift_b = build_joint_lift(eta_bar, fine, r)
        samples[i] = rho_alpha(lift_a.grid, lift_b.grid, alpha_prime)
    lhs = float(np.mean(samples**q) ** (1.0 / q))
    rhs = rho_alpha(eta, eta_bar, alpha)
    return lhs, rhs

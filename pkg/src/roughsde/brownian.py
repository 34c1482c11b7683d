"""Brownian sampling on grids and the geometric (Stratonovich) lift.

Second-level increments come from chord signatures of a piecewise-linear
fine-grid sample, coarsened to the output grid by the group product.  The
refinement factor controls how well the chord areas approximate the true
Levy area; the lift is geometric by construction at every refinement.

Per-path randomness derives statelessly from (master_seed, path_index), so
ensembles are independent of evaluation order and worker count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridError, ValidationError
from .paths import BVGridPath, RoughPathGrid, signature_pl

__all__ = [
    "EnsembleConfig",
    "derive_rng",
    "sample_brownian",
    "refine_times",
    "stratonovich_lift",
    "brownian_lift",
]

DEFAULT_REFINE = 64


@dataclass(frozen=True)
class EnsembleConfig:
    """Monte Carlo controls: path count, master seed, fine-grid refinement."""

    n_paths: int
    master_seed: int
    refine: int = DEFAULT_REFINE

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValidationError("n_paths must be >= 1")
        if self.refine < 1:
            raise ValidationError("refine must be >= 1")


def derive_rng(master_seed: int, index: int | None = None) -> np.random.Generator:
    """Deterministic per-path generator from (master_seed, index)."""
    if index is None:
        seq = np.random.SeedSequence(master_seed)
    else:
        seq = np.random.SeedSequence(master_seed, spawn_key=(index,))
    return np.random.default_rng(seq)


def sample_brownian(times, e: int, seed) -> BVGridPath:
    """Sample an e-dimensional Brownian path on the given grid.

    Starts at zero; increments are independent Gaussians with variance equal
    to the step length per coordinate.  ``seed`` may be an integer or a
    ``numpy.random.Generator``.
    """
    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or t.size < 2:
        raise GridError("time grid needs at least two points")
    if e < 1:
        raise ValidationError("dimension e must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else derive_rng(int(seed))
    dt = np.diff(t)
    if np.any(dt <= 0):
        raise GridError("times must be strictly increasing")
    inc = rng.standard_normal((dt.size, e)) * np.sqrt(dt)[:, None]
    vals = np.zeros((t.size, e))
    np.cumsum(inc, axis=0, out=vals[1:])
    return BVGridPath(t, vals)


def sample_brownian_batch(times, e: int, master_seed: int, n_paths: int) -> np.ndarray:
    """Independent Brownian samples, shape (n_paths, len(times), e).

    Path i uses the generator derived from (master_seed, i), bit-identical to
    ``sample_brownian(times, e, derive_rng(master_seed, i))``.
    """
    t = np.asarray(times, dtype=float)
    dt = np.diff(t)
    out = np.zeros((n_paths, t.size, e))
    sq = np.sqrt(dt)[:, None]
    for i in range(n_paths):
        rng = derive_rng(master_seed, i)
        np.cumsum(rng.standard_normal((dt.size, e)) * sq, axis=0, out=out[i, 1:])
    return out


def refine_times(times, refine: int) -> np.ndarray:
    """Insert refine-1 equally spaced points into every step."""
    t = np.asarray(times, dtype=float)
    if refine < 1:
        raise ValidationError("refine must be >= 1")
    if refine == 1:
        return t.copy()
    frac = np.arange(refine) / refine
    fine = (t[:-1, None] + np.diff(t)[:, None] * frac[None, :]).reshape(-1)
    return np.append(fine, t[-1])


def coarsen_chord_lift(values: np.ndarray, refine: int):
    """Per coarse step: level1 and chord-signature level2 from fine values.

    ``values`` has shape (..., n_fine+1, e) with n_fine divisible by refine.
    Returns (level1, level2) with shapes (..., n, e) and (..., n, e, e).
    """
    nf = values.shape[-2] - 1
    if nf % refine != 0:
        raise GridError("fine step count must be divisible by refine")
    n = nf // refine
    e = values.shape[-1]
    lead = values.shape[:-2]
    delta = np.diff(values, axis=-2).reshape(lead + (n, refine, e))
    # prefix of the fine path inside each coarse step, relative to its start
    cum = np.cumsum(delta, axis=-2)
    prefix = np.concatenate([np.zeros(lead + (n, 1, e)), cum[..., :-1, :]], axis=-2)
    level1 = cum[..., -1, :]
    level2 = np.einsum("...kra,...krb->...kab", prefix, delta) + 0.5 * np.einsum(
        "...kra,...krb->...kab", delta, delta
    )
    return level1, level2


def stratonovich_lift(B: BVGridPath, refine: int, alpha: float = 0.5) -> RoughPathGrid:
    """Geometric lift of a fine-grid Brownian sample, coarsened by ``refine``.

    ``B`` must be sampled on the fine grid; the output grid keeps every
    refine-th time.  The symmetric part of each level-2 increment is exactly
    half the squared level-1 increment, and the antisymmetric chord area
    converges to the Levy area as the refinement grows.
    """
    if refine < 1:
        raise ValidationError("refine must be >= 1")
    if refine == 1:
        return signature_pl(B, alpha)
    if B.n_steps % refine != 0:
        raise GridError("fine path must have a step count divisible by refine")
    level1, level2 = coarsen_chord_lift(B.values, refine)
    out_times = B.times[::refine]
    return RoughPathGrid(B.dim, out_times, level1, level2, alpha)


def brownian_lift(times, e: int, seed, refine: int = DEFAULT_REFINE, alpha: float = 0.5):
    """Sample on the refine-times-finer grid and lift to the output grid.

    Returns (lift, fine_path); the lift's first level equals the fine sample
    restricted to the output times.
    """
    fine = sample_brownian(refine_times(times, refine), e, seed)
    return stratonovich_lift(fine, refine, alpha), fine

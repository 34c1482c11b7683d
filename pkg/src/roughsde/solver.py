"""Differential-equation solvers driven by step-2 rough paths.

The workhorse is the step-2 increment (Davie/Euler) scheme

    S+ = S + a(S) dt + sum_i V_i(S) g1^i + sum_{i,j} DV_j(S) V_i(S) g2^{i,j}

which consumes the full group increment of the driver per step.  Steps whose
driver norm exceeds a threshold are split in log-coordinates before stepping,
which avoids spurious blow-ups on coarse grids.  A Heun-type (midpoint
corrected) Stratonovich scheme on a fine grid serves as the reference solver
for consistency tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .brownian import EnsembleConfig, derive_rng, refine_times, sample_brownian
from .errors import BlowUpError, GridError, ValidationError
from .fields import VectorFieldSet
from .group import GroupElement2, hom_norm
from .jointlift import batch_joint_increments
from .paths import RoughPathGrid
from .utils import path_chunks, resolve_workers, run_chunked

__all__ = [
    "RSDESolution",
    "EnsembleResult",
    "rde_step",
    "adjoin_time",
    "solve_rde",
    "solve_rsde_ensemble",
    "sde_stratonovich_reference",
    "heun_strat",
]


@dataclass(frozen=True)
class RSDESolution:
    """Trajectory of a single solve: times plus states, shape (n+1, m)."""

    times: np.ndarray
    states: np.ndarray
    seed: int | None = None


@dataclass
class EnsembleResult:
    """Monte Carlo ensemble of trajectories plus summary statistics.

    ``states`` has shape (n_paths, n+1, m) when paths are stored, otherwise
    only ``terminal`` (n_paths, m) and ``sup_norm`` (n_paths,) are kept.
    ``blown`` flags paths that left the finite range; they are frozen at
    their last finite state and excluded from the moment summaries.
    """

    times: np.ndarray
    terminal: np.ndarray
    sup_norm: np.ndarray
    blown: np.ndarray
    seeds: dict
    states: np.ndarray | None = None

    @property
    def blowup_count(self) -> int:
        return int(np.sum(self.blown))

    def summary(self) -> dict:
        ok = ~self.blown
        sup = self.sup_norm[ok]
        return {
            "q_moments": {
                "q1": float(np.mean(sup)) if sup.size else float("nan"),
                "q2": float(np.mean(sup**2)) if sup.size else float("nan"),
            },
            "blowup_count": self.blowup_count,
            "seeds": self.seeds,
        }


def _davie_update(s, fields: VectorFieldSet, dt, g1, g2):
    """One raw scheme update on a batch of states (no finiteness check)."""
    with np.errstate(over="ignore", invalid="ignore"):
        V = fields.eval_columns(s)  # (b, m, k)
        J = fields.eval_jacobians(s)  # (b, k, m, m)
        drift = fields.eval_drift(s)
        dt_arr = np.asarray(dt, dtype=float)
        if dt_arr.ndim == 1:
            dt_arr = dt_arr[:, None]
        first = np.einsum(
            "bmk,bk->bm", V, np.broadcast_to(g1, (s.shape[0], g1.shape[-1]))
        )
        # DV_j(S) V_i(S) contracted against g2^{i,j}
        dvv = np.einsum("bjmn,bni->bmij", J, V)
        g2b = np.broadcast_to(g2, (s.shape[0],) + g2.shape[-2:])
        second = np.einsum("bmij,bij->bm", dvv, g2b)
        return s + drift * dt_arr + first + second


def rde_step(S, fields: VectorFieldSet, dt: float, g: GroupElement2):
    """Single step of the step-2 increment scheme.

    ``S`` may be one state (m,) or a batch (b, m); ``g`` is the driver's
    group increment over the step (non-time channels, one column per channel)
    and the drift consumes ``dt`` separately.

    Raises:
        BlowUpError: if the update produces non-finite entries.
    """
    if g.dim != fields.n_columns:
        raise ValidationError(
            f"driver has {g.dim} channels but fields supply {fields.n_columns} columns"
        )
    S = np.asarray(S, dtype=float)
    single = S.ndim == 1
    batch = S[None, :] if single else S
    out = _davie_update(batch, fields, dt, g.level1, g.level2)
    if not np.all(np.isfinite(out)):
        raise BlowUpError("step produced non-finite state")
    return out[0] if single else out


def adjoin_time(x: RoughPathGrid) -> RoughPathGrid:
    """Adjoin the running time as channel 0 with exact increments.

    Time-time and time-channel second-level entries follow the chord rule,
    which is exact for the linear time path; the result stays geometric.
    """
    n, d = x.level1s.shape
    dt = np.diff(x.times)
    l1 = np.concatenate([dt[:, None], x.level1s], axis=1)
    l2 = np.zeros((n, d + 1, d + 1))
    l2[:, 0, 0] = 0.5 * dt**2
    l2[:, 0, 1:] = 0.5 * dt[:, None] * x.level1s
    l2[:, 1:, 0] = 0.5 * x.level1s * dt[:, None]
    l2[:, 1:, 1:] = x.level2s
    return RoughPathGrid(d + 1, x.times, l1, l2, x.alpha)


def _split_depth(norms, max_step_norm):
    """Halvings needed to bring each step norm at or below the threshold."""
    with np.errstate(divide="ignore"):
        ratio = norms / max_step_norm
    depth = np.zeros(norms.shape, dtype=int)
    mask = ratio > 1.0
    depth[mask] = np.ceil(np.log2(ratio[mask])).astype(int)
    # guard: splitting halves the level-1 norm exactly, the area norm by 2
    return depth


def _step_with_splits(s, fields, dt, g1, g2, depth: int):
    """Apply 2^depth substeps of the log-split increment to every row."""
    if depth == 0:
        return _davie_update(s, fields, dt, g1, g2)
    halves = 2**depth
    area = 0.5 * (g2 - np.swapaxes(g2, -1, -2))
    v = g1 / halves
    a = area / halves
    sub2 = 0.5 * np.einsum("...a,...b->...ab", v, v) + a
    sub_dt = dt / halves
    for _ in range(halves):
        s = _davie_update(s, fields, sub_dt, v, sub2)
    return s


def solve_rde(
    S0,
    fields: VectorFieldSet,
    x: RoughPathGrid,
    time_channel: int | None = 0,
    max_step_norm: float = 1.0,
) -> RSDESolution:
    """Deterministic RDE solve along a grid rough path.

    ``x`` carries the time channel at index ``time_channel`` (pass None when
    the grid holds driving channels only; the step length then comes from the
    time grid).  Oversized steps are split in log-coordinates until their
    homogeneous norm is at most ``max_step_norm``.

    Raises:
        BlowUpError: with the failing time when the state leaves the finite
            range.
    """
    S0 = np.asarray(S0, dtype=float)
    single = S0.ndim == 1
    s = S0[None, :].copy() if single else S0.copy()
    if time_channel is None:
        dts = np.diff(x.times)
        l1 = x.level1s
        l2 = x.level2s
    else:
        if time_channel != 0:
            raise ValidationError("time channel must be channel 0")
        dts = x.level1s[:, 0]
        l1 = x.level1s[:, 1:]
        l2 = x.level2s[:, 1:, 1:]
    if l1.shape[1] != fields.n_columns:
        raise ValidationError(
            f"driver has {l1.shape[1]} channels but fields supply {fields.n_columns} columns"
        )
    n = x.n_steps
    out = np.empty((s.shape[0], n + 1, s.shape[1]))
    out[:, 0] = s
    for k in range(n):
        n1 = np.linalg.norm(l1[k])
        n2 = math.sqrt(np.linalg.norm(l2[k]))
        depth = int(_split_depth(np.array([max(n1, n2)]), max_step_norm)[0])
        s = _step_with_splits(s, fields, float(dts[k]), l1[k], l2[k], depth)
        if not np.all(np.isfinite(s)):
            raise BlowUpError(
                f"blow-up at t={x.times[k + 1]:g}", time=float(x.times[k + 1])
            )
        out[:, k + 1] = s
    states = out[0] if single else out
    return RSDESolution(x.times.copy(), states)


def _solve_batched_increments(
    S0, fields: VectorFieldSet, dts, l1, l2, max_step_norm=1.0, store_paths=True
):
    """March a batch of paths with per-path increments.

    ``l1`` (P, n, k), ``l2`` (P, n, k, k); ``S0`` (m,) or (P, m).  Non-finite
    paths are frozen and masked out rather than raising.
    Returns (states or None, terminal, sup_norm, blown).
    """
    P, n, k = l1.shape
    S0 = np.asarray(S0, dtype=float)
    s = np.broadcast_to(S0, (P, S0.shape[-1])).copy() if S0.ndim == 1 else S0.copy()
    m = s.shape[1]
    blown = np.zeros(P, dtype=bool)
    sup = np.linalg.norm(s, axis=1)
    states = np.empty((P, n + 1, m)) if store_paths else None
    if store_paths:
        states[:, 0] = s
    norms = np.maximum(
        np.linalg.norm(l1, axis=2),
        np.sqrt(np.linalg.norm(l2.reshape(P, n, -1), axis=2)),
    )
    depths = _split_depth(norms, max_step_norm)
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(n):
            prev = s.copy()
            dj = depths[:, j]
            new = np.empty_like(s)
            for depth in np.unique(dj):
                rows = np.nonzero(dj == depth)[0]
                new[rows] = _step_with_splits(
                    s[rows], fields, float(dts[j]), l1[rows, j], l2[rows, j], int(depth)
                )
            bad = ~np.all(np.isfinite(new), axis=1)
            if np.any(bad):
                new[bad] = prev[bad]
                blown |= bad
            keep = ~blown
            s = np.where(keep[:, None], new, prev)
            sup = np.maximum(sup, np.linalg.norm(s, axis=1))
            if store_paths:
                states[:, j + 1] = s
    return states, s, sup, blown


def solve_rsde_ensemble(
    S0,
    fields: VectorFieldSet,
    eta: RoughPathGrid,
    ensemble: EnsembleConfig,
    max_step_norm: float = 1.0,
    store_paths: bool = True,
    n_workers: int | None = None,
) -> EnsembleResult:
    """Monte Carlo solve of the mixed equation driven by (t, joint lift).

    The number of Brownian channels is inferred as ``fields.n_columns -
    eta.dim``; the joint lift of ``eta`` and a fresh Brownian sample is built
    per path with per-path seeds derived from the master seed, so results do
    not depend on chunking or worker count.  Blown-up paths are counted and
    frozen, not fatal.
    """
    d = eta.dim
    e = fields.n_columns - d
    if e < 0:
        raise ValidationError("fields supply fewer columns than eta has channels")
    dts = np.diff(eta.times)
    n = eta.n_steps

    if e == 0:
        sol = solve_rde(S0, fields, eta, time_channel=None, max_step_norm=max_step_norm)
        states = sol.states[None, :, :]
        sup = np.array([float(np.max(np.linalg.norm(sol.states, axis=1)))])
        return EnsembleResult(
            eta.times.copy(),
            sol.states[-1][None, :],
            sup,
            np.zeros(1, dtype=bool),
            {"master_seed": ensemble.master_seed, "n_paths": 1, "refine": ensemble.refine},
            states if store_paths else None,
        )

    fine_t = refine_times(eta.times, ensemble.refine)

    def run(indices):
        B = np.zeros((indices.size, fine_t.size, e))
        sq = np.sqrt(np.diff(fine_t))[:, None]
        for row, idx in enumerate(indices):
            rng = derive_rng(ensemble.master_seed, int(idx))
            np.cumsum(rng.standard_normal((fine_t.size - 1, e)) * sq, axis=0, out=B[row, 1:])
        l1, l2 = batch_joint_increments(eta, B, ensemble.refine)
        return _solve_batched_increments(
            S0, fields, dts, l1, l2, max_step_norm, store_paths
        )

    chunks = path_chunks(ensemble.n_paths)
    results = run_chunked(run, chunks, resolve_workers(n_workers))
    terminal = np.concatenate([r[1] for r in results])
    sup = np.concatenate([r[2] for r in results])
    blown = np.concatenate([r[3] for r in results])
    states = np.concatenate([r[0] for r in results]) if store_paths else None
    return EnsembleResult(
        eta.times.copy(),
        terminal,
        sup,
        blown,
        {
            "master_seed": ensemble.master_seed,
            "n_paths": ensemble.n_paths,
            "refine": ensemble.refine,
        },
        states,
    )


def heun_strat(S0, fields: VectorFieldSet, times, dW) -> np.ndarray:
    """Heun predictor-corrector scheme for Stratonovich equations.

    ``dW`` holds the per-step increments of all driving channels, shape
    (n, k) shared across the batch or (P, n, k) per path.  Returns terminal
    states when ``S0`` is a single state and dW is batched, with shape
    (P, m); otherwise the full trajectory (n+1, m).
    """
    t = np.asarray(times, dtype=float)
    dts = np.diff(t)
    dW = np.asarray(dW, dtype=float)
    S0 = np.asarray(S0, dtype=float)
    batched = dW.ndim == 3
    if batched:
        P = dW.shape[0]
        s = np.broadcast_to(S0, (P, S0.shape[-1])).copy()
        for j in range(dts.size):
            inc = dW[:, j, :]
            drift = fields.eval_drift(s)
            V = fields.eval_columns(s)
            pred = s + drift * dts[j] + np.einsum("bmk,bk->bm", V, inc)
            drift2 = fields.eval_drift(pred)
            V2 = fields.eval_columns(pred)
            s = (
                s
                + 0.5 * (drift + drift2) * dts[j]
                + 0.5 * np.einsum("bmk,bk->bm", V + V2, inc)
            )
        return s
    s = S0[None, :].copy()
    out = np.empty((dts.size + 1, S0.shape[-1]))
    out[0] = S0
    for j in range(dts.size):
        inc = dW[None, j, :]
        drift = fields.eval_drift(s)
        V = fields.eval_columns(s)
        pred = s + drift * dts[j] + np.einsum("bmk,bk->bm", V, inc)
        drift2 = fields.eval_drift(pred)
        V2 = fields.eval_columns(pred)
        s = s + 0.5 * (drift + drift2) * dts[j] + 0.5 * np.einsum(
            "bmk,bk->bm", V + V2, inc
        )
        out[j + 1] = s[0]
    return out


def sde_stratonovich_reference(
    S0, fields: VectorFieldSet, times, dW
) -> np.ndarray:
    """Reference Stratonovich solution on a fine grid (Heun scheme).

    Frozen driver channels are passed through ``dW`` alongside sampled ones;
    the scheme treats all channels alike.
    """
    return heun_strat(S0, fields, times, dW)

"""Feynman-Kac evaluation of linear PDEs with gradient-type rough noise.

The value function is represented as the expected terminal payoff of forward
characteristics

    dS = a_corrected(S) dt + sigma(S) o dB + c(S) d eta,   S_t = x,

where the corrected drift removes the Stratonovich term of sigma, so the
generator of S is (1/2) Tr[sigma sigma' D^2] + a . D plus the rough advection
c . D along eta.  A monotone explicit finite-difference scheme provides the
reference solution in one space dimension for piecewise-C^1 drivers.

Monte Carlo values share one set of driving increments across all lattice
points, which makes comparison monotonicity hold sample-wise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .brownian import EnsembleConfig, derive_rng, refine_times
from .errors import GridError, ValidationError
from .jointlift import batch_joint_increments
from .paths import BVGridPath, RoughPathGrid, resample, signature_pl
from .solver import _solve_batched_increments
from .utils import path_chunks, resolve_workers, run_chunked

__all__ = [
    "RPDEProblem",
    "ValueGrid",
    "drift_correction",
    "feynman_kac",
    "fd_reference",
    "rpde_approx_study",
]

_FD_STEP = 1e-6


@dataclass
class RPDEProblem:
    """Terminal-value problem data.

    ``sigma(x) -> (b, m, m')`` is the diffusion matrix field, ``a(x) ->
    (b, m)`` the uncorrected drift, ``c(x) -> (b, m, d)`` the rough vector
    fields (one column per driver channel), ``phi(x) -> (b,)`` the bounded
    terminal datum and ``eta`` the driver on [0, T].
    """

    m: int
    sigma: Callable
    a: Callable
    c: Callable
    phi: Callable
    eta: RoughPathGrid

    def __post_init__(self):
        self.m = int(self.m)

    @property
    def horizon(self) -> float:
        return float(self.eta.times[-1])


@dataclass(frozen=True)
class ValueGrid:
    """Monte Carlo value surface at one evaluation time."""

    t: float
    lattice: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    blowup_fraction: float = 0.0


def _sigma_columns(sigma: Callable, x: np.ndarray) -> np.ndarray:
    out = np.asarray(sigma(x), dtype=float)
    if out.ndim == 2:
        out = out[:, :, None]
    return out


def drift_correction(sigma: Callable, a: Callable, m: int) -> Callable:
    """Corrected drift x -> a(x) - 1/2 sum_i (D sigma^i)(x) sigma^i(x).

    The directional-derivative term is the Stratonovich-to-Ito correction of
    the diffusion part; for constant sigma the drift is returned unchanged.
    Jacobians of the columns come from central finite differences.
    """

    def corrected(x):
        x = np.asarray(x, dtype=float)
        cols = _sigma_columns(sigma, x)  # (b, m, mp)
        b, _, mp = cols.shape
        h = _FD_STEP * (1.0 + np.linalg.norm(x, axis=1))
        total = np.zeros((b, m))
        for j in range(m):
            bump = np.zeros_like(x)
            bump[:, j] = h
            dcols = (_sigma_columns(sigma, x + bump) - _sigma_columns(sigma, x - bump)) / (
                2.0 * h[:, None, None]
            )  # (b, m, mp) derivative in x_j
            # sum_i dsigma^i/dx_j * sigma^i_j  contributes via column i rows
            total += np.einsum("bki,bi->bk", dcols, cols[:, j, :])
        return np.asarray(a(x), dtype=float) - 0.5 * total

    return corrected


def _build_fk_fields(problem: RPDEProblem, e: int):
    from .fields import VectorFieldSet

    corrected = drift_correction(problem.sigma, problem.a, problem.m)

    def make_rough_column(i):
        def col(x):
            return np.asarray(problem.c(x), dtype=float)[:, :, i]

        return col

    def make_noise_column(j):
        def col(x):
            return _sigma_columns(problem.sigma, x)[:, :, j]

        return col

    d = problem.eta.dim
    columns = [make_rough_column(i) for i in range(d)]
    columns += [make_noise_column(j) for j in range(e)]
    return VectorFieldSet(problem.m, corrected, columns)


def _slice_driver(eta: RoughPathGrid, t: float) -> RoughPathGrid:
    idx = int(np.searchsorted(eta.times, t))
    if idx >= eta.n_steps or eta.times[idx] != t:
        raise GridError("evaluation time must be a driver grid point before T")
    return eta.restrict(idx, eta.n_steps)


def feynman_kac(
    problem: RPDEProblem,
    t: float,
    x_lattice,
    ensemble: EnsembleConfig,
    n_workers: int | None = None,
) -> ValueGrid:
    """Monte Carlo value surface v(t, .) on a lattice of starting points.

    All lattice points ride the same driving increments per sample path
    (common random numbers); the terminal condition is exact by construction
    since t == T short-circuits to the terminal datum.
    """
    lattice = np.asarray(x_lattice, dtype=float)
    if lattice.ndim == 1:
        lattice = lattice[:, None]
    if lattice.shape[1] != problem.m:
        raise ValidationError("lattice dimension does not match the state space")
    n_lat = lattice.shape[0]
    T = problem.horizon
    if t == T:
        vals = np.asarray(problem.phi(lattice), dtype=float)
        return ValueGrid(t, lattice, vals, np.zeros(n_lat), 0.0)

    eta_slice = _slice_driver(problem.eta, t)
    cols = _sigma_columns(problem.sigma, lattice[:1])
    e = cols.shape[2]
    fields = _build_fk_fields(problem, e)
    fine_t = refine_times(eta_slice.times, ensemble.refine)
    dts = np.diff(eta_slice.times)
    sq = np.sqrt(np.diff(fine_t))[:, None]

    def run(indices):
        P = indices.size
        B = np.zeros((P, fine_t.size, e))
        for row, idx in enumerate(indices):
            gen = derive_rng(ensemble.master_seed, int(idx))
            np.cumsum(gen.standard_normal((fine_t.size - 1, e)) * sq, axis=0, out=B[row, 1:])
        l1, l2 = batch_joint_increments(eta_slice, B, ensemble.refine)
        l1r = np.repeat(l1, n_lat, axis=0)
        l2r = np.repeat(l2, n_lat, axis=0)
        s0 = np.tile(lattice, (P, 1))
        _, terminal, _, blown = _solve_batched_increments(
            s0, fields, dts, l1r, l2r, store_paths=False
        )
        payoff = np.asarray(problem.phi(terminal), dtype=float).reshape(P, n_lat)
        return payoff, blown.reshape(P, n_lat)

    chunks = path_chunks(ensemble.n_paths, chunk_size=max(1, 8192 // max(n_lat, 1)))
    outs = run_chunked(run, chunks, resolve_workers(n_workers))
    payoff = np.concatenate([o[0] for o in outs], axis=0)
    blown = np.concatenate([o[1] for o in outs], axis=0)
    ok = ~blown
    counts = ok.sum(axis=0)
    if np.any(counts == 0):
        raise ValidationError("all samples blew up at some lattice point")
    masked = np.where(ok, payoff, 0.0)
    vals = masked.sum(axis=0) / counts
    second = np.where(ok, (payoff - vals[None, :]) ** 2, 0.0).sum(axis=0) / counts
    stderr = np.sqrt(second / counts)
    return ValueGrid(
        float(t), lattice, vals, stderr, float(blown.mean())
    )


# ---------------------------------------------------------------------------
# finite-difference reference (one space dimension, piecewise-C^1 driver)


def fd_reference(
    problem: RPDEProblem,
    t: float,
    x_lattice,
    n_space: int = 801,
    pad: float | None = None,
    cfl: float = 0.4,
    max_substeps: int = 2_000_000,
) -> ValueGrid:
    """Explicit upwind/central scheme for the backward equation, m == 1 only.

    Marches v_t = -(1/2) s2 v_xx - (a + c . etadot) v_x backward from the
    terminal datum on a padded lattice; the advection term uses central
    differencing where the cell Peclet number allows it and monotone upwind
    otherwise.  Valid for drivers read as piecewise-linear (an approximating
    C^1 path); the step slopes supply etadot.

    Raises:
        ValidationError: when m != 1 or the CFL-constrained substep count
            explodes past ``max_substeps``.
    """
    if problem.m != 1:
        raise ValidationError("finite-difference reference supports m == 1 only")
    lattice = np.asarray(x_lattice, dtype=float).reshape(-1)
    T = problem.horizon
    eta = problem.eta
    idx = int(np.searchsorted(eta.times, t))
    if idx >= eta.times.size or eta.times[idx] != t:
        raise GridError("evaluation time must be a driver grid point")

    dts = np.diff(eta.times)
    slopes = eta.level1s / dts[:, None]  # (n, d) etadot per step

    def probe(fn, pts):
        return np.asarray(fn(pts[:, None]), dtype=float)

    lo, hi = float(lattice.min()), float(lattice.max())
    span = hi - lo
    probe_pts = np.linspace(lo - 0.5 * span - 1.0, hi + 0.5 * span + 1.0, 64)
    s2_probe = np.sum(_sigma_columns(problem.sigma, probe_pts[:, None])[:, 0, :] ** 2, 1)
    adv_probe = probe(problem.a, probe_pts)[:, 0]
    c_probe = np.asarray(problem.c(probe_pts[:, None]), dtype=float)[:, 0, :]
    max_slope = np.max(np.abs(slopes)) if slopes.size else 0.0
    speed = np.max(np.abs(adv_probe)) + np.max(np.abs(c_probe)) * max_slope
    diff_max = float(np.max(s2_probe))
    if pad is None:
        pad = 4.0 * np.sqrt(max(diff_max, 1e-12) * (T - t)) + 1.5 * speed * (T - t) + 0.25 * span + 0.1
    grid = np.linspace(lo - pad, hi + pad, n_space)
    dx = grid[1] - grid[0]

    v = np.asarray(problem.phi(grid[:, None]), dtype=float)
    s2 = np.sum(_sigma_columns(problem.sigma, grid[:, None])[:, 0, :] ** 2, axis=1)
    a_val = probe(problem.a, grid)[:, 0]
    c_val = np.asarray(problem.c(grid[:, None]), dtype=float)[:, 0, :]

    total_sub = 0
    for step in range(eta.n_steps - 1, idx - 1, -1):
        adv = a_val + c_val @ slopes[step]
        rate = diff_max / dx**2 + np.max(np.abs(adv)) / dx
        n_sub = max(1, int(np.ceil(dts[step] * rate / cfl)))
        total_sub += n_sub
        if total_sub > max_substeps:
            raise ValidationError(
                "CFL-constrained substep count exceeds the configured limit"
            )
        h = dts[step] / n_sub
        central_ok = np.abs(adv) * dx <= s2 + 1e-15
        for _ in range(n_sub):
            vxx = np.zeros_like(v)
            vxx[1:-1] = (v[2:] - 2 * v[1:-1] + v[:-2]) / dx**2
            vx_c = np.zeros_like(v)
            vx_c[1:-1] = (v[2:] - v[:-2]) / (2 * dx)
            vx_up = np.zeros_like(v)
            fwd = np.zeros_like(v)
            bwd = np.zeros_like(v)
            fwd[:-1] = (v[1:] - v[:-1]) / dx
            bwd[1:] = (v[1:] - v[:-1]) / dx
            vx_up = np.where(adv >= 0, fwd, bwd)
            vx = np.where(central_ok, vx_c, vx_up)
            v = v + h * (0.5 * s2 * vxx + adv * vx)
            v[0] = v[1]
            v[-1] = v[-2]
    vals = np.interp(lattice, grid, v)
    return ValueGrid(float(t), lattice[:, None], vals, np.zeros(lattice.size), 0.0)


def rpde_approx_study(
    problem: RPDEProblem,
    t: float,
    x_lattice,
    ensemble: EnsembleConfig,
    levels=(3, 4, 5),
    n_workers: int | None = None,
):
    """Sup-lattice discrepancy of dyadic piecewise-linear driver approximations.

    For each level k the driver's first level is sampled at 2^k + 1 points,
    lifted as a piecewise-linear signature and refined back onto the full
    grid; the Feynman-Kac value with frozen seeds is compared against the
    value under the original driver.  Returns a list of (level, sup_gap).
    """
    eta = problem.eta
    reference = feynman_kac(problem, t, x_lattice, ensemble, n_workers=n_workers)
    rows = []
    for k in levels:
        n_coarse = 2**k
        coarse_times = eta.times[:: max(1, eta.n_steps // n_coarse)]
        if coarse_times[-1] != eta.times[-1]:
            coarse_times = np.append(coarse_times, eta.times[-1])
        vals = eta.level1_values()
        coarse_vals = np.column_stack(
            [np.interp(coarse_times, eta.times, vals[:, i]) for i in range(eta.dim)]
        )
        pl = signature_pl(BVGridPath(coarse_times, coarse_vals), eta.alpha)
        eta_k = resample(pl, eta.times)
        approx_problem = RPDEProblem(
            problem.m, problem.sigma, problem.a, problem.c, problem.phi, eta_k
        )
        vg = feynman_kac(approx_problem, t, x_lattice, ensemble, n_workers=n_workers)
        rows.append((k, float(np.max(np.abs(vg.values - reference.values)))))
    return rows

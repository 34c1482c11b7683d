"""Grid rough paths: signatures, norms, distances, p-variation, translation.

Paths live on finite time grids.  A rough path is stored as per-step group
increments; composite increments over any grid pair come from the Chen
product, so multiplicativity holds by construction and all norm/variation
functionals quantify over grid points only.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import GridError, ValidationError
from .group import GroupElement2, geometricity_residual

__all__ = [
    "BVGridPath",
    "RoughPathGrid",
    "signature_pl",
    "holder_norm",
    "holder_norm_parts",
    "hom_holder_norm",
    "rho_alpha",
    "p_var",
    "p_var_bv",
    "pair_dist_matrix",
    "translate",
    "resample",
    "resample_bv",
    "union_times",
    "rough_to_json",
    "rough_from_json",
    "rough_to_csv",
    "rough_from_csv",
]


def _check_times(times) -> np.ndarray:
    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or t.size < 2:
        raise GridError("time grid needs at least two points")
    if not np.all(np.diff(t) > 0):
        raise GridError("times must be strictly increasing")
    return t


@dataclass(frozen=True)
class BVGridPath:
    """Absolute path values sampled on a strictly increasing grid."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = _check_times(self.times)
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != t.size:
            raise GridError("values must provide one row per grid time")
        if not np.all(np.isfinite(v)):
            raise ValidationError("path values contain non-finite entries")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def n_steps(self) -> int:
        return self.times.size - 1

    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=0)


@dataclass(frozen=True)
class RoughPathGrid:
    """Step-2 rough path on a grid, stored as per-step group increments.

    ``level1s`` has shape (n, d) and ``level2s`` shape (n, d, d), one row per
    grid step.  ``alpha`` is the Hoelder exponent used for default norm
    reporting and must lie in (1/3, 1/2].
    """

    dim: int
    times: np.ndarray
    level1s: np.ndarray
    level2s: np.ndarray
    alpha: float = 0.5

    def __post_init__(self):
        t = _check_times(self.times)
        d = int(self.dim)
        n = t.size - 1
        l1 = np.array(self.level1s, dtype=float)
        l2 = np.array(self.level2s, dtype=float)
        if l1.shape != (n, d) or l2.shape != (n, d, d):
            raise ValidationError(
                f"step arrays must have shapes ({n},{d}) and ({n},{d},{d})"
            )
        if not (np.all(np.isfinite(l1)) and np.all(np.isfinite(l2))):
            raise ValidationError("step increments contain non-finite entries")
        if not (1.0 / 3.0 < self.alpha <= 0.5):
            raise ValidationError("alpha must lie in (1/3, 1/2]")
        object.__setattr__(self, "dim", d)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "level1s", l1)
        object.__setattr__(self, "level2s", l2)

    @classmethod
    def from_steps(cls, times, steps, alpha: float = 0.5) -> "RoughPathGrid":
        """Build from a sequence of GroupElement2 per-step increments."""
        steps = list(steps)
        if not steps:
            raise GridError("need at least one step")
        d = steps[0].dim
        if any(s.dim != d for s in steps):
            raise ValidationError("all steps must share one dimension")
        l1 = np.stack([s.level1 for s in steps])
        l2 = np.stack([s.level2 for s in steps])
        return cls(d, times, l1, l2, alpha)

    @property
    def n_steps(self) -> int:
        return self.times.size - 1

    def step(self, i: int) -> GroupElement2:
        return GroupElement2(self.dim, self.level1s[i], self.level2s[i])

    @property
    def steps(self):
        return [self.step(i) for i in range(self.n_steps)]

    def level1_values(self) -> np.ndarray:
        """Absolute first-level path started at zero, shape (n+1, d)."""
        out = np.zeros((self.times.size, self.dim))
        np.cumsum(self.level1s, axis=0, out=out[1:])
        return out

    def level2_values(self) -> np.ndarray:
        """Absolute second level from the grid origin, shape (n+1, d, d)."""
        x = self.level1_values()
        out = np.zeros((self.times.size, self.dim, self.dim))
        acc = np.zeros((self.dim, self.dim))
        for k in range(self.n_steps):
            acc = acc + self.level2s[k] + np.outer(x[k], self.level1s[k])
            out[k + 1] = acc
        return out

    def sig(self, i: int, j: int) -> GroupElement2:
        """Signature over [times[i], times[j]] by composing steps i..j-1."""
        if not (0 <= i < j <= self.n_steps):
            raise GridError(f"invalid index pair ({i}, {j})")
        x = self.level1_values()
        x2 = self.level2_values()
        v = x[j] - x[i]
        m = x2[j] - x2[i] - np.outer(x[i], v)
        return GroupElement2(self.dim, v, m)

    def restrict(self, i: int, j: int) -> "RoughPathGrid":
        """Sub-path on grid indices i..j (same step increments)."""
        if not (0 <= i < j <= self.n_steps):
            raise GridError(f"invalid index pair ({i}, {j})")
        return RoughPathGrid(
            self.dim, self.times[i : j + 1], self.level1s[i:j], self.level2s[i:j],
            self.alpha,
        )

    def max_geometricity_residual(self) -> float:
        sym = 0.5 * (self.level2s + np.swapaxes(self.level2s, 1, 2))
        sq = 0.5 * np.einsum("ki,kj->kij", self.level1s, self.level1s)
        return float(np.max(np.abs(sym - sq)))


def signature_pl(path: BVGridPath, alpha: float = 0.5) -> RoughPathGrid:
    """Exact step-2 signature of the piecewise-linear interpolant of a path.

    Each chord contributes level2 = 1/2 delta (x) delta; composite increments
    follow from the Chen product, so every element is geometric exactly.
    """
    inc = path.increments()
    l2 = 0.5 * np.einsum("ki,kj->kij", inc, inc)
    return RoughPathGrid(path.dim, path.times, inc, l2, alpha)


# ---------------------------------------------------------------------------
# norms and distances (grid-quantified)


def _pair_levels(x: RoughPathGrid):
    """All pair increments: yields (dt, pi1, pi2) arrays per gap size."""
    t = x.times
    xv = x.level1_values()
    x2 = x.level2_values()
    n = x.n_steps
    for gap in range(1, n + 1):
        i = np.arange(0, n + 1 - gap)
        j = i + gap
        dt = t[j] - t[i]
        pi1 = xv[j] - xv[i]
        pi2 = x2[j] - x2[i] - np.einsum("ka,kb->kab", xv[i], pi1)
        yield dt, pi1, pi2


def holder_norm_parts(x: RoughPathGrid, alpha: float):
    """Level-wise Hoelder sups over all grid pairs: (sup1, sup2)."""
    if not (0.0 < alpha <= 1.0):
        raise ValidationError("alpha must lie in (0, 1]")
    s1 = 0.0
    s2 = 0.0
    for dt, pi1, pi2 in _pair_levels(x):
        n1 = np.linalg.norm(pi1, axis=1)
        n2 = np.linalg.norm(pi2.reshape(pi2.shape[0], -1), axis=1)
        s1 = max(s1, float(np.max(n1 / dt**alpha)))
        s2 = max(s2, float(np.max(n2 / dt ** (2 * alpha))))
    return s1, s2


def holder_norm(x: RoughPathGrid, alpha: float) -> float:
    """Inhomogeneous alpha-Hoelder norm on the grid.

    Sum of the two level-wise sups |pi_k(x_{s,t})| / |t-s|^(k alpha); zero
    exactly for the constant path, and monotone under grid restriction.
    """
    s1, s2 = holder_norm_parts(x, alpha)
    return s1 + s2


def hom_holder_norm(x: RoughPathGrid, alpha: float) -> float:
    """Homogeneous variant: sup of hom_norm(x_{s,t}) / |t-s|^alpha."""
    if not (0.0 < alpha <= 1.0):
        raise ValidationError("alpha must lie in (0, 1]")
    out = 0.0
    for dt, pi1, pi2 in _pair_levels(x):
        n1 = np.linalg.norm(pi1, axis=1)
        n2 = np.sqrt(np.linalg.norm(pi2.reshape(pi2.shape[0], -1), axis=1))
        out = max(out, float(np.max(np.maximum(n1, n2) / dt**alpha)))
    return out


def batch_cumulative_levels(l1: np.ndarray, l2: np.ndarray):
    """Absolute levels from per-step increments, batched over paths.

    ``l1`` (B, n, d) and ``l2`` (B, n, d, d) yield (B, n+1, d) and
    (B, n+1, d, d) via the Chen accumulation.
    """
    B, n, d = l1.shape
    xv = np.zeros((B, n + 1, d))
    np.cumsum(l1, axis=1, out=xv[:, 1:])
    x2 = np.zeros((B, n + 1, d, d))
    acc = np.zeros((B, d, d))
    for k in range(n):
        acc = acc + l2[:, k] + np.einsum("bi,bj->bij", xv[:, k], l1[:, k])
        x2[:, k + 1] = acc
    return xv, x2


def batch_holder_norm(times, l1: np.ndarray, l2: np.ndarray, alpha: float) -> np.ndarray:
    """Inhomogeneous Hoelder norms for a batch of step-increment arrays."""
    t = np.asarray(times, dtype=float)
    xv, x2 = batch_cumulative_levels(l1, l2)
    B, n1 = xv.shape[:2]
    n = n1 - 1
    s1 = np.zeros(B)
    s2 = np.zeros(B)
    for gap in range(1, n + 1):
        i = np.arange(0, n + 1 - gap)
        j = i + gap
        dt = (t[j] - t[i])[None, :]
        pi1 = xv[:, j] - xv[:, i]
        pi2 = x2[:, j] - x2[:, i] - np.einsum("bka,bkc->bkac", xv[:, i], pi1)
        n1v = np.linalg.norm(pi1, axis=2)
        n2v = np.linalg.norm(pi2.reshape(B, len(i), -1), axis=2)
        s1 = np.maximum(s1, np.max(n1v / dt**alpha, axis=1))
        s2 = np.maximum(s2, np.max(n2v / dt ** (2 * alpha), axis=1))
    return s1 + s2


def batch_pair_dist(l1: np.ndarray, l2: np.ndarray) -> np.ndarray:
    """Homogeneous pair-increment norms per path, shape (B, n+1, n+1)."""
    xv, x2 = batch_cumulative_levels(l1, l2)
    B, n1 = xv.shape[:2]
    n = n1 - 1
    out = np.zeros((B, n + 1, n + 1))
    for gap in range(1, n + 1):
        i = np.arange(0, n + 1 - gap)
        j = i + gap
        pi1 = xv[:, j] - xv[:, i]
        pi2 = x2[:, j] - x2[:, i] - np.einsum("bka,bkc->bkac", xv[:, i], pi1)
        n1v = np.linalg.norm(pi1, axis=2)
        n2v = np.sqrt(np.linalg.norm(pi2.reshape(B, len(i), -1), axis=2))
        vals = np.maximum(n1v, n2v)
        out[:, i, j] = vals
        out[:, j, i] = vals
    return out


def rho_alpha(x: RoughPathGrid, y: RoughPathGrid, alpha: float) -> float:
    """Inhomogeneous alpha-Hoelder distance over common grid pairs.

    Operands on different grids are first resampled to the union grid;
    mismatched dimensions or spans are rejected.
    """
    if x.dim != y.dim:
        raise GridError(f"dimension mismatch: {x.dim} vs {y.dim}")
    if x.times.size != y.times.size or not np.array_equal(x.times, y.times):
        x, y = common_grid(x, y)
    if not (0.0 < alpha <= 1.0):
        raise ValidationError("alpha must lie in (0, 1]")
    s1 = 0.0
    s2 = 0.0
    for (dt, p1x, p2x), (_, p1y, p2y) in zip(_pair_levels(x), _pair_levels(y)):
        n1 = np.linalg.norm(p1x - p1y, axis=1)
        d2 = (p2x - p2y).reshape(p1x.shape[0], -1)
        n2 = np.linalg.norm(d2, axis=1)
        s1 = max(s1, float(np.max(n1 / dt**alpha)))
        s2 = max(s2, float(np.max(n2 / dt ** (2 * alpha))))
    return s1 + s2


# ---------------------------------------------------------------------------
# p-variation by dynamic programming over grid partitions


def pair_dist_matrix(x) -> np.ndarray:
    """Homogeneous norms of all grid-pair increments, shape (n+1, n+1).

    For a BVGridPath the pair distance is the Euclidean increment norm.
    Entry (i, j) with i < j is the norm over [times[i], times[j]].
    """
    if isinstance(x, BVGridPath):
        v = x.values
        diff = v[None, :, :] - v[:, None, :]
        return np.linalg.norm(diff, axis=2)
    xv = x.level1_values()
    x2 = x.level2_values()
    npts = xv.shape[0]
    out = np.zeros((npts, npts))
    for gap in range(1, npts):
        i = np.arange(0, npts - gap)
        j = i + gap
        pi1 = xv[j] - xv[i]
        pi2 = x2[j] - x2[i] - np.einsum("ka,kb->kab", xv[i], pi1)
        n1 = np.linalg.norm(pi1, axis=1)
        n2 = np.sqrt(np.linalg.norm(pi2.reshape(pi2.shape[0], -1), axis=1))
        out[i, j] = np.maximum(n1, n2)
        out[j, i] = out[i, j]
    return out


def _dp_pvar(dist: np.ndarray, p: float, i0: int, i1: int) -> float:
    """Optimal sum of dist(a_k, a_{k+1})^p over subpartitions of [i0, i1]."""
    if i1 <= i0:
        return 0.0
    powd = dist[i0 : i1 + 1, i0 : i1 + 1] ** p
    m = i1 - i0
    best = np.zeros(m + 1)
    for j in range(1, m + 1):
        best[j] = np.max(best[:j] + powd[:j, j])
    return float(best[m])


def _interval_indices(times: np.ndarray, interval) -> tuple[int, int]:
    if interval is None:
        return 0, times.size - 1
    s, t = interval
    i0 = int(np.searchsorted(times, s))
    i1 = int(np.searchsorted(times, t))
    if i0 >= times.size or times[i0] != s or i1 >= times.size or times[i1] != t:
        raise GridError("interval endpoints must be grid points")
    if i1 <= i0:
        raise GridError("interval must have positive length on the grid")
    return i0, i1


def p_var(x: RoughPathGrid, p: float, interval=None, dist: np.ndarray | None = None) -> float:
    """Homogeneous p-variation norm over grid-point partitions.

    The p-th power equals the exact dynamic-programming optimum of
    sum ||x_{a_k, a_{k+1}}||^p over all subpartitions, which makes it a
    superadditive control when raised to the power p.
    """
    if p < 1:
        raise ValidationError("p must be >= 1")
    i0, i1 = _interval_indices(x.times, interval)
    if dist is None:
        dist = pair_dist_matrix(x)
    return _dp_pvar(dist, p, i0, i1) ** (1.0 / p)


def p_var_bv(path: BVGridPath, q: float, interval=None, dist: np.ndarray | None = None) -> float:
    """q-variation of a grid path under the Euclidean increment distance."""
    if q < 1:
        raise ValidationError("q must be >= 1")
    i0, i1 = _interval_indices(path.times, interval)
    if dist is None:
        dist = pair_dist_matrix(path)
    return _dp_pvar(dist, q, i0, i1) ** (1.0 / q)


# ---------------------------------------------------------------------------
# translation by a bounded-variation path


def translate(x: RoughPathGrid, h: BVGridPath) -> RoughPathGrid:
    """Translate a rough path by a grid path (chord rule on the common grid).

    Level 1 shifts by the h-increments; level 2 gains the chord cross terms
    and the self term of h, which keeps the result geometric exactly and
    makes the translation invert: translate(translate(x, h), -h) == x.
    """
    if h.dim != x.dim:
        raise GridError(f"dimension mismatch: path {h.dim} vs rough {x.dim}")
    if h.times.size != x.times.size or not np.array_equal(h.times, x.times):
        if h.times[0] > x.times[0] or h.times[-1] < x.times[-1]:
            raise GridError("translation path must cover the rough path's span")
        h = resample_bv(h, x.times)
    dh = h.increments()
    l1 = x.level1s + dh
    cross = np.einsum("ka,kb->kab", dh, x.level1s)
    l2 = (
        x.level2s
        + 0.5 * (cross + np.swapaxes(cross, 1, 2))
        + 0.5 * np.einsum("ka,kb->kab", dh, dh)
    )
    return RoughPathGrid(x.dim, x.times, l1, l2, x.alpha)


# ---------------------------------------------------------------------------
# resampling


def resample_bv(path: BVGridPath, new_times) -> BVGridPath:
    """Linear interpolation of a grid path onto a new grid within its span."""
    nt = _check_times(new_times)
    if nt[0] < path.times[0] - 1e-12 or nt[-1] > path.times[-1] + 1e-12:
        raise GridError("new grid must lie within the path's span")
    vals = np.column_stack(
        [np.interp(nt, path.times, path.values[:, k]) for k in range(path.dim)]
    )
    return BVGridPath(nt, vals)


def resample(x: RoughPathGrid, new_times) -> RoughPathGrid:
    """Resample a rough path onto a new grid inside its span.

    Points dropped from the grid recompose exactly through the Chen product;
    points inserted inside a step split the step's group increment linearly
    in log-coordinates (level 1 and area scale with the time fraction), which
    preserves geometricity and recomposes exactly.
    """
    nt = _check_times(new_times)
    t = x.times
    if nt[0] < t[0] - 1e-12 or nt[-1] > t[-1] + 1e-12:
        raise GridError("new grid must lie within the rough path's span")

    xv = x.level1_values()
    x2 = x.level2_values()
    areas = 0.5 * (x.level2s - np.swapaxes(x.level2s, 1, 2))

    def abs_state(u):
        """(level1, level2) of the signature from t[0] to time u."""
        k = int(np.searchsorted(t, u, side="left"))
        if k < t.size and t[k] == u:
            return xv[k], x2[k]
        k = min(max(k - 1, 0), x.n_steps - 1)
        r = (u - t[k]) / (t[k + 1] - t[k])
        v = r * x.level1s[k]
        part2 = 0.5 * np.outer(v, v) + r * areas[k]
        lvl1 = xv[k] + v
        lvl2 = x2[k] + part2 + np.outer(xv[k], v)
        return lvl1, lvl2

    states = [abs_state(u) for u in nt]
    n_new = nt.size - 1
    l1 = np.empty((n_new, x.dim))
    l2 = np.empty((n_new, x.dim, x.dim))
    for k in range(n_new):
        a1, a2 = states[k]
        b1, b2 = states[k + 1]
        v = b1 - a1
        l1[k] = v
        l2[k] = b2 - a2 - np.outer(a1, v)
    return RoughPathGrid(x.dim, nt, l1, l2, x.alpha)


def union_times(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.union1d(a, b)


def common_grid(x: RoughPathGrid, y: RoughPathGrid):
    """Resample both operands onto the union of their grids."""
    if abs(x.times[0] - y.times[0]) > 1e-12 or abs(x.times[-1] - y.times[-1]) > 1e-12:
        raise GridError("rough paths must share their time span")
    t = union_times(x.times, y.times)
    return resample(x, t), resample(y, t)


# ---------------------------------------------------------------------------
# serialization


def rough_to_json(x: RoughPathGrid) -> str:
    obj = {
        "dim": x.dim,
        "alpha": x.alpha,
        "times": x.times.tolist(),
        "steps": [
            {"level1": x.level1s[k].tolist(), "level2": x.level2s[k].tolist()}
            for k in range(x.n_steps)
        ],
    }
    return json.dumps(obj)


def rough_from_json(text: str) -> RoughPathGrid:
    obj = json.loads(text)
    try:
        d = int(obj["dim"])
        times = obj["times"]
        steps = obj["steps"]
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed rough-path JSON: {exc}") from exc
    l1 = np.array([s["level1"] for s in steps], dtype=float)
    l2 = np.array([s["level2"] for s in steps], dtype=float)
    alpha = float(obj.get("alpha", 0.5))
    return RoughPathGrid(d, np.asarray(times, dtype=float), l1, l2, alpha)


def rough_to_csv(x: RoughPathGrid) -> str:
    """CSV form: header, an origin row anchoring t0 with identity increments,
    then one row per grid step with columns t, level1, level2 (row-major);
    the t column holds the step's right endpoint."""
    buf = io.StringIO()
    w = csv.writer(buf)
    d = x.dim
    header = (
        ["t"]
        + [f"level1_{i}" for i in range(d)]
        + [f"level2_{i}_{j}" for i in range(d) for j in range(d)]
    )
    w.writerow(header)
    w.writerow([repr(float(x.times[0]))] + ["0.0"] * (d + d * d))
    for k in range(x.n_steps):
        row = (
            [repr(float(x.times[k + 1]))]
            + [repr(float(v)) for v in x.level1s[k]]
            + [repr(float(v)) for v in x.level2s[k].reshape(-1)]
        )
        w.writerow(row)
    return buf.getvalue()


def rough_from_csv(text: str) -> RoughPathGrid:
    rows = list(csv.reader(io.StringIO(text)))
    if len(rows) < 3:
        raise ValidationError("rough-path CSV needs a header, origin row and steps")
    header = rows[0]
    d = sum(1 for name in header if name.startswith("level1_"))
    if d == 0 or len(header) != 1 + d + d * d:
        raise ValidationError("rough-path CSV header does not match a step-2 layout")
    data = np.array([[float(v) for v in row] for row in rows[1:]], dtype=float)
    times = data[:, 0]
    l1 = data[1:, 1 : 1 + d]
    l2 = data[1:, 1 + d :].reshape(-1, d, d)
    return RoughPathGrid(d, times, l1, l2)

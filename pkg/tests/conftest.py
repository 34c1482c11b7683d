import numpy as np
import pytest

from roughsde import BVGridPath, RoughPathGrid, exp2, signature_pl


def random_antisym(rng, d, scale=1.0):
    M = rng.standard_normal((d, d)) * scale
    return 0.5 * (M - M.T)


def random_group_element(rng, d, scale=1.0):
    return exp2(rng.standard_normal(d) * scale, random_antisym(rng, d, scale))


def random_geometric_rough_path(rng, d, n_steps, t_end=1.0, scale=0.5, area_scale=0.1):
    """Lift of a random piecewise-linear path plus per-step area kicks."""
    times = np.linspace(0.0, t_end, n_steps + 1)
    dt = times[1] - times[0]
    inc = rng.standard_normal((n_steps, d)) * scale * np.sqrt(dt)
    base = signature_pl(BVGridPath(times, np.vstack([np.zeros(d), np.cumsum(inc, 0)])))
    areas = np.stack([random_antisym(rng, d, area_scale * dt) for _ in range(n_steps)])
    return RoughPathGrid(d, times, base.level1s, base.level2s + areas, base.alpha)


def smooth_curve_lift(fn, n_steps, t_end=1.0, alpha=0.5):
    """Signature lift of the piecewise-linear interpolant of t -> fn(t)."""
    times = np.linspace(0.0, t_end, n_steps + 1)
    vals = np.array([fn(t) for t in times], dtype=float)
    return signature_pl(BVGridPath(times, vals), alpha)


@pytest.fixture
def rng():
    return np.random.default_rng(20260811)

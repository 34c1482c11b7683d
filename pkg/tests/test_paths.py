import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from roughsde import (
    BVGridPath,
    GridError,
    ValidationError,
    holder_norm,
    hom_holder_norm,
    p_var,
    p_var_bv,
    resample,
    rho_alpha,
    rough_from_csv,
    rough_from_json,
    rough_to_csv,
    rough_to_json,
    signature_pl,
    translate,
)
from roughsde.group import hom_norm, mul
from roughsde.paths import holder_norm_parts, pair_dist_matrix
from conftest import random_geometric_rough_path, smooth_curve_lift


def test_signature_two_segments():
    path = BVGridPath([0.0, 1.0, 2.0], [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]])
    sig = signature_pl(path).sig(0, 2)
    assert np.array_equal(sig.level1, [1.0, 1.0])
    assert np.allclose(sig.level2, [[0.5, 1.0], [0.0, 0.5]], atol=0)


def test_signature_single_segment():
    v = np.array([0.3, -1.2, 0.5])
    path = BVGridPath([0.0, 1.0], [np.zeros(3), v])
    sig = signature_pl(path)
    assert np.array_equal(sig.level1s[0], v)
    assert np.allclose(sig.level2s[0], 0.5 * np.outer(v, v), atol=0)


def test_signature_rejects_degenerate_grid():
    with pytest.raises(GridError):
        BVGridPath([0.0], [[1.0]])
    with pytest.raises(GridError):
        BVGridPath([0.0, 0.0], [[1.0], [2.0]])


def test_signature_area_matches_quadrature_oracle():
    # area of the circle arc t -> (cos t, sin t) on [0, pi] via adaptive quadrature
    oracle, err = quad(lambda t: 0.5 * ((np.cos(t) - 1.0) * np.cos(t) + np.sin(t) ** 2), 0.0, np.pi)
    assert err < 1e-10
    lift = smooth_curve_lift(lambda t: (np.cos(t), np.sin(t)), 4096, t_end=np.pi)
    sig = lift.sig(0, lift.n_steps)
    area = 0.5 * (sig.level2[0, 1] - sig.level2[1, 0])
    assert area == pytest.approx(oracle, abs=1e-6)


def test_chen_identity_on_grid(rng):
    x = random_geometric_rough_path(rng, 3, 16)
    for _ in range(30):
        i, j, k = sorted(rng.choice(17, size=3, replace=False))
        if i == j or j == k:
            continue
        lhs = mul(x.sig(i, j), x.sig(j, k))
        rhs = x.sig(i, k)
        assert np.max(np.abs(lhs.level1 - rhs.level1)) <= 1e-12
        assert np.max(np.abs(lhs.level2 - rhs.level2)) <= 1e-12


def test_geometricity_of_signature(rng):
    x = random_geometric_rough_path(rng, 2, 10)
    assert x.max_geometricity_residual() <= 1e-12


# ---------------------------------------------------------------------------
# Hoelder norms and the distance


def test_holder_norm_constant_path_zero():
    path = BVGridPath(np.linspace(0, 1, 9), np.ones((9, 2)))
    assert holder_norm(signature_pl(path), 0.5) == 0.0


def test_holder_norm_linear_path_level1():
    lift = smooth_curve_lift(lambda t: (t,), 16)
    s1, _ = holder_norm_parts(lift, 0.5)
    assert s1 == pytest.approx(1.0, rel=1e-12)


def test_holder_norm_matches_bruteforce_pairs():
    lift = smooth_curve_lift(lambda t: (t, t * t), 256, alpha=0.5)
    alpha = 0.4
    xv = lift.level1_values()
    x2 = lift.level2_values()
    t = lift.times
    s1 = s2 = 0.0
    for i in range(len(t)):
        for j in range(i + 1, len(t)):
            dt = t[j] - t[i]
            pi1 = xv[j] - xv[i]
            pi2 = x2[j] - x2[i] - np.outer(xv[i], xv[j] - xv[i])
            s1 = max(s1, np.linalg.norm(pi1) / dt**alpha)
            s2 = max(s2, np.linalg.norm(pi2) / dt ** (2 * alpha))
    assert holder_norm(lift, alpha) == pytest.approx(s1 + s2, abs=1e-12)


def test_holder_norm_monotone_under_restriction(rng):
    x = random_geometric_rough_path(rng, 2, 32)
    full = holder_norm(x, 0.45)
    assert holder_norm(x.restrict(4, 20), 0.45) <= full + 1e-14
    assert holder_norm(x.restrict(0, 8), 0.45) <= full + 1e-14


def test_holder_norm_needs_two_points():
    with pytest.raises(GridError):
        BVGridPath([0.0], [0.0])


def test_rho_alpha_metric_axioms(rng):
    xs = [random_geometric_rough_path(rng, 2, 12, scale=s) for s in (0.4, 0.7, 1.0)]
    a, b, c = xs
    assert rho_alpha(a, a, 0.45) == 0.0
    assert rho_alpha(a, b, 0.45) == pytest.approx(rho_alpha(b, a, 0.45), abs=1e-12)
    assert rho_alpha(a, c, 0.45) <= rho_alpha(a, b, 0.45) + rho_alpha(b, c, 0.45) + 1e-12


def test_rho_alpha_rejects_dim_mismatch(rng):
    x = random_geometric_rough_path(rng, 2, 8)
    y = random_geometric_rough_path(rng, 3, 8)
    with pytest.raises(GridError):
        rho_alpha(x, y, 0.45)


def test_rho_alpha_union_resampling(rng):
    x = random_geometric_rough_path(rng, 2, 8)
    y = resample(x, np.linspace(0, 1, 33))
    # same underlying path on a refined grid: distance should vanish
    assert rho_alpha(x, y, 0.45) <= 1e-10


# ---------------------------------------------------------------------------
# p-variation


def test_pvar_monotone_path():
    path = BVGridPath(np.linspace(0, 1, 11), np.linspace(0, 1, 11))
    assert p_var_bv(path, 1.0) == pytest.approx(1.0, rel=1e-12)


def test_pvar_zigzag():
    path = BVGridPath([0.0, 0.5, 1.0], [0.0, 1.0, 0.0])
    assert p_var_bv(path, 1.0) == pytest.approx(2.0, rel=1e-12)


def _pvar_exhaustive(dist, p, n):
    best = 0.0
    for r in range(n - 1):
        for subset in itertools.combinations(range(1, n - 1), r):
            pts = (0,) + subset + (n - 1,)
            total = sum(dist[a, b] ** p for a, b in zip(pts[:-1], pts[1:]))
            best = max(best, total)
    return best


def test_pvar_dp_equals_exhaustive_20_points(rng):
    vals = np.cumsum(rng.standard_normal(20) * 0.3)
    path = BVGridPath(np.linspace(0, 1, 20), vals)
    dist = pair_dist_matrix(path)
    dp = p_var_bv(path, 2.0) ** 2.0
    brute = _pvar_exhaustive(dist, 2.0, 20)
    assert dp == pytest.approx(brute, rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), p=st.floats(1.0, 3.5))
def test_pvar_dp_equals_exhaustive_small(seed, p):
    rng = np.random.default_rng(seed)
    n = 8
    vals = np.cumsum(rng.standard_normal(n))
    path = BVGridPath(np.arange(n, dtype=float), vals)
    dist = pair_dist_matrix(path)
    dp = p_var_bv(path, p) ** p
    brute = _pvar_exhaustive(dist, p, n)
    assert dp == pytest.approx(brute, rel=1e-10)


def test_pvar_rough_superadditive_control(rng):
    x = random_geometric_rough_path(rng, 2, 16)
    p = 2.5
    t = x.times
    whole = p_var(x, p) ** p
    for mid in (4, 8, 12):
        left = p_var(x, p, interval=(t[0], t[mid])) ** p
        right = p_var(x, p, interval=(t[mid], t[-1])) ** p
        assert left + right <= whole + 1e-10


def test_pvar_rejects_small_p(rng):
    x = random_geometric_rough_path(rng, 2, 4)
    with pytest.raises(ValidationError):
        p_var(x, 0.5)


# ---------------------------------------------------------------------------
# translation


def test_translate_by_zero_is_identity(rng):
    x = random_geometric_rough_path(rng, 2, 12)
    h = BVGridPath(x.times, np.zeros((x.times.size, 2)))
    y = translate(x, h)
    assert np.array_equal(y.level1s, x.level1s)
    assert np.allclose(y.level2s, x.level2s, atol=0)


def test_translate_trivial_path_gives_signature(rng):
    times = np.linspace(0, 1, 9)
    x = signature_pl(BVGridPath(times, np.zeros((9, 2))))
    h_vals = np.cumsum(rng.standard_normal((9, 2)) * 0.2, axis=0)
    h_vals[0] = 0
    h = BVGridPath(times, h_vals)
    y = translate(x, h)
    z = signature_pl(h)
    assert np.allclose(y.level1s, z.level1s, atol=1e-14)
    assert np.allclose(y.level2s, z.level2s, atol=1e-14)


def test_translate_round_trip(rng):
    x = random_geometric_rough_path(rng, 3, 10)
    h_vals = np.cumsum(rng.standard_normal((11, 3)) * 0.3, axis=0)
    h = BVGridPath(x.times, h_vals)
    neg = BVGridPath(x.times, -h_vals)
    y = translate(translate(x, h), neg)
    assert np.max(np.abs(y.level1s - x.level1s)) <= 1e-10
    assert np.max(np.abs(y.level2s - x.level2s)) <= 1e-10


def test_translate_matches_summed_signature(rng):
    times = np.linspace(0, 1, 13)
    xv = np.cumsum(rng.standard_normal((13, 2)) * 0.4, axis=0)
    hv = np.cumsum(rng.standard_normal((13, 2)) * 0.4, axis=0)
    x = signature_pl(BVGridPath(times, xv))
    y = translate(x, BVGridPath(times, hv))
    z = signature_pl(BVGridPath(times, xv + hv))
    assert np.max(np.abs(y.level1s - z.level1s)) <= 1e-10
    assert np.max(np.abs(y.level2s - z.level2s)) <= 1e-10
    assert y.max_geometricity_residual() <= 1e-12


# ---------------------------------------------------------------------------
# resampling and serialization


def test_resample_refine_then_coarsen_round_trip(rng):
    x = random_geometric_rough_path(rng, 2, 8)
    fine = resample(x, np.linspace(0, 1, 41))
    back = resample(fine, x.times)
    assert np.max(np.abs(back.level1s - x.level1s)) <= 1e-12
    assert np.max(np.abs(back.level2s - x.level2s)) <= 1e-12
    assert fine.max_geometricity_residual() <= 1e-12


def test_json_round_trip(rng):
    x = random_geometric_rough_path(rng, 2, 6)
    y = rough_from_json(rough_to_json(x))
    assert np.array_equal(y.times, x.times)
    assert np.array_equal(y.level1s, x.level1s)
    assert np.array_equal(y.level2s, x.level2s)


def test_csv_round_trip(rng):
    x = random_geometric_rough_path(rng, 3, 5)
    y = rough_from_csv(rough_to_csv(x))
    assert np.array_equal(y.times, x.times)
    assert np.array_equal(y.level1s, x.level1s)
    assert np.array_equal(y.level2s, x.level2s)


def test_hom_holder_norm_agrees_with_group_norm_single_step():
    lift = smooth_curve_lift(lambda t: (t, 2 * t), 1)
    g = lift.sig(0, 1)
    assert hom_holder_norm(lift, 0.5) == pytest.approx(hom_norm(g), rel=1e-12)

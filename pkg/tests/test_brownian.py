import numpy as np
import pytest

from roughsde import (
    EnsembleConfig,
    ValidationError,
    brownian_lift,
    derive_rng,
    refine_times,
    sample_brownian,
    stratonovich_lift,
)
from roughsde.brownian import sample_brownian_batch


def test_reproducible_given_seed():
    t = np.linspace(0, 1, 65)
    a = sample_brownian(t, 3, 1234)
    b = sample_brownian(t, 3, 1234)
    assert np.array_equal(a.values, b.values)
    c = sample_brownian(t, 3, 1235)
    assert not np.array_equal(a.values, c.values)


def test_single_step_moments():
    n = 100_000
    B = sample_brownian_batch([0.0, 1.0], 1, 42, n)
    inc = B[:, 1, 0]
    assert B.shape == (n, 2, 1)
    assert np.all(B[:, 0, 0] == 0.0)
    assert abs(inc.mean()) <= 4.0 / np.sqrt(n)
    assert abs(inc.var() - 1.0) <= 0.05


def test_batch_matches_single_path_sampler():
    t = np.linspace(0, 1, 17)
    batch = sample_brownian_batch(t, 2, 99, 4)
    for i in range(4):
        single = sample_brownian(t, 2, derive_rng(99, i))
        assert np.array_equal(batch[i], single.values)


def test_cross_covariance_of_coordinates():
    t = [0.0, 1.0]
    B = sample_brownian_batch(t, 2, 11, 50_000)
    inc = B[:, 1, :]
    cross = np.mean(inc[:, 0] * inc[:, 1])
    assert abs(cross) <= 4.0 / np.sqrt(50_000)


def test_increment_variance_scales_with_dt():
    t = np.array([0.0, 0.25, 1.0])
    B = sample_brownian_batch(t, 1, 5, 40_000)
    d1 = B[:, 1, 0]
    d2 = B[:, 2, 0] - B[:, 1, 0]
    assert d1.var() == pytest.approx(0.25, rel=0.05)
    assert d2.var() == pytest.approx(0.75, rel=0.05)


def test_refine_times():
    t = refine_times([0.0, 1.0, 2.0], 4)
    assert np.allclose(t, np.arange(9) * 0.25, atol=1e-15)
    assert np.array_equal(refine_times([0.0, 1.0], 1), [0.0, 1.0])


def test_scalar_lift_level2_exact():
    t = refine_times(np.linspace(0, 1, 5), 8)
    B = sample_brownian(t, 1, 3)
    lift = stratonovich_lift(B, 8)
    db = lift.level1s[:, 0]
    assert np.allclose(lift.level2s[:, 0, 0], 0.5 * db**2, atol=1e-15)


def test_lift_geometric_and_chen():
    lift, fine = brownian_lift(np.linspace(0, 1, 9), 2, 17, refine=16)
    assert lift.max_geometricity_residual() <= 1e-12
    from roughsde.group import mul

    lhs = mul(lift.sig(0, 4), lift.sig(4, 8))
    rhs = lift.sig(0, 8)
    assert np.max(np.abs(lhs.level2 - rhs.level2)) <= 1e-12
    # level1 restriction equals the fine sample at coarse times (up to
    # accumulation-order rounding)
    assert np.max(np.abs(lift.level1_values() - fine.values[::16])) <= 1e-12


def test_levy_area_variance():
    # Var of the antisymmetric part over [0,1] approaches 1/4 (chord value
    # 1/4 (1 - 1/refine)); the level2 off-diagonal entry has variance 1/2.
    n_paths = 60_000
    refine = 64
    t = refine_times([0.0, 1.0], refine)
    B = sample_brownian_batch(t, 2, 123, n_paths)
    from roughsde.brownian import coarsen_chord_lift

    l1, l2 = coarsen_chord_lift(B, refine)
    area = 0.5 * (l2[:, 0, 0, 1] - l2[:, 0, 1, 0])
    assert abs(area.mean()) <= 4 * area.std() / np.sqrt(n_paths)
    assert area.var() == pytest.approx(0.25, rel=0.10)
    assert l2[:, 0, 0, 1].var() == pytest.approx(0.5, rel=0.10)


def test_levy_area_weak_error_slope():
    # E[A^2] for the chord lift is 1/4 (1 - 1/refine): halving the error per
    # refinement doubling means slope -1 in log2 coordinates.
    n_paths = 120_000
    errors = []
    refines = [2, 4, 8, 16]
    for refine in refines:
        t = refine_times([0.0, 1.0], refine)
        B = sample_brownian_batch(t, 2, 321, n_paths)
        from roughsde.brownian import coarsen_chord_lift

        _, l2 = coarsen_chord_lift(B, refine)
        area = 0.5 * (l2[:, 0, 0, 1] - l2[:, 0, 1, 0])
        errors.append(abs(np.mean(area**2) - 0.25))
    slope = np.polyfit(np.log2(refines), np.log2(errors), 1)[0]
    assert -1.35 <= slope <= -0.65


def test_ensemble_config_validation():
    with pytest.raises(ValidationError):
        EnsembleConfig(0, 1)
    with pytest.raises(ValidationError):
        EnsembleConfig(10, 1, refine=0)
    cfg = EnsembleConfig(10, 1)
    assert cfg.refine == 64

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from roughsde import (
    BVGridPath,
    ValidationError,
    default_beta,
    fernique_tail_fit,
    greedy_count,
    n_beta_rough,
    signature_pl,
    translation_bound_check,
)
from roughsde.greedy import interval_pvar_table, nbeta_from_table
from roughsde.paths import p_var, pair_dist_matrix
from conftest import random_geometric_rough_path


def length_control(s, t):
    return t - s


def greedy_oracle(omega, times, beta, i0, i1):
    """Literal forward recursion of the greedy definition on grid points."""
    taus = [times[i0]]
    cur = i0
    count = 0
    while True:
        nxt = None
        for j in range(cur + 1, i1 + 1):
            if omega(times[cur], times[j]) >= beta:
                nxt = j
                break
        if nxt is None:
            taus.append(times[i1])
            break
        taus.append(times[nxt])
        cur = nxt
        if times[nxt] < times[i1]:
            count += 1
        if cur == i1:
            break
    return taus, count


def test_greedy_linear_control_analytic():
    times = np.array([0.0, 0.25, 0.3, 0.5, 0.6, 0.75, 0.9, 1.0])
    res = greedy_count(length_control, 0.3, times)
    assert np.allclose(res.taus, [0.0, 0.3, 0.6, 0.9, 1.0], atol=0)
    assert res.count == 3


def test_greedy_budget_exceeds_interval():
    times = np.linspace(0, 1, 11)
    res = greedy_count(length_control, 1.5, times)
    assert res.count == 0
    assert np.allclose(res.taus, [0.0, 1.0], atol=0)


def test_greedy_rejects_nonmonotone_control():
    times = np.linspace(0, 1, 9)

    def bad(s, t):
        return 4.0 * (t - s) * (1.0 - (t - s))

    with pytest.raises(ValidationError):
        greedy_count(bad, 1.5, times)


def test_greedy_rejects_nonpositive_beta():
    with pytest.raises(ValidationError):
        greedy_count(length_control, 0.0, np.linspace(0, 1, 5))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), beta=st.floats(0.05, 3.0))
def test_greedy_matches_direct_recursion(seed, beta):
    rng = np.random.default_rng(seed)
    n = 24
    times = np.linspace(0, 1, n + 1)
    weights = rng.exponential(0.2, size=n)
    cum = np.concatenate([[0.0], np.cumsum(weights)])

    def omega(s, t):
        i = int(np.searchsorted(times, s))
        j = int(np.searchsorted(times, t))
        return (cum[j] - cum[i]) ** 1.3

    res = greedy_count(omega, beta, times)
    taus, count = greedy_oracle(omega, times, beta, 0, n)
    assert res.count == count
    assert np.allclose(res.taus, taus, atol=0)


def test_nbeta_constant_path():
    path = BVGridPath(np.linspace(0, 1, 9), np.zeros(9))
    res = n_beta_rough(signature_pl(path), 2.0, 0.5)
    assert res.count == 0


def test_nbeta_linear_path_matches_length_control():
    times = np.array([0.0, 0.3, 0.6, 0.9, 1.0])
    path = BVGridPath(times, times.copy())
    res = n_beta_rough(signature_pl(path), 1.0, 0.3)
    assert res.count == 3
    assert np.allclose(res.taus, [0.0, 0.3, 0.6, 0.9, 1.0], atol=0)


def test_nbeta_rough_matches_direct_recursion(rng):
    x = random_geometric_rough_path(rng, 2, 20, scale=1.2)
    p = 2.5
    beta = 0.15
    res = n_beta_rough(x, p, beta)
    dist = pair_dist_matrix(x)
    times = x.times

    def omega(s, t):
        i = int(np.searchsorted(times, s))
        j = int(np.searchsorted(times, t))
        return p_var(x, p, interval=(times[i], times[j]), dist=dist) ** p

    taus, count = greedy_oracle(omega, times, beta, 0, x.n_steps)
    assert res.count == count
    assert np.allclose(res.taus, taus, atol=0)


def test_nbeta_monotone_in_beta(rng):
    for _ in range(10):
        x = random_geometric_rough_path(rng, 2, 16, scale=1.0)
        c1 = n_beta_rough(x, 2.2, 0.1).count
        c2 = n_beta_rough(x, 2.2, 0.25).count
        c3 = n_beta_rough(x, 2.2, 0.6).count
        assert c1 >= c2 >= c3


def test_nbeta_monotone_in_interval(rng):
    x = random_geometric_rough_path(rng, 2, 16, scale=1.2)
    t = x.times
    counts = [
        n_beta_rough(x, 2.3, 0.12, interval=(t[0], t[j])).count for j in (6, 10, 16)
    ]
    assert counts[0] <= counts[1] <= counts[2]


def test_counting_bound(rng):
    # beta * N_beta <= omega(0, T) for the superadditive p-variation control
    for _ in range(20):
        x = random_geometric_rough_path(rng, 2, 12, scale=1.0)
        beta = float(rng.uniform(0.05, 0.5))
        p = float(rng.uniform(2.1, 3.0))
        res = n_beta_rough(x, p, beta)
        assert beta * res.count <= p_var(x, p) ** p + 1e-12


def test_batched_nbeta_matches_single(rng):
    p, beta = 2.5, 0.2
    dists = []
    xs = []
    for _ in range(6):
        x = random_geometric_rough_path(rng, 2, 12, scale=1.0)
        xs.append(x)
        dists.append(pair_dist_matrix(x))
    W = interval_pvar_table(np.stack(dists), p)
    counts = nbeta_from_table(W, beta)
    for x, c in zip(xs, counts):
        assert n_beta_rough(x, p, beta).count == c


# ---------------------------------------------------------------------------
# translation bound


def test_translation_bound_exponent_validation(rng):
    x = random_geometric_rough_path(rng, 2, 8)
    h = BVGridPath(x.times, np.zeros((9, 2)))
    with pytest.raises(ValidationError):
        translation_bound_check(x, h, p=2.5, q=3.0)
    with pytest.raises(ValidationError):
        translation_bound_check(x, h, p=4.0, q=1.5)


def test_translation_bound_zero_shift(rng):
    x = random_geometric_rough_path(rng, 2, 12, scale=0.8)
    h = BVGridPath(x.times, np.zeros((13, 2)))
    lhs, rhs, beta = translation_bound_check(x, h, p=2.5, q=1.0)
    assert lhs <= rhs
    assert beta == default_beta(2.5, 1.0)


def test_translation_bound_trivial_rough_path(rng):
    times = np.linspace(0, 1, 13)
    x = signature_pl(BVGridPath(times, np.zeros((13, 2))))
    hv = np.cumsum(rng.standard_normal((13, 2)) * 0.4, axis=0)
    hv[0] = 0
    lhs, rhs, _ = translation_bound_check(x, BVGridPath(times, hv), p=2.5, q=1.0)
    assert lhs <= rhs


def test_translation_bound_randomized_audit(rng):
    # smaller version of the acceptance audit
    from roughsde.brownian import brownian_lift

    for k in range(60):
        lift, _ = brownian_lift(np.linspace(0, 1, 17), 2, 5000 + k, refine=4)
        hv = np.cumsum(
            np.random.default_rng(900 + k).standard_normal((17, 2)) * 0.25, axis=0
        )
        hv[0] = 0
        h = BVGridPath(lift.times, hv)
        lhs, rhs, _ = translation_bound_check(lift, h, p=2.5, q=1.0)
        assert lhs <= rhs


# ---------------------------------------------------------------------------
# tail fits


def test_tail_fit_degenerate_statistic():
    fit = fernique_tail_fit(np.zeros(2000), r0=1.0, a=1.0)
    assert np.all(fit.survival == 0)
    assert np.all(fit.bound[fit.r >= fit.r0] >= 0)


def test_tail_fit_requires_enough_samples():
    with pytest.raises(ValidationError):
        fernique_tail_fit(np.abs(np.random.default_rng(1).standard_normal(100)))


def test_tail_fit_absolute_gaussian():
    z = np.abs(np.random.default_rng(42).standard_normal(100_000))
    fit = fernique_tail_fit(z, r0=1.0)
    assert 0.4 <= fit.sigma_hat <= 1.5
    sel = fit.r >= fit.r0
    assert np.all(fit.bound[sel] >= fit.survival[sel] - fit.dkw_epsilon)
    assert np.all(np.diff(fit.survival) <= 1e-15)


def test_tail_fit_bound_curve_shape():
    z = np.abs(np.random.default_rng(7).standard_normal(5000)) * 0.5
    fit = fernique_tail_fit(z, r0=0.6)
    expected = 1.0 - norm.cdf(fit.alpha_hat + fit.r / (2 * fit.sigma_hat))
    sel = fit.r >= fit.r0
    assert np.allclose(fit.bound[sel], expected[sel], atol=1e-12)
    assert fit.a == pytest.approx(np.mean(z <= 0.3), abs=1e-12)

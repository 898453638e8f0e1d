"""Scenery models: iid laws, moving averages, toral automorphisms."""

from fractions import Fraction
from math import pi, sqrt

import numpy as np
import pytest

from rwrs.occupation import encode_sites
from rwrs.rng import stream
from rwrs.scenery import (
    ActionError,
    IIDScenery,
    centered_uniform,
    coboundary,
    cosine_observable,
    exact_correlation,
    gaussian,
    model_variance,
    moving_average,
    stock_action,
    rademacher,
    sample_scenery,
    sample_scenery_matrix,
    toral_action,
    toral_scenery,
    transported_frequency,
    trig_polynomial,
    two_point,
    verify_action,
)


# ---------------------------------------------------------------------------
# iid laws
# ---------------------------------------------------------------------------

def test_law_moments_are_exact():
    r = rademacher()
    assert [r.moment(j) for j in range(5)] == [1.0, 0.0, 1.0, 0.0, 1.0]
    u = centered_uniform(3.0)
    assert u.moment(2) == pytest.approx(3.0, rel=1e-12)
    assert u.moment(3) == 0.0
    assert u.moment(4) == pytest.approx(81.0 / 5.0, rel=1e-12)
    g = gaussian(2.0)
    assert g.moment(2) == pytest.approx(4.0, rel=1e-12)
    assert g.moment(4) == pytest.approx(48.0, rel=1e-12)
    t = two_point(3.0, 0.25)
    assert t.moment(1) == pytest.approx(0.0, abs=1e-12)


def test_two_point_moments_match_the_construction():
    hi, p = 2.0, 0.2
    lo = -hi * p / (1.0 - p)
    law = two_point(hi, p)
    for j in (1, 2, 3, 4):
        direct = p * hi ** j + (1.0 - p) * lo ** j
        assert law.moment(j) == pytest.approx(direct, rel=1e-12, abs=1e-12)


def test_law_samples_match_moments():
    for law, name in ((rademacher(), "rademacher"),
                      (centered_uniform(2.0), "uniform"),
                      (gaussian(1.5), "gaussian"),
                      (two_point(3.0, 0.25), "two_point")):
        x = law.sample(stream(41, hash(name) % 1000), (200_000,))
        se2 = np.std(x ** 2, ddof=1) / sqrt(x.size)
        assert abs(float(x.mean())) < 4.0 * float(np.std(x, ddof=1)) / sqrt(x.size), name
        assert abs(float((x ** 2).mean()) - law.moment(2)) <= 4.0 * float(se2) + 1e-12, name


def test_partial_moments_split_the_law():
    law = two_point(3.0, 0.25)
    lo = -3.0 * 0.25 / 0.75
    for j in (1, 2):
        below = law.partial_moment_below(1.0, j)
        assert below == pytest.approx(0.75 * lo ** j, rel=1e-12)
        assert law.moment(j) == pytest.approx(
            below + 0.25 * 3.0 ** j, rel=1e-12, abs=1e-12)


# ---------------------------------------------------------------------------
# moving averages
# ---------------------------------------------------------------------------

MA_COEFFS = {(0, 0): 1.0, (1, 0): 0.5, (0, 1): -0.25, (1, 1): 0.125}


def test_moving_average_summaries():
    ma = moving_average(MA_COEFFS, rademacher())
    assert ma.coeff_sum == pytest.approx(1.375)
    assert ma.abs_sum == pytest.approx(1.875)
    plus = ma.sign_part(+1)
    minus = ma.sign_part(-1)
    assert plus.coeff_dict() == {(0, 0): 1.0, (1, 0): 0.5, (1, 1): 0.125}
    assert minus.coeff_dict() == {(0, 1): 0.25}


def test_moving_average_correlation_matches_brute_convolution():
    base = centered_uniform(2.0)
    ma = moving_average(MA_COEFFS, base)

    def brute(l):
        tot = 0.0
        for q, a in MA_COEFFS.items():
            shifted = (q[0] + l[0], q[1] + l[1])
            tot += a * MA_COEFFS.get(shifted, 0.0)
        return base.variance() * tot

    for l in ((0, 0), (1, 0), (0, 1), (-1, 0), (1, 1), (2, 0), (5, 5)):
        assert exact_correlation(ma, l) == pytest.approx(brute(l), rel=1e-12,
                                                         abs=1e-15)
    assert model_variance(ma) == pytest.approx(brute((0, 0)), rel=1e-12)


def test_identity_filter_equals_the_base_law():
    ma = moving_average({(0, 0): 1.0}, rademacher())
    assert exact_correlation(ma, (0, 0)) == pytest.approx(1.0)
    assert exact_correlation(ma, (1, 0)) == 0.0
    support = [(0, 0), (3, 1), (-2, 5)]
    vals = sample_scenery(ma, support, stream(42, 0))
    assert set(np.round(vals).astype(int)) <= {-1, 1}


def test_moving_average_empirical_correlation():
    ma = moving_average(MA_COEFFS, rademacher())
    sites = np.array([[0, 0], [1, 0]], dtype=np.int64)
    order = np.argsort(encode_sites(sites))
    col = np.argsort(order)
    vals = sample_scenery_matrix(ma, sites, stream(42, 1), 40_000)
    prod = vals[:, col[0]] * vals[:, col[1]]
    se = float(np.std(prod, ddof=1) / sqrt(prod.shape[0]))
    assert abs(float(prod.mean()) - exact_correlation(ma, (1, 0))) < 4.0 * se


# ---------------------------------------------------------------------------
# toral actions
# ---------------------------------------------------------------------------

def test_stock_action_verifies():
    report = verify_action(stock_action(), l_check=6)
    assert report.rho == 3
    assert abs(report.det_a1) == 1 and abs(report.det_a2) == 1
    assert report.commute
    assert report.min_log_modulus_gap > 1e-4


def test_verify_action_rejects_bad_pairs():
    with pytest.raises(ActionError):
        verify_action(((1, 1), (0, 1)), ((1, 0), (1, 1)), l_check=2)
    with pytest.raises(ActionError):
        verify_action(((2, 0), (0, 2)), ((1, 0), (0, 1)), l_check=2)
    # cat map with the identity: A2^l has unit eigenvalues
    with pytest.raises(ActionError):
        verify_action(((2, 1), (1, 1)), ((1, 0), (0, 1)), l_check=2)


def test_transported_frequency_matches_direct_transposes():
    act = stock_action()
    k = (2, -1, 3)

    def tmul(mat, v):
        return tuple(sum(mat[i][j] * v[i] for i in range(3)) for j in range(3))

    assert transported_frequency(k, (0, 0), act) == k
    assert transported_frequency(k, (1, 0), act) == tmul(act.a1, k)
    assert transported_frequency(k, (0, 1), act) == tmul(act.a2, k)
    assert transported_frequency(k, (1, 1), act) == tmul(
        act.a2, tmul(act.a1, k))


def test_transported_frequency_composes_and_inverts():
    act = stock_action()
    k = (1, 0, 0)
    for l in ((1, 0), (0, 1), (2, -1), (-3, 2)):
        step = transported_frequency(k, l, act)
        back = transported_frequency(step, (-l[0], -l[1]), act)
        assert back == k
        two = transported_frequency(step, l, act)
        assert two == transported_frequency(k, (2 * l[0], 2 * l[1]), act)


# ---------------------------------------------------------------------------
# toral sceneries
# ---------------------------------------------------------------------------

def test_toral_correlations_of_the_cosine_observable():
    model = toral_scenery(stock_action(), cosine_observable((1, 0, 0)))
    assert exact_correlation(model, (0, 0)) == pytest.approx(2.0, abs=1e-15)
    assert model_variance(model) == pytest.approx(2.0, abs=1e-15)
    # a hyperbolic orbit never returns a frequency onto the support
    for l in ((1, 0), (0, 1), (-1, 2), (3, 3), (-4, -4)):
        assert exact_correlation(model, l) == 0.0


def test_toral_sampler_agrees_with_exact_correlations():
    model = toral_scenery(stock_action(), cosine_observable((1, 0, 0)))
    sites = np.array([[0, 0], [1, 0], [0, 1]], dtype=np.int64)
    col = np.argsort(np.argsort(encode_sites(sites)))
    vals = sample_scenery_matrix(model, sites, stream(43, 0), 40_000)
    for j, l in ((1, (1, 0)), (2, (0, 1))):
        prod = vals[:, col[0]] * vals[:, col[j]]
        se = float(np.std(prod, ddof=1) / sqrt(prod.shape[0]))
        exact = exact_correlation(model, l)
        assert abs(float(prod.mean()) - exact) < 4.0 * max(se, 1e-12)
    sq = vals[:, col[0]] ** 2
    se0 = float(np.std(sq, ddof=1) / sqrt(sq.shape[0]))
    assert abs(float(sq.mean()) - 2.0) < 4.0 * se0


def test_toral_sampling_is_stream_deterministic():
    model = toral_scenery(stock_action(), cosine_observable((1, 0, 0)))
    support = [(0, 0), (2, 3), (-1, 4)]
    a = sample_scenery(model, support, stream(44, 0))
    b = sample_scenery(model, support, stream(44, 0))
    c = sample_scenery(model, support, stream(44, 1))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_toral_scenery_rejects_mismatched_observable():
    act = stock_action()
    with pytest.raises(ValueError):
        toral_scenery(act, cosine_observable((1, 0)))
    with pytest.raises(ValueError):
        toral_scenery(act, cosine_observable((1, 0, 0)), modulus=2 ** 10)


def test_coboundary_structure():
    act = stock_action()
    g = cosine_observable((1, 0, 0), amplitude=1.0)
    f = coboundary(g, 1, act)
    coeffs = f.coefficients()
    assert sum(abs(c) for c in coeffs.values()) == pytest.approx(2.0)
    # g minus its translate: original frequencies keep coefficient +1/2
    # and the transported pair carries -1/2
    assert coeffs[(1, 0, 0)] == pytest.approx(0.5)
    assert all(abs(c) == pytest.approx(0.5) for c in coeffs.values())
    assert len(coeffs) == 4


def test_trig_polynomial_norms():
    f = trig_polynomial(2, {(1, 0): 1.0 + 0j, (-1, 0): 1.0 + 0j,
                            (2, 2): 0.5j, (-2, -2): -0.5j})
    assert f.norm_c == pytest.approx(3.0)
    assert f.n_terms == 4
    assert not f.is_zero()


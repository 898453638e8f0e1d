"""Correlation tables, spectral densities, exact variances, truncation."""

import numpy as np
import pytest

from rwrs.occupation import occupation
from rwrs.scenery import (
    IIDScenery,
    coboundary,
    cosine_observable,
    exact_correlation,
    moving_average,
    stock_action,
    rademacher,
    toral_scenery,
    trig_polynomial,
    two_point,
)
from rwrs.spectral import (
    PowerLawCoefficients,
    ac0_truncate,
    asymptotic_variance,
    correlation_table,
    spectral_density_eval,
    variance_exact,
)
from rwrs.rng import stream
from rwrs.walks import sample_path, ssrw

MA_COEFFS = {(0, 0): 1.0, (1, 0): 0.5, (0, 1): -0.25, (1, 1): 0.125}


def ma_model():
    return moving_average(MA_COEFFS, rademacher())


def toral_model():
    return toral_scenery(stock_action(), cosine_observable((1, 0, 0)))


def grid_points(m=7):
    ts = np.linspace(0.0, 1.0, m, endpoint=False)
    return [(float(a), float(b)) for a in ts for b in ts]


# ---------------------------------------------------------------------------
# correlation tables
# ---------------------------------------------------------------------------

def test_iid_table_is_a_point_mass():
    law = two_point(3.0, 0.25)
    table = correlation_table(IIDScenery(law=law), window=5)
    assert table.certified_exact and table.tail_bound == 0.0
    assert table.as_dict() == {(0, 0): pytest.approx(law.variance())}
    assert table.value((0, 0)) == pytest.approx(law.variance())
    assert table.value((3, -2)) == 0.0
    with pytest.raises(ValueError):
        table.value((6, 0))


def test_ma_table_matches_exact_correlation():
    ma = ma_model()
    table = correlation_table(ma, window=3)
    assert table.certified_exact and table.tail_bound == 0.0
    for l1 in range(-3, 4):
        for l2 in range(-3, 4):
            assert table.value((l1, l2)) == pytest.approx(
                exact_correlation(ma, (l1, l2)), abs=1e-15)
    # symmetry of the stored entries
    for lag, v in table.entries:
        assert table.value((-lag[0], -lag[1])) == pytest.approx(v)


def test_ma_window_zero_reports_its_omitted_mass():
    ma = ma_model()
    table = correlation_table(ma, window=0)
    assert not table.certified_exact
    omitted = sum(abs(exact_correlation(ma, (l1, l2)))
                  for l1 in range(-1, 2) for l2 in range(-1, 2)
                  if (l1, l2) != (0, 0))
    assert table.tail_bound == pytest.approx(omitted)
    assert table.value((0, 0)) == pytest.approx(exact_correlation(ma, (0, 0)))


def test_toral_table_for_the_stock_observable():
    table = correlation_table(toral_model(), window=6)
    assert table.certified_exact
    assert table.as_dict() == {(0, 0): pytest.approx(2.0)}


def test_rejects_negative_window():
    with pytest.raises(ValueError):
        correlation_table(ma_model(), window=-1)


# ---------------------------------------------------------------------------
# spectral densities
# ---------------------------------------------------------------------------

def test_density_closed_forms_and_nonnegativity():
    iid = IIDScenery(law=rademacher())
    ma = ma_model()
    tor = toral_model()
    base_var = ma.base.variance()
    for t in grid_points():
        assert spectral_density_eval(iid, t) == pytest.approx(1.0)
        symbol = sum(a * np.exp(2j * np.pi * (q[0] * t[0] + q[1] * t[1]))
                     for q, a in MA_COEFFS.items())
        want = base_var * abs(symbol) ** 2
        got = spectral_density_eval(ma, t)
        assert got == pytest.approx(want, abs=1e-12)
        assert got >= -1e-12
        assert spectral_density_eval(tor, t) == pytest.approx(2.0)


def test_window_sum_density_matches_the_symbol_formula():
    ma = ma_model()
    table = correlation_table(ma, window=2)
    for t in grid_points(5):
        assert table.density(t) == pytest.approx(
            spectral_density_eval(ma, t), abs=1e-12)


def test_toral_density_bounded_by_squared_coefficient_norm():
    act = stock_action()
    g = cosine_observable((1, 0, 0), amplitude=1.0)
    f = coboundary(g, 1, act)
    model = toral_scenery(act, f)
    table = correlation_table(model, window=8)
    cap = f.norm_c ** 2 + table.tail_bound + 1e-9
    for t in grid_points(9):
        val = table.density(t)
        assert -table.tail_bound - 1e-9 <= val <= cap


def test_asymptotic_variance_identities():
    c0 = 2.0 / np.pi
    law = two_point(3.0, 0.25)
    assert asymptotic_variance(IIDScenery(law=law), c0) == pytest.approx(
        c0 * law.variance())
    ma = ma_model()
    coeff_sum = sum(MA_COEFFS.values())
    assert asymptotic_variance(ma, c0) == pytest.approx(
        c0 * ma.base.variance() * coeff_sum ** 2)
    assert asymptotic_variance(toral_model(), c0) == pytest.approx(c0 * 2.0)


# ---------------------------------------------------------------------------
# exact variances of weighted interval sums
# ---------------------------------------------------------------------------

def brute_variance(positions, intervals, table_dict):
    """Var(sum_j a_j S_j) by the site-pair double sum over the combined
    signed weight, using the exact lag correlations."""
    weight = {}
    for (a, b), coef in intervals:
        for x, y in positions[a:b]:
            weight[(int(x), int(y))] = weight.get((int(x), int(y)), 0.0) + coef
    sites = list(weight)
    total = 0.0
    for x in sites:
        for y in sites:
            d = (x[0] - y[0], x[1] - y[1])
            r = table_dict.get(d, 0.0)
            if r:
                total += weight[x] * weight[y] * r
    return total


def full_table_dict(ma, reach):
    return {(l1, l2): exact_correlation(ma, (l1, l2))
            for l1 in range(-reach, reach + 1)
            for l2 in range(-reach, reach + 1)}


def test_variance_exact_matches_the_site_pair_sum():
    ma = ma_model()
    walk = ssrw()
    path = sample_path(walk, 600, stream(23, 0))
    intervals = [((0, 350), 1.0), ((200, 600), -0.5)]
    fields = [(occupation(path, a, b), c) for (a, b), c in intervals]
    table = correlation_table(ma, window=2)
    out = variance_exact(fields, table)
    assert out.exact and out.error_bound == 0.0
    want = brute_variance(path.positions, intervals, full_table_dict(ma, 2))
    assert out.value == pytest.approx(want, rel=1e-12)
    assert float(out) == out.value
    assert out.value >= 0.0 or abs(out.value) < 1e-9


def test_variance_exact_bounds_the_window_zero_error():
    ma = ma_model()
    walk = ssrw()
    path = sample_path(walk, 400, stream(29, 0))
    fields = [(occupation(path, 0, 400), 1.0)]
    truth = brute_variance(path.positions, [((0, 400), 1.0)],
                           full_table_dict(ma, 2))
    out = variance_exact(fields, correlation_table(ma, window=0))
    assert not out.exact and out.error_bound > 0.0
    assert abs(out.value - truth) <= out.error_bound


# ---------------------------------------------------------------------------
# coefficient rules and truncation
# ---------------------------------------------------------------------------

def test_trig_polynomial_passes_through_truncation():
    f = trig_polynomial(3, {(1, 0, 0): 1.0, (-1, 0, 0): 1.0, (2, 1, 0): 0.5j,
                            (-2, -1, 0): -0.5j})
    out = ac0_truncate(f, 1e-8)
    assert out.tail_l1 == 0.0 and out.tail_sq == 0.0
    assert out.radius == 2
    assert out.polynomial.coefficients() == f.coefficients()


def test_power_law_rule_validation():
    with pytest.raises(ValueError):
        PowerLawCoefficients(rho=2, beta=-1.0)
    with pytest.raises(ValueError):
        PowerLawCoefficients(rho=0, beta=4.0)
    with pytest.raises(ValueError):
        ac0_truncate(PowerLawCoefficients(rho=2, beta=2.0), 1e-4)
    with pytest.raises(ValueError):
        ac0_truncate(PowerLawCoefficients(rho=2, beta=4.0), -1.0)


def test_power_law_truncation_meets_its_tolerance():
    rule = PowerLawCoefficients(rho=2, beta=4.0, scale=0.7)
    out = ac0_truncate(rule, 1e-4)
    assert out.tail_sq <= 1e-4
    assert out.tail_l1 == pytest.approx(np.sqrt(out.tail_sq))
    # kept coefficients follow the rule exactly, origin excluded
    coeffs = out.polynomial.coefficients()
    assert (0, 0) not in coeffs
    r = out.radius
    assert len(coeffs) == (2 * r + 1) ** 2 - 1
    for k, c in coeffs.items():
        assert c == pytest.approx(rule.coefficient(k))
    # tightness: one radius less would miss the tolerance
    if r > 1:
        smaller = ac0_truncate(rule, out.tail_sq * 1.0001)
        assert smaller.radius == r

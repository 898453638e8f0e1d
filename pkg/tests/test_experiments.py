"""Experiment drivers: configs, verdicts, worker determinism, identities."""

from fractions import Fraction
from math import log, sqrt

import numpy as np
import pytest

from rwrs.experiments import (
    ExperimentConfig,
    cross_term_diagnostic,
    cumulant_experiment,
    estimate_c0,
    exact_fourth_moment,
    fclt_experiment,
    g0_bound,
    moricz_check,
    newman_wright_check,
    toral_verify_experiment,
    truncation_split,
    variance_experiment,
    wilson_half_width,
)
from rwrs.occupation import intersections, occupation, power_sum
from rwrs.rng import stream
from rwrs.scenery import (
    IIDScenery,
    cosine_observable,
    gaussian,
    moving_average,
    stock_action,
    rademacher,
    toral_scenery,
    two_point,
)
from rwrs.walks import EmpiricalC0Required, sample_path, ssrw, step_distribution

C0_SSRW = 2.0 / np.pi


def iid_cfg(**kw):
    base = dict(walk=ssrw(), model=IIDScenery(law=rademacher()), n=2000,
                replicates=200, omega_replicates=2, master_seed=7, c0=C0_SSRW)
    base.update(kw)
    return ExperimentConfig(**base)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def test_config_validation():
    with pytest.raises(ValueError):
        iid_cfg(n=1)
    with pytest.raises(ValueError):
        iid_cfg(time_grid=(0.0, 0.5))
    with pytest.raises(ValueError):
        iid_cfg(time_grid=(0.1, 0.5, 1.0))
    with pytest.raises(ValueError):
        iid_cfg(time_grid=(0.0, 0.5, 0.5, 1.0))
    with pytest.raises(ValueError):
        iid_cfg(replicates=0)
    with pytest.raises(ValueError):
        iid_cfg(normalization="other")
    with pytest.raises(ValueError):
        iid_cfg(c0=-1.0)


def test_config_c0_resolution():
    assert iid_cfg().resolved_c0() == pytest.approx(C0_SSRW)
    with pytest.raises(EmpiricalC0Required):
        iid_cfg(c0=None).resolved_c0()


def test_config_hash_tracks_content():
    a, b = iid_cfg(), iid_cfg()
    assert a.config_hash() == b.config_hash()
    assert len(a.config_hash()) == 16
    assert a.config_hash() != iid_cfg(master_seed=8).config_hash()
    assert a.config_hash() != iid_cfg(n=2001).config_hash()


# ---------------------------------------------------------------------------
# distributional experiment
# ---------------------------------------------------------------------------

def report_payload(rep):
    return (rep.kind, rep.columns, tuple(map(tuple, (rep.estimates, rep.verdicts))),
            [tuple(sorted(r.items())) for r in rep.rows])


def test_fclt_experiment_shape_and_worker_identity():
    cfg = iid_cfg(model=IIDScenery(law=gaussian(1.0)), n=4000,
                  replicates=300, omega_replicates=2)
    rep1 = fclt_experiment(cfg, workers=1)
    rep3 = fclt_experiment(cfg, workers=3)
    assert report_payload(rep1) == report_payload(rep3)
    assert rep1.kind == "fclt"
    kinds = {row["kind"] for row in rep1.rows}
    assert kinds == {"increment", "covariance", "projection"}
    names = {v.name for v in rep1.verdicts}
    assert {"variance_ratio_band", "ks_family_pass_rate"} <= names
    for row in rep1.rows:
        if row["kind"] == "projection":
            assert 0.0 <= row["ks_p"] <= 1.0


def test_fclt_requires_enough_replicates():
    with pytest.raises(ValueError):
        fclt_experiment(iid_cfg(replicates=50))


def test_wilson_half_width_closed_form():
    z = 1.96
    got = wilson_half_width(50, 100, z)
    p_hat, n = 0.5, 100
    want = z / (1 + z * z / n) * sqrt(p_hat * (1 - p_hat) / n
                                      + z * z / (4 * n * n))
    assert got == pytest.approx(want)
    assert wilson_half_width(0, 10) > 0.0
    with pytest.raises(ValueError):
        wilson_half_width(1, 0)


# ---------------------------------------------------------------------------
# maximal inequalities
# ---------------------------------------------------------------------------

def test_newman_wright_small_run():
    cfg = iid_cfg(n=1000, replicates=300)
    rep = newman_wright_check(cfg, lam=3.0)
    assert rep.kind == "newman_wright"
    parts = {row["part"] for row in rep.rows}
    assert parts == {"iid"}
    assert all(v.passed for v in rep.verdicts)
    with pytest.raises(ValueError):
        newman_wright_check(cfg, lam=1.0)


def test_newman_wright_splits_moving_averages():
    ma = moving_average({(0, 0): 1.0, (1, 0): 0.5, (0, 1): -0.25},
                        rademacher())
    cfg = iid_cfg(model=ma, n=800, replicates=250)
    rep = newman_wright_check(cfg, lam=3.0)
    assert {row["part"] for row in rep.rows} == {"plus", "minus"}


def brute_fourth_moment(law, w):
    """Ordered quadruple sum with expectations read off the equality
    pattern of the four sites: independence kills any lone factor."""
    from collections import Counter
    from itertools import product as iproduct
    sites = list(w.as_dict().items())
    m2, m4 = law.moment(2), law.moment(4)
    m1, m3 = law.moment(1), law.moment(3)
    total = 0.0
    for combo in iproduct(sites, repeat=4):
        weight = 1
        for _, c in combo:
            weight *= c
        mult = Counter(site for site, _ in combo)
        term = 1.0
        for _, k in mult.items():
            term *= (m1, m2, m3, m4)[k - 1]
        total += weight * term
    return total


def test_exact_fourth_moment_identities():
    path = sample_path(ssrw(), 12, stream(51, 0))
    w = occupation(path)
    law = two_point(3.0, 0.25)
    assert exact_fourth_moment(law, w) == pytest.approx(
        brute_fourth_moment(law, w), rel=1e-12)
    # rademacher: E S^4 = 3 V^2 - 2 U4 exactly
    big = occupation(sample_path(ssrw(), 500, stream(51, 1)))
    v = power_sum(big, 2)
    u4 = power_sum(big, 4)
    assert exact_fourth_moment(rademacher(), big) == float(3 * v * v - 2 * u4)


def test_exact_fourth_moment_against_monte_carlo():
    path = sample_path(ssrw(), 200, stream(53, 0))
    w = occupation(path)
    law = two_point(3.0, 0.25)
    counts = w.counts.astype(np.float64)
    rng = stream(55, 1)
    reps = 20000
    draws = law.sample(rng, (reps, counts.size))
    s = draws @ counts
    s4 = s ** 4
    se = float(s4.std(ddof=1) / sqrt(reps))
    assert abs(float(s4.mean()) - exact_fourth_moment(law, w)) <= 4.0 * se


def test_g0_bound_is_exactly_super_additive():
    law = rademacher()  # sqrt(3 m2^2 + m4) = 2, so G0 = 2 V exactly
    path = sample_path(ssrw(), 900, stream(57, 0))
    rng = np.random.default_rng(59)
    for _ in range(50):
        a, b, c = sorted(rng.integers(0, 900, size=3))
        if a == b or b == c:
            continue
        w_ab = occupation(path, a, b)
        w_bc = occupation(path, b, c)
        w_ac = occupation(path, a, c)
        cross = intersections(w_ab, w_bc, (0, 0)) + intersections(
            w_bc, w_ab, (0, 0))
        assert g0_bound(law, w_ac) == g0_bound(law, w_ab) + g0_bound(
            law, w_bc) + 2.0 * cross
        assert g0_bound(law, w_ac) >= g0_bound(law, w_ab) + g0_bound(law, w_bc)


def test_moricz_check_small_run():
    cfg = iid_cfg(n=600, replicates=400)
    rep = moricz_check(cfg)
    assert rep.kind == "moricz"
    assert {v.name for v in rep.verdicts} == {"fourth_moment_match",
                                              "moricz_bound"}
    assert all(v.passed for v in rep.verdicts)
    assert rep.meta["c_max"] == pytest.approx((1 - 2 ** -0.25) ** -4)
    ma = moving_average({(0, 0): 1.0, (1, 0): 0.5}, rademacher())
    with pytest.raises(ValueError):
        moricz_check(iid_cfg(model=ma))
    with pytest.raises(ValueError):
        moricz_check(cfg, interval=(10, 5))


# ---------------------------------------------------------------------------
# truncation
# ---------------------------------------------------------------------------

def test_truncation_split_recomposes_and_has_exact_moments():
    law = two_point(3.0, 0.25)
    model = IIDScenery(law=law)
    bounded, tail = truncation_split(model, 1.0)
    x = law.sample(stream(61, 0), (5000,))
    np.testing.assert_allclose(bounded.apply(x) + tail.apply(x), x, atol=0.0)
    # closed-form second moments of the centered parts
    assert bounded.second_moment == pytest.approx(0.75 - 0.75 ** 2)
    assert tail.second_moment == pytest.approx((3.0 - 0.75) - 0.75 ** 2)
    # tail mass is nonincreasing in the level
    levels = [-2.0, 0.0, 1.0, 2.5, 3.5]
    tails = [truncation_split(model, lv)[1].second_moment for lv in levels]
    assert all(b <= a + 1e-12 for a, b in zip(tails, tails[1:]))
    with pytest.raises(ValueError):
        truncation_split(moving_average({(0, 0): 1.0}, law), 1.0)


# ---------------------------------------------------------------------------
# lattice constant estimation
# ---------------------------------------------------------------------------

def test_estimate_c0_recovers_the_square_lattice_constant():
    est = estimate_c0(ssrw(), [64, 128, 256, 512], paths_per_n=12,
                      master_seed=3)
    assert est.name == "c0"
    assert 0.2 < est.value < 1.2
    assert est.se > 0.0
    assert est.n == 4 * 12


def test_estimate_c0_validation():
    with pytest.raises(ValueError):
        estimate_c0(ssrw(), [64, 128, 256], paths_per_n=4)
    with pytest.raises(ValueError):
        estimate_c0(ssrw(), [64, 64, 128, 256], paths_per_n=4)
    with pytest.raises(ValueError):
        estimate_c0(ssrw(), [64, 128, 256, 512], paths_per_n=1)
    doubled = step_distribution({(2, 0): Fraction(1, 4), (-2, 0): Fraction(1, 4),
                                 (0, 2): Fraction(1, 4), (0, -2): Fraction(1, 4)})
    with pytest.raises(ValueError):
        estimate_c0(doubled, [64, 128, 256, 512], paths_per_n=4)


# ---------------------------------------------------------------------------
# variance, cumulants, toral verification, cross terms
# ---------------------------------------------------------------------------

def test_variance_experiment_small_run():
    ma = moving_average({(0, 0): 1.0, (1, 0): 0.5, (0, 1): -0.25},
                        rademacher())
    cfg = iid_cfg(model=ma, n=2000, replicates=150)
    rep = variance_experiment(cfg, window=6)
    assert rep.kind == "variance"
    assert rep.meta["table_certified"] is True
    names = {v.name for v in rep.verdicts}
    assert "mc_match" in names and "ratio_band" in names
    mc = next(v for v in rep.verdicts if v.name == "mc_match")
    assert mc.passed


def test_cumulant_experiment_verdicts():
    cfg = iid_cfg(n=4000, omega_replicates=3)
    rep = cumulant_experiment(cfg, r=4)
    names = {v.name for v in rep.verdicts}
    assert names == {"partitions_match_bell", "round_trip",
                     "statistic_shrinks"}
    assert all(v.passed for v in rep.verdicts)
    rt = next(v for v in rep.verdicts if v.name == "round_trip")
    assert rt.observed <= 1e-10


def test_cumulant_experiment_notes_unsupported_models():
    ma = moving_average({(0, 0): 1.0, (1, 0): 0.5}, rademacher())
    rep = cumulant_experiment(iid_cfg(model=ma), r=4)
    assert "note" in rep.meta
    assert {v.name for v in rep.verdicts} == {"partitions_match_bell",
                                              "round_trip"}


def test_toral_verify_experiment_small_run():
    model = toral_scenery(stock_action(), cosine_observable((1, 0, 0)))
    rep = toral_verify_experiment(model, replicates=512, master_seed=5,
                                  l_max=2, l_check=8)
    assert {v.name for v in rep.verdicts} == {"action_verified",
                                              "correlation_agreement"}
    assert all(v.passed for v in rep.verdicts)
    assert len(rep.rows) == 25


def test_cross_term_diagnostic_matches_the_additivity_identity():
    path = sample_path(ssrw(), 3000, stream(67, 0))
    n = path.n_steps
    cut = n // 2
    w_full = occupation(path, 0, n)
    w_i = occupation(path, 0, cut)
    w_j = occupation(path, cut, n)
    p = (0, 0)
    cross = intersections(w_i, w_j, p) + intersections(w_j, w_i, p)
    got = cross_term_diagnostic(path, 0.5, p, C0_SSRW)
    assert got == pytest.approx(cross / (C0_SSRW * n * log(n)), rel=1e-12)
    # and the un-normalized identity is exact
    assert power_sum(w_full, 2) == power_sum(w_i, 2) + power_sum(w_j, 2) + cross
    with pytest.raises(ValueError):
        cross_term_diagnostic(path, 0.0, p, C0_SSRW)
    with pytest.raises(ValueError):
        cross_term_diagnostic(path, 1.0, p, C0_SSRW)

"""Occupation fields and exact self-intersection combinatorics."""

from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rwrs.occupation import (
    decode_sites,
    encode_sites,
    intersection_table,
    intersections,
    kernel_fourier_ratio,
    lln_table,
    occupation,
    power_sum,
    quadruple_count,
    synthetic_field,
)
from rwrs.rng import stream
from rwrs.walks import sample_path, ssrw


def brute_counts(path, a, b):
    return Counter(tuple(v) for v in path.positions[a:b])


def brute_intersections(ci, cj, p):
    # sum_l w_i(l + p) w_j(l)
    return sum(ci.get((l[0] + p[0], l[1] + p[1]), 0) * m for l, m in cj.items())


def brute_quadruple(c, l1, l2, l3):
    tot = 0
    for l, m in c.items():
        tot += (m * c.get((l[0] + l1[0], l[1] + l1[1]), 0)
                * c.get((l[0] + l2[0], l[1] + l2[1]), 0)
                * c.get((l[0] + l3[0], l[1] + l3[1]), 0))
    return tot


# ---------------------------------------------------------------------------
# field construction
# ---------------------------------------------------------------------------

def test_occupation_counts_match_brute():
    path = sample_path(ssrw(), 400, stream(3, 0))
    for a, b in ((0, 400), (0, 100), (100, 250), (399, 400)):
        field = occupation(path, a, b)
        assert field.as_dict() == dict(brute_counts(path, a, b))
        assert power_sum(field, 1) == b - a


def test_occupation_interval_partition_is_exact():
    path = sample_path(ssrw(), 300, stream(3, 1))
    cuts = [0, 60, 150, 300]
    total = occupation(path, 0, 300).as_dict()
    merged = Counter()
    for a, b in zip(cuts, cuts[1:]):
        merged.update(occupation(path, a, b).as_dict())
    assert dict(merged) == total


def test_synthetic_field_round_trip():
    counts = {(0, 0): 3, (5, -2): 1, (-4, 7): 2}
    field = synthetic_field(counts)
    assert field.as_dict() == counts
    assert field.max_count() == 3
    assert power_sum(field, 2) == 9 + 1 + 4


def test_encode_decode_round_trip_basic():
    pts = np.array([[0, 0], [1, -1], [-30000, 29999], [12345, -54321]],
                   dtype=np.int64)
    assert np.array_equal(decode_sites(encode_sites(pts)), pts)


@given(st.lists(st.tuples(st.integers(-10 ** 6, 10 ** 6),
                          st.integers(-10 ** 6, 10 ** 6)),
                min_size=1, max_size=50))
@settings(max_examples=60, deadline=None)
def test_encode_decode_round_trip_random(points):
    pts = np.array(points, dtype=np.int64)
    codes = encode_sites(pts)
    assert np.array_equal(decode_sites(codes), pts)
    assert len(np.unique(codes)) == len({tuple(p) for p in points})


# ---------------------------------------------------------------------------
# exact combinatorial oracles
# ---------------------------------------------------------------------------

def test_intersections_match_brute_loops():
    rng = stream(11, 0)
    for rep in range(30):
        n = int(rng.integers(40, 300))
        path = sample_path(ssrw(), n, stream(11, 1, rep))
        cut = int(rng.integers(10, n - 10))
        w_i = occupation(path, 0, cut)
        w_j = occupation(path, cut, n)
        ci, cj = brute_counts(path, 0, cut), brute_counts(path, cut, n)
        for _ in range(6):
            p = (int(rng.integers(-3, 4)), int(rng.integers(-3, 4)))
            assert intersections(w_i, w_j, p) == brute_intersections(ci, cj, p)
            assert intersections(w_j, w_i, p) == brute_intersections(cj, ci, p)


def test_power_sums_match_brute():
    for rep in range(20):
        path = sample_path(ssrw(), 250, stream(11, 2, rep))
        field = occupation(path, 0, 250)
        counts = brute_counts(path, 0, 250)
        for m in (1, 2, 3, 4, 5):
            assert power_sum(field, m) == sum(v ** m for v in counts.values())


def test_power_sum_uses_exact_big_integers():
    field = synthetic_field({(0, 0): 10 ** 7, (1, 0): 3})
    assert power_sum(field, 4) == (10 ** 7) ** 4 + 81


def test_quadruple_count_matches_brute():
    rng = stream(11, 3)
    for rep in range(15):
        path = sample_path(ssrw(), 200, stream(11, 4, rep))
        field = occupation(path, 0, 200)
        counts = brute_counts(path, 0, 200)
        for _ in range(5):
            lags = [(int(rng.integers(-2, 3)), int(rng.integers(-2, 3)))
                    for _ in range(3)]
            assert quadruple_count(field, *lags) == brute_quadruple(counts, *lags)
    assert quadruple_count(field, (0, 0), (0, 0), (0, 0)) == power_sum(field, 4)


def test_quadruple_count_big_integer_path():
    field = synthetic_field({(0, 0): 1 << 20, (1, 0): 1 << 20})
    got = quadruple_count(field, (0, 0), (0, 0), (0, 0))
    assert got == 2 * (1 << 80)


def test_additivity_of_intersections_over_a_split():
    path = sample_path(ssrw(), 320, stream(11, 5))
    rng = stream(11, 6)
    for _ in range(25):
        cut = int(rng.integers(5, 315))
        p = (int(rng.integers(-2, 3)), int(rng.integers(-2, 3)))
        full = occupation(path, 0, 320)
        w_i = occupation(path, 0, cut)
        w_j = occupation(path, cut, 320)
        cross = intersections(w_i, w_j, p) + intersections(w_j, w_i, p)
        assert (intersections(full, full, p)
                == intersections(w_i, w_i, p) + intersections(w_j, w_j, p) + cross)


def test_self_intersections_super_additive_on_random_splits():
    path = sample_path(ssrw(), 500, stream(11, 7))
    rng = stream(11, 8)
    for _ in range(200):
        b = int(rng.integers(0, 400))
        k = int(rng.integers(1, 50))
        l = int(rng.integers(1, 50))
        v_left = power_sum(occupation(path, b, b + k), 2)
        v_right = power_sum(occupation(path, b + k, b + k + l), 2)
        v_full = power_sum(occupation(path, b, b + k + l), 2)
        assert v_left + v_right <= v_full


# ---------------------------------------------------------------------------
# kernel diagnostics
# ---------------------------------------------------------------------------

def test_kernel_ratio_bounds_and_symmetry():
    path = sample_path(ssrw(), 5000, stream(11, 9))
    field = occupation(path, 0, 5000)
    assert kernel_fourier_ratio(field, (0, 0)) == 1.0
    for p in ((1, 0), (0, 1), (1, 1), (2, -1)):
        r = kernel_fourier_ratio(field, p)
        assert 0.0 <= r <= 1.0
        mirror = kernel_fourier_ratio(field, (-p[0], -p[1]))
        assert r == pytest.approx(mirror, abs=0)


def test_intersection_table_window_contents():
    path = sample_path(ssrw(), 150, stream(11, 10))
    w = occupation(path, 0, 150)
    table = intersection_table(w, w, window=2)
    for p, v in table.entries:
        assert max(abs(p[0]), abs(p[1])) <= 2
        assert v == intersections(w, w, p)
    assert table.value((0, 0)) == power_sum(w, 2)


# ---------------------------------------------------------------------------
# the LLN diagnostic table
# ---------------------------------------------------------------------------

def test_lln_table_shapes_and_verdict_names():
    paths = [sample_path(ssrw(), 4000, stream(21, i)) for i in range(6)]
    report = lln_table(paths, [400, 4000], c0=2.0 / np.pi, eps=0.45)
    assert report.kind == "lln"
    assert len(report.rows) == 12
    names = {v.name for v in report.verdicts}
    assert names == {"v_ratio_mean_band_n4000", "sup_w_below_n_eps",
                     "v_nondecreasing_in_n", "v_ratio_moves_toward_1"}
    assert report.verdict("v_nondecreasing_in_n").passed


def test_lln_sup_verdict_gates_only_largest_n():
    # scaled sup is far above 1 at tiny n and below 1 at the demo eps; the
    # verdict must reflect the largest grid point alone
    paths = [sample_path(ssrw(), 20000, stream(22, i)) for i in range(3)]
    report = lln_table(paths, [50, 20000], c0=2.0 / np.pi, eps=0.45)
    small_rows = [r for r in report.rows if r["n"] == 50]
    assert any(r["sup_w_scaled"] > 1.0 for r in small_rows)
    assert report.verdict("sup_w_below_n_eps").passed


def test_lln_scaled_sup_decreases_along_the_grid():
    # the honest finite-n surrogate of sup_l w_n = o(n^eps)
    paths = [sample_path(ssrw(), 100_000, stream(23, i)) for i in range(4)]
    report = lln_table(paths, [1000, 10_000, 100_000], c0=2.0 / np.pi,
                       eps=0.25)
    by_rep = {}
    for row in report.rows:
        by_rep.setdefault(row["replicate"], []).append(row["sup_w_scaled"])
    drops = sum(int(vals[-1] < vals[0]) for vals in by_rep.values())
    assert drops >= 3


def test_lln_rejects_bad_grids():
    paths = [sample_path(ssrw(), 100, stream(24, 0))]
    with pytest.raises(ValueError):
        lln_table(paths, [100, 50], c0=0.6)
    with pytest.raises(ValueError):
        lln_table(paths, [50, 200], c0=0.6)

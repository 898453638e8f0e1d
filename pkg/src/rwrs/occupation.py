"""Sparse occupation fields and exact self-intersection combinatorics.

A field stores visit counts of a path over an index interval [b, b+k) as
a sorted array of packed 64-bit site keys.  All counting operations
(intersection counts V, power sums U^(m), quadruple counts W, kernel
Fourier ratios) are exact integer computations on these arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import log
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np

from .report import Estimate, StatReport, Verdict
from .walks import WalkPath

Vec = Tuple[int, int]

# Sites are packed as two signed 32-bit coordinates in one int64.  A
# desk-scale walk never leaves this box; the bound is asserted, not assumed.
_COORD_BOUND = 1 << 31
_LOW_MASK = np.int64((1 << 32) - 1)


def encode_sites(points: np.ndarray) -> np.ndarray:
    """Pack an (m, 2) array of Z^2 points into int64 keys."""
    pts = np.asarray(points, dtype=np.int64)
    if pts.ndim == 1:
        pts = pts.reshape(1, 2)
    x, y = pts[:, 0], pts[:, 1]
    if x.size and (np.abs(x).max() >= _COORD_BOUND or np.abs(y).max() >= _COORD_BOUND):
        raise OverflowError("site coordinate exceeds the signed 32-bit packing range")
    return (x << np.int64(32)) | (y & _LOW_MASK)


def decode_sites(codes: np.ndarray) -> np.ndarray:
    """Inverse of encode_sites; returns an (m, 2) int64 array."""
    codes = np.asarray(codes, dtype=np.int64)
    x = codes >> np.int64(32)
    y = (codes & _LOW_MASK).astype(np.int64)
    y = np.where(y >= (1 << 31), y - (1 << 32), y)
    return np.stack([x, y], axis=1)


def _shift_codes(codes: np.ndarray, p: Vec) -> np.ndarray:
    # add p to every packed site; unpack-add-repack keeps the key order logic simple
    pts = decode_sites(codes)
    pts[:, 0] += p[0]
    pts[:, 1] += p[1]
    return encode_sites(pts)


@dataclass(frozen=True)
class OccupationField:
    """Visit counts of one path over the index interval [start, stop)."""

    start: int
    stop: int
    codes: np.ndarray   # sorted unique packed sites
    counts: np.ndarray  # int64, aligned with codes

    @property
    def length(self) -> int:
        return self.stop - self.start

    @property
    def support_size(self) -> int:
        return self.codes.shape[0]

    def sites(self) -> np.ndarray:
        return decode_sites(self.codes)

    def max_count(self) -> int:
        return int(self.counts.max()) if self.counts.size else 0

    def as_dict(self) -> Dict[Vec, int]:
        pts = self.sites()
        return {(int(px), int(py)): int(c) for (px, py), c in zip(pts, self.counts)}


def occupation(path: WalkPath, start: int = 0, stop: Optional[int] = None) -> OccupationField:
    """Occupation field of `path` over the index interval [start, stop).

    Index i contributes the site Z_i; the full-path field over n steps is
    occupation(path, 0, n), counting Z_0..Z_{n-1}.
    """
    total = len(path)
    if stop is None:
        stop = path.n_steps
    if not (0 <= start <= stop <= total):
        raise ValueError(f"interval [{start}, {stop}) out of range for path of {total} positions")
    codes = encode_sites(path.positions[start:stop])
    uniq, counts = np.unique(codes, return_counts=True)
    uniq.flags.writeable = False
    counts = counts.astype(np.int64)
    counts.flags.writeable = False
    return OccupationField(start=start, stop=stop, codes=uniq, counts=counts)


def synthetic_field(counts_by_site: Dict[Vec, int], start: int = 0) -> OccupationField:
    """Field with prescribed counts, for oracles and edge cases in tests."""
    if any(c <= 0 for c in counts_by_site.values()):
        raise ValueError("counts must be positive")
    pts = np.array(list(counts_by_site.keys()), dtype=np.int64).reshape(-1, 2)
    codes = encode_sites(pts)
    order = np.argsort(codes)
    codes = codes[order]
    counts = np.array(list(counts_by_site.values()), dtype=np.int64)[order]
    codes.flags.writeable = False
    counts.flags.writeable = False
    total = int(counts.sum())
    return OccupationField(start=start, stop=start + total, codes=codes, counts=counts)


# ---------------------------------------------------------------------------
# exact counting
# ---------------------------------------------------------------------------

def _aligned_counts(field: OccupationField, codes: np.ndarray) -> np.ndarray:
    """Counts of `field` at the given packed sites (0 where absent)."""
    pos = np.searchsorted(field.codes, codes)
    pos_c = np.minimum(pos, field.codes.shape[0] - 1) if field.codes.size else pos
    if not field.codes.size:
        return np.zeros(codes.shape[0], dtype=np.int64)
    hit = field.codes[pos_c] == codes
    out = np.where(hit, field.counts[pos_c], 0)
    return out.astype(np.int64)


def intersections(w_i: OccupationField, w_j: OccupationField, p: Vec) -> int:
    """Displacement-p intersection count between two index intervals.

    Returns sum_l w_i(l + p) * w_j(l): the number of index pairs (u, v),
    u in I, v in J, whose positions differ by exactly p.  With I = J and
    p = 0 this is the self-intersection count V = sum_l w(l)^2.
    """
    # iterate the smaller support, shifting it into the other field's frame
    if w_i.support_size <= w_j.support_size:
        # sites s of w_i correspond to l = s - p in w_j
        shifted = _shift_codes(w_i.codes, (-p[0], -p[1]))
        other = _aligned_counts(w_j, shifted)
        return int(np.dot(w_i.counts, other))
    shifted = _shift_codes(w_j.codes, p)
    other = _aligned_counts(w_i, shifted)
    return int(np.dot(w_j.counts, other))


@dataclass(frozen=True)
class IntersectionTable:
    """All V(I, J, p) for |p|_inf <= window, plus the interval tags."""

    interval_i: Tuple[int, int]
    interval_j: Tuple[int, int]
    window: int
    entries: Tuple[Tuple[Vec, int], ...]

    def value(self, p: Vec) -> int:
        for q, v in self.entries:
            if q == p:
                return v
        raise KeyError(f"displacement {p} outside the window {self.window}")


def intersection_table(w_i: OccupationField, w_j: OccupationField, window: int = 3) -> IntersectionTable:
    """Materialize V(I, J, p) over the square window |p|_inf <= window."""
    if window < 0:
        raise ValueError("window must be >= 0")
    entries = []
    for px in range(-window, window + 1):
        for py in range(-window, window + 1):
            entries.append(((px, py), intersections(w_i, w_j, (px, py))))
    return IntersectionTable(
        interval_i=(w_i.start, w_i.stop),
        interval_j=(w_j.start, w_j.stop),
        window=window,
        entries=tuple(entries),
    )


def power_sum(field: OccupationField, m: int) -> int:
    """Exact integer sum_l w(l)^m; m=1 gives the interval length, m=2 gives V."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if not field.counts.size:
        return 0
    # arbitrary precision: group by distinct count value, accumulate in python ints
    values, mult = np.unique(field.counts, return_counts=True)
    return sum(int(k) * int(c) ** m for c, k in zip(values, mult))


def quadruple_count(field: OccupationField, l1: Vec, l2: Vec, l3: Vec) -> int:
    """Exact count sum_l w(l) w(l+l1) w(l+l2) w(l+l3).

    Equals the number of index quadruples (i0, i1, i2, i3) in the field's
    interval with Z_{i1}-Z_{i0} = l1, Z_{i2}-Z_{i0} = l2, Z_{i3}-Z_{i0} = l3.
    """
    base = field.counts
    factors = [base]
    for off in (l1, l2, l3):
        shifted = _shift_codes(field.codes, off)
        factors.append(_aligned_counts(field, shifted))
    mask = (factors[1] > 0) & (factors[2] > 0) & (factors[3] > 0)
    if not mask.any():
        return 0
    cols = [f[mask] for f in factors]
    top = max(int(c.max()) for c in cols)
    if top ** 4 * cols[0].shape[0] < (1 << 62):
        return int(np.sum(cols[0] * cols[1] * cols[2] * cols[3]))
    # big synthetic counts: fall back to python big ints
    return sum(int(a) * int(b) * int(c) * int(d)
               for a, b, c, d in zip(*[col.tolist() for col in cols]))


def kernel_fourier_ratio(field: OccupationField, p: Vec) -> float:
    """V(p) / V(0): Fourier coefficient p of the normalized weight kernel.

    Closeness to 1 for small p is the working diagnostic for delta_0
    regularity of the occupation weights.
    """
    if not field.counts.size:
        raise ValueError("empty occupation field")
    v0 = intersections(field, field, (0, 0))
    return intersections(field, field, p) / v0


# ---------------------------------------------------------------------------
# law-of-large-numbers diagnostics
# ---------------------------------------------------------------------------

def lln_table(
    paths: Sequence[WalkPath],
    n_grid: Sequence[int],
    c0: float,
    eps: float = 0.25,
    ratio_band: Tuple[float, float] = (0.75, 1.25),
    trend_min_fraction: float = 0.8,
    master_seed: Optional[int] = None,
) -> StatReport:
    """Normalized self-intersection diagnostics over an ensemble of paths.

    For each n in the increasing grid and each path: V_n / (c0 n ln n),
    sup_l w_n / n^eps, and U^(m) / (n (ln n)^(m+1)) for m = 3, 4.  The
    verdicts check the ensemble-mean V ratio at the largest n against
    `ratio_band`, sup_l w_n < n^eps at the largest n on every path (the
    bound is asymptotic, so small grid points are reported but not
    gated), exact monotonicity of
    V_n in n, and the fraction of paths whose V ratio ends closer to 1
    than it started (the finite-n surrogate of the a.s. limit).
    """
    grid = list(n_grid)
    if grid != sorted(grid) or len(set(grid)) != len(grid):
        raise ValueError("n_grid must be strictly increasing")
    if not grid or grid[0] < 2:
        raise ValueError("n_grid entries must be >= 2")
    for path in paths:
        if path.n_steps < grid[-1]:
            raise ValueError("every path must cover the largest grid point")

    rows = []
    ratios_by_path: list[list[float]] = []
    sup_scaled_last: list[float] = []
    v_monotone = True
    for rep, path in enumerate(paths):
        prev_v = -1
        ratios = []
        for n in grid:
            field = occupation(path, 0, n)
            v = power_sum(field, 2)
            u3 = power_sum(field, 3)
            u4 = power_sum(field, 4)
            sup_w = field.max_count()
            v_ratio = v / (c0 * n * log(n))
            sup_scaled = sup_w / n ** eps
            rows.append({
                "replicate": rep,
                "n": n,
                "v": v,
                "v_ratio": v_ratio,
                "sup_w": sup_w,
                "sup_w_scaled": sup_scaled,
                "u3_ratio": u3 / (n * log(n) ** 4),
                "u4_ratio": u4 / (n * log(n) ** 5),
            })
            ratios.append(v_ratio)
            if n == grid[-1]:
                sup_scaled_last.append(sup_scaled)
            v_monotone = v_monotone and v >= prev_v
            prev_v = v
        ratios_by_path.append(ratios)

    n_last = grid[-1]
    last_ratios = np.array([r[-1] for r in ratios_by_path])
    mean_last = float(last_ratios.mean())
    se_last = float(last_ratios.std(ddof=1) / np.sqrt(len(paths))) if len(paths) > 1 else None
    toward = [abs(r[-1] - 1.0) < abs(r[0] - 1.0) for r in ratios_by_path]
    monotone_toward = [
        all(abs(r[i + 1] - 1.0) <= abs(r[i] - 1.0) for i in range(len(r) - 1))
        for r in ratios_by_path
    ]
    frac_toward = sum(toward) / len(toward)

    lo, hi = ratio_band
    verdicts = [
        Verdict(
            name=f"v_ratio_mean_band_n{n_last}",
            passed=lo <= mean_last <= hi,
            observed=mean_last,
            threshold=f"[{lo}, {hi}]",
            sample_size=len(paths),
        ),
        Verdict(
            name="sup_w_below_n_eps",
            passed=all(s < 1.0 for s in sup_scaled_last),
            observed=max(sup_scaled_last),
            threshold=f"< 1 at eps={eps}, largest n",
            sample_size=len(paths),
        ),
        Verdict(
            name="v_nondecreasing_in_n",
            passed=v_monotone,
            observed=1.0 if v_monotone else 0.0,
            threshold="exact",
            sample_size=len(paths) * len(grid),
        ),
        Verdict(
            name="v_ratio_moves_toward_1",
            passed=frac_toward >= trend_min_fraction,
            observed=frac_toward,
            threshold=f">= {trend_min_fraction}",
            sample_size=len(paths),
        ),
    ]
    estimates = [
        Estimate(name=f"v_ratio_mean_n{n}", value=float(np.mean([r[i] for r in ratios_by_path])),
                 se=float(np.std([r[i] for r in ratios_by_path], ddof=1) / np.sqrt(len(paths)))
                 if len(paths) > 1 else None,
                 n=len(paths))
        for i, n in enumerate(grid)
    ]
    estimates.append(Estimate(name="trend_monotone_fraction",
                              value=sum(monotone_toward) / len(monotone_toward),
                              n=len(paths)))
    meta = {"c0": c0, "eps": eps, "n_grid": grid}
    if master_seed is not None:
        meta["master_seed"] = master_seed
    if se_last is not None:
        meta["v_ratio_se_last"] = se_last
    columns = ("replicate", "n", "v", "v_ratio", "sup_w", "sup_w_scaled",
               "u3_ratio", "u4_ratio")
    return StatReport(kind="lln", estimates=estimates, verdicts=verdicts,
                      rows=rows, columns=columns, meta=meta)

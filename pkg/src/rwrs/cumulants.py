"""Joint cumulants, moment transforms, and exact toral character sums.

Cumulants are computed straight from the set-partition formula; the
moment oracles stay generic so Fractions and complex values survive the
transforms untouched.  For toral sceneries the mixed moments of
translated observables are finite character sums with exact integer
frequency arithmetic, which makes every cumulant here a finite exact
computation rather than an estimate.
"""

from __future__ import annotations

import itertools
from functools import lru_cache
from math import factorial, log
from typing import Callable, Dict, Sequence, Tuple

import numpy as np

from .occupation import (
    OccupationField,
    _aligned_counts,
    _shift_codes,
    power_sum,
)
from .scenery import (
    IIDScenery,
    SceneryModel,
    ToralAction,
    ToralScenery,
    TrigPolynomial,
    transported_frequency,
)
from .spectral import _dual_eigen

Vec = Tuple[int, int]

_MAX_PARTITION_ORDER = 10
_MAX_TORAL_ORDER = 6
_MAX_TORAL_TERMS = 32


# ---------------------------------------------------------------------------
# set partitions
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def set_partitions(r: int) -> Tuple[Tuple[Tuple[int, ...], ...], ...]:
    """All partitions of {0..r-1} into nonempty blocks, duplicate-free.

    Enumerated by restricted growth strings, so the count is the r-th
    Bell number and every block is an ascending index tuple.  Guarded to
    r <= 10 (Bell(10) = 115975).
    """
    if not 1 <= r <= _MAX_PARTITION_ORDER:
        raise ValueError(f"r must be between 1 and {_MAX_PARTITION_ORDER}")
    labels = [0] * r
    out = []

    def rec(i: int, mx: int) -> None:
        if i == r:
            blocks = [[] for _ in range(mx + 1)]
            for idx, lbl in enumerate(labels):
                blocks[lbl].append(idx)
            out.append(tuple(tuple(blk) for blk in blocks))
            return
        for lbl in range(mx + 2):
            labels[i] = lbl
            rec(i + 1, max(mx, lbl))

    rec(1, 0)
    return tuple(out)


partitions = set_partitions


# ---------------------------------------------------------------------------
# moment <-> cumulant transforms
# ---------------------------------------------------------------------------

def joint_cumulant(oracle: Callable[[Tuple[int, ...]], object], r: int):
    """The order-r joint cumulant from a mixed-moment oracle.

    `oracle(block)` must return E(prod_{i in block} X_i) for any
    ascending tuple of indices from {0..r-1}.  The value is
    sum over partitions of (-1)^(p-1) (p-1)! times the product of block
    moments; the arithmetic type of the oracle (float, Fraction,
    complex) is preserved.
    """
    total = 0
    for blocks in set_partitions(r):
        p = len(blocks)
        prod = 1
        for blk in blocks:
            prod = prod * oracle(blk)
        total = total + ((-1) ** (p - 1)) * factorial(p - 1) * prod
    return total


def moments_from_cumulants(rule: Callable[[Tuple[int, ...]], object], r: int):
    """Inverse transform: E(X_0 .. X_{r-1}) from a joint-cumulant rule."""
    total = 0
    for blocks in set_partitions(r):
        prod = 1
        for blk in blocks:
            prod = prod * rule(blk)
        total = total + prod
    return total


def single_cumulant(moments: Sequence, r: int):
    """kappa_r of one variable from its raw moments.

    `moments[j]` must be E Y^j with moments[0] = 1; the slots of the
    joint cumulant all carry the same variable, so block moments depend
    only on block size.
    """
    if r < 1:
        raise ValueError("r must be >= 1")
    if len(moments) < r + 1:
        raise ValueError(f"need moments up to order {r}")
    if moments[0] != 1:
        raise ValueError("moments[0] must be E Y^0 = 1")
    return joint_cumulant(lambda blk: moments[len(blk)], r)


# ---------------------------------------------------------------------------
# exact toral moments
# ---------------------------------------------------------------------------

def exact_toral_moment(f: TrigPolynomial, action: ToralAction,
                       lags: Sequence[Vec]) -> float:
    """E(prod_j f(A^{l_j} x)) as an exact character sum.

    Equals the sum of prod_j c_f(k_j) over coefficient tuples whose
    transported frequencies cancel: sum_j (A^{l_j})^T k_j = 0.  Computed
    meet-in-the-middle with exact integer frequencies; moments are
    translation invariant, so lags are normalized to the first one.
    """
    lags = tuple((int(l[0]), int(l[1])) for l in lags)
    r = len(lags)
    if not 1 <= r <= _MAX_TORAL_ORDER:
        raise ValueError(f"need 1 <= r <= {_MAX_TORAL_ORDER} lags")
    if len(f.terms) > _MAX_TORAL_TERMS:
        raise ValueError(f"support too large (> {_MAX_TORAL_TERMS} terms)")
    base = lags[0]
    rel = tuple((l[0] - base[0], l[1] - base[1]) for l in lags)
    return _toral_moment_cached(f, action, rel)


def _transport_sums(f: TrigPolynomial, action: ToralAction,
                    lags: Sequence[Vec]) -> Dict[Tuple[int, ...], complex]:
    zero = (0,) * f.rho
    acc: Dict[Tuple[int, ...], complex] = {zero: 1.0 + 0.0j}
    for lag in lags:
        moved = {k: transported_frequency(k, lag, action) for k, _ in f.terms}
        nxt: Dict[Tuple[int, ...], complex] = {}
        for s, c in acc.items():
            for k, ck in f.terms:
                t = moved[k]
                key = tuple(a + b for a, b in zip(s, t))
                nxt[key] = nxt.get(key, 0.0) + c * ck
        acc = nxt
    return acc


@lru_cache(maxsize=1 << 18)
def _toral_moment_cached(f: TrigPolynomial, action: ToralAction,
                         rel_lags: Tuple[Vec, ...]) -> float:
    r = len(rel_lags)
    left = _transport_sums(f, action, rel_lags[: r // 2])
    right = _transport_sums(f, action, rel_lags[r // 2:])
    acc = 0.0 + 0.0j
    for s, cl in left.items():
        cr = right.get(tuple(-x for x in s))
        if cr is not None:
            acc += cl * cr
    if abs(acc.imag) > 1e-9 * max(1.0, abs(acc.real)):
        raise ArithmeticError(f"moment came out non-real: {acc}")
    return float(acc.real)


def toral_cumulant(f: TrigPolynomial, action: ToralAction,
                   lags: Sequence[Vec]) -> float:
    """Joint cumulant of (f(A^{l_1} x), ..., f(A^{l_r} x)), exact."""
    lags = tuple((int(l[0]), int(l[1])) for l in lags)
    oracle = lambda blk: exact_toral_moment(f, action, [lags[i] for i in blk])
    return float(joint_cumulant(oracle, len(lags)))


# ---------------------------------------------------------------------------
# finite-range certification
# ---------------------------------------------------------------------------

def finite_range_bound(f: TrigPolynomial, action: ToralAction, r: int,
                       scan_radius: int = 12) -> int:
    """A constructive M_r: cumulants vanish beyond lag diameter M_r.

    A joint cumulant of translated observables survives only through
    resonances: tuples of support frequencies, transported by lag
    powers of the dual action, that sum to zero with no vanishing
    proper subsum.  If some bipartition of the lag set keeps every
    resonance of order <= r on one side, all mixed moments factorize
    across it and the cumulant is exactly zero.  The certificate
    measures the largest sup-norm spread any primitive resonance can
    bridge (an exact two-lag scan of |d|_inf <= scan_radius with
    eigenvalue-logarithm screening beyond it, plus an exact box search
    over s-term resonances for 3 <= s <= r) and returns r-1 times that
    chain step.
    """
    return (r - 1) * _chain_step(f, action, r, scan_radius)


@lru_cache(maxsize=64)
def _chain_step(f: TrigPolynomial, action: ToralAction, r: int,
                scan_radius: int = 12) -> int:
    """Largest sup-norm gap a primitive resonance of order <= r bridges;
    joint cumulants split exactly across any wider bipartition gap."""
    step = _pair_range(f, action, r, scan_radius)
    for s in range(3, r + 1):
        step = max(step, _multiway_diameter(f, action, s))
    return step


@lru_cache(maxsize=256)
def _pair_range(f: TrigPolynomial, action: ToralAction, r: int,
                scan_radius: int = 12) -> int:
    """Largest |d|_inf at which two collapsed cluster frequency sums can
    interact ((A^d)^T sigma = -tau for sums of < r support frequencies)."""
    if not 2 <= r <= _MAX_TORAL_ORDER:
        raise ValueError(f"need 2 <= r <= {_MAX_TORAL_ORDER}")
    if len(f.terms) > _MAX_TORAL_TERMS:
        raise ValueError(f"support too large (> {_MAX_TORAL_TERMS} terms)")
    freqs = [k for k, _ in f.terms]
    if not freqs:
        return 0
    rho = f.rho
    sums = set()
    for m in range(1, r):
        for combo in itertools.combinations_with_replacement(freqs, m):
            s = tuple(sum(col) for col in zip(*combo))
            if any(s):
                sums.add(s)
    if not sums:
        return 0
    sums = sorted(sums)
    sums_set = set(sums)

    # exact scan: transported sums over the offset box, matched against
    # negated sums
    m_pair = 0
    for d1 in range(-scan_radius, scan_radius + 1):
        for d2 in range(-scan_radius, scan_radius + 1):
            hit = False
            for s in sums:
                t = transported_frequency(s, (d1, d2), action)
                if tuple(-x for x in t) in sums_set:
                    hit = True
                    break
            if hit:
                m_pair = max(m_pair, abs(d1), abs(d2))
    if m_pair > scan_radius - 2:
        raise ValueError(
            "scan box too small: interactions reach its outer shells, "
            "increase scan_radius")

    # candidates beyond the box must not exist
    ok, logs, vinv = _dual_eigen(action)
    if not ok:
        raise ValueError("cannot certify: action spectrum not simple enough")
    for s in sums:
        for t in sums:
            d_star = _match_candidate(s, tuple(-x for x in t), logs, vinv, rho)
            if d_star is not None and d_star > scan_radius - 2:
                raise ValueError(
                    "cannot certify: a possible interaction sits beyond the "
                    "scan box, increase scan_radius")
    return m_pair


def _match_candidate(src, dst, logs, vinv, rho):
    """sup-norm of the unique real lag candidate with (A^d)^T src = dst,
    or None when no real lag can satisfy the modulus equations."""
    cs = vinv @ np.array(src, dtype=float)
    cd = vinv @ np.array(dst, dtype=float)
    scale = max(1.0, float(np.abs(cs).max()), float(np.abs(cd).max()))
    rows = []
    rhs = []
    for i in range(rho):
        a_s = abs(cs[i])
        a_d = abs(cd[i])
        tiny = 1e-12 * scale
        solid = 1e-6 * scale
        if a_s < tiny and a_d < tiny:
            continue
        if (a_s < tiny and a_d > solid) or (a_d < tiny and a_s > solid):
            return None
        if a_s < solid or a_d < solid:
            raise ValueError("cannot certify: ambiguous eigencomponent")
        rows.append(logs[i])
        rhs.append(log(a_d / a_s))
    if len(rows) < 2:
        raise ValueError("cannot certify: underdetermined modulus equations")
    a = np.array(rows)
    b = np.array(rhs)
    if np.linalg.matrix_rank(a, tol=1e-9) < 2:
        raise ValueError("cannot certify: eigen-log rows do not span the plane")
    sol, *_ = np.linalg.lstsq(a, b, rcond=None)
    if float(np.linalg.norm(a @ sol - b)) > 1e-6 * max(1.0, float(np.linalg.norm(b))):
        return None
    return float(np.max(np.abs(sol)))


_MULTIWAY_LEFT_BUDGET = 150_000
_MULTIWAY_RIGHT_BUDGET = 1_000_000


def _primitive(vecs: Sequence[Tuple[int, ...]]) -> bool:
    # no proper nonempty subset of the transported frequencies sums to zero
    n = len(vecs)
    for mask in range(1, (1 << n) - 1):
        tot = None
        for i in range(n):
            if mask >> i & 1:
                tot = vecs[i] if tot is None else tuple(
                    x + y for x, y in zip(tot, vecs[i]))
        if not any(tot):
            return False
    return True


@lru_cache(maxsize=256)
def _multiway_diameter(f: TrigPolynomial, action: ToralAction, s: int) -> int:
    """Largest sup-norm diameter of a primitive s-term resonance.

    A resonance is a tuple of support frequencies k_j at lags l_j whose
    transported sum (sum of (A^{l_j})^T k_j) vanishes; primitive means no
    proper subsum vanishes.  Diameters are translation invariant, so the
    first term is anchored at lag (0, 0) and the remaining terms split
    into halves matched meet-in-the-middle over a lag box whose radius is
    set by work budgets.  Raises when a primitive resonance lands within
    two shells of the box edge, since farther ones could then exist.
    """
    if s < 3:
        raise ValueError("the multiway search starts at three terms")
    if s > _MAX_TORAL_ORDER:
        raise ValueError(f"resonance order capped at {_MAX_TORAL_ORDER}")
    freqs = [k for k, _ in f.terms]
    if len(freqs) > _MAX_TORAL_TERMS:
        raise ValueError(f"support too large (> {_MAX_TORAL_TERMS} terms)")
    if not freqs:
        return 0
    nf = len(freqs)
    half = (s + 1) // 2
    radius = 0
    for cand in range(1, 13):
        cells = (2 * cand + 1) ** 2
        left_work = nf ** half * cells ** (half - 1)
        right_work = nf ** (s - half) * cells ** (s - half)
        if left_work <= _MULTIWAY_LEFT_BUDGET and right_work <= _MULTIWAY_RIGHT_BUDGET:
            radius = cand
    if radius < 3:
        raise ValueError(
            "cannot certify: the resonance search box would be too small "
            "for this support size, reduce the order or the support")
    box = [(d1, d2) for d1 in range(-radius, radius + 1)
           for d2 in range(-radius, radius + 1)]

    # left partial sums: the anchored term plus half - 1 free terms
    left: Dict[Tuple[int, ...], list] = {}
    for ki in itertools.product(range(nf), repeat=half):
        anchored = freqs[ki[0]]
        for lags in itertools.product(box, repeat=half - 1):
            vecs = [anchored]
            for j, cell in zip(ki[1:], lags):
                vecs.append(transported_frequency(freqs[j], cell, action))
            tot = tuple(map(sum, zip(*vecs)))
            left.setdefault(tot, []).append((((0, 0),) + lags, tuple(vecs)))

    diameter = 0
    extent = 0
    for ki in itertools.product(range(nf), repeat=s - half):
        for lags in itertools.product(box, repeat=s - half):
            vecs = [transported_frequency(freqs[j], cell, action)
                    for j, cell in zip(ki, lags)]
            tot = tuple(map(sum, zip(*vecs)))
            matches = left.get(tuple(-x for x in tot))
            if not matches:
                continue
            for left_lags, left_vecs in matches:
                all_vecs = list(left_vecs) + vecs
                if not _primitive(all_vecs):
                    continue
                pts = left_lags + lags
                diameter = max(diameter, max(
                    max(abs(p[0] - q[0]), abs(p[1] - q[1]))
                    for p in pts for q in pts))
                extent = max(extent, max(
                    max(abs(p[0]), abs(p[1])) for p in pts))
    if extent > radius - 2:
        raise ValueError(
            "cannot certify: a primitive resonance reaches the outer "
            "shells of the search box, so farther ones may exist")
    return diameter


# ---------------------------------------------------------------------------
# the cumulant criterion statistic
# ---------------------------------------------------------------------------

_MAX_LEONOV_TUPLES = 5_000_000


def leonov_statistic(w: OccupationField, model: SceneryModel, r: int) -> float:
    """The normalized r-th cumulant sum of S_n given the walk.

    Returns sum over lag tuples of w(l_1)..w(l_r) C(l_1..l_r) divided by
    (sum w^2)^(r/2).  IID sceneries reduce to the closed form
    kappa_r(X) U^(r) / V^(r/2); toral sceneries sum exact cumulants over
    tuples within the certified finite range and treat the rest as zero.
    """
    if r < 3:
        raise ValueError("the criterion statistic needs r >= 3")
    v = power_sum(w, 2)
    if v == 0:
        raise ValueError("empty occupation field")
    if isinstance(model, IIDScenery):
        moms = [model.law.moment(j) for j in range(r + 1)]
        kappa = single_cumulant(moms, r)
        u = power_sum(w, r)
        return float(kappa) * float(u) / float(v) ** (r / 2.0)
    if isinstance(model, ToralScenery):
        if r > _MAX_TORAL_ORDER:
            raise ValueError(f"toral statistic capped at r = {_MAX_TORAL_ORDER}")
        g = _chain_step(model.observable, model.action, r)
        return _leonov_toral(w, model, r, g) / float(v) ** (r / 2.0)
    raise ValueError(f"unsupported model for the cumulant statistic: {type(model)!r}")


def _canonical_lags(lags: Sequence[Vec]) -> Tuple[Vec, ...]:
    ordered = sorted(lags)
    ax, ay = ordered[0]
    return tuple((x - ax, y - ay) for x, y in ordered)


@lru_cache(maxsize=1 << 18)
def _cumulant_cached(f: TrigPolynomial, action: ToralAction,
                     canon: Tuple[Vec, ...]) -> float:
    return toral_cumulant(f, action, canon)


def _compositions(total: int, parts: int):
    # ordered positive integer parts summing to total, via cut points
    for cuts in itertools.combinations(range(1, total), parts - 1):
        prev = 0
        out = []
        for c in (*cuts, total):
            out.append(c - prev)
            prev = c
        yield tuple(out)


def _leonov_toral(w: OccupationField, model: ToralScenery, r: int,
                  g: int) -> float:
    # sum over ordered r-tuples of visited sites, grouped by the lag
    # pattern relative to the first coordinate: cumulants vanish exactly
    # unless the pattern is chain-connected at the certified step g, and
    # the per-pattern weight is a vectorized product of aligned count
    # fields.  Patterns are grown only while some site realizes every
    # point jointly (tracked by an occupancy bitmask), which keeps the
    # enumeration tied to the geometry of the walk instead of the full
    # lattice ball.
    f = model.observable
    action = model.action
    base = w.counts.astype(np.float64)
    vecs: Dict[Vec, np.ndarray] = {(0, 0): base}
    masks: Dict[Vec, int] = {}

    def vec(p: Vec) -> np.ndarray:
        if p not in vecs:
            vecs[p] = _aligned_counts(w, _shift_codes(w.codes, p)).astype(np.float64)
        return vecs[p]

    def mask_of(p: Vec) -> int:
        if p not in masks:
            masks[p] = int.from_bytes(np.packbits(vec(p) > 0.0).tobytes(), "big")
        return masks[p]

    origin = frozenset([(0, 0)])
    patterns = [origin]
    if g > 0:
        ball = [(dx, dy) for dx in range(-g, g + 1)
                for dy in range(-g, g + 1) if (dx, dy) != (0, 0)]
        seen = {origin}
        live = [(origin, mask_of((0, 0)))]
        attempts = 0
        for _ in range(r - 1):
            nxt = []
            for pts, mask in live:
                attempts += len(pts) * len(ball)
                if attempts > _MAX_LEONOV_TUPLES:
                    raise ValueError(
                        "pattern space too large for the toral statistic; "
                        "reduce r or use an observable with shorter "
                        "interactions")
                for px, py in pts:
                    for dx, dy in ball:
                        cand = (px + dx, py + dy)
                        if cand in pts:
                            continue
                        grown = pts | {cand}
                        if grown in seen:
                            continue
                        seen.add(grown)
                        joint = mask & mask_of(cand)
                        if not joint:
                            continue
                        nxt.append((grown, joint))
                        patterns.append(grown)
            live = nxt
        patterns.sort(key=lambda s: (len(s), sorted(s)))

    total = 0.0
    for pattern in patterns:
        pts = sorted(pattern)
        k = len(pts)
        for mult in _compositions(r, k):
            m0 = mult[pts.index((0, 0))]
            prod = base ** m0
            coef = factorial(r - 1) // factorial(m0 - 1)
            for p, m in zip(pts, mult):
                if p == (0, 0):
                    continue
                prod = prod * vec(p) ** m
                coef //= factorial(m)
            weight = float(prod.sum())
            if weight == 0.0:
                continue
            lags = [p for p, m in zip(pts, mult) for _ in range(m)]
            total += coef * weight * _cumulant_cached(
                f, action, _canonical_lags(lags))
    return total

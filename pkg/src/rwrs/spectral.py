"""Spectral densities, asymptotic variances, and exact finite-n variances.

The correlation function of every scenery model here has finite support
(iid, finite moving averages) or provably finite support up to a
certified search (toral characters: each ordered coefficient pair can
match under the transported-frequency action at most once).  A
CorrelationTable stores the window of exact correlations together with a
rigorous l1 bound on everything omitted; downstream variance formulas
propagate that bound instead of pretending the window is the world.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from math import log
from typing import Dict, Sequence, Tuple, Union

import numpy as np

from .occupation import OccupationField, intersections
from .scenery import (
    IIDScenery,
    MovingAverageScenery,
    SceneryModel,
    ToralScenery,
    TrigPolynomial,
    exact_correlation,
    transported_frequency,
    trig_polynomial,
)

Vec = Tuple[int, int]


# ---------------------------------------------------------------------------
# correlation tables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CorrelationTable:
    """Exact lag correlations inside |l|_inf <= window, sparse, symmetrized.

    `tail_bound` is an l1 bound on the sum of |correlation| over every lag
    outside the window; `certified_exact` means that bound is exactly zero
    (all correlation mass is known to live inside the window).
    """

    window: int
    entries: Tuple[Tuple[Vec, float], ...]
    tail_bound: float
    certified_exact: bool

    def value(self, lag: Vec) -> float:
        lag = (int(lag[0]), int(lag[1]))
        if max(abs(lag[0]), abs(lag[1])) > self.window:
            raise ValueError(f"lag {lag} outside window {self.window}")
        for k, v in self.entries:
            if k == lag:
                return v
        return 0.0

    def as_dict(self) -> Dict[Vec, float]:
        return dict(self.entries)

    @property
    def abs_sum(self) -> float:
        """Sum of |correlation| over the window."""
        return float(sum(abs(v) for _, v in self.entries))

    def density(self, t: Sequence[float]) -> float:
        """Window sum of the spectral density at t in [0,1)^2."""
        acc = 0.0 + 0.0j
        for (l1, l2), v in self.entries:
            acc += v * np.exp(2j * np.pi * (l1 * t[0] + l2 * t[1]))
        return float(acc.real)


def _symmetrized(window: int, raw: Dict[Vec, float], tail: float,
                 certified: bool) -> CorrelationTable:
    out: Dict[Vec, float] = {}
    for lag, v in raw.items():
        neg = (-lag[0], -lag[1])
        mean = 0.5 * (v + raw.get(neg, v))
        if mean != 0.0:
            out[lag] = mean
    entries = tuple(sorted(out.items()))
    return CorrelationTable(window=window, entries=entries,
                            tail_bound=max(0.0, tail), certified_exact=certified)


@lru_cache(maxsize=128)
def correlation_table(model: SceneryModel, window: int = 20) -> CorrelationTable:
    """Exact correlations of `model` on |l|_inf <= window plus a tail bound.

    IID and finite moving averages always come out certified (a window
    covering all filter differences has tail exactly zero; a smaller one
    gets the exact omitted mass).  Toral models are certified when every
    coefficient pair either matches inside the window or provably cannot
    match at any lag; otherwise the unresolved pair mass bounds the tail.
    """
    if window < 0:
        raise ValueError("window must be >= 0")
    if isinstance(model, IIDScenery):
        return _symmetrized(window, {(0, 0): model.law.variance()}, 0.0, True)
    if isinstance(model, MovingAverageScenery):
        raw: Dict[Vec, float] = {}
        tail = 0.0
        offsets = [q for q, _ in model.coeffs]
        diffs = {(q[0] - r[0], q[1] - r[1]) for q in offsets for r in offsets}
        for d in diffs:
            v = exact_correlation(model, d)
            if max(abs(d[0]), abs(d[1])) <= window:
                raw[d] = v
            else:
                tail += abs(v)
        return _symmetrized(window, raw, tail, tail == 0.0)
    if isinstance(model, ToralScenery):
        return _toral_table(model, window)
    raise TypeError(f"unknown scenery model {type(model)!r}")


# ---------------------------------------------------------------------------
# toral tables: exact window plus orbit-escape certification
# ---------------------------------------------------------------------------

@lru_cache(maxsize=64)
def _dual_eigen(action):
    """Eigen data of the dual (transposed) action.

    Returns (ok, logs, vinv): logs[i] = (log|alpha1_i|, log|alpha2_i|) for
    the common eigenbasis of A1^T, A2^T, and vinv maps an integer
    frequency to its eigenbasis components.  ok is False when the
    spectrum is not simple enough to pair reliably.
    """
    a1t = np.array(action.a1, dtype=float).T
    a2t = np.array(action.a2, dtype=float).T
    w1, v = np.linalg.eig(a1t)
    scale = max(1.0, float(np.abs(w1).max()))
    gaps = np.abs(w1[:, None] - w1[None, :]) + np.eye(len(w1)) * 1e9
    if gaps.min() < 1e-9 * scale:
        return False, None, None
    alpha2 = np.empty(len(w1), dtype=complex)
    for i in range(len(w1)):
        vi = v[:, i]
        alpha2[i] = (np.conj(vi) @ (a2t @ vi)) / (np.conj(vi) @ vi)
        if np.linalg.norm(a2t @ vi - alpha2[i] * vi) > 1e-8 * max(1.0, np.linalg.norm(a2t)):
            return False, None, None
    logs = np.stack([np.log(np.abs(w1)), np.log(np.abs(alpha2))], axis=1)
    vinv = np.linalg.inv(v)
    return True, logs, vinv


def _toral_table(model: ToralScenery, window: int) -> CorrelationTable:
    coeffs = model.observable.coefficients()
    freqs = list(coeffs)
    if not freqs:
        return _symmetrized(window, {}, 0.0, True)
    max_abs = max(max(abs(x) for x in k) for k in freqs)

    # exact in-window enumeration, recording which ordered pairs matched
    raw: Dict[Vec, float] = {}
    matched = set()
    for l1 in range(-window, window + 1):
        for l2 in range(-window, window + 1):
            acc = 0.0 + 0.0j
            for m in freqs:
                k = transported_frequency(m, (l1, l2), model.action)
                if max(abs(x) for x in k) > max_abs:
                    continue
                mate = coeffs.get(k)
                if mate is not None:
                    acc += coeffs[m] * mate.conjugate()
                    matched.add((m, k))
            if acc != 0:
                raw[(l1, l2)] = float(acc.real)

    # tail: budget the pairs not yet resolved; try to certify each via the
    # eigen-log candidate for the lag at which it could match
    ok, logs, vinv = _dual_eigen(model.action)
    budget = 0.0
    for m in freqs:
        for k in freqs:
            if (m, k) in matched:
                continue  # a pair matches at most one lag
            mass = abs(coeffs[m]) * abs(coeffs[k])
            if ok and _pair_escapes(m, k, logs, vinv, window):
                continue
            budget += mass
    return _symmetrized(window, raw, budget, budget == 0.0)


def _pair_escapes(m, k, logs, vinv, window: int) -> bool:
    """True when (A^l)^T m = k is impossible for every |l|_inf > window.

    In the dual eigenbasis a match forces |comp_i(k)| =
    |comp_i(m)| exp(<l, logs_i>) per direction.  Either some direction
    rules every l out, or the least-squares candidate l* is unique and any
    integer match must equal it; if l* sits strictly inside the window the
    exact enumeration already had its chance.
    """
    cm = vinv @ np.array(m, dtype=float)
    ck = vinv @ np.array(k, dtype=float)
    scale = max(1.0, float(np.abs(cm).max()), float(np.abs(ck).max()))
    rows = []
    rhs = []
    for i in range(len(cm)):
        am = abs(cm[i])
        ak = abs(ck[i])
        tiny = 1e-12 * scale
        solid = 1e-6 * scale
        if am < tiny and ak < tiny:
            continue
        if (am < tiny and ak > solid) or (ak < tiny and am > solid):
            return True  # zero component cannot become nonzero or vice versa
        if am < solid or ak < solid:
            return False  # ambiguous component, refuse to certify
        rows.append(logs[i])
        rhs.append(log(ak / am))
    if len(rows) < 2:
        return False
    a = np.array(rows)
    b = np.array(rhs)
    if np.linalg.matrix_rank(a, tol=1e-9) < 2:
        return False
    sol, *_ = np.linalg.lstsq(a, b, rcond=None)
    residual = float(np.linalg.norm(a @ sol - b))
    if residual > 1e-6 * max(1.0, float(np.linalg.norm(b))):
        return True  # no real lag satisfies the modulus equations
    return bool(np.max(np.abs(sol)) + 1.0 <= window)


# ---------------------------------------------------------------------------
# densities and asymptotic variance
# ---------------------------------------------------------------------------

def spectral_density_eval(model: SceneryModel, t: Sequence[float],
                          window: int = 20) -> float:
    """The spectral density at t in [0,1)^2.

    Closed form for iid (constant = variance) and moving averages
    (squared modulus of the filter symbol times the base variance); for
    toral models the window sum of the correlation table, whose tail
    bound limits the approximation error.
    """
    if isinstance(model, IIDScenery):
        return model.law.variance()
    if isinstance(model, MovingAverageScenery):
        z = 0.0 + 0.0j
        for (q1, q2), a in model.coeffs:
            z += a * np.exp(2j * np.pi * (q1 * t[0] + q2 * t[1]))
        return model.base.variance() * float(abs(z) ** 2)
    if isinstance(model, ToralScenery):
        return correlation_table(model, window).density(t)
    raise TypeError(f"unknown scenery model {type(model)!r}")


def asymptotic_variance(model: SceneryModel, c0: float, window: int = 20) -> float:
    """Limit of Var(S_n)/(n log n): spectral density at 0 times c0."""
    return spectral_density_eval(model, (0.0, 0.0), window) * c0


# ---------------------------------------------------------------------------
# exact finite-n variance of weighted interval sums
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExactVariance:
    """Window part of a variance plus a bound on the omitted part."""

    value: float
    error_bound: float
    exact: bool

    def __float__(self) -> float:
        return self.value


def variance_exact(fields: Sequence[Tuple[OccupationField, float]],
                   table: CorrelationTable) -> ExactVariance:
    """Variance of sum_j a_j S_{I_j} given the walk, via the lag expansion.

    Var = sum_{j,j'} a_j a_{j'} sum_p V(I_j, I_{j'}, p) phi(p); the sum
    over p runs over the table window and the remainder is bounded by
    tail_bound times sum_{j,j'} |a_j a_{j'}| min(sup w_j |I_{j'}|,
    sup w_{j'} |I_j|).  `exact` is True when the table certifies that no
    correlation lives outside its window.
    """
    fields = list(fields)
    value = 0.0
    mass = 0.0
    for w_i, a_i in fields:
        for w_j, a_j in fields:
            for lag, phi in table.entries:
                v = intersections(w_i, w_j, lag)
                value += a_i * a_j * v * phi
            mass += abs(a_i * a_j) * min(w_i.max_count() * w_j.length,
                                         w_j.max_count() * w_i.length)
    return ExactVariance(value=value, error_bound=mass * table.tail_bound,
                         exact=table.certified_exact)


# ---------------------------------------------------------------------------
# power-law coefficient rules and their truncation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PowerLawCoefficients:
    """The rule c(k) = scale * |k|_inf^(-beta) on Z^rho minus the origin."""

    rho: int
    beta: float
    scale: float = 1.0

    def __post_init__(self):
        if self.rho < 1:
            raise ValueError("rho must be >= 1")
        if self.beta <= 0 or self.scale <= 0:
            raise ValueError("beta and scale must be positive")

    def coefficient(self, k: Sequence[int]) -> float:
        r = max(abs(int(x)) for x in k)
        if r == 0:
            raise ValueError("coefficient rule excludes the origin")
        return self.scale * r ** (-self.beta)


@dataclass(frozen=True)
class TruncatedObservable:
    polynomial: TrigPolynomial
    radius: int
    tail_l1: float
    tail_sq: float


_MAX_BOX_SITES = 2_000_000


def _power_tail_l1(rule: PowerLawCoefficients, radius: int) -> float:
    """Upper bound on sum |c(k)| over |k|_inf > radius (exact shells then
    an integral bound)."""
    rho, beta = rule.rho, rule.beta
    s = 0.0
    r_stop = radius + 2000
    for r in range(radius + 1, r_stop + 1):
        count = (2 * r + 1) ** rho - (2 * r - 1) ** rho
        s += count * r ** (-beta)
    remainder = 2 * rho * 3 ** (rho - 1) * r_stop ** (rho - beta) / (beta - rho)
    return rule.scale * (s + remainder)


def ac0_truncate(f_spec: Union[TrigPolynomial, PowerLawCoefficients],
                 eps: float) -> TruncatedObservable:
    """Truncate an absolutely-summable coefficient rule to a trig polynomial.

    The returned tail satisfies (sum of omitted |c|)^2 <= eps.  A rule
    that is already a trig polynomial passes through with tail zero; a
    power-law rule must have beta > rho (else the l1 tail diverges).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if isinstance(f_spec, TrigPolynomial):
        radius = max((max(abs(x) for x in k) for k, _ in f_spec.terms), default=0)
        return TruncatedObservable(polynomial=f_spec, radius=radius,
                                   tail_l1=0.0, tail_sq=0.0)
    if not isinstance(f_spec, PowerLawCoefficients):
        raise TypeError("f_spec must be a TrigPolynomial or PowerLawCoefficients")
    if f_spec.beta <= f_spec.rho:
        raise ValueError(
            f"l1 tail diverges: beta={f_spec.beta} <= rho={f_spec.rho}")
    radius = 1
    while True:
        tail = _power_tail_l1(f_spec, radius)
        if tail * tail <= eps:
            break
        radius += 1
        if (2 * radius + 1) ** f_spec.rho > _MAX_BOX_SITES:
            raise ValueError("eps too small: truncation box would exceed "
                             f"{_MAX_BOX_SITES} sites")
    coeffs = {}
    for k in itertools.product(range(-radius, radius + 1), repeat=f_spec.rho):
        if any(k):
            coeffs[k] = f_spec.coefficient(k)
    poly = trig_polynomial(f_spec.rho, coeffs)
    tail = _power_tail_l1(f_spec, radius)
    return TruncatedObservable(polynomial=poly, radius=radius,
                               tail_l1=tail, tail_sq=tail * tail)

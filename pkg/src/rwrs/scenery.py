"""Scenery models over Z^2 and their exact correlations.

Three stationary random fields indexed by lattice sites:

* IID: independent centered values at every site.
* MovingAverage: a finite filter applied to an iid base field.
* Toral: X_l(x) = f(A^l x) for a Z^2 action l -> A1^l1 A2^l2 by commuting
  unimodular integer matrices on the rho-torus, f a zero-mean
  trigonometric polynomial.

Toral sampling happens at rational points p/q (q prime) with modular
matrix powers, so orbit values are exact despite exponential entry
growth.  Frequencies transported by the dual action use arbitrary
precision integers throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import erf, exp, pi, sqrt
from typing import Dict, Mapping, Optional, Tuple, Union

import numpy as np

from . import intmat
from .occupation import OccupationField, decode_sites, encode_sites

Vec = Tuple[int, int]
Freq = Tuple[int, ...]

MERSENNE_61 = (1 << 61) - 1


# ---------------------------------------------------------------------------
# iid laws
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IIDLaw:
    """A centered scalar law: rademacher, uniform, gaussian, or two_point.

    params:
      uniform   -> (half_width,)
      gaussian  -> (sd,)
      two_point -> (hi, prob): value hi with probability prob, else the
                   negative value that centers the law.
    """

    kind: str
    params: Tuple[float, ...] = ()

    def variance(self) -> float:
        if self.kind == "rademacher":
            return 1.0
        if self.kind == "uniform":
            return self.params[0] ** 2 / 3.0
        if self.kind == "gaussian":
            return self.params[0] ** 2
        if self.kind == "two_point":
            hi, p = self.params
            return p * hi * hi / (1.0 - p)
        raise ValueError(f"unknown law kind {self.kind!r}")

    def moment(self, j: int) -> float:
        """Exact j-th moment E X^j."""
        if j < 0:
            raise ValueError("moment order must be >= 0")
        if self.kind == "rademacher":
            return 1.0 if j % 2 == 0 else 0.0
        if self.kind == "uniform":
            h = self.params[0]
            return h ** j / (j + 1) if j % 2 == 0 else 0.0
        if self.kind == "gaussian":
            if j % 2 == 1:
                return 0.0
            sd = self.params[0]
            acc = 1.0
            for k in range(1, j, 2):  # (j-1)!! = 1*3*...*(j-1)
                acc *= k
            return acc * sd ** j
        if self.kind == "two_point":
            hi, p = self.params
            lo = -hi * p / (1.0 - p)
            return p * hi ** j + (1.0 - p) * lo ** j
        raise ValueError(f"unknown law kind {self.kind!r}")

    def support_bound(self) -> Optional[float]:
        """sup |X| when the law is bounded, else None."""
        if self.kind == "rademacher":
            return 1.0
        if self.kind == "uniform":
            return self.params[0]
        if self.kind == "two_point":
            hi, p = self.params
            return max(hi, hi * p / (1.0 - p))
        return None

    def partial_moment_below(self, level: float, j: int) -> float:
        """E[X^j 1{X <= level}] in closed form, j in {1, 2}."""
        if j not in (1, 2):
            raise ValueError("only first and second partial moments are closed-form")
        if self.kind == "rademacher":
            vals = [(-1.0, 0.5), (1.0, 0.5)]
            return sum(v ** j * p for v, p in vals if v <= level)
        if self.kind == "two_point":
            hi, p = self.params
            lo = -hi * p / (1.0 - p)
            vals = [(lo, 1.0 - p), (hi, p)]
            return sum(v ** j * w for v, w in vals if v <= level)
        if self.kind == "uniform":
            h = self.params[0]
            lvl = min(max(level, -h), h)
            if j == 1:
                return (lvl * lvl - h * h) / (4.0 * h)
            return (lvl ** 3 + h ** 3) / (6.0 * h)
        if self.kind == "gaussian":
            sd = self.params[0]
            z = level / sd
            pdf = exp(-z * z / 2.0) / sqrt(2.0 * pi)
            cdf = 0.5 * (1.0 + erf(z / sqrt(2.0)))
            if j == 1:
                return -sd * pdf
            return sd * sd * (cdf - z * pdf)
        raise ValueError(f"unknown law kind {self.kind!r}")

    def sample(self, rng: np.random.Generator, shape) -> np.ndarray:
        if self.kind == "rademacher":
            return rng.integers(0, 2, size=shape).astype(np.float64) * 2.0 - 1.0
        if self.kind == "uniform":
            h = self.params[0]
            return rng.uniform(-h, h, size=shape)
        if self.kind == "gaussian":
            return rng.normal(0.0, self.params[0], size=shape)
        if self.kind == "two_point":
            hi, p = self.params
            lo = -hi * p / (1.0 - p)
            mask = rng.random(shape) < p
            return np.where(mask, hi, lo)
        raise ValueError(f"unknown law kind {self.kind!r}")


def rademacher() -> IIDLaw:
    return IIDLaw(kind="rademacher")


def centered_uniform(half_width: float) -> IIDLaw:
    if half_width <= 0:
        raise ValueError("half_width must be positive")
    return IIDLaw(kind="uniform", params=(float(half_width),))


def gaussian(sd: float = 1.0) -> IIDLaw:
    if sd <= 0:
        raise ValueError("sd must be positive")
    return IIDLaw(kind="gaussian", params=(float(sd),))


def two_point(hi: float, prob: float) -> IIDLaw:
    if hi <= 0 or not (0.0 < prob < 1.0):
        raise ValueError("need hi > 0 and 0 < prob < 1")
    return IIDLaw(kind="two_point", params=(float(hi), float(prob)))


# ---------------------------------------------------------------------------
# toral actions
# ---------------------------------------------------------------------------

class ActionError(ValueError):
    """A toral action failed verification."""


@dataclass(frozen=True)
class ToralAction:
    """Commuting pair of unimodular integer matrices acting on T^rho."""

    rho: int
    a1: intmat.IntMatrix
    a2: intmat.IntMatrix


def toral_action(a1, a2) -> ToralAction:
    m1 = intmat.as_matrix(a1)
    m2 = intmat.as_matrix(a2)
    if len(m1) != len(m2):
        raise ValueError("matrices must have the same dimension")
    return ToralAction(rho=len(m1), a1=m1, a2=m2)


def stock_action() -> ToralAction:
    """The stock 3x3 commuting pair used in examples and tests."""
    a1 = ((-3, -3, 1), (10, 9, -3), (-30, -26, 9))
    a2 = ((11, 1, -1), (-10, -1, 1), (10, 2, -1))
    return toral_action(a1, a2)


@lru_cache(maxsize=16384)
def _action_power(action: ToralAction, l1: int, l2: int) -> intmat.IntMatrix:
    return intmat.mat_mul(intmat.mat_pow(action.a1, l1), intmat.mat_pow(action.a2, l2))


@lru_cache(maxsize=16384)
def _action_power_mod(action: ToralAction, l1: int, l2: int, q: int) -> intmat.IntMatrix:
    m1 = intmat.mat_pow_mod(action.a1, l1, q)
    m2 = intmat.mat_pow_mod(action.a2, l2, q)
    return intmat.mat_mul_mod(m1, m2, q)


@lru_cache(maxsize=64)
def _eigen_logs(action: ToralAction):
    """Per-eigendirection log moduli (log|alpha1_i|, log|alpha2_i|).

    Uses a common eigenbasis of the commuting pair (valid when A1 has
    simple spectrum; the pairing residual is checked).  Returns
    (ok, rows, basis) where rows is a (rho, 2) float array and basis the
    eigenvector matrix of A1 transposed, or (False, None, None).
    """
    a1 = np.array(action.a1, dtype=float)
    a2 = np.array(action.a2, dtype=float)
    w1, v = np.linalg.eig(a1)
    scale = max(1.0, np.abs(w1).max())
    gaps = np.abs(w1[:, None] - w1[None, :]) + np.eye(len(w1)) * 1e9
    if gaps.min() < 1e-9 * scale:
        return False, None, None
    alpha2 = np.empty(len(w1), dtype=complex)
    for i in range(len(w1)):
        vi = v[:, i]
        alpha2[i] = (np.conj(vi) @ (a2 @ vi)) / (np.conj(vi) @ vi)
        resid = np.linalg.norm(a2 @ vi - alpha2[i] * vi)
        if resid > 1e-8 * max(1.0, np.linalg.norm(a2)):
            return False, None, None
    rows = np.stack([np.log(np.abs(w1)), np.log(np.abs(alpha2))], axis=1)
    return True, rows, v


@dataclass(frozen=True)
class ActionReport:
    rho: int
    l_check: int
    det_a1: int
    det_a2: int
    commute: bool
    simple_spectrum: bool
    screened: int
    min_log_modulus_gap: float


def verify_action(action_or_a1, a2=None, l_check: int = 12,
                  unit_circle_tol: float = 1e-8) -> ActionReport:
    """Check the toral-action invariants; raise ActionError on violation.

    Exact checks: commutation, |det| = 1 for both matrices.  Eigenvalue
    screen: for every 0 < |l|_1 <= l_check, no eigenvalue of A^l may lie
    within `unit_circle_tol` of the unit circle.  The screen uses paired
    eigenvalue logarithms when the spectrum is simple (so the modulus of
    every eigenvalue of A^l is known to high relative accuracy), with a
    dense eigensolve of the exact integer power as fallback.  Any flagged
    l also gets the exact certificate: does some cyclotomic polynomial
    divide char(A^l)?
    """
    action = action_or_a1 if a2 is None else toral_action(action_or_a1, a2)
    rho = action.rho
    if rho < 1:
        raise ActionError("empty action")

    if intmat.mat_mul(action.a1, action.a2) != intmat.mat_mul(action.a2, action.a1):
        raise ActionError("matrices do not commute")
    d1 = intmat.mat_det(action.a1)
    d2 = intmat.mat_det(action.a2)
    if abs(d1) != 1 or abs(d2) != 1:
        raise ActionError(f"matrices must be unimodular, dets are {d1}, {d2}")

    ok, rows, _ = _eigen_logs(action)
    screened = 0
    min_gap = float("inf")
    for l1 in range(-l_check, l_check + 1):
        for l2 in range(-l_check, l_check + 1):
            if l1 == 0 and l2 == 0:
                continue
            if abs(l1) + abs(l2) > l_check:
                continue
            screened += 1
            if ok:
                log_mods = rows @ np.array([l1, l2], dtype=float)
                gap = float(np.abs(log_mods).min())
            else:
                gap = _unit_gap_dense(action, l1, l2)
            min_gap = min(min_gap, gap)
            if gap < unit_circle_tol:
                order = intmat.root_of_unity_order(
                    intmat.charpoly(_action_power(action, l1, l2)), rho)
                if order:
                    raise ActionError(
                        f"unit-circle eigenvalue: A^({l1},{l2}) has a root of "
                        f"unity of order {order}")
                raise ActionError(
                    f"unit-circle eigenvalue: A^({l1},{l2}) has an eigenvalue "
                    f"within {unit_circle_tol} of the unit circle")
    # exact cyclotomic certificate on a small inner box, independent of
    # the floating screen
    inner = min(l_check, 4)
    for l1 in range(-inner, inner + 1):
        for l2 in range(-inner, inner + 1):
            if (l1, l2) == (0, 0) or abs(l1) + abs(l2) > inner:
                continue
            order = intmat.root_of_unity_order(
                intmat.charpoly(_action_power(action, l1, l2)), rho)
            if order:
                raise ActionError(
                    f"unit-circle eigenvalue: A^({l1},{l2}) has a root of "
                    f"unity of order {order}")
    return ActionReport(rho=rho, l_check=l_check, det_a1=d1, det_a2=d2,
                        commute=True, simple_spectrum=bool(ok),
                        screened=screened, min_log_modulus_gap=min_gap)


def _unit_gap_dense(action: ToralAction, l1: int, l2: int) -> float:
    """min |log|lambda|| over eigenvalues of A^l, via the exact power."""
    m = _action_power(action, l1, l2)
    arr = np.array([[float(x) for x in row] for row in m])
    eigs = np.linalg.eigvals(arr)
    mods = np.abs(eigs)
    mods = np.where(mods <= 0, 1e-300, mods)
    return float(np.abs(np.log(mods)).min())


# ---------------------------------------------------------------------------
# trigonometric polynomials
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrigPolynomial:
    """Zero-mean real trig polynomial on T^rho as a frequency->coefficient map.

    Terms exclude the zero frequency and satisfy c(-k) = conj(c(k)).
    """

    rho: int
    terms: Tuple[Tuple[Freq, complex], ...]

    def coefficients(self) -> Dict[Freq, complex]:
        return dict(self.terms)

    @property
    def norm_c(self) -> float:
        """l1 norm of the coefficients, sum |c(k)|."""
        return float(sum(abs(c) for _, c in self.terms))

    @property
    def n_terms(self) -> int:
        return len(self.terms)

    def is_zero(self) -> bool:
        return not self.terms


def trig_polynomial(rho: int, coeffs: Mapping[Freq, complex],
                    hermitian_tol: float = 1e-12) -> TrigPolynomial:
    """Canonicalize {k: c(k)}; validates Hermitian symmetry and k != 0."""
    canon: Dict[Freq, complex] = {}
    for k, c in coeffs.items():
        k = tuple(int(x) for x in k)
        if len(k) != rho:
            raise ValueError(f"frequency {k} does not live in Z^{rho}")
        c = complex(c)
        if c != 0:
            canon[k] = canon.get(k, 0.0) + c
    canon = {k: c for k, c in canon.items() if c != 0}
    if any(all(x == 0 for x in k) for k in canon):
        raise ValueError("zero frequency not allowed (observables are zero-mean)")
    scale = max((abs(c) for c in canon.values()), default=1.0)
    for k, c in canon.items():
        neg = tuple(-x for x in k)
        mate = canon.get(neg, 0.0)
        if abs(mate - c.conjugate()) > hermitian_tol * scale:
            raise ValueError(f"coefficients not Hermitian at {k}: {c} vs {mate}")
    terms = tuple(sorted(canon.items(), key=lambda item: item[0]))
    return TrigPolynomial(rho=rho, terms=terms)


def cosine_observable(k: Freq, amplitude: float = 2.0, rho: Optional[int] = None) -> TrigPolynomial:
    """amplitude * cos(2 pi <k, x>) as a Hermitian pair of characters."""
    k = tuple(int(x) for x in k)
    rho = len(k) if rho is None else rho
    half = amplitude / 2.0
    return trig_polynomial(rho, {k: half, tuple(-x for x in k): half})


# ---------------------------------------------------------------------------
# scenery models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IIDScenery:
    law: IIDLaw


@dataclass(frozen=True)
class MovingAverageScenery:
    """Xi_l = sum_q a_q X_{l-q} over a finite filter a and iid base law."""

    coeffs: Tuple[Tuple[Vec, float], ...]
    base: IIDLaw

    @property
    def coeff_sum(self) -> float:
        return float(sum(a for _, a in self.coeffs))

    @property
    def abs_sum(self) -> float:
        return float(sum(abs(a) for _, a in self.coeffs))

    def coeff_dict(self) -> Dict[Vec, float]:
        return dict(self.coeffs)

    def sign_part(self, sign: int) -> "MovingAverageScenery":
        """The a+ (sign=+1) or a- (sign=-1) filtered field; keeps |a_q|."""
        part = tuple((q, abs(a)) for q, a in self.coeffs
                     if (a > 0 and sign > 0) or (a < 0 and sign < 0))
        return MovingAverageScenery(coeffs=part, base=self.base)


def moving_average(coeffs: Mapping[Vec, float], base: IIDLaw) -> MovingAverageScenery:
    canon = tuple(sorted(((int(q[0]), int(q[1])), float(a))
                         for q, a in coeffs.items() if a != 0.0))
    if not canon:
        raise ValueError("moving average needs at least one nonzero coefficient")
    return MovingAverageScenery(coeffs=canon, base=base)


@dataclass(frozen=True)
class ToralScenery:
    """X_l(x) = f(A^l x), evaluated at exact rational points p/q."""

    action: ToralAction
    observable: TrigPolynomial
    modulus: int = MERSENNE_61


def toral_scenery(action: ToralAction, observable: TrigPolynomial,
                  modulus: int = MERSENNE_61) -> ToralScenery:
    if observable.rho != action.rho:
        raise ValueError("observable dimension does not match the action")
    if not intmat.is_probable_prime(modulus):
        raise ValueError(f"modulus {modulus} is not prime")
    return ToralScenery(action=action, observable=observable, modulus=modulus)


SceneryModel = Union[IIDScenery, MovingAverageScenery, ToralScenery]


def model_variance(model: SceneryModel) -> float:
    """Var X_0 for any model (exact)."""
    return exact_correlation(model, (0, 0))


# ---------------------------------------------------------------------------
# dual action on frequencies
# ---------------------------------------------------------------------------

def transported_frequency(k: Freq, l: Vec, action: ToralAction) -> Freq:
    """(A^l)^T k with exact big-integer arithmetic.

    The dual action on frequency space is by transposed matrices; the
    convention is fixed here once and checked against the sampler by the
    correlation agreement tests.
    """
    m = _action_power(action, int(l[0]), int(l[1]))
    # (M^T k)_j = sum_i M[i][j] k_i
    return tuple(sum(m[i][j] * k[i] for i in range(action.rho))
                 for j in range(action.rho))


def exact_correlation(model: SceneryModel, l: Vec) -> float:
    """The lag-l correlation E[X_l X_0], exact for every model.

    IID: variance at l = 0, else 0.  MovingAverage: base variance times
    the filter autocorrelation sum_q a_q a_{q-l}.  Toral: the sum of
    c_f(m) conj(c_f(k)) over coefficient pairs with (A^l)^T m = k.
    """
    l = (int(l[0]), int(l[1]))
    if isinstance(model, IIDScenery):
        return model.law.variance() if l == (0, 0) else 0.0
    if isinstance(model, MovingAverageScenery):
        a = model.coeff_dict()
        acc = 0.0
        for q, aq in a.items():
            shifted = (q[0] - l[0], q[1] - l[1])
            acc += aq * a.get(shifted, 0.0)
        return model.base.variance() * acc
    if isinstance(model, ToralScenery):
        coeffs = model.observable.coefficients()
        if not coeffs:
            return 0.0
        max_abs = max(max(abs(x) for x in k) for k in coeffs)
        acc = 0 + 0j
        for m_freq, c in coeffs.items():
            k = transported_frequency(m_freq, l, model.action)
            if max(abs(x) for x in k) > max_abs:
                continue
            mate = coeffs.get(k)
            if mate is not None:
                acc += c * mate.conjugate()
        if abs(acc.imag) > 1e-10 * max(1.0, abs(acc.real)):
            raise ArithmeticError(f"correlation came out non-real: {acc}")
        return acc.real
    raise TypeError(f"unknown scenery model {type(model)!r}")


def coboundary(g: TrigPolynomial, direction: int, action: ToralAction) -> TrigPolynomial:
    """f = g - g(A_direction x): the canonical zero-asymptotic-variance input."""
    if direction not in (1, 2):
        raise ValueError("direction must be 1 or 2")
    step = (1, 0) if direction == 1 else (0, 1)
    out: Dict[Freq, complex] = {}
    for k, c in g.terms:
        out[k] = out.get(k, 0.0) + c
        kt = transported_frequency(k, step, action)
        out[kt] = out.get(kt, 0.0) - c
    out = {k: c for k, c in out.items() if c != 0}
    return trig_polynomial(g.rho, out)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def _support_codes(support) -> np.ndarray:
    """Canonical sorted packed-site array from a field, codes, or points."""
    if isinstance(support, OccupationField):
        return support.codes
    arr = np.asarray(support)
    if arr.ndim == 2:
        codes = encode_sites(arr)
    else:
        codes = arr.astype(np.int64)
    out = np.unique(codes)
    if out.shape[0] != codes.shape[0]:
        raise ValueError("support has duplicate sites")
    return out


def sample_scenery(model: SceneryModel, support, rng: np.random.Generator) -> np.ndarray:
    """One scenery realization on `support`; values aligned with the
    canonical (sorted packed-key) site order.

    Deterministic given (model, support, stream).  For MovingAverage the
    base field is drawn on the dilated support {l - q} and filtered; for
    Toral a uniform rational point p/q is drawn and every value is an
    exact orbit evaluation.
    """
    return sample_scenery_matrix(model, support, rng, 1)[0]


def sample_scenery_matrix(model: SceneryModel, support, rng: np.random.Generator,
                          count: int) -> np.ndarray:
    """`count` independent scenery realizations, shape (count, support size)."""
    codes = _support_codes(support)
    m = codes.shape[0]
    if isinstance(model, IIDScenery):
        return model.law.sample(rng, (count, m))
    if isinstance(model, MovingAverageScenery):
        pts = decode_sites(codes)
        offsets = [q for q, _ in model.coeffs]
        weights = np.array([a for _, a in model.coeffs])
        shifted_codes = []
        for q in offsets:
            shifted_codes.append(encode_sites(pts - np.array(q, dtype=np.int64)))
        dilated = np.unique(np.concatenate(shifted_codes))
        base = model.base.sample(rng, (count, dilated.shape[0]))
        out = np.zeros((count, m))
        for q, w, sc in zip(offsets, weights, shifted_codes):
            idx = np.searchsorted(dilated, sc)
            out += w * base[:, idx]
        return out
    if isinstance(model, ToralScenery):
        return _sample_toral_matrix(model, codes, rng, count)
    raise TypeError(f"unknown scenery model {type(model)!r}")


def _sample_toral_matrix(model: ToralScenery, codes: np.ndarray,
                         rng: np.random.Generator, count: int) -> np.ndarray:
    q = model.modulus
    rho = model.action.rho
    pts = decode_sites(codes)
    # one uniform rational point per realization
    points = rng.integers(0, q, size=(count, rho), dtype=np.int64).astype(np.uint64)
    # transported frequencies mod q, per (site, term)
    terms = model.observable.terms
    out = np.zeros((count, codes.shape[0]))
    two_pi_over_q = 2.0 * np.pi / q
    for s, (x, y) in enumerate(pts):
        mat = _action_power_mod(model.action, int(x), int(y), q)
        col = np.zeros(count)
        for k, c in terms:
            kq = tuple(
                sum(mat[i][j] * (k[i] % q) for i in range(rho)) % q
                for j in range(rho)
            )
            phase = _dot_mod(points, np.array(kq, dtype=np.uint64), q)
            col += (c * np.exp(1j * (two_pi_over_q * phase))).real
        out[:, s] = col
    return out


def _dot_mod(points: np.ndarray, kq: np.ndarray, q: int) -> np.ndarray:
    """<k, p> mod q for each row p of `points`; exact for q up to 2^61."""
    if q == MERSENNE_61:
        acc = np.zeros(points.shape[0], dtype=np.uint64)
        for j in range(points.shape[1]):
            acc = _add_m61(acc, _mul_m61(points[:, j], np.uint64(int(kq[j]))))
        return acc.astype(np.float64)
    if q < (1 << 31):
        acc = np.zeros(points.shape[0], dtype=np.uint64)
        qq = np.uint64(q)
        for j in range(points.shape[1]):
            acc = (acc + (points[:, j] % qq) * (np.uint64(int(kq[j])) % qq)) % qq
        return acc.astype(np.float64)
    # rare path: arbitrary modulus, python ints
    out = np.empty(points.shape[0], dtype=np.float64)
    kq_int = [int(v) for v in kq]
    for i in range(points.shape[0]):
        out[i] = sum(int(points[i, j]) * kq_int[j] for j in range(points.shape[1])) % q
    return out


_M61 = np.uint64(MERSENNE_61)
_MASK32 = np.uint64((1 << 32) - 1)


def _fold_m61(x: np.ndarray) -> np.ndarray:
    x = (x & _M61) + (x >> np.uint64(61))
    x = (x & _M61) + (x >> np.uint64(61))
    return np.where(x == _M61, np.uint64(0), x)


def _add_m61(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return _fold_m61(a + b)


def _mul_m61(a: np.ndarray, b) -> np.ndarray:
    """(a * b) mod 2^61-1 for uint64 arrays with values < 2^61, exactly.

    Splits both factors into 32-bit halves; every partial product fits in
    64 bits and 2^64 = 8 mod 2^61-1 makes the recombination exact.
    """
    a = a.astype(np.uint64)
    b = np.asarray(b, dtype=np.uint64)
    a_hi, a_lo = a >> np.uint64(32), a & _MASK32
    b_hi, b_lo = b >> np.uint64(32), b & _MASK32
    # product = 2^64 hh + 2^32 (hl + lh) + ll, all pieces < 2^64
    ll = _fold_m61(a_lo * b_lo)
    hh = a_hi * b_hi  # < 2^58, no overflow
    mid = a_hi * b_lo + a_lo * b_hi  # could carry mod 2^64? bounded below
    # a_hi, b_hi < 2^29 so each cross term < 2^61; their sum < 2^62, safe.
    # 2^32 * mid mod M61: write mid = m_hi 2^29 + m_lo, 2^61 = 1 mod M61
    m_hi, m_lo = mid >> np.uint64(29), mid & np.uint64((1 << 29) - 1)
    term_mid = _fold_m61(_fold_m61(m_hi) + _fold_m61(m_lo << np.uint64(32)))
    # 2^64 * hh = 8 * hh mod M61
    term_hh = _fold_m61(hh << np.uint64(3))
    return _fold_m61(_fold_m61(ll + term_mid) + term_hh)

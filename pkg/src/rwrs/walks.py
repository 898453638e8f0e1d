"""2D lattice walks: exact step laws, aperiodicity, covariance, sampling.

Step probabilities are exact rationals so the mean and covariance matrix
come out exact.  Sampling converts the law to a cumulative float table
(at most 1 ulp of table error, documented trade-off).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import gcd, pi, sqrt
from typing import Mapping, Optional, Sequence, Tuple, Union

import numpy as np

Vec = Tuple[int, int]
ProbLike = Union[Fraction, int, str]


class EmpiricalC0Required(ValueError):
    """The closed-form constant does not apply; empirical estimation required."""


def _as_fraction(p: ProbLike) -> Fraction:
    if isinstance(p, Fraction):
        return p
    if isinstance(p, int):
        return Fraction(p)
    if isinstance(p, str):
        return Fraction(p)  # accepts "num/den"
    raise TypeError(f"probability must be Fraction, int, or 'num/den' string, got {p!r}")


@dataclass(frozen=True)
class StepDistribution:
    """Step law of a walk on Z^2: atoms ((dx, dy), probability)."""

    atoms: Tuple[Tuple[Vec, Fraction], ...]

    @property
    def support(self) -> Tuple[Vec, ...]:
        return tuple(v for v, _ in self.atoms)

    def probability(self, v: Vec) -> Fraction:
        for u, p in self.atoms:
            if u == v:
                return p
        return Fraction(0)


def step_distribution(atoms: Mapping[Vec, ProbLike]) -> StepDistribution:
    """Build a StepDistribution from {(dx, dy): probability}.

    Probabilities may be Fractions, ints, or "num/den" strings.  Atoms are
    canonically sorted; duplicates and non-integer vectors are rejected.
    """
    canon = []
    for v, p in atoms.items():
        if len(v) != 2:
            raise ValueError(f"step vectors live in Z^2, got {v!r}")
        canon.append(((int(v[0]), int(v[1])), _as_fraction(p)))
    canon.sort(key=lambda item: item[0])
    vecs = [v for v, _ in canon]
    if len(set(vecs)) != len(vecs):
        raise ValueError("duplicate step vectors")
    return StepDistribution(atoms=tuple(canon))


def ssrw() -> StepDistribution:
    """Simple symmetric walk, each of the four unit steps with probability 1/4."""
    q = Fraction(1, 4)
    return step_distribution({(1, 0): q, (-1, 0): q, (0, 1): q, (0, -1): q})


# ---------------------------------------------------------------------------
# exact moments and subgroup structure
# ---------------------------------------------------------------------------

def _lattice_index(vectors: Sequence[Vec]) -> int:
    """Index in Z^2 of the subgroup generated by `vectors`.

    Equals the gcd of all 2x2 minors of the generator matrix (the product
    of the Smith invariant factors).  Returns 0 when the rank is < 2, so
    the generated subgroup is Z^2 exactly when the result is 1.
    """
    vs = [v for v in vectors if v != (0, 0)]
    g = 0
    for i in range(len(vs)):
        for j in range(i + 1, len(vs)):
            g = gcd(g, abs(vs[i][0] * vs[j][1] - vs[i][1] * vs[j][0]))
            if g == 1:
                return 1
    return g


def generates_z2(vectors: Sequence[Vec]) -> bool:
    return _lattice_index(vectors) == 1


@dataclass(frozen=True)
class DistributionReport:
    """Exact moments and periodicity classification of a step law."""

    mean: Tuple[Fraction, Fraction]
    sigma: Tuple[Tuple[Fraction, Fraction], Tuple[Fraction, Fraction]]
    aperiodic: bool
    strongly_aperiodic: bool
    c0: Optional[float]

    @property
    def det_sigma(self) -> Fraction:
        s = self.sigma
        return s[0][0] * s[1][1] - s[0][1] * s[1][0]

    @property
    def centered(self) -> bool:
        return self.mean == (Fraction(0), Fraction(0))


def validate_distribution(d: StepDistribution) -> DistributionReport:
    """Validate a step law and compute its exact report.

    Checks: positive probabilities summing exactly to 1, at least one atom,
    not the degenerate point mass at the origin.  The aperiodicity flag
    asks whether the support generates Z^2 as a group (decided by the gcd
    of generator minors, an exact Smith-form computation).  The strong
    flag asks the same of the support translated by each of its own
    elements; the difference lattice is computed exactly, so the verdict
    is never heuristic.
    """
    if not d.atoms:
        raise ValueError("empty step distribution")
    total = Fraction(0)
    for v, p in d.atoms:
        if p <= 0:
            raise ValueError(f"non-positive probability {p} at step {v}")
        total += p
    if total != 1:
        raise ValueError(f"probabilities sum to {total}, not 1")
    if len(d.atoms) == 1 and d.atoms[0][0] == (0, 0):
        raise ValueError("degenerate: single atom at the origin")

    mean_x = sum((p * v[0] for v, p in d.atoms), Fraction(0))
    mean_y = sum((p * v[1] for v, p in d.atoms), Fraction(0))
    exx = sum((p * v[0] * v[0] for v, p in d.atoms), Fraction(0))
    exy = sum((p * v[0] * v[1] for v, p in d.atoms), Fraction(0))
    eyy = sum((p * v[1] * v[1] for v, p in d.atoms), Fraction(0))
    sigma = (
        (exx - mean_x * mean_x, exy - mean_x * mean_y),
        (exy - mean_x * mean_y, eyy - mean_y * mean_y),
    )

    support = d.support
    aperiodic = generates_z2(support)
    # Strong aperiodicity: the support must generate Z^2 even after
    # translating by any of its own elements.  All translates span the
    # same difference lattice, but the check is cheap so run every one.
    strongly = aperiodic and all(
        generates_z2([(s[0] - v[0], s[1] - v[1]) for s in support]) for v in support
    )

    det = sigma[0][0] * sigma[1][1] - sigma[0][1] * sigma[1][0]
    c0 = None
    if strongly and (mean_x, mean_y) == (Fraction(0), Fraction(0)) and det != 0:
        c0 = c0_from_sigma(sigma)
    return DistributionReport(
        mean=(mean_x, mean_y),
        sigma=sigma,
        aperiodic=aperiodic,
        strongly_aperiodic=strongly,
        c0=c0,
    )


def c0_from_sigma(sigma) -> float:
    """1 / (pi * sqrt(det Sigma)) for a nonsingular covariance matrix."""
    det = Fraction(sigma[0][0]) * Fraction(sigma[1][1]) - Fraction(sigma[0][1]) * Fraction(sigma[1][0])
    if det <= 0:
        raise ValueError(f"covariance determinant must be positive, got {det}")
    return 1.0 / (pi * sqrt(float(det)))


def c0_constant(report: DistributionReport) -> float:
    """Closed-form self-intersection constant of a strongly aperiodic walk.

    Raises EmpiricalC0Required when the walk is not strongly aperiodic,
    not centered, or has singular covariance; callers should then fall
    back to experiments.estimate_c0.
    """
    if not report.strongly_aperiodic:
        raise EmpiricalC0Required(
            "walk is not strongly aperiodic: empirical estimation required"
        )
    if not report.centered:
        raise EmpiricalC0Required("walk is not centered: empirical estimation required")
    if report.det_sigma == 0:
        raise EmpiricalC0Required("singular covariance: empirical estimation required")
    return c0_from_sigma(report.sigma)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WalkPath:
    """Sampled trajectory Z_0..Z_n, Z_0 = (0, 0); positions is (n+1, 2) int64."""

    positions: np.ndarray
    stream_id: Tuple[int, ...]

    @property
    def n_steps(self) -> int:
        return self.positions.shape[0] - 1

    def __len__(self) -> int:
        return self.positions.shape[0]


def sample_path(d: StepDistribution, n: int, rng: np.random.Generator,
                stream_id: Tuple[int, ...] = ()) -> WalkPath:
    """Sample a length-(n+1) path of the walk, starting at the origin.

    Deterministic given (d, n, stream).  The cumulative table is float,
    the positions are exact integers.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    validate_distribution(d)
    steps = np.array([v for v, _ in d.atoms], dtype=np.int64)
    cum = np.cumsum(np.array([float(p) for _, p in d.atoms]))
    cum[-1] = 1.0  # close the table against rounding
    positions = np.zeros((n + 1, 2), dtype=np.int64)
    if n > 0:
        u = rng.random(n)
        idx = np.searchsorted(cum, u, side="right")
        np.cumsum(steps[idx], axis=0, out=positions[1:])
    positions.flags.writeable = False
    return WalkPath(positions=positions, stream_id=tuple(stream_id))

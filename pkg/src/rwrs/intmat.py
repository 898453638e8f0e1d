"""Exact integer matrix arithmetic for toral automorphisms.

Matrices are tuples of tuples of python ints, so powers with
exponentially growing entries stay exact.  Includes modular powers for
orbit evaluation at rational points and characteristic-polynomial /
cyclotomic machinery for root-of-unity detection.
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from typing import Sequence, Tuple

IntMatrix = Tuple[Tuple[int, ...], ...]


def as_matrix(rows: Sequence[Sequence[int]]) -> IntMatrix:
    mat = tuple(tuple(int(x) for x in row) for row in rows)
    n = len(mat)
    if n == 0 or any(len(row) != n for row in mat):
        raise ValueError("matrix must be square and nonempty")
    return mat


def identity(n: int) -> IntMatrix:
    return tuple(tuple(1 if i == j else 0 for j in range(n)) for i in range(n))


def mat_mul(a: IntMatrix, b: IntMatrix) -> IntMatrix:
    n = len(a)
    bt = tuple(zip(*b))
    return tuple(
        tuple(sum(x * y for x, y in zip(row, col)) for col in bt) for row in a
    )


def mat_vec(a: IntMatrix, v: Sequence[int]) -> Tuple[int, ...]:
    return tuple(sum(x * y for x, y in zip(row, v)) for row in a)


def transpose(a: IntMatrix) -> IntMatrix:
    return tuple(zip(*a))


def mat_det(a: IntMatrix) -> int:
    """Exact determinant by fraction-free (Bareiss) elimination."""
    n = len(a)
    m = [list(row) for row in a]
    sign = 1
    prev = 1
    for k in range(n - 1):
        if m[k][k] == 0:
            for i in range(k + 1, n):
                if m[i][k] != 0:
                    m[k], m[i] = m[i], m[k]
                    sign = -sign
                    break
            else:
                return 0
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) // prev
        prev = m[k][k]
    return sign * m[n - 1][n - 1]


def _minor(a: IntMatrix, i: int, j: int) -> IntMatrix:
    return tuple(
        tuple(row[c] for c in range(len(a)) if c != j)
        for r, row in enumerate(a) if r != i
    )


def adjugate(a: IntMatrix) -> IntMatrix:
    n = len(a)
    if n == 1:
        return ((1,),)
    cof = [[0] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            cof[j][i] = (-1) ** (i + j) * mat_det(_minor(a, i, j))
    return tuple(tuple(row) for row in cof)


def inverse_unimodular(a: IntMatrix) -> IntMatrix:
    """Exact integer inverse; requires det = +-1."""
    d = mat_det(a)
    if d not in (1, -1):
        raise ValueError(f"matrix is not unimodular (det = {d})")
    adj = adjugate(a)
    if d == 1:
        return adj
    return tuple(tuple(-x for x in row) for row in adj)


def mat_pow(a: IntMatrix, e: int) -> IntMatrix:
    """a**e for any integer e; negative exponents need det = +-1."""
    if e < 0:
        return mat_pow(inverse_unimodular(a), -e)
    result = identity(len(a))
    base = a
    while e:
        if e & 1:
            result = mat_mul(result, base)
        base = mat_mul(base, base)
        e >>= 1
    return result


# ---------------------------------------------------------------------------
# modular arithmetic
# ---------------------------------------------------------------------------

def mat_mod(a: IntMatrix, q: int) -> IntMatrix:
    return tuple(tuple(x % q for x in row) for row in a)


def mat_mul_mod(a: IntMatrix, b: IntMatrix, q: int) -> IntMatrix:
    n = len(a)
    bt = tuple(zip(*b))
    return tuple(
        tuple(sum(x * y for x, y in zip(row, col)) % q for col in bt) for row in a
    )


def inverse_mod(a: IntMatrix, q: int) -> IntMatrix:
    """Inverse of a unimodular matrix mod q (always exists: det = +-1)."""
    d = mat_det(a)
    if d not in (1, -1):
        raise ValueError(f"matrix is not unimodular (det = {d})")
    adj = adjugate(a)
    dinv = pow(d % q, -1, q)
    return tuple(tuple((x * dinv) % q for x in row) for row in adj)


def mat_pow_mod(a: IntMatrix, e: int, q: int) -> IntMatrix:
    if e < 0:
        return mat_pow_mod(inverse_mod(a, q), -e, q)
    result = identity(len(a))
    base = mat_mod(a, q)
    while e:
        if e & 1:
            result = mat_mul_mod(result, base, q)
        base = mat_mul_mod(base, base, q)
        e >>= 1
    return result


def is_probable_prime(n: int) -> bool:
    """Deterministic Miller-Rabin for n < 3.3 * 10^24."""
    if n < 2:
        return False
    for p in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41):
        if n % p == 0:
            return n == p
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41):
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


# ---------------------------------------------------------------------------
# characteristic polynomial and cyclotomic factors
# ---------------------------------------------------------------------------

def charpoly(a: IntMatrix) -> Tuple[int, ...]:
    """Coefficients of det(xI - a), highest degree first, exact integers.

    Faddeev-LeVerrier over rationals; the outputs are provably integral.
    """
    n = len(a)
    frac = tuple(tuple(Fraction(x) for x in row) for row in a)
    coeffs = [Fraction(1)]
    m = tuple(tuple(Fraction(0) for _ in range(n)) for _ in range(n))
    for k in range(1, n + 1):
        # m <- a (m + c_{k-1} I)
        shifted = tuple(
            tuple(m[i][j] + (coeffs[-1] if i == j else 0) for j in range(n))
            for i in range(n)
        )
        m = tuple(
            tuple(sum(frac[i][t] * shifted[t][j] for t in range(n)) for j in range(n))
            for i in range(n)
        )
        trace = sum(m[i][i] for i in range(n))
        coeffs.append(-trace / k)
    out = []
    for c in coeffs:
        if c.denominator != 1:
            raise ArithmeticError("characteristic polynomial came out non-integer")
        out.append(int(c))
    return tuple(out)


def poly_mul(p: Sequence[int], q: Sequence[int]) -> Tuple[int, ...]:
    out = [0] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        for j, b in enumerate(q):
            out[i + j] += a * b
    return tuple(out)


def poly_divmod(p: Sequence[int], q: Sequence[int]):
    """Exact division of integer polynomials (highest degree first).

    Returns (quotient, remainder) over the rationals restricted to exact
    integer steps; raises if a non-integer quotient coefficient appears
    (sufficient here: divisors are monic).
    """
    p = list(p)
    q = list(q)
    while q and q[0] == 0:
        q.pop(0)
    if not q:
        raise ZeroDivisionError("polynomial division by zero")
    if q[0] != 1 and q[0] != -1:
        raise ValueError("divisor must be monic up to sign")
    out = []
    while len(p) >= len(q):
        lead = p[0] // q[0]
        if lead * q[0] != p[0]:
            raise ArithmeticError("non-integer quotient coefficient")
        out.append(lead)
        for i, b in enumerate(q):
            p[i] -= lead * b
        assert p[0] == 0
        p.pop(0)
    return tuple(out), tuple(p)


def euler_phi(m: int) -> int:
    result = m
    n = m
    p = 2
    while p * p <= n:
        if n % p == 0:
            while n % p == 0:
                n //= p
            result -= result // p
        p += 1
    if n > 1:
        result -= result // n
    return result


@lru_cache(maxsize=None)
def cyclotomic(m: int) -> Tuple[int, ...]:
    """Coefficients of the m-th cyclotomic polynomial, highest degree first."""
    if m == 1:
        return (1, -1)
    num = tuple([1] + [0] * (m - 1) + [-1])  # x^m - 1
    for d in range(1, m):
        if m % d == 0:
            quo, rem = poly_divmod(num, cyclotomic(d))
            assert not any(rem), "cyclotomic division must be exact"
            num = quo
    return num


def root_of_unity_order(char: Sequence[int], max_phi: int) -> int:
    """Smallest m with the m-th cyclotomic polynomial dividing `char`.

    Only orders with euler_phi(m) <= max_phi can divide a degree-max_phi
    polynomial; returns 0 when no such factor exists.
    """
    # phi(m) >= sqrt(m/2), so m <= 2 * max_phi^2 covers every candidate
    bound = 2 * max_phi * max_phi + 1
    for m in range(1, bound + 1):
        if euler_phi(m) > max_phi:
            continue
        phi_m = cyclotomic(m)
        if len(phi_m) - 1 > len(char) - 1:
            continue
        try:
            _, rem = poly_divmod(char, phi_m)
        except ArithmeticError:
            continue
        if not any(rem):
            return m
    return 0

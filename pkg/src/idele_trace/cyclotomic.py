"""Exact arithmetic in the cyclotomic fields Q(zeta_e) = Q[x]/Phi_e(x).

Values are stored as canonical remainders modulo Phi_e with rational
coefficients, so equality is plain tuple comparison.  Values with
different conductors are compared and combined after embedding both in
the field of conductor lcm(e1, e2) via x -> x^(L/e).
"""

from fractions import Fraction
from functools import lru_cache
from math import gcd, prod


@lru_cache(maxsize=None)
def _factor(n):
    out = {}
    p = 2
    while p * p <= n:
        while n % p == 0:
            out[p] = out.get(p, 0) + 1
            n //= p
        p += 1
    if n > 1:
        out[n] = out.get(n, 0) + 1
    return out


def _mobius(n):
    f = _factor(n)
    if any(k > 1 for k in f.values()):
        return 0
    return -1 if len(f) % 2 else 1


def _totient(n):
    out = n
    for p in _factor(n):
        out = out // p * (p - 1)
    return out


def _lcm(a, b):
    return a * b // gcd(a, b)


@lru_cache(maxsize=None)
def cyclotomic_polynomial(e):
    """Integer coefficients of Phi_e, lowest degree first.

    Phi_e(x) = Phi_r(x^(e/r)) with r the radical of e, and Phi_r is the
    product of (x^d - 1)^mu(r/d) over d | r.
    """
    if e < 1:
        raise ValueError("conductor must be positive")
    primes = sorted(_factor(e))
    r = prod(primes)
    poly = [1]
    divisors = []
    for mask in range(1 << len(primes)):
        d = prod(p for i, p in enumerate(primes) if mask >> i & 1)
        divisors.append((r // d, (-1) ** bin(mask).count("1")))
    for d, mu in divisors:
        if mu == 1:
            poly = _times_xd_minus_one(poly, d)
    for d, mu in divisors:
        if mu == -1:
            poly = _divide_xd_minus_one(poly, d)
    step = e // r
    out = [0] * ((len(poly) - 1) * step + 1)
    for i, c in enumerate(poly):
        out[i * step] = c
    return tuple(out)


def _times_xd_minus_one(poly, d):
    out = [0] * (len(poly) + d)
    for i, c in enumerate(poly):
        out[i] -= c
        out[i + d] += c
    return out


def _divide_xd_minus_one(num, d):
    # num = q * (x^d - 1): num[i] = q[i - d] - q[i]
    q = [0] * (len(num) - d)
    for i in range(len(q)):
        q[i] = (q[i - d] if i >= d else 0) - num[i]
    for i in range(len(q), len(num)):
        if num[i] != (q[i - d] if i >= d else 0) - (q[i] if i < len(q) else 0):
            raise ArithmeticError("non-exact polynomial division")
    return q


@lru_cache(maxsize=None)
def _sparse_phi(e):
    phi = cyclotomic_polynomial(e)
    deg = len(phi) - 1
    return deg, tuple((j, c) for j, c in enumerate(phi[:-1]) if c)


def reduce_group_ring(e, coeffs):
    """Map a vector in Q[x]/(x^e - 1) (length e) to canonical form mod Phi_e."""
    deg, low = _sparse_phi(e)
    v = list(coeffs)
    # long division by the monic Phi_e, top down
    for i in range(len(v) - 1, deg - 1, -1):
        c = v[i]
        if c:
            base = i - deg
            for j, pj in low:
                v[base + j] -= c * pj
    return v[:deg]


def _normalize(c):
    if isinstance(c, Fraction) and c.denominator == 1:
        return c.numerator
    return c


class CyclotomicValue:
    """An element of Q(zeta_e), immutable."""

    __slots__ = ("conductor", "coeffs")

    def __init__(self, conductor, coeffs):
        conductor = int(conductor)
        deg = len(cyclotomic_polynomial(conductor)) - 1
        coeffs = [_normalize(Fraction(c)) for c in coeffs]
        if len(coeffs) > deg:
            extended = [0] * conductor
            # coefficients beyond deg are interpreted as powers of x
            for j, c in enumerate(coeffs):
                extended[j % conductor] += c
            coeffs = reduce_group_ring(conductor, extended)
        coeffs = coeffs + [0] * (deg - len(coeffs))
        object.__setattr__(self, "conductor", conductor)
        object.__setattr__(self, "coeffs", tuple(_normalize(Fraction(c)) for c in coeffs))

    def __setattr__(self, name, value):
        raise AttributeError("CyclotomicValue is immutable")

    @classmethod
    def from_group_ring(cls, conductor, vector):
        return cls(conductor, reduce_group_ring(conductor, vector))

    @classmethod
    def rational(cls, q, conductor=1):
        return cls(conductor, [q])

    # -- embedding ---------------------------------------------------------
    def embed(self, conductor):
        """Image in Q(zeta_conductor); the conductor must be a multiple."""
        if conductor == self.conductor:
            return self
        if conductor % self.conductor:
            raise ValueError(f"cannot embed conductor {self.conductor} into {conductor}")
        step = conductor // self.conductor
        vec = [0] * conductor
        for i, c in enumerate(self.coeffs):
            vec[i * step] += c
        return CyclotomicValue.from_group_ring(conductor, vec)

    def _common(self, other):
        if not isinstance(other, CyclotomicValue):
            other = CyclotomicValue.rational(other)
        e = _lcm(self.conductor, other.conductor)
        return self.embed(e), other.embed(e), e

    # -- arithmetic --------------------------------------------------------
    def __add__(self, other):
        a, b, e = self._common(other)
        return CyclotomicValue(e, [x + y for x, y in zip(a.coeffs, b.coeffs)])

    __radd__ = __add__

    def __neg__(self):
        return CyclotomicValue(self.conductor, [-c for c in self.coeffs])

    def __sub__(self, other):
        return self + (-other if isinstance(other, CyclotomicValue) else -Fraction(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, CyclotomicValue):
            return self.scale(other)
        a, b, e = self._common(other)
        vec = [0] * e
        for i, x in enumerate(a.coeffs):
            if x:
                for j, y in enumerate(b.coeffs):
                    if y:
                        vec[(i + j) % e] += x * y
        return CyclotomicValue.from_group_ring(e, vec)

    __rmul__ = __mul__

    def scale(self, q):
        q = Fraction(q)
        return CyclotomicValue(self.conductor, [q * c for c in self.coeffs])

    def __pow__(self, k):
        if k < 0:
            raise ValueError("negative powers are not supported")
        result = CyclotomicValue.rational(1, self.conductor)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    # -- comparison --------------------------------------------------------
    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = CyclotomicValue.rational(other)
        if not isinstance(other, CyclotomicValue):
            return NotImplemented
        a, b, _ = self._common(other)
        return a.coeffs == b.coeffs

    def __hash__(self):
        # equal values of different conductors must collide, so hash the
        # normalized trace Tr/[Q(zeta_e):Q], which is embedding-invariant
        return hash(self.normalized_trace())

    def normalized_trace(self):
        e = self.conductor
        total = Fraction(0)
        for i, c in enumerate(self.coeffs):
            if c:
                m = e // gcd(i, e)
                total += Fraction(c) * _mobius(m) / _totient(m)
        return total

    def is_zero(self):
        return not any(self.coeffs)

    def is_rational(self):
        return not any(self.coeffs[1:])

    def to_rational(self):
        if not self.is_rational():
            raise ValueError(f"{self!r} is not rational")
        return Fraction(self.coeffs[0])

    def __bool__(self):
        return not self.is_zero()

    def __repr__(self):
        terms = []
        for i, c in enumerate(self.coeffs):
            if c:
                terms.append(f"{c}" if i == 0 else f"{c}*z^{i}")
        body = " + ".join(terms) if terms else "0"
        return f"CyclotomicValue(e={self.conductor}: {body})"

    def to_json(self):
        return {"conductor": self.conductor, "coeffs": [str(c) for c in self.coeffs]}


def zeta(e, k=1):
    """zeta_e^k in canonical form."""
    vec = [0] * e
    vec[k % e] = 1
    return CyclotomicValue.from_group_ring(e, vec)


ZERO = CyclotomicValue.rational(0)
ONE = CyclotomicValue.rational(1)


def value_sum(values, conductor=1):
    """Sum of CyclotomicValues without intermediate re-embedding."""
    values = list(values)
    e = conductor
    for v in values:
        e = _lcm(e, v.conductor)
    vec = [0] * e
    for v in values:
        step = e // v.conductor
        for i, c in enumerate(v.coeffs):
            if c:
                vec[i * step] += c
    return CyclotomicValue.from_group_ring(e, vec)


class GroupRingAccumulator:
    """Accumulates sums of (value * zeta_E^phase) inside Q[x]/(x^N - 1).

    N is fixed up front as a common multiple of every conductor that will be
    added; reduction modulo Phi_N happens once, in ``result``.
    """

    def __init__(self, modulus):
        self.modulus = modulus
        self.vec = [0] * modulus

    def add(self, value, phase=0, phase_conductor=1):
        """Add ``value * zeta_{phase_conductor}^phase``."""
        n = self.modulus
        shift = (phase % phase_conductor) * (n // phase_conductor)
        step = n // value.conductor
        vec = self.vec
        for i, c in enumerate(value.coeffs):
            if c:
                vec[(i * step + shift) % n] += c

    def add_sparse(self, terms, phase=0, phase_conductor=1):
        """Like ``add`` for a precomputed list of (exponent mod N, coeff)."""
        n = self.modulus
        shift = (phase % phase_conductor) * (n // phase_conductor)
        vec = self.vec
        for j, c in terms:
            vec[(j + shift) % n] += c

    def result(self):
        return CyclotomicValue.from_group_ring(self.modulus, self.vec)


def sparse_terms(value, modulus):
    """Exponent/coefficient pairs of ``value`` viewed in Q[x]/(x^modulus - 1)."""
    step = modulus // value.conductor
    return [(i * step, c) for i, c in enumerate(value.coeffs) if c]

"""Finite-precision p-adic arithmetic for quadratic and cyclic cubic fields.

Everything is computed in the rings (Z/p^k)[t]/(g) and (Z/p^k)^*.  Norms
are determinants of multiplication matrices, so no factorization of g over
Q_p is needed.  Results are accepted only when they agree at precision k
and k+1.
"""

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from functools import cached_property, lru_cache
from itertools import product
from math import gcd, lcm

from sympy import discrete_log, factorint, isprime, n_order, primitive_root

from .abelian import FgAbelianGroup, IntMatrix, Subgroup, determinant, smith_normal_form
from .errors import BadInput, PrecisionUnstable, RamifiedPlace


class _Infinity:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INFINITY"

    def __reduce__(self):
        return (_Infinity, ())


INFINITY = _Infinity()


class SplittingType(str, Enum):
    SPLIT = "SPLIT"
    INERT = "INERT"
    RAMIFIED = "RAMIFIED"


SPLIT, INERT, RAMIFIED = SplittingType.SPLIT, SplittingType.INERT, SplittingType.RAMIFIED

# cyclic cubic fields by conductor: minimal polynomial, lowest degree first
CUBIC_POLYNOMIALS = {
    7: (-1, -2, 1, 1),
    9: (1, -3, 0, 1),
    13: (1, -4, 1, 1),
}

DEFAULT_PRECISION = 3
MAX_PRECISION = 12


def default_precision(p):
    return 5 if p == 2 else DEFAULT_PRECISION


def legendre_symbol(a, p):
    """(a/p) for an odd prime p, by Euler's criterion."""
    a %= p
    if a == 0:
        return 0
    return 1 if pow(a, (p - 1) // 2, p) == 1 else -1


def is_squarefree(d):
    if d in (0,):
        return False
    return all(e == 1 for e in factorint(abs(d)).values())


def _check_prime(p):
    if p is INFINITY:
        return
    if not isinstance(p, int) or not isprime(p):
        raise BadInput(f"{p!r} is not a prime")


def valuation(x, p):
    if x == 0:
        raise BadInput("valuation of zero")
    if isinstance(x, Fraction):
        return valuation(x.numerator, p) - valuation(x.denominator, p)
    v = 0
    while x % p == 0:
        x //= p
        v += 1
    return v


def quadratic_discriminant(d):
    return d if d % 4 == 1 else 4 * d


def quadratic_polynomial(d):
    """Minimal polynomial of a generator of the maximal order of Q(sqrt d)."""
    if d % 4 == 1:
        return (-(d - 1) // 4, -1, 1)
    return (-d, 0, 1)


# ---------------------------------------------------------------------------
# splitting types


def splitting_type(data, p):
    """Decomposition of p in Q(sqrt d) (``data`` an int) or a cyclic cubic field.

    A cubic field is given as ``("cubic", f)`` or ``{"conductor": f}``.
    """
    _check_prime(p)
    conductor = _cubic_conductor(data)
    if conductor is None:
        d = int(data)
        if not is_squarefree(d) or d == 1:
            raise BadInput(f"d = {d} must be squarefree and different from 1")
        if p is INFINITY:
            return SPLIT if d > 0 else RAMIFIED
        disc = quadratic_discriminant(d)
        if disc % p == 0:
            return RAMIFIED
        if p == 2:
            # d = 1 mod 4 here; 2 splits iff d = 1 mod 8
            return SPLIT if d % 8 == 1 else INERT
        return SPLIT if legendre_symbol(d % p, p) == 1 else INERT
    if p is INFINITY:
        return SPLIT  # cyclic cubic fields are totally real
    if conductor % p == 0:
        return RAMIFIED
    phi = _euler_phi(conductor)
    return SPLIT if pow(p, phi // 3, conductor) == 1 else INERT


def _euler_phi(n):
    out = n
    for q in factorint(n):
        out = out // q * (q - 1)
    return out


def _cubic_conductor(data):
    if isinstance(data, tuple) and len(data) == 2 and data[0] == "cubic":
        f = data[1]
    elif isinstance(data, dict) and "conductor" in data:
        f = data["conductor"]
    else:
        return None
    if f not in CUBIC_POLYNOMIALS:
        raise BadInput(f"no cyclic cubic field of conductor {f} is tabulated")
    return f


def roots_mod_p(g, p):
    return [x for x in range(p) if sum(c * pow(x, i, p) for i, c in enumerate(g)) % p == 0]


def splitting_type_by_roots(g, p):
    """Independent route: count roots of g mod p (p not dividing disc(g))."""
    r = len(roots_mod_p(g, p))
    deg = len(g) - 1
    if r == deg:
        return SPLIT
    if r == 0:
        return INERT
    raise BadInput(f"{g} has {r} roots mod {p}, not a Galois splitting pattern")


# ---------------------------------------------------------------------------
# Hilbert symbols


def _as_integer_class(q):
    """An integer in the same square class as the nonzero rational q."""
    q = Fraction(q)
    if q == 0:
        raise BadInput("the Hilbert symbol needs nonzero arguments")
    return q.numerator * q.denominator


def hilbert_symbol(a, b, place):
    """(a, b)_v for nonzero rationals a, b and v a prime or INFINITY."""
    a, b = _as_integer_class(a), _as_integer_class(b)
    if place is INFINITY:
        return -1 if a < 0 and b < 0 else 1
    p = place
    _check_prime(p)
    alpha, beta = valuation(a, p), valuation(b, p)
    u, v = a // p**alpha, b // p**beta
    if p != 2:
        eps = (p - 1) // 2
        s = (-1) ** (alpha * beta * eps)
        if beta % 2:
            s *= legendre_symbol(u % p, p)
        if alpha % 2:
            s *= legendre_symbol(v % p, p)
        return s

    def e(x):
        return ((x - 1) // 2) % 2

    def w(x):
        return ((x * x - 1) // 8) % 2

    return (-1) ** ((e(u) * e(v) + alpha * w(v) + beta * w(u)) % 2)


def hilbert_places(a, b):
    """INFINITY and the primes dividing 2ab: the only places where (a, b) can be -1."""
    a, b = _as_integer_class(a), _as_integer_class(b)
    primes = set(factorint(abs(2 * a * b)))
    return [INFINITY] + sorted(primes)


# ---------------------------------------------------------------------------
# unit groups of Z/p^k


class LocalUnitLevel:
    """(Z/p^k)^* as an FgAbelianGroup with explicit log and exp."""

    def __init__(self, p, k):
        _check_prime(p)
        if k < 1:
            raise BadInput("precision must be at least 1")
        self.p, self.k = p, k
        self.modulus = p**k
        if p != 2:
            order = p ** (k - 1) * (p - 1)
            self.carrier = FgAbelianGroup((order,) if order > 1 else ())
            self.generators = (primitive_root(self.modulus),) if order > 1 else ()
        elif k == 1:
            self.carrier = FgAbelianGroup(())
            self.generators = ()
        elif k == 2:
            self.carrier = FgAbelianGroup((2,))
            self.generators = (self.modulus - 1,)
        else:
            self.carrier = FgAbelianGroup((2, 2 ** (k - 2)))
            self.generators = (self.modulus - 1, 5)

    def __repr__(self):
        return f"LocalUnitLevel(p={self.p}, k={self.k})"

    def order(self):
        return self.carrier.order()

    def exp(self, x):
        m = self.modulus
        out = 1 % m
        for g, c in zip(self.generators, x):
            out = out * pow(g, c, m) % m
        return out

    @cached_property
    def _table(self):
        if self.modulus > 200_000:
            return None
        return {self.exp(x): x for x in self.carrier.elements()}

    def log(self, u):
        m = self.modulus
        u %= m
        if gcd(u, self.p) != 1:
            raise BadInput(f"{u} is not a unit mod {m}")
        if self._table is not None:
            return self._table[u]
        if self.p != 2:
            return (discrete_log(m, u, self.generators[0]),)
        a = 0 if u % 4 == 1 else 1
        if a:
            u = (-u) % m
        return self.carrier.reduce((a, discrete_log(m, u, 5)))

    def subgroup(self, residues):
        """Subgroup generated by the residues; redundant generators are dropped."""
        if self.p != 2 and self.carrier.ngens:
            # cyclic: the subgroup is fixed by the lcm of the element orders
            N, o = self.carrier.order(), 1
            for u in set(r % self.modulus for r in residues):
                o = lcm(o, n_order(u, self.modulus))
                if o == N:
                    break
            return Subgroup(self.carrier, [(N // o,)])
        gens = []
        sub = Subgroup(self.carrier, gens)
        for u in residues:
            x = self.log(u)
            if not sub.contains(x):
                gens.append(x)
                sub = Subgroup(self.carrier, gens)
        return sub

    def residues(self, sub):
        return sorted(self.exp(x) for x in sub.elements())

    def units(self):
        return [u for u in range(self.modulus) if u % self.p]


# ---------------------------------------------------------------------------
# the rings (Z/p^k)[t]/(g)


class QuotientRing:
    """(Z/m)[t]/(g) for a monic integral g; elements are coefficient tuples."""

    def __init__(self, g, modulus):
        g = tuple(int(c) for c in g)
        if g[-1] != 1:
            raise BadInput("g must be monic")
        self.g = g
        self.degree = len(g) - 1
        self.modulus = modulus

    def reduce(self, a):
        m, n, g = self.modulus, self.degree, self.g
        a = list(a) + [0] * max(0, n - len(a))
        for i in range(len(a) - 1, n - 1, -1):
            c = a[i]
            if c:
                for j in range(n + 1):
                    a[i - n + j] -= c * g[j]
        if m is None:
            return tuple(a[:n])
        return tuple(c % m for c in a[:n])

    def mul(self, a, b):
        prod = [0] * (len(a) + len(b) - 1)
        for i, x in enumerate(a):
            if x:
                for j, y in enumerate(b):
                    prod[i + j] += x * y
        return self.reduce(prod)

    def add(self, a, b):
        if self.modulus is None:
            return tuple(x + y for x, y in zip(a, b))
        return tuple((x + y) % self.modulus for x, y in zip(a, b))

    def one(self):
        return self.reduce((1,))

    def t(self):
        return self.reduce((0, 1))

    def power(self, a, e):
        out, base = self.one(), a
        while e:
            if e & 1:
                out = self.mul(out, base)
            base = self.mul(base, base)
            e >>= 1
        return out

    def scalar(self, c):
        return self.reduce((c,))

    def mult_matrix(self, a):
        """Integer matrix of x -> a*x on the basis 1, t, ..., t^(n-1)."""
        cols = []
        basis = [tuple(int(i == j) for j in range(self.degree)) for i in range(self.degree)]
        for b in basis:
            cols.append(self.mul(a, b))
        return [[cols[j][i] for j in range(self.degree)] for i in range(self.degree)]

    def norm(self, a):
        if self.degree == 2:
            # t^2 + g1 t + g0: N(x + y t) = x^2 - g1 x y + g0 y^2
            a = tuple(a) if len(a) <= 2 else self.reduce(a)
            x, y = (a + (0, 0))[:2]
            d = x * x - self.g[1] * x * y + self.g[0] * y * y
            return d if self.modulus is None else d % self.modulus
        d = determinant(self.mult_matrix(a))
        return d if self.modulus is None else d % self.modulus

    def exact_norm(self, a):
        """Norm of the integral lift with coefficients as given (not reduced)."""
        return QuotientRing(self.g, None).norm(tuple(a))

    def is_unit(self, a, p):
        return self.norm(a) % p != 0

    def elements(self):
        return product(range(self.modulus), repeat=self.degree)


def enumerate_norms(g, p, k):
    """The set of norms of all units of (Z/p^k)[t]/(g), by full enumeration.

    Vectorized with numpy; the determinant is expanded by hand for degree
    two and three.
    """
    import numpy as np

    m = p**k
    n = len(g) - 1
    R = QuotientRing(g, m)
    if m**n > 5_000_000:
        raise BadInput(f"enumeration of {m}^{n} ring elements is too large")
    grids = np.meshgrid(*[np.arange(m, dtype=np.int64)] * n, indexing="ij")
    coords = [x.ravel() for x in grids]
    # column j of the multiplication matrix is a * t^j
    tpow = [R.reduce(tuple(int(i == j) for i in range(j + 1))) for j in range(n)]
    cols = []
    for j in range(n):
        col = []
        for i in range(n):
            acc = np.zeros_like(coords[0])
            # (a * t^j)_i = sum_l a_l (t^l * t^j)_i
            for l in range(n):
                c = R.mul(tpow[l], tpow[j])[i]
                if c:
                    acc = (acc + c * coords[l]) % m
            col.append(acc)
        cols.append(col)
    M = [[cols[j][i] for j in range(n)] for i in range(n)]
    if n == 1:
        det = M[0][0] % m
    elif n == 2:
        det = (M[0][0] * M[1][1] - M[0][1] * M[1][0]) % m
    elif n == 3:
        det = (
            M[0][0] * ((M[1][1] * M[2][2] - M[1][2] * M[2][1]) % m)
            - M[0][1] * ((M[1][0] * M[2][2] - M[1][2] * M[2][0]) % m)
            + M[0][2] * ((M[1][0] * M[2][1] - M[1][1] * M[2][0]) % m)
        ) % m
    else:
        raise BadInput("enumeration is implemented for degree at most three")
    units = det[det % p != 0]
    return set(int(x) for x in np.unique(units))


# ---------------------------------------------------------------------------
# local extensions


@dataclass
class LocalExtension:
    p: object
    degree: int
    polynomial: tuple
    type: SplittingType
    precision: int
    d: object = None
    conductor: object = None

    @property
    def data(self):
        return self.d if self.d is not None else ("cubic", self.conductor)


def local_extension(data, p, k=None):
    """LocalExtension for Q(sqrt d) (``data`` an int) or ("cubic", f) at p."""
    typ = splitting_type(data, p)
    k = k or (default_precision(p) if p is not INFINITY else 1)
    f = _cubic_conductor(data)
    if f is None:
        d = int(data)
        return LocalExtension(p, 2, quadratic_polynomial(d), typ, k, d=d)
    ext = LocalExtension(p, 3, CUBIC_POLYNOMIALS[f], typ, k, conductor=f)
    if p is not INFINITY and typ != RAMIFIED:
        if splitting_type_by_roots(ext.polynomial, p) != typ:
            raise BadInput(f"inconsistent splitting data for conductor {f} at {p}")
    return ext


@dataclass
class NormGroupResult:
    unit_image: Subgroup
    unit_level: LocalUnitLevel
    valuation_step: int
    index: int
    stable: bool
    witness: int = None  # unit part of a norm of valuation valuation_step

    def residues(self):
        return self.unit_level.residues(self.unit_image)

    def generator_residues(self):
        return [self.unit_level.exp(g) for g in self.unit_image.generators]

    def contains_unit(self, u):
        return self.unit_image.contains(self.unit_level.log(u))

    def contains(self, x):
        """Is the rational x a local norm (at this precision)?

        Nonunits are divided by the witness norm p^step * w; p^step itself
        need not be a norm (it is not from Q_2(sqrt 3), where -2 is).
        """
        x = Fraction(x)
        p, m = self.unit_level.p, self.unit_level.modulus
        v = valuation(x, p)
        if v % self.valuation_step:
            return False
        u = (x.numerator // p ** valuation(x.numerator, p)) * pow(
            x.denominator // p ** valuation(x.denominator, p), -1, m
        )
        if v:
            u = u * pow(self.witness, -(v // self.valuation_step), m)
        return self.contains_unit(u)


def unit_generators(g, p, k):
    """Certified generating set of the units of R = (Z/p^k)[t]/(g).

    All units of R/pR (lifted), together with 1 + p^j b for j = 1..k-1 and
    b in the basis 1, t, ...: the latter generate each quotient of the
    filtration (1 + p^j R)/(1 + p^(j+1) R), which is isomorphic to R/pR.
    """
    R = QuotientRing(g, p**k)
    n = R.degree
    gens = []
    for a in product(range(p), repeat=n):
        if R.is_unit(a, p):
            gens.append(R.reduce(a))
    for j in range(1, k):
        for i in range(n):
            b = [0] * n
            b[i] = p**j
            b[0] += 1
            gens.append(R.reduce(b))
    return R, gens


def _unit_norm_image(ext, k, method="generators"):
    level = LocalUnitLevel(ext.p, k)
    if method == "enumerate":
        return level, level.subgroup(sorted(enumerate_norms(ext.polynomial, ext.p, k)))
    R, gens = unit_generators(ext.polynomial, ext.p, k)
    norms = sorted({R.norm(a) for a in gens})
    return level, level.subgroup(norms)


def valuation_step(ext):
    """gcd of the positive valuations of norms of small witnesses (and of p)."""
    p = ext.p
    R = QuotientRing(ext.polynomial, None)
    vals = []
    wit = range(-p, p + 1)
    for a in product(wit, repeat=ext.degree):
        if not any(a):
            continue
        N = R.exact_norm(a)
        if N:
            v = valuation(abs(N), p)
            if v:
                vals.append(v)
    step = 0
    for v in vals:
        step = gcd(step, v)
    return step or ext.degree


def minimal_valuation_norm(ext, step):
    """Unit part w of a norm p^step * w of minimal positive valuation."""
    p = ext.p
    R = QuotientRing(ext.polynomial, None)
    for a in product(range(-p, p + 1), repeat=ext.degree):
        if not any(a):
            continue
        N = R.exact_norm(a)
        if N and valuation(abs(N), p) == step:
            return N // p**step
    raise ArithmeticError(f"no norm of valuation {step} found at {p}")


def local_norm_image(ext, k=None, method="generators"):
    """Norm group of the local extension at precision k (checked against k+1)."""
    if ext.p is INFINITY:
        raise BadInput("local_norm_image needs a finite place")
    k = k or ext.precision
    level, image = _unit_norm_image(ext, k, method)
    level2, image2 = _unit_norm_image(ext, k + 1, method)
    step = valuation_step(ext)
    index = image.index() * step
    index2 = image2.index() * step
    reduced = level.subgroup([level2.exp(g) % level.modulus for g in image2.generators])
    stable = index == index2 and reduced == image
    if not stable:
        raise PrecisionUnstable(
            f"norm image at p={ext.p} differs between precision {k} and {k + 1}"
        )
    return NormGroupResult(image, level, step, index, stable, minimal_valuation_norm(ext, step))


def with_precision_escalation(fn, k):
    """Call fn(k), doubling k on PrecisionUnstable, up to MAX_PRECISION."""
    while True:
        try:
            return fn(k)
        except PrecisionUnstable:
            if k >= MAX_PRECISION:
                raise
            k = min(2 * k, MAX_PRECISION)


def stable_norm_image(ext, method="generators"):
    return with_precision_escalation(lambda k: local_norm_image(ext, k, method), ext.precision)


def fundamental_lemma_check(data, p, k=None):
    """N(O_w^*) = O_v^* at precision k and k+1 for an unramified place."""
    if splitting_type(data, p) == RAMIFIED:
        raise RamifiedPlace(f"{p} is ramified")
    ext = local_extension(data, p, k)
    k = k or ext.precision
    for kk in (k, k + 1):
        _, image = _unit_norm_image(ext, kk)
        if image.index() != 1:
            return False
    return True


def norm_fiber_sizes(data, p, k):
    """Sizes of the fibers of N: units of R -> (Z/p^k)^* (by enumeration)."""
    ext = local_extension(data, p, k)
    R = QuotientRing(ext.polynomial, p**k)
    sizes = {}
    for a in R.elements():
        if R.is_unit(a, p):
            u = R.norm(a)
            sizes[u] = sizes.get(u, 0) + 1
    return sizes


# ---------------------------------------------------------------------------
# Frobenius


@dataclass
class FrobeniusData:
    ring: QuotientRing
    matrix: list  # action on the basis 1, t, ... (columns are images)
    image_of_t: tuple
    order: int

    def __call__(self, a):
        n = self.ring.degree
        m = self.ring.modulus
        return tuple(sum(self.matrix[i][j] * a[j] for j in range(n)) % m for i in range(n))


def _eval_poly(R, g, x):
    acc = R.scalar(0)
    for c in reversed(g):
        acc = R.add(R.mul(acc, x), R.scalar(c))
    return acc


def _inverse(R, a, p):
    """Inverse in R by Newton iteration from the residue inverse."""
    Rp = QuotientRing(R.g, p)
    ap = Rp.reduce(a)
    q = p**R.degree - 1  # exponent of (R/pR)^* divides this when R/pR is a field
    inv = Rp.power(ap, q - 1) if Rp.mul(Rp.power(ap, q), Rp.one()) == Rp.one() else None
    if inv is None:
        for b in product(range(p), repeat=R.degree):
            if Rp.mul(ap, b) == Rp.one():
                inv = b
                break
    x = R.reduce(inv)
    two = R.scalar(2)
    for _ in range(R.modulus.bit_length() + 1):
        x = R.mul(x, R.add(two, R.mul(R.scalar(-1), R.mul(a, x))))
    return x


def frobenius_action(data, p, k=None):
    """The lift of t -> t^p to an automorphism of (Z/p^k)[t]/(g), p inert."""
    ext = local_extension(data, p, k)
    if ext.type == RAMIFIED:
        raise RamifiedPlace(f"{p} is ramified")
    if ext.type != INERT:
        raise BadInput(f"{p} is not inert")
    k = k or ext.precision
    R = QuotientRing(ext.polynomial, p**k)
    g = ext.polynomial
    dg = tuple(i * g[i] for i in range(1, len(g)))
    r = R.power(R.t(), p)
    for _ in range(k + 2):
        num = _eval_poly(R, g, r)
        den = _eval_poly(R, dg, r)
        r = R.add(r, R.mul(R.scalar(-1), R.mul(num, _inverse(R, den, p))))
    if any(_eval_poly(R, g, r)):
        raise PrecisionUnstable(f"Hensel iteration did not converge at p={p}, k={k}")
    cols = [R.power(r, j) for j in range(R.degree)]
    matrix = [[cols[j][i] for j in range(R.degree)] for i in range(R.degree)]
    frob = FrobeniusData(R, matrix, r, ext.degree)
    _check_frobenius(frob, p)
    return frob


def _check_frobenius(frob, p):
    R = frob.ring
    n, m = R.degree, R.modulus
    ident = [[int(i == j) for j in range(n)] for i in range(n)]
    M = ident
    for _ in range(frob.order):
        M = [[sum(frob.matrix[i][l] * M[l][j] for l in range(n)) % m for j in range(n)]
             for i in range(n)]
    if M != ident:
        raise PrecisionUnstable("Frobenius lift does not have the expected order")
    # the fixed submodule is Z/p^k * 1: count solutions of (S - 1)x = 0 mod m
    D = IntMatrix([[frob.matrix[i][j] - ident[i][j] for j in range(n)] for i in range(n)], n)
    S, _, _ = smith_normal_form(D)
    count = 1
    diag = S.diagonal()
    for i in range(n):
        s = diag[i] if i < len(diag) else 0
        count *= gcd(s, m) if s else m
    if count != m:
        raise PrecisionUnstable("Frobenius fixes more than the base ring")


def quadratic_norm_residues(d, p, k):
    """Fast path: norms x^2 - d y^2 (or of the maximal order) of units, set of residues."""
    m = p**k
    g = quadratic_polynomial(d)
    A, B = g[0], g[1]
    # N(x + y t) = x^2 - B x y + A y^2 for t^2 + B t + A = 0
    out = set()
    for x in range(m):
        for y in range(m):
            N = (x * x - B * x * y + A * y * y) % m
            if N % p:
                out.add(N)
    return out


@lru_cache(maxsize=None)
def local_symbol_norm_test(d, x, p):
    """Is the rational x a local norm from Q_p(sqrt d)? (Hilbert symbol criterion)."""
    return hilbert_symbol(x, d, p) == 1

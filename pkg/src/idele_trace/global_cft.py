"""Quadratic and cyclic cubic fields over Q: norm index, Hasse oracle, arithmetic modules.

The idele class group modulo the congruence subgroup of m*infinity is
modeled by (Z/m)^*.  An idele concentrated at one place is sent to its
class after dividing by a global rational, as in ``idele_class``.
"""

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import lru_cache
from itertools import product
from math import gcd, isqrt

import numpy as np
from sympy import factorint, isprime, primerange

from .abelian import (
    FgAbelianGroup,
    GroupHom,
    IntMatrix,
    Subgroup,
    abelian_structure,
    integer_kernel,
    presentation_quotient,
)
from .errors import BadInput, GeneratorSearchFailed, H90Defect, NotCoprime
from .local_fields import (
    CUBIC_POLYNOMIALS,
    INERT,
    INFINITY,
    RAMIFIED,
    SPLIT,
    LocalUnitLevel,
    QuotientRing,
    default_precision,
    frobenius_action,
    hilbert_symbol,
    is_squarefree,
    local_extension,
    minimal_valuation_norm,
    quadratic_discriminant,
    quadratic_polynomial,
    roots_mod_p,
    splitting_type,
    stable_norm_image,
    unit_generators,
    valuation,
)
from .quadforms import class_group_imag, pell_fundamental, prime_form
from .twisted import SigmaModule, check_h90

DEFAULT_PRIME_BOUND = 1000
MAX_LEVEL_STEPS = 4


# ---------------------------------------------------------------------------
# fields


@dataclass(frozen=True)
class QuadField:
    d: int
    D: int
    m: int
    signature: str
    ramified: tuple

    @property
    def degree(self):
        return 2

    @property
    def data(self):
        return self.d

    @property
    def real(self):
        return self.signature == "real"


@dataclass(frozen=True)
class CyclicCubicField:
    f: int
    polynomial: tuple
    subgroup: tuple  # the index-3 subgroup of (Z/f)^*
    ramified: tuple

    @property
    def degree(self):
        return 3

    @property
    def m(self):
        return self.f

    @property
    def data(self):
        return ("cubic", self.f)

    @property
    def real(self):
        return True


def field_data(d):
    if not isinstance(d, int) or d in (0, 1) or not is_squarefree(d):
        raise BadInput(f"d = {d!r} must be a squarefree integer other than 0 and 1")
    D = quadratic_discriminant(d)
    return QuadField(d, D, abs(D), "real" if d > 0 else "imaginary", tuple(sorted(factorint(abs(D)))))


def cubic_data(f):
    if f not in CUBIC_POLYNOMIALS:
        raise BadInput(f"conductor {f} is not among the supported {sorted(CUBIC_POLYNOMIALS)}")
    units = [u for u in range(1, f) if gcd(u, f) == 1]
    phi = len(units)
    cubes = sorted({pow(u, 3, f) for u in units})
    if len(cubes) != phi // 3:
        raise BadInput(f"(Z/{f})^* has no unique index-3 subgroup")
    return CyclicCubicField(f, CUBIC_POLYNOMIALS[f], tuple(cubes), tuple(sorted(factorint(f))))


def as_field(L):
    if isinstance(L, (QuadField, CyclicCubicField)):
        return L
    if isinstance(L, tuple) and L and L[0] == "cubic":
        return cubic_data(L[1])
    return field_data(L)


# ---------------------------------------------------------------------------
# ray class models


class RayClassModel:
    """(Z/m)^* as the class group of the ideles modulo Q^* and the m*infinity congruence group."""

    def __init__(self, m, infinity_flag=True):
        if m < 1:
            raise BadInput("modulus must be positive")
        self.m = m
        self.infinity_flag = infinity_flag
        units = [u for u in range(1, m + 1) if gcd(u, m) == 1]
        self.carrier, self._log, self._exp = abelian_structure(
            units, lambda x, y: x * y % m, 1 % m, target_order=len(units)
        )
        self.factors = {q: e for q, e in factorint(m).items()}

    def __repr__(self):
        return f"RayClassModel(m={self.m}, infinity={self.infinity_flag})"

    def residue_class(self, u):
        u %= self.m
        if gcd(u, self.m) != 1:
            raise NotCoprime(f"{u} is not coprime to {self.m}")
        return self._log[u]

    def residue(self, x):
        return self._exp[self.carrier.reduce(x)]

    def subgroup(self, elements):
        return Subgroup(self.carrier, list(elements))


def class_of_rational(model, r):
    """Class of the idele equal to r at every place dividing m*infinity.

    With the infinity flag the real component carries the sign, so the
    class is that of |r| mod m.
    """
    r = Fraction(r)
    m = model.m
    if gcd(r.numerator, m) != 1 or gcd(r.denominator, m) != 1:
        raise NotCoprime(f"{r} is not coprime to {m}")
    if model.infinity_flag:
        r = abs(r)
    u = r.numerator * pow(r.denominator, -1, m) % m if m > 1 else 0
    return model._log[u]


def idele_class(model, p, a=0, u=1, k=None):
    """Class of the idele concentrated at p with value p^a * u.

    Dividing by the global rational p^a leaves u at p and p^(-a) at every
    other place; at q | m, q != p this is p^(-a) mod q^(v_q(m)), at p (if
    p | m) it is u mod p^(v_p(m)).  ``p = INFINITY`` takes u = +-1.
    """
    m = model.m
    if p is INFINITY:
        if u not in (1, -1):
            raise BadInput("the idele at infinity is given by its sign")
        if not model.infinity_flag or u == 1:
            return model.carrier.identity()
        return model._log[(-1) % m] if m > 1 else model.carrier.identity()
    if k is not None and p in model.factors and k < model.factors[p] + 1:
        raise BadInput(f"precision {k} is too small for p = {p} and modulus {m}")
    if u % p == 0:
        raise NotCoprime(f"{u} is not a p-adic unit")
    residues, moduli = [], []
    for q, e in model.factors.items():
        qe = q**e
        if q == p:
            residues.append(u % qe)
        else:
            residues.append(pow(p, -a, qe))
        moduli.append(qe)
    if not moduli:
        return model.carrier.identity()
    x = _crt(residues, moduli)
    return model._log[x % m]


def _crt(residues, moduli):
    x, M = 0, 1
    for r, q in zip(residues, moduli):
        # x + M*t = r mod q
        t = ((r - x) * pow(M, -1, q)) % q
        x += M * t
        M *= q
    return x % M


# ---------------------------------------------------------------------------
# norm subgroup and index


@dataclass
class NormIndexReport:
    field: object
    modulus: int
    prime_bound: int
    generator_log: list
    index: int
    stabilized: bool
    half_bound_index: int = None


def residue_degree(L, p):
    t = splitting_type(L.data, p)
    if t == SPLIT:
        return 1
    if t == INERT:
        return L.degree
    return None


def norm_subgroup(L, B=DEFAULT_PRIME_BOUND, model=None):
    """Subgroup of the ray class model generated by classes of local norms."""
    L = as_field(L)
    model = model or RayClassModel(L.m, True)
    G = model.carrier
    log = []
    gens = []
    for p in primerange(2, B + 1):
        if L.m % p == 0:
            continue
        f = residue_degree(L, p)
        x = idele_class(model, p, f, 1)
        log.append((p, "split" if f == 1 else "inert", model.residue(x)))
        gens.append(x)
    for p in L.ramified:
        ext, res = _ramified_norm_data(L.data, p, max(default_precision(p), model.factors[p] + 1))
        local = [idele_class(model, p, 0, u) for u in res.generator_residues()]
        w = minimal_valuation_norm(ext, res.valuation_step)
        local.append(idele_class(model, p, res.valuation_step, w))
        gens.extend(local)
        log.append((p, "ramified", sorted({model.residue(g) for g in local})))
    if L.real:
        x = idele_class(model, INFINITY, 0, -1)
        gens.append(x)
        log.append(("inf", "real", model.residue(x)))
    return Subgroup(G, gens), log, model


@lru_cache(maxsize=None)
def _ramified_norm_data(data, p, k):
    ext = local_extension(data, p, k)
    return ext, stable_norm_image(ext)


def norm_index(L, B=DEFAULT_PRIME_BOUND):
    L = as_field(L)
    sub, log, model = norm_subgroup(L, B)
    half, _, _ = norm_subgroup(L, max(2, B // 2), model)
    return NormIndexReport(L, model.m, B, log, sub.index(), sub.index() == half.index(), half.index())


# ---------------------------------------------------------------------------
# norm equations and the Hasse oracle


class NormStatus(str, Enum):
    FOUND = "FOUND"
    NOT_FOUND = "NOT_FOUND"
    LOCAL_OBSTRUCTION = "LOCAL_OBSTRUCTION"


@dataclass
class NormEquationResult:
    status: NormStatus
    x: Fraction = None
    y: Fraction = None
    height: int = None
    places: list = field(default_factory=list)

    def __post_init__(self):
        if self.status == NormStatus.FOUND:
            if self.x is None or self.y is None:
                raise ValueError("FOUND needs a solution")


def _search_norm(a, d, H):
    """x = X/(tZ), y = Y/(tZ) with 1 <= Z <= H solving X^2 - d Y^2 = s t Z^2, a = s/t.

    The first Z with a solution wins; for d < 0 the smallest X is returned.
    """
    a = Fraction(a)
    s, t = a.numerator, a.denominator
    A = s * t
    if d < 0:
        for Z in range(1, H + 1):
            target = A * Z * Z
            if target < 0:
                break
            ymax = isqrt(target // (-d))
            if target > 2**52:
                ys = range(ymax + 1)
            else:
                # float square roots pick candidates; each is confirmed exactly below
                Y = np.arange(0, ymax + 1, dtype=np.int64)
                rest = target + d * Y * Y
                roots = np.floor(np.sqrt(rest.astype(np.float64)) + 0.5).astype(np.int64)
                ys = np.nonzero(roots * roots == rest)[0].tolist()
            hits = []
            for y_val in ys:
                r = target + d * y_val * y_val
                x_val = isqrt(r)
                if x_val * x_val == r:
                    hits.append((x_val, y_val))
            if hits:
                x_val, y_val = min(hits)
                return Fraction(x_val, Z * t), Fraction(y_val, Z * t)
        return None
    Yarr = np.arange(0, H + 1, dtype=np.float64)
    for Z in range(1, H + 1):
        target = A * Z * Z
        vals = target + d * Yarr * Yarr
        ok = vals >= 0
        roots = np.floor(np.sqrt(np.where(ok, vals, 0)) + 0.5)
        cand = np.nonzero(ok & (roots * roots == vals))[0]
        for y_val in cand.tolist():
            r = target + d * y_val * y_val
            x_val = isqrt(r)
            if x_val * x_val == r:
                return Fraction(x_val, Z * t), Fraction(y_val, Z * t)
        if abs(target) + d * H * H > 2**52:
            # float precision exhausted: fall back to exact arithmetic for this Z
            for y_val in range(H + 1):
                r = target + d * y_val * y_val
                if r >= 0 and isqrt(r) ** 2 == r:
                    return Fraction(isqrt(r), Z * t), Fraction(y_val, Z * t)
    return None


def is_global_norm(a, d, H):
    """Search x, y in Q (common denominator at most H) with x^2 - d y^2 = a."""
    a = Fraction(a)
    if a == 0:
        raise BadInput("a must be nonzero")
    ok, table = is_local_norm_everywhere(a, d)
    sol = _search_norm(a, d, H)
    if sol is not None:
        x, y = sol
        if x * x - d * y * y != a:
            raise ArithmeticError("norm search returned a wrong solution")
        return NormEquationResult(NormStatus.FOUND, x, y, H)
    if not ok:
        return NormEquationResult(
            NormStatus.LOCAL_OBSTRUCTION, height=H, places=[v for v, s in table if s == -1]
        )
    return NormEquationResult(NormStatus.NOT_FOUND, height=H)


def is_local_norm_everywhere(a, d):
    a = Fraction(a)
    if a == 0:
        raise BadInput("a must be nonzero")
    primes = set(factorint(2 * abs(d) * abs(a.numerator) * a.denominator))
    table = [(INFINITY, hilbert_symbol(a, d, INFINITY))]
    table += [(p, hilbert_symbol(a, d, p)) for p in sorted(primes)]
    return all(s == 1 for _, s in table), table


class HasseStatus(str, Enum):
    CONSISTENT = "CONSISTENT"
    VIOLATION = "VIOLATION"
    INCONCLUSIVE = "INCONCLUSIVE"


def hasse_check(a, d, H):
    local_ok, table = is_local_norm_everywhere(a, d)
    res = is_global_norm(a, d, H)
    found = res.status == NormStatus.FOUND
    if found and not local_ok:
        return HasseStatus.VIOLATION, res, table
    if found == local_ok:
        return HasseStatus.CONSISTENT, res, table
    return HasseStatus.INCONCLUSIVE, res, table


# ---------------------------------------------------------------------------
# units and class groups


def fundamental_unit_real(d):
    """Minimal integer solution (x, y) of x^2 - d y^2 = +-1."""
    if d <= 1 or not is_squarefree(d):
        raise BadInput(f"d = {d} must be a squarefree integer > 1")
    return pell_fundamental(d)


def class_group_of_field(L):
    L = as_field(L)
    if L.real or L.degree != 2:
        raise BadInput("class groups are computed for imaginary quadratic fields only")
    return class_group_imag(L.D)


# ---------------------------------------------------------------------------
# elements of imaginary quadratic fields as (x, y) = x + y*omega


class QuadArith:
    """Arithmetic in Z[omega], omega^2 + B omega + A = 0."""

    def __init__(self, d):
        self.d = d
        self.g = quadratic_polynomial(d)
        self.A, self.B = self.g[0], self.g[1]

    def mul(self, u, v):
        x1, y1 = u
        x2, y2 = v
        # omega^2 = -B omega - A
        return (x1 * x2 - self.A * y1 * y2, x1 * y2 + x2 * y1 - self.B * y1 * y2)

    def conj(self, u):
        # conj(omega) = -B - omega
        x, y = u
        return (x - self.B * y, -y)

    def norm(self, u):
        x, y = u
        return x * x - self.B * x * y + self.A * y * y

    def pow(self, u, e):
        out = (1, 0)
        for _ in range(e):
            out = self.mul(out, u)
        return out

    def torsion_units(self):
        out = []
        for x in range(-2, 3):
            for y in range(-2, 3):
                if self.norm((x, y)) == 1:
                    out.append((x, y))
        return sorted(out)


def _valuation_at(arith, u, place):
    """v_P(u) for a prime P of Q(sqrt d) described by ``place``."""
    p, kind, r = place
    N = arith.norm(u)
    vN = valuation(abs(N), p) if N else None
    if kind == "inert":
        return vN // 2
    if kind == "ramified":
        return vN
    # split: P = (p, omega - r); evaluate at the p-adic root lifted far enough
    K = vN + 2
    root = _lift_root(arith.g, p, r, K)
    x, y = u
    val = (x + y * root) % p**K
    if val == 0:
        raise ArithmeticError("lift precision too small")
    return valuation(val, p)


def _lift_root(g, p, r, K):
    """Hensel lift of a simple root r of g mod p to p^K."""
    m = p**K
    x = r
    for _ in range(K.bit_length() + 2):
        gx = sum(c * x**i for i, c in enumerate(g))
        dg = sum(i * c * x ** (i - 1) for i, c in enumerate(g) if i)
        x = (x - gx * pow(dg, -1, m)) % m
    return x


def _s_primes(L, S):
    """Primes of L above S as (p, kind, root) with a fixed orientation."""
    out = []
    for p in sorted(S):
        t = splitting_type(L.d, p)
        roots = roots_mod_p(L.g if hasattr(L, "g") else quadratic_polynomial(L.d), p)
        if t == SPLIT:
            out.append((p, "split", roots[0]))
            out.append((p, "split", roots[1]))
        elif t == INERT:
            out.append((p, "inert", None))
        else:
            out.append((p, "ramified", roots[0]))
    return out


def s_unit_generators(L, S, height=None):
    """Generators of the S-units of an imaginary quadratic field.

    The principal ideals supported on S form the kernel of Z^S -> Cl; for
    each lattice vector a generator is found by exhaustive search over
    elements of the required norm (the norm form is positive definite).
    """
    L = as_field(L)
    if L.real:
        raise BadInput("S-units are computed for imaginary quadratic fields only")
    arith = QuadArith(L.d)
    places = _s_primes(L, S)
    gens = list(arith.torsion_units())
    if not places:
        return gens, places, arith
    Cl, log, _ = class_group_imag(L.D)
    classes = []
    for p, kind, r in places:
        if kind == "inert":
            classes.append(Cl.identity())  # (p) is principal
        else:
            classes.append(log[prime_form(L.D, p, r)])
    # kernel of Z^S -> Cl
    k = len(places)
    if Cl.ngens == 0:
        lattice = [tuple(int(i == j) for i in range(k)) for j in range(k)]
    else:
        cols = [list(c) for c in classes]
        rel = Cl.relation_columns()
        block = IntMatrix(
            [[cols[j][i] for j in range(k)] + [-c[i] for c in rel] for i in range(Cl.ngens)],
            k + len(rel),
        )
        lattice = [v[:k] for v in integer_kernel(block)]
        # add h_P * e_P so that nonnegative representatives generate the same lattice
        for j, c in enumerate(classes):
            h = Cl.element_order(c)
            lattice.append(tuple(h if i == j else 0 for i in range(k)))
    for vec in lattice:
        vec = _make_nonnegative(vec, classes, Cl)
        if not any(vec):
            continue
        gens.append(_find_generator(arith, places, vec, height))
    return gens, places, arith


def _make_nonnegative(vec, classes, Cl):
    out = list(vec)
    for j, c in enumerate(classes):
        if out[j] < 0:
            h = Cl.element_order(c) if Cl.ngens else 1
            t = (-out[j] + h - 1) // h
            out[j] += t * h
    return tuple(out)


def _find_generator(arith, places, vec, height=None):
    target = 1
    for (p, kind, _), e in zip(places, vec):
        target *= p ** (2 * e if kind == "inert" else e)
    # norm form x^2 - Bxy + Ay^2 is positive definite: bound y by the norm
    A, B = arith.A, arith.B
    disc = 4 * A - B * B
    ymax = isqrt(4 * target // disc) + 1
    if height is not None:
        ymax = min(ymax, height)
    for y in range(-ymax, ymax + 1):
        # x^2 - B y x + (A y^2 - target) = 0
        q = B * B * y * y - 4 * (A * y * y - target)
        if q < 0:
            continue
        s = isqrt(q)
        if s * s != q:
            continue
        for num in (B * y + s, B * y - s):
            if num % 2:
                continue
            u = (num // 2, y)
            if arith.norm(u) != target:
                continue
            if all(_valuation_at(arith, u, pl) == e for pl, e in zip(places, vec)):
                return u
    bad = places[max(range(len(vec)), key=lambda i: vec[i])][0]
    raise GeneratorSearchFailed(bad, ymax)


# ---------------------------------------------------------------------------
# arithmetic sigma-modules


@dataclass
class LocalFactor:
    """prod_{P | p} L_P^* / U_P as raw generators and relations.

    Raw coordinates per prime P: the valuation (free) and the unit
    coordinates modulo U_P = 1 + P^level.
    """

    p: int
    kind: str
    ngens: int
    relations: list
    sigma: list  # raw matrix (columns = images of raw generators)
    embed: object  # element of L -> raw coordinate vector
    level: int = None  # filtration exponent at a ramified place

    def module(self, extra=()):
        """The factor modulo ``extra`` raw relations as a SigmaModule (n = 2)."""
        G, P, Lift = presentation_quotient(self.ngens, list(self.relations) + list(extra))
        sigma = GroupHom(G, G, P @ IntMatrix(self.sigma, self.ngens) @ Lift)
        return SigmaModule(G, sigma, 2, exact_order=False)


def build_sigma_module(L, S, k=None, power=None, height=None, require_h90=True):
    """Finite ideles of L over S with conjugation, and Gamma = image of the S-units.

    G = prod_{P in S} L_P^* / (E * prod U_P), where U_P are the units
    congruent to 1 mod P^j (j = 2k, raised at a wild place until the norm
    is onto U_P meet Q_p) and E = (O_S^*)^m for an odd m prime to the
    number of roots of unity (``power``).  Then E is the full preimage of
    the identity in the S-units, and E -> O_S^* is an isomorphism on Tate
    cohomology, so Hilbert 90 holds for Gamma = O_S^*/E, and for G exactly
    when the rational S-units that are not norms of S-units are detected
    by local symbols at S.  Returns ``(M, info)``.
    """
    L = as_field(L)
    if L.real or L.degree != 2:
        raise BadInput("build_sigma_module needs an imaginary quadratic field")
    S = sorted(set(S))
    for p in S:
        if not isprime(p):
            raise BadInput(f"{p} is not prime")
    for p in L.ramified:
        if S and p not in S:
            raise BadInput(f"S must contain the ramified prime {p}")
    gens, places, arith = s_unit_generators(L, S, height)
    mu = len(arith.torsion_units())
    m = power if power is not None else next(q for q in range(3, 100, 2) if gcd(q, mu) == 1)
    if m % 2 == 0 or gcd(m, mu) != 1:
        raise BadInput(f"power {m} must be odd and prime to {mu}")
    # close the generators under conjugation
    full = []
    for u in gens:
        for v in (u, arith.conj(u)):
            if v not in full:
                full.append(v)
    factors = []
    for p in S:
        kp = k if k is not None else default_precision(p)
        factors.append(_certified_factor(L, arith, p, kp))

    offsets, total = [], 0
    for fac in factors:
        offsets.append(total)
        total += fac.ngens
    relations = []
    sigma_raw = [[0] * total for _ in range(total)]
    for fac, off in zip(factors, offsets):
        for rel in fac.relations:
            v = [0] * total
            v[off:off + fac.ngens] = rel
            relations.append(tuple(v))
        for i in range(fac.ngens):
            for j in range(fac.ngens):
                sigma_raw[off + i][off + j] = fac.sigma[i][j]

    def embed(u):
        v = [0] * total
        for fac, off in zip(factors, offsets):
            v[off:off + fac.ngens] = fac.embed(u)
        return tuple(v)

    raw_units = [embed(u) for u in full]
    relations += [tuple(m * c for c in v) for v in raw_units]
    G, P, Lift = presentation_quotient(total, relations)
    if not G.is_finite():
        raise ArithmeticError("the S-units do not have full rank in the valuations")
    sigma = GroupHom(G, G, P @ IntMatrix(sigma_raw, total) @ Lift)
    gamma = [G.reduce(P @ v) for v in raw_units]
    # sigma is trivial on the trivial module (S empty)
    M = SigmaModule(G, sigma, 2, gamma, exact_order=sigma != GroupHom.identity(G))
    info = {
        "field": L,
        "S": S,
        "places": places,
        "s_units": full,
        "power": m,
        "embed": lambda u: G.reduce(P @ embed(u)),
        "levels": {fac.p: fac.level for fac in factors if fac.level is not None},
    }
    if require_h90:
        for lvl in ("G", "Gamma"):
            r = check_h90(M, lvl)
            if not r.holds:
                raise H90Defect(lvl, r.defect)
    return M, info


def _certified_factor(L, arith, p, k):
    """Local factor whose unit truncation has trivial Tate cohomology.

    Certified on L_P^*/<varpi> U_P for a non-norm varpi: by the long exact
    sequence its Hilbert 90 defect is the order of H^0(U_P).  Unramified
    places always pass; at a ramified place the level is raised.
    """
    fac = _local_factor(L, arith, p, k)
    if fac.kind != "ramified":
        return fac
    varpi = p * _rational_non_norm(L.d, p, (p,))
    for j in range(2 * k, 2 * k + MAX_LEVEL_STEPS):
        fac = _local_factor(L, arith, p, k, level=j)
        r = check_h90(fac.module([fac.embed_rational(varpi)]), "G")
        if r.holds:
            return fac
    # an even ramification break leaves H^0(1 + P^j) = Z/2 at every level:
    # enlarge U_P by a free Z_p[sigma]-lattice <w, sigma(w)>
    fac = _local_factor(L, arith, p, k)
    pi = fac.uniformizer
    roots = [z for z in arith.torsion_units() if z != (1, 0)]
    for i in range(fac.level - 1, 0, -1):
        for b in ((1, 0), (0, 1), (1, 1)):
            x = arith.mul(arith.pow(pi, i), b)
            w = (1 + x[0], x[1])
            extra = [fac.embed(w), fac.embed(arith.conj(w))]
            if not check_h90(fac.module(extra + [fac.embed_rational(varpi)]), "G").holds:
                continue
            Q, P, _ = presentation_quotient(fac.ngens, list(fac.relations) + extra)
            if any(Q.reduce(P @ fac.embed(z)) == Q.identity() for z in roots):
                continue
            fac.relations = list(fac.relations) + extra
            fac.extra_generator = w
            return fac
    raise H90Defect("G", r.defect)


def _unit_structure(R, p, k):
    """U = (R/p^k)^* via enumeration: (A, log, exp)."""
    Rk, gens = unit_generators(R.g, p, k)
    return abelian_structure(gens, Rk.mul, Rk.one())


def _ring_unit_part(R, u_num, denom):
    """(u_num / denom) in R, denom a unit."""
    inv = pow(denom, -1, R.modulus)
    return R.reduce(tuple(c * inv for c in u_num))


def _rational_non_norm(d, p, S):
    """Smallest |s| with s in <-1, S - {p}> (then any p-unit) and p*s not a local norm at p."""
    others = [q for q in sorted(S) if q != p]
    cands = []
    for mask in range(1 << len(others)):
        s = 1
        for i, q in enumerate(others):
            if mask >> i & 1:
                s *= q
        cands += [s, -s]
    cands += [c for c in range(2, 8 * p) if c % p]
    for s in sorted(cands, key=lambda x: (abs(x), x < 0)):
        if hilbert_symbol(p * s, d, p) == -1:
            return s
    raise BadInput(f"no non-norm of valuation 1 found at {p}")


def _local_factor(L, arith, p, k, level=None):
    """Local factor at p; ``level`` is the filtration exponent j of 1 + P^j at a ramified P."""
    t = splitting_type(L.d, p)
    g = quadratic_polynomial(L.d)
    if t == RAMIFIED:
        lev = 2 * k if level is None else level
        k = (lev + 1) // 2
    pk = p**k
    if t == SPLIT:
        ulevel = LocalUnitLevel(p, k)
        ud = ulevel.carrier.invariant_factors
        r0, r1 = roots_mod_p(g, p)
        # raw coordinates per prime: valuation, then unit coordinates
        nper = 1 + len(ud)
        rels = []
        for base in (0, nper):
            for i, d in enumerate(ud):
                v = [0] * (2 * nper)
                v[base + 1 + i] = d
                rels.append(v)
        sig = [[0] * (2 * nper) for _ in range(2 * nper)]
        for i in range(nper):
            sig[nper + i][i] = 1
            sig[i][nper + i] = 1

        def embed(u):
            out = []
            N = arith.norm(u)
            for r in (r0, r1):
                K = valuation(abs(N), p) + k + 2
                root = _lift_root(g, p, r, K)
                x = (u[0] + u[1] * root) % p**K
                a = valuation(x, p)
                out.append(a)
                out.extend(ulevel.log((x // p**a) % pk))
            return out

        fac = LocalFactor(p, "split", 2 * nper, rels, sig, embed)
        fac.embed_rational = lambda v: embed((v, 0))
        return fac

    R = QuotientRing(g, pk)
    A, log, exp = _unit_structure(R, p, k)
    ud = A.invariant_factors
    nU = len(ud)
    unit_rels = []
    for i, d in enumerate(ud):
        v = [0] * (1 + nU)
        v[1 + i] = d
        unit_rels.append(v)

    if t == INERT:
        frob = frobenius_action(L.d, p, k)
        conj = lambda x: R.reduce(arith.conj(x))  # noqa: E731
        if any(frob(x) != conj(x) for x in (R.t(), *exp.values())):
            raise ArithmeticError("Frobenius differs from conjugation")
        sig = [[0] * (1 + nU) for _ in range(1 + nU)]
        sig[0][0] = 1
        for j in range(nU):
            img = log[frob(exp[A.basis()[j]])]
            for i in range(nU):
                sig[1 + i][1 + j] = img[i]

        def embed(u):
            a = valuation(abs(arith.norm(u)), p) // 2
            w = _ring_unit_part(R, (u[0] // p**a, u[1] // p**a), 1)
            return [a] + list(log[w])

        fac = LocalFactor(p, "inert", 1 + nU, unit_rels, sig, embed)
        fac.embed_rational = lambda v: embed((v, 0))
        return fac

    # ramified: uniformizer pi = omega - r; v_P(pi) = 1 since pi is not in pO
    r = roots_mod_p(g, p)[0]
    pi = (-r, 1)
    Npi = arith.norm(pi)
    if valuation(abs(Npi), p) != 1:
        raise ArithmeticError(f"omega - {r} is not a uniformizer at {p}")
    e = Npi // p
    pibar = arith.conj(pi)
    rels = list(unit_rels)
    # R^* = units mod P^(2k); 1 + pi^i for lev <= i < 2k generate the rest of 1 + P^lev
    pi_k = R.reduce(pi)
    for i in range(lev, 2 * k):
        rels.append([0] + list(log[R.add(R.one(), R.power(pi_k, i))]))

    def unit_of(u):
        a = valuation(abs(arith.norm(u)), p)
        beta = arith.mul(u, arith.pow(pibar, a))
        # beta = w * N(pi)^a = w * p^a e^a for the unit w = u / pi^a
        if (beta[0] % p**a) or (beta[1] % p**a):
            raise ArithmeticError("valuation bookkeeping failed")
        return a, _ring_unit_part(R, (beta[0] // p**a, beta[1] // p**a), e**a)

    sig = [[0] * (1 + nU) for _ in range(1 + nU)]
    # sigma(pi) = pibar = pi * (pibar^2 / N(pi))
    pibar2 = arith.mul(pibar, pibar)
    q = _ring_unit_part(R, (pibar2[0] // p, pibar2[1] // p), e)
    sig[0][0] = 1
    for i, x in enumerate(log[q]):
        sig[1 + i][0] = x
    for j in range(nU):
        img = log[R.reduce(arith.conj(exp[A.basis()[j]]))]
        for i in range(nU):
            sig[1 + i][1 + j] = img[i]

    def embed(u):
        a, w_ = unit_of(u)
        return [a] + list(log[w_])

    fac = LocalFactor(p, "ramified", 1 + nU, rels, sig, embed, lev)
    fac.embed_rational = lambda v: embed((v, 0))
    fac.uniformizer = pi
    return fac

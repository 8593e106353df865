"""The twisted trace formula on finite sigma-modules, with exact constants.

A :class:`SigmaModule` models the ideles of L with Galois action: a finite
abelian group G, an automorphism sigma of order n, a sigma-stable subgroup
Gamma (the image of L*) and a twist kappa with N(kappa) in Gamma.  With
counting measure everywhere, the three expressions

* kernel trace   sum_{x in G/Gamma} sum_{delta in Gamma} f(-x + delta + theta(x))
* spectral side  sum_{eta fixed} sum_{g in G} f(theta(g)) eta(g)
* geometric side c * sum_{delta in Gamma/(sigma-1)Gamma} O_delta(f)

agree exactly for every valid module, where theta(x) = kappa + sigma(x)
and c = [G_K : Gamma_K].  The groups are written additively.
"""

import random
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from itertools import combinations
from math import gcd, lcm

import numpy as np

from .abelian import (
    INFINITE,
    FgAbelianGroup,
    GroupHom,
    IntMatrix,
    Subgroup,
    characters_fixed_by,
    characters_trivial_on,
    dual_characters,
    direct_sum,
    presentation_quotient,
)
from .cyclotomic import ZERO, CyclotomicValue, GroupRingAccumulator, sparse_terms
from .errors import (
    HypothesisNotMet,
    IdeleTraceError,
    IdentityViolation,
    InvalidModule,
    SupportViolation,
)


class OrbitalDependence(IdeleTraceError):
    """An orbital sum changed under a change of representatives."""


# ---------------------------------------------------------------------------
# modules


class SigmaModule:
    """Finite abelian group with an automorphism of exact order n.

    ``gamma`` is given by generators (it is closed under sigma on
    validation) and ``kappa`` defaults to the identity element.
    """

    def __init__(self, G, sigma, n, gamma=(), kappa=None, validate=True, exact_order=True):
        if not isinstance(sigma, GroupHom):
            sigma = GroupHom(G, G, sigma)
        self.G = G
        self.sigma = sigma
        self.n = int(n)
        gens = list(gamma.generators) if isinstance(gamma, Subgroup) else list(gamma)
        self.gamma = Subgroup(G, gens)
        self.kappa = G.identity() if kappa is None else G.reduce(kappa)
        # exact_order=False admits sigma whose order is a proper divisor of n
        # (sigma = id with n = 2 is the standard Hilbert 90 negative control)
        self.exact_order = exact_order
        if validate:
            derive_structure(self)

    def __repr__(self):
        return (
            f"SigmaModule(G={self.G!r}, n={self.n}, sigma={self.sigma.matrix.tolist()}, "
            f"gamma={list(self.gamma.generators)}, kappa={self.kappa})"
        )

    def with_kappa(self, kappa, validate=True):
        return SigmaModule(self.G, self.sigma, self.n, self.gamma, kappa, validate, self.exact_order)

    def theta(self, x):
        return self.G.add(self.kappa, self.sigma(x))

    @cached_property
    def one_minus(self):
        """The endomorphism sigma - 1 (its image is the same as that of 1 - sigma)."""
        return self.sigma - GroupHom.identity(self.G)

    @cached_property
    def norm(self):
        total = GroupHom.zero(self.G, self.G)
        power = GroupHom.identity(self.G)
        for _ in range(self.n):
            total = total + power
            power = self.sigma * power
        return total

    @cached_property
    def sigma_inverse(self):
        return self.sigma ** (self.n - 1)

    @cached_property
    def G_K(self):
        return self.one_minus.kernel()

    @cached_property
    def gamma_K(self):
        return self.gamma & self.G_K

    @cached_property
    def norm_image(self):
        return self.norm.image()

    @cached_property
    def norm_gamma(self):
        return self.gamma.image(self.norm)

    @cached_property
    def norm_kernel(self):
        return self.norm.kernel()

    @cached_property
    def c(self):
        """The counting constant [G_K : Gamma_K]."""
        return self.G_K.order() // self.gamma_K.order()

    def X(self):
        """``(G/Gamma, proj)``, the finite model of the compact quotient X_L."""
        return self.gamma.quotient()

    @cached_property
    def elements(self):
        return list(self.G.elements())

    @cached_property
    def _sigma_table(self):
        return {x: self.sigma(x) for x in self.elements}

    @cached_property
    def _twist_table(self):
        """x -> theta(x) - x = kappa + (sigma - 1) x."""
        G, k, s = self.G, self.kappa, self._sigma_table
        return {x: G.add(k, G.sub(s[x], x)) for x in self.elements}


@dataclass
class StructureReport:
    G_K: Subgroup
    gamma_K: Subgroup
    norm: GroupHom
    violations: list = field(default_factory=list)

    @property
    def valid(self):
        return not self.violations


def derive_structure(M, raise_on_error=True):
    """Check the module invariants and return the derived subgroups."""
    violations = []
    G = M.G
    if not G.is_finite():
        violations.append("G must be finite")
        raise InvalidModule(violations)
    if M.sigma.source != G or M.sigma.target != G:
        violations.append("sigma must be an endomorphism of G")
    elif not M.sigma.is_automorphism():
        violations.append("sigma is not an automorphism")
    else:
        ident = GroupHom.identity(G)
        if M.sigma ** M.n != ident:
            violations.append(f"sigma^{M.n} is not the identity")
        else:
            exact = min(k for k in range(1, M.n + 1) if M.n % k == 0 and M.sigma ** k == ident)
            if exact != M.n and M.exact_order:
                violations.append(f"sigma has order {exact}, not {M.n}")
    if violations:
        if raise_on_error:
            raise InvalidModule(violations)
        return StructureReport(None, None, None, violations)
    if not M.gamma.is_stable_under(M.sigma):
        violations.append("Gamma is not sigma-stable")
    N = M.norm
    if N * M.sigma != N:
        violations.append("N o sigma != N")
    if not (M.norm_image <= M.G_K):
        violations.append("image(N) is not contained in G_K")
    if not M.gamma_K.contains(N(M.kappa)):
        violations.append(f"N(kappa) = {N(M.kappa)} is not in Gamma_K")
    if violations and raise_on_error:
        raise InvalidModule(violations)
    return StructureReport(M.G_K, M.gamma_K, N, violations)


class RaySigmaModule:
    """A sigma-module together with a rank-one ray Z, sigma trivial on it.

    On the ray the norm acts as multiplication by n.
    """

    def __init__(self, base):
        self.base = base
        self.ray = FgAbelianGroup((), 1)
        self.total, inj, proj = direct_sum([base.G, self.ray])
        self._inj, self._proj = inj, proj
        n = base.n
        ray_sigma = GroupHom.identity(self.ray)
        ray_norm = GroupHom(self.ray, self.ray, [[n]], check=False)
        self.sigma = self._block(base.sigma, ray_sigma)
        self.norm = self._block(base.norm, ray_norm)
        self.ray_norm = ray_norm
        self.gamma = Subgroup(self.total, [inj[0](g) for g in base.gamma.generators])

    def _block(self, on_base, on_ray):
        T = self.total
        images = []
        for b in T.basis():
            x, r = self._proj[0](b), self._proj[1](b)
            images.append(T.add(self._inj[0](on_base(x)), self._inj[1](on_ray(r))))
        return GroupHom.from_images(T, T, images, check=False)

    def check_invariants(self):
        violations = []
        r = (1,)
        if self.sigma(self._inj[1](r)) != self._inj[1](r):
            violations.append("sigma - 1 is not zero on the ray")
        if not self.ray_norm.is_injective():
            violations.append("N is not injective on the ray")
        coker = self.ray_norm.image().index()
        if coker != self.base.n:
            violations.append(f"N on the ray has cokernel of order {coker}, expected {self.base.n}")
        if violations:
            raise InvalidModule(violations)
        return True

    @cached_property
    def G_K(self):
        return (self.sigma - GroupHom.identity(self.total)).kernel()

    @cached_property
    def gamma_K(self):
        return self.gamma & self.G_K

    @cached_property
    def norm_image(self):
        return self.norm.image()

    @cached_property
    def norm_gamma(self):
        return self.gamma.image(self.norm)


# ---------------------------------------------------------------------------
# test functions


class TestFunction:
    """Finitely supported function on a finite group with cyclotomic values."""

    __test__ = False  # not a pytest class

    def __init__(self, group, values=None):
        if isinstance(group, SigmaModule):
            group = group.G
        self.group = group
        self.values = {}
        for x, v in (values or {}).items():
            if not isinstance(v, CyclotomicValue):
                v = CyclotomicValue.rational(v)
            if not v.is_zero():
                self.values[group.reduce(x)] = v

    def __call__(self, x):
        return self.values.get(x, ZERO)

    def __repr__(self):
        return f"TestFunction({self.group!r}, support={len(self.values)})"

    @property
    def support(self):
        return sorted(self.values)

    def conductor(self):
        e = 1
        for v in self.values.values():
            e = lcm(e, v.conductor)
        return e

    def is_zero(self):
        return not self.values

    @classmethod
    def indicator(cls, group, elements):
        return cls(group, {x: 1 for x in elements})

    @classmethod
    def zero(cls, group):
        return cls(group, {})

    def translate(self, kappa):
        """x -> f(kappa + x)."""
        G = self.group
        return TestFunction(G, {G.sub(x, kappa): v for x, v in self.values.items()})

    def scale(self, q):
        return TestFunction(self.group, {x: v.scale(q) for x, v in self.values.items()})


def random_test_function(group, rng, support_size=None, conductor=None, rational=False):
    """Random cyclotomic-valued function with small integer coefficients."""
    if isinstance(group, SigmaModule):
        group = group.G
    if group.order() > BRUTE_FORCE_LIMIT:
        # sample without enumerating; duplicates are dropped
        if support_size is None:
            support_size = rng.randint(1, 24)
        support = sorted({group.random_element(rng) for _ in range(support_size)})
    else:
        elements = list(group.elements())
        if support_size is None:
            support_size = rng.randint(1, min(len(elements), 24))
        support = rng.sample(elements, min(support_size, len(elements)))
    e = conductor or group.exponent()
    if conductor is None and group.order() > BRUTE_FORCE_LIMIT:
        # dense coefficient vectors of length exp(G) are too costly here
        e = max(q for q in range(1, 61) if e % q == 0)
    values = {}
    for x in support:
        coeffs = [rng.randint(-3, 3) for _ in range(max(1, e))]
        if rational:
            coeffs = [Fraction(c, rng.choice([1, 2, 3])) for c in coeffs]
        values[x] = CyclotomicValue(e, coeffs)
    return TestFunction(group, values)


# ---------------------------------------------------------------------------
# the three sides


def _modulus(M, *funcs):
    e = M.G.exponent()
    for f in funcs:
        e = lcm(e, f.conductor())
    return e


# modules up to this size are handled by direct enumeration
BRUTE_FORCE_LIMIT = 20_000


def _method(M, method):
    if method == "auto":
        return "enumerate" if M.G.order() <= BRUTE_FORCE_LIMIT else "structural"
    if method not in ("enumerate", "structural"):
        raise ValueError(f"unknown method {method!r}")
    return method


def kernel_trace(M, f, method="auto"):
    """sum_{x in G/Gamma} sum_{delta in Gamma} f(-x + delta + theta(x)).

    ``enumerate`` is the brute-force oracle.  ``structural`` counts, for
    each u in the support, the classes x with (sigma-1)x = u - kappa in
    G/Gamma, which is |ker(sigma-1 on G/Gamma)| or 0.
    """
    if _method(M, method) == "structural":
        return _kernel_trace_structural(M, f)
    G = M.G
    Q, proj = M.X()
    reps = _canonical_reps(M.elements, proj)
    gamma_elems = M.gamma.elements()
    twist = M._twist_table
    acc = GroupRingAccumulator(_modulus(M, f))
    terms = {x: sparse_terms(v, acc.modulus) for x, v in f.values.items()}
    for x in reps:
        d = twist[x]
        for delta in gamma_elems:
            t = terms.get(G.add(d, delta))
            if t:
                acc.add_sparse(t)
    return acc.result()


def _kernel_trace_structural(M, f):
    G = M.G
    Q, proj = M.X()
    dQ = _induced_endomorphism(M.gamma, M.sigma) - GroupHom.identity(Q)
    image = dQ.image()
    fiber = dQ.kernel().order()
    acc = GroupRingAccumulator(_modulus(M, f))
    for u, v in f.values.items():
        if image.contains(proj(G.sub(u, M.kappa))):
            acc.add_sparse(sparse_terms(v, acc.modulus))
    return acc.result().scale(fiber)


def fixed_characters(M, method="auto"):
    """Characters of G/Gamma with eta = eta o sigma^{-1}, lifted to G.

    ``enumerate`` filters all characters; ``structural`` takes the
    characters of (G/Gamma)/(sigma^{-1} - 1)(G/Gamma).
    """
    Q, proj = M.X()
    sigma_Q = _induced_endomorphism(M.gamma, M.sigma_inverse)
    if method == "auto":
        method = "enumerate" if Q.order() <= BRUTE_FORCE_LIMIT else "structural"
    if method == "structural":
        H = (sigma_Q - GroupHom.identity(Q)).image()
        return [eta.pullback(proj) for eta in characters_trivial_on(Q, H)]
    return [eta.pullback(proj) for eta in characters_fixed_by(Q, sigma_Q)]


def _induced_endomorphism(sub, hom):
    """The map induced by ``hom`` on ambient/sub (``sub`` must be hom-stable)."""
    Q, proj = sub.quotient()
    images = [proj(hom(sub.quotient_lift(b))) for b in Q.basis()]
    return GroupHom.from_images(Q, Q, images, check=False)


def spectral_side(M, f, method="auto"):
    """sum over fixed eta of eta(f) = sum_g f(theta(g)) eta(g).

    The inner sum is taken over u = theta(g) in the support of f, i.e.
    g = sigma^{-1}(u - kappa).
    """
    G = M.G
    etas = fixed_characters(M, method)
    acc = GroupRingAccumulator(_modulus(M, f))
    sinv = M.sigma_inverse
    pulled = [(sinv(G.sub(u, M.kappa)), sparse_terms(v, acc.modulus)) for u, v in f.values.items()]
    if len(etas) * len(pulled) > 50_000 and _integral(pulled):
        _spectral_numpy(acc, etas, pulled)
        return acc.result()
    for eta in etas:
        e = eta.conductor
        for g, t in pulled:
            acc.add_sparse(t, eta.phase(g), e)
    return acc.result()


def _integral(pulled):
    return all(isinstance(c, int) for _, t in pulled for _, c in t)


def _spectral_numpy(acc, etas, pulled):
    """Same sum, with the characters handled as one phase histogram per point."""
    n = acc.modulus
    steps = np.array([[s * (n // eta.conductor) % n for s in eta._steps] for eta in etas], dtype=object)
    total = np.zeros(n, dtype=np.int64)
    for g, terms in pulled:
        shifts = (steps @ np.array(g, dtype=object)) % n
        hist = np.bincount(shifts.astype(np.int64), minlength=n)
        for j, c in terms:
            total += c * np.roll(hist, j)
    acc.vec = [a + int(b) for a, b in zip(acc.vec, total)]


def _canonical_reps(elements, proj):
    """Lexicographically minimal representative of each fiber of ``proj``."""
    reps = {}
    for x in elements:
        key = proj(x)
        if key not in reps:
            reps[key] = x
    return sorted(reps.values())


def coset_representatives(M):
    """Canonical representatives of G_K \\ G."""
    _, proj = M.G_K.quotient()
    return _canonical_reps(M.elements, proj)


def _sigma_minus_one_gamma(M):
    return Subgroup(M.G, [M.one_minus(g) for g in M.gamma.generators])


def delta_classes(M):
    """Canonical representatives of Gamma / (sigma - 1)Gamma."""
    _, proj = _sigma_minus_one_gamma(M).quotient()
    return _canonical_reps(M.gamma.elements(), proj)


def relative_quotient_with_lift(big, small):
    """``(big/small, lift)`` with ``lift`` sending quotient elements into ``big``."""
    S, incl = big.abstract()
    inner = small.preimage(incl)
    Q, _ = inner.quotient()

    def lift(q):
        return incl(inner.quotient_lift(q))

    return Q, lift


def delta_class_count(M):
    Q, _ = relative_quotient_with_lift(M.gamma, _sigma_minus_one_gamma(M))
    return Q.order()


def orbital(M, delta, f, reps=None, method="auto"):
    """O_delta(f) = sum_{y in G_K \\ G} f(-y + delta + theta(y)).

    ``structural``: each u with u - delta - kappa in (sigma-1)G is hit by
    exactly one coset y.
    """
    G = M.G
    if reps is None and _method(M, method) == "structural":
        image = M.one_minus.image()
        acc = GroupRingAccumulator(_modulus(M, f))
        base = G.add(delta, M.kappa)
        for u, v in f.values.items():
            if image.contains(G.sub(u, base)):
                acc.add_sparse(sparse_terms(v, acc.modulus))
        return acc.result()
    reps = coset_representatives(M) if reps is None else reps
    twist = M._twist_table
    acc = GroupRingAccumulator(_modulus(M, f))
    terms = {x: sparse_terms(v, acc.modulus) for x, v in f.values.items()}
    for y in reps:
        t = terms.get(G.add(delta, twist[y]))
        if t:
            acc.add_sparse(t)
    return acc.result()


def _random_in(sub, rng):
    S, incl = sub.abstract()
    return incl(S.random_element(rng))


def geometric_side(M, f, check_representatives=True, rng=None, method="auto"):
    """c * sum over Gamma/(sigma-1)Gamma of O_delta(f), c = [G_K : Gamma_K].

    With ``check_representatives`` every orbital is recomputed with the
    class representative shifted by a random (sigma - 1)mu and the coset
    representatives shifted by random elements of G_K.
    """
    G = M.G
    rng = rng or random.Random(0)
    structural = _method(M, method) == "structural"
    if structural:
        C, lift = relative_quotient_with_lift(M.gamma, _sigma_minus_one_gamma(M))
        classes = [lift(q) for q in C.elements()]
        reps = None
    else:
        reps = coset_representatives(M)
        classes = delta_classes(M)
    total = ZERO
    for delta in classes:
        o = orbital(M, delta, f, reps, method="structural" if structural else "enumerate")
        total = total + o
        if check_representatives:
            mu = _random_in(M.gamma, rng)
            delta2 = G.add(delta, M.one_minus(mu))
            if structural:
                o2 = orbital(M, delta2, f, None, method="structural")
            else:
                reps2 = [G.add(y, _random_in(M.G_K, rng)) for y in reps]
                o2 = orbital(M, delta2, f, reps2)
            if o2 != o:
                raise OrbitalDependence(f"O_{delta} = {o!r} but O_{delta2} = {o2!r}")
    return total.scale(M.c)


@dataclass
class TraceReport:
    spectral: CyclotomicValue
    geometric: CyclotomicValue
    kernel_trace: CyclotomicValue
    c: int
    fixed_character_count: int
    delta_class_count: int

    @property
    def success(self):
        return self.spectral == self.geometric == self.kernel_trace


def verify_trace_formula(M, f, rng=None, method="auto"):
    etas = fixed_characters(M, method)
    spec = spectral_side(M, f, method)
    geo = geometric_side(M, f, rng=rng, method=method)
    ker = kernel_trace(M, f, method)
    report = TraceReport(spec, geo, ker, M.c, len(etas), delta_class_count(M))
    if not report.success:
        raise IdentityViolation(spec, geo, ker)
    return report


# ---------------------------------------------------------------------------
# Hilbert 90 and the groups Y


@dataclass(frozen=True)
class H90Result:
    holds: bool
    defect: object


def _relative_order(big, small):
    Q, _ = big.relative_quotient(small)
    return Q.order()


def h90_defect(G, sigma, n, sub=None):
    """|(ker N restricted to sub) / (sigma - 1)sub| for an endomorphism sigma of G."""
    total = GroupHom.zero(G, G)
    power = GroupHom.identity(G)
    for _ in range(n):
        total = total + power
        power = sigma * power
    one_minus = sigma - GroupHom.identity(G)
    ker = total.kernel()
    if sub is None:
        return _relative_order(ker, one_minus.image())
    ker = ker & sub
    return _relative_order(ker, sub.image(one_minus))


def check_h90(M, level="G"):
    """Hilbert 90 at ``level`` 'G' (ker N = (sigma-1)G) or 'Gamma'."""
    if isinstance(M, RaySigmaModule):
        if level == "ray":
            d = h90_defect(M.ray, GroupHom.identity(M.ray), M.base.n)
            return H90Result(d == 1, d)
        M = M.base
    if level == "G":
        d = _relative_order(M.norm_kernel, M.one_minus.image())
    elif level == "Gamma":
        d = _relative_order(M.norm_kernel & M.gamma, M.gamma.image(M.one_minus))
    else:
        raise ValueError(f"unknown level {level!r}")
    return H90Result(d == 1, d)


@dataclass
class YGroups:
    ysharp: FgAbelianGroup
    yflat: FgAbelianGroup
    knot: FgAbelianGroup
    exact: bool
    transport_isomorphism: object  # True/False, or None when G-level H90 fails
    ysharp_proj: object = None


def y_groups(M):
    """Y# = N(G)/N(Gamma), Yflat = (Gamma_K + N(G))/Gamma_K, knot = (Gamma_K & N(G))/N(Gamma)."""
    NG, NGam, GK = M.norm_image, M.norm_gamma, M.gamma_K
    ysharp, to_ysharp = NG.relative_quotient(NGam)
    yflat, _ = (GK + NG).relative_quotient(GK)
    knot, _ = (GK & NG).relative_quotient(NGam)
    exact = ysharp.order() == knot.order() * yflat.order()
    transport = None
    if check_h90(M, "G").holds:
        transport = _transport_is_isomorphism(M, ysharp, to_ysharp)
    return YGroups(ysharp, yflat, knot, exact, transport, to_ysharp)


def _transport_is_isomorphism(M, ysharp, to_ysharp):
    """Is (G/Gamma)/(sigma-1)(G/Gamma) -> N(G)/N(Gamma), induced by N, bijective?"""
    sub = M.gamma + M.one_minus.image()
    C, _ = sub.quotient()
    images = set()
    for c in C.elements():
        g = sub.quotient_lift(c)
        images.add(to_ysharp(M.norm(g)))
    return len(images) == C.order() == ysharp.order()


def _require_h90(M, levels):
    for level in levels:
        r = check_h90(M, level)
        if not r.holds:
            raise HypothesisNotMet(f"Hilbert 90 fails at {level}-level (defect {r.defect})")


def _character_sum(funcs_domain, to_quotient, Q, h, modulus_hint=1):
    """sum over chi in Q^D of sum_{t in domain} chi(to_quotient(t)) h(t)."""
    modulus = lcm(Q.exponent(), h.conductor(), modulus_hint)
    acc = GroupRingAccumulator(modulus)
    chars = dual_characters(Q)
    for t in funcs_domain:
        v = h(t)
        if v.is_zero():
            continue
        q = to_quotient(t)
        terms = sparse_terms(v, modulus)
        for chi in chars:
            acc.add_sparse(terms, chi.phase(q), chi.conductor)
    return acc.result()


def _sum_over(elements, h):
    acc = ZERO
    for x in elements:
        v = h(x)
        if not v.is_zero():
            acc = acc + v
    return acc


@dataclass
class SharpRecord:
    character_side: CyclotomicValue
    counting_side: CyclotomicValue
    spectral: CyclotomicValue
    geometric: CyclotomicValue
    ysharp_order: int
    c: int

    @property
    def holds(self):
        return (
            self.character_side == self.counting_side == self.spectral == self.geometric
            and self.ysharp_order == self.c
        )


def sharp_identity(M, f, h):
    """Counting form of the sharp identity for a matched pair (f, h).

    sum_{chi in (Y#)^D} sum_{t in N(G)} chi(t) h(t) = |Y#| sum_{gamma in N(Gamma)} h(gamma),
    both equal to the spectral side of ``f`` and to c * sum_{N(Gamma)} h.
    """
    if M.kappa != M.G.identity():
        raise HypothesisNotMet("the sharp identity is stated for kappa = identity")
    _require_h90(M, ("G", "Gamma"))
    ysharp, to_ysharp = M.norm_image.relative_quotient(M.norm_gamma)
    NG = M.norm_image.elements()
    NGam = M.norm_gamma.elements()
    char_side = _character_sum(NG, to_ysharp, ysharp, h)
    h_gamma = _sum_over(NGam, h)
    record = SharpRecord(
        char_side,
        h_gamma.scale(ysharp.order()),
        spectral_side(M, f),
        h_gamma.scale(M.c),
        ysharp.order(),
        M.c,
    )
    return record


@dataclass
class FlatRecord:
    character_side: CyclotomicValue
    counting_side: CyclotomicValue
    index: int
    restricted_side: object = None
    restriction_factor: object = None

    @property
    def holds(self):
        ok = self.character_side == self.counting_side
        if self.restricted_side is not None:
            ok = ok and self.character_side == self.restricted_side.scale(self.restriction_factor)
        return ok


def flat_identity(M, h, yflat=None):
    """Degenerate (sigma = id) trace formula, optionally restricted to a subgroup of X_K.

    ``yflat`` is a Subgroup of the group returned by ``M.X()``.
    """
    if M.sigma != GroupHom.identity(M.G):
        raise HypothesisNotMet("the degenerate identity needs sigma = identity")
    XK, proj = M.X()
    GK = M.G_K.elements()
    char_side = _character_sum(GK, proj, XK, h)
    index = M.G_K.order() // M.gamma_K.order()
    counting = _sum_over(M.gamma_K.elements(), h).scale(index)
    record = FlatRecord(char_side, counting, index)
    if yflat is not None:
        if yflat.ambient != XK:
            raise ValueError("yflat must be a subgroup of M.X()[0]")
        off = [x for x in h.support if not yflat.contains(proj(x))]
        if off:
            raise SupportViolation(f"h has mass outside the Yflat preimage, e.g. at {off[0]}")
        Y, incl = yflat.abstract()
        to_y = _subgroup_coordinates(yflat)
        restricted = _character_sum(
            [x for x in GK if yflat.contains(proj(x))], lambda x: to_y(proj(x)), Y, h
        )
        record.restricted_side = restricted
        record.restriction_factor = yflat.index()
    return record


def _subgroup_coordinates(sub):
    S, incl = sub.abstract()
    table = {incl(s): s for s in S.elements()}
    return table.__getitem__


@dataclass
class KappaRecord:
    twists: list
    spectral_sum: CyclotomicValue
    geometric_sum: CyclotomicValue
    kernel_sum: CyclotomicValue
    knot_side: CyclotomicValue
    norm_side: CyclotomicValue
    knot_order: int
    gamma_defect: int
    translates_agree: bool
    literal_side: CyclotomicValue = None

    @property
    def holds(self):
        return (
            self.spectral_sum == self.geometric_sum == self.kernel_sum
            and self.spectral_sum == self.knot_side
            and self.geometric_sum == self.norm_side
            and self.translates_agree
        )


def knot_representatives(M):
    """Lexicographically minimal representatives of (Gamma_K & N(G)) / N(Gamma)."""
    inter = M.gamma_K & M.norm_image
    sub = M.norm_gamma
    _, proj = sub.quotient()
    return _canonical_reps(inter.elements(), proj)


def norm_preimage(M, t):
    for g in M.elements:
        if M.norm(g) == t:
            return g
    raise ValueError(f"{t} is not a norm")


def kappa_sum(M, f, h=None):
    """Sum the kappa_i-twisted trace formulas over representatives of the knot group.

    Needs Hilbert 90 at G-level.  The geometric constant is c times the
    Gamma-level defect, which is 1 exactly when Gamma-level H90 holds.
    """
    if M.kappa != M.G.identity():
        raise HypothesisNotMet("kappa_sum starts from the untwisted module")
    _require_h90(M, ("G",))
    if h is None:
        from .matching import match_function

        h = match_function(M, f)
    G = M.G
    reps = knot_representatives(M)
    twists = [norm_preimage(M, t) for t in reps]
    spec = geo = ker = ZERO
    translates_agree = True
    for kappa in twists:
        Mi = M.with_kappa(kappa)
        s = spectral_side(Mi, f)
        spec = spec + s
        geo = geo + geometric_side(Mi, f)
        ker = ker + kernel_trace(Mi, f)
        translates_agree = translates_agree and s == spectral_side(M, f.translate(kappa))
    NG = M.norm_image
    inter = M.gamma_K & NG
    yflat, to_flat = NG.relative_quotient(inter)
    knot_side = _character_sum(NG.elements(), to_flat, yflat, h).scale(len(reps))
    d_gamma = check_h90(M, "Gamma").defect
    norm_side = _sum_over(inter.elements(), h).scale(M.c * d_gamma)
    ysharp = NG.relative_quotient(M.norm_gamma)[0]
    literal = _sum_over(M.norm_gamma.elements(), h).scale(len(reps) * ysharp.order())
    _ = G
    return KappaRecord(
        twists, spec, geo, ker, knot_side, norm_side, len(reps), d_gamma,
        translates_agree, literal,
    )


# ---------------------------------------------------------------------------
# constants


def _index_in(big, small):
    """[big : small] for small contained in big, INFINITE-aware."""
    Q, _ = big.relative_quotient(small)
    return Q.order()


def crucial_ratio(M, strict=True):
    """[G_K : Gamma_K + N(G)] / [(Gamma_K & N(G)) : N(Gamma)] as a Fraction."""
    num = _index_in(M.G_K, M.gamma_K + M.norm_image)
    den = _index_in(M.gamma_K & M.norm_image, M.norm_gamma)
    ratio = Fraction(num, den)
    _h90_gate(M, ratio, strict)
    return ratio


def crucial_ratio_with_ray(R, strict=True):
    """The same ratio on G x Z; the ray contributes [Z : nZ] to the numerator."""
    R.check_invariants()
    num = _index_in(R.G_K, R.gamma_K + R.norm_image)
    den = _index_in(R.gamma_K & R.norm_image, R.norm_gamma)
    if num is INFINITE or den is INFINITE:
        raise ArithmeticError("ray indices must be finite")
    ratio = Fraction(num, den)
    _h90_gate(R.base, ratio, strict)
    return ratio


def _h90_gate(M, ratio, strict):
    failing = [lvl for lvl in ("G", "Gamma") if not check_h90(M, lvl).holds]
    if failing:
        msg = f"Hilbert 90 fails at {', '.join(failing)}-level; raw ratio {ratio}"
        if strict:
            raise HypothesisNotMet(msg, raw=ratio)
        import warnings

        warnings.warn(msg, stacklevel=3)


# ---------------------------------------------------------------------------
# exterior algebra on the tangent space of Res_{L/K} G_m


def _wedge(a, b):
    """Product of forms stored as {sorted index tuple: coefficient}."""
    out = {}
    for I, x in a.items():
        for J, y in b.items():
            if set(I) & set(J):
                continue
            merged = I + J
            # sign of the sorting permutation = parity of inversions
            inv = sum(1 for i in I for j in J if i > j)
            key = tuple(sorted(merged))
            out[key] = out.get(key, 0) + (-1) ** inv * x * y
    return {k: v for k, v in out.items() if v}


def _one_form(vec):
    return {(i,): c for i, c in enumerate(vec) if c}


def _wedge_all(forms):
    acc = {(): 1}
    for f in forms:
        acc = _wedge(acc, f)
    return acc


def _pull_back_functional(vec, A):
    """The functional x -> vec . (A x)."""
    n = len(A[0]) if A else 0
    return [sum(vec[i] * A[i][j] for i in range(len(vec))) for j in range(n)]


def _evaluate(form, vectors):
    """Value of a k-form on k vectors (sum over basis k-sets of coeff * minor)."""
    from .abelian import determinant

    total = 0
    for I, c in form.items():
        total += c * determinant([[v[i] for v in vectors] for i in I])
    return total


def exterior_constant_report(n):
    """Check each equality of the tangent-space chain for the cyclic shift on Q^n.

    Conventions: sigma(e_i) = e_{i-1} (indices mod n), the map is sigma - 1,
    V = image(sigma - 1) = ker N, B is the restriction of e_1* ^ ... ^ e_{n-1}*
    to V, A is the coordinate on G_m and i, N are the diagonal and the sum.
    """
    if n < 1:
        raise ValueError("n must be positive")
    e = [[int(i == j) for j in range(n)] for i in range(n)]
    sigma = [[int(i == (j - 1) % n) for j in range(n)] for i in range(n)]
    phi = [[sigma[i][j] - e[i][j] for j in range(n)] for i in range(n)]
    steps = {}

    lift_B = _wedge_all([_one_form(e[j]) for j in range(n - 1)])
    # (sigma - 1)^* B, using B = lift_B on V and phi(T) = V
    pulled_pieces = [_pull_back_functional(e[j], phi) for j in range(n - 1)]
    bracket_pieces = [[e[j + 1][i] - e[j][i] for i in range(n)] for j in range(n - 1)]
    steps["pullback_pieces"] = pulled_pieces == bracket_pieces
    pulled = _wedge_all([_one_form(p) for p in pulled_pieces])
    bracket = _wedge_all([_one_form(p) for p in bracket_pieces])
    # independent route: evaluate B(phi e_I) through determinants
    direct = {}
    for I in combinations(range(n), n - 1):
        val = _evaluate(lift_B, [[row[i] for row in phi] for i in I])
        if val:
            direct[I] = val
    steps["pullback_equals_bracket"] = pulled == bracket == direct
    # with the map 1 - sigma every piece changes sign
    neg = [[-c for c in row] for row in phi]
    pulled_neg = _wedge_all([_one_form(_pull_back_functional(e[j], neg)) for j in range(n - 1)])
    sign = (-1) ** (n - 1)
    steps["one_minus_sigma_sign"] = pulled_neg == {k: sign * v for k, v in bracket.items()}

    e1 = _one_form(e[0])
    top = _wedge_all([_one_form(e[j]) for j in range(n)])
    steps["e1_wedge_bracket_is_volume"] = _wedge(e1, bracket) == top

    norm_form = _one_form([1] * n)
    steps["volume_is_lift_wedge_norm"] = _wedge(lift_B, norm_form) == top

    # N^*(A) and i^*(e_1^*): A is the coordinate t on the one-dimensional space
    diag = [[1] for _ in range(n)]
    steps["i_pullback_is_coordinate"] = all(
        _pull_back_functional(e[j], diag) == [1] for j in range(n)
    )
    N = [[1] * n]
    steps["norm_pullback"] = _pull_back_functional([1], N) == [1] * n

    # B ^ N^*(A) does not depend on the lift: compare with e_2^* ^ ... ^ e_n^* rescaled
    V_basis = [phi_col for phi_col in ([row[i] for row in phi] for i in range(n - 1))]
    if n > 1:
        other = _wedge_all([_one_form(e[j]) for j in range(1, n)])
        b_on_V = _evaluate(lift_B, V_basis)
        o_on_V = _evaluate(other, V_basis)
        scale = Fraction(b_on_V, o_on_V) if o_on_V else None
        if scale is None:
            steps["lift_independence"] = False
        else:
            rescaled = {k: v * scale for k, v in other.items()}
            steps["lift_independence"] = _wedge(rescaled, norm_form) == top
    else:
        steps["lift_independence"] = True
    return steps


def exterior_constant_check(n):
    return all(exterior_constant_report(n).values())


# ---------------------------------------------------------------------------
# module construction


def module_from_raw(orders, sigma_raw, n, gamma_raw=(), kappa_raw=None, validate=True,
                    exact_order=True):
    """Build a SigmaModule from a product of cyclic groups Z/orders[i].

    ``sigma_raw`` acts on raw coordinate columns; the result lives in
    Smith coordinates.
    """
    k = len(orders)
    rels = [tuple(o if i == j else 0 for i in range(k)) for j, o in enumerate(orders)]
    G, P, L = presentation_quotient(k, rels)
    S = IntMatrix(sigma_raw, k)
    sigma = GroupHom(G, G, P @ S @ L)
    gamma = [G.reduce(P @ g) for g in gamma_raw]
    kappa = G.reduce(P @ kappa_raw) if kappa_raw is not None else None
    return SigmaModule(G, sigma, n, gamma, kappa, validate, exact_order)


def induced_module(A_orders, n, gamma_raw=(), kappa_raw=None):
    """A^n with the cyclic shift, A = prod Z/A_orders (raw coords block by block)."""
    a = len(A_orders)
    orders = list(A_orders) * n
    size = a * n
    S = [[0] * size for _ in range(size)]
    for block in range(n):
        for i in range(a):
            S[((block + 1) % n) * a + i][block * a + i] = 1
    return module_from_raw(orders, S, n, gamma_raw, kappa_raw)


def _unit_order(u, a):
    if a == 1:
        return 1
    k, x = 1, u % a
    while x != 1 % a:
        x = x * u % a
        k += 1
    return k


def _random_block(rng, n, budget, force_order=None):
    """One sigma-stable block: (orders, sigma matrix, sigma order)."""
    divisors = [d for d in range(1, n + 1) if n % d == 0]
    for _ in range(50):
        kind = rng.choice(["shift", "twisted", "unit", "trivial"])
        a = rng.choice([2, 2, 3, 3, 4, 5, 6, 7, 8, 9])
        if kind in ("shift", "twisted"):
            m = force_order if force_order else rng.choice(divisors)
            if kind == "twisted":
                units = [u for u in range(1, a) if gcd(u, a) == 1]
                u = rng.choice(units)
                if (m * _unit_order(u, a)) not in divisors or (
                    force_order and m * _unit_order(u, a) != force_order
                ):
                    continue
            else:
                u = 1
            if a ** m > budget:
                continue
            S = [[0] * m for _ in range(m)]
            for j in range(m):
                S[(j + 1) % m][j] = u if j == m - 1 else 1
            order = m * _unit_order(u, a) if m > 1 or u != 1 else 1
            if m == 1:
                order = _unit_order(u, a)
            return [a] * m, S, order
        if kind == "unit":
            units = [u for u in range(1, a) if gcd(u, a) == 1 and n % _unit_order(u, a) == 0]
            if force_order:
                units = [u for u in units if _unit_order(u, a) == force_order]
            if not units or a > budget:
                continue
            u = rng.choice(units)
            return [a], [[u]], _unit_order(u, a)
        if force_order and force_order != 1:
            continue
        if a > budget:
            continue
        return [a], [[1]], 1
    return None


def _random_automorphism(G, rng, steps=6):
    """Product of elementary automorphisms e_j -> e_j + c e_i of G."""
    d = G.moduli
    k = G.ngens
    fwd = IntMatrix.identity(k)
    inv = IntMatrix.identity(k)
    for _ in range(steps):
        if k < 2:
            break
        i, j = rng.sample(range(k), 2)
        # e_j -> e_j + c e_i is well defined iff d_i | c * d_j
        step = d[i] // gcd(d[i], d[j])
        c = step * rng.randint(1, 3)
        E = [[int(r == s) for s in range(k)] for r in range(k)]
        E[i][j] = c
        Einv = [[int(r == s) for s in range(k)] for r in range(k)]
        Einv[i][j] = -c
        fwd = IntMatrix(E, k) @ fwd
        inv = inv @ IntMatrix(Einv, k)
    return GroupHom(G, G, fwd), GroupHom(G, G, inv, check=False)


def random_sigma_module(rng, max_order=500, max_n=6):
    """A random valid module with |G| <= max_order and sigma of order n <= max_n."""
    while True:
        n = rng.randint(1, max_n)
        budget = max_order
        orders, blocks = [], []
        first = _random_block(rng, n, budget, force_order=n)
        if first is None:
            continue
        parts = [first]
        size = 1
        for o in first[0]:
            size *= o
        for _ in range(rng.randint(0, 3)):
            blk = _random_block(rng, n, max_order // size)
            if blk is None:
                continue
            bsize = 1
            for o in blk[0]:
                bsize *= o
            if size * bsize > max_order:
                continue
            parts.append(blk)
            size *= bsize
        total = sum(len(p[0]) for p in parts)
        S = [[0] * total for _ in range(total)]
        off = 0
        for p_orders, p_sigma, _ in parts:
            m = len(p_orders)
            for r in range(m):
                for c in range(m):
                    S[off + r][off + c] = p_sigma[r][c]
            orders.extend(p_orders)
            blocks.append(m)
            off += m
        M0 = module_from_raw(orders, S, n, validate=False)
        try:
            derive_structure(M0)
        except InvalidModule:
            continue
        G = M0.G
        alpha, alpha_inv = _random_automorphism(G, rng)
        sigma = alpha * M0.sigma * alpha_inv
        # sigma-stable Gamma
        choice = rng.random()
        if choice < 0.2:
            gens = []
        elif choice < 0.3:
            gens = G.basis()
        else:
            gens = [G.random_element(rng) for _ in range(rng.randint(1, 2))]
        closed = []
        for g in gens:
            x = g
            for _ in range(n):
                closed.append(x)
                x = sigma(x)
        M1 = SigmaModule(G, sigma, n, closed, validate=False)
        kappa = None
        if rng.random() < 0.5:
            cands = [g for g in M1.elements if M1.gamma.contains(M1.norm(g))]
            kappa = rng.choice(cands)
        return SigmaModule(G, sigma, n, closed, kappa)

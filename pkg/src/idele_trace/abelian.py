"""Finitely generated abelian groups in Smith-normal-form coordinates.

A group ``Z/d_1 x ... x Z/d_r x Z^rho`` (with d_1 | d_2 | ... | d_r, d_i >= 2)
is a :class:`FgAbelianGroup`.  Elements are plain tuples of integers, one per
generator, with torsion coordinates reduced into ``[0, d_i)``.  Every map is
a :class:`GroupHom` given by an integer matrix acting on coordinate columns.

All quotient, kernel, image and index computations reduce to
:func:`smith_normal_form` on a presentation matrix; nothing here uses
floating point.
"""

import itertools
from dataclasses import dataclass
from math import gcd, prod

from .cyclotomic import zeta
from .errors import IllFormedHom, NotFinite


class _Infinite:
    """Index of a subgroup whose quotient has positive free rank."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INFINITE"

    def __mul__(self, other):
        if other == 0:
            raise ValueError("INFINITE * 0 is undefined")
        return self

    __rmul__ = __mul__

    def __gt__(self, other):
        return other is not self

    def __lt__(self, other):
        return False

    def __reduce__(self):
        return (_Infinite, ())


INFINITE = _Infinite()


# ---------------------------------------------------------------------------
# integer matrices


class IntMatrix:
    """Immutable rectangular matrix of Python integers."""

    __slots__ = ("rows", "nrows", "ncols")

    def __init__(self, rows, ncols=None):
        rows = tuple(tuple(int(x) for x in r) for r in rows)
        if ncols is None:
            ncols = len(rows[0]) if rows else 0
        if any(len(r) != ncols for r in rows):
            raise ValueError("ragged matrix")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "nrows", len(rows))
        object.__setattr__(self, "ncols", ncols)

    def __setattr__(self, name, value):
        raise AttributeError("IntMatrix is immutable")

    @classmethod
    def identity(cls, n):
        return cls([[int(i == j) for j in range(n)] for i in range(n)], n)

    @classmethod
    def zeros(cls, m, n):
        return cls([[0] * n for _ in range(m)], n)

    @classmethod
    def from_columns(cls, columns, nrows):
        columns = [tuple(c) for c in columns]
        return cls([[c[i] for c in columns] for i in range(nrows)], len(columns))

    @property
    def shape(self):
        return (self.nrows, self.ncols)

    def __getitem__(self, ij):
        i, j = ij
        return self.rows[i][j]

    def column(self, j):
        return tuple(r[j] for r in self.rows)

    def columns(self):
        return [self.column(j) for j in range(self.ncols)]

    def transpose(self):
        return IntMatrix([self.column(j) for j in range(self.ncols)], self.nrows)

    def __matmul__(self, other):
        if isinstance(other, IntMatrix):
            if self.ncols != other.nrows:
                raise ValueError(f"shape mismatch {self.shape} @ {other.shape}")
            cols = other.columns()
            return IntMatrix(
                [[sum(a * b for a, b in zip(r, c)) for c in cols] for r in self.rows],
                other.ncols,
            )
        vec = tuple(other)
        if len(vec) != self.ncols:
            raise ValueError("shape mismatch in matrix-vector product")
        return tuple(sum(a * b for a, b in zip(r, vec)) for r in self.rows)

    def __add__(self, other):
        return IntMatrix(
            [[a + b for a, b in zip(r, s)] for r, s in zip(self.rows, other.rows)], self.ncols
        )

    def __neg__(self):
        return IntMatrix([[-a for a in r] for r in self.rows], self.ncols)

    def __sub__(self, other):
        return self + (-other)

    def __eq__(self, other):
        return isinstance(other, IntMatrix) and self.shape == other.shape and self.rows == other.rows

    def __hash__(self):
        return hash((self.shape, self.rows))

    def tolist(self):
        return [list(r) for r in self.rows]

    def __repr__(self):
        return f"IntMatrix({self.tolist()})"

    def is_diagonal(self):
        return all(self.rows[i][j] == 0 for i in range(self.nrows) for j in range(self.ncols) if i != j)

    def diagonal(self):
        return [self.rows[i][i] for i in range(min(self.nrows, self.ncols))]


def determinant(M):
    """Exact determinant by fraction-free (Bareiss) elimination."""
    a = [list(r) for r in (M.rows if isinstance(M, IntMatrix) else M)]
    n = len(a)
    if n == 0:
        return 1
    if any(len(r) != n for r in a):
        raise ValueError("determinant of a non-square matrix")
    sign, prev = 1, 1
    for k in range(n - 1):
        if a[k][k] == 0:
            swap = next((i for i in range(k + 1, n) if a[i][k] != 0), None)
            if swap is None:
                return 0
            a[k], a[swap] = a[swap], a[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) // prev
        prev = a[k][k]
    return sign * a[n - 1][n - 1]


def smith_normal_form(M, with_inverses=False):
    """Return ``(S, U, V)`` with ``U @ M @ V == S`` in Smith normal form.

    S is diagonal with non-negative entries s_1 | s_2 | ... (trailing zeros
    allowed); U and V are unimodular.  With ``with_inverses=True`` the
    inverses of U and V are appended to the result.

    Pivoting is on the entry of minimal absolute value in the active block.
    """
    if not isinstance(M, IntMatrix):
        M = IntMatrix(M)
    m, n = M.shape
    A = [list(r) for r in M.rows]
    U = [[int(i == j) for j in range(m)] for i in range(m)]
    Ui = [[int(i == j) for j in range(m)] for i in range(m)]
    V = [[int(i == j) for j in range(n)] for i in range(n)]
    Vi = [[int(i == j) for j in range(n)] for i in range(n)]

    def row_swap(i, j):
        A[i], A[j] = A[j], A[i]
        U[i], U[j] = U[j], U[i]
        for r in Ui:
            r[i], r[j] = r[j], r[i]

    def col_swap(i, j):
        for r in A:
            r[i], r[j] = r[j], r[i]
        for r in V:
            r[i], r[j] = r[j], r[i]
        Vi[i], Vi[j] = Vi[j], Vi[i]

    def row_add(dst, src, q):
        # row_dst += q * row_src
        if q == 0:
            return
        A[dst] = [a + q * b for a, b in zip(A[dst], A[src])]
        U[dst] = [a + q * b for a, b in zip(U[dst], U[src])]
        for r in Ui:
            r[src] -= q * r[dst]

    def col_add(dst, src, q):
        # col_dst += q * col_src
        if q == 0:
            return
        for r in A:
            r[dst] += q * r[src]
        for r in V:
            r[dst] += q * r[src]
        Vi[src] = [a - q * b for a, b in zip(Vi[src], Vi[dst])]

    def row_negate(i):
        A[i] = [-a for a in A[i]]
        U[i] = [-a for a in U[i]]
        for r in Ui:
            r[i] = -r[i]

    for t in range(min(m, n)):
        while True:
            best = None
            for i in range(t, m):
                for j in range(t, n):
                    v = A[i][j]
                    if v and (best is None or abs(v) < best[0]):
                        best = (abs(v), i, j)
            if best is None:
                break
            _, i, j = best
            if i != t:
                row_swap(i, t)
            if j != t:
                col_swap(j, t)
            p = A[t][t]
            clean = True
            for i in range(t + 1, m):
                if A[i][t]:
                    row_add(i, t, -(A[i][t] // p))
                    clean = clean and A[i][t] == 0
            for j in range(t + 1, n):
                if A[t][j]:
                    col_add(j, t, -(A[t][j] // p))
                    clean = clean and A[t][j] == 0
            if not clean:
                continue
            bad = next(
                (i for i in range(t + 1, m) for j in range(t + 1, n) if A[i][j] % p),
                None,
            )
            if bad is None:
                break
            row_add(t, bad, 1)
        if best is None:
            break
        if A[t][t] < 0:
            row_negate(t)

    out = (IntMatrix(A, n), IntMatrix(U, m), IntMatrix(V, n))
    if with_inverses:
        out += (IntMatrix(Ui, m), IntMatrix(Vi, n))
    return out


def invariant_factors(M):
    """Nonzero diagonal of the Smith normal form of M."""
    S, _, _ = smith_normal_form(M)
    return [s for s in S.diagonal() if s]


def integer_kernel(M):
    """Basis (as columns) of the lattice {x in Z^n : M x = 0}."""
    if not isinstance(M, IntMatrix):
        M = IntMatrix(M)
    if M.ncols == 0:
        return []
    if M.nrows == 0:
        return [tuple(int(i == j) for i in range(M.ncols)) for j in range(M.ncols)]
    S, _, V = smith_normal_form(M)
    rank = sum(1 for s in S.diagonal() if s)
    return [V.column(j) for j in range(rank, M.ncols)]


def presentation_quotient(ngens, relations):
    """Put ``Z^ngens / <relations>`` into Smith coordinates.

    Returns ``(Q, proj, lift)``: ``proj`` (Q.ngens x ngens) maps a raw
    coordinate vector to Q-coordinates, ``lift`` (ngens x Q.ngens) maps
    Q-coordinates back to a raw representative.
    """
    relations = [tuple(r) for r in relations if any(r)]
    if ngens == 0:
        return FgAbelianGroup((), 0), IntMatrix([], 0), IntMatrix([], 0)
    if not relations:
        ident = IntMatrix.identity(ngens)
        return FgAbelianGroup((), ngens), ident, ident
    P = IntMatrix.from_columns(relations, ngens)
    S, U, _, Ui, _ = smith_normal_form(P, with_inverses=True)
    diag = S.diagonal() + [0] * (ngens - min(S.shape))
    keep = [i for i in range(ngens) if diag[i] != 1]
    torsion = [diag[i] for i in keep if diag[i] != 0]
    free = sum(1 for i in keep if diag[i] == 0)
    Q = FgAbelianGroup(tuple(torsion), free)
    proj = IntMatrix([U.rows[i] for i in keep], ngens)
    lift = IntMatrix([[Ui.rows[r][i] for i in keep] for r in range(ngens)], len(keep))
    return Q, proj, lift


# ---------------------------------------------------------------------------
# groups


class FgAbelianGroup:
    """``Z/d_1 x ... x Z/d_r x Z^free_rank`` with d_1 | ... | d_r, d_i >= 2."""

    __slots__ = ("invariant_factors", "free_rank", "_moduli")

    def __init__(self, invariant_factors=(), free_rank=0):
        factors = tuple(int(d) for d in invariant_factors)
        if any(d < 2 for d in factors):
            raise ValueError(f"invariant factors must be >= 2, got {factors}")
        if any(b % a for a, b in zip(factors, factors[1:])):
            raise ValueError(f"invariant factors must form a divisibility chain, got {factors}")
        if free_rank < 0:
            raise ValueError("free rank must be non-negative")
        object.__setattr__(self, "invariant_factors", factors)
        object.__setattr__(self, "free_rank", int(free_rank))
        object.__setattr__(self, "_moduli", factors + (0,) * free_rank)

    def __setattr__(self, name, value):
        raise AttributeError("FgAbelianGroup is immutable")

    @classmethod
    def from_cyclic_orders(cls, orders, free_rank=0):
        """Group isomorphic to the product of Z/n for n in ``orders``."""
        n = len(orders)
        rels = [tuple(o if i == j else 0 for i in range(n)) for j, o in enumerate(orders)]
        Q, _, _ = presentation_quotient(n, rels)
        return FgAbelianGroup(Q.invariant_factors, Q.free_rank + free_rank)

    @property
    def ngens(self):
        return len(self._moduli)

    @property
    def moduli(self):
        """Per-coordinate modulus, 0 for free coordinates."""
        return self._moduli

    def is_finite(self):
        return self.free_rank == 0

    def order(self):
        return prod(self.invariant_factors) if self.is_finite() else INFINITE

    def exponent(self):
        if not self.is_finite():
            return INFINITE
        return self.invariant_factors[-1] if self.invariant_factors else 1

    def is_trivial(self):
        return self.ngens == 0

    def __eq__(self, other):
        return (
            isinstance(other, FgAbelianGroup)
            and self.invariant_factors == other.invariant_factors
            and self.free_rank == other.free_rank
        )

    def __hash__(self):
        return hash((self.invariant_factors, self.free_rank))

    def __repr__(self):
        parts = [f"Z/{d}" for d in self.invariant_factors]
        if self.free_rank:
            parts.append("Z" if self.free_rank == 1 else f"Z^{self.free_rank}")
        return "FgAbelianGroup(" + (" x ".join(parts) if parts else "trivial") + ")"

    # element arithmetic on coordinate tuples
    def reduce(self, coords):
        coords = tuple(coords)
        if len(coords) != self.ngens:
            raise ValueError(f"expected {self.ngens} coordinates, got {len(coords)}")
        return tuple(c % d if d else c for c, d in zip(coords, self._moduli))

    def identity(self):
        return (0,) * self.ngens

    def add(self, x, y):
        return tuple((a + b) % d if d else a + b for a, b, d in zip(x, y, self._moduli))

    def neg(self, x):
        return tuple((-a) % d if d else -a for a, d in zip(x, self._moduli))

    def sub(self, x, y):
        return tuple((a - b) % d if d else a - b for a, b, d in zip(x, y, self._moduli))

    def mul(self, k, x):
        return tuple((k * a) % d if d else k * a for a, d in zip(x, self._moduli))

    def sum(self, elements):
        acc = self.identity()
        for x in elements:
            acc = self.add(acc, x)
        return acc

    def contains(self, coords):
        coords = tuple(coords)
        return len(coords) == self.ngens and all(
            (0 <= c < d) if d else True for c, d in zip(coords, self._moduli)
        )

    def element_order(self, x):
        if any(c for c, d in zip(x, self._moduli) if d == 0):
            return INFINITE
        out = 1
        for c, d in zip(x, self._moduli):
            k = d // gcd(c, d)
            out = out * k // gcd(out, k)
        return out

    def elements(self):
        """All elements in lexicographic order (finite groups only)."""
        if not self.is_finite():
            raise NotFinite(f"{self!r} is infinite")
        return itertools.product(*(range(d) for d in self.invariant_factors))

    def basis(self):
        return [tuple(int(i == j) for i in range(self.ngens)) for j in range(self.ngens)]

    def relation_columns(self):
        """Columns generating the relation lattice in Z^ngens."""
        return [
            tuple(d if i == j else 0 for i in range(self.ngens))
            for j, d in enumerate(self.invariant_factors)
        ]

    def random_element(self, rng, free_bound=10):
        return tuple(
            rng.randrange(d) if d else rng.randint(-free_bound, free_bound) for d in self._moduli
        )

    def element(self, coords):
        return GroupElement(self, self.reduce(coords))


@dataclass(frozen=True)
class GroupElement:
    """Coordinates bound to their group; arithmetic mirrors the owner's."""

    owner: FgAbelianGroup
    coords: tuple

    def __post_init__(self):
        if not self.owner.contains(self.coords):
            raise ValueError(f"{self.coords} is not reduced in {self.owner!r}")

    def __add__(self, other):
        return GroupElement(self.owner, self.owner.add(self.coords, other.coords))

    def __sub__(self, other):
        return GroupElement(self.owner, self.owner.sub(self.coords, other.coords))

    def __neg__(self):
        return GroupElement(self.owner, self.owner.neg(self.coords))

    def __rmul__(self, k):
        return GroupElement(self.owner, self.owner.mul(k, self.coords))

    def order(self):
        return self.owner.element_order(self.coords)


def _in_relation_lattice(group, vec):
    return all((c % d == 0) if d else c == 0 for c, d in zip(vec, group.moduli))


# ---------------------------------------------------------------------------
# homomorphisms


class GroupHom:
    """Homomorphism acting on coordinate columns by an integer matrix."""

    __slots__ = ("source", "target", "matrix")

    def __init__(self, source, target, matrix, check=True):
        if not isinstance(matrix, IntMatrix):
            matrix = IntMatrix(matrix, source.ngens)
        if matrix.shape != (target.ngens, source.ngens):
            raise IllFormedHom(
                f"matrix shape {matrix.shape} does not match {target.ngens}x{source.ngens}"
            )
        # store reduced entries on torsion rows
        rows = [
            [a % d for a in r] if d else list(r) for r, d in zip(matrix.rows, target.moduli)
        ]
        object.__setattr__(self, "source", source)
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "matrix", IntMatrix(rows, source.ngens))
        if check:
            self.check()

    def __setattr__(self, name, value):
        raise AttributeError("GroupHom is immutable")

    def check(self):
        """Raise IllFormedHom unless every source relation maps into the target's."""
        for j, d in enumerate(self.source.moduli):
            col = self.matrix.column(j)
            if d == 0:
                continue
            if not _in_relation_lattice(self.target, [d * c for c in col]):
                raise IllFormedHom(
                    f"generator {j} has order {d} but its image {col} does not"
                )

    @classmethod
    def from_images(cls, source, target, images, check=True):
        images = [target.reduce(x) for x in images]
        if len(images) != source.ngens:
            raise IllFormedHom("need one image per source generator")
        return cls(source, target, IntMatrix.from_columns(images, target.ngens), check)

    @classmethod
    def identity(cls, group):
        return cls(group, group, IntMatrix.identity(group.ngens), check=False)

    @classmethod
    def zero(cls, source, target):
        return cls(source, target, IntMatrix.zeros(target.ngens, source.ngens), check=False)

    def __call__(self, x):
        return self.target.reduce(self.matrix @ x)

    def compose(self, inner):
        """``self o inner``."""
        if inner.target != self.source:
            raise IllFormedHom("composition of incompatible homomorphisms")
        return GroupHom(inner.source, self.target, self.matrix @ inner.matrix, check=False)

    def __mul__(self, other):
        return self.compose(other)

    def __add__(self, other):
        return GroupHom(self.source, self.target, self.matrix + other.matrix, check=False)

    def __sub__(self, other):
        return GroupHom(self.source, self.target, self.matrix - other.matrix, check=False)

    def __neg__(self):
        return GroupHom(self.source, self.target, -self.matrix, check=False)

    def __pow__(self, k):
        if self.source != self.target:
            raise IllFormedHom("powers need an endomorphism")
        if k < 0:
            raise ValueError("use inverse() for negative powers")
        out = GroupHom.identity(self.source)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def __eq__(self, other):
        if not isinstance(other, GroupHom):
            return NotImplemented
        if self.source != other.source or self.target != other.target:
            return False
        return all(self(b) == other(b) for b in self.source.basis())

    def __hash__(self):
        return hash((self.source, self.target, self.matrix))

    def __repr__(self):
        return f"GroupHom({self.source!r} -> {self.target!r}, {self.matrix.tolist()})"

    def image(self):
        return Subgroup(self.target, [self(b) for b in self.source.basis()])

    def kernel(self):
        m = self.source.ngens
        if self.target.ngens == 0:
            return Subgroup(self.source, self.source.basis())
        if m == 0:
            return Subgroup(self.source, [])
        rel_cols = self.target.relation_columns()
        block = IntMatrix(
            [list(r) + [-c[i] for c in rel_cols] for i, r in enumerate(self.matrix.rows)],
            m + len(rel_cols),
        )
        gens = [v[:m] for v in integer_kernel(block)]
        return Subgroup(self.source, gens)

    def cokernel(self):
        return self.image().quotient()

    def is_injective(self):
        return self.kernel().is_trivial()

    def is_surjective(self):
        return self.image().index() == 1

    def is_automorphism(self):
        return self.source == self.target and self.is_injective() and self.is_surjective()

    def order(self, bound=10_000):
        """Multiplicative order of an automorphism (searched up to ``bound``)."""
        ident = GroupHom.identity(self.source)
        cur = self
        for k in range(1, bound + 1):
            if cur == ident:
                return k
            cur = cur * self
        raise ValueError("automorphism order exceeds search bound")

    def inverse(self):
        """Inverse of an automorphism of a finite group (by enumeration of basis preimages)."""
        if not self.is_automorphism():
            raise IllFormedHom("only automorphisms are invertible")
        k = self.order()
        return self ** (k - 1)

    def as_permutation(self, elements=None):
        """Map each element to its image (finite source)."""
        elements = list(self.source.elements()) if elements is None else elements
        return {x: self(x) for x in elements}


# ---------------------------------------------------------------------------
# subgroups


class Subgroup:
    """The subgroup of ``ambient`` generated by ``generators``."""

    def __init__(self, ambient, generators):
        self.ambient = ambient
        self.generators = tuple(ambient.reduce(g) for g in generators)
        self._quot = None
        self._abstract = None

    def __repr__(self):
        return f"Subgroup(ambient={self.ambient!r}, generators={list(self.generators)})"

    # quotient ambient / self
    def _quotient_data(self):
        if self._quot is None:
            rels = self.ambient.relation_columns() + list(self.generators)
            self._quot = presentation_quotient(self.ambient.ngens, rels)
        return self._quot

    def quotient(self):
        """``(Q, proj)`` with ``proj: ambient -> Q`` the canonical projection."""
        Q, P, _ = self._quotient_data()
        return Q, GroupHom(self.ambient, Q, P, check=False)

    def quotient_lift(self, q):
        """A representative in the ambient group of the class ``q``."""
        Q, _, L = self._quotient_data()
        return self.ambient.reduce(L @ q)

    def index(self):
        Q, _, _ = self._quotient_data()
        return Q.order()

    def contains(self, x):
        Q, P, _ = self._quotient_data()
        return Q.reduce(P @ x) == Q.identity()

    def __contains__(self, x):
        return self.contains(x)

    def abstract(self):
        """``(S, incl)`` with S in Smith form and ``incl: S -> ambient`` injective."""
        if self._abstract is None:
            G = self.ambient
            t = len(self.generators)
            if t == 0:
                S = FgAbelianGroup()
                self._abstract = (S, GroupHom(S, G, IntMatrix.zeros(G.ngens, 0), check=False))
            else:
                A = IntMatrix.from_columns(self.generators, G.ngens)
                rel_cols = G.relation_columns()
                if G.ngens == 0:
                    kernel = [tuple(int(i == j) for i in range(t)) for j in range(t)]
                else:
                    block = IntMatrix(
                        [list(r) + [-c[i] for c in rel_cols] for i, r in enumerate(A.rows)],
                        t + len(rel_cols),
                    )
                    kernel = [v[:t] for v in integer_kernel(block)]
                S, _, lift = presentation_quotient(t, kernel)
                incl = GroupHom(S, G, A @ lift, check=False)
                self._abstract = (S, incl)
        return self._abstract

    def order(self):
        S, _ = self.abstract()
        return S.order()

    def is_trivial(self):
        return all(g == self.ambient.identity() for g in self.generators)

    def elements(self):
        S, incl = self.abstract()
        return sorted({incl(s) for s in S.elements()})

    def __add__(self, other):
        return Subgroup(self.ambient, self.generators + other.generators)

    def intersection(self, other):
        G = self.ambient
        a, b = list(self.generators), list(other.generators)
        if not a or not b:
            return Subgroup(G, [])
        # solve A x - B y in relations; A x is the common element
        cols = a + [G.neg(y) for y in b] + G.relation_columns()
        M = IntMatrix.from_columns(cols, G.ngens)
        gens = []
        for v in integer_kernel(M):
            x = v[: len(a)]
            gens.append(G.reduce(IntMatrix.from_columns(a, G.ngens) @ x))
        return Subgroup(G, gens)

    def __and__(self, other):
        return self.intersection(other)

    def __eq__(self, other):
        return (
            isinstance(other, Subgroup)
            and self.ambient == other.ambient
            and all(other.contains(g) for g in self.generators)
            and all(self.contains(g) for g in other.generators)
        )

    def __le__(self, other):
        return all(other.contains(g) for g in self.generators)

    def image(self, hom):
        return Subgroup(hom.target, [hom(g) for g in self.generators])

    def preimage(self, hom):
        """``hom^{-1}(self)`` as a subgroup of ``hom.source``."""
        _, proj = self.quotient()
        return (proj * hom).kernel()

    def relative_quotient(self, sub):
        """``(self / sub, proj)`` where ``proj`` is defined on ``self.ambient``-coordinates.

        ``sub`` must be contained in ``self``.  Returns the abstract quotient
        group and a function sending elements of ``self`` to its coordinates.
        """
        S, incl = self.abstract()
        inner = sub.preimage(incl)
        Q, proj_S = inner.quotient()
        solver = _Solver(self, incl)

        def to_quotient(x):
            return proj_S(solver(x))

        return Q, to_quotient

    def is_stable_under(self, hom):
        return all(self.contains(hom(g)) for g in self.generators)


class _Solver:
    """Express elements of a subgroup in coordinates of its abstract model."""

    def __init__(self, subgroup, incl):
        self.subgroup = subgroup
        self.incl = incl
        self.S = incl.source
        self._table = None
        if self.S.is_finite() and self.S.order() <= 50_000:
            self._table = {incl(s): s for s in self.S.elements()}

    def __call__(self, x):
        x = self.subgroup.ambient.reduce(x)
        if self._table is not None:
            try:
                return self._table[x]
            except KeyError:
                raise ValueError(f"{x} is not in the subgroup") from None
        return self._solve(x)

    def _solve(self, x):
        G = self.subgroup.ambient
        A = self.incl.matrix
        t = self.S.ngens
        cols = A.columns() + G.relation_columns()
        M = IntMatrix.from_columns(cols, G.ngens)
        S, U, V = smith_normal_form(M)
        y = U @ x
        diag = S.diagonal()
        z = []
        for i in range(M.ncols):
            if i < len(diag) and diag[i]:
                if y[i] % diag[i]:
                    raise ValueError(f"{x} is not in the subgroup")
                z.append(y[i] // diag[i])
            else:
                if i < len(y) and y[i]:
                    raise ValueError(f"{x} is not in the subgroup")
                z.append(0)
        for i in range(len(diag), len(y)):
            if y[i]:
                raise ValueError(f"{x} is not in the subgroup")
        sol = V @ z
        return self.S.reduce(sol[:t])


def subgroup_index(G, generators):
    """Index of the subgroup generated by ``generators``; INFINITE when unbounded."""
    return Subgroup(G, generators).index()


def quotient(G, generators):
    return Subgroup(G, generators).quotient()


@dataclass(frozen=True)
class GroupCalculus:
    kernel: Subgroup
    image: Subgroup
    cokernel: FgAbelianGroup
    cokernel_projection: GroupHom
    kernel_group: FgAbelianGroup
    image_group: FgAbelianGroup


def group_calculus(h):
    """Kernel, image and cokernel of a well-defined homomorphism."""
    h.check()
    ker = h.kernel()
    im = h.image()
    coker, proj = im.quotient()
    return GroupCalculus(ker, im, coker, proj, ker.abstract()[0], im.abstract()[0])


def direct_sum(groups):
    """``(G, injections, projections)`` for the product of ``groups``."""
    groups = list(groups)
    offsets = list(itertools.accumulate([0] + [g.ngens for g in groups]))
    total = offsets[-1]
    rels = []
    for g, off in zip(groups, offsets):
        for col in g.relation_columns():
            rels.append((0,) * off + col + (0,) * (total - off - g.ngens))
    G, P, L = presentation_quotient(total, rels)
    injections, projections = [], []
    for g, off in zip(groups, offsets):
        emb = [[int(r == off + c) for c in range(g.ngens)] for r in range(total)]
        injections.append(GroupHom(g, G, P @ IntMatrix(emb, g.ngens), check=False))
        sel = IntMatrix([L.rows[off + r] for r in range(g.ngens)], G.ngens)
        projections.append(GroupHom(G, g, sel, check=False))
    return G, injections, projections


def block_endomorphism(sum_data, blocks):
    """Endomorphism of a direct sum acting blockwise by ``blocks``."""
    G, inj, proj = sum_data
    images = []
    for b in G.basis():
        acc = G.identity()
        for i, p, blk in zip(inj, proj, blocks):
            acc = G.add(acc, i(blk(p(b))))
        images.append(acc)
    return GroupHom.from_images(G, G, images, check=False)


# ---------------------------------------------------------------------------
# groups given by enumeration


def abelian_structure(generators, op, identity, target_order=None):
    """Smith-form model of the finite abelian group generated by ``generators``.

    ``op`` is the (commutative) group law on hashable elements.  Returns
    ``(G, log, exp)`` where ``log`` maps elements to G-coordinates and ``exp``
    is the inverse dictionary.  Generation stops early once ``target_order``
    elements have been reached.
    """
    table = {identity: ()}
    gens, rel_orders, rel_vectors = [], [], []
    for c in generators:
        if target_order is not None and len(table) >= target_order:
            break
        if c in table:
            continue
        powers = [identity]
        cur = c
        while cur not in table:
            powers.append(cur)
            cur = op(cur, c)
        m = len(powers)
        back = table[cur]
        new_table = {}
        for h, vec in table.items():
            for j, pw in enumerate(powers):
                new_table[op(h, pw) if j else h] = vec + (j,)
        gens.append(c)
        rel_orders.append(m)
        rel_vectors.append(back)
        table = new_table
    n = len(gens)
    rels = []
    for i, (m, back) in enumerate(zip(rel_orders, rel_vectors)):
        col = [0] * n
        col[i] = m
        for j, b in enumerate(back):
            col[j] -= b
        rels.append(tuple(col))
    G, P, _ = presentation_quotient(n, rels)
    log = {x: G.reduce(P @ vec) if n else () for x, vec in table.items()}
    exp = {v: x for x, v in log.items()}
    if len(exp) != len(log):
        raise ArithmeticError("group law is not abelian or not well defined")
    return G, log, exp


# ---------------------------------------------------------------------------
# characters


class Character:
    """Character of a finite group: generator g_i maps to zeta_{d_i}^{a_i}."""

    __slots__ = ("owner", "exponents", "_e", "_steps")

    def __init__(self, owner, exponents):
        if not owner.is_finite():
            raise NotFinite("characters are defined on finite groups only")
        exps = tuple(int(a) % d for a, d in zip(exponents, owner.invariant_factors))
        if len(exps) != owner.ngens:
            raise ValueError("one exponent per generator is required")
        e = owner.exponent()
        object.__setattr__(self, "owner", owner)
        object.__setattr__(self, "exponents", exps)
        object.__setattr__(self, "_e", e)
        object.__setattr__(
            self, "_steps", tuple(a * (e // d) for a, d in zip(exps, owner.invariant_factors))
        )

    def __setattr__(self, name, value):
        raise AttributeError("Character is immutable")

    @property
    def conductor(self):
        """The exponent e of the owner: values are e-th roots of unity."""
        return self._e

    def phase(self, x):
        """k with value(x) = zeta_e^k, 0 <= k < e."""
        return sum(s * c for s, c in zip(self._steps, x)) % self._e

    def value(self, x):
        return zeta(self._e, self.phase(x))

    def __call__(self, x):
        return self.value(x)

    def __mul__(self, other):
        if other.owner != self.owner:
            raise ValueError("characters of different groups")
        return Character(self.owner, [a + b for a, b in zip(self.exponents, other.exponents)])

    def conjugate(self):
        return Character(self.owner, [-a for a in self.exponents])

    def is_trivial(self):
        return not any(self.exponents)

    def is_real(self):
        return all((2 * a) % d == 0 for a, d in zip(self.exponents, self.owner.invariant_factors))

    def __eq__(self, other):
        return (
            isinstance(other, Character)
            and self.owner == other.owner
            and self.exponents == other.exponents
        )

    def __hash__(self):
        return hash((self.owner, self.exponents))

    def __repr__(self):
        return f"Character({self.owner!r}, {self.exponents})"

    def pullback(self, hom):
        """The character ``self o hom`` of ``hom.source``."""
        if hom.target != self.owner:
            raise ValueError("character owner does not match the homomorphism target")
        S = hom.source
        exps = []
        e = self._e
        for j, d in enumerate(S.invariant_factors):
            p = self.phase(hom.matrix.column(j))
            if (d * p) % e:
                raise IllFormedHom("pullback does not respect the source relations")
            exps.append(p * d // e)
        return Character(S, exps)


def dual_characters(G):
    """All characters of the finite group G, in lexicographic exponent order."""
    if not G.is_finite():
        raise NotFinite(f"{G!r} has free rank {G.free_rank}")
    return [Character(G, a) for a in G.elements()]


def characters_trivial_on(G, H):
    """Characters of G vanishing on the subgroup H (lifted from G/H)."""
    if not isinstance(H, Subgroup):
        H = Subgroup(G, H)
    Q, proj = H.quotient()
    return [chi.pullback(proj) for chi in dual_characters(Q)]


def characters_fixed_by(G, alpha):
    """Characters eta with eta o alpha == eta (direct enumeration)."""
    out = []
    for eta in dual_characters(G):
        if eta.pullback(alpha) == eta:
            out.append(eta)
    return out

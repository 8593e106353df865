"""Named finite sigma-modules used by the CLI suites and the tests.

Every builder is deterministic; the searched families take an explicit seed.
"""

import random
from itertools import product

from .cyclotomic import CyclotomicValue
from .twisted import (
    TestFunction,
    _random_in,
    check_h90,
    induced_module,
    module_from_raw,
    random_sigma_module,
    y_groups,
)

# (A orders, n) pairs for the induced family; |A|^n stays <= 4096
INDUCED_SHAPES = [
    ([2], 2), ([3], 2), ([4], 2), ([2, 2], 2), ([6], 2), ([5], 2), ([8], 2),
    ([2], 3), ([3], 3), ([4], 3), ([2, 2], 3),
    ([2], 4), ([3], 4), ([2], 5), ([3], 5), ([2], 6), ([3], 6),
]


def _block_raw(A_orders, n, a_vec):
    """The raw coordinates of (a, a, ..., a) in A^n."""
    return tuple(a_vec) * n


def _single_raw(A_orders, n, a_vec, block=0):
    out = [0] * (len(A_orders) * n)
    for i, c in enumerate(a_vec):
        out[block * len(A_orders) + i] = c
    return tuple(out)


def induced_fixtures():
    """(name, module) for A^n with the shift and three choices of Gamma.

    Gamma is 0, the diagonal copy of A, or B^n with B = 2A (when 2A is proper
    and nonzero).
    """
    out = []
    for A, n in INDUCED_SHAPES:
        tag = "x".join(map(str, A))
        basis = [tuple(int(i == j) for j in range(len(A))) for i in range(len(A))]
        out.append((f"induced[{tag}]^{n}/0", induced_module(A, n)))
        diag = [_block_raw(A, n, b) for b in basis]
        out.append((f"induced[{tag}]^{n}/diag", induced_module(A, n, diag)))
        if any(a % 2 == 0 and a > 2 for a in A):
            sub = [tuple(2 * c for c in b) for b in basis]
            gens = [_single_raw(A, n, s, blk) for s in sub for blk in range(n)]
            out.append((f"induced[{tag}]^{n}/2A", induced_module(A, n, gens)))
    return out


def swap_fixture(a=3, gamma="diag"):
    """(Z/a)^2 with the swap."""
    if gamma == "diag":
        return induced_module([a], 2, [(1, 1)])
    return induced_module([a], 2)


def h90_failure(ell):
    """Z/ell with sigma = id and n = ell: N = 0, so the G-level defect is ell."""
    return module_from_raw([ell], [[1]], ell, exact_order=False)


def degenerate_fixtures():
    """(name, module) with sigma = id and n = 1, and a range of Gamma."""
    out = []
    for orders in ([4], [6], [2, 2], [2, 4], [3, 3], [12], [2, 6]):
        k = len(orders)
        I = [[int(i == j) for j in range(k)] for i in range(k)]
        tag = "x".join(map(str, orders))
        out.append((f"degenerate[{tag}]/0", module_from_raw(orders, I, 1)))
        for g in product(*(range(o) for o in orders)):
            if any(g) and all(c in (0, 1, 2) for c in g):
                out.append((f"degenerate[{tag}]/<{','.join(map(str, g))}>", module_from_raw(orders, I, 1, [g])))
                break
    return out


def knot_fixtures(seed=5, count=6, attempts=3000, max_order=64):
    """Random modules with G-level H90 and a nontrivial knot group, found by search."""
    rng = random.Random(seed)
    out = []
    for i in range(attempts):
        M = random_sigma_module(rng, max_order=max_order)
        if M.kappa != M.G.identity():
            M = M.with_kappa(None)
        if y_groups(M).knot.order() > 1 and check_h90(M, "G").holds:
            out.append((f"knot[{seed}:{i}]", M))
            if len(out) >= count:
                break
    return out


def random_fixtures(seed, count, max_order=500, max_n=6):
    rng = random.Random(seed)
    return [(f"random[{seed}:{i}]", random_sigma_module(rng, max_order, max_n)) for i in range(count)]


def bridge_test_function(M, rng, size=20, conductor=12):
    """Half the support at theta(g), g in Gamma + (sigma-1)G, half uniform.

    Uniform points on a large module almost never meet the support of the
    trace sides, which would make all three sides zero.
    """
    G = M.G
    points = []
    for _ in range(size):
        g = G.add(_random_in(M.gamma, rng), M.one_minus(G.random_element(rng)))
        points.append(M.theta(g))
    points += [G.random_element(rng) for _ in range(size)]
    values = {}
    for x in points:
        values[x] = CyclotomicValue(conductor, [rng.randint(-3, 3) for _ in range(conductor)])
    return TestFunction(G, values)


# (a, d, a is a norm from Q(sqrt d)); a is an int or a fraction string.
# Every entry is conclusive at height 10^4: norms have a small solution and
# the others fail a local symbol.
HASSE_CORPUS = [
    (2, -163, False), (3, -163, False), (-1, -11, False), (11, -11, True), (2, -11, False),
    (3, -11, True), (5, -11, True), ("5/4", -11, True), (-1, -7, False), ("1/2", -7, True),
    (11, -7, True), (2, -7, True), (3, -7, False), (7, -7, True), (2, -6, False),
    ("2/3", -6, True), (3, -6, False), (7, -6, True), (2, -5, False), ("2/3", -5, True),
    (3, -5, False), ("3/7", -5, True), (5, -5, True), ("5/4", -5, True), (-1, -3, False),
    (13, -3, True), (2, -3, False), (3, -3, True), ("3/7", -3, True), (7, -3, True),
    (-1, -2, False), ("1/2", -2, True), (11, -2, True), (17, -2, True), (2, -2, True),
    ("2/3", -2, True), (3, -2, True), (5, -2, False), (-1, -1, False), ("1/2", -1, True),
    (13, -1, True), (17, -1, True), (2, -1, True), (3, -1, False), (5, -1, True),
    ("5/4", -1, True), (-1, 2, True), (-2, 2, True), (-7, 2, True), ("1/2", 2, True),
    (17, 2, True), (2, 2, True), (3, 2, False), (5, 2, False), (7, 2, True), (-2, 3, True),
    (-3, 3, True), (13, 3, True), (2, 3, False), ("2/3", 3, True), (3, 3, False),
    (-1, 5, True), (11, 5, True), (2, 5, False), (3, 5, False), (5, 5, True),
    ("5/4", 5, True), (-1, 6, False), (-2, 6, True), (2, 6, False), (3, 6, True),
    (-1, 7, False), (-3, 7, True), (-7, 7, True), ("1/2", 7, True), (2, 7, True),
    (3, 7, False), ("3/7", 7, True), (-1, 10, True), (2, 10, False), ("2/3", 10, True),
    (3, 10, False), (-1, 13, True), (-3, 13, True), (13, 13, True), (17, 13, True),
    (2, 13, False), (3, 13, True), (5, 13, False),
]

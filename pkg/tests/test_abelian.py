import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from idele_trace.abelian import (
    INFINITE,
    FgAbelianGroup,
    GroupHom,
    IntMatrix,
    Subgroup,
    abelian_structure,
    characters_fixed_by,
    characters_trivial_on,
    determinant,
    direct_sum,
    dual_characters,
    group_calculus,
    integer_kernel,
    invariant_factors,
    presentation_quotient,
    smith_normal_form,
    subgroup_index,
)
from idele_trace.cyclotomic import ONE, ZERO, value_sum
from idele_trace.errors import IllFormedHom, NotFinite

from oracles import brute_kernel_size, determinantal_divisors

small_matrix = st.integers(1, 4).flatmap(
    lambda m: st.integers(1, 4).flatmap(
        lambda n: st.lists(st.lists(st.integers(-12, 12), min_size=n, max_size=n), min_size=m, max_size=m)
    )
)


@settings(max_examples=150, deadline=None)
@given(small_matrix)
def test_snf_is_a_unimodular_diagonalisation(rows):
    M = IntMatrix(rows)
    S, U, V = smith_normal_form(M)
    assert U @ M @ V == S
    assert S.is_diagonal()
    assert abs(determinant(U)) == 1 and abs(determinant(V)) == 1
    diag = S.diagonal()
    assert all(s >= 0 for s in diag)
    for a, b in zip(diag, diag[1:]):
        assert (b == 0) or (a != 0 and b % a == 0)


@settings(max_examples=150, deadline=None)
@given(small_matrix)
def test_invariant_factors_match_determinantal_divisors(rows):
    # d_k = s_1 ... s_k, with the minors computed by Laplace expansion
    S, _, _ = smith_normal_form(IntMatrix(rows))
    diag = S.diagonal()
    prods, acc = [], 1
    for s in diag:
        acc *= s
        prods.append(acc)
    assert prods == determinantal_divisors(rows)


@settings(max_examples=100, deadline=None)
@given(small_matrix)
def test_integer_kernel_is_saturated_and_killed(rows):
    M = IntMatrix(rows)
    K = integer_kernel(M)
    for v in K:
        assert all(sum(r[j] * v[j] for j in range(M.ncols)) == 0 for r in rows)
    rank = sum(1 for s in smith_normal_form(M)[0].diagonal() if s)
    assert len(K) == M.ncols - rank


def test_snf_fixed_values():
    assert invariant_factors([[2, 0], [0, 3]]) == [1, 6]
    assert invariant_factors([[4, 6], [6, 4]]) == [2, 10]
    G, _, _ = presentation_quotient(2, [(2, 0), (0, 3)])
    assert G.invariant_factors == (6,) and G.order() == 6
    G, _, _ = presentation_quotient(3, [(2, 2, 0)])
    assert G.invariant_factors == (2,) and G.free_rank == 2
    assert determinant([[1, 2], [3, 4]]) == -2


def test_group_basics():
    G = FgAbelianGroup.from_cyclic_orders([4, 6])
    assert G.invariant_factors == (2, 12)
    assert G.order() == 24 and G.exponent() == 12
    assert len(list(G.elements())) == 24
    x = G.basis()[1]
    assert G.element_order(x) == 12
    assert G.add(G.mul(12, x), G.identity()) == G.identity()
    Z = FgAbelianGroup((), 1)
    assert Z.order() is INFINITE
    with pytest.raises(NotFinite):
        dual_characters(Z)


orders = st.lists(st.integers(2, 6), min_size=1, max_size=3)


@settings(max_examples=60, deadline=None)
@given(orders, orders, st.randoms(use_true_random=False))
def test_hom_kernel_matches_brute_force(src, tgt, rnd):
    S = FgAbelianGroup.from_cyclic_orders(src)
    T = FgAbelianGroup.from_cyclic_orders(tgt)
    # a well-defined map: images of generators of order d must be d-torsion
    images = []
    for d in S.invariant_factors:
        cands = [t for t in T.elements() if T.reduce(tuple(d * c for c in t)) == T.identity()]
        images.append(rnd.choice(cands))
    h = GroupHom.from_images(S, T, images)
    calc = group_calculus(h)
    assert calc.kernel.order() == brute_kernel_size(S.invariant_factors, T.invariant_factors, images)
    assert calc.kernel.order() * calc.image.order() == S.order()
    assert calc.cokernel.order() * calc.image.order() == T.order()


def test_ill_formed_hom_is_rejected():
    Z2 = FgAbelianGroup((2,))
    Z3 = FgAbelianGroup((3,))
    with pytest.raises(IllFormedHom):
        GroupHom.from_images(Z2, Z3, [(1,)])


@settings(max_examples=60, deadline=None)
@given(orders, st.randoms(use_true_random=False))
def test_subgroup_index_and_lattice(o, rnd):
    G = FgAbelianGroup.from_cyclic_orders(o)
    gens = [G.random_element(rnd) for _ in range(rnd.randint(0, 2))]
    H = Subgroup(G, gens)
    closure = {G.identity()}
    while True:
        new = {G.add(a, g) for a in closure for g in gens} | closure
        if new == closure:
            break
        closure = new
    assert H.order() == len(closure)
    assert set(H.elements()) == closure
    assert subgroup_index(G, gens) * H.order() == G.order()
    Q, proj = H.quotient()
    assert Q.order() == H.index()
    assert all(proj(h) == Q.identity() for h in closure)
    K = Subgroup(G, [G.random_element(rnd)])
    assert (H + K).order() * (H & K).order() == H.order() * K.order()


def test_direct_sum_round_trip():
    A = FgAbelianGroup.from_cyclic_orders([2])
    B = FgAbelianGroup.from_cyclic_orders([4, 3])
    G, inj, proj = direct_sum([A, B])
    assert G.order() == 24
    for x in B.elements():
        assert proj[1](inj[1](x)) == x
        assert proj[0](inj[1](x)) == A.identity()


def test_abelian_structure_of_units_mod_15():
    units = [u for u in range(1, 15) if u % 3 and u % 5]
    G, log, exp = abelian_structure(units, lambda a, b: a * b % 15, 1)
    assert G.invariant_factors == (2, 4)
    for a, b in itertools.product(units, repeat=2):
        assert log[a * b % 15] == G.add(log[a], log[b])


@pytest.mark.parametrize("o", [[6], [2, 4], [3, 3], [2, 2, 2]])
def test_character_orthogonality(o):
    G = FgAbelianGroup.from_cyclic_orders(o)
    chars = dual_characters(G)
    assert len(chars) == G.order()
    for chi in chars:
        s = value_sum([chi.value(x) for x in G.elements()])
        assert s == (ONE.scale(G.order()) if chi.is_trivial() else ZERO)
    for x in G.elements():
        s = value_sum([chi.value(x) for chi in chars])
        assert s == (ONE.scale(G.order()) if x == G.identity() else ZERO)


def test_characters_trivial_on_and_fixed():
    G = FgAbelianGroup.from_cyclic_orders([3, 3])
    swap = GroupHom.from_images(G, G, [G.basis()[1], G.basis()[0]])
    fixed = characters_fixed_by(G, swap)
    assert len(fixed) == 3
    H = Subgroup(G, [G.sub(G.basis()[0], G.basis()[1])])
    assert sorted(map(repr, fixed)) == sorted(map(repr, characters_trivial_on(G, H)))


def test_random_elements_are_reduced():
    rng = random.Random(3)
    G = FgAbelianGroup.from_cyclic_orders([4, 10])
    for _ in range(20):
        assert G.contains(G.random_element(rng))

import random
import warnings

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from idele_trace.abelian import FgAbelianGroup, GroupHom, Subgroup
from idele_trace.cyclotomic import ZERO, GroupRingAccumulator, sparse_terms
from idele_trace.errors import HypothesisNotMet, InvalidModule, SupportViolation
from idele_trace.fixtures import (
    degenerate_fixtures,
    h90_failure,
    induced_fixtures,
    knot_fixtures,
    swap_fixture,
)
from idele_trace.matching import match_function
from idele_trace.twisted import (
    RaySigmaModule,
    SigmaModule,
    TestFunction,
    _spectral_numpy,
    check_h90,
    crucial_ratio,
    crucial_ratio_with_ray,
    derive_structure,
    exterior_constant_check,
    exterior_constant_report,
    fixed_characters,
    flat_identity,
    geometric_side,
    induced_module,
    kappa_sum,
    kernel_trace,
    module_from_raw,
    random_sigma_module,
    random_test_function,
    sharp_identity,
    spectral_side,
    verify_trace_formula,
    y_groups,
)

from oracles import brute_h90_defects, brute_sides, numeric


def delta0(M):
    return TestFunction.indicator(M.G, [M.G.identity()])


def trivial_module(orders, gamma=()):
    k = len(orders)
    return module_from_raw(orders, [[int(i == j) for j in range(k)] for i in range(k)], 1, gamma)


# -- module structure ---------------------------------------------------------


def test_swap_fixed_points_are_the_diagonal():
    M = swap_fixture(3, gamma=None)
    assert M.G_K.order() == 3
    diag = {M.G.reduce(x) for x in M.G_K.elements()}
    assert all(M.sigma(x) == x for x in diag)


def test_identity_sigma_has_full_fixed_group():
    M = module_from_raw([4], [[1]], 3, exact_order=False)
    assert M.G_K.order() == 4
    g = M.G.basis()[0]
    assert M.norm(g) == M.G.mul(3, g)


def test_kappa_with_norm_outside_gamma_is_rejected():
    with pytest.raises(InvalidModule):
        induced_module([3], 2, kappa_raw=(1, 0))
    r = derive_structure(induced_module([3], 2).with_kappa(None), raise_on_error=False)
    assert r.valid


def test_sigma_order_is_enforced():
    with pytest.raises(InvalidModule):
        module_from_raw([2], [[1]], 2)
    with pytest.raises(InvalidModule):
        module_from_raw([5], [[2]], 2)  # 2 has order 4 mod 5


def test_gamma_must_be_stable():
    G = FgAbelianGroup.from_cyclic_orders([2, 2])
    swap = GroupHom.from_images(G, G, [G.basis()[1], G.basis()[0]])
    with pytest.raises(InvalidModule):
        SigmaModule(G, swap, 2, [G.basis()[0]])


# -- the three sides on small worked examples ---------------------------------


def test_swap_example_all_sides_two():
    M = induced_module([2], 2)
    f = delta0(M)
    assert kernel_trace(M, f) == 2
    assert spectral_side(M, f) == 2
    assert len(fixed_characters(M)) == 2
    assert M.c == 2
    assert geometric_side(M, f) == 2
    assert verify_trace_formula(M, f).success


@pytest.mark.parametrize("orders", [[2], [4], [2, 3], [3, 3]])
def test_identity_sigma_sides_equal_group_order(orders):
    M = trivial_module(orders)
    f = delta0(M)
    r = verify_trace_formula(M, f)
    assert r.spectral == r.geometric == r.kernel_trace == M.G.order()
    assert r.fixed_character_count == M.G.order()


def test_zero_function_gives_zero():
    M = induced_module([3], 3)
    f = TestFunction.zero(M.G)
    r = verify_trace_formula(M, f)
    assert r.spectral == r.geometric == r.kernel_trace == ZERO


# -- oracle comparisons ---------------------------------------------------------


@pytest.mark.parametrize("seed", range(40))
def test_sides_match_brute_force_oracle(seed):
    rng = random.Random(seed)
    M = random_sigma_module(rng, max_order=96)
    f = random_test_function(M, rng)
    spec, geo, ker = brute_sides(M, f)
    assert abs(numeric(spectral_side(M, f)) - spec) < 1e-6
    assert abs(numeric(geometric_side(M, f)) - geo) < 1e-6
    assert abs(numeric(kernel_trace(M, f)) - ker) < 1e-6


@pytest.mark.parametrize("seed", range(40))
def test_structural_routes_match_enumeration(seed):
    rng = random.Random(100 + seed)
    M = random_sigma_module(rng, max_order=300)
    f = random_test_function(M, rng, rational=seed % 2 == 0)
    a = verify_trace_formula(M, f, method="enumerate")
    b = verify_trace_formula(M, f, method="structural")
    assert (a.spectral, a.geometric, a.kernel_trace) == (b.spectral, b.geometric, b.kernel_trace)
    assert len(fixed_characters(M, "enumerate")) == len(fixed_characters(M, "structural"))


@pytest.mark.parametrize("seed", range(10))
def test_numpy_spectral_path_matches_loop(seed):
    rng = random.Random(200 + seed)
    M = random_sigma_module(rng, max_order=400)
    f = random_test_function(M, rng, support_size=12)
    G = M.G
    etas = fixed_characters(M)
    loop = spectral_side(M, f)
    acc = GroupRingAccumulator(_common_modulus(M, f))
    pulled = [(M.sigma_inverse(G.sub(u, M.kappa)), sparse_terms(v, acc.modulus)) for u, v in f.values.items()]
    _spectral_numpy(acc, etas, pulled)
    assert acc.result() == loop


def _common_modulus(M, f):
    from math import lcm

    return lcm(M.G.exponent(), f.conductor())


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_trace_identity_property(seed):
    rng = random.Random(seed)
    M = random_sigma_module(rng, max_order=200)
    f = random_test_function(M, rng, rational=True)
    assert verify_trace_formula(M, f, rng=rng).success


def test_sides_are_linear():
    rng = random.Random(7)
    M = random_sigma_module(rng, max_order=120)
    f = random_test_function(M, rng)
    g = random_test_function(M, rng)
    total = TestFunction(M.G, {x: f(x) + g(x) for x in set(f.values) | set(g.values)})
    assert spectral_side(M, total) == spectral_side(M, f) + spectral_side(M, g)


# -- Hilbert 90 -----------------------------------------------------------------


def test_h90_identity_on_z2_fails_with_defect_two():
    r = check_h90(module_from_raw([2], [[1]], 2, exact_order=False))
    assert not r.holds and r.defect == 2


@pytest.mark.parametrize("ell", [2, 3, 5, 7])
def test_h90_failure_family(ell):
    r = check_h90(h90_failure(ell), "G")
    assert (r.holds, r.defect) == (False, ell)


@pytest.mark.parametrize("name,M", induced_fixtures(), ids=lambda v: v if isinstance(v, str) else "")
def test_induced_modules_satisfy_h90(name, M):
    assert check_h90(M, "G").holds


def test_ray_alone_satisfies_h90():
    R = RaySigmaModule(induced_module([2], 3))
    r = check_h90(R, "ray")
    assert r.holds and r.defect == 1


@pytest.mark.parametrize("seed", range(60))
def test_h90_defects_match_counting(seed):
    M = random_sigma_module(random.Random(300 + seed), max_order=64)
    assert (check_h90(M, "G").defect, check_h90(M, "Gamma").defect) == brute_h90_defects(M)


# -- Y groups and the identities -------------------------------------------------


def test_y_groups_with_trivial_gamma():
    M = induced_module([3], 2)
    Y = y_groups(M)
    assert Y.knot.order() == 1 and Y.exact
    assert Y.ysharp.order() == Y.yflat.order()


def test_y_groups_swap_diagonal():
    Y = y_groups(swap_fixture(3))
    assert Y.ysharp.order() == 1 and Y.knot.order() == 1 and Y.exact


@pytest.fixture(scope="module")
def knots():
    return knot_fixtures()


def test_knot_search_finds_modules_and_exactness_holds(knots):
    assert len(knots) >= 2
    for _, M in knots:
        Y = y_groups(M)
        assert Y.knot.order() > 1 and Y.exact
        assert not check_h90(M, "Gamma").holds


def test_sharp_identity_induced_example():
    # A = Z/4, Gamma = B x B with B = 2A
    M = induced_module([4], 2, [(2, 0), (0, 2)])
    f = delta0(M)
    r = sharp_identity(M, f, match_function(M, f))
    assert r.holds and r.ysharp_order == 2 == M.c


def test_sharp_identity_zero_function():
    M = induced_module([4], 2, [(2, 0), (0, 2)])
    f = TestFunction.zero(M.G)
    r = sharp_identity(M, f, match_function(M, f))
    assert r.character_side == r.counting_side == ZERO


def test_sharp_identity_needs_h90():
    M = module_from_raw([2], [[1]], 2, [(1,)], exact_order=False)
    with pytest.raises(HypothesisNotMet):
        sharp_identity(M, delta0(M), TestFunction.zero(M.G))


def test_flat_identity_indicator():
    for _, M in degenerate_fixtures():
        r = flat_identity(M, delta0(M))
        assert r.holds and r.character_side == r.index == M.c


def test_flat_identity_restriction_factor():
    M = trivial_module([4])
    X, proj = M.X()
    yflat = Subgroup(X, [X.mul(2, X.basis()[0])])
    h = TestFunction.indicator(M.G, [x for x in M.elements if yflat.contains(proj(x))])
    r = flat_identity(M, h, yflat)
    assert r.restriction_factor == 2 and r.holds
    with pytest.raises(SupportViolation):
        flat_identity(M, TestFunction.indicator(M.G, [M.G.basis()[0]]), yflat)


def test_flat_identity_requires_identity_sigma():
    with pytest.raises(HypothesisNotMet):
        flat_identity(induced_module([2], 2), delta0(induced_module([2], 2)))


def test_kappa_sum_with_trivial_knot_is_sharp():
    M = induced_module([4], 2, [(2, 0), (0, 2)])
    f = random_test_function(M, random.Random(1))
    k = kappa_sum(M, f)
    s = sharp_identity(M, f, match_function(M, f))
    assert k.holds and k.knot_order == 1
    assert k.spectral_sum == s.spectral


def test_kappa_sum_on_knot_modules(knots):
    literal_disagrees = False
    for i, (_, M) in enumerate(knots):
        f = random_test_function(M, random.Random(i))
        r = kappa_sum(M, f)
        assert r.holds
        assert len(r.twists) == r.knot_order > 1
        literal_disagrees |= r.literal_side != r.knot_side
    # the literal |knot| * |Y#| * sum_{N(Gamma)} h form does not survive a knot
    assert literal_disagrees


def test_kappa_sum_zero_function(knots):
    M = knots[0][1]
    r = kappa_sum(M, TestFunction.zero(M.G))
    assert r.spectral_sum == r.geometric_sum == r.kernel_sum == ZERO


# -- constants ------------------------------------------------------------------


def test_crucial_ratio_swap():
    assert crucial_ratio(swap_fixture(3)) == 1


@pytest.mark.parametrize("n", range(2, 7))
def test_ray_ratio_is_degree(n):
    assert crucial_ratio_with_ray(RaySigmaModule(induced_module([2], n))) == n


def test_crucial_ratio_gate():
    M = module_from_raw([2], [[1]], 2, exact_order=False)
    with pytest.raises(HypothesisNotMet) as err:
        crucial_ratio(M)
    assert err.value.raw == 2
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        assert crucial_ratio(M, strict=False) == 2
    assert caught


@pytest.mark.parametrize("n", range(1, 7))
def test_exterior_chain(n):
    steps = exterior_constant_report(n)
    assert all(steps.values()), steps
    assert exterior_constant_check(n)

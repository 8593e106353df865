import random

import pytest

from idele_trace.cyclotomic import ZERO, CyclotomicValue
from idele_trace.errors import HypothesisNotMet, PlaceMismatch, RamifiedPlace, WellDefinednessError
from idele_trace.matching import (
    FactorizedFunction,
    PlaceSystem,
    assemble_global,
    check_support,
    local_orbital,
    match_factorized,
    match_function,
    split_local_module,
    verify_factorization,
    verify_unit_matching,
)
from idele_trace.twisted import (
    TestFunction,
    check_h90,
    induced_module,
    module_from_raw,
    random_sigma_module,
    random_test_function,
)


def delta0(M):
    return TestFunction.indicator(M.G, [M.G.identity()])


def test_local_orbital_split_example():
    M = split_local_module([4], 2)
    B = [M.G.reduce(M.G.mul(2, x)) for x in M.elements]
    f = TestFunction.indicator(M.G, set(B))
    assert local_orbital(M, M.G.identity(), f) == 2


def test_local_orbital_trivial_cases():
    M = split_local_module([3], 2)
    assert local_orbital(M, M.G.identity(), TestFunction.zero(M.G)) == ZERO
    everything = TestFunction.indicator(M.G, M.elements)
    assert local_orbital(M, M.G.identity(), everything) == M.G.order() // M.G_K.order()


def test_local_orbital_by_brute_force():
    rng = random.Random(4)
    for _ in range(10):
        M = random_sigma_module(rng, max_order=80).with_kappa(None)
        f = random_test_function(M, rng)
        G = M.G
        # sum over all of G, divided by |G_K|, counts each coset once
        for delta in rng.sample(M.elements, 3):
            total = ZERO
            for y in M.elements:
                total = total + f(G.add(G.sub(delta, y), M.sigma(y)))
            assert local_orbital(M, delta, f).scale(M.G_K.order()) == total


def test_match_split_identity_indicator():
    M = split_local_module([3], 2)
    h = match_function(M, delta0(M))
    assert h.values == {M.G.identity(): CyclotomicValue.rational(1)}


def test_match_zero_function():
    M = split_local_module([2], 3)
    assert match_function(M, TestFunction.zero(M.G)).is_zero()


def test_match_detects_h90_failure():
    M = module_from_raw([2], [[1]], 2, exact_order=False)
    f = TestFunction.indicator(M.G, [M.G.identity()])
    # N = 0, so both elements share the fiber over 0 but f tells them apart
    with pytest.raises(WellDefinednessError):
        match_function(M, f)
    with pytest.raises(HypothesisNotMet):
        match_function(M, TestFunction.indicator(M.G, M.elements))


@pytest.mark.parametrize("seed", range(20))
def test_match_is_unique_and_supported_on_norms(seed):
    rng = random.Random(seed)
    while True:
        M = random_sigma_module(rng, max_order=120).with_kappa(None)
        if check_h90(M, "G").holds:
            break
    f = random_test_function(M, rng)
    h = match_function(M, f)
    order = list(M.elements)
    rng.shuffle(order)
    assert match_function(M, f, order=order).values == h.values
    assert check_support(M, h)
    for delta in rng.sample(M.elements, min(5, len(M.elements))):
        assert h(M.norm(delta)) == local_orbital(M, delta, f)


def two_place_system(a=2):
    return PlaceSystem(["v1", "v2"], [split_local_module([a], 2), split_local_module([a], 2)])


def test_factorization_exhaustive_small_systems():
    rng = random.Random(11)
    for a, n in [(2, 2), (3, 2), (2, 3)]:
        S = PlaceSystem(["v", "w"], [split_local_module([a], n), split_local_module([a], n)])
        assert S.G.order() <= 4096
        F = FactorizedFunction(S, [random_test_function(M, rng) for M in S.modules])
        assert F.spot_check(rng)
        M = S.global_module()
        for delta in M.elements:
            assert verify_factorization(S, F, delta)


def test_factorization_three_places():
    rng = random.Random(12)
    S = PlaceSystem("abc", [split_local_module([2], 2), induced_module([3], 2), split_local_module([2], 2)])
    F = FactorizedFunction(S, [random_test_function(M, rng) for M in S.modules])
    for delta in rng.sample(list(S.G.elements()), 30):
        assert verify_factorization(S, F, delta)


def test_single_place_is_trivially_equal():
    rng = random.Random(13)
    S = PlaceSystem(["v"], [split_local_module([4], 2)])
    F = FactorizedFunction(S, [random_test_function(S.modules[0], rng)])
    assert all(verify_factorization(S, F, d) for d in S.G.elements())


def test_assembled_matched_function():
    rng = random.Random(14)
    S = two_place_system(3)
    F = FactorizedFunction(S, [random_test_function(M, rng) for M in S.modules])
    matched = match_factorized(S, F)
    assert all(matched.supported_on_norms)
    h = assemble_global(S, matched)
    for x in S.G.elements():
        assert h(x) == matched(S.split(x))
    # a zero component kills the product
    zero = [matched.components[0], TestFunction.zero(S.modules[1].G)]
    assert assemble_global(S, zero).is_zero()


def test_place_mismatch():
    with pytest.raises(PlaceMismatch):
        PlaceSystem(["v", "w"], [split_local_module([2], 2), split_local_module([2], 3)])
    with pytest.raises(PlaceMismatch):
        PlaceSystem(["v"], [])
    S = two_place_system()
    with pytest.raises(PlaceMismatch):
        FactorizedFunction(S, [delta0(S.modules[0])])
    with pytest.raises(PlaceMismatch):
        assemble_global(S, [delta0(S.modules[0])])


def test_unit_matching():
    assert verify_unit_matching(2, 5, 3)
    assert verify_unit_matching(-1, 5, 2)
    assert verify_unit_matching(-1, 3, 2)
    with pytest.raises(RamifiedPlace):
        verify_unit_matching(-1, 2, 3)


def test_unit_matching_split_fiber_size():
    from idele_trace.local_fields import norm_fiber_sizes

    sizes = norm_fiber_sizes(-1, 5, 2)
    assert set(sizes.values()) == {20}
    assert len(sizes) == 20

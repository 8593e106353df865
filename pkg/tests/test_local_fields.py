import json
import random
from fractions import Fraction
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from idele_trace.errors import BadInput, RamifiedPlace
from idele_trace.local_fields import (
    INERT,
    INFINITY,
    RAMIFIED,
    SPLIT,
    LocalUnitLevel,
    QuotientRing,
    enumerate_norms,
    frobenius_action,
    fundamental_lemma_check,
    hilbert_places,
    hilbert_symbol,
    local_extension,
    local_norm_image,
    local_symbol_norm_test,
    quadratic_norm_residues,
    splitting_type,
    stable_norm_image,
    valuation,
)

from oracles import brute_norm_residues, hilbert_by_conic, totient

CORPUS = json.loads((Path(__file__).parent / "data" / "conic_corpus.json").read_text())


@pytest.mark.parametrize("d,p,expected", [(-1, 5, SPLIT), (2, 5, INERT), (-1, 2, RAMIFIED),
                                          (-1, 3, INERT), (5, 5, RAMIFIED), (5, 11, SPLIT),
                                          (-7, 2, SPLIT), (-3, 2, INERT), (("cubic", 7), 13, SPLIT),
                                          (("cubic", 7), 2, INERT), (("cubic", 9), 3, RAMIFIED)])
def test_splitting_type_examples(d, p, expected):
    assert splitting_type(d, p) == expected


@pytest.mark.parametrize("d", [-1, 2, -2, 3, -3, 5, -5, 7, -7, 13, -163])
def test_splitting_type_by_root_count(d):
    # odd p not dividing d: split iff x^2 = d has a root mod p
    for p in [3, 5, 7, 11, 13, 17, 19, 23, 29, 31]:
        if d % p == 0:
            assert splitting_type(d, p) == RAMIFIED
            continue
        has_root = any((x * x - d) % p == 0 for x in range(p))
        assert splitting_type(d, p) == (SPLIT if has_root else INERT)


def test_hilbert_examples():
    assert hilbert_symbol(-1, -1, 2) == -1
    assert hilbert_symbol(-1, -1, INFINITY) == -1
    assert hilbert_symbol(2, 5, 5) == -1
    for b in [-7, -1, 2, 3, 10, Fraction(3, 5)]:
        for v in [INFINITY, 2, 3, 5, 7]:
            assert hilbert_symbol(1, b, v) == 1
    with pytest.raises(BadInput):
        hilbert_symbol(0, 3, 3)


@pytest.mark.parametrize("a,b,p,expected", CORPUS)
def test_hilbert_matches_conic_corpus(a, b, p, expected):
    assert hilbert_symbol(a, b, p) == expected


def test_corpus_is_reproduced_by_the_oracle():
    for a, b, p, expected in CORPUS[::10]:
        assert hilbert_by_conic(a, b, p) == expected


nonzero = st.integers(-500, 500).filter(bool)
rationals = st.builds(Fraction, nonzero, st.integers(1, 60))


@settings(max_examples=300, deadline=None)
@given(rationals, rationals)
def test_product_formula(a, b):
    total = 1
    for v in hilbert_places(a, b):
        total *= hilbert_symbol(a, b, v)
    assert total == 1


@settings(max_examples=200, deadline=None)
@given(nonzero, nonzero, nonzero, st.sampled_from([INFINITY, 2, 3, 5, 7, 11]))
def test_hilbert_bilinear_and_symmetric(a, b, c, v):
    assert hilbert_symbol(a, b, v) == hilbert_symbol(b, a, v)
    assert hilbert_symbol(a * b, c, v) == hilbert_symbol(a, c, v) * hilbert_symbol(b, c, v)
    assert hilbert_symbol(a, -a, v) == 1
    assert hilbert_symbol(a * 9, b, v) == hilbert_symbol(a, b, v)


def test_valuation():
    assert valuation(48, 2) == 4
    assert valuation(Fraction(5, 27), 3) == -3
    assert valuation(7, 5) == 0


@settings(max_examples=80, deadline=None)
@given(st.sampled_from([(2, 3), (2, 5), (3, 4), (5, 3), (7, 2), (11, 2)]), st.data())
def test_unit_level_log_exp(pk, data):
    p, k = pk
    L = LocalUnitLevel(p, k)
    assert L.order() == totient(p**k)
    u = data.draw(st.sampled_from(L.units()))
    w = data.draw(st.sampled_from(L.units()))
    assert L.exp(L.log(u)) == u
    assert L.log(u * w % p**k) == L.carrier.add(L.log(u), L.log(w))


def test_quotient_ring_norm_is_multiplicative():
    rng = random.Random(1)
    R = QuotientRing((1, 0, 1), 125)  # t^2 + 1
    for _ in range(50):
        a = (rng.randrange(125), rng.randrange(125))
        b = (rng.randrange(125), rng.randrange(125))
        assert R.norm(R.mul(a, b)) == R.norm(a) * R.norm(b) % 125
    assert R.norm((3, 4)) == 25


def test_norm_image_inert_example():
    ext = local_extension(2, 5, 2)
    r = local_norm_image(ext, 2)
    assert r.residues() == [u for u in range(25) if u % 5]
    assert r.valuation_step == 2 and r.index == 2


def test_norm_image_ramified_example():
    r = local_norm_image(local_extension(-1, 2, 3), 3)
    assert r.residues() == [1, 5] and r.index == 2
    assert r.contains(5) and not r.contains(3) and r.contains(2)


def test_norm_image_split_example():
    r = local_norm_image(local_extension(-1, 5, 3), 3)
    assert r.index == 1 and r.valuation_step == 1
    assert len(r.residues()) == 100


@pytest.mark.parametrize("d", [-1, 2, -2, 3, -3, 5, -5, 7, -7, 13])
@pytest.mark.parametrize("p,k", [(2, 3), (2, 4), (3, 2), (3, 3), (5, 2), (7, 2), (13, 1)])
def test_norm_routes_match_enumeration(d, p, k):
    ext = local_extension(d, p, k)
    a = local_norm_image(ext, k, "generators")
    b = local_norm_image(ext, k, "enumerate")
    assert a.residues() == b.residues()
    assert a.index == b.index
    assert set(a.residues()) == brute_norm_residues(d, p, k)


def test_enumerated_norms_of_cubic():
    assert set(enumerate_norms((-1, -2, 1, 1), 2, 3)) == {1, 3, 5, 7}
    r = stable_norm_image(local_extension(("cubic", 9), 3))
    assert r.index == 3


def test_local_norm_image_at_infinity_is_rejected():
    with pytest.raises(BadInput):
        local_norm_image(local_extension(-1, INFINITY))


def test_quadratic_norm_residues_fast_path():
    for d in [-1, 2, 5, -7]:
        assert quadratic_norm_residues(d, 3, 2) == brute_norm_residues(d, 3, 2)


def test_fundamental_lemma_examples():
    assert fundamental_lemma_check(2, 5, 3)
    assert fundamental_lemma_check(-1, 5, 3)
    with pytest.raises(RamifiedPlace):
        fundamental_lemma_check(-1, 2, 3)
    assert fundamental_lemma_check(("cubic", 7), 2)
    assert fundamental_lemma_check(("cubic", 13), 5)


def test_local_symbol_agrees_with_norm_image():
    for d, p in [(-1, 2), (-1, 3), (2, 3), (5, 5), (-5, 5), (3, 2), (-2, 2)]:
        r = stable_norm_image(local_extension(d, p))
        for x in [-1, 2, -2, 3, 5, 6, 7, Fraction(1, 3), 10, -15, 12, Fraction(-5, 4)]:
            assert r.contains(x) == local_symbol_norm_test(d, x, p), (d, p, x)


def test_frobenius_lift():
    F = frobenius_action(2, 5, 2)
    assert F.order == 2
    R = F.ring
    t = R.t()
    assert F(t) == F.image_of_t
    # Frobenius is a ring map fixing Z/25
    a, b = (3, 7), (11, 2)
    assert F(R.mul(a, b)) == R.mul(F(a), F(b))
    assert F(R.scalar(6)) == R.scalar(6)
    with pytest.raises(BadInput):
        frobenius_action(-1, 5)
    with pytest.raises(RamifiedPlace):
        frobenius_action(-1, 2)

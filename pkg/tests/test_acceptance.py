"""The nine acceptance criteria, each printing one PASS/FAIL line.

Run under pytest, or directly with ``python3 tests/test_acceptance.py``.
Every check is exact; the runtime bound is part of a criterion where one
is stated.
"""

import random
import shutil
import subprocess
import sys
import time
from fractions import Fraction
from pathlib import Path

import pytest
from sympy import primerange

sys.path.insert(0, str(Path(__file__).parent))

from idele_trace.fixtures import (  # noqa: E402
    HASSE_CORPUS,
    INDUCED_SHAPES,
    bridge_test_function,
    degenerate_fixtures,
    h90_failure,
    induced_fixtures,
    knot_fixtures,
)
from idele_trace.global_cft import HasseStatus, build_sigma_module, cubic_data, field_data, hasse_check, norm_index  # noqa: E402
from idele_trace.local_fields import (  # noqa: E402
    RAMIFIED,
    default_precision,
    fundamental_lemma_check,
    hilbert_places,
    hilbert_symbol,
    local_extension,
    local_norm_image,
    splitting_type,
)
from idele_trace.matching import match_function  # noqa: E402
from idele_trace.twisted import (  # noqa: E402
    RaySigmaModule,
    check_h90,
    crucial_ratio,
    crucial_ratio_with_ray,
    exterior_constant_check,
    flat_identity,
    induced_module,
    kappa_sum,
    random_sigma_module,
    random_test_function,
    sharp_identity,
    verify_trace_formula,
)

from oracles import brute_norm_residues  # noqa: E402

LOCAL_DS = [-1, 2, -2, 3, -3, 5, -5, 7, -7, 13]
GLOBAL_DS = LOCAL_DS + [-163]
ENUMERATION_LIMIT = 5 * 10**6


def _timed(fn):
    start = time.perf_counter()
    ok, detail = fn()
    return ok, detail, time.perf_counter() - start


def criterion_1():
    """Trace formula on 1000 random modules plus the induced fixtures."""
    count, failures = 0, []
    for i in range(1000):
        rng = random.Random(f"acceptance:{i}")
        M = random_sigma_module(rng, max_order=500, max_n=6)
        assert M.G.order() <= 500 and M.n <= 6
        f = random_test_function(M, rng)
        if not verify_trace_formula(M, f, rng=rng).success:
            failures.append(i)
        count += 1
    fixtures = induced_fixtures()
    for j, (name, M) in enumerate(fixtures):
        f = random_test_function(M, random.Random(f"acceptance:fixture:{j}"))
        if not verify_trace_formula(M, f).success:
            failures.append(name)
    detail = f"{count} random + {len(fixtures)} induced modules, {len(failures)} failures"
    return not failures, detail


def criterion_2():
    """G-level H90 on every induced module; defect ell for Z/ell, sigma = id, n = ell."""
    induced = [check_h90(M, "G").holds for _, M in induced_fixtures()]
    controls = {ell: check_h90(h90_failure(ell), "G") for ell in (2, 3, 5)}
    ok = all(induced) and all(not r.holds and r.defect == ell for ell, r in controls.items())
    defects = {ell: r.defect for ell, r in controls.items()}
    return ok, f"{sum(induced)}/{len(induced)} induced hold, control defects {defects}"


def _both_h90(M):
    return check_h90(M, "G").holds and check_h90(M, "Gamma").holds


def criterion_3():
    """Sharp, kappa, flat and crucial identities; ray ratio n for n = 2..6."""
    pool = induced_fixtures() + degenerate_fixtures() + knot_fixtures()
    both = [(name, M) for name, M in pool if _both_h90(M)]
    bad = []
    for i, (name, M) in enumerate(both):
        rng = random.Random(f"acceptance:sharp:{i}")
        f = random_test_function(M, rng)
        if M.kappa == M.G.identity():
            if not sharp_identity(M, f, match_function(M, f)).holds:
                bad.append(("sharp", name))
            if not kappa_sum(M, f).holds:
                bad.append(("kappa", name))
        if crucial_ratio(M) != 1:
            bad.append(("crucial", name))
        if crucial_ratio_with_ray(RaySigmaModule(M)) != M.n:
            bad.append(("ray", name))
    degenerate = degenerate_fixtures()
    for i, (name, M) in enumerate(degenerate):
        h = random_test_function(M, random.Random(f"acceptance:flat:{i}"))
        if not flat_identity(M, h).holds:
            bad.append(("flat", name))
    ratios = {n: crucial_ratio_with_ray(RaySigmaModule(induced_module([2], n))) for n in range(2, 7)}
    bad += [("ray-n", n) for n, r in ratios.items() if r != n]
    detail = f"{len(both)} fixtures with both H90 levels, {len(degenerate)} degenerate, ray ratios {dict((n, str(r)) for n, r in ratios.items())}"
    if bad:
        detail += f", failing {bad[:5]}"
    return not bad, detail


def criterion_4():
    """Exterior constant chain for n = 1..6 in under 1 second."""
    start = time.perf_counter()
    results = [exterior_constant_check(n) for n in range(1, 7)]
    elapsed = time.perf_counter() - start
    return all(results) and elapsed < 1, f"n = 1..6 {results}, {elapsed:.3f} s"


def _ramified_k(p):
    k = default_precision(p)
    while k > 1 and p ** (2 * k + 2) > ENUMERATION_LIMIT:
        k -= 1
    return k


def criterion_5():
    """Local layer in under 2 minutes."""
    start = time.perf_counter()
    rng = random.Random("acceptance:hilbert")
    product_bad = 0
    for _ in range(500):
        a = Fraction(rng.choice([-1, 1]) * rng.randint(1, 10**4), rng.randint(1, 100))
        b = Fraction(rng.choice([-1, 1]) * rng.randint(1, 10**4), rng.randint(1, 100))
        total = 1
        for v in hilbert_places(a, b):
            total *= hilbert_symbol(a, b, v)
        product_bad += total != 1

    import json

    corpus = json.loads((Path(__file__).parent / "data" / "conic_corpus.json").read_text())
    corpus_bad = sum(hilbert_symbol(a, b, p) != s for a, b, p, s in corpus)

    lemma_count, lemma_bad = 0, []
    for d in LOCAL_DS:
        for p in primerange(2, 100):
            if splitting_type(d, p) == RAMIFIED:
                continue
            lemma_count += 1
            if not fundamental_lemma_check(d, p):
                lemma_bad.append((d, p))

    ram_count, ram_bad = 0, []
    for d in LOCAL_DS:
        for p in field_data(d).ramified:
            k = _ramified_k(p)
            if p ** (2 * k + 2) > ENUMERATION_LIMIT:
                continue
            ext = local_extension(d, p, k)
            gen = local_norm_image(ext, k, "generators")
            enum = local_norm_image(ext, k, "enumerate")
            ram_count += 1
            if gen.residues() != enum.residues() or set(gen.residues()) != brute_norm_residues(d, p, k):
                ram_bad.append((d, p, k))
    example = local_norm_image(local_extension(-1, 2, 3), 3).residues()
    if example != [1, 5]:
        ram_bad.append(("example", example))

    elapsed = time.perf_counter() - start
    ok = not (product_bad or corpus_bad or lemma_bad or ram_bad) and len(corpus) == 200 and elapsed < 120
    detail = (f"product formula 500 pairs ({product_bad} bad), corpus {len(corpus)} ({corpus_bad} bad), "
              f"fundamental lemma {lemma_count} places ({len(lemma_bad)} bad), ramified {ram_count} fixtures "
              f"({len(ram_bad)} bad), d=-1 p=2 image {example}, {elapsed:.1f} s")
    return ok, detail


def criterion_6():
    """Norm index = degree with B = 1000, in under 1 minute."""
    start = time.perf_counter()
    bad = []
    for L in [field_data(d) for d in GLOBAL_DS] + [cubic_data(f) for f in (7, 9, 13)]:
        r = norm_index(L, 1000)
        if r.index != L.degree or not r.stabilized:
            bad.append((L.data, r.index, r.stabilized))
    elapsed = time.perf_counter() - start
    return not bad and elapsed < 60, f"{len(GLOBAL_DS)} quadratic + 3 cubic fields, failing {bad}, {elapsed:.1f} s"


def criterion_7():
    """Hasse oracle CONSISTENT on the curated corpus, none INCONCLUSIVE."""
    counts = {s: 0 for s in HasseStatus}
    for a, d, _ in HASSE_CORPUS:
        counts[hasse_check(Fraction(a), d, 10**4)[0]] += 1
    ok = len(HASSE_CORPUS) >= 50 and counts[HasseStatus.CONSISTENT] == len(HASSE_CORPUS)
    return ok, f"{len(HASSE_CORPUS)} pairs, " + ", ".join(f"{s.value} {n}" for s, n in counts.items())


def criterion_8():
    """Arithmetic bridge for Q(i) and Q(sqrt -5) in under 2 minutes."""
    start = time.perf_counter()
    parts, ok = [], True
    for d, S in [(-1, [2, 5]), (-5, [2, 3, 5])]:
        M, _ = build_sigma_module(field_data(d), S)
        h90 = check_h90(M, "G").holds and check_h90(M, "Gamma").holds
        rng = random.Random(f"acceptance:bridge:{d}")
        traces = [verify_trace_formula(M, bridge_test_function(M, rng)) for _ in range(2)]
        trace_ok = all(r.success for r in traces) and any(not r.spectral.is_zero() for r in traces)
        ratio = crucial_ratio_with_ray(RaySigmaModule(M))
        ok = ok and h90 and trace_ok and ratio == 2
        parts.append(f"d={d} S={S} |G|={M.G.order()} h90={h90} trace={trace_ok} ray={ratio}")
    elapsed = time.perf_counter() - start
    return ok and elapsed < 120, "; ".join(parts) + f", {elapsed:.1f} s"


def criterion_9(tmp=None):
    """Two `idele-trace all` runs with the same config give byte-identical report.json."""
    import tempfile

    exe = shutil.which("idele-trace")
    cmd = [exe] if exe else [sys.executable, "-m", "idele_trace.cli"]
    base = Path(tmp or tempfile.mkdtemp())
    config = base / "run.toml"
    config.write_text(
        "discriminants = [-1, 5, -3]\ncubic_conductors = [7]\nrandom_instances = 20\n"
        "local_prime_bound = 30\nprime_bound = 300\nseed = 11\n"
    )
    outputs = []
    for name in ("first", "second"):
        proc = subprocess.run(cmd + ["all", "--config", str(config), "--out", str(base / name)],
                              capture_output=True, text=True)
        if proc.returncode != 0:
            return False, f"run {name} exited {proc.returncode}: {proc.stdout.strip()} {proc.stderr.strip()}"
        outputs.append((base / name / "report.json").read_bytes())
    return outputs[0] == outputs[1], f"{len(outputs[0])} bytes, identical={outputs[0] == outputs[1]}"


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9]


def _report(i, ok, detail, elapsed):
    return f"criterion {i}: {'PASS' if ok else 'FAIL'} ({detail}) [{elapsed:.1f} s]"


@pytest.mark.parametrize("i", range(1, 10))
def test_criterion(i, capsys, tmp_path):
    fn = CRITERIA[i - 1]
    if fn is criterion_9:
        ok, detail, elapsed = _timed(lambda: criterion_9(tmp_path))
    else:
        ok, detail, elapsed = _timed(fn)
    with capsys.disabled():
        print("\n" + _report(i, ok, detail, elapsed))
    assert ok, detail


if __name__ == "__main__":
    failed = 0
    for i, fn in enumerate(CRITERIA, 1):
        ok, detail, elapsed = _timed(fn)
        failed += not ok
        print(_report(i, ok, detail, elapsed), flush=True)
    sys.exit(1 if failed else 0)

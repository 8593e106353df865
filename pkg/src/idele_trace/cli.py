"""Batch driver: ``idele-trace <subcommand> [options]``.

Each suite expands into independent check items.  An item carries only
plain data and seeds its own random stream from (seed, kind, index), so the
report does not depend on ``--jobs``.  Reports are merged in check-id order.
"""

import argparse
import json
import random
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from functools import lru_cache
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .errors import GeneratorSearchFailed, H90Defect, PrecisionUnstable

SUBCOMMANDS = (
    "trace-verify", "h90-scan", "sharp-flat", "constants", "local",
    "global-index", "hasse", "bridge", "all",
)
FORMATS = ("json", "md")
STATUSES = ("PASS", "FAIL", "INCONCLUSIVE", "SKIPPED")

# bridge places whose residue ring O/p^k would be enumerated beyond this are skipped
BRIDGE_RING_LIMIT = 10**7


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    discriminants: list = field(default_factory=lambda: [-1, 2, -2, 3, -3, 5, -5, 7, -7, 13, -163])
    cubic_conductors: list = field(default_factory=lambda: [7, 9, 13])
    prime_bound: int = 1000
    local_prime_bound: int = 100
    precision: object = None
    height_bound: int = 10**4
    random_instances: int = 200
    seed: int = 0
    jobs: int = 1
    format: str = "json"
    timings: bool = False

    def validate(self):
        for name in ("discriminants", "cubic_conductors"):
            v = getattr(self, name)
            if not isinstance(v, list) or not all(isinstance(x, int) and not isinstance(x, bool) for x in v):
                raise ConfigError(f"field '{name}': expected a list of integers")
        for name in ("prime_bound", "local_prime_bound", "height_bound", "jobs"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ConfigError(f"field '{name}': expected a positive integer, got {v!r}")
        if not isinstance(self.random_instances, int) or self.random_instances < 0:
            raise ConfigError(f"field 'random_instances': expected a non-negative integer, got {self.random_instances!r}")
        if self.precision is not None and (not isinstance(self.precision, int) or self.precision < 1):
            raise ConfigError(f"field 'precision': expected a positive integer, got {self.precision!r}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ConfigError(f"field 'seed': expected an integer, got {self.seed!r}")
        if self.format not in FORMATS:
            raise ConfigError(f"field 'format': expected one of {', '.join(FORMATS)}, got {self.format!r}")
        if not isinstance(self.timings, bool):
            raise ConfigError("field 'timings': expected true or false")
        return self


def load_config(path):
    """Flat TOML key-value file -> dict (unknown keys are errors)."""
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"{path}: cannot read ({e.strerror})")
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}")
    known = {f.name for f in fields(RunConfig)}
    for key, value in data.items():
        if key not in known:
            line = next((i for i, s in enumerate(text.splitlines(), 1) if s.strip().startswith(key)), "?")
            raise ConfigError(f"{path}: line {line}: unknown field '{key}'")
        if isinstance(value, dict):
            raise ConfigError(f"{path}: field '{key}': tables are not allowed in a flat config")
    return data


def _int_list(text):
    text = text.strip().strip("[]")
    if not text:
        return []
    try:
        return [int(x) for x in text.replace(" ", ",").split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated integer list, got {text!r}")


def build_parser():
    p = argparse.ArgumentParser(
        prog="idele-trace",
        description="Exact finite-level checks of the twisted trace formula and the norm index theorem.",
    )
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", help="flat TOML file; flags override its values")
    p.add_argument("--d", dest="discriminants", type=_int_list, help="squarefree d list, e.g. --d=-1,5")
    p.add_argument("--cubic", dest="cubic_conductors", type=_int_list, help="cubic conductors, e.g. --cubic=7,9")
    p.add_argument("--prime-bound", dest="prime_bound", type=int)
    p.add_argument("--local-prime-bound", dest="local_prime_bound", type=int)
    p.add_argument("--precision", type=int)
    p.add_argument("--height", dest="height_bound", type=int)
    p.add_argument("--random", dest="random_instances", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--out", default=".", help="directory for report.json and report.md")
    p.add_argument("--format", help="summary printed to stdout: json or md")
    p.add_argument("--timings", action="store_true", default=None, help="record runtimes (reports stop being byte-stable)")
    return p


def make_config(args):
    values = {}
    if args.config:
        values.update(load_config(args.config))
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    try:
        return RunConfig(**values).validate()
    except TypeError as e:
        raise ConfigError(str(e))


# ---------------------------------------------------------------------------
# items


def _rng(config, kind, index):
    return random.Random(f"{config['seed']}:{kind}:{index}")


@lru_cache(maxsize=None)
def _fixture_table():
    from .fixtures import degenerate_fixtures, induced_fixtures, knot_fixtures

    table = {}
    for name, M in induced_fixtures() + degenerate_fixtures() + knot_fixtures():
        table[name] = M
    return table


def _fixture(name):
    return _fixture_table()[name]


def _record(status, expected, computed):
    return {"status": status, "expected": expected, "computed": computed}


def _status(ok):
    return "PASS" if ok else "FAIL"


def _trace_of(M, f):
    from .twisted import verify_trace_formula

    r = verify_trace_formula(M, f)
    computed = {"spectral": str(r.spectral), "geometric": str(r.geometric), "kernel": str(r.kernel_trace), "c": r.c}
    return r.success, computed


def item_trace_random(p, config):
    from .twisted import random_sigma_module, random_test_function

    rng = _rng(config, "trace", p["index"])
    M = random_sigma_module(rng)
    f = random_test_function(M, rng)
    ok, computed = _trace_of(M, f)
    computed.update(order=M.G.order(), n=M.n)
    return _record(_status(ok), "spectral = geometric = kernel", computed)


def item_trace_fixture(p, config):
    from .twisted import random_test_function

    M = _fixture(p["name"])
    f = random_test_function(M, _rng(config, "trace-fixture", p["name"]))
    ok, computed = _trace_of(M, f)
    return _record(_status(ok), "spectral = geometric = kernel", computed)


def item_h90_fixture(p, config):
    from .twisted import check_h90

    r = check_h90(_fixture(p["name"]), "G")
    return _record(_status(r.holds), {"defect": 1}, {"defect": r.defect})


def item_h90_control(p, config):
    from .fixtures import h90_failure
    from .twisted import check_h90

    r = check_h90(h90_failure(p["ell"]), "G")
    return _record(_status(not r.holds and r.defect == p["ell"]), {"defect": p["ell"]}, {"defect": r.defect})


def _brute_defects(M):
    """H90 defects by counting elements (no Smith form)."""
    G = M.G
    elems = M.elements
    kerN = [g for g in elems if M.norm(g) == G.identity()]
    img = {M.one_minus(g) for g in elems}
    gam = M.gamma.elements()
    ker_gam = [g for g in kerN if M.gamma.contains(g)]
    img_gam = {M.one_minus(g) for g in gam}
    return len(kerN) // len(img), len(ker_gam) // len(img_gam)


def item_h90_census(p, config):
    from .twisted import check_h90, random_sigma_module

    M = random_sigma_module(_rng(config, "h90", p["index"]), max_order=64)
    snf = (check_h90(M, "G").defect, check_h90(M, "Gamma").defect)
    brute = _brute_defects(M)
    return _record(_status(snf == brute), {"defects_by_counting": list(brute)}, {"defects": list(snf), "order": M.G.order(), "n": M.n})


def item_sharp(p, config):
    from .matching import match_function
    from .twisted import random_test_function, sharp_identity

    M = _fixture(p["name"])
    f = random_test_function(M, _rng(config, "sharp", p["name"]))
    r = sharp_identity(M, f, match_function(M, f))
    return _record(_status(r.holds), "character side = counting side = spectral = geometric; |Y#| = c",
                   {"value": str(r.spectral), "ysharp": r.ysharp_order, "c": r.c})


def item_kappa(p, config):
    from .twisted import kappa_sum, random_test_function

    M = _fixture(p["name"])
    f = random_test_function(M, _rng(config, "kappa", p["name"]))
    r = kappa_sum(M, f)
    return _record(_status(r.holds), "twisted sums agree with the knot and norm sides",
                   {"knot": r.knot_order, "gamma_defect": r.gamma_defect, "value": str(r.spectral_sum)})


def item_crucial(p, config):
    from .twisted import RaySigmaModule, crucial_ratio, crucial_ratio_with_ray

    M = _fixture(p["name"])
    r0 = crucial_ratio(M)
    r1 = crucial_ratio_with_ray(RaySigmaModule(M))
    return _record(_status(r0 == 1 and r1 == M.n), {"ratio": "1", "ray_ratio": str(M.n)},
                   {"ratio": str(r0), "ray_ratio": str(r1)})


def item_flat(p, config):
    from .twisted import flat_identity, random_test_function, verify_trace_formula

    M = _fixture(p["name"])
    h = random_test_function(M, _rng(config, "flat", p["name"]))
    r = flat_identity(M, h)
    # the degenerate identity is the trace formula of the same module
    ok = r.holds and verify_trace_formula(M, h).spectral == r.character_side
    return _record(_status(ok), "character side = [G_K:Gamma_K] * sum over Gamma_K",
                   {"value": str(r.character_side), "index": r.index})


def item_exterior(p, config):
    from .twisted import exterior_constant_report

    steps = exterior_constant_report(p["n"])
    return _record(_status(all(steps.values())), "every step of the tangent chain holds",
                   {k: bool(v) for k, v in sorted(steps.items())})


def item_ray_ratio(p, config):
    from .twisted import RaySigmaModule, crucial_ratio_with_ray, induced_module

    n = p["n"]
    r = crucial_ratio_with_ray(RaySigmaModule(induced_module([2], n)))
    return _record(_status(r == n), {"ray_ratio": str(n)}, {"ray_ratio": str(r)})


def item_hilbert(p, config):
    from .local_fields import hilbert_places, hilbert_symbol

    rng = _rng(config, "hilbert", p["index"])
    a = rng.choice([-1, 1]) * rng.randint(1, 400)
    b = rng.choice([-1, 1]) * rng.randint(1, 400)
    product = 1
    for v in hilbert_places(a, b):
        product *= hilbert_symbol(a, b, v)
    return _record(_status(product == 1), {"product": 1}, {"a": a, "b": b, "product": product})


def item_fundamental_lemma(p, config):
    from .local_fields import fundamental_lemma_check

    ok = fundamental_lemma_check(p["d"], p["p"], config["precision"])
    return _record(_status(ok), "norm onto the units at k and k+1", {"holds": ok})


def item_ramified_image(p, config):
    from .local_fields import local_extension, local_norm_image

    ext = local_extension(p["d"], p["p"], p["k"])
    a = local_norm_image(ext, p["k"], "generators")
    b = local_norm_image(ext, p["k"], "enumerate")
    ra, rb = sorted(a.residues()), sorted(b.residues())
    computed = {"modulus": p["p"] ** p["k"], "index": a.index}
    if len(ra) <= 16:
        computed["image"] = ra
    ok = ra == rb and a.valuation_step == b.valuation_step and a.index == b.index
    return _record(_status(ok), "generator image = enumerated image", computed)


def item_global_index(p, config):
    from .global_cft import cubic_data, field_data, norm_index

    L = cubic_data(p["cubic"]) if "cubic" in p else field_data(p["d"])
    r = norm_index(L, config["prime_bound"])
    return _record(_status(r.index == L.degree and r.stabilized),
                   {"index": L.degree, "stabilized": True},
                   {"index": r.index, "stabilized": r.stabilized, "modulus": r.modulus})


def item_hasse(p, config):
    from .global_cft import HasseStatus, hasse_check

    st, res, table = hasse_check(Fraction(p["a"]), p["d"], config["height_bound"])
    computed = {"status": st.value, "search": res.status.value}
    if res.x is not None:
        computed["solution"] = [str(res.x), str(res.y)]
    if res.places:
        computed["places"] = [str(v) for v in res.places]
    status = {HasseStatus.CONSISTENT: "PASS", HasseStatus.VIOLATION: "FAIL"}.get(st, "INCONCLUSIVE")
    if st == HasseStatus.CONSISTENT and (res.x is not None) != p["norm"]:
        status = "FAIL"
    return _record(status, {"status": "CONSISTENT", "norm": p["norm"]}, computed)


def bridge_places(d):
    from .global_cft import field_data
    from .local_fields import SPLIT, splitting_type
    from sympy import nextprime

    L = field_data(d)
    q = 2
    while q in L.ramified or splitting_type(L.data, q) != SPLIT:
        q = nextprime(q)
    return L, sorted(set(L.ramified) | {q})


def item_bridge(p, config):
    from .fixtures import bridge_test_function
    from .global_cft import build_sigma_module
    from .twisted import RaySigmaModule, check_h90, crucial_ratio_with_ray

    L, S = bridge_places(p["d"])
    M, info = build_sigma_module(L, S, k=config["precision"])
    rng = _rng(config, "bridge", p["d"])
    h90 = [check_h90(M, lvl).holds for lvl in ("G", "Gamma")]
    traces = [_trace_of(M, bridge_test_function(M, rng)) for _ in range(2)]
    ratio = crucial_ratio_with_ray(RaySigmaModule(M), strict=False)
    ok = all(h90) and all(t[0] for t in traces) and ratio == 2
    computed = {"S": S, "order": M.G.order(), "h90": h90, "trace": [t[0] for t in traces],
                "ray_ratio": str(ratio), "levels": {str(k): v for k, v in sorted(info["levels"].items())}}
    return _record(_status(ok), {"h90": [True, True], "trace": [True, True], "ray_ratio": "2"}, computed)


KINDS = {
    "trace-random": item_trace_random,
    "trace-fixture": item_trace_fixture,
    "h90-fixture": item_h90_fixture,
    "h90-control": item_h90_control,
    "h90-census": item_h90_census,
    "sharp": item_sharp,
    "kappa": item_kappa,
    "crucial": item_crucial,
    "flat": item_flat,
    "exterior": item_exterior,
    "ray-ratio": item_ray_ratio,
    "hilbert": item_hilbert,
    "fundamental-lemma": item_fundamental_lemma,
    "ramified-image": item_ramified_image,
    "global-index": item_global_index,
    "hasse": item_hasse,
    "bridge": item_bridge,
}


def run_item(item):
    """Evaluate one (check_id, kind, params, config) item into a report record."""
    check_id, kind, params, config = item
    start = time.perf_counter()
    try:
        rec = KINDS[kind](params, config)
    except (GeneratorSearchFailed, PrecisionUnstable, H90Defect) as e:
        # bounded search or precision exhausted: honest, but not a failure
        rec = _record("INCONCLUSIVE", None, {"error": f"{type(e).__name__}: {e}"})
    except Exception as e:  # a raised check is a failed check, never a crashed run
        rec = _record("FAIL", None, {"error": f"{type(e).__name__}: {e}"})
    rec = {"id": check_id, "inputs": params, **rec}
    rec["runtime"] = round(time.perf_counter() - start, 3) if config["timings"] else None
    return rec


# ---------------------------------------------------------------------------
# suites


def _both_h90_names():
    from .twisted import check_h90

    return [n for n, M in _fixture_table().items()
            if check_h90(M, "G").holds and check_h90(M, "Gamma").holds]


def suite_trace(cfg):
    from .fixtures import induced_fixtures

    items = [(f"trace-verify/random/{i:05d}", "trace-random", {"index": i}) for i in range(cfg.random_instances)]
    items += [(f"trace-verify/fixture/{n}", "trace-fixture", {"name": n}) for n, _ in induced_fixtures()]
    return items


def suite_h90(cfg):
    from .fixtures import induced_fixtures

    items = [(f"h90-scan/induced/{n}", "h90-fixture", {"name": n}) for n, _ in induced_fixtures()]
    items += [(f"h90-scan/control/{ell}", "h90-control", {"ell": ell}) for ell in (2, 3, 5)]
    count = min(cfg.random_instances, 200)
    items += [(f"h90-scan/census/{i:05d}", "h90-census", {"index": i}) for i in range(count)]
    return items


def suite_sharp_flat(cfg):
    from .fixtures import degenerate_fixtures

    both = _both_h90_names()
    items = [(f"sharp-flat/sharp/{n}", "sharp", {"name": n}) for n in both]
    items += [(f"sharp-flat/kappa/{n}", "kappa", {"name": n}) for n in both]
    knots = [n for n in _fixture_table() if n.startswith("knot[") or n.endswith("/diag")]
    items += [(f"sharp-flat/kappa/{n}", "kappa", {"name": n}) for n in knots if n not in both]
    items += [(f"sharp-flat/crucial/{n}", "crucial", {"name": n}) for n in both]
    items += [(f"sharp-flat/flat/{n}", "flat", {"name": n}) for n, _ in degenerate_fixtures()]
    return items


def suite_constants(cfg):
    items = [(f"constants/exterior/{n}", "exterior", {"n": n}) for n in range(1, 7)]
    items += [(f"constants/ray/{n}", "ray-ratio", {"n": n}) for n in range(2, 7)]
    return items


def suite_local(cfg):
    from sympy import primerange

    from .local_fields import RAMIFIED, default_precision, splitting_type

    items = [(f"local/hilbert/{i:05d}", "hilbert", {"index": i}) for i in range(cfg.random_instances)]
    skipped = []
    for d in cfg.discriminants:
        for p in primerange(2, cfg.local_prime_bound):
            if splitting_type(d, p) == RAMIFIED:
                # the enumeration oracle runs at k and k + 1: keep p^(2k+2) small
                k = cfg.precision or default_precision(p)
                while k > 1 and p ** (2 * k + 2) > 5 * 10**6:
                    k -= 1
                cid, inputs = f"local/ramified/{d}/{p}", {"d": d, "p": p, "k": k}
                if p ** (2 * k + 2) > 5 * 10**6:
                    skipped.append((cid, inputs, "enumeration oracle too large even at k = 1"))
                else:
                    items.append((cid, "ramified-image", inputs))
            else:
                items.append((f"local/fundamental-lemma/{d}/{p:03d}", "fundamental-lemma", {"d": d, "p": p}))
    return items, skipped


def suite_global(cfg):
    items = [(f"global-index/d/{d}", "global-index", {"d": d}) for d in cfg.discriminants]
    items += [(f"global-index/cubic/{f}", "global-index", {"cubic": f}) for f in cfg.cubic_conductors]
    return items


def suite_hasse(cfg):
    from .fixtures import HASSE_CORPUS

    return [(f"hasse/{d}/{a}", "hasse", {"a": str(a), "d": d, "norm": norm}) for a, d, norm in HASSE_CORPUS]


def suite_bridge(cfg):
    from .local_fields import SPLIT, default_precision, splitting_type

    items, skipped = [], []
    for d in cfg.discriminants:
        if d >= 0:
            continue
        L, S = bridge_places(d)
        big = [p for p in S if splitting_type(L.data, p) != SPLIT
               and p ** (2 * (cfg.precision or default_precision(p))) > BRIDGE_RING_LIMIT]
        if big:
            skipped.append((f"bridge/{d}", {"d": d, "S": S}, f"residue ring at {big} exceeds {BRIDGE_RING_LIMIT}"))
        else:
            items.append((f"bridge/{d}", "bridge", {"d": d}))
    return items, skipped


SUITES = {
    "trace-verify": suite_trace,
    "h90-scan": suite_h90,
    "sharp-flat": suite_sharp_flat,
    "constants": suite_constants,
    "local": suite_local,
    "global-index": suite_global,
    "hasse": suite_hasse,
    "bridge": suite_bridge,
}


def run(subcommand, cfg):
    """Run a subcommand; returns the report dict."""
    names = list(SUITES) if subcommand == "all" else [subcommand]
    conf = asdict(cfg)
    items, records = [], []
    for name in names:
        out = SUITES[name](cfg)
        if isinstance(out, tuple):
            out, skipped = out
            for check_id, inputs, why in skipped:
                records.append({"id": check_id, "inputs": inputs, "status": "SKIPPED", "expected": None,
                                "computed": {"reason": why}, "runtime": None})
        items.extend((cid, kind, params, conf) for cid, kind, params in out)
    if cfg.jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            records.extend(pool.map(run_item, items, chunksize=max(1, len(items) // (4 * cfg.jobs))))
    else:
        records.extend(run_item(it) for it in items)
    records.sort(key=lambda r: r["id"])
    summary = {s: sum(r["status"] == s for r in records) for s in STATUSES}
    summary["total"] = len(records)
    echo = {k: v for k, v in conf.items() if k not in ("jobs", "format", "timings")}
    return {
        "tool": "idele-trace",
        "version": __version__,
        "subcommand": subcommand,
        "config": echo,
        "summary": summary,
        "checks": records,
    }


def exit_code(report):
    return 1 if report["summary"]["FAIL"] else 0


# ---------------------------------------------------------------------------
# output


def to_json(report):
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def _cell(v):
    if v is None:
        return ""
    s = v if isinstance(v, str) else json.dumps(v, sort_keys=True)
    return s.replace("|", "\\|")


def to_markdown(report):
    s = report["summary"]
    lines = [
        f"# idele-trace {report['subcommand']}",
        "",
        f"{s['total']} checks: {s['PASS']} PASS, {s['FAIL']} FAIL, "
        f"{s['INCONCLUSIVE']} INCONCLUSIVE, {s['SKIPPED']} SKIPPED",
        "",
        "| check | status | expected | computed |",
        "|---|---|---|---|",
    ]
    for r in report["checks"]:
        lines.append(f"| {r['id']} | {r['status']} | {_cell(r['expected'])} | {_cell(r['computed'])} |")
    return "\n".join(lines) + "\n"


def emit(report, out, fmt):
    """Write report.json and report.md under ``out``; returns the text for stdout."""
    if fmt not in FORMATS:
        raise ConfigError(f"unknown format {fmt!r}")
    js, md = to_json(report), to_markdown(report)
    try:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(js)
        (out / "report.md").write_text(md)
    except OSError as e:
        raise ConfigError(f"cannot write reports to {out}: {e}")
    return js if fmt == "json" else md


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2
    try:
        cfg = make_config(args)
    except ConfigError as e:
        print(f"idele-trace: config error: {e}", file=sys.stderr)
        return 2
    report = run(args.subcommand, cfg)
    try:
        text = emit(report, args.out, cfg.format)
    except ConfigError as e:
        print(f"idele-trace: {e}", file=sys.stderr)
        return 2
    if cfg.format == "md":
        sys.stdout.write(text)
    else:
        s = report["summary"]
        print(f"{s['total']} checks: {s['PASS']} PASS, {s['FAIL']} FAIL, "
              f"{s['INCONCLUSIVE']} INCONCLUSIVE, {s['SKIPPED']} SKIPPED")
    return exit_code(report)


if __name__ == "__main__":
    sys.exit(main())

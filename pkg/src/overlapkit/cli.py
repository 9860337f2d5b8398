"""Command-line front end: ``overlapkit <subcommand> ...``.

Exit codes: 0 every requested verification passed, 1 a verification failed,
2 the input did not parse or validate, 3 a budget was exhausted.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .amalgam import BoosterConfig, make_n_acyclic
from .eppa import (
    EppaConfig,
    ExtensionSolution,
    RelStructure,
    all_partial_isos,
    check_automorphism,
    extend_single,
    extends,
    partial_map_from_json,
    solve_extension,
    verify_solution,
)
from .errors import BudgetExceeded, OverlapKitError, SizeGuardError, ValidationError
from .groupoid import (
    DEFAULT_MAX_ELEMENTS,
    cayley_to_dot,
    check_groupoid_axioms,
    cym,
    find_coset_cycles,
    groupoid_from_json,
    groupoid_to_json,
    intersection_law_holds,
    is_compatible,
)
from .hypergraph import (
    CoveringCert,
    Hypergraph,
    RealisationCert,
    check_acyclicity,
    gaifman_to_dot,
    intersection_pattern,
    tree_decomposition,
    verify_covering,
    verify_realisation,
    verify_strict,
)
from .igraph import IGraph, igraph_to_dot, is_coherent, render_vertex, validate_igraph
from .incidence import IncidencePattern, pattern_to_dot, validate_pattern
from .products import RealiseConfig, hypergraph_reduced_product, realise

log = logging.getLogger(__name__)

BUDGET_ENV = "OVERLAPKIT_MAX_ELEMENTS"
EXIT_OK, EXIT_FAIL, EXIT_PARSE, EXIT_BUDGET = 0, 1, 2, 3


@dataclass
class RunConfig:
    subcommand: str
    inputs: dict[str, str] = field(default_factory=dict)
    n: int = 2
    max_elements: int = DEFAULT_MAX_ELEMENTS
    max_chains: int = 200_000
    cycle_budget: int = 5_000_000
    stages: int | None = None
    chain_len: int | None = None
    out: str | None = None
    fmt: str = "json"
    seed: int = 0
    options: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 2:
            raise ValidationError("--n must be at least 2")
        for name in ("max_elements", "max_chains", "cycle_budget"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")

    def booster(self) -> BoosterConfig:
        return BoosterConfig(
            n=self.n,
            chain_len=self.chain_len,
            stages=self.stages,
            max_elements=self.max_elements,
            max_chains=self.max_chains,
            cycle_budget=self.cycle_budget,
            early_exit=self.options.get("early_exit", False),
        )


@dataclass
class Outcome:
    code: int
    report: dict
    artifacts: dict[str, Any] = field(default_factory=dict)
    dot: str | None = None


class _Budget(Exception):
    def __init__(self, report: dict, artifacts: dict | None = None):
        super().__init__(report.get("error", "budget"))
        self.report = report
        self.artifacts = artifacts or {}


def _load(path: str) -> Any:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc


def _verdict(problems: list[str]) -> dict:
    return {"ok": not problems, "problems": problems[:20]}


def _code(*verdicts: dict) -> int:
    return EXIT_OK if all(v["ok"] for v in verdicts) else EXIT_FAIL


# subcommands


def cmd_validate(cfg: RunConfig) -> Outcome:
    data = _load(cfg.inputs["input"])
    kind = cfg.options.get("kind") or _guess_kind(data)
    if kind == "pattern":
        p = IncidencePattern.from_json(data)
        problems = validate_pattern(p)
        extra = {"sites": len(p.sites), "pairs": len(p.pairs)}
        dot = pattern_to_dot(p)
    elif kind == "igraph":
        h = IGraph.from_json(data)
        problems = validate_igraph(h)
        coh = is_coherent(h)
        extra = {"vertices": h.num_vertices(), "coherent": coh.ok}
        dot = igraph_to_dot(h)
    elif kind == "hypergraph":
        a = Hypergraph.from_json(data)
        problems = []
        extra = {"vertices": len(a.vertices), "hyperedges": len(a.hyperedges)}
        dot = gaifman_to_dot(a)
    elif kind == "structure":
        s = RelStructure.from_json(data)
        problems = []
        extra = {"universe": len(s.universe), "tuples": len(s.tuples)}
        dot = None
    elif kind == "groupoid":
        g = groupoid_from_json(data)
        problems = check_groupoid_axioms(g)
        extra = {"size": g.n}
        dot = cayley_to_dot(g) if g.n <= 2000 else None
    else:
        raise ValidationError(f"unknown input kind {kind!r}")
    if problems:
        return Outcome(EXIT_PARSE, {"kind": kind, "valid": False, "problems": problems[:20], **extra})
    return Outcome(EXIT_OK, {"kind": kind, "valid": True, **extra}, dot=dot)


def _guess_kind(data: dict) -> str:
    if not isinstance(data, dict):
        raise ValidationError("top-level JSON must be an object")
    if "kind" in data:
        return data["kind"]
    if "partition" in data:
        return "igraph"
    if "right" in data:
        return "groupoid"
    if "hyperedges" in data:
        return "hypergraph"
    if "universe" in data:
        return "structure"
    if "sites" in data:
        return "pattern"
    raise ValidationError("cannot tell what kind of object this is")


def cmd_cym(cfg: RunConfig) -> Outcome:
    h = IGraph.from_json(_load(cfg.inputs["spec"]))
    if validate_igraph(h):
        raise ValidationError("invalid I-graph", validate_igraph(h))
    try:
        g = cym(h, cfg.max_elements)
    except BudgetExceeded as exc:
        raise _Budget({"error": str(exc), "where": exc.where}) from exc
    axioms = _verdict(check_groupoid_axioms(g, sample=2000))
    compat = is_compatible(g, h)
    comp = {"ok": compat.ok, "problems": [] if compat.ok else [str(compat)]}
    report = {"size": g.n, "axioms": axioms, "compatible": comp, "provenance": {"size": "construction", "axioms": "verification"}}
    return Outcome(_code(axioms, comp), report, {"groupoid": groupoid_to_json(g)}, dot=cayley_to_dot(g) if g.n <= 2000 else None)


def _pattern_and_seed(cfg: RunConfig) -> tuple[IncidencePattern, IGraph | None]:
    if "spec" in cfg.inputs:
        h = IGraph.from_json(_load(cfg.inputs["spec"]))
        if validate_igraph(h):
            raise ValidationError("invalid I-graph", validate_igraph(h))
        return h.pattern, h
    p = IncidencePattern.from_json(_load(cfg.inputs["pattern"]))
    if validate_pattern(p):
        raise ValidationError("invalid pattern", validate_pattern(p))
    return p, None


def cmd_boost(cfg: RunConfig) -> Outcome:
    p, seed = _pattern_and_seed(cfg)
    res = make_n_acyclic(p, cfg.booster(), seed)
    g = res.groupoid
    report = {"booster": res.report(), "provenance": {"booster": "construction"}}
    artifacts = {"groupoid": groupoid_to_json(g)}
    if res.status == "budget":
        raise _Budget({**report, "error": f"budget exhausted at {res.failed_stage}"}, artifacts)
    # independent re-check, never the booster's own verdict
    try:
        chk = find_coset_cycles(g, cfg.n, cfg.cycle_budget)
    except SizeGuardError as exc:
        raise _Budget({**report, "error": str(exc)}, artifacts) from exc
    if chk.status == "unknown":
        raise _Budget({**report, "error": "cycle search budget exhausted"}, artifacts)
    acyc = {"ok": chk.status == "acyclic", "problems": [] if chk.status == "acyclic" else [f"coset cycle of length {chk.cycles[0].length}" if chk.cycles else "coset cycle found"]}
    report["recheck"] = {"acyclic": acyc, "provenance": "verification"}
    verdicts = [acyc]
    if seed is not None:
        c = is_compatible(g, seed)
        verdicts.append({"ok": c.ok, "problems": [] if c.ok else [str(c)]})
        report["recheck"]["compatible"] = verdicts[-1]
    return Outcome(_code(*verdicts), report, artifacts)


def cmd_cover(cfg: RunConfig) -> Outcome:
    a = Hypergraph.from_json(_load(cfg.inputs["input"]))
    p = intersection_pattern(a)
    if "groupoid" in cfg.inputs:
        g = groupoid_from_json(_load(cfg.inputs["groupoid"]))
        if g.pattern.to_json() != p.to_json():
            raise ValidationError("groupoid pattern differs from the intersection pattern")
        certified = None
    else:
        res = make_n_acyclic(p, cfg.booster())
        if not res.certified:
            raise _Budget({"booster": res.report(), "error": f"groupoid not certified ({res.status})"})
        g, certified = res.groupoid, res.report()
    hp = hypergraph_reduced_product(a, g)
    cov = _verdict(verify_covering(hp.covering))
    strict = _verdict(verify_strict(hp.covering))
    report = {
        "cover_vertices": len(hp.hypergraph.vertices),
        "cover_hyperedges": len(hp.hypergraph.hyperedges),
        "groupoid_size": g.n,
        "booster": certified,
        "covering": cov,
        "strict": strict,
        "provenance": {"cover_vertices": "construction", "covering": "verification", "strict": "verification"},
    }
    verdicts = [cov]
    if cfg.options.get("require_strict", True):
        verdicts.append(strict)
    if cfg.n >= 3:
        acyc = check_acyclicity(hp.hypergraph, cfg.n)
        report["acyclicity"] = acyc.to_json()
        verdicts.append({"ok": acyc.ok, "problems": []})
    artifacts = {"covering": {"kind": "covering", **hp.covering.to_json()}, "groupoid": groupoid_to_json(g)}
    return Outcome(_code(*verdicts), report, artifacts, dot=gaifman_to_dot(hp.hypergraph))


def cmd_realise(cfg: RunConfig) -> Outcome:
    h = IGraph.from_json(_load(cfg.inputs["spec"]))
    if validate_igraph(h):
        raise ValidationError("invalid I-graph", validate_igraph(h))
    rc = RealiseConfig(
        n=cfg.n,
        max_elements=cfg.max_elements,
        max_chains=cfg.max_chains,
        cycle_budget=cfg.cycle_budget,
        chain_len=cfg.chain_len,
        early_exit=cfg.options.get("early_exit", False),
    )
    try:
        r = realise(h, cfg.n, rc)
    except BudgetExceeded as exc:
        partial = exc.partial.report() if hasattr(exc.partial, "report") else None
        raise _Budget({"error": str(exc), "where": exc.where, "partial": partial}) from exc
    real = _verdict(verify_realisation(r.cert))
    report = {
        "vertices": len(r.hypergraph.vertices),
        "hyperedges": len(r.hypergraph.hyperedges),
        "stage1": r.stage1.report(),
        "stage2": r.stage2.report(),
        "realisation": real,
        "provenance": {"vertices": "construction", "realisation": "verification"},
    }
    verdicts = [real]
    if r.acyclicity is not None:
        report["acyclicity"] = r.acyclicity.to_json()
        verdicts.append({"ok": r.acyclicity.ok, "problems": []})
    return Outcome(_code(*verdicts), report, {"realisation": {"kind": "realisation", **r.cert.to_json()}}, dot=gaifman_to_dot(r.hypergraph))


def cmd_eppa(cfg: RunConfig) -> Outcome:
    a = RelStructure.from_json(_load(cfg.inputs["structure"]))
    if cfg.options.get("all_partials"):
        ps = all_partial_isos(a, cap=cfg.options.get("partials_cap", 5))
    else:
        raw = _load(cfg.inputs["partials"])
        if not isinstance(raw, list):
            raise ValidationError("partials JSON must be a list of maps")
        ps = [_typed_map(a, partial_map_from_json(m)) for m in raw]
    method = cfg.options.get("method", "auto")
    if method == "auto":
        method = "excursion" if len(ps) == 1 else "generic"
    if method == "excursion":
        if len(ps) != 1:
            raise ValidationError("the excursion handles exactly one partial isomorphism")
        sol = extend_single(a, ps[0])
    else:
        ec = EppaConfig(n=cfg.n, max_elements=cfg.max_elements, max_chains=cfg.max_chains, cycle_budget=cfg.cycle_budget)
        try:
            sol = solve_extension(a, ps, ec)
        except BudgetExceeded as exc:
            raise _Budget({"error": str(exc), "where": exc.where}) from exc
    check = _verdict(verify_solution(a, sol))
    report = {
        "method": sol.method,
        "size": len(sol.structure.universe),
        "partials": len(ps),
        "solution": check,
        "provenance": {"size": "construction", "solution": "verification"},
    }
    bundle = {"kind": "eppa", "input": a.to_json(), **sol.to_json()}
    return Outcome(_code(check), report, {"solution": bundle})


def _typed_map(a: RelStructure, m: dict) -> dict:
    """JSON keys are strings; map them back onto universe elements."""
    by_text = {str(x): x for x in a.universe}
    try:
        return {by_text[str(x)]: by_text[str(y)] for x, y in m.items()}
    except KeyError as exc:
        raise ValidationError(f"partial map mentions {exc} outside the universe") from exc


def cmd_analyze(cfg: RunConfig) -> Outcome:
    a = Hypergraph.from_json(_load(cfg.inputs["input"]))
    acyc = check_acyclicity(a, cfg.n) if cfg.n >= 3 else None
    td = tree_decomposition(a)
    report = {
        "n": cfg.n,
        "acyclicity": acyc.to_json() if acyc else {"note": "every hypergraph is 2-acyclic in this sense"},
        "tree_decomposition": td.to_json() if td else None,
        "provenance": {"acyclicity": "verification", "tree_decomposition": "construction"},
    }
    return Outcome(EXIT_OK, report, dot=gaifman_to_dot(a))


def cmd_verify(cfg: RunConfig) -> Outcome:
    data = _load(cfg.inputs["bundle"])
    kind = data.get("kind") if isinstance(data, dict) else None
    if kind == "covering":
        c = CoveringCert.from_json(data)
        cov = _verdict(verify_covering(c))
        strict = _verdict(verify_strict(c))
        verdicts = [cov] + ([strict] if cfg.options.get("require_strict", True) else [])
        return Outcome(_code(*verdicts), {"kind": kind, "covering": cov, "strict": strict})
    if kind == "realisation":
        r = RealisationCert.from_json(data)
        real = _verdict(verify_realisation(r))
        return Outcome(_code(real), {"kind": kind, "realisation": real})
    if kind == "eppa":
        v = _verdict(_verify_eppa_bundle(data))
        return Outcome(_code(v), {"kind": kind, "solution": v})
    if isinstance(data, dict) and "right" in data:
        g = groupoid_from_json(data)
        axioms = _verdict(check_groupoid_axioms(g, sample=2000))
        chk = find_coset_cycles(g, cfg.n, cfg.cycle_budget)
        if chk.status == "unknown":
            raise _Budget({"kind": "groupoid", "error": "cycle search budget exhausted"})
        acyc = {"ok": chk.status == "acyclic", "problems": []}
        law = intersection_law_holds(g) if len(g.pattern.pairs) <= 14 else None
        return Outcome(_code(axioms, acyc), {"kind": "groupoid", "axioms": axioms, "acyclic": acyc, "intersection_law": law})
    raise ValidationError("bundle kind not recognised")


def _verify_eppa_bundle(data: dict) -> list[str]:
    """Re-check a solution bundle from its JSON alone."""
    a = RelStructure.from_json(data["input"])
    b = RelStructure.from_json(data["structure"])
    embed = {x: y for x, y in data["embedding"]}
    by_text = {str(render_vertex(x)): x for x in a.universe}
    embed = {by_text[str(x)]: y for x, y in embed.items()}
    problems = []
    img = set(embed.values())
    if len(img) != len(embed) or {t for t in b.tuples if set(t) <= img} != a.image(embed):
        problems.append("the embedding is not an induced copy")
    for i, (p, f) in enumerate(zip(data["partials"], data["automorphisms"])):
        pm = {by_text[str(x)]: by_text[str(y)] for x, y in p}
        fm = {x: y for x, y in f}
        problems += [f"f{i}: {m}" for m in check_automorphism(b, fm)]
        problems += [f"f{i} does not extend p{i}: {m}" for m in extends(fm, pm, embed)]
    if "hypergraph" in data:
        hg = Hypergraph.from_json(data["hypergraph"])
        for s in hg.hyperedges:
            if not set(s) <= set(b.universe):
                problems.append("hyperedge outside the structure")
                break
    return problems


COMMANDS: dict[str, Callable[[RunConfig], Outcome]] = {
    "validate": cmd_validate,
    "cym": cmd_cym,
    "boost": cmd_boost,
    "cover": cmd_cover,
    "realise": cmd_realise,
    "eppa": cmd_eppa,
    "analyze": cmd_analyze,
    "verify": cmd_verify,
}


def run(cfg: RunConfig) -> Outcome:
    try:
        out = COMMANDS[cfg.subcommand](cfg)
    except _Budget as exc:
        out = Outcome(EXIT_BUDGET, {**exc.report, "partial": True}, exc.artifacts)
    except (BudgetExceeded, SizeGuardError) as exc:
        out = Outcome(EXIT_BUDGET, {"error": str(exc), "partial": True})
    except ValidationError as exc:
        out = Outcome(EXIT_PARSE, {"error": str(exc), "problems": list(exc.violations or [])[:20]})
    except OverlapKitError as exc:
        out = Outcome(EXIT_FAIL, {"error": str(exc)})
    out.report.setdefault("exit_code", out.code)
    out.report["exit_code"] = out.code
    return out


# output


def _dumps(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def emit(cfg: RunConfig, out: Outcome, stream=None) -> None:
    stream = stream or sys.stdout
    if cfg.out:
        d = Path(cfg.out)
        for name, obj in out.artifacts.items():
            _write_atomic(d / f"{name}.json", _dumps(obj))
        if out.dot is not None:
            _write_atomic(d / "graph.dot", out.dot)
        _write_atomic(d / "report.json", _dumps(out.report))
    if cfg.fmt == "dot" and out.dot is not None:
        stream.write(out.dot)
    else:
        stream.write(_dumps(out.report))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="overlapkit", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="subcommand", required=True)

    def common(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--n", type=int, default=2, help="acyclicity target (default 2)")
        sp.add_argument("--budget", type=int, default=None, help=f"groupoid element cap (env {BUDGET_ENV})")
        sp.add_argument("--max-chains", type=int, default=200_000)
        sp.add_argument("--cycle-budget", type=int, default=5_000_000)
        sp.add_argument("--stages", type=int, default=None)
        sp.add_argument("--chain-len", type=int, default=None)
        sp.add_argument("--out", default=None, help="directory for artifacts")
        sp.add_argument("--format", choices=["json", "dot"], default="json")
        sp.add_argument("--early-exit", action="store_true", help="stop boosting once a stage certifies")

    sp = sub.add_parser("validate", help="parse and validate an input file")
    sp.add_argument("--input", required=True)
    sp.add_argument("--kind", choices=["pattern", "igraph", "hypergraph", "structure", "groupoid"])
    common(sp)
    sp = sub.add_parser("cym", help="groupoid abstracted from an I-graph")
    sp.add_argument("--spec", required=True)
    common(sp)
    sp = sub.add_parser("boost", help="build an N-acyclic groupoid")
    g = sp.add_mutually_exclusive_group(required=True)
    g.add_argument("--pattern")
    g.add_argument("--spec")
    common(sp)
    sp = sub.add_parser("cover", help="strict covering of a hypergraph")
    sp.add_argument("--input", required=True)
    sp.add_argument("--groupoid", help="use this groupoid instead of building one")
    sp.add_argument("--no-strict", action="store_true", help="do not require strictness for exit 0")
    common(sp)
    sp = sub.add_parser("realise", help="realise an I-graph by a hypergraph")
    sp.add_argument("--spec", required=True)
    common(sp)
    sp = sub.add_parser("eppa", help="extend partial isomorphisms of a structure")
    sp.add_argument("--structure", required=True)
    g = sp.add_mutually_exclusive_group(required=True)
    g.add_argument("--partials")
    g.add_argument("--all-partials", action="store_true")
    sp.add_argument("--method", choices=["auto", "excursion", "generic"], default="auto")
    common(sp)
    sp = sub.add_parser("analyze", help="acyclicity and tree decomposition of a hypergraph")
    sp.add_argument("--input", required=True)
    common(sp)
    sp = sub.add_parser("verify", help="re-check a certificate bundle")
    sp.add_argument("--bundle", required=True)
    sp.add_argument("--no-strict", action="store_true")
    common(sp)
    return ap


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    budget = ns.budget
    if budget is None:
        env = os.environ.get(BUDGET_ENV)
        try:
            budget = int(env) if env else DEFAULT_MAX_ELEMENTS
        except ValueError as exc:
            raise ValidationError(f"{BUDGET_ENV} must be an integer") from exc
    inputs = {k: getattr(ns, k) for k in ("input", "spec", "pattern", "groupoid", "structure", "partials", "bundle") if getattr(ns, k, None)}
    options = {
        "kind": getattr(ns, "kind", None),
        "require_strict": not getattr(ns, "no_strict", False),
        "all_partials": getattr(ns, "all_partials", False),
        "method": getattr(ns, "method", "auto"),
        "early_exit": getattr(ns, "early_exit", False),
    }
    return RunConfig(
        subcommand=ns.subcommand,
        inputs=inputs,
        n=ns.n,
        max_elements=budget,
        max_chains=ns.max_chains,
        cycle_budget=ns.cycle_budget,
        stages=ns.stages,
        chain_len=ns.chain_len,
        out=ns.out,
        fmt=ns.format,
        options=options,
    )


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        ns = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(ns)
    except ValidationError as exc:
        sys.stdout.write(_dumps({"error": str(exc), "exit_code": EXIT_PARSE}))
        return EXIT_PARSE
    out = run(cfg)
    emit(cfg, out)
    return out.code


if __name__ == "__main__":
    sys.exit(main())

"""Amalgamation chains of coset graphs and the booster towards N-acyclic groupoids."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np
from scipy.cluster.hierarchy import DisjointSet

from .errors import BudgetExceeded, SizeGuardError, ValidationError
from .groupoid import (
    DEFAULT_MAX_ELEMENTS,
    Groupoid,
    _CosetTools,
    cym,
    extend,
    find_coset_cycles,
    groupoid_isomorphic,
    intersection_law_holds,
    is_compatible,
    subgroupoid,
    trivial_groupoid,
)
from .igraph import IGraph, Vertex, validate_igraph
from .incidence import IncidencePattern

log = logging.getLogger(__name__)


def popcount(x: int) -> int:
    return bin(x).count("1")


# pairwise amalgams of abstract I-graphs


def _component_along(h: IGraph, root: Vertex, edges: set[str]) -> list[Vertex]:
    seen = {root}
    out = [root]
    i = 0
    while i < len(out):
        v = out[i]
        for e in edges:
            w = h.rel[e].get(v)
            if w is not None and w not in seen:
                seen.add(w)
                out.append(w)
        i += 1
    return out


def amalgamate_pair(
    first: tuple[IGraph, Vertex], second: tuple[IGraph, Vertex], common: Sequence[str]
) -> IGraph:
    """Glue two I-graphs along the ``common``-components of their reference vertices.

    Vertices become ``(0, v)`` and ``(1, v)``; glued vertices keep the first tag.
    """
    (h1, v1), (h2, v2) = first, second
    if h1.pattern.edges != h2.pattern.edges:
        raise ValidationError("amalgam operands use different patterns")
    if h1.sort_of[v1] != h2.sort_of[v2]:
        raise ValidationError(f"reference vertices have colours {h1.sort_of[v1]} and {h2.sort_of[v2]}")
    edges = set(common)
    iso = {v1: v2}
    inv = {v2: v1}
    stack = [v1]
    while stack:
        v = stack.pop()
        for e in edges:
            a, b = h1.rel[e].get(v), h2.rel[e].get(iso[v])
            if (a is None) != (b is None):
                raise ValidationError(f"overlap components differ at {v!r} along {e}")
            if a is None:
                continue
            if a in iso:
                if iso[a] != b:
                    raise ValidationError(f"overlap components are not isomorphic at {a!r}")
            elif b in inv:
                raise ValidationError(f"overlap components are not isomorphic at {b!r}")
            else:
                iso[a], inv[b] = b, a
                stack.append(a)
    rename2 = {w: (0, v) for v, w in iso.items()}
    p = h1.pattern
    part: dict[str, list] = {s: [(0, v) for v in h1.partition[s]] for s in p.sites}
    for s in p.sites:
        part[s].extend((1, w) for w in h2.partition[s] if w not in rename2)
    rel: dict[str, dict] = {e: {(0, v): (0, w) for v, w in h1.rel[e].items()} for e in p.edges}
    for e in p.edges:
        for v, w in h2.rel[e].items():
            a = rename2.get(v, (1, v))
            b = rename2.get(w, (1, w))
            old = rel[e].get(a)
            if old is not None and old != b:
                raise ValidationError(f"amalgam is not an I-graph: {e}-edge clash at {a!r}")
            rel[e][a] = b
    out = IGraph(p, {s: tuple(vs) for s, vs in part.items()}, rel)
    problems = validate_igraph(out)
    if problems:
        raise ValidationError("amalgam is not an I-graph", problems)
    return out


# chains of cosets


@dataclass(frozen=True)
class ChainSpec:
    """Links ``(mask_i, base_i, connector_i)``; the last connector is unused.

    Each link is the coset of the identity at ``src(base_i)`` in the subgroupoid
    generated by ``mask_i``.  Its exit vertex ``base_i * connector_i`` is glued
    to the entry vertex ``base_{i+1}`` of the next link.
    """

    masks: tuple[int, ...]
    bases: tuple[int, ...]
    connectors: tuple[int, ...]

    @property
    def length(self) -> int:
        return len(self.masks)

    def union(self) -> int:
        u = 0
        for m in self.masks:
            u |= m
        return u


def check_chain_spec(g: Groupoid, spec: ChainSpec, tools: _CosetTools | None = None) -> list[str]:
    """Violations of the chain conditions, each naming the link index."""
    tools = tools or _CosetTools(g)
    problems = []
    m = spec.length
    if not (len(spec.bases) == m and len(spec.connectors) >= m - 1):
        return ["chain arrays have inconsistent lengths"]
    sites = [int(g.tgt[b]) for b in spec.bases]
    for i in range(m):
        if not g.member(spec.masks[i])[spec.bases[i]]:
            problems.append(f"link {i}: base {spec.bases[i]} outside its subgroupoid")
        if i == m - 1:
            continue
        h = spec.connectors[i]
        if not g.member(spec.masks[i])[h]:
            problems.append(f"link {i}: connector {h} outside its subgroupoid")
        if g.src[h] != sites[i] or g.tgt[h] != sites[i + 1]:
            problems.append(f"link {i}: connector {h} runs between the wrong sites")
    if problems:
        return problems
    for i in range(1, m - 1):
        if not tools.separated(spec.masks[i - 1], spec.masks[i], spec.masks[i + 1], spec.connectors[i], sites[i]):
            # a witness lies in both cosets; report one
            _, lab = g.coset_labels(spec.masks[i] & spec.masks[i + 1])
            left = g.coset(int(g.identity[sites[i]]), spec.masks[i - 1] & spec.masks[i])
            hit = left[lab[left] == lab[spec.connectors[i]]]
            problems.append(f"link {i}: coset overlap at element {int(hit[0])} (after translation)")
    return problems


def build_chain(g: Groupoid, spec: ChainSpec, tools: _CosetTools | None = None) -> IGraph:
    """The amalgam of the chain's cosets, with vertices ``(link, element)``."""
    problems = check_chain_spec(g, spec, tools)
    if problems:
        raise ValidationError("chain conditions violated", problems)
    p = g.pattern
    m = spec.length
    cosets = [g.coset(int(g.identity[g.src[b]]), mk) for b, mk in zip(spec.bases, spec.masks)]
    ds = DisjointSet([(i, int(x)) for i in range(m) for x in cosets[i]])
    for i in range(m - 1):
        common = g.mask_edges(spec.masks[i] & spec.masks[i + 1])
        start = (g.mul(spec.bases[i], spec.connectors[i]), spec.bases[i + 1])
        seen = {start}
        stack = [start]
        while stack:
            a, b = stack.pop()
            ds.merge((i, a), (i + 1, b))
            for ei in common:
                nxt = (int(g.right[ei, a]), int(g.right[ei, b]))
                if (nxt[0] < 0) != (nxt[1] < 0):
                    raise ValidationError(f"glue components differ between links {i} and {i + 1}")
                if nxt[0] >= 0 and nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
    rep = {}
    for subset in ds.subsets():
        r = min(subset)
        for x in subset:
            rep[x] = r
    part: dict[str, list] = {s: [] for s in p.sites}
    for r in sorted(set(rep.values())):
        part[p.sites[g.tgt[r[1]]]].append(r)
    rel: dict[str, dict] = {e: {} for e in p.edges}
    for i in range(m):
        for ei in g.mask_edges(spec.masks[i]):
            e = p.edges[ei]
            for x in cosets[i]:
                y = int(g.right[ei, x])
                if y < 0:
                    continue
                a = rep[(i, int(x))]
                b = rep[(i, y)]
                old = rel[e].get(a)
                if old is not None and old != b:
                    raise ValidationError(f"chain is not an I-graph: {e}-edge clash at {a!r}")
                rel[e][a] = b
    out = IGraph(p, {s: tuple(vs) for s, vs in part.items()}, rel)
    problems = validate_igraph(out)
    if problems:
        raise ValidationError("chain is not an I-graph", problems)
    return out


def component_masks(p: IncidencePattern) -> dict[tuple[int, int], int]:
    """For every mask and site index, the edges of the site's component in the reduct."""
    pairs = p.pairs
    sites = p.sites
    out = {}
    for mask in range(1 << len(pairs)):
        ds = DisjointSet(sites)
        for i, (e, _) in enumerate(pairs):
            if mask >> i & 1:
                ds.merge(p.src[e], p.tgt[e])
        for si, s in enumerate(sites):
            sub = 0
            for i, (e, _) in enumerate(pairs):
                if mask >> i & 1 and ds.connected(p.src[e], s):
                    sub |= 1 << i
            out[(mask, si)] = sub
    return out


def enumerate_chains(
    g: Groupoid, max_len: int, max_pairs: int, tools: _CosetTools | None = None, min_pairs: int = 1
) -> Iterator[ChainSpec]:
    """Chain shapes up to left translation of each link, deterministic order.

    Links are restricted to the reduct component of their entry site, empty
    links and repeated consecutive masks are skipped, end links may not sit
    inside their neighbour, and two-link chains are listed once per mirror pair.
    The union of all masks has between ``min_pairs`` and ``max_pairs`` pairs.
    """
    tools = tools or _CosetTools(g)
    p = g.pattern
    comp = component_masks(p)
    nsites = len(p.sites)
    at_site = [sorted({comp[(mk, s)] for mk in range(1, 1 << len(p.pairs))} - {0}) for s in range(nsites)]
    at_site = [[mk for mk in lst if popcount(mk) <= max_pairs] for lst in at_site]
    one = [int(x) for x in g.identity]

    # single cosets, one per reduct component
    for mk in sorted({mk for lst in at_site for mk in lst}):
        if popcount(mk) < min_pairs:
            continue
        for s in range(nsites):
            if mk in at_site[s]:
                yield ChainSpec((mk,), (one[s],), ())
                break

    for length in range(2, max_len + 1):
        for s2 in range(nsites):
            for first in at_site[s2]:
                yield from _grow(g, tools, at_site, one, length, [first], [one[s2]], [one[s2]], s2, min_pairs, max_pairs)


def _grow(g, tools, at_site, one, length, masks, bases, conns, site, min_pairs, max_pairs) -> Iterator[ChainSpec]:
    i = len(masks)
    union = 0
    for mk in masks:
        union |= mk
    for mk in at_site[site]:
        if mk == masks[-1]:
            continue
        u = union | mk
        if popcount(u) > max_pairs:
            continue
        if i >= 2 and not tools.separated(masks[-2], masks[-1], mk, conns[-1], int(g.src[conns[-1]])):
            continue
        if i == 1 and (masks[0] & mk) == masks[0]:
            continue
        if i == length - 1:
            if (masks[-1] & mk) == mk:
                continue
            if length == 2 and masks[0] > mk:
                continue
            if popcount(u) >= min_pairs:
                yield ChainSpec(tuple(masks + [mk]), tuple(bases + [one[site]]), tuple(conns))
            continue
        members = np.nonzero(g.member(mk) & (g.src == site))[0]
        for h in members:
            h = int(h)
            if h == one[site]:
                continue
            yield from _grow(
                g, tools, at_site, one, length, masks + [mk], bases + [one[site]], conns + [h], int(g.tgt[h]), min_pairs, max_pairs
            )


# the booster

ChainExpander = Callable[[Groupoid, Iterable[ChainSpec]], Iterable[ChainSpec]]


@dataclass
class BoosterConfig:
    n: int = 2
    chain_len: int | None = None
    stages: int | None = None
    max_elements: int = DEFAULT_MAX_ELEMENTS
    max_chains: int = 200_000
    cycle_budget: int = 5_000_000
    log_path: str | None = None
    certify: bool = True
    # certify before each stage and stop as soon as the current groupoid passes
    early_exit: bool = False

    def __post_init__(self):
        if self.n < 2:
            raise ValidationError("the target length must be at least 2")
        for name in ("max_elements", "max_chains", "cycle_budget"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")

    @property
    def link_limit(self) -> int:
        return self.chain_len if self.chain_len is not None else self.n


@dataclass
class StageRecord:
    stage: int
    chains: int
    folded: int
    chain_vertices: int
    size_before: int
    size_after: int
    seconds: float
    preserved_below: bool | None = None

    def to_json(self) -> dict:
        return dict(self.__dict__)


@dataclass
class BoostResult:
    groupoid: Groupoid
    certified: bool
    status: str
    stages: list[StageRecord] = field(default_factory=list)
    failed_stage: str | None = None
    cycle_status: str | None = None

    def report(self) -> dict:
        return {
            "size": self.groupoid.n,
            "certified": self.certified,
            "status": self.status,
            "failed_stage": self.failed_stage,
            "cycle_status": self.cycle_status,
            "stages": [s.to_json() for s in self.stages],
        }


def booster_step(
    g: Groupoid, k: int, config: BoosterConfig, record: list | None = None, expand: ChainExpander | None = None
) -> Groupoid:
    """Fold into ``g`` every chain of at most ``config.link_limit`` links whose masks span at most ``k`` pairs.

    Chains are enumerated from the input groupoid.  A chain the current
    groupoid is already compatible with leaves it unchanged, so the fold is
    the closure of the input's Cayley graph with all chains at once.
    ``expand`` may rewrite the enumerated chain list, e.g. to close it under
    symmetries.
    """
    t0 = time.time()
    tools = _CosetTools(g)
    cur = g
    chains = folded = verts = 0
    specs: Iterable[ChainSpec] = enumerate_chains(g, config.link_limit, k, tools)
    if expand is not None:
        specs = expand(g, specs)
    for spec in specs:
        chains += 1
        if chains > config.max_chains:
            raise BudgetExceeded(f"stage {k} needs more than {config.max_chains} chains", where=f"stage {k}")
        chain = build_chain(g, spec, tools)
        verts += chain.num_vertices()
        if not is_compatible(cur, chain).ok:
            cur = extend(cur, chain, config.max_elements, where=f"stage {k}, chain {chains}")
            folded += 1
    rec = StageRecord(k, chains, folded, verts, g.n, cur.n, round(time.time() - t0, 3))
    rec.preserved_below = preserved_below(g, cur, k)
    if record is not None:
        record.append(rec)
    return cur


def preserved_below(before: Groupoid, after: Groupoid, k: int) -> bool:
    """Subgroupoids on fewer than ``k`` pairs are unchanged up to generator-respecting isomorphism."""
    p = before.pattern
    for mask in range(1 << len(p.pairs)):
        if popcount(mask) >= k:
            continue
        alpha = p.edges_of_mask(mask)
        if not groupoid_isomorphic(subgroupoid(before, alpha), subgroupoid(after, alpha)):
            return False
    return True


def make_n_acyclic(
    pattern: IncidencePattern, config: BoosterConfig, seed: IGraph | None = None, expand: ChainExpander | None = None
) -> BoostResult:
    """Run the stages ``k = 1 ..`` over all pair counts and certify with the cycle search.

    Budget failures return the last finished groupoid flagged as not certified.
    """
    start = cym(seed, config.max_elements) if seed is not None else trivial_groupoid(pattern)
    records: list[StageRecord] = []
    total = len(pattern.pairs)
    last = total if config.stages is None else min(config.stages, total)
    cur = start
    logf = open(config.log_path, "a") if config.log_path else None
    try:
        for k in range(1, last + 1):
            if config.early_exit and config.certify and _already_acyclic(cur, config):
                _log(logf, {"early_exit": k, "size": cur.n})
                return BoostResult(cur, True, "certified", records, cycle_status="acyclic")
            try:
                cur = booster_step(cur, k, config, records, expand)
            except (BudgetExceeded, SizeGuardError) as exc:
                where = getattr(exc, "where", "") or f"stage {k}"
                _log(logf, {"stage": k, "error": str(exc), "where": where})
                return BoostResult(cur, False, "budget", records, where)
            _log(logf, records[-1].to_json())
        if not config.certify:
            return BoostResult(cur, False, "unchecked", records)
        try:
            res = find_coset_cycles(cur, config.n, config.cycle_budget)
        except SizeGuardError as exc:
            _log(logf, {"certify": config.n, "error": str(exc)})
            return BoostResult(cur, False, "budget", records, "certification", "unknown")
        _log(logf, {"certify": config.n, "status": res.status, "nodes": res.nodes, "size": cur.n})
        if res.status == "acyclic":
            return BoostResult(cur, True, "certified", records, cycle_status=res.status)
        if res.status == "unknown":
            return BoostResult(cur, False, "budget", records, "certification", res.status)
        return BoostResult(cur, False, "cycles-found", records, cycle_status=res.status)
    finally:
        if logf:
            logf.close()


def _already_acyclic(g: Groupoid, config: BoosterConfig) -> bool:
    try:
        return find_coset_cycles(g, config.n, config.cycle_budget).status == "acyclic"
    except SizeGuardError:
        return False


def _log(fh, obj: dict) -> None:
    log.info("booster %s", obj)
    if fh:
        fh.write(json.dumps(obj) + "\n")

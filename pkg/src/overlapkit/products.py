"""Direct and reduced products of I-graphs with groupoids, and the two-stage realisation pipeline."""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

from scipy.cluster.hierarchy import DisjointSet

from .amalgam import BoostResult, BoosterConfig, make_n_acyclic
from .errors import BudgetExceeded, SizeGuardError, ValidationError
from .groupoid import (
    DEFAULT_MAX_ELEMENTS,
    Groupoid,
    cayley_incidence_pattern,
    cym,
    element_site,
    entangled_pairs,
    intersection_law_holds,
    parity_igraph,
    is_compatible,
)
from .hypergraph import (
    AcyclicityReport,
    CoveringCert,
    Hypergraph,
    RealisationCert,
    Tag,
    check_acyclicity,
    intersection_pattern,
    site_name,
    verify_realisation,
)
from .igraph import IGraph, PathWord, Vertex, disjoint_union, is_coherent
from .incidence import IncidencePattern, PatternCovering, sort_key

log = logging.getLogger(__name__)


def _same_pattern(p: IncidencePattern, q: IncidencePattern) -> bool:
    return p.sites == q.sites and p.edges == q.edges and all(
        p.src[e] == q.src[e] and p.tgt[e] == q.tgt[e] and p.rev[e] == q.rev[e] for e in p.edges
    )


def _require_same(p: IncidencePattern, q: IncidencePattern) -> None:
    if not _same_pattern(p, q):
        raise ValidationError("the I-graph and the groupoid live over different patterns")


def _elements_ending_at(g: Groupoid) -> dict[str, list[int]]:
    out: dict[str, list[int]] = {s: [] for s in g.pattern.sites}
    for x in range(g.n):
        out[g.pattern.sites[g.tgt[x]]].append(x)
    return out


@dataclass
class DirectProduct:
    """``H x G``: vertices ``(v, x)`` with ``v`` in ``V_s`` and ``x`` ending at ``s``."""

    base: IGraph
    groupoid: Groupoid
    graph: IGraph

    def over_elements(self) -> tuple[IGraph, PatternCovering]:
        """The same vertices sorted by their groupoid element, over the Cayley incidence pattern."""
        g, h = self.groupoid, self.base
        big, cov = cayley_incidence_pattern(g)
        part = {element_site(x): [(v, x) for v in h.partition[g.pattern.sites[g.tgt[x]]]] for x in range(g.n)}
        rel: dict[str, dict] = {e: {} for e in big.edges}
        for (v, x), w in _lifted_pairs(h, g):
            e = w[2]
            rel[f"{element_site(x)}:{e}"][(v, x)] = (w[0], w[1])
        return IGraph(big, {s: tuple(vs) for s, vs in part.items()}, rel), cov


def _lifted_pairs(h: IGraph, g: Groupoid):
    p = h.pattern
    ending = _elements_ending_at(g)
    for e in p.edges:
        ei = g.edge_index[e]
        for x in ending[p.src[e]]:
            y = int(g.right[ei, x])
            for v, w in h.rel[e].items():
                yield (v, x), (w, y, e)


def direct_product(h: IGraph, g: Groupoid) -> DirectProduct:
    _require_same(h.pattern, g.pattern)
    ending = _elements_ending_at(g)
    part = {s: tuple((v, x) for x in ending[s] for v in h.partition[s]) for s in h.pattern.sites}
    rel: dict[str, dict] = {e: {} for e in h.pattern.edges}
    for (v, x), (w, y, e) in _lifted_pairs(h, g):
        rel[e][(v, x)] = (w, y)
    return DirectProduct(h, g, IGraph(h.pattern, part, rel))


def lifted_word_map(prod: DirectProduct, w: PathWord) -> dict:
    """The word map of ``w`` on the direct product, as a plain dict."""
    m = {v: v for v in prod.graph.partition[w.start]}
    for e in w.edges:
        r = prod.graph.rel[e]
        m = {a: r[b] for a, b in m.items() if b in r}
    return m


# reduced products


@dataclass
class ReducedProduct:
    hypergraph: Hypergraph
    cert: RealisationCert | None
    reason: str | None
    classes: dict
    # (site, element) -> hyperedge index
    hyperedge_of: dict[tuple[str, int], int]
    spec: IGraph
    groupoid: Groupoid

    def vertex(self, v: Vertex, x: int) -> Vertex:
        """The class ``[v, x]``."""
        return self.classes[(v, x)]


def _quotient(items: list, pairs) -> dict:
    ds = DisjointSet(items)
    for a, b in pairs:
        ds.merge(a, b)
    rep = {}
    for cls in ds.subsets():
        m = min(cls, key=sort_key)
        for a in cls:
            rep[a] = m
    return rep


def reduced_product(h: IGraph, g: Groupoid, acyclic: bool | None = None) -> ReducedProduct:
    """``H (x) G`` with a realisation certificate when the hypotheses hold.

    ``acyclic`` may pass an already established 2-acyclicity verdict for ``g``;
    by default it is decided with the intersection law.
    """
    _require_same(h.pattern, g.pattern)
    p = h.pattern
    ending = _elements_ending_at(g)
    items = [(v, x) for s in p.sites for x in ending[s] for v in h.partition[s]]
    pairs = [((v, x), (w, y)) for (v, x), (w, y, _) in _lifted_pairs(h, g)]
    rep = _quotient(items, pairs)
    hyper = []
    keys = []
    for s in p.sites:
        for x in ending[s]:
            keys.append((s, x))
            hyper.append([rep[(v, x)] for v in h.partition[s]])
    a = Hypergraph.build(set(rep.values()), hyper)
    hyperedge_of = {k: a.edge_index(e) for k, e in zip(keys, hyper)}

    reason = None
    if not is_coherent(h).ok:
        reason = "the I-graph is not coherent"
    elif not is_compatible(g, h).ok:
        reason = "the groupoid is not compatible with the I-graph"
    else:
        if acyclic is None:
            try:
                acyclic = intersection_law_holds(g)
            except SizeGuardError as exc:
                reason = f"2-acyclicity undecided: {exc}"
        if reason is None and not acyclic:
            reason = "the groupoid is not 2-acyclic"
        if reason is None:
            bad = entangled_pairs(g)
            if bad:
                reason = f"generator of pair {p.pairs[bad[0]][0]} lies in the subgroupoid of the other pairs"
    cert = None
    if reason is None:
        tags = []
        for (s, x), idx in hyperedge_of.items():
            proj = {rep[(v, x)]: v for v in h.partition[s]}
            if len(proj) != len(h.partition[s]):
                reason = f"hyperedge over {s} at element {x} collapses vertices"
                break
            tags.append(Tag(idx, s, proj))
        else:
            cert = RealisationCert(a, h, tuple(tags))
    return ReducedProduct(a, cert, reason, rep, hyperedge_of, h, g)


def intersection_witness(prod: ReducedProduct, first: tuple[str, int], second: tuple[str, int], cap: int = 1_000_000) -> PathWord | None:
    """A single path word whose identification produces the full overlap of two hyperedges.

    BFS over (element, partial map) states; domains only shrink along a word,
    so states that already lost part of the target overlap are pruned.
    """
    h, g = prod.spec, prod.groupoid
    p = h.pattern
    s, x = first
    t, y = second
    there = {prod.classes[(w, y)]: w for w in h.partition[t]}
    target = {v: there[prod.classes[(v, x)]] for v in h.partition[s] if prod.classes[(v, x)] in there}
    if not target:
        return None
    need = set(target)
    start = (x, tuple(sorted(((v, v) for v in h.partition[s]), key=sort_key)))
    seen = {start: None}
    queue = deque([start])
    while queue:
        state = queue.popleft()
        z, m = state
        if z == y and dict(m) == target:
            word = []
            while seen[state] is not None:
                prev, e = seen[state]
                word.append(e)
                state = prev
            return PathWord(s, tuple(reversed(word)))
        here = p.sites[g.tgt[z]]
        for e in p.out_edges.get(here, ()):
            r = h.rel[e]
            nm = tuple((a, r[b]) for a, b in m if b in r)
            if not need <= {a for a, _ in nm}:
                continue
            nxt = (int(g.right[g.edge_index[e], z]), nm)
            if nxt not in seen:
                seen[nxt] = (state, e)
                if len(seen) > cap:
                    raise SizeGuardError("intersection witness search exceeded its cap")
                queue.append(nxt)
    return None


# hypergraph reduced product


@dataclass
class HypergraphProduct:
    hypergraph: Hypergraph
    covering: CoveringCert
    classes: dict
    hyperedge_of: dict[tuple[str, int], int]


def hypergraph_reduced_product(a: Hypergraph, g: Groupoid) -> HypergraphProduct:
    """``A (x) G``: element-tagged copies of the hyperedges glued along shared vertices."""
    p = intersection_pattern(a)
    _require_same(p, g.pattern)
    ending = _elements_ending_at(g)
    items = []
    for i, s in enumerate(a.hyperedges):
        for x in ending[site_name(i)]:
            items.extend((v, x) for v in s)
    sets = a.edge_sets
    pairs = []
    for e in p.edges:
        si, ti = int(p.src[e][1:]), int(p.tgt[e][1:])
        common = sets[si] & sets[ti]
        ei = g.edge_index[e]
        for x in ending[p.src[e]]:
            y = int(g.right[ei, x])
            pairs.extend(((v, x), (v, y)) for v in common)
    rep = _quotient(items, pairs)
    hyper, keys = [], []
    for i, s in enumerate(a.hyperedges):
        for x in ending[site_name(i)]:
            keys.append((site_name(i), x))
            hyper.append([rep[(v, x)] for v in s])
    cover = Hypergraph.build(set(rep.values()), hyper)
    vmap = {r: r[0] for r in set(rep.values())}
    hyperedge_of = {k: cover.edge_index(e) for k, e in zip(keys, hyper)}
    return HypergraphProduct(cover, CoveringCert(cover, a, vmap), rep, hyperedge_of)


def products_agree(a: Hypergraph, g: Groupoid) -> list[str]:
    """Compare ``A (x) G`` with ``H(A) (x) G`` through ``[(v, s), x] -> [v, x]``."""
    from .hypergraph import igraph_of

    hp = hypergraph_reduced_product(a, g)
    rp = reduced_product(igraph_of(a), g, acyclic=False)
    problems = []
    fwd: dict = {}
    for ((v, s), x), cls in rp.classes.items():
        img = hp.classes[(v, x)]
        if fwd.setdefault(cls, img) != img:
            problems.append(f"class {cls!r} splits in the hypergraph product")
    if len(set(fwd.values())) != len(fwd) or len(fwd) != len(hp.hypergraph.vertices):
        problems.append("vertex correspondence is not a bijection")
    mapped = {tuple(sorted((fwd[v] for v in e), key=sort_key)) for e in rp.hypergraph.hyperedges}
    if mapped != set(hp.hypergraph.hyperedges):
        problems.append("hyperedges do not correspond")
    return problems


# realisation pipeline


@dataclass
class RealiseConfig:
    n: int = 2
    max_elements: int = DEFAULT_MAX_ELEMENTS
    max_chains: int = 200_000
    cycle_budget: int = 5_000_000
    chain_len: int | None = None
    log_path: str | None = None
    # False keeps stage 1 at the compatible groupoid abstracted from the input
    stage1_acyclic: bool = True
    # close stage 2 under left translations of the stage-1 groupoid
    symmetric: bool = False
    early_exit: bool = False

    def booster(self, n: int, stages: int | None = None, certify: bool = True) -> BoosterConfig:
        return BoosterConfig(
            n=n,
            stages=stages,
            certify=certify,
            chain_len=self.chain_len,
            max_elements=self.max_elements,
            max_chains=self.max_chains,
            cycle_budget=self.cycle_budget,
            log_path=self.log_path,
            early_exit=self.early_exit,
        )


@dataclass
class Realisation:
    hypergraph: Hypergraph
    cert: RealisationCert
    stage1: BoostResult
    stage2: BoostResult
    acyclicity: AcyclicityReport | None
    intermediate: ReducedProduct = field(repr=False)
    # left translation z of the stage-1 groupoid -> its lift to the stage-2 groupoid
    translations: dict = field(default_factory=dict, repr=False)


def _pushdown(cert: RealisationCert, spec: IGraph, cov: PatternCovering) -> RealisationCert:
    """Read a realisation of the element-sorted product as one of the original I-graph."""
    tags = []
    for t in cert.tags:
        tags.append(Tag(t.edge, cov.site_proj[t.site], {a: vx[0] for a, vx in t.proj.items()}))
    return RealisationCert(cert.real, spec, tuple(tags))


def separated_seed(k: IGraph, max_elements: int = DEFAULT_MAX_ELEMENTS) -> IGraph:
    """``k`` joined with a parity graph for every pair whose generator is not separated in ``cym(k)``.

    A generator inside the subgroupoid of the other pairs (e.g. a partial
    identity completing to the identity) glues a hyperedge to itself.
    """
    bad = entangled_pairs(cym(k, max_elements))
    if not bad:
        return k
    return disjoint_union(k, *(parity_igraph(k.pattern, i) for i in bad))


def _single_stage(h: IGraph, g: Groupoid, r1: BoostResult, n: int) -> Realisation | None:
    """``H (x) G`` itself, when it already realises ``h`` and is ``n``-acyclic (always so for n = 2)."""
    prod = reduced_product(h, g, acyclic=True)
    if prod.cert is None or verify_realisation(prod.cert):
        return None
    acyc = check_acyclicity(prod.hypergraph, n) if n >= 3 else None
    if acyc is not None and not acyc.ok:
        return None
    log.info("stage 1 product is already a %d-acyclic realisation", n)
    return Realisation(prod.hypergraph, prod.cert, r1, r1, acyc, prod)


def realise(h: IGraph, n: int = 2, config: RealiseConfig | None = None) -> Realisation:
    """Realise ``h`` by ``(H x G) (x) G~`` with ``G`` 2-acyclic and ``G~`` ``n``-acyclic.

    Raises BudgetExceeded naming the stage when a booster run does not certify.
    """
    if n < 2:
        raise ValidationError("the acyclicity target must be at least 2")
    config = config or RealiseConfig(n=n)
    if config.stage1_acyclic:
        r1 = make_n_acyclic(h.pattern, config.booster(2), seed=h)
        if not r1.certified:
            raise BudgetExceeded(f"stage 1 did not certify ({r1.status})", where=f"stage 1: {r1.failed_stage}", partial=r1)
    else:
        r1 = make_n_acyclic(h.pattern, config.booster(2, stages=0, certify=False), seed=h)
    g = r1.groupoid
    if not is_compatible(g, h).ok:
        raise ValidationError("stage 1 groupoid is not compatible with the input")
    if config.early_exit and not config.symmetric and r1.certified:
        done = _single_stage(h, g, r1, n)
        if done is not None:
            return done
    k, cov = direct_product(h, g).over_elements()
    try:
        seed = separated_seed(k, config.max_elements)
    except BudgetExceeded as exc:
        raise BudgetExceeded(str(exc), where=f"stage 2 seed: {exc.where}") from exc
    translations = {}
    if config.symmetric:
        from .symmetry import cayley_translation, make_n_acyclic_symmetric

        syms = [cayley_translation(g, z, k.pattern) for z in range(g.n)]
        r2, lifted = make_n_acyclic_symmetric(k.pattern, config.booster(n), seed=seed, symmetries=syms)
        translations = dict(enumerate(lifted))
    else:
        r2 = make_n_acyclic(k.pattern, config.booster(n), seed=seed)
    if not r2.certified:
        raise BudgetExceeded(f"stage 2 did not certify ({r2.status})", where=f"stage 2: {r2.failed_stage}", partial=r2)
    prod = reduced_product(k, r2.groupoid, acyclic=True)
    if prod.cert is None:
        raise ValidationError(f"stage 2 product has no certificate: {prod.reason}")
    cert = _pushdown(prod.cert, h, cov)
    problems = verify_realisation(cert)
    if problems:
        raise ValidationError("the composed realisation does not verify", problems)
    acyc = check_acyclicity(prod.hypergraph, n) if n >= 3 else None
    log.info("realised with %d vertices and %d hyperedges", len(prod.hypergraph.vertices), len(prod.hypergraph.hyperedges))
    return Realisation(prod.hypergraph, cert, r1, r2, acyc, prod, translations)

"""Hypergraphs, their derived graphs, acyclicity analysis, and certificate checks.

Hyperedges are stored as sorted vertex tuples with duplicates collapsed.  Site
``i`` of the intersection pattern is named ``s{i}`` after the hyperedge at
index ``i``.
"""

from __future__ import annotations

import itertools
import json
from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from typing import Hashable, Iterable, Mapping, Sequence

from .errors import SizeGuardError, ValidationError
from .igraph import IGraph, PartialMap, reachable_maps, render_vertex
from .incidence import IncidencePattern, sort_key

Vertex = Hashable


@dataclass(frozen=True)
class Hypergraph:
    vertices: tuple
    hyperedges: tuple[tuple, ...]

    @classmethod
    def build(cls, vertices: Iterable[Vertex] | None, hyperedges: Iterable[Iterable[Vertex]]) -> "Hypergraph":
        """Normalise into sorted tuples; ``vertices=None`` takes the union of the hyperedges."""
        edges = {tuple(sorted(set(s), key=sort_key)) for s in hyperedges}
        covered = {v for s in edges for v in s}
        vs = covered if vertices is None else set(vertices)
        stray = covered - vs
        if stray:
            raise ValidationError("hyperedge outside the vertex set", [f"vertex {v!r}" for v in sorted(stray, key=sort_key)])
        return cls(tuple(sorted(vs, key=sort_key)), tuple(sorted(edges, key=sort_key)))

    @cached_property
    def edge_sets(self) -> tuple[frozenset, ...]:
        return tuple(frozenset(s) for s in self.hyperedges)

    @cached_property
    def index(self) -> dict[tuple, int]:
        return {s: i for i, s in enumerate(self.hyperedges)}

    @cached_property
    def incident(self) -> dict[Vertex, tuple[int, ...]]:
        out: dict = defaultdict(list)
        for i, s in enumerate(self.hyperedges):
            for v in s:
                out[v].append(i)
        return {v: tuple(out.get(v, ())) for v in self.vertices}

    def edge_index(self, s: Iterable[Vertex]) -> int | None:
        return self.index.get(tuple(sorted(set(s), key=sort_key)))

    def induced(self, keep: Iterable[Vertex]) -> "Hypergraph":
        """Sub-hypergraph on ``keep`` with every hyperedge traced onto it."""
        k = set(keep)
        return Hypergraph.build(k, [[v for v in s if v in k] for s in self.hyperedges])

    def to_json(self) -> dict:
        return {
            "vertices": [render_vertex(v) for v in self.vertices],
            "hyperedges": [[render_vertex(v) for v in s] for s in self.hyperedges],
        }

    @classmethod
    def from_json(cls, data: dict) -> "Hypergraph":
        try:
            return cls.build(data.get("vertices"), data["hyperedges"])
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed hypergraph JSON: {exc}") from exc


def site_name(i: int) -> str:
    return f"s{i}"


def gaifman(a: Hypergraph) -> dict[Vertex, set]:
    """Adjacency sets of the Gaifman graph."""
    adj: dict = {v: set() for v in a.vertices}
    for s in a.hyperedges:
        for u, v in itertools.combinations(s, 2):
            adj[u].add(v)
            adj[v].add(u)
    return adj


def gaifman_edges(a: Hypergraph) -> list[tuple]:
    adj = gaifman(a)
    return sorted({tuple(sorted((u, v), key=sort_key)) for u in adj for v in adj[u]}, key=sort_key)


def intersection_pattern(a: Hypergraph) -> IncidencePattern:
    """One edge pair ``s{i}.s{j}`` / ``s{j}.s{i}`` per intersecting pair of distinct hyperedges."""
    rows = []
    sets = a.edge_sets
    for i, j in itertools.combinations(range(len(sets)), 2):
        if sets[i] & sets[j]:
            si, sj = site_name(i), site_name(j)
            rows.append((f"{si}.{sj}", si, sj, f"{sj}.{si}"))
            rows.append((f"{sj}.{si}", sj, si, f"{si}.{sj}"))
    return IncidencePattern.build([site_name(i) for i in range(len(sets))], rows)


def igraph_of(a: Hypergraph) -> IGraph:
    """The overlap specification of ``a``: cell ``s{i}`` holds ``(v, s{i})`` for ``v`` in hyperedge ``i``."""
    p = intersection_pattern(a)
    part = {site_name(i): [(v, site_name(i)) for v in s] for i, s in enumerate(a.hyperedges)}
    sets = a.edge_sets
    edges = {}
    for e in p.edges:
        s, t = p.src[e], p.tgt[e]
        common = sets[int(s[1:])] & sets[int(t[1:])]
        edges[e] = [((v, s), (v, t)) for v in common]
    return IGraph.build(p, part, edges, symmetrize=False)


# acyclicity


@dataclass
class AcyclicityReport:
    n: int
    n_conformal: bool
    n_chordal: bool
    clique_witness: tuple | None = None
    cycle_witness: tuple | None = None

    @property
    def ok(self) -> bool:
        return self.n_conformal and self.n_chordal

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "ok": self.ok,
            "n_conformal": self.n_conformal,
            "n_chordal": self.n_chordal,
            "clique_witness": None if self.clique_witness is None else [render_vertex(v) for v in self.clique_witness],
            "cycle_witness": None if self.cycle_witness is None else [render_vertex(v) for v in self.cycle_witness],
        }


def uncovered_clique(a: Hypergraph, n: int) -> tuple | None:
    """A Gaifman clique of size at most ``n`` inside no hyperedge, or None.

    Only cliques that still sit inside some hyperedge are extended, so the
    first failure found is inclusion-minimal.
    """
    adj = gaifman(a)
    order = {v: i for i, v in enumerate(a.vertices)}
    sets = a.edge_sets
    all_edges = frozenset(range(len(sets)))

    def grow(clique: list, holders: frozenset, cands: list) -> tuple | None:
        if len(clique) == n:
            return None
        for i, v in enumerate(cands):
            inside = frozenset(j for j in holders if v in sets[j])
            if not inside:
                if not clique:
                    # a vertex outside every hyperedge has no neighbours and constrains nothing
                    continue
                return tuple(clique + [v])
            found = grow(clique + [v], inside, [u for u in cands[i + 1:] if u in adj[v]])
            if found:
                return found
        return None

    return grow([], all_edges, sorted(a.vertices, key=order.get))


def chordless_cycle(a: Hypergraph, n: int) -> tuple | None:
    """A chordless Gaifman cycle of length 4..n, or None.

    DFS from each start vertex ``v`` through larger vertices only; a path
    vertex may touch the path only at its predecessor, and at ``v`` only when
    it closes the cycle.
    """
    adj = gaifman(a)
    rank = {v: i for i, v in enumerate(a.vertices)}
    for v in a.vertices:
        r0 = rank[v]
        for p1 in adj[v]:
            if rank[p1] < r0:
                continue
            found = _extend_path(adj, rank, [v, p1], r0, n)
            if found:
                return found
    return None


def _extend_path(adj, rank, path: list, r0: int, n: int) -> tuple | None:
    last = path[-1]
    start = path[0]
    inner = set(path[1:-1])
    for u in adj[last]:
        if rank[u] <= r0 or u in path:
            continue
        if adj[u] & inner:
            continue
        if start in adj[u]:
            # u closes a cycle of length len(path)+1; only chordless if long enough
            if len(path) + 1 >= 4 and rank[path[1]] < rank[u]:
                return tuple(path + [u])
            continue
        if len(path) + 1 < n:
            found = _extend_path(adj, rank, path + [u], r0, n)
            if found:
                return found
    return None


def check_acyclicity(a: Hypergraph, n: int) -> AcyclicityReport:
    if n < 3:
        raise ValidationError("the acyclicity bound must be at least 3")
    clique = uncovered_clique(a, n)
    cycle = chordless_cycle(a, n)
    return AcyclicityReport(n, clique is None, cycle is None, clique, cycle)


@dataclass(frozen=True)
class TreeDecomposition:
    """Enumeration ``order`` of hyperedge indices with ``parent[l]`` an earlier position (None at the root)."""

    order: tuple[int, ...]
    parent: tuple[int | None, ...]

    def to_json(self) -> dict:
        return {"order": list(self.order), "parent": list(self.parent)}


def tree_decomposition(a: Hypergraph) -> TreeDecomposition | None:
    """Join-tree enumeration by GYO reduction, or None when ``a`` is not acyclic.

    The reduction alternately drops vertices seen by a single remaining
    hyperedge and hyperedges whose trace lies inside another trace; each
    dropped hyperedge is joined to its container.  The resulting tree is then
    re-rooted at hyperedge 0 and listed in DFS preorder.
    """
    m = len(a.hyperedges)
    if m == 0:
        return TreeDecomposition((), ())
    trace = {i: set(s) for i, s in enumerate(a.hyperedges)}
    links: dict[int, set[int]] = {i: set() for i in range(m)}
    changed = True
    while changed and len(trace) > 1:
        changed = False
        count: dict = defaultdict(int)
        for t in trace.values():
            for v in t:
                count[v] += 1
        for t in trace.values():
            lonely = {v for v in t if count[v] == 1}
            if lonely:
                t -= lonely
                changed = True
        for i in sorted(trace):
            host = next((j for j in sorted(trace) if j != i and trace[i] <= trace[j]), None)
            if host is not None:
                links[i].add(host)
                links[host].add(i)
                del trace[i]
                changed = True
                break
    if len(trace) > 1:
        return None
    order: list[int] = []
    parent: list[int | None] = []
    pos: dict[int, int] = {}
    stack: list[tuple[int, int | None]] = [(0, None)]
    while stack:
        node, par = stack.pop()
        if node in pos:
            continue
        pos[node] = len(order)
        order.append(node)
        parent.append(None if par is None else pos[par])
        for nb in sorted(links[node], reverse=True):
            if nb not in pos:
                stack.append((nb, node))
    return TreeDecomposition(tuple(order), tuple(parent))


def verify_tree_decomposition(a: Hypergraph, td: TreeDecomposition) -> list[str]:
    """Check ``s_l ∩ (s_0 ∪ .. ∪ s_{l-1}) ⊆ s_parent(l)`` for every position."""
    problems = []
    if sorted(td.order) != list(range(len(a.hyperedges))):
        problems.append("order is not a permutation of the hyperedges")
        return problems
    seen: set = set()
    for pos, idx in enumerate(td.order):
        s = a.edge_sets[idx]
        par = td.parent[pos]
        if pos == 0:
            if par is not None:
                problems.append("root has a parent")
        elif par is None or not 0 <= par < pos:
            problems.append(f"position {pos} has no earlier parent")
        elif not (s & seen) <= a.edge_sets[td.order[par]]:
            problems.append(f"position {pos}: overlap with earlier hyperedges escapes the parent")
        seen |= s
    return problems


def acyclic_by_induced(a: Hypergraph, n: int, max_vertices: int = 12) -> bool:
    """Reference check: every induced sub-hypergraph on at most ``n`` vertices is tree-decomposable."""
    if len(a.vertices) > max_vertices:
        raise SizeGuardError(f"{len(a.vertices)} vertices exceeds the subset cap of {max_vertices}")
    for k in range(1, min(n, len(a.vertices)) + 1):
        for sub in itertools.combinations(a.vertices, k):
            if tree_decomposition(a.induced(sub)) is None:
                return False
    return True


# coverings


@dataclass(frozen=True)
class CoveringCert:
    cover: Hypergraph
    base: Hypergraph
    vertex_map: Mapping[Vertex, Vertex]

    def image_index(self, i: int) -> int | None:
        """Base hyperedge index hit by cover hyperedge ``i``, if the image is a hyperedge."""
        return self.base.edge_index(self.vertex_map[v] for v in self.cover.hyperedges[i])

    def to_json(self) -> dict:
        return {
            "cover": self.cover.to_json(),
            "base": self.base.to_json(),
            "vertex_map": [[render_vertex(v), render_vertex(self.vertex_map[v])] for v in self.cover.vertices],
        }

    @classmethod
    def from_json(cls, data: dict) -> "CoveringCert":
        try:
            cover = Hypergraph.from_json(data["cover"])
            base = Hypergraph.from_json(data["base"])
            vmap = {v: w for v, w in data["vertex_map"]}
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed covering JSON: {exc}") from exc
        return cls(cover, base, vmap)


def verify_covering(c: CoveringCert) -> list[str]:
    """Homomorphism plus back-property; an empty list means the covering is valid."""
    problems = []
    base_vs = set(c.base.vertices)
    for v in c.cover.vertices:
        if c.vertex_map.get(v) not in base_vs:
            problems.append(f"vertex {v!r} has no image in the base")
    if problems:
        return problems
    images: list[int | None] = []
    for i, s in enumerate(c.cover.hyperedges):
        img = [c.vertex_map[v] for v in s]
        j = c.base.edge_index(img)
        if len(set(img)) != len(img):
            problems.append(f"hyperedge {i} is not mapped injectively")
        elif j is None:
            problems.append(f"hyperedge {i} maps onto a non-hyperedge")
        images.append(j)
    if problems:
        return problems
    fibre: dict[int, list[int]] = defaultdict(list)
    for i, j in enumerate(images):
        fibre[j].append(i)
    inc = c.cover.incident
    bsets = c.base.edge_sets
    for i, s in enumerate(c.cover.hyperedges):
        j = images[i]
        touching: dict[int, set] = defaultdict(set)
        for v in s:
            for k in inc[v]:
                touching[k].add(v)
        for jj in range(len(bsets)):
            want = bsets[j] & bsets[jj]
            ok = False
            if not want:
                ok = any(k not in touching for k in fibre[jj])
            else:
                for k in fibre[jj]:
                    if k in touching and {c.vertex_map[v] for v in touching[k]} == want:
                        ok = True
                        break
            if not ok:
                problems.append(f"back-property fails at cover hyperedge {i} towards base hyperedge {jj}")
    return problems


def _domains_by_target(h: IGraph, s: str, cache: dict) -> dict[str, set[frozenset]]:
    if s not in cache:
        maps = reachable_maps(h, s)
        cache[s] = {t: {frozenset(m.mapping) for m in ms} for t, ms in maps.items()}
    return cache[s]


def verify_strict(c: CoveringCert) -> list[str]:
    """Covering check plus: every nonempty overlap projects onto the domain of some word map of the base."""
    problems = verify_covering(c)
    if problems:
        return problems
    h = igraph_of(c.base)
    cache: dict = {}
    inc = c.cover.incident
    images = [c.image_index(i) for i in range(len(c.cover.hyperedges))]
    for i, s in enumerate(c.cover.hyperedges):
        touching: dict[int, set] = defaultdict(set)
        for v in s:
            for k in inc[v]:
                touching[k].add(v)
        src = site_name(images[i])
        doms = _domains_by_target(h, src, cache)
        for k, common in touching.items():
            if k < i:
                continue
            tgt = site_name(images[k])
            dom = frozenset((c.vertex_map[v], src) for v in common)
            if dom not in doms[tgt]:
                problems.append(f"overlap of cover hyperedges {i} and {k} is not induced by a path of overlaps")
    return problems


def identity_covering(a: Hypergraph) -> CoveringCert:
    return CoveringCert(a, a, {v: v for v in a.vertices})


# realisations


@dataclass(frozen=True)
class Tag:
    """One projection of a realising hyperedge: its index, its site, and the bijection onto that site's cell."""

    edge: int
    site: str
    proj: Mapping[Vertex, Vertex]


@dataclass(frozen=True)
class RealisationCert:
    """A realisation; a hyperedge arising over several sites carries one tag per site."""

    real: Hypergraph
    spec: IGraph
    tags: tuple[Tag, ...]
    notes: dict = field(default_factory=dict, compare=False)

    def to_json(self) -> dict:
        return {
            "real": self.real.to_json(),
            "spec": self.spec.to_json(),
            "tags": [
                {
                    "edge": t.edge,
                    "site": t.site,
                    "proj": [[render_vertex(v), render_vertex(w)] for v, w in sorted(t.proj.items(), key=lambda p: sort_key(p[0]))],
                }
                for t in self.tags
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "RealisationCert":
        try:
            real = Hypergraph.from_json(data["real"])
            spec = IGraph.from_json(data["spec"])
            # indices refer to the stored order, which re-sorting may change
            moved = [real.edge_index(e) for e in data["real"]["hyperedges"]]
            tags = tuple(Tag(moved[int(t["edge"])], str(t["site"]), {v: w for v, w in t["proj"]}) for t in data["tags"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed realisation JSON: {exc}") from exc
        return cls(real, spec, tags)


def verify_realisation(r: RealisationCert) -> list[str]:
    """Both realisation conditions, each violation naming its witness."""
    h = r.spec
    p = h.pattern
    problems = []
    tagged = {t.edge for t in r.tags}
    for i in range(len(r.real.hyperedges)):
        if i not in tagged:
            problems.append(f"hyperedge {i} carries no projection")
    for n, t in enumerate(r.tags):
        cell = set(h.partition.get(t.site, ()))
        s = r.real.edge_sets[t.edge]
        if set(t.proj) != s or set(t.proj.values()) != cell or len(cell) != len(s):
            problems.append(f"tag {n} (hyperedge {t.edge} over {t.site}) is not a bijection onto the cell")
    if problems:
        return problems

    by_vertex: dict[Vertex, list[int]] = defaultdict(list)
    for n, t in enumerate(r.tags):
        for v in r.real.hyperedges[t.edge]:
            by_vertex[v].append(n)
    by_site: dict[str, list[int]] = defaultdict(list)
    for n, t in enumerate(r.tags):
        by_site[t.site].append(n)

    def overlap_map(a: Tag, b: Tag, common: Iterable) -> dict:
        return {a.proj[v]: b.proj[v] for v in common}

    def touching(n: int) -> dict[int, set]:
        out: dict[int, set] = defaultdict(set)
        for v in r.real.hyperedges[r.tags[n].edge]:
            for m in by_vertex[v]:
                out[m].add(v)
        return out

    cache: dict = {}
    for n, t in enumerate(r.tags):
        near = touching(n)
        for e in p.out_edges.get(t.site, ()):
            want = dict(h.rel[e])
            tgt = p.tgt[e]
            if not want:
                ok = any(m not in near for m in by_site[tgt])
            else:
                ok = any(overlap_map(t, r.tags[m], near[m]) == want for m in by_site[tgt] if m in near)
            if not ok:
                problems.append(f"condition (i) fails at hyperedge {t.edge} over {t.site} for edge {e}")
        if t.site not in cache:
            cache[t.site] = reachable_maps(h, t.site)
        for m, common in near.items():
            u = r.tags[m]
            pm = PartialMap(t.site, u.site, overlap_map(t, u, common))
            if pm not in cache[t.site][u.site]:
                problems.append(f"condition (ii) fails between hyperedges {t.edge} ({t.site}) and {u.edge} ({u.site})")
    return problems


def trivial_realisation(a: Hypergraph) -> RealisationCert:
    """``a`` realising its own overlap specification; vertices outside every hyperedge are dropped."""
    a = Hypergraph.build(None, a.hyperedges)
    h = igraph_of(a)
    tags = tuple(Tag(i, site_name(i), {v: (v, site_name(i)) for v in s}) for i, s in enumerate(a.hyperedges))
    return RealisationCert(a, h, tags)


def covering_from_realisation(r: RealisationCert, base: Hypergraph) -> tuple[CoveringCert | None, list[str]]:
    """The covering of ``base`` induced by a realisation of its overlap specification.

    Each vertex is sent to the first component of its projection; disagreement
    between tags is reported instead of resolved.
    """
    vmap: dict = {}
    problems = []
    for t in r.tags:
        for v, (x, _) in t.proj.items():
            if vmap.setdefault(v, x) != x:
                problems.append(f"vertex {v!r} projects to both {vmap[v]!r} and {x!r}")
    if problems:
        return None, problems
    return CoveringCert(r.real, base, vmap), []


def realisation_from_covering(r: RealisationCert, c: CoveringCert) -> RealisationCert:
    """Pull the projections of ``r`` back along a strict covering of ``r.real``."""
    if c.base != r.real:
        raise ValidationError("the covering does not cover the realising hypergraph")
    problems = verify_realisation(r)
    if problems:
        raise ValidationError("input realisation does not verify", problems)
    problems = verify_strict(c)
    if problems:
        raise ValidationError("covering is not strict", problems)
    by_edge: dict[int, list[Tag]] = defaultdict(list)
    for t in r.tags:
        by_edge[t.edge].append(t)
    tags = []
    for i, s in enumerate(c.cover.hyperedges):
        j = c.image_index(i)
        for t in by_edge[j]:
            tags.append(Tag(i, t.site, {v: t.proj[c.vertex_map[v]] for v in s}))
    return RealisationCert(c.cover, r.spec, tuple(tags))


def gaifman_to_dot(a: Hypergraph) -> str:
    lines = ["graph gaifman {"]
    for v in a.vertices:
        lines.append(f'  "{render_vertex(v)}";')
    for u, v in gaifman_edges(a):
        lines.append(f'  "{render_vertex(u)}" -- "{render_vertex(v)}";')
    lines.append("}")
    return "\n".join(lines)


def dump_hypergraph(a: Hypergraph) -> str:
    return json.dumps(a.to_json(), indent=2)


def tetrahedron() -> Hypergraph:
    """The four 3-element faces of a 4-vertex set."""
    return Hypergraph.build(range(4), itertools.combinations(range(4), 3))


def cycle_graph(n: int) -> Hypergraph:
    """The ``n``-cycle as a 2-uniform hypergraph."""
    return Hypergraph.build(range(n), [(i, (i + 1) % n) for i in range(n)])


def projection_words(spec: IGraph, s: str, t: str) -> Sequence[PartialMap]:
    """All word maps from ``s`` to ``t`` in ``spec``; used for witness reporting."""
    return sorted(reachable_maps(spec, s)[t], key=lambda m: sort_key(tuple(sorted(m.mapping.items(), key=sort_key))))

"""I-graphs: sorted vertex sets with one partial bijection per pattern edge.

Vertices are arbitrary hashable values.  Completions produce vertices of the
form ``(v, s)`` which export as ``"v@s"``.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import Hashable, Iterable, Mapping

from .errors import SizeGuardError, ValidationError
from .incidence import IncidencePattern, require_valid, sort_key, validate_pattern

Vertex = Hashable


@dataclass(frozen=True)
class IGraph:
    pattern: IncidencePattern
    partition: Mapping[str, tuple]
    rel: Mapping[str, Mapping[Vertex, Vertex]]

    @classmethod
    def build(
        cls,
        pattern: IncidencePattern,
        partition: Mapping[str, Iterable[Vertex]],
        edges: Mapping[str, Iterable[tuple[Vertex, Vertex]]] | None = None,
        symmetrize: bool = True,
    ) -> "IGraph":
        """Build from edge lists; with ``symmetrize`` each pair is mirrored onto the reverse edge."""
        part = {s: tuple(sorted(set(partition.get(s, ())), key=sort_key)) for s in pattern.sites}
        rel: dict[str, dict] = {e: {} for e in pattern.edges}
        for e, pairs in (edges or {}).items():
            if e not in rel:
                raise ValidationError(f"unknown edge {e}")
            for v, w in pairs:
                rel[e][v] = w
                if symmetrize:
                    rel[pattern.rev[e]][w] = v
        return cls(pattern, part, rel)

    @cached_property
    def sort_of(self) -> dict[Vertex, str]:
        return {v: s for s, vs in self.partition.items() for v in vs}

    @cached_property
    def vertices(self) -> tuple:
        return tuple(v for s in self.pattern.sites for v in self.partition[s])

    def num_vertices(self) -> int:
        return len(self.sort_of)

    def edge_pairs(self, e: str) -> list[tuple[Vertex, Vertex]]:
        return sorted(self.rel[e].items(), key=lambda p: sort_key(p[0]))

    def to_json(self, include_pattern: bool = True) -> dict:
        out = {
            "partition": {s: [render_vertex(v) for v in vs] for s, vs in self.partition.items()},
            "edges": {e: [[render_vertex(v), render_vertex(w)] for v, w in self.edge_pairs(e)] for e in self.pattern.edges},
        }
        if include_pattern:
            out["pattern"] = self.pattern.to_json()
        return out

    @classmethod
    def from_json(cls, data: dict, pattern: IncidencePattern | None = None) -> "IGraph":
        try:
            if pattern is None:
                pattern = IncidencePattern.from_json(data["pattern"])
            edges = {e: [tuple(p) for p in pairs] for e, pairs in data.get("edges", {}).items()}
            return cls.build(pattern, data["partition"], edges, symmetrize=True)
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed I-graph JSON: {exc}") from exc


def render_vertex(v: Vertex) -> str | int:
    if isinstance(v, tuple):
        return "@".join(str(render_vertex(x)) for x in v)
    if isinstance(v, int):
        return v
    return str(v)


def validate_igraph(h: IGraph) -> list[str]:
    p = h.pattern
    problems = [f"pattern: {x}" for x in validate_pattern(p)]
    seen: dict = {}
    for s, vs in h.partition.items():
        if s not in p.site_index:
            problems.append(f"partition cell for unknown site {s}")
        for v in vs:
            if v in seen:
                problems.append(f"vertex {v!r} in cells {seen[v]} and {s}")
            seen[v] = s
    for e in p.edges:
        r = h.rel.get(e, {})
        images = list(r.values())
        if len(set(images)) != len(images):
            problems.append(f"edge {e} is not injective")
        for v, w in r.items():
            if seen.get(v) != p.src[e] or seen.get(w) != p.tgt[e]:
                problems.append(f"edge {e} pair ({v!r},{w!r}) breaks sorts")
            if h.rel.get(p.rev[e], {}).get(w) != v:
                problems.append(f"edge {e} pair ({v!r},{w!r}) missing from reverse {p.rev[e]}")
    return problems


def require_valid_igraph(h: IGraph) -> IGraph:
    problems = validate_igraph(h)
    if problems:
        raise ValidationError("invalid I-graph", problems)
    return h


@dataclass(frozen=True)
class PathWord:
    start: str
    edges: tuple[str, ...] = ()

    def end(self, p: IncidencePattern) -> str:
        return p.tgt[self.edges[-1]] if self.edges else self.start

    def is_path(self, p: IncidencePattern) -> bool:
        cur = self.start
        for e in self.edges:
            if p.src.get(e) != cur:
                return False
            cur = p.tgt[e]
        return True

    def inverse(self, p: IncidencePattern) -> "PathWord":
        return PathWord(self.end(p), tuple(p.rev[e] for e in reversed(self.edges)))

    def then(self, other: "PathWord") -> "PathWord":
        return PathWord(self.start, self.edges + other.edges)


@dataclass(frozen=True)
class PartialMap:
    source: str
    target: str
    mapping: Mapping[Vertex, Vertex]

    def compose(self, other: "PartialMap") -> "PartialMap":
        """Apply ``self`` first, then ``other``."""
        m = {v: other.mapping[w] for v, w in self.mapping.items() if w in other.mapping}
        return PartialMap(self.source, other.target, m)

    def inverse(self) -> "PartialMap":
        return PartialMap(self.target, self.source, {w: v for v, w in self.mapping.items()})

    def key(self) -> tuple:
        return (self.source, self.target, frozenset(self.mapping.items()))

    def is_identity_restriction(self) -> bool:
        return self.source == self.target and all(v == w for v, w in self.mapping.items())

    def __eq__(self, other) -> bool:
        return isinstance(other, PartialMap) and self.key() == other.key()

    def __hash__(self) -> int:
        return hash(self.key())


def identity_map(h: IGraph, s: str) -> PartialMap:
    return PartialMap(s, s, {v: v for v in h.partition[s]})


def eval_word(h: IGraph, w: PathWord) -> PartialMap:
    p = h.pattern
    if w.start not in p.site_index or not w.is_path(p):
        raise ValidationError(f"word {w.edges} from {w.start} is not a path in the pattern")
    m = {v: v for v in h.partition[w.start]}
    for e in w.edges:
        r = h.rel[e]
        m = {v: r[x] for v, x in m.items() if x in r}
    return PartialMap(w.start, w.end(p), m)


def components(h: IGraph) -> list[list[Vertex]]:
    """Connected components of the underlying undirected graph, in vertex order."""
    adj = _adjacency(h)
    seen: set = set()
    out = []
    for v in h.vertices:
        if v in seen:
            continue
        comp = [v]
        seen.add(v)
        i = 0
        while i < len(comp):
            for _, w in adj[comp[i]]:
                if w not in seen:
                    seen.add(w)
                    comp.append(w)
            i += 1
        out.append(comp)
    return out


def _adjacency(h: IGraph) -> dict[Vertex, list[tuple[str, Vertex]]]:
    adj: dict = {v: [] for v in h.vertices}
    for e in h.pattern.edges:
        for v, w in h.rel[e].items():
            adj[v].append((e, w))
    return adj


def _bfs_word(h: IGraph, start: Vertex, goal: Vertex) -> tuple[str, ...]:
    adj = _adjacency(h)
    prev = {start: None}
    q = deque([start])
    while q:
        v = q.popleft()
        if v == goal:
            break
        for e, w in adj[v]:
            if w not in prev:
                prev[w] = (v, e)
                q.append(w)
    word = []
    cur = goal
    while prev[cur] is not None:
        v, e = prev[cur]
        word.append(e)
        cur = v
    return tuple(reversed(word))


@dataclass(frozen=True)
class CoherenceReport:
    ok: bool
    word: PathWord | None = None
    vertex: Vertex | None = None
    image: Vertex | None = None


def is_coherent(h: IGraph) -> CoherenceReport:
    """Coherent iff no connected component holds two vertices of one sort.

    A path between two such vertices is a cyclic word whose map moves a vertex,
    and conversely any moved vertex lies on such a path.
    """
    sort_of = h.sort_of
    for comp in components(h):
        first: dict[str, Vertex] = {}
        for v in comp:
            s = sort_of[v]
            if s in first:
                word = _bfs_word(h, first[s], v)
                return CoherenceReport(False, PathWord(s, word), first[s], v)
            first[s] = v
    return CoherenceReport(True)


def reachable_maps(h: IGraph, s: str, cap: int = 200_000) -> dict[str, set[PartialMap]]:
    """Least fixpoint of all word maps out of ``s``, grouped by target sort."""
    p = h.pattern
    start = identity_map(h, s)
    seen = {start}
    queue = deque([start])
    while queue:
        m = queue.popleft()
        for e in p.out_edges.get(m.target, ()):
            r = h.rel[e]
            nm = PartialMap(s, p.tgt[e], {v: r[x] for v, x in m.mapping.items() if x in r})
            if nm not in seen:
                seen.add(nm)
                if len(seen) > cap:
                    raise SizeGuardError(f"more than {cap} distinct word maps from {s}")
                queue.append(nm)
    out: dict[str, set[PartialMap]] = {t: set() for t in p.sites}
    for m in seen:
        out[m.target].add(m)
    return out


def coherent_by_fixpoint(h: IGraph) -> bool:
    """Reference decision of coherence by enumerating every cyclic word map."""
    for s in h.pattern.sites:
        if not all(m.is_identity_restriction() for m in reachable_maps(h, s)[s]):
            return False
    return True


def coherent_overlap(h: IGraph, s: str, t: str) -> PartialMap:
    """Union of all word maps from ``s`` to ``t``; needs a coherent I-graph."""
    if not is_coherent(h).ok:
        raise ValidationError("overlap maps need a coherent I-graph")
    sort_of = h.sort_of
    m = {}
    for comp in components(h):
        here = [v for v in comp if sort_of[v] == s]
        there = [v for v in comp if sort_of[v] == t]
        if here and there:
            m[here[0]] = there[0]
    return PartialMap(s, t, m)


@dataclass(frozen=True)
class CompletenessReport:
    ok: bool
    edge: str | None = None
    vertex: Vertex | None = None


def is_complete(h: IGraph) -> CompletenessReport:
    p = h.pattern
    for e in p.edges:
        r = h.rel[e]
        for v in h.partition[p.src[e]]:
            if v not in r:
                return CompletenessReport(False, e, v)
        if len(r) != len(h.partition[p.tgt[e]]):
            return CompletenessReport(False, e, None)
    return CompletenessReport(True)


def direct_product_with_pattern(h: IGraph) -> IGraph:
    """The complete I-graph on ``V x S`` whose diagonal carries ``h``."""
    p = h.pattern
    vs = h.vertices
    part = {s: [(v, s) for v in vs] for s in p.sites}
    rel: dict[str, dict] = {e: {} for e in p.edges}
    for e, er in p.pairs:
        s, t = p.src[e], p.tgt[e]
        r = h.rel[e]
        fwd, bwd = rel[e], rel[er]
        if s != t:
            touched = set(r) | set(r.values())
            for v, w in r.items():
                fwd[(v, s)] = (w, t)
                fwd[(w, s)] = (v, t)
            for v in vs:
                if v not in touched:
                    fwd[(v, s)] = (v, t)
        else:
            for v, w in r.items():
                fwd[(v, s)] = (w, s)
            for first, last in _maximal_paths(r, vs):
                fwd[(last, s)] = (first, s)
        for a, b in fwd.items():
            bwd[b] = a
    return IGraph(p, {s: tuple(part[s]) for s in p.sites}, rel)


def _maximal_paths(r: Mapping, vs: Iterable) -> list[tuple]:
    """(first, last) of each maximal directed path of a partial injection, cycles skipped."""
    preimage = set(r.values())
    out = []
    for v in vs:
        if v in preimage:
            continue
        cur = v
        while cur in r:
            cur = r[cur]
        out.append((v, cur))
    return out


def complete_igraph(h: IGraph) -> IGraph:
    """Union of the components of ``h x I`` that meet the diagonal."""
    full = direct_product_with_pattern(h)
    diag = {(v, s) for s, cell in h.partition.items() for v in cell}
    keep = set()
    for comp in components(full):
        if any(x in diag for x in comp):
            keep.update(comp)
    return induced_subgraph(full, keep)


def induced_subgraph(h: IGraph, keep: set) -> IGraph:
    part = {s: tuple(v for v in vs if v in keep) for s, vs in h.partition.items()}
    rel = {e: {v: w for v, w in r.items() if v in keep and w in keep} for e, r in h.rel.items()}
    return IGraph(h.pattern, part, rel)


def diagonal_embedding(h: IGraph) -> dict[Vertex, Vertex]:
    return {v: (v, s) for s, cell in h.partition.items() for v in cell}


def completion_or_self(h: IGraph) -> IGraph:
    """Complete inputs are their own completion up to isomorphism."""
    return h if is_complete(h).ok else complete_igraph(h)


def reduct(h: IGraph, alpha: Iterable[str]) -> IGraph:
    a = set(alpha)
    p = h.pattern
    unknown = a - set(p.edges)
    if unknown:
        raise ValidationError(f"unknown edges {sorted(unknown)}")
    open_ = [e for e in a if p.rev[e] not in a]
    if open_:
        raise ValidationError(f"edge set not closed under reversal: {sorted(open_)}")
    return IGraph(p.restrict(a), h.partition, {e: h.rel[e] for e in p.edges if e in a})


def drop_edges_outside(h: IGraph, alpha: Iterable[str]) -> IGraph:
    """Same pattern, with every relation outside ``alpha`` emptied."""
    a = set(alpha)
    return IGraph(h.pattern, h.partition, {e: (r if e in a else {}) for e, r in h.rel.items()})


def disjoint_union(*graphs: IGraph) -> IGraph:
    """Tag vertices with the operand index; all operands share one pattern."""
    p = graphs[0].pattern
    part: dict[str, list] = {s: [] for s in p.sites}
    rel: dict[str, dict] = {e: {} for e in p.edges}
    for i, g in enumerate(graphs):
        for s, vs in g.partition.items():
            part[s].extend((i, v) for v in vs)
        for e, r in g.rel.items():
            rel[e].update({(i, v): (i, w) for v, w in r.items()})
    return IGraph(p, {s: tuple(vs) for s, vs in part.items()}, rel)


def pattern_as_igraph(p: IncidencePattern) -> IGraph:
    """The pattern itself as a complete I-graph with one vertex per site."""
    return IGraph(p, {s: (s,) for s in p.sites}, {e: {p.src[e]: p.tgt[e]} for e in p.edges})


def find_isomorphism(h1: IGraph, h2: IGraph) -> dict | None:
    """Sort- and edge-preserving bijection, or None.

    Partial bijections make the image of one vertex fix its whole component,
    so components are matched one by one with propagation.
    """
    if h1.pattern.edges != h2.pattern.edges or h1.pattern.sites != h2.pattern.sites:
        return None
    if any(len(h1.partition[s]) != len(h2.partition[s]) for s in h1.pattern.sites):
        return None
    comps2 = components(h2)
    comp_of2 = {v: i for i, c in enumerate(comps2) for v in c}
    used = set()
    iso: dict = {}
    for comp in components(h1):
        root = comp[0]
        s = h1.sort_of[root]
        found = None
        for j, c2 in enumerate(comps2):
            if j in used or len(c2) != len(comp):
                continue
            for cand in c2:
                if h2.sort_of[cand] != s:
                    continue
                m = _propagate(h1, h2, root, cand, len(comp))
                if m is not None:
                    found = (j, m)
                    break
            if found:
                break
        if found is None:
            return None
        used.add(found[0])
        iso.update(found[1])
    return iso


def _propagate(h1: IGraph, h2: IGraph, a: Vertex, b: Vertex, size: int) -> dict | None:
    m = {a: b}
    inv = {b: a}
    stack = [a]
    p = h1.pattern
    while stack:
        v = stack.pop()
        w = m[v]
        for e in p.out_edges.get(h1.sort_of[v], ()):
            x = h1.rel[e].get(v)
            y = h2.rel[e].get(w)
            if (x is None) != (y is None):
                return None
            if x is None:
                continue
            if x in m:
                if m[x] != y:
                    return None
            else:
                if y in inv:
                    return None
                m[x] = y
                inv[y] = x
                stack.append(x)
    return m if len(m) == size else None


def is_isomorphic(h1: IGraph, h2: IGraph) -> bool:
    return find_isomorphism(h1, h2) is not None


def check_reduct_closure(h: IGraph, alpha: Iterable[str]) -> list[str]:
    """Compare the alpha-part of the completion with the completion of ``h`` stripped to alpha.

    The stripped graph keeps the full pattern with empty relations outside
    alpha.  Checks that the vertices of ``complete(h)`` sit inside its completion,
    that alpha-edges agree there, and that this vertex set is closed under
    alpha-edges of the larger graph.
    """
    a = set(alpha)
    reduct(h, a)
    big = complete_igraph(drop_edges_outside(h, a))
    small = complete_igraph(h)
    vs = set(small.vertices)
    problems = []
    missing = vs - set(big.vertices)
    if missing:
        problems.append(f"{len(missing)} vertices of the completion are absent from the reduct completion")
        return problems
    for e in a:
        r_small = small.rel[e]
        r_big = big.rel[e]
        for v in vs:
            w = r_big.get(v)
            if w is not None and w not in vs:
                problems.append(f"vertex {v!r} leaves the completion along {e}")
            if r_small.get(v) != w:
                problems.append(f"edge {e} at {v!r} differs: {r_small.get(v)!r} vs {w!r}")
    return problems


def igraph_to_dot(h: IGraph) -> str:
    palette = ["lightblue", "lightpink", "palegreen", "khaki", "plum", "lightsalmon", "lightcyan", "wheat"]
    lines = ["digraph igraph {"]
    for i, s in enumerate(h.pattern.sites):
        colour = palette[i % len(palette)]
        for v in h.partition[s]:
            lines.append(f'  "{render_vertex(v)}" [style=filled, fillcolor={colour}, label="{render_vertex(v)}"];')
    for e, _ in h.pattern.pairs:
        for v, w in h.edge_pairs(e):
            lines.append(f'  "{render_vertex(v)}" -> "{render_vertex(w)}" [label="{e}"];')
    lines.append("}")
    return "\n".join(lines)


def dump_igraph(h: IGraph) -> str:
    return json.dumps(h.to_json(), indent=2)


def check_pattern(h: IGraph) -> IGraph:
    require_valid(h.pattern)
    return require_valid_igraph(h)

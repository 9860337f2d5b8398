"""Finite groupoids generated by one element per pattern edge.

Elements are integers.  ``src``/``tgt`` give site indices, and ``right[e, g]``
is ``g * g_e`` (or -1 when ``tgt(g) != src(e)``).  Products read left to right:
``g * h`` applies ``g`` first.  Element ids follow breadth-first order from the
identities, so every element's BFS parent has a smaller id.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import BudgetExceeded, SizeGuardError, ValidationError
from .igraph import IGraph, PathWord, completion_or_self, components, pattern_as_igraph
from .incidence import IncidencePattern, PatternCovering

DEFAULT_MAX_ELEMENTS = 200_000


class Groupoid:
    def __init__(self, pattern: IncidencePattern, src, tgt, right, identity: Sequence[int]):
        self.pattern = pattern
        self.src = np.asarray(src, dtype=np.int64)
        self.tgt = np.asarray(tgt, dtype=np.int64)
        self.n = len(self.src)
        self.right = np.asarray(right, dtype=np.int64).reshape(len(pattern.edges), self.n)
        self.identity = np.asarray(identity, dtype=np.int64)
        self.edge_index = {e: i for i, e in enumerate(pattern.edges)}
        self.edge_src = np.array([pattern.site_index[pattern.src[e]] for e in pattern.edges], dtype=np.int64)
        self.edge_tgt = np.array([pattern.site_index[pattern.tgt[e]] for e in pattern.edges], dtype=np.int64)
        self._labels: dict[int, tuple[int, np.ndarray]] = {}
        self._member: dict[int, np.ndarray] = {}
        self._tree()

    def _tree(self) -> None:
        n = self.n
        parent = np.full(n, -1, dtype=np.int64)
        pedge = np.full(n, -1, dtype=np.int64)
        depth = np.full(n, -1, dtype=np.int64)
        order = [int(x) for x in self.identity]
        depth[order] = 0
        i = 0
        while i < len(order):
            g = order[i]
            for ei in range(len(self.pattern.edges)):
                x = self.right[ei, g]
                if x >= 0 and depth[x] < 0:
                    parent[x] = g
                    pedge[x] = ei
                    depth[x] = depth[g] + 1
                    order.append(int(x))
            i += 1
        if len(order) != n:
            raise ValidationError("groupoid is not generated by its generators")
        self.parent, self.parent_edge, self.depth = parent, pedge, depth
        self.bfs_order = np.array(order, dtype=np.int64)

    @classmethod
    def from_tables(cls, pattern: IncidencePattern, src, tgt, right, identities: Sequence[int]) -> "Groupoid":
        """Build from raw tables, renumbering elements into BFS order."""
        src = np.asarray(src, dtype=np.int64)
        n = len(src)
        right = np.asarray(right, dtype=np.int64).reshape(len(pattern.edges), n)
        order = _bfs_numbering(right, [int(x) for x in identities], n)
        if len(order) != n:
            raise ValidationError("groupoid is not generated by its generators")
        new_of = np.empty(n, dtype=np.int64)
        new_of[order] = np.arange(n)
        r2 = np.where(right >= 0, new_of[np.maximum(right, 0)], -1)[:, order]
        return cls(pattern, src[order], np.asarray(tgt, dtype=np.int64)[order], r2, new_of[list(identities)])

    # basic algebra

    def site(self, s: str) -> int:
        return self.pattern.site_index[s]

    def gen(self, e: str) -> int:
        ei = self.edge_index[e]
        return int(self.right[ei, self.identity[self.edge_src[ei]]])

    def word(self, g: int) -> tuple[str, ...]:
        out = []
        while self.parent[g] >= 0:
            out.append(self.pattern.edges[self.parent_edge[g]])
            g = self.parent[g]
        return tuple(reversed(out))

    def path_word(self, g: int) -> PathWord:
        return PathWord(self.pattern.sites[self.src[g]], self.word(g))

    def apply_word(self, g: int, word: Iterable[str]) -> int:
        for e in word:
            g = int(self.right[self.edge_index[e], g])
            if g < 0:
                raise ValidationError(f"edge {e} does not compose here")
        return g

    def evaluate(self, w: PathWord) -> int:
        return self.apply_word(int(self.identity[self.site(w.start)]), w.edges)

    def mul(self, g: int, h: int) -> int:
        if self.tgt[g] != self.src[h]:
            raise ValidationError(f"elements {g} and {h} do not compose")
        return self.apply_word(g, self.word(h))

    def inv(self, g: int) -> int:
        rev = self.pattern.rev
        return self.apply_word(int(self.identity[self.tgt[g]]), [rev[e] for e in reversed(self.word(g))])

    @cached_property
    def inverse_table(self) -> np.ndarray:
        """Inverse of every element, via ``(x g_e)^-1 = g_e^-1 x^-1``."""
        inv = np.full(self.n, -1, dtype=np.int64)
        inv[self.identity] = self.identity
        for g in self.bfs_order:
            p = self.parent[g]
            if p < 0:
                continue
            ei = self.parent_edge[g]
            # g = p * g_e, so g^-1 = g_{e^-1} * p^-1
            inv[g] = self.left_mul(self.gen(self.pattern.rev[self.pattern.edges[ei]]), int(inv[p]))
        return inv

    def left_mul(self, x: int, y: int) -> int:
        return self.apply_word(x, self.word(y))

    def left_table(self, x: int) -> np.ndarray:
        """``y -> x * y`` on all ``y`` with ``src(y) == tgt(x)``; -1 elsewhere."""
        out = np.full(self.n, -1, dtype=np.int64)
        t = self.tgt[x]
        mask = self.src == t
        out[self.identity[t]] = x
        ids = self.bfs_order[mask[self.bfs_order]]
        layers = self.depth[ids]
        for d in range(1, int(layers.max(initial=0)) + 1):
            idx = ids[layers == d]
            out[idx] = self.right[self.parent_edge[idx], out[self.parent[idx]]]
        return out

    def is_trivial(self) -> bool:
        return self.n == len(self.pattern.sites)

    def elements_between(self, s: str | None = None, t: str | None = None) -> np.ndarray:
        mask = np.ones(self.n, dtype=bool)
        if s is not None:
            mask &= self.src == self.site(s)
        if t is not None:
            mask &= self.tgt == self.site(t)
        return np.nonzero(mask)[0]

    # subgroupoids and cosets over reversal-pair bitmasks

    @property
    def num_pairs(self) -> int:
        return len(self.pattern.pairs)

    def mask_edges(self, mask: int) -> list[int]:
        return [self.edge_index[e] for e in sorted(self.pattern.edges_of_mask(mask))]

    def coset_labels(self, mask: int) -> tuple[int, np.ndarray]:
        """Component labels of the Cayley graph restricted to the edges in ``mask``."""
        if mask not in self._labels:
            eis = self.mask_edges(mask)
            rows, cols = [], []
            for ei in eis:
                ok = self.right[ei] >= 0
                rows.append(np.nonzero(ok)[0])
                cols.append(self.right[ei][ok])
            if rows:
                r = np.concatenate(rows)
                c = np.concatenate(cols)
            else:
                r = c = np.zeros(0, dtype=np.int64)
            m = coo_matrix((np.ones(len(r), dtype=np.int8), (r, c)), shape=(self.n, self.n))
            k, lab = connected_components(m, directed=False)
            self._labels[mask] = (k, lab)
        return self._labels[mask]

    def member(self, mask: int) -> np.ndarray:
        """Boolean membership vector of the subgroupoid generated by ``mask``."""
        if mask not in self._member:
            _, lab = self.coset_labels(mask)
            self._member[mask] = lab == lab[self.identity[self.src]]
        return self._member[mask]

    def coset(self, base: int, mask: int) -> np.ndarray:
        _, lab = self.coset_labels(mask)
        return np.nonzero(lab == lab[base])[0]


def _bfs_numbering(right: np.ndarray, identities: list[int], n: int) -> list[int]:
    seen = np.zeros(n, dtype=bool)
    order = list(identities)
    seen[order] = True
    i = 0
    while i < len(order):
        g = order[i]
        for x in right[:, g]:
            if x >= 0 and not seen[x]:
                seen[x] = True
                order.append(int(x))
        i += 1
    return order


@dataclass(frozen=True)
class Coset:
    base: int
    alpha: frozenset
    members: frozenset


def coset(g: Groupoid, base: int, alpha: Iterable[str]) -> Coset:
    a = frozenset(alpha)
    _check_closed(g.pattern, a)
    return Coset(base, a, frozenset(int(x) for x in g.coset(base, g.pattern.mask_of(a))))


def coset_by_bfs(g: Groupoid, base: int, alpha: Iterable[str]) -> frozenset:
    """Reference closure under right multiplication, independent of the label cache."""
    eis = [g.edge_index[e] for e in alpha]
    seen = {base}
    stack = [base]
    while stack:
        x = stack.pop()
        for ei in eis:
            y = int(g.right[ei, x])
            if y >= 0 and y not in seen:
                seen.add(y)
                stack.append(y)
    return frozenset(seen)


def _check_closed(p: IncidencePattern, alpha: Iterable[str]) -> None:
    a = set(alpha)
    bad = [e for e in a if e not in p.rev or p.rev[e] not in a]
    if bad:
        raise ValidationError(f"edge set not closed under reversal: {sorted(bad)}")


def subgroupoid(g: Groupoid, alpha: Iterable[str]) -> Groupoid:
    """The subgroupoid generated by ``alpha``, as a groupoid over the reduced pattern."""
    a = set(alpha)
    _check_closed(g.pattern, a)
    members = np.nonzero(g.member(g.pattern.mask_of(a)))[0]
    sub_pattern = g.pattern.restrict(a)
    new_of = np.full(g.n, -1, dtype=np.int64)
    new_of[members] = np.arange(len(members))
    rows = []
    for e in sub_pattern.edges:
        r = g.right[g.edge_index[e], members]
        rows.append(np.where(r >= 0, new_of[np.maximum(r, 0)], -1))
    right = np.array(rows, dtype=np.int64).reshape(len(sub_pattern.edges), len(members))
    return Groupoid.from_tables(sub_pattern, g.src[members], g.tgt[members], right, list(new_of[g.identity]))


# closure of bijections on complete I-graphs


class _GraphPart:
    """A complete I-graph in index form; states are tables ``V_s -> V_t``."""

    def __init__(self, h: IGraph):
        p = h.pattern
        self.index = {s: {v: i for i, v in enumerate(h.partition[s])} for s in p.sites}
        self.size = [len(h.partition[s]) for s in p.sites]
        self.rho = []
        for e in p.edges:
            s, t = p.src[e], p.tgt[e]
            r = h.rel[e]
            arr = np.empty(self.size[p.site_index[s]], dtype=np.int32)
            for v, i in self.index[s].items():
                arr[i] = self.index[t][r[v]]
            self.rho.append(arr)

    def identity(self, s: int):
        return np.arange(self.size[s], dtype=np.int32)

    def step(self, ei: int, state):
        return self.rho[ei][state]

    def key(self, state) -> bytes:
        return state.tobytes()


class _GroupPart:
    """A groupoid acting on its own Cayley graph; states are element ids."""

    def __init__(self, g: Groupoid):
        self.g = g

    def identity(self, s: int):
        return int(self.g.identity[s])

    def step(self, ei: int, state):
        return int(self.g.right[ei, state])

    def key(self, state) -> int:
        return state


def _closure(pattern: IncidencePattern, parts: list, max_elements: int, where: str) -> Groupoid:
    edge_src = [pattern.site_index[pattern.src[e]] for e in pattern.edges]
    edge_tgt = [pattern.site_index[pattern.tgt[e]] for e in pattern.edges]
    out_by_site: list[list[int]] = [[] for _ in pattern.sites]
    for ei, s in enumerate(edge_src):
        out_by_site[s].append(ei)
    ids: dict = {}
    states: list = []
    src: list[int] = []
    tgt: list[int] = []
    right: list[list[int]] = [[] for _ in pattern.edges]

    def add(s: int, t: int, st: tuple) -> int:
        key = (s, t) + tuple(part.key(x) for part, x in zip(parts, st))
        got = ids.get(key)
        if got is not None:
            return got
        gid = len(states)
        if gid >= max_elements:
            raise BudgetExceeded(f"groupoid closure exceeded {max_elements} elements", where=where)
        ids[key] = gid
        states.append(st)
        src.append(s)
        tgt.append(t)
        for row in right:
            row.append(-1)
        return gid

    identities = [add(s, s, tuple(part.identity(s) for part in parts)) for s in range(len(pattern.sites))]
    i = 0
    while i < len(states):
        st = states[i]
        t = tgt[i]
        for ei in out_by_site[t]:
            nst = tuple(part.step(ei, x) for part, x in zip(parts, st))
            right[ei][i] = add(src[i], edge_tgt[ei], nst)
        i += 1
    return Groupoid.from_tables(pattern, src, tgt, np.array(right, dtype=np.int64).reshape(len(pattern.edges), len(src)), identities)


def cym(h: IGraph, max_elements: int = DEFAULT_MAX_ELEMENTS) -> Groupoid:
    """The groupoid of all word bijections on the completion of ``h``."""
    return _closure(h.pattern, [_GraphPart(completion_or_self(h))], max_elements, "cym")


def extend(g: Groupoid, h: IGraph, max_elements: int = DEFAULT_MAX_ELEMENTS, where: str = "extend") -> Groupoid:
    """The groupoid abstracted from the Cayley graph of ``g`` joined with the completion of ``h``.

    States pair an element of ``g`` (its action on the Cayley graph) with a
    table on the completion of ``h``.
    """
    if h.pattern.edges != g.pattern.edges or h.pattern.sites != g.pattern.sites:
        raise ValidationError("pattern mismatch")
    return _closure(g.pattern, [_GroupPart(g), _GraphPart(completion_or_self(h))], max_elements, where)


def cym_of_union(graphs: Sequence[IGraph], max_elements: int = DEFAULT_MAX_ELEMENTS) -> Groupoid:
    return _closure(graphs[0].pattern, [_GraphPart(completion_or_self(x)) for x in graphs], max_elements, "cym")


def entangled_pairs(g: Groupoid) -> list[int]:
    """Pairs whose generator lies in the subgroupoid generated by all other pairs."""
    full = (1 << g.num_pairs) - 1
    out = []
    for i, (e, _) in enumerate(g.pattern.pairs):
        if g.member(full & ~(1 << i))[g.gen(e)]:
            out.append(i)
    return out


def parity_igraph(p: IncidencePattern, pair: int) -> IGraph:
    """Two vertices per site; edges of ``pair`` swap them, every other edge fixes them.

    Its groupoid counts crossings of the pair modulo 2, which separates that
    generator from the subgroupoid of the other pairs.
    """
    e, er = p.pairs[pair]
    part = {s: ((s, 0), (s, 1)) for s in p.sites}
    rel = {}
    for f in p.edges:
        a, b = p.src[f], p.tgt[f]
        flip = f in (e, er)
        rel[f] = {(a, i): (b, 1 - i if flip else i) for i in (0, 1)}
    return IGraph(p, part, rel)


def cayley_graph(g: Groupoid) -> IGraph:
    p = g.pattern
    part = {s: tuple(int(x) for x in np.nonzero(g.tgt == i)[0]) for i, s in enumerate(p.sites)}
    rel = {}
    for e in p.edges:
        row = g.right[g.edge_index[e]]
        ok = np.nonzero(row >= 0)[0]
        rel[e] = dict(zip(ok.tolist(), row[ok].tolist()))
    return IGraph(p, part, rel)


def trivial_groupoid(p: IncidencePattern) -> Groupoid:
    """The groupoid abstracted from the pattern viewed as a one-vertex-per-site I-graph."""
    return cym(pattern_as_igraph(p))


# compatibility


@dataclass(frozen=True)
class CompatibilityReport:
    ok: bool
    relator: PathWord | None = None
    element: int | None = None
    edge: str | None = None


def word_tables(g: Groupoid, h: IGraph) -> tuple[_GraphPart, list[np.ndarray], np.ndarray]:
    """Tables of each element's BFS word acting on the completion of ``h``.

    Returns the index form of the completion, one matrix per source site (rows
    follow ``g.elements_between(s)``) and each element's row position.
    """
    hb = completion_or_self(h)
    part = _GraphPart(hb)
    pos = np.zeros(g.n, dtype=np.int64)
    mats = []
    for si in range(len(g.pattern.sites)):
        ids = np.nonzero(g.src == si)[0]
        pos[ids] = np.arange(len(ids))
        mats.append(np.zeros((len(ids), part.size[si]), dtype=np.int32))
    for si in range(len(g.pattern.sites)):
        mats[si][pos[g.identity[si]]] = np.arange(part.size[si])
    maxd = int(g.depth.max(initial=0))
    for d in range(1, maxd + 1):
        layer = np.nonzero(g.depth == d)[0]
        for si in range(len(g.pattern.sites)):
            here = layer[g.src[layer] == si]
            if not len(here):
                continue
            for ei in np.unique(g.parent_edge[here]):
                sel = here[g.parent_edge[here] == ei]
                mats[si][pos[sel]] = part.rho[ei][mats[si][pos[g.parent[sel]]]]
    return part, mats, pos


def _relator(g: Groupoid, x: int, ei: int) -> PathWord:
    e = g.pattern.edges[ei]
    y = int(g.right[ei, x])
    word = g.word(x) + (e,) + tuple(g.pattern.rev[f] for f in reversed(g.word(y)))
    return PathWord(g.pattern.sites[g.src[x]], word)


def orbit_map(g: Groupoid, part: "_GraphPart", site: int, root: int) -> np.ndarray:
    """Image of ``root`` under each element's BFS word; rows follow element ids, -1 off-site."""
    img = np.full(g.n, -1, dtype=np.int64)
    img[g.identity[site]] = root
    ids = g.bfs_order[g.src[g.bfs_order] == site]
    layers = g.depth[ids]
    for d in range(1, int(layers.max(initial=0)) + 1):
        here = ids[layers == d]
        pe = g.parent_edge[here]
        for ei in np.unique(pe):
            sel = here[pe == ei]
            img[sel] = part.rho[ei][img[g.parent[sel]]]
    return img


def is_compatible(g: Groupoid, h: IGraph) -> CompatibilityReport:
    """Every relator of ``g`` acts as the identity on the completion of ``h``.

    Relators are closed under conjugation and the completion is complete, so
    one base vertex per connected component decides the question.
    """
    if h.pattern.edges != g.pattern.edges or h.pattern.sites != g.pattern.sites:
        raise ValidationError("pattern mismatch")
    hb = completion_or_self(h)
    part = _GraphPart(hb)
    for comp in components(hb):
        s = hb.sort_of[comp[0]]
        si = g.pattern.site_index[s]
        img = orbit_map(g, part, si, part.index[s][comp[0]])
        ids = np.nonzero(g.src == si)[0]
        for ei in range(len(g.pattern.edges)):
            nxt = g.right[ei, ids]
            ok = nxt >= 0
            if not ok.any():
                continue
            a = ids[ok]
            bad = np.nonzero(part.rho[ei][img[a]] != img[nxt[ok]])[0]
            if len(bad):
                x = int(a[bad[0]])
                return CompatibilityReport(False, _relator(g, x, ei), x, g.pattern.edges[ei])
    return CompatibilityReport(True)


def is_compatible_by_tables(g: Groupoid, h: IGraph) -> CompatibilityReport:
    """Reference check acting with every element on every vertex of the completion."""
    if h.pattern.edges != g.pattern.edges or h.pattern.sites != g.pattern.sites:
        raise ValidationError("pattern mismatch")
    part, mats, pos = word_tables(g, h)
    for si in range(len(g.pattern.sites)):
        ids = np.nonzero(g.src == si)[0]
        if not len(ids):
            continue
        m = mats[si]
        for ei in range(len(g.pattern.edges)):
            nxt = g.right[ei, ids]
            ok = nxt >= 0
            if not ok.any():
                continue
            a = ids[ok]
            lhs = part.rho[ei][m[pos[a]]]
            rhs = m[pos[nxt[ok]]]
            bad = np.nonzero((lhs != rhs).any(axis=1))[0]
            if len(bad):
                x = int(a[bad[0]])
                return CompatibilityReport(False, _relator(g, x, ei), x, g.pattern.edges[ei])
    return CompatibilityReport(True)


# isomorphism


def groupoid_isomorphism(g1: Groupoid, g2: Groupoid) -> np.ndarray | None:
    """The generator-respecting isomorphism ``g1 -> g2`` if one exists."""
    if g1.pattern.edges != g2.pattern.edges or g1.pattern.sites != g2.pattern.sites or g1.n != g2.n:
        return None
    m = np.full(g1.n, -1, dtype=np.int64)
    m[g1.identity] = g2.identity
    for g in g1.bfs_order:
        p = g1.parent[g]
        if p >= 0:
            m[g] = g2.right[g1.parent_edge[g], m[p]]
            if m[g] < 0:
                return None
    if len(np.unique(m)) != g1.n:
        return None
    if not (g1.src == g2.src[m]).all() or not (g1.tgt == g2.tgt[m]).all():
        return None
    mapped = np.where(g1.right >= 0, m[np.maximum(g1.right, 0)], -1)
    if not (mapped == g2.right[:, m]).all():
        return None
    return m


def groupoid_isomorphic(g1: Groupoid, g2: Groupoid) -> bool:
    return groupoid_isomorphism(g1, g2) is not None


def check_groupoid_axioms(g: Groupoid, sample: int | None = None) -> list[str]:
    """Verify neutral elements, inverses, generator inversion and associativity.

    Associativity is checked over all composable triples, or over ``sample``
    pseudo-random ones (seeded) for larger groupoids.
    """
    problems = []
    p = g.pattern
    for e in p.edges:
        if g.inv(g.gen(e)) != g.gen(p.rev[e]):
            problems.append(f"generator of {p.rev[e]} is not the inverse of the generator of {e}")
    inv = g.inverse_table
    for x in range(g.n):
        s, t = g.src[x], g.tgt[x]
        if g.mul(int(g.identity[s]), x) != x or g.mul(x, int(g.identity[t])) != x:
            problems.append(f"identity not neutral at {x}")
        if g.mul(x, int(inv[x])) != g.identity[s] or g.mul(int(inv[x]), x) != g.identity[t]:
            problems.append(f"inverse fails at {x}")
        if len(problems) > 20:
            return problems
    rng = np.random.default_rng(0)
    triples = []
    if sample is None:
        for x in range(g.n):
            for y in np.nonzero(g.src == g.tgt[x])[0]:
                for z in np.nonzero(g.src == g.tgt[y])[0]:
                    triples.append((x, int(y), int(z)))
    else:
        for _ in range(sample):
            x = int(rng.integers(g.n))
            ys = np.nonzero(g.src == g.tgt[x])[0]
            y = int(rng.choice(ys))
            zs = np.nonzero(g.src == g.tgt[y])[0]
            triples.append((x, y, int(rng.choice(zs))))
    for x, y, z in triples:
        if g.mul(g.mul(x, y), z) != g.mul(x, g.mul(y, z)):
            problems.append(f"associativity fails at {(x, y, z)}")
            break
    return problems


# pattern covering by the groupoid's own incidence structure


def element_site(x: int) -> str:
    return f"g{x}"


def cayley_incidence_pattern(g: Groupoid) -> tuple[IncidencePattern, PatternCovering]:
    """Sites are elements; one edge ``x -> x * g_e`` per applicable generator."""
    p = g.pattern
    rows = []
    edge_proj = {}
    for x in range(g.n):
        for e in p.out_edges.get(p.sites[g.tgt[x]], ()):
            y = int(g.right[g.edge_index[e], x])
            eid = f"{element_site(x)}:{e}"
            rows.append((eid, element_site(x), element_site(y), f"{element_site(y)}:{p.rev[e]}"))
            edge_proj[eid] = e
    big = IncidencePattern.build([element_site(x) for x in range(g.n)], rows)
    site_proj = {element_site(x): p.sites[g.tgt[x]] for x in range(g.n)}
    return big, PatternCovering(big, p, site_proj, edge_proj)


# coset cycles


@dataclass(frozen=True)
class CosetCycle:
    elements: tuple[int, ...]
    masks: tuple[int, ...]

    @property
    def length(self) -> int:
        return len(self.elements)


@dataclass
class CycleSearchResult:
    status: str  # "acyclic", "found" or "unknown"
    cycles: list[CosetCycle] = field(default_factory=list)
    nodes: int = 0
    max_length: int = 0

    @property
    def acyclic(self) -> bool:
        return self.status == "acyclic"


class _CosetTools:
    """Cached coset data shared by the cycle search and the chain builder."""

    def __init__(self, g: Groupoid, max_pairs: int = 14):
        if g.num_pairs > max_pairs:
            raise SizeGuardError(f"{g.num_pairs} edge pairs exceed the subset cap of {max_pairs}")
        self.g = g
        self.full = (1 << g.num_pairs) - 1
        self._reach: dict = {}
        self._minimal: np.ndarray | None = None

    def member(self, mask: int) -> np.ndarray:
        return self.g.member(mask)

    def minimal_masks(self) -> np.ndarray:
        """``minimal[a, x]``: ``a`` is an inclusion-minimal mask whose subgroupoid holds ``x``."""
        if self._minimal is None:
            g = self.g
            masks = self.full + 1
            mem = np.array([g.member(a) for a in range(masks)])
            mini = mem.copy()
            for a in range(masks):
                b = a
                while b:
                    j = b & -b
                    mini[a] &= ~mem[a ^ j]
                    b ^= j
            self._minimal = mini
        return self._minimal

    def reach(self, beta: int, gamma: int, site: int) -> np.ndarray:
        """Flags over gamma-labels met by the beta-coset of the identity at ``site``."""
        key = (beta, gamma, site)
        if key not in self._reach:
            g = self.g
            k, lab = g.coset_labels(gamma)
            flags = np.zeros(k, dtype=bool)
            flags[lab[g.coset(int(g.identity[site]), beta)]] = True
            self._reach[key] = flags
        return self._reach[key]

    def separated(self, prev_mask: int, mask: int, next_mask: int, h: int, site: int) -> bool:
        """Whether ``G_{mask & prev}`` at the identity misses ``h G_{mask & next}``."""
        beta, gamma = mask & prev_mask, mask & next_mask
        _, lab = self.g.coset_labels(gamma)
        return not self.reach(beta, gamma, site)[lab[h]]


def find_coset_cycles(
    g: Groupoid, max_length: int, node_budget: int = 5_000_000, max_cycles: int = 1
) -> CycleSearchResult:
    """Search coset cycles of length 2..max_length starting at an identity.

    Each connecting element only needs the inclusion-minimal generator sets
    containing it: shrinking a set shrinks the cosets in the disjointness
    condition.  The search stops after ``max_cycles`` hits; hitting the node
    budget yields status "unknown".
    """
    result = CycleSearchResult("acyclic", max_length=max_length)
    if max_length < 2:
        return result
    tools = _CosetTools(g)
    mini = tools.minimal_masks()
    cand_masks: list[list[int]] = [[] for _ in range(g.n)]
    for a, x in zip(*np.nonzero(mini)):
        if a:
            cand_masks[int(x)].append(int(a))
    by_src: list[list[tuple[int, int]]] = [[] for _ in g.pattern.sites]
    for x in range(g.n):
        for a in cand_masks[x]:
            by_src[int(g.src[x])].append((x, a))
    inv = g.inverse_table
    nodes = 0

    class Done(Exception):
        pass

    def close(hs: list[int], masks: list[int], gs: list[int]) -> None:
        nonlocal nodes
        n = len(hs) + 1
        last = int(inv[gs[-1]])
        for a in cand_masks[last]:
            nodes += 1
            hs2, ms2 = hs + [last], masks + [a]
            ok = True
            for j in ([n - 2, n - 1, 0] if n > 2 else [0, 1]):
                if not tools.separated(ms2[j - 1], ms2[j], ms2[(j + 1) % n], hs2[j], int(g.tgt[gs[j]])):
                    ok = False
                    break
            if ok:
                result.cycles.append(CosetCycle(tuple(gs), tuple(ms2)))
                if len(result.cycles) >= max_cycles:
                    raise Done

    def extend(hs: list[int], masks: list[int], gs: list[int], n: int) -> None:
        nonlocal nodes
        if nodes > node_budget:
            raise BudgetExceeded("coset cycle search ran out of nodes", where=f"length {n}")
        i = len(hs)
        if i == n - 1:
            close(hs, masks, gs)
            return
        t = int(g.tgt[gs[-1]])
        for h, a in by_src[t]:
            nodes += 1
            if i >= 2 and not tools.separated(masks[i - 2], masks[i - 1], a, hs[i - 1], int(g.tgt[gs[i - 1]])):
                continue
            nxt = g.mul(gs[-1], h)
            extend(hs + [h], masks + [a], gs + [nxt], n)

    try:
        for n in range(2, max_length + 1):
            for s in range(len(g.pattern.sites)):
                extend([], [], [int(g.identity[s])], n)
    except Done:
        result.status = "found"
    except BudgetExceeded:
        result.status = "unknown"
    result.nodes = nodes
    if result.cycles and result.status != "unknown":
        result.status = "found"
    return result


def verify_coset_cycle(g: Groupoid, c: CosetCycle) -> list[str]:
    """Re-check a cycle straight from the definition with explicit coset sets."""
    problems = []
    n = c.length
    p = g.pattern
    alphas = [p.edges_of_mask(m) for m in c.masks]
    inv = g.inverse_table
    for i in range(n):
        a, b = c.elements[i], c.elements[(i + 1) % n]
        if g.src[a] != g.src[b]:
            problems.append(f"elements {a} and {b} have different sources")
            continue
        h = g.mul(int(inv[a]), b)
        if h not in coset_by_bfs(g, int(g.identity[g.src[h]]), alphas[i]):
            problems.append(f"connector {i} not in its subgroupoid")
        left = coset_by_bfs(g, a, alphas[i] & alphas[i - 1])
        right = coset_by_bfs(g, b, alphas[i] & alphas[(i + 1) % n])
        if left & right:
            problems.append(f"cosets at {i} intersect")
    return problems


def two_cycle_witness(g: Groupoid) -> tuple[int, int, int] | None:
    """An element lying in two subgroupoids but not in the one generated by their intersection."""
    tools = _CosetTools(g)
    masks = tools.full + 1
    for a in range(masks):
        ma = g.member(a)
        for b in range(a + 1, masks):
            extra = ma & g.member(b) & ~g.member(a & b)
            if extra.any():
                return int(np.nonzero(extra)[0][0]), a, b
    return None


def intersection_law_holds(g: Groupoid) -> bool:
    return two_cycle_witness(g) is None


# serialization


def groupoid_to_json(g: Groupoid) -> dict:
    return {
        "pattern": g.pattern.to_json(),
        "size": g.n,
        "src": [g.pattern.sites[i] for i in g.src],
        "tgt": [g.pattern.sites[i] for i in g.tgt],
        "right": {e: g.right[g.edge_index[e]].tolist() for e in g.pattern.edges},
        "identities": {s: int(g.identity[i]) for i, s in enumerate(g.pattern.sites)},
    }


def groupoid_from_json(data: dict) -> Groupoid:
    try:
        p = IncidencePattern.from_json(data["pattern"])
        src = [p.site_index[s] for s in data["src"]]
        tgt = [p.site_index[s] for s in data["tgt"]]
        right = np.array([data["right"][e] for e in p.edges], dtype=np.int64).reshape(len(p.edges), len(src))
        ids = [int(data["identities"][s]) for s in p.sites]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed groupoid JSON: {exc}") from exc
    return Groupoid.from_tables(p, src, tgt, right, ids)


def cayley_to_dot(g: Groupoid) -> str:
    from .igraph import igraph_to_dot

    return igraph_to_dot(cayley_graph(g))


def dump_groupoid(g: Groupoid) -> str:
    return json.dumps(groupoid_to_json(g))

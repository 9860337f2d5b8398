"""Symmetries of I-graphs, groupoids and hypergraphs, and their lifting through products."""

from __future__ import annotations

import itertools
from collections import defaultdict
from dataclasses import dataclass
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np
from scipy.cluster.hierarchy import DisjointSet

from .amalgam import BoosterConfig, BoostResult, ChainSpec, make_n_acyclic
from .errors import SizeGuardError, ValidationError
from .groupoid import Groupoid, cym, trivial_groupoid
from .hypergraph import Hypergraph, intersection_pattern, site_name
from .igraph import IGraph, find_isomorphism
from .incidence import IncidencePattern, PatternSymmetry, check_symmetry, identity_symmetry, symmetries_of_pattern

Vertex = Hashable


@dataclass(frozen=True)
class IGraphSymmetry:
    pattern_sym: PatternSymmetry
    vertex_map: Mapping[Vertex, Vertex]


@dataclass(frozen=True)
class GroupoidSymmetry:
    pattern_sym: PatternSymmetry
    element_map: np.ndarray

    def __call__(self, x: int) -> int:
        return int(self.element_map[x])


def check_igraph_symmetry(h: IGraph, eta: IGraphSymmetry) -> list[str]:
    p = h.pattern
    problems = check_symmetry(p, eta.pattern_sym)
    if problems:
        return problems
    f = eta.vertex_map
    sm, em = eta.pattern_sym.site_map, eta.pattern_sym.edge_map
    if set(f) != set(h.vertices) or set(f.values()) != set(h.vertices):
        return ["vertex map is not a permutation of the vertices"]
    for s, cell in h.partition.items():
        if {f[v] for v in cell} != set(h.partition[sm[s]]):
            problems.append(f"cell {s} is not sent onto cell {sm[s]}")
    for e, r in h.rel.items():
        if {(f[v], f[w]) for v, w in r.items()} != set(h.rel[em[e]].items()):
            problems.append(f"relation {e} is not sent onto relation {em[e]}")
    return problems


def igraph_symmetry_over(h: IGraph, eta: PatternSymmetry) -> IGraphSymmetry | None:
    """A vertex permutation of ``h`` realising the pattern symmetry ``eta``, if one exists."""
    p = h.pattern
    moved = IGraph(
        p,
        {s: h.partition[eta.site_map[s]] for s in p.sites},
        {e: h.rel[eta.edge_map[e]] for e in p.edges},
    )
    f = find_isomorphism(h, moved)
    return None if f is None else IGraphSymmetry(eta, f)


def igraph_symmetries(h: IGraph, candidates: Iterable[PatternSymmetry] | None = None) -> list[IGraphSymmetry]:
    """One I-graph symmetry over each pattern symmetry that admits one."""
    cands = symmetries_of_pattern(h.pattern) if candidates is None else candidates
    out = []
    for eta in cands:
        lifted = igraph_symmetry_over(h, eta)
        if lifted is not None:
            out.append(lifted)
    return out


def check_groupoid_symmetry(g: Groupoid, eta: GroupoidSymmetry, all_pairs_cap: int = 400) -> list[str]:
    """Generator, identity and product equations; all composable pairs are checked up to the cap."""
    p = g.pattern
    problems = check_symmetry(p, eta.pattern_sym)
    if problems:
        return problems
    m = eta.element_map
    if len(m) != g.n or sorted(m.tolist()) != list(range(g.n)):
        return ["element map is not a permutation"]
    sm, em = eta.pattern_sym.site_map, eta.pattern_sym.edge_map
    for i, s in enumerate(p.sites):
        if m[g.identity[i]] != g.identity[g.site(sm[s])]:
            problems.append(f"identity at {s} not sent to identity at {sm[s]}")
    for e in p.edges:
        if m[g.gen(e)] != g.gen(em[e]):
            problems.append(f"generator {e} not sent to generator {em[e]}")
        row, img = g.right[g.edge_index[e]], g.right[g.edge_index[em[e]]]
        ok = row >= 0
        if not np.array_equal(m[row[ok]], img[m[np.nonzero(ok)[0]]]):
            problems.append(f"right multiplication by {e} is not respected")
    if g.n <= all_pairs_cap and not problems:
        for x in range(g.n):
            for y in np.nonzero(g.src == g.tgt[x])[0]:
                if m[g.mul(x, int(y))] != g.mul(int(m[x]), int(m[y])):
                    problems.append(f"product of {x} and {int(y)} not respected")
                    return problems
    return problems


def lift_pattern_symmetry(g: Groupoid, eta: PatternSymmetry) -> GroupoidSymmetry | None:
    """Send the value of each word to the value of its image word; None when that is not well defined."""
    m = np.full(g.n, -1, dtype=np.int64)
    sm = eta.site_map
    for i, s in enumerate(g.pattern.sites):
        m[g.identity[i]] = g.identity[g.site(sm[s])]
    emap = np.array([g.edge_index[eta.edge_map[e]] for e in g.pattern.edges], dtype=np.int64)
    for x in g.bfs_order:
        par = g.parent[x]
        if par >= 0:
            m[x] = g.right[emap[g.parent_edge[x]], m[par]]
    sym = GroupoidSymmetry(eta, m)
    if (m < 0).any() or check_groupoid_symmetry(g, sym, all_pairs_cap=0):
        return None
    return sym


def lift_symmetry_to_cym(eta: IGraphSymmetry, h: IGraph, g: Groupoid | None = None) -> GroupoidSymmetry:
    problems = check_igraph_symmetry(h, eta)
    if problems:
        raise ValidationError("not a symmetry of the I-graph", problems)
    g = cym(h) if g is None else g
    sym = lift_pattern_symmetry(g, eta.pattern_sym)
    if sym is None:
        raise ValidationError("lifted map fails the groupoid symmetry equations")
    return sym


# symmetric booster


def _pair_perm(p: IncidencePattern, eta: PatternSymmetry) -> list[int]:
    return [p.pair_index[eta.edge_map[e]] for e, _ in p.pairs]


def _map_mask(mask: int, perm: Sequence[int]) -> int:
    out = 0
    for i, j in enumerate(perm):
        if mask >> i & 1:
            out |= 1 << j
    return out


def _closing_expander(syms: Sequence[PatternSymmetry]):
    def expand(g: Groupoid, specs: Iterable[ChainSpec]) -> list[ChainSpec]:
        lifts = []
        for eta in syms:
            lifted = lift_pattern_symmetry(g, eta)
            if lifted is None:
                raise ValidationError("a symmetry fails to lift to the current groupoid")
            lifts.append((lifted, _pair_perm(g.pattern, eta)))
        out: list[ChainSpec] = []
        seen = set()

        def key(c: ChainSpec) -> tuple:
            return (c.masks, c.bases, c.connectors)

        for spec in specs:
            if key(spec) in seen:
                continue
            queue = [spec]
            seen.add(key(spec))
            while queue:
                c = queue.pop()
                out.append(c)
                for lifted, perm in lifts:
                    img = ChainSpec(
                        tuple(_map_mask(mk, perm) for mk in c.masks),
                        tuple(lifted(b) for b in c.bases),
                        tuple(lifted(x) for x in c.connectors),
                    )
                    if key(img) not in seen:
                        seen.add(key(img))
                        queue.append(img)
        return out

    return expand


def make_n_acyclic_symmetric(
    pattern: IncidencePattern,
    config: BoosterConfig,
    seed: IGraph | None = None,
    symmetries: Sequence[PatternSymmetry] | None = None,
) -> tuple[BoostResult, list[GroupoidSymmetry]]:
    """Booster whose chain sets are closed under the given symmetries, plus every lifted symmetry.

    By default the symmetries are all pattern symmetries that the seed admits.
    """
    if symmetries is None:
        cands = symmetries_of_pattern(pattern)
        symmetries = cands if seed is None else [s.pattern_sym for s in igraph_symmetries(seed, cands)]
    elif seed is not None:
        for eta in symmetries:
            if igraph_symmetry_over(seed, eta) is None:
                raise ValidationError("a requested symmetry is not a symmetry of the seed")
    syms = list(symmetries)
    result = make_n_acyclic(pattern, config, seed, expand=_closing_expander(syms))
    lifted = []
    for eta in syms:
        sym = lift_pattern_symmetry(result.groupoid, eta)
        if sym is None:
            raise ValidationError("booster output does not admit a requested symmetry")
        problems = check_groupoid_symmetry(result.groupoid, sym)
        if problems:
            raise ValidationError("lifted symmetry fails verification", problems)
        lifted.append(sym)
    return result, lifted


# hypergraph automorphisms


@dataclass(frozen=True)
class HypAutomorphism:
    vertex_map: Mapping[Vertex, Vertex]

    def edge_image(self, s: Iterable[Vertex]) -> frozenset:
        return frozenset(self.vertex_map[v] for v in s)


def check_hyp_automorphism(a: Hypergraph, eta: Mapping[Vertex, Vertex]) -> list[str]:
    if set(eta) != set(a.vertices) or set(eta.values()) != set(a.vertices):
        return ["not a permutation of the vertices"]
    sets = set(a.edge_sets)
    for s in a.edge_sets:
        if frozenset(eta[v] for v in s) not in sets:
            return [f"hyperedge {sorted(s, key=repr)} is not mapped to a hyperedge"]
    return []


def _blocks_of(x) -> tuple[tuple, list[tuple], bool]:
    if isinstance(x, Hypergraph):
        return x.vertices, [tuple(s) for s in x.hyperedges], True
    return tuple(x.universe), [tuple(t) for t in x.tuples], False


def automorphism_group(x, cap: int = 10, max_results: int = 100_000) -> list[dict]:
    """All automorphisms of a hypergraph or relational structure by backtracking.

    Vertices are assigned in a fixed order; a candidate image must match the
    vertex invariant, and every block whose vertices are all assigned must map
    onto a block.
    """
    verts, blocks, as_sets = _blocks_of(x)
    if len(verts) > cap:
        raise SizeGuardError(f"{len(verts)} points exceed the automorphism cap of {cap}")
    norm = (lambda b: frozenset(b)) if as_sets else (lambda b: tuple(b))
    block_set = {norm(b) for b in blocks}
    pos = {v: i for i, v in enumerate(verts)}
    inv_key = {v: _invariant(v, blocks, as_sets) for v in verts}
    # blocks become checkable once their last vertex (in order) is assigned
    closing: dict[int, list[tuple]] = defaultdict(list)
    for b in {norm(b) for b in blocks}:
        if b:
            closing[max(pos[v] for v in b)].append(tuple(b))
    out: list[dict] = []
    f: dict = {}
    used: set = set()

    def go(i: int) -> None:
        if len(out) >= max_results:
            raise SizeGuardError(f"more than {max_results} automorphisms")
        if i == len(verts):
            out.append(dict(f))
            return
        v = verts[i]
        for w in verts:
            if w in used or inv_key[w] != inv_key[v]:
                continue
            f[v] = w
            if all(norm(tuple(f[u] for u in b)) in block_set for b in closing[i]):
                used.add(w)
                go(i + 1)
                used.discard(w)
            del f[v]

    go(0)
    return out


def _invariant(v, blocks, as_sets) -> tuple:
    if as_sets:
        return tuple(sorted(len(b) for b in blocks if v in b))
    return tuple(sorted((len(b), tuple(i for i, u in enumerate(b) if u == v)) for b in blocks if v in b))


def automorphisms_brute(x, cap: int = 8) -> list[dict]:
    """Reference enumeration over all permutations."""
    verts, blocks, as_sets = _blocks_of(x)
    if len(verts) > cap:
        raise SizeGuardError(f"{len(verts)} points exceed the brute-force cap of {cap}")
    norm = (lambda b: frozenset(b)) if as_sets else (lambda b: tuple(b))
    block_set = {norm(b) for b in blocks}
    out = []
    for perm in itertools.permutations(verts):
        f = dict(zip(verts, perm))
        if {norm(tuple(f[u] for u in b)) for b in blocks} == block_set:
            out.append(f)
    return out


def closed_under_composition(auts: Sequence[Mapping]) -> bool:
    keys = {tuple(sorted(a.items(), key=repr)) for a in auts}
    for a in auts:
        for b in auts:
            c = {v: b[a[v]] for v in a}
            if tuple(sorted(c.items(), key=repr)) not in keys:
                return False
    return True


def hyperedge_orbits(a: Hypergraph, auts: Sequence[Mapping]) -> list[list[int]]:
    """Orbits of the group generated by ``auts`` on hyperedge indices."""
    ds = DisjointSet(range(len(a.hyperedges)))
    for f in auts:
        for i, s in enumerate(a.hyperedges):
            j = a.edge_index(f[v] for v in s)
            if j is None:
                raise ValidationError("map does not preserve hyperedges")
            ds.merge(i, j)
    return [sorted(c) for c in ds.subsets()]


def is_homogeneous(a: Hypergraph, auts: Sequence[Mapping], require_closed: bool = False) -> bool:
    """Whether the listed automorphisms (or the group they generate) act transitively on hyperedges."""
    if require_closed and not closed_under_composition(auts):
        raise ValidationError("automorphism list is not closed under composition")
    for f in auts:
        if check_hyp_automorphism(a, f):
            raise ValidationError("listed map is not an automorphism")
    if len(a.hyperedges) <= 1:
        return True
    return len(hyperedge_orbits(a, auts)) == 1


# lifting through products


def hypergraph_pattern_symmetry(a: Hypergraph, sigma: Mapping[Vertex, Vertex]) -> PatternSymmetry:
    """The symmetry of the intersection pattern induced by a vertex automorphism."""
    problems = check_hyp_automorphism(a, sigma)
    if problems:
        raise ValidationError("not an automorphism", problems)
    img = {i: a.edge_index(sigma[v] for v in s) for i, s in enumerate(a.hyperedges)}
    p = intersection_pattern(a)
    smap = {site_name(i): site_name(j) for i, j in img.items()}
    emap = {e: f"{smap[p.src[e]]}.{smap[p.tgt[e]]}" for e in p.edges}
    return PatternSymmetry(smap, emap)


def lift_to_hypergraph_product(hp, sigma: Mapping[Vertex, Vertex], eta: GroupoidSymmetry) -> dict:
    """``[a, x] -> [sigma(a), eta(x)]`` on ``A (x) G``; raises if it is not well defined."""
    out: dict = {}
    for (v, x), cls in hp.classes.items():
        img = hp.classes[(sigma[v], eta(x))]
        if out.setdefault(cls, img) != img:
            raise ValidationError(f"lift splits the class {cls!r}")
    return out


def lift_to_reduced_product(prod, eta_h: IGraphSymmetry, eta_g: GroupoidSymmetry) -> dict:
    """``[v, x] -> [eta_h(v), eta_g(x)]`` on ``H (x) G``; raises if it is not well defined."""
    out: dict = {}
    for (v, x), cls in prod.classes.items():
        img = prod.classes[(eta_h.vertex_map[v], eta_g(x))]
        if out.setdefault(cls, img) != img:
            raise ValidationError(f"lift splits the class {cls!r}")
    return out


def commutes_with_projection(cover_map: Mapping, base_map: Mapping, projection: Mapping) -> list[str]:
    """Pointwise ``projection(cover_map(x)) == base_map(projection(x))``."""
    bad = [x for x in cover_map if projection[cover_map[x]] != base_map[projection[x]]]
    return [f"square fails at {x!r}" for x in bad[:5]]


# vertical automorphisms


def left_translation_layers(g: Groupoid, z: int) -> np.ndarray:
    """Element permutation: left multiplication by ``z`` on its target layer, by ``z^-1`` on its source layer.

    Elements whose source is neither endpoint of ``z`` stay fixed.
    """
    a, b = int(g.src[z]), int(g.tgt[z])
    perm = np.arange(g.n, dtype=np.int64)
    from_b = g.left_table(z)
    mask_b = g.src == b
    perm[mask_b] = from_b[mask_b]
    if a != b:
        zi = int(g.inverse_table[z])
        from_a = g.left_table(zi)
        mask_a = g.src == a
        perm[mask_a] = from_a[mask_a]
    return perm


def vertical_automorphism(prod, first: tuple[str, int], second: tuple[str, int]) -> dict:
    """A vertex automorphism of ``H (x) G`` taking hyperedge ``[V_s, x1]`` onto ``[V_s, x2]`` fibrewise.

    Left translation by ``x2 x1^-1`` commutes with every right multiplication,
    so it respects the identifications.  The caller checks the projections.
    """
    (s1, x1), (s2, x2) = first, second
    if s1 != s2:
        raise ValidationError("hyperedges lie over different sites")
    g = prod.groupoid
    if x1 == x2:
        return {cls: cls for cls in set(prod.classes.values())}
    z = g.mul(x2, int(g.inverse_table[x1]))
    perm = left_translation_layers(g, z)
    out: dict = {}
    for (v, x), cls in prod.classes.items():
        img = prod.classes[(v, int(perm[x]))]
        if out.setdefault(cls, img) != img:
            raise ValidationError(f"translation splits the class {cls!r}")
    return out


def check_vertical(prod, first: tuple[str, int], second: tuple[str, int], eta: Mapping) -> list[str]:
    """Automorphism of the product with ``pi_first == pi_second . eta`` on the first hyperedge."""
    a = prod.hypergraph
    problems = check_hyp_automorphism(a, eta)
    if problems:
        return problems
    s, x1 = first
    _, x2 = second
    h = prod.spec
    for v in h.partition[s]:
        c1 = prod.classes[(v, x1)]
        c2 = prod.classes[(v, x2)]
        if eta[c1] != c2:
            problems.append(f"projection square fails at {v!r}")
    return problems


def cayley_translation(g: Groupoid, z: int, big: IncidencePattern) -> PatternSymmetry:
    """The symmetry of the element-sorted pattern given by layered left translation."""
    perm = left_translation_layers(g, z)
    from .groupoid import element_site

    smap = {element_site(x): element_site(int(perm[x])) for x in range(g.n)}
    emap = {}
    for e in big.edges:
        xs, base = e.split(":", 1)
        emap[e] = f"{smap[xs]}:{base}"
    return PatternSymmetry(smap, emap)


def product_translation(k: IGraph, g: Groupoid, z: int) -> IGraphSymmetry:
    """The element-sorted direct product moved by layered left translation in ``g``."""
    perm = left_translation_layers(g, z)
    eta = cayley_translation(g, z, k.pattern)
    return IGraphSymmetry(eta, {(v, x): (v, int(perm[x])) for (v, x) in k.vertices})


def two_stage_vertical(result, first: tuple[str, int], second: tuple[str, int], stage2_syms: Mapping[int, GroupoidSymmetry]) -> dict:
    """Vertical automorphism of a two-stage product ``(H x G) (x) G~``.

    ``first``/``second`` name hyperedges by (element site, element of ``G~``).
    A translation ``z`` in ``G`` moves the first site onto the second and is
    lifted to ``G~`` (``stage2_syms`` maps ``z`` to that lift); a translation
    in ``G~`` then aligns the tags.
    """
    prod = result.intermediate
    g1 = result.stage1.groupoid
    g2 = prod.groupoid
    from .groupoid import element_site

    (site1, y1), (site2, y2) = first, second
    x1, x2 = int(site1[1:]), int(site2[1:])
    if g1.tgt[x1] != g1.tgt[x2]:
        raise ValidationError("hyperedges project to different sites")
    z = g1.mul(x2, int(g1.inverse_table[x1]))
    eta_k = product_translation(prod.spec, g1, z)
    eta_g = stage2_syms[z]
    step0 = lift_to_reduced_product(prod, eta_k, eta_g)
    mid = eta_g(y1)
    step1 = vertical_automorphism(prod, (site2, mid), (site2, y2))
    return {c: step1[step0[c]] for c in step0}


def check_two_stage_vertical(result, first, second, eta: Mapping) -> list[str]:
    prod = result.intermediate
    problems = check_hyp_automorphism(prod.hypergraph, eta)
    if problems:
        return problems
    (site1, y1), (site2, y2) = first, second
    k = prod.spec
    proj2 = {prod.classes[((v, xx), y2)]: v for (v, xx) in k.partition[site2]}
    for (v, xx) in k.partition[site1]:
        c = prod.classes[((v, xx), y1)]
        if proj2.get(eta[c]) != v:
            problems.append(f"projection square fails at {v!r}")
    return problems


def identity_groupoid_symmetry(g: Groupoid) -> GroupoidSymmetry:
    return GroupoidSymmetry(identity_symmetry(g.pattern), np.arange(g.n, dtype=np.int64))


def trivial_symmetric(pattern: IncidencePattern) -> tuple[Groupoid, list[GroupoidSymmetry]]:
    g = trivial_groupoid(pattern)
    out = []
    for eta in symmetries_of_pattern(pattern):
        sym = lift_pattern_symmetry(g, eta)
        if sym is not None:
            out.append(sym)
    return g, out

"""Extension of partial isomorphisms of finite relational structures.

Two constructions: a cyclic excursion for a single partial isomorphism, and
the general route through a symmetric realisation of the overlap
specification ``H(A, P)``.
"""

from __future__ import annotations

import itertools
import logging
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Sequence

from scipy.cluster.hierarchy import DisjointSet

from .errors import ValidationError
from .hypergraph import Hypergraph, tree_decomposition
from .igraph import IGraph, PathWord, render_vertex
from .incidence import loop_pattern, sort_key
from .products import Realisation, RealiseConfig, realise
from .symmetry import check_hyp_automorphism, check_two_stage_vertical, is_homogeneous, two_stage_vertical

log = logging.getLogger(__name__)

Point = Hashable


@dataclass(frozen=True)
class RelStructure:
    """A finite structure with one relation of fixed arity."""

    universe: tuple
    arity: int
    tuples: frozenset

    @classmethod
    def build(cls, universe: Iterable[Point], tuples: Iterable[Sequence[Point]], arity: int | None = None) -> "RelStructure":
        uni = tuple(sorted(set(universe), key=sort_key))
        ts = frozenset(tuple(t) for t in tuples)
        if arity is None:
            arities = {len(t) for t in ts}
            if len(arities) > 1:
                raise ValidationError(f"mixed tuple lengths {sorted(arities)}")
            arity = arities.pop() if arities else 2
        bad = [t for t in ts if len(t) != arity]
        if bad:
            raise ValidationError(f"tuple {bad[0]!r} does not have arity {arity}")
        known = set(uni)
        stray = [t for t in ts if not set(t) <= known]
        if stray:
            raise ValidationError(f"tuple {stray[0]!r} leaves the universe")
        return cls(uni, arity, ts)

    def induced(self, keep: Iterable[Point]) -> "RelStructure":
        k = set(keep)
        return RelStructure.build(k, (t for t in self.tuples if set(t) <= k), self.arity)

    def image(self, f: Mapping[Point, Point]) -> set:
        return {tuple(f[x] for x in t) for t in self.tuples if all(x in f for x in t)}

    def to_json(self) -> dict:
        return {
            "universe": [render_vertex(x) for x in self.universe],
            "arity": self.arity,
            "tuples": sorted([[render_vertex(x) for x in t] for t in self.tuples], key=repr),
        }

    @classmethod
    def from_json(cls, data: dict) -> "RelStructure":
        try:
            return cls.build(data["universe"], [tuple(t) for t in data["tuples"]], data.get("arity"))
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed structure: {exc}") from exc


def partial_map_from_json(data) -> dict:
    """Accept ``{"a": "b"}`` or ``[["a", "b"], ...]``."""
    if isinstance(data, dict):
        return dict(data)
    try:
        return {x: y for x, y in data}
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"malformed partial map: {exc}") from exc


def check_partial_iso(a: RelStructure, p: Mapping[Point, Point]) -> list[str]:
    """Injective, inside the universe, and an isomorphism between the induced substructures."""
    uni = set(a.universe)
    if not set(p) <= uni or not set(p.values()) <= uni:
        return ["map leaves the universe"]
    if len(set(p.values())) != len(p):
        return ["map is not injective"]
    dom, img = set(p), set(p.values())
    forward = {tuple(p[x] for x in t) for t in a.tuples if set(t) <= dom}
    target = {t for t in a.tuples if set(t) <= img}
    problems = [f"tuple {t!r} is not preserved" for t in sorted(forward - target, key=repr)[:3]]
    problems += [f"tuple {t!r} has no preimage" for t in sorted(target - forward, key=repr)[:3]]
    return problems


def check_automorphism(b: RelStructure, f: Mapping[Point, Point]) -> list[str]:
    if set(f) != set(b.universe) or set(f.values()) != set(b.universe):
        return ["not a permutation of the universe"]
    if b.image(f) != set(b.tuples):
        return ["relation is not preserved"]
    return []


def extends(f: Mapping[Point, Point], p: Mapping[Point, Point], embed: Mapping[Point, Point]) -> list[str]:
    """``f(embed(x)) == embed(p(x))`` for ``x`` in the domain of ``p``."""
    return [f"fails at {x!r}" for x in p if f.get(embed[x]) != embed[p[x]]]


def all_partial_isos(a: RelStructure, cap: int = 6, include_empty: bool = False) -> list[dict]:
    if len(a.universe) > cap:
        raise ValidationError(f"{len(a.universe)} points exceed the enumeration cap of {cap}")
    out = []
    pts = a.universe
    for k in range(0 if include_empty else 1, len(pts) + 1):
        for dom in itertools.combinations(pts, k):
            for img in itertools.permutations(pts, k):
                p = dict(zip(dom, img))
                if not check_partial_iso(a, p):
                    out.append(p)
    return out


@dataclass
class ExtensionSolution:
    structure: RelStructure
    embedding: dict
    partials: tuple
    automorphisms: list
    method: str
    hypergraph: Hypergraph | None = None
    # hyperedge index -> projection onto the input universe
    projections: dict = field(default_factory=dict)
    base_edge: int | None = None
    # automorphisms carrying the base hyperedge onto each hyperedge
    transitivity: list = field(default_factory=list, repr=False)
    n: int | None = None
    realisation: Realisation | None = field(default=None, repr=False)

    def to_json(self) -> dict:
        def pairs(m: Mapping) -> list:
            return [[render_vertex(x), render_vertex(y)] for x, y in sorted(m.items(), key=lambda kv: sort_key(kv[0]))]

        out = {
            "method": self.method,
            "structure": self.structure.to_json(),
            "embedding": pairs(self.embedding),
            "partials": [pairs(p) for p in self.partials],
            "automorphisms": [pairs(f) for f in self.automorphisms],
            "n": self.n,
        }
        if self.hypergraph is not None:
            out["hypergraph"] = self.hypergraph.to_json()
            out["base_edge"] = self.base_edge
        return out


def verify_solution(a: RelStructure, sol: ExtensionSolution) -> list[str]:
    b, e = sol.structure, sol.embedding
    problems = []
    if set(e) != set(a.universe) or len(set(e.values())) != len(e):
        return ["embedding is not injective on the universe"]
    img = set(e.values())
    if {t for t in b.tuples if set(t) <= img} != a.image(e):
        problems.append("the image of the embedding is not an induced copy")
    for i, (p, f) in enumerate(zip(sol.partials, sol.automorphisms)):
        problems += [f"f{i}: {m}" for m in check_automorphism(b, f)]
        problems += [f"f{i} does not extend p{i}: {m}" for m in extends(f, p, e)[:3]]
    if sol.hypergraph is not None:
        hg = sol.hypergraph
        for i, s in enumerate(hg.hyperedges):
            pi = sol.projections.get(i)
            if pi is None or set(pi) != set(s):
                problems.append(f"hyperedge {i} has no projection")
                continue
            if b.induced(s).image(pi) != set(a.tuples):
                problems.append(f"hyperedge {i} does not induce a copy of the input")
        for f in sol.transitivity:
            if check_automorphism(b, f) or check_hyp_automorphism(hg, f):
                problems.append("a transitivity witness is not an automorphism")
                break
        else:
            if not is_homogeneous(hg, sol.transitivity):
                problems.append("hyperedges are not in one orbit")
    return problems


# single partial isomorphism


def excursion_length(a: RelStructure, p: Mapping[Point, Point], limit: int = 100_000) -> int:
    """Least ``k`` with ``dom(p^k)`` stable and ``p^k`` the identity there."""
    cur = {x: x for x in a.universe}
    for k in range(1, limit + 1):
        cur = {x: p[y] for x, y in cur.items() if y in p}
        nxt = {x: p[y] for x, y in cur.items() if y in p}
        if set(nxt) == set(cur) and all(cur[x] == x for x in cur):
            return k
    raise ValidationError(f"no excursion length up to {limit}")


def extend_single(a: RelStructure, p: Mapping[Point, Point]) -> ExtensionSolution:
    """``B = (A x Z_2k) / (x, n) ~ (p(x), n + 1)`` with the shift ``[x, n] -> [x, n - 1]``."""
    problems = check_partial_iso(a, p)
    if problems:
        raise ValidationError("not a partial isomorphism", problems)
    k = excursion_length(a, p)
    m = 2 * k
    items = [(x, n) for n in range(m) for x in a.universe]
    ds = DisjointSet(items)
    for x, y in p.items():
        for n in range(m):
            ds.merge((x, n), (y, (n + 1) % m))
    rep = {}
    for cls in ds.subsets():
        r = min(cls, key=lambda xn: (xn[1], sort_key(xn[0])))
        for it in cls:
            rep[it] = r
    tuples = {tuple(rep[(x, n)] for x in t) for n in range(m) for t in a.tuples}
    b = RelStructure.build(set(rep.values()), tuples, a.arity)
    shift: dict = {}
    for (x, n), c in rep.items():
        img = rep[(x, (n - 1) % m)]
        if shift.setdefault(c, img) != img:
            raise ValidationError(f"shift is not well defined at {c!r}")
    embed = {x: rep[(x, 0)] for x in a.universe}
    return ExtensionSolution(b, embed, (dict(p),), [shift], "excursion", n=None)


# general route


def overlap_spec(a: RelStructure, ps: Sequence[Mapping[Point, Point]]) -> IGraph:
    """One site holding the universe and one loop ``p{i}`` per partial isomorphism."""
    for i, p in enumerate(ps):
        problems = check_partial_iso(a, p)
        if problems:
            raise ValidationError(f"p{i} is not a partial isomorphism", problems)
    pat = loop_pattern([f"p{i}" for i in range(len(ps))])
    return IGraph.build(pat, {"0": a.universe}, {f"p{i}": list(p.items()) for i, p in enumerate(ps)})


@dataclass
class EppaConfig:
    n: int = 2
    # stage 1 only needs compatibility; 2-acyclic stage 1 grows the stage-2 pattern
    stage1_acyclic: bool = False
    max_elements: int = 200_000
    max_chains: int = 200_000
    cycle_budget: int = 5_000_000
    log_path: str | None = None
    early_exit: bool = True

    def realise_config(self) -> RealiseConfig:
        return RealiseConfig(
            n=self.n,
            max_elements=self.max_elements,
            max_chains=self.max_chains,
            cycle_budget=self.cycle_budget,
            log_path=self.log_path,
            stage1_acyclic=self.stage1_acyclic,
            symmetric=True,
            early_exit=self.early_exit,
        )


def solve_extension(a: RelStructure, ps: Sequence[Mapping[Point, Point]], config: EppaConfig | None = None) -> ExtensionSolution:
    """Extension through a symmetric realisation of the overlap specification.

    The relation is pulled back along every projection; each partial
    isomorphism is extended by the vertical automorphism that carries the
    neighbour realising it back onto the base hyperedge.  Raises
    BudgetExceeded when a booster stage does not certify.
    """
    config = config or EppaConfig()
    h = overlap_spec(a, ps)
    r = realise(h, config.n, config.realise_config())
    prod = r.intermediate
    keys = list(prod.hyperedge_of)
    tags = r.cert.tags
    hg = r.hypergraph
    tuples = set()
    proj: dict[int, dict] = {}
    key_of: dict[int, tuple] = {}
    for key, t in zip(keys, tags):
        tuples |= {tuple(inv[x] for x in tt) for inv in [{v: c for c, v in t.proj.items()}] for tt in a.tuples}
        proj.setdefault(t.edge, dict(t.proj))
        key_of.setdefault(t.edge, key)
    b = RelStructure.build(hg.vertices, tuples, a.arity)
    base_key = min(keys, key=lambda k: (sort_key(k[0]), k[1]))
    base = prod.hyperedge_of[base_key]
    pi0 = proj[base]
    embed = {v: c for c, v in pi0.items()}
    autos = []
    for i, p in enumerate(ps):
        f = None
        for key, t in zip(keys, tags):
            common = [c for c in t.proj if c in pi0]
            if {pi0[c]: t.proj[c] for c in common} == dict(p):
                f = two_stage_vertical(r, key, base_key, r.translations)
                problems = check_two_stage_vertical(r, key, base_key, f)
                if problems:
                    raise ValidationError(f"vertical automorphism for p{i} fails", problems)
                break
        if f is None:
            raise ValidationError(f"no neighbour of the base realises p{i}")
        autos.append(f)
    trans = [two_stage_vertical(r, base_key, key_of[i], r.translations) for i in range(len(hg.hyperedges))]
    sol = ExtensionSolution(b, embed, tuple(dict(p) for p in ps), autos, "realisation", hg, proj, base, trans, config.n, r)
    log.info("extension with %d points", len(b.universe))
    return sol


# structure of solutions


def word_for_map(h: IGraph, s: str, target: Mapping[Point, Point], cap: int = 200_000) -> PathWord | None:
    """A shortest word out of ``s`` whose map equals ``target``."""
    p = h.pattern
    goal = tuple(sorted(target.items(), key=lambda kv: sort_key(kv[0])))
    start = (s, tuple((v, v) for v in h.partition[s]))
    seen = {start: None}
    queue = deque([start])
    while queue:
        state = queue.popleft()
        site, m = state
        if tuple(sorted(m, key=lambda kv: sort_key(kv[0]))) == goal:
            word = []
            while seen[state] is not None:
                state, e = seen[state]
                word.append(e)
            return PathWord(s, tuple(reversed(word)))
        for e in p.out_edges.get(site, ()):
            r = h.rel[e]
            nxt = (p.tgt[e], tuple((x, r[y]) for x, y in m if y in r))
            if nxt not in seen:
                seen[nxt] = (state, e)
                if len(seen) > cap:
                    return None
                queue.append(nxt)
    return None


def _invert(f: Mapping) -> dict:
    return {y: x for x, y in f.items()}


def word_automorphism(sol: ExtensionSolution, w: PathWord) -> dict:
    """Compose the solution's automorphisms along ``w``, first letter applied first."""
    f = {x: x for x in sol.structure.universe}
    for e in w.edges:
        i = int(e[1:].rstrip("~"))
        g = sol.automorphisms[i] if not e.endswith("~") else _invert(sol.automorphisms[i])
        f = {x: g[y] for x, y in f.items()}
    return f


def traces(sol: ExtensionSolution, b0: Iterable[Point]) -> dict[frozenset, int]:
    """Distinct nonempty traces of hyperedges on ``b0``, each with one hyperedge producing it."""
    keep = set(b0)
    hg = sol.hypergraph
    out: dict[frozenset, int] = {}
    for i in sorted({i for v in keep for i in hg.incident.get(v, ())}):
        tr = hg.edge_sets[i] & keep
        if tr and tr not in out:
            out[tr] = i
    return out


def check_tree_decomp_claim(sol: ExtensionSolution, b0: Iterable[Point]) -> list[str]:
    """Traces on ``b0`` are tree-decomposable and carry every tuple of the induced relation."""
    keep = set(b0)
    tr = traces(sol, keep)
    problems = []
    covered = set().union(*tr) if tr else set()
    if covered != keep:
        problems.append("some points of the subset lie in no hyperedge")
    hg = Hypergraph.build(keep, [tuple(sorted(t, key=sort_key)) for t in tr])
    if tree_decomposition(hg) is None:
        problems.append("traces admit no tree decomposition")
    inside = [t for t in sol.structure.tuples if set(t) <= keep]
    for t in inside:
        if not any(set(t) <= s for s in tr):
            problems.append(f"tuple {t!r} is in no single trace")
            break
    return problems


def hom_into_solution(sol: ExtensionSolution, other: ExtensionSolution, b0: Iterable[Point]) -> dict:
    """A homomorphism from ``B`` restricted to ``b0`` into ``other``'s structure.

    Hyperedges are visited along a tree decomposition of their traces.  Each
    gets ``f . embed . pi`` where ``f`` is composed from ``other``'s
    automorphisms along a word inducing the overlap with its parent.
    """
    if sol.realisation is None:
        raise ValidationError("the source solution carries no realisation")
    keep = set(b0)
    tr = traces(sol, keep)
    order = sorted(tr, key=lambda t: (-len(t), sorted(map(repr, t))))
    hg = Hypergraph.build(keep, [tuple(sorted(t, key=sort_key)) for t in order])
    td = tree_decomposition(hg)
    if td is None:
        raise ValidationError("traces admit no tree decomposition")
    spec = sol.realisation.cert.spec
    e_c = other.embedding
    chosen = {j: tr[frozenset(hg.hyperedges[j])] for j in range(len(hg.hyperedges))}
    auto: dict[int, dict] = {}
    out: dict = {}
    # td.parent holds positions in td.order, so local maps are keyed by position
    for pos, j in enumerate(td.order):
        i = chosen[j]
        pi = sol.projections[i]
        par = td.parent[pos]
        pp = None if par is None else sol.projections[chosen[td.order[par]]]
        common = [] if pp is None else [c for c in pi if c in pp]
        if not common:
            # a root, or a hyperedge disjoint from its parent: nothing to agree on
            f = {x: x for x in other.structure.universe}
        else:
            w = word_for_map(spec, "0", {pp[c]: pi[c] for c in common})
            if w is None:
                raise ValidationError(f"overlap of hyperedges {chosen[td.order[par]]} and {i} is induced by no word")
            fw = word_automorphism(other, w)
            f = {x: auto[par][y] for x, y in _invert(fw).items()}
        auto[pos] = f
        for c in hg.hyperedges[j]:
            img = f[e_c[pi[c]]]
            if out.setdefault(c, img) != img:
                raise ValidationError(f"local maps disagree at {c!r}")
    return out


def check_homomorphism(a: RelStructure, b: RelStructure, f: Mapping[Point, Point], domain: Iterable[Point] | None = None) -> list[str]:
    keep = set(a.universe if domain is None else domain)
    bt = set(b.tuples)
    bad = [t for t in a.tuples if set(t) <= keep and tuple(f[x] for x in t) not in bt]
    return [f"tuple {t!r} is not preserved" for t in bad[:3]]


def find_homomorphism(c: RelStructure, b: RelStructure, cap: int = 2_000_000) -> dict | None:
    """Backtracking search for a homomorphism ``c -> b``; tuples are checked once fully assigned."""
    pts = c.universe
    pos = {x: i for i, x in enumerate(pts)}
    closing: dict[int, list] = {}
    for t in c.tuples:
        closing.setdefault(max(pos[x] for x in t), []).append(t)
    bt = set(b.tuples)
    f: dict = {}
    steps = 0

    def go(i: int) -> bool:
        nonlocal steps
        if i == len(pts):
            return True
        for y in b.universe:
            steps += 1
            if steps > cap:
                raise ValidationError("homomorphism search exceeded its budget")
            f[pts[i]] = y
            if all(tuple(f[x] for x in t) in bt for t in closing.get(i, ())) and go(i + 1):
                return True
        del f[pts[i]]
        return False

    return dict(f) if go(0) else None


def check_forbidden_homs(b: RelStructure, forbidden: Sequence[RelStructure]) -> list[tuple[int, dict]]:
    """Forbidden structures that do map into ``b``, with a witness each."""
    out = []
    for i, c in enumerate(forbidden):
        f = find_homomorphism(c, b)
        if f is not None:
            out.append((i, f))
    return out


def random_subsets(points: Sequence[Point], size: int, count: int, seed: int = 0) -> list[tuple]:
    rng = random.Random(seed)
    pts = list(points)
    return [tuple(rng.sample(pts, min(size, len(pts)))) for _ in range(count)]


def three_path() -> tuple[RelStructure, dict]:
    """Directed path ``a -> b -> c`` with the shift ``a -> b, b -> c``."""
    a = RelStructure.build("abc", [("a", "b"), ("b", "c")])
    return a, {"a": "b", "b": "c"}

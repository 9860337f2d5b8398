import itertools
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from overlapkit.errors import BudgetExceeded, ValidationError
from overlapkit.groupoid import (
    cayley_graph,
    cayley_incidence_pattern,
    cayley_to_dot,
    check_groupoid_axioms,
    coset,
    coset_by_bfs,
    cym,
    cym_of_union,
    entangled_pairs,
    find_coset_cycles,
    groupoid_from_json,
    groupoid_isomorphic,
    groupoid_to_json,
    intersection_law_holds,
    is_compatible,
    is_compatible_by_tables,
    parity_igraph,
    subgroupoid,
    trivial_groupoid,
    two_cycle_witness,
    verify_coset_cycle,
)
from overlapkit.igraph import IGraph, complete_igraph, disjoint_union, eval_word, is_complete, validate_igraph
from overlapkit.incidence import IncidencePattern, check_covering, loop_pattern, validate_pattern

from conftest import igraphs, random_igraph, random_pattern


def small_groupoid(h, cap=60):
    try:
        return cym(h, max_elements=cap)
    except BudgetExceeded:
        return None


def cyclic_group(n):
    p = loop_pattern(["e"])
    h = IGraph.build(p, {"0": range(n)}, {"e": [(i, (i + 1) % n) for i in range(n)]})
    return cym(h), h


def brute_cycles(g, n, any_start=False):
    """Coset cycles of length exactly ``n`` straight from the definition."""
    p = g.pattern
    inv = g.inverse_table
    masks = range(1 << len(p.pairs))
    starts = range(g.n) if any_start else [int(x) for x in g.identity]
    for g0 in starts:
        same = [int(x) for x in np.nonzero(g.src == g.src[g0])[0]]
        for rest in itertools.product(same, repeat=n - 1):
            gs = (g0,) + rest
            for ms in itertools.product(masks, repeat=n):
                al = [p.edges_of_mask(m) for m in ms]
                ok = True
                for i in range(n):
                    a, b = gs[i], gs[(i + 1) % n]
                    h = g.mul(int(inv[a]), b)
                    if h not in coset_by_bfs(g, int(g.identity[g.src[h]]), al[i]):
                        ok = False
                        break
                    if coset_by_bfs(g, a, al[i] & al[i - 1]) & coset_by_bfs(g, b, al[i] & al[(i + 1) % n]):
                        ok = False
                        break
                if ok:
                    return gs, ms
    return None


def test_loop_free_pattern_groupoid():
    p = IncidencePattern.from_pairs(["a", "b", "c"], [("x", "a", "b"), ("y", "b", "c")])
    g = trivial_groupoid(p)
    # one element per ordered pair of connected sites
    assert g.n == 9
    assert sorted(int(x) for x in g.identity) == sorted(set(int(x) for x in g.identity))
    assert check_groupoid_axioms(g) == []


def test_single_match_gives_order_two():
    p = loop_pattern(["e"])
    g = cym(IGraph.build(p, {"0": [1, 2]}, {"e": [(1, 2)]}))
    assert g.n == 2
    e = g.gen("e")
    assert g.mul(e, e) == g.identity[0]


def test_cyclic_orders():
    for n in (1, 2, 3, 6):
        g, _ = cyclic_group(n)
        assert g.n == n
        assert check_groupoid_axioms(g) == []


@settings(max_examples=40)
@given(igraphs(max_vertices=3, max_sites=3, max_pairs=3))
def test_cym_axioms_and_cayley_round_trip(h):
    g = small_groupoid(h)
    if g is None:
        return
    assert check_groupoid_axioms(g) == []
    c = cayley_graph(g)
    assert validate_igraph(c) == [] and is_complete(c).ok
    assert groupoid_isomorphic(cym(c), g)
    assert is_compatible(g, c).ok
    assert is_compatible(g, h).ok


@settings(max_examples=40)
@given(igraphs(max_vertices=3, max_sites=2, max_pairs=2))
def test_elements_are_word_bijections(h):
    g = small_groupoid(h)
    if g is None:
        return
    hb = complete_igraph(h)
    for x in range(g.n):
        m = eval_word(hb, g.path_word(x))
        s = g.pattern.sites[g.src[x]]
        assert len(m.mapping) == len(hb.partition[s])


def test_cayley_of_trivial_is_discrete():
    p = IncidencePattern.from_pairs(["a", "b"], [])
    c = cayley_graph(trivial_groupoid(p))
    assert c.num_vertices() == 2 and all(not r for r in c.rel.values())


def test_order_two_cayley_graph():
    g, _ = cyclic_group(2)
    c = cayley_graph(g)
    assert c.num_vertices() == 2
    assert len(c.rel["e"]) == 2 and all(v != w for v, w in c.rel["e"].items())


def test_subgroupoid_extremes():
    rng = random.Random(5)
    for _ in range(10):
        p = random_pattern(rng, max_sites=3, max_pairs=3)
        g = small_groupoid(random_igraph(rng, p, max_vertices=3))
        if g is None:
            continue
        assert subgroupoid(g, []).n == len(p.sites)
        assert groupoid_isomorphic(subgroupoid(g, p.edges), g)
        with pytest.raises(ValidationError):
            subgroupoid(g, [p.edges[0]] if p.edges and p.rev[p.edges[0]] != p.edges[0] else ["nope"])


@settings(max_examples=40)
@given(igraphs(max_vertices=3, max_sites=3, max_pairs=3), st.data())
def test_coset_dual_route(h, data):
    g = small_groupoid(h)
    if g is None:
        return
    p = g.pattern
    base = data.draw(st.integers(0, g.n - 1))
    mask = data.draw(st.integers(0, (1 << len(p.pairs)) - 1))
    alpha = p.edges_of_mask(mask)
    assert coset(g, base, alpha).members == coset_by_bfs(g, base, alpha)
    assert coset(g, base, []).members == {base}


def test_coset_of_identity_over_everything():
    g, _ = cyclic_group(4)
    assert coset(g, int(g.identity[0]), g.pattern.edges).members == frozenset(range(4))


def test_incompatible_order_mismatch():
    g, _ = cyclic_group(2)
    _, h3 = cyclic_group(3)
    rep = is_compatible(g, h3)
    assert not rep.ok
    assert not is_compatible_by_tables(g, h3).ok
    assert g.evaluate(rep.relator) == g.identity[0]
    assert not eval_word(h3, rep.relator).is_identity_restriction()


@settings(max_examples=40)
@given(igraphs(max_vertices=3, max_sites=2, max_pairs=2), st.randoms(use_true_random=False))
def test_compatibility_dual_route(h, rng):
    g = small_groupoid(random_igraph(rng, h.pattern, max_vertices=3))
    if g is None:
        return
    assert is_compatible(g, h).ok == is_compatible_by_tables(g, h).ok


@settings(max_examples=30)
@given(igraphs(max_vertices=3, max_sites=2, max_pairs=2), st.randoms(use_true_random=False))
def test_union_compatibility(h, rng):
    k = random_igraph(rng, h.pattern, max_vertices=3)
    try:
        g = cym_of_union([h, k], max_elements=200)
    except BudgetExceeded:
        return
    assert is_compatible(g, k).ok
    assert is_compatible(g, complete_igraph(k)).ok
    assert is_compatible(g, cayley_graph(cym(k))).ok


def test_z6_cayley_pattern_covers_the_loop():
    g, _ = cyclic_group(6)
    big, cov = cayley_incidence_pattern(g)
    assert validate_pattern(big) == []
    assert len(big.sites) == 6
    assert check_covering(cov) == []


def test_trivial_groupoid_cayley_pattern_is_the_pattern():
    p = IncidencePattern.from_pairs(["a", "b"], [("x", "a", "b")])
    big, cov = cayley_incidence_pattern(trivial_groupoid(p))
    assert len(big.sites) == 4 or len(big.sites) == 2
    assert check_covering(cov) == []


def test_length_one_search_is_empty():
    g, _ = cyclic_group(3)
    assert find_coset_cycles(g, 1).acyclic


def two_generator_swap():
    p = loop_pattern(["a", "b"])
    h = IGraph.build(p, {"0": [1, 2]}, {"a": [(1, 2)], "b": [(1, 2)]})
    return cym(h), h


def test_non_intersection_law_has_two_cycle():
    g, _ = two_generator_swap()
    # g_a = g_b lies in both single-pair subgroupoids but not in the trivial one
    assert two_cycle_witness(g) is not None
    res = find_coset_cycles(g, 2)
    assert res.status == "found"
    assert verify_coset_cycle(g, res.cycles[0]) == []


@settings(max_examples=40)
@given(igraphs(max_vertices=3, max_sites=2, max_pairs=3))
def test_two_cycles_match_intersection_law(h):
    g = small_groupoid(h)
    if g is None:
        return
    res = find_coset_cycles(g, 2)
    assert res.acyclic == intersection_law_holds(g)
    for c in res.cycles:
        assert verify_coset_cycle(g, c) == []


@settings(max_examples=25)
@given(igraphs(max_vertices=2, max_sites=2, max_pairs=2))
def test_cycle_search_matches_brute_force(h):
    g = small_groupoid(h, cap=8)
    if g is None:
        return
    for n in (2, 3):
        fast = find_coset_cycles(g, n)
        brute = any(brute_cycles(g, k, any_start=(k == 2)) for k in range(2, n + 1))
        assert fast.acyclic == (not brute)


@settings(max_examples=40)
@given(igraphs(max_vertices=3, max_sites=2, max_pairs=3))
def test_intersection_law_on_acyclic(h):
    g = small_groupoid(h)
    if g is None or not intersection_law_holds(g):
        return
    k = len(g.pattern.pairs)
    for a in range(1 << k):
        for b in range(1 << k):
            assert (g.member(a) & g.member(b) == g.member(a & b)).all()


def test_entangled_and_parity_separation():
    g, h = two_generator_swap()
    assert entangled_pairs(g) == [0, 1]
    p = h.pattern
    for i in range(2):
        par = parity_igraph(p, i)
        assert validate_igraph(par) == []
        g2 = cym(disjoint_union(h, par))
        assert i not in entangled_pairs(g2)


def test_json_round_trip_and_dot():
    rng = random.Random(11)
    for _ in range(10):
        g = small_groupoid(random_igraph(rng, random_pattern(rng, 3, 3), 3))
        if g is None:
            continue
        assert groupoid_isomorphic(groupoid_from_json(groupoid_to_json(g)), g)
        assert cayley_to_dot(g).startswith("digraph")
    with pytest.raises(ValidationError):
        groupoid_from_json({"size": 1})


def test_size_guard():
    _, h = cyclic_group(7)
    with pytest.raises(BudgetExceeded):
        cym(h, max_elements=5)

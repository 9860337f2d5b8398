import itertools

import pytest
from hypothesis import given

from overlapkit.errors import SizeGuardError, ValidationError
from overlapkit.hypergraph import intersection_pattern, tetrahedron
from overlapkit.incidence import (
    IncidencePattern,
    PatternCovering,
    PatternSymmetry,
    check_covering,
    check_symmetry,
    identity_symmetry,
    loop_pattern,
    pattern_to_dot,
    require_valid,
    symmetries_of_pattern,
    validate_pattern,
)

from conftest import patterns


def brute_symmetries(p: IncidencePattern) -> set:
    """Every pair of bijections, filtered by the definition."""
    found = set()
    for sp in itertools.permutations(p.sites):
        smap = dict(zip(p.sites, sp))
        for ep in itertools.permutations(p.edges):
            eta = PatternSymmetry(smap, dict(zip(p.edges, ep)))
            if not check_symmetry(p, eta):
                found.add(eta.key())
    return found


def test_single_loop_pair_is_valid():
    assert validate_pattern(loop_pattern(["e"])) == []


def test_fixpoint_reversal_is_reported():
    p = IncidencePattern.build(["0"], [("e", "0", "0", "e")])
    problems = validate_pattern(p)
    assert any(x.startswith("fixpoint") for x in problems)
    with pytest.raises(ValidationError):
        require_valid(p)


def test_non_involutive_and_dangling():
    p = IncidencePattern.build(["a", "b"], [("e", "a", "b", "f"), ("f", "b", "a", "g"), ("g", "a", "z", "f")])
    problems = " ".join(validate_pattern(p))
    assert "not involutive" in problems
    assert "dangling" in problems


def test_tetrahedron_pattern_is_valid():
    p = intersection_pattern(tetrahedron())
    assert validate_pattern(p) == []
    assert len(p.sites) == 4 and len(p.edges) == 12


def test_symmetry_counts():
    assert len(symmetries_of_pattern(loop_pattern(["e"]))) == 2
    assert len(symmetries_of_pattern(IncidencePattern.from_pairs(["a", "b"], []))) == 2
    k4 = intersection_pattern(tetrahedron())
    syms = symmetries_of_pattern(k4)
    assert len(syms) == 24
    assert len({s.key() for s in syms}) == 24


def test_symmetry_size_guard():
    p = IncidencePattern.from_pairs([f"s{i}" for i in range(9)], [])
    with pytest.raises(SizeGuardError):
        symmetries_of_pattern(p)


@given(patterns(max_sites=3, max_pairs=2))
def test_symmetries_match_brute_force(p):
    fast = symmetries_of_pattern(p)
    assert all(check_symmetry(p, s) == [] for s in fast)
    assert {s.key() for s in fast} == brute_symmetries(p)


@given(patterns(max_sites=3, max_pairs=3))
def test_symmetries_form_a_group(p):
    syms = symmetries_of_pattern(p)
    keys = {s.key() for s in syms}
    assert identity_symmetry(p).key() in keys
    for a in syms[:6]:
        assert a.inverse().key() in keys
        for b in syms[:6]:
            assert a.then(b).key() in keys


@given(patterns())
def test_json_round_trip(p):
    assert validate_pattern(p) == []
    q = IncidencePattern.from_json(p.to_json())
    assert q.to_json() == p.to_json()


@given(patterns(min_pairs=1))
def test_masks_round_trip(p):
    for mask in range(1 << len(p.pairs)):
        assert p.mask_of(p.edges_of_mask(mask)) == mask
    r = p.restrict(p.edges_of_mask(1))
    assert validate_pattern(r) == []
    assert len(r.edges) == 2


def test_malformed_json():
    with pytest.raises(ValidationError):
        IncidencePattern.from_json({"sites": ["a"]})


def _double_cover_of_loop():
    """Two sites swapping along the loop: a covering of the one-loop pattern."""
    big = IncidencePattern.from_pairs(["x", "y"], [("a", "x", "y"), ("b", "y", "x")])
    small = loop_pattern(["e"])
    proj = {"a": "e", "a~": "e~", "b": "e", "b~": "e~"}
    return PatternCovering(big, small, {"x": "0", "y": "0"}, proj)


def test_covering_checks():
    c = _double_cover_of_loop()
    assert check_covering(c) == []
    broken = PatternCovering(c.source, c.target, c.site_proj, {**c.edge_proj, "b~": "e"})
    assert check_covering(broken)
    thin = IncidencePattern.from_pairs(["x", "y"], [("a", "x", "y")])
    partial = PatternCovering(thin, c.target, c.site_proj, {"a": "e", "a~": "e~"})
    assert any("back-property" in x for x in check_covering(partial))


def test_dot_mentions_every_edge():
    p = intersection_pattern(tetrahedron())
    dot = pattern_to_dot(p)
    assert dot.startswith("digraph") and all(f'label="{e}"' in dot for e in p.edges)

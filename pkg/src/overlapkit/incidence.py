"""Incidence patterns: two-sorted multigraphs with a fixpoint-free edge reversal.

An incidence pattern has a set of sites and a set of directed edges.  Every
edge ``e`` has a source and a target site and a reverse edge ``rev[e]`` running
the other way.  Loops keep ``e`` and its reverse as two distinct identifiers.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Iterator, Mapping

from .errors import SizeGuardError, ValidationError


def sort_key(x) -> tuple:
    """Deterministic ordering key for mixed identifiers."""
    if isinstance(x, tuple):
        return (1, tuple(sort_key(y) for y in x))
    if isinstance(x, int):
        return (0, "", x)
    return (0, str(x), 0)


@dataclass(frozen=True)
class IncidencePattern:
    sites: tuple[str, ...]
    edges: tuple[str, ...]
    src: Mapping[str, str]
    tgt: Mapping[str, str]
    rev: Mapping[str, str]

    @classmethod
    def build(cls, sites: Iterable[str], edges: Iterable[tuple[str, str, str, str]]) -> "IncidencePattern":
        """Build from ``(id, src, tgt, rev)`` rows; identifiers are sorted."""
        rows = list(edges)
        return cls(
            sites=tuple(sorted(set(sites), key=sort_key)),
            edges=tuple(sorted((r[0] for r in rows), key=sort_key)),
            src={r[0]: r[1] for r in rows},
            tgt={r[0]: r[2] for r in rows},
            rev={r[0]: r[3] for r in rows},
        )

    @classmethod
    def from_pairs(cls, sites: Iterable[str], pairs: Iterable[tuple[str, str, str]]) -> "IncidencePattern":
        """Build from ``(name, src, tgt)`` triples, adding ``name~`` as the reverse."""
        rows = []
        for name, s, t in pairs:
            rows.append((name, s, t, name + "~"))
            rows.append((name + "~", t, s, name))
        return cls.build(sites, rows)

    @cached_property
    def out_edges(self) -> dict[str, tuple[str, ...]]:
        out: dict[str, list[str]] = {s: [] for s in self.sites}
        for e in self.edges:
            out.setdefault(self.src[e], []).append(e)
        return {s: tuple(v) for s, v in out.items()}

    @cached_property
    def site_index(self) -> dict[str, int]:
        return {s: i for i, s in enumerate(self.sites)}

    @cached_property
    def pairs(self) -> tuple[tuple[str, str], ...]:
        """One ``(e, rev e)`` per reversal orbit, ``e`` the smaller identifier."""
        seen = []
        for e in self.edges:
            r = self.rev[e]
            if sort_key(e) <= sort_key(r):
                seen.append((e, r))
        return tuple(seen)

    @cached_property
    def pair_index(self) -> dict[str, int]:
        idx = {}
        for i, (e, r) in enumerate(self.pairs):
            idx[e] = i
            idx[r] = i
        return idx

    def edges_between(self, s: str, t: str) -> tuple[str, ...]:
        return tuple(e for e in self.out_edges.get(s, ()) if self.tgt[e] == t)

    def is_loop(self, e: str) -> bool:
        return self.src[e] == self.tgt[e]

    def mask_of(self, edge_set: Iterable[str]) -> int:
        """Bitmask over reversal pairs; the set must be closed under ``rev``."""
        m = 0
        for e in edge_set:
            m |= 1 << self.pair_index[e]
        return m

    def edges_of_mask(self, mask: int) -> frozenset[str]:
        out = set()
        for i, (e, r) in enumerate(self.pairs):
            if mask >> i & 1:
                out.add(e)
                out.add(r)
        return frozenset(out)

    def restrict(self, alpha: Iterable[str]) -> "IncidencePattern":
        """The reduct to the edges in ``alpha`` (same sites)."""
        keep = set(alpha)
        rows = [(e, self.src[e], self.tgt[e], self.rev[e]) for e in self.edges if e in keep]
        return IncidencePattern.build(self.sites, rows)

    def to_json(self) -> dict:
        return {
            "sites": list(self.sites),
            "edges": [{"id": e, "src": self.src[e], "tgt": self.tgt[e], "rev": self.rev[e]} for e in self.edges],
        }

    @classmethod
    def from_json(cls, data: dict) -> "IncidencePattern":
        try:
            rows = [(str(d["id"]), str(d["src"]), str(d["tgt"]), str(d["rev"])) for d in data["edges"]]
            sites = [str(s) for s in data["sites"]]
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed pattern JSON: {exc}") from exc
        return cls.build(sites, rows)


def validate_pattern(p: IncidencePattern) -> list[str]:
    """List every violated invariant; an empty list means the pattern is valid."""
    problems = []
    sites = set(p.sites)
    for e in p.edges:
        for name, table in (("src", p.src), ("tgt", p.tgt), ("rev", p.rev)):
            if e not in table:
                problems.append(f"missing {name}: edge {e}")
        if e not in p.src or e not in p.tgt or e not in p.rev:
            continue
        if p.src[e] not in sites or p.tgt[e] not in sites:
            problems.append(f"dangling endpoint: edge {e}")
        r = p.rev[e]
        if r == e:
            problems.append(f"fixpoint: rev({e}) = {e}")
            continue
        if r not in p.rev:
            problems.append(f"rev target unknown: rev({e}) = {r}")
            continue
        if p.rev[r] != e:
            problems.append(f"not involutive: rev(rev({e})) = {p.rev[r]}")
        if p.src.get(r) != p.tgt[e] or p.tgt.get(r) != p.src[e]:
            problems.append(f"reversal endpoints: {e} and {r} do not run opposite ways")
    return problems


def require_valid(p: IncidencePattern) -> IncidencePattern:
    problems = validate_pattern(p)
    if problems:
        raise ValidationError("invalid incidence pattern", problems)
    return p


def loop_pattern(names: Iterable[str], site: str = "0") -> IncidencePattern:
    """One site carrying a forward and a backward loop per name."""
    return IncidencePattern.from_pairs([site], [(n, site, site) for n in names])


@dataclass(frozen=True)
class PatternSymmetry:
    site_map: Mapping[str, str]
    edge_map: Mapping[str, str]

    def then(self, other: "PatternSymmetry") -> "PatternSymmetry":
        """Apply ``self`` first, then ``other``."""
        return PatternSymmetry(
            {s: other.site_map[t] for s, t in self.site_map.items()},
            {e: other.edge_map[f] for e, f in self.edge_map.items()},
        )

    def inverse(self) -> "PatternSymmetry":
        return PatternSymmetry({v: k for k, v in self.site_map.items()}, {v: k for k, v in self.edge_map.items()})

    def key(self) -> tuple:
        return (tuple(sorted(self.site_map.items())), tuple(sorted(self.edge_map.items())))

    def is_identity(self) -> bool:
        return all(k == v for k, v in self.site_map.items()) and all(k == v for k, v in self.edge_map.items())


def identity_symmetry(p: IncidencePattern) -> PatternSymmetry:
    return PatternSymmetry({s: s for s in p.sites}, {e: e for e in p.edges})


def check_symmetry(p: IncidencePattern, eta: PatternSymmetry) -> list[str]:
    problems = []
    if sorted(eta.site_map) != sorted(p.sites) or sorted(eta.site_map.values()) != sorted(p.sites):
        problems.append("site map is not a bijection of the sites")
    if sorted(eta.edge_map) != sorted(p.edges) or sorted(eta.edge_map.values()) != sorted(p.edges):
        problems.append("edge map is not a bijection of the edges")
    if problems:
        return problems
    for e in p.edges:
        f = eta.edge_map[e]
        if p.src[f] != eta.site_map[p.src[e]] or p.tgt[f] != eta.site_map[p.tgt[e]]:
            problems.append(f"edge {e} -> {f} breaks endpoint types")
        if eta.edge_map[p.rev[e]] != p.rev[f]:
            problems.append(f"edge {e} -> {f} does not commute with reversal")
    return problems


def symmetries_of_pattern(p: IncidencePattern, max_sites: int = 8) -> list[PatternSymmetry]:
    """All symmetries, by backtracking over site bijections then edge bijections."""
    if len(p.sites) > max_sites:
        raise SizeGuardError(f"{len(p.sites)} sites exceeds the symmetry cap of {max_sites}")
    count = {(s, t): len(p.edges_between(s, t)) for s in p.sites for t in p.sites}
    result = []
    for perm in itertools.permutations(p.sites):
        smap = dict(zip(p.sites, perm))
        if any(count[(s, t)] != count[(smap[s], smap[t])] for s in p.sites for t in p.sites):
            continue
        for emap in _edge_bijections(p, smap):
            result.append(PatternSymmetry(dict(smap), emap))
    return result


def _edge_bijections(p: IncidencePattern, smap: Mapping[str, str]) -> Iterator[dict[str, str]]:
    pairs = list(p.pairs)
    emap: dict[str, str] = {}
    used: set[str] = set()

    def extend(i: int) -> Iterator[dict[str, str]]:
        if i == len(pairs):
            yield dict(emap)
            return
        e, r = pairs[i]
        for f in p.edges_between(smap[p.src[e]], smap[p.tgt[e]]):
            fr = p.rev[f]
            if f in used or fr in used:
                continue
            emap[e], emap[r] = f, fr
            used.update((f, fr))
            yield from extend(i + 1)
            used.difference_update((f, fr))
            del emap[e], emap[r]

    yield from extend(0)


@dataclass(frozen=True)
class PatternCovering:
    source: IncidencePattern
    target: IncidencePattern
    site_proj: Mapping[str, str]
    edge_proj: Mapping[str, str]


def check_covering(c: PatternCovering) -> list[str]:
    """Homomorphism, surjectivity and the back-property; empty list means ok."""
    src, tgt = c.source, c.target
    problems = []
    for s in src.sites:
        if c.site_proj.get(s) not in tgt.site_index:
            problems.append(f"site {s} has no valid image")
    for e in src.edges:
        f = c.edge_proj.get(e)
        if f not in tgt.src:
            problems.append(f"edge {e} has no valid image")
            continue
        if tgt.src[f] != c.site_proj.get(src.src[e]) or tgt.tgt[f] != c.site_proj.get(src.tgt[e]):
            problems.append(f"edge {e} -> {f} breaks endpoint types")
        if c.edge_proj.get(src.rev[e]) != tgt.rev[f]:
            problems.append(f"edge {e} -> {f} does not commute with reversal")
    if problems:
        return problems
    if set(c.site_proj.values()) != set(tgt.sites):
        problems.append("not surjective on sites")
    if set(c.edge_proj.values()) != set(tgt.edges):
        problems.append("not surjective on edges")
    for s in src.sites:
        have = {c.edge_proj[e] for e in src.out_edges.get(s, ())}
        for f in tgt.out_edges.get(c.site_proj[s], ()):
            if f not in have:
                problems.append(f"back-property fails at {s} for {f}")
    return problems


def pattern_to_dot(p: IncidencePattern) -> str:
    lines = ["digraph pattern {"]
    for s in p.sites:
        lines.append(f'  "{s}";')
    for e in p.edges:
        lines.append(f'  "{p.src[e]}" -> "{p.tgt[e]}" [label="{e}"];')
    lines.append("}")
    return "\n".join(lines)


def dump_pattern(p: IncidencePattern) -> str:
    return json.dumps(p.to_json(), indent=2)

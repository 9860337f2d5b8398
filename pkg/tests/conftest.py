import random

import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from overlapkit.igraph import IGraph
from overlapkit.incidence import IncidencePattern, loop_pattern

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large])
settings.load_profile("default")


@st.composite
def patterns(draw, max_sites=4, max_pairs=4, min_pairs=0):
    n = draw(st.integers(1, max_sites))
    sites = [f"s{i}" for i in range(n)]
    k = draw(st.integers(min_pairs, max_pairs))
    pairs = []
    for i in range(k):
        a = draw(st.sampled_from(sites))
        b = draw(st.sampled_from(sites))
        pairs.append((f"e{i}", a, b))
    return IncidencePattern.from_pairs(sites, pairs)


@st.composite
def partial_injections(draw, dom, cod):
    keep = draw(st.lists(st.sampled_from(dom), unique=True)) if dom else []
    if not cod:
        return []
    imgs = draw(st.permutations(cod))
    return list(zip(keep, imgs[: len(keep)]))


@st.composite
def igraphs(draw, pattern=None, max_vertices=4, **kw):
    p = pattern if pattern is not None else draw(patterns(**kw))
    part = {s: [f"{s}v{i}" for i in range(draw(st.integers(1, max_vertices)))] for s in p.sites}
    edges = {}
    for e, _ in p.pairs:
        edges[e] = draw(partial_injections(part[p.src[e]], part[p.tgt[e]]))
    return IGraph.build(p, part, edges)


def random_igraph(rng: random.Random, p: IncidencePattern, max_vertices: int = 4, density: float = 0.7) -> IGraph:
    part = {s: [f"{s}v{i}" for i in range(rng.randint(1, max_vertices))] for s in p.sites}
    edges = {}
    for e, _ in p.pairs:
        dom = [v for v in part[p.src[e]] if rng.random() < density]
        cod = rng.sample(part[p.tgt[e]], min(len(dom), len(part[p.tgt[e]])))
        edges[e] = list(zip(dom, cod))
    return IGraph.build(p, part, edges)


def random_pattern(rng: random.Random, max_sites: int = 4, max_pairs: int = 4) -> IncidencePattern:
    sites = [f"s{i}" for i in range(rng.randint(1, max_sites))]
    pairs = [(f"e{i}", rng.choice(sites), rng.choice(sites)) for i in range(rng.randint(0, max_pairs))]
    return IncidencePattern.from_pairs(sites, pairs)


@pytest.fixture
def two_site_pattern():
    return IncidencePattern.from_pairs(["s", "t"], [("e", "s", "t"), ("f", "s", "t")])


@pytest.fixture
def loop_spec():
    return IGraph.build(loop_pattern(["a"]), {"0": [1, 2, 3]}, {"a": [(1, 2), (2, 3)]})

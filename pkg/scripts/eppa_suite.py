"""Run both extension constructions over a fixed suite of small structures.

Each instance is solved by the general route at the requested N; single
partial isomorphisms are also solved by the cyclic excursion.
"""

import argparse
import json
import time

from overlapkit.errors import BudgetExceeded
from overlapkit.eppa import EppaConfig, RelStructure, extend_single, solve_extension, verify_solution


def sym(edges):
    return [t for x, y in edges for t in ((x, y), (y, x))]


def instances():
    edge = RelStructure.build("xy", [("x", "y")])
    dpath = RelStructure.build("abc", [("a", "b"), ("b", "c")])
    upath = RelStructure.build("xyz", sym([("x", "y"), ("y", "z")]))
    dcyc = RelStructure.build("abc", [("a", "b"), ("b", "c"), ("c", "a")])
    upath4 = RelStructure.build("wxyz", sym([("w", "x"), ("x", "y"), ("y", "z")]))
    match = RelStructure.build("abcd", sym([("a", "b"), ("c", "d")]))
    return [
        ("edge x->y", edge, [{"x": "y"}]),
        ("edge x->y, y->x", edge, [{"x": "y"}, {"y": "x"}]),
        ("edge x->y, x->x, y->y", edge, [{"x": "y"}, {"x": "x"}, {"y": "y"}]),
        ("directed 3-path shift", dpath, [{"a": "b", "b": "c"}]),
        ("directed 3-path a->b, b->c", dpath, [{"a": "b"}, {"b": "c"}]),
        ("directed 3-path shift, a->c", dpath, [{"a": "b", "b": "c"}, {"a": "c"}]),
        ("undirected 3-path end swap", upath, [{"x": "z", "z": "x"}]),
        ("undirected 3-path x->z, y->y", upath, [{"x": "z"}, {"y": "y"}]),
        ("directed 3-cycle rotation", dcyc, [{"a": "b", "b": "c", "c": "a"}]),
        ("undirected 4-path partial shift", upath4, [{"w": "x", "x": "y"}]),
        ("matching edge swap", match, [{"a": "c", "b": "d"}]),
    ]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[2, 3])
    ap.add_argument("--budget", type=int, default=200_000)
    ap.add_argument("--skip", nargs="*", default=[], help="instance names to leave out")
    args = ap.parse_args()
    for name, a, ps in instances():
        if name in args.skip:
            continue
        if len(ps) == 1:
            t = time.time()
            sol = extend_single(a, ps[0])
            ok = not verify_solution(a, sol)
            print(json.dumps({"instance": name, "method": "excursion", "size": len(sol.structure.universe), "verified": ok, "seconds": round(time.time() - t, 3)}), flush=True)
        for n in args.n:
            t = time.time()
            row = {"instance": name, "method": "realisation", "n": n}
            try:
                sol = solve_extension(a, ps, EppaConfig(n=n, max_elements=args.budget))
                row.update(size=len(sol.structure.universe), verified=not verify_solution(a, sol))
            except BudgetExceeded as exc:
                row.update(status="budget", where=exc.where)
            row["seconds"] = round(time.time() - t, 2)
            print(json.dumps(row), flush=True)


if __name__ == "__main__":
    main()

"""Groupoid sizes and timings of the N-acyclic booster on small patterns.

Prints one JSON line per run; ``--out`` also writes them to a file.
"""

import argparse
import json
import time

from overlapkit.amalgam import BoosterConfig, make_n_acyclic
from overlapkit.hypergraph import cycle_graph, igraph_of
from overlapkit.incidence import IncidencePattern, loop_pattern


def cases():
    yield "loop", loop_pattern(["a"]), (2, 3, 4)
    yield "two loops", loop_pattern(["a", "b"]), (2, 3)
    yield "two parallel pairs", IncidencePattern.from_pairs(["s", "t"], [("e", "s", "t"), ("f", "s", "t")]), (2, 3)
    yield "loop and link", IncidencePattern.from_pairs(["s", "t"], [("e", "s", "s"), ("f", "s", "t")]), (2, 3)
    for k in (3, 4, 5):
        yield f"cycle C{k}", igraph_of(cycle_graph(k)).pattern, (2, k)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--early-exit", action="store_true")
    ap.add_argument("--budget", type=int, default=200_000)
    ap.add_argument("--out")
    args = ap.parse_args()
    rows = []
    for name, p, ns in cases():
        for n in ns:
            t = time.time()
            r = make_n_acyclic(p, BoosterConfig(n=n, max_elements=args.budget, early_exit=args.early_exit))
            row = {
                "case": name,
                "n": n,
                "status": r.status,
                "size": r.groupoid.n,
                "stages": len(r.stages),
                "seconds": round(time.time() - t, 3),
            }
            rows.append(row)
            print(json.dumps(row), flush=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.writelines(json.dumps(r) + "\n" for r in rows)


if __name__ == "__main__":
    main()

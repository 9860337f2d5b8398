"""Booster attempts on the intersection pattern of the tetrahedron.

Records where each configuration stops. With the default budgets the second
stage runs out of elements, so no 2-acyclic groupoid over K4 is certified.
"""

import argparse
import json
import time

from overlapkit.amalgam import BoosterConfig, make_n_acyclic
from overlapkit.hypergraph import Hypergraph, igraph_of, verify_covering, verify_strict
from overlapkit.products import hypergraph_reduced_product


def tetrahedron() -> Hypergraph:
    return Hypergraph.build(range(4), [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)])


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--budgets", type=int, nargs="+", default=[200_000, 2_000_000])
    ap.add_argument("--n", type=int, default=2)
    args = ap.parse_args()
    a = tetrahedron()
    p = igraph_of(a).pattern
    for budget in args.budgets:
        for early in (False, True):
            t = time.time()
            r = make_n_acyclic(p, BoosterConfig(n=args.n, max_elements=budget, early_exit=early))
            row = {
                "budget": budget,
                "early_exit": early,
                "status": r.status,
                "size": r.groupoid.n,
                "failed_stage": r.failed_stage,
                "seconds": round(time.time() - t, 2),
            }
            if r.certified:
                hp = hypergraph_reduced_product(a, r.groupoid)
                row["covering_ok"] = not verify_covering(hp.covering)
                row["strict_ok"] = not verify_strict(hp.covering)
            print(json.dumps(row), flush=True)


if __name__ == "__main__":
    main()

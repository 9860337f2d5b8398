"""Timing of the two-stage realisation on a few specifications.

The full pipeline on the loop specification at N = 3 takes minutes, so it
only runs with ``--full``.
"""

import argparse
import json
import time
from pathlib import Path

from overlapkit.errors import BudgetExceeded
from overlapkit.igraph import IGraph
from overlapkit.products import RealiseConfig, realise

INPUTS = Path(__file__).resolve().parent.parent / "inputs"


def load(name: str) -> IGraph:
    return IGraph.from_json(json.loads((INPUTS / name).read_text()))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--full", action="store_true", help="also run the slow full pipelines")
    args = ap.parse_args()
    runs = [
        ("loop_spec.json", 2, False),
        ("loop_spec.json", 2, True),
        ("loop_spec.json", 3, True),
        ("two_mode_coherent.json", 2, True),
        ("two_mode_coherent.json", 4, True),
        ("two_mode_spec.json", 2, True),
    ]
    if args.full:
        runs.append(("loop_spec.json", 3, False))
    for name, n, early in runs:
        t = time.time()
        row = {"spec": name, "n": n, "early_exit": early}
        try:
            r = realise(load(name), n, RealiseConfig(n=n, early_exit=early))
            row.update(points=len(r.hypergraph.vertices), hyperedges=len(r.hypergraph.hyperedges), stages=1 if r.stage2 is r.stage1 else 2)
        except BudgetExceeded as exc:
            row.update(status="budget", where=exc.where)
        row["seconds"] = round(time.time() - t, 2)
        print(json.dumps(row), flush=True)


if __name__ == "__main__":
    main()

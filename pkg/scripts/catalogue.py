"""Solve b_1..b_k for one (p, m) and print one JSON line per k."""

import argparse
import json
import time

from pharmonic.energy import energy_report
from pharmonic.model import Params, regime
from pharmonic.shooting import solve_catalogue


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--p", type=float, default=3.0)
    ap.add_argument("--m", type=int, default=5)
    ap.add_argument("--k-max", type=int, default=4)
    ap.add_argument("--b-tol", type=float, default=1e-9)
    args = ap.parse_args()

    params = Params(args.p, args.m)
    print(json.dumps({"regime": regime(params).as_dict()}, default=str))
    t0 = time.perf_counter()
    for entry in solve_catalogue(params, args.k_max, args.b_tol):
        if entry.result is None:
            print(json.dumps({"k": entry.k, "error": entry.error, "reason": entry.reason}))
            continue
        res = entry.result
        rep = energy_report(res.orbit, res.solution, params)
        print(json.dumps({**res.as_dict(), "energy_report": rep.as_dict()}))
    print(json.dumps({"seconds": round(time.perf_counter() - t0, 3)}))


if __name__ == "__main__":
    main()

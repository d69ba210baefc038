"""Dense scan of zero counts over b in (0, upper_bracket] and the k = 2 bracket search."""

import argparse
import json
import time

import numpy as np

from pharmonic.model import Params, regime
from pharmonic.shooting import BracketNotFound, find_bk, scan_zero_counts, upper_bracket


def scan(params: Params, n: int) -> dict:
    ub = upper_bracket(params)
    bs = np.linspace(ub / n, ub, n)
    t0 = time.perf_counter()
    zc = scan_zero_counts(params, bs)
    edges = np.nonzero(np.diff(zc))[0]
    try:
        b2 = find_bk(params, 2).b_k
    except BracketNotFound as exc:
        b2 = f"BracketNotFound: {exc}"
    return {
        "p": params.p,
        "m": params.m,
        "regime": regime(params).regime.value,
        "zero_counts": sorted(set(zc.tolist())),
        "transitions": [[float(bs[i]), int(zc[i]), int(zc[i + 1])] for i in edges],
        "b2": b2,
        "seconds": round(time.perf_counter() - t0, 3),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--cells", default="2:7,3:12,2:3,3:5", help="comma separated p:m pairs")
    ap.add_argument("--n", type=int, default=10_000)
    args = ap.parse_args()
    for cell in args.cells.split(","):
        p, m = cell.split(":")
        print(json.dumps(scan(Params(float(p), int(m)), args.n)))


if __name__ == "__main__":
    main()

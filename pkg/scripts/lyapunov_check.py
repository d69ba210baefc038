"""Monotonicity of W along random b-orbits, and the sign of W' for m < p."""

import argparse

import numpy as np

from pharmonic.integrate import integrate_orbit
from pharmonic.model import Params
from pharmonic.profile import ProfileState


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--orbits", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    cells = [(2, 3), (2, 6), (3, 5), (3, 12), (4, 8), (2.5, 4), (5, 3), (4, 3)]
    worst = {}
    for _ in range(args.orbits):
        p, m = cells[rng.integers(len(cells))]
        b = 10.0 ** rng.uniform(-4, 0.5)
        orbit = integrate_orbit(ProfileState(0.0, 0.0, b), Params(p, m))
        dw = np.diff(orbit.w)
        # m > p: W should never decrease; m < p: never increase
        bad = -dw.min() if m > p else dw.max()
        worst[(p, m)] = max(worst.get((p, m), 0.0), float(max(bad, 0.0)))
    for (p, m), v in sorted(worst.items()):
        print(f"p={p:g} m={m}: {'nondecreasing' if m > p else 'nonincreasing'} up to {v:.2e}")


if __name__ == "__main__":
    main()

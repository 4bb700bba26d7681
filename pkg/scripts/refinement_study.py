"""Localized constant at a fixed center versus grid resolution.

For critical constant exponents the problem is scale invariant, so the value
on B(x, r) depends on r/h only; this shows the resolution-limited approach.
"""
import argparse

from varsob import concentration as conc
from varsob import exponents as ex
from varsob.grid import Grid


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cells", type=int, nargs="+", default=[16, 32, 64])
    ap.add_argument("--radii", type=float, nargs="+", default=[0.25, 0.125])
    args = ap.parse_args()

    for n in args.cells:
        grid = Grid.box((n, n))
        p, q = ex.constant(grid, 1.5), ex.constant(grid, 6.0)
        radii = [r for r in args.radii if r >= 2 * max(grid.spacing)]
        loc = conc.localized_constant(p, q, (0.5, 0.5), radii)
        vals = " ".join(f"r={r:g}:{v:.6e}" for r, v in zip(loc.radii, loc.values))
        print(f"N={n:<5d} {vals}  extrapolated {loc.extrapolated:.6e}")


if __name__ == "__main__":
    main()

"""Run an epsilon sweep on a 2D box and print the dichotomy verdict.

    python3 scripts/sweep_study.py --cells 32 --p "constant(1.5)" --q "constant(6)" --out sweep.csv
"""
import argparse

from varsob import concentration as conc
from varsob import exponents as ex
from varsob.grid import Grid


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cells", type=int, default=32)
    ap.add_argument("--p", default="constant(1.5)", help="exponent spec for p")
    ap.add_argument("--q", default="constant(6)", help="exponent spec for q")
    ap.add_argument("--schedule", type=float, nargs="+", default=[0.25, 0.125, 0.0625, 0.03125, 0.0])
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    grid = Grid.box((args.cells, args.cells))
    p, q = ex.field_from_spec(grid, args.p), ex.field_from_spec(grid, args.q)
    rep = conc.run_sweep(p, q, args.schedule)
    for rec in rep.records:
        print(f"eps={rec.problem.eps:<8g} objective={rec.objective:.8e} iters={rec.iterations}")
    print(f"limit estimate {rep.limit_estimate:.8e}")
    print(f"classification {rep.classification} (final concentration ratio {rep.conc_ratio[-1]:.3f})")
    if args.out:
        conc.write_sweep_csv(rep, args.out)


if __name__ == "__main__":
    main()

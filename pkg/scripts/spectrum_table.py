"""Both closed-form eigenvalue candidates, their residuals and the two numeric solvers."""

import argparse

from pharmonic.model import Params
from pharmonic.spectrum import eigenvalue_numeric_x, spectrum_report

CELLS = [(2, 3), (2, 5), (3, 3), (3, 5), (4, 8), (5, 3), (2.5, 4), (3, 12)]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--j-max", type=int, default=4)
    args = ap.parse_args()
    print(f"{'p':>4} {'m':>3} {'j':>2} {'theorem':>10} {'chain':>10} {'numeric':>14} {'x-FD':>12}"
          f" {'res_thm':>9} {'res_chain':>9} selected")
    for p, m in CELLS:
        params = Params(p, m)
        rep = spectrum_report(params, args.j_max)
        xs = eigenvalue_numeric_x(params, args.j_max)
        for pr, xv in zip(rep.pairs, xs):
            print(f"{p:>4g} {m:>3} {pr.j:>2} {pr.lambda_hat_theorem:>10.6g} {pr.lambda_hat_chain:>10.6g}"
                  f" {pr.lambda_hat_numeric:>14.10g} {xv:>12.8g} {pr.residual_theorem:>9.2e}"
                  f" {pr.residual_chain:>9.2e} {pr.selected}")
        print(f"     verdict: {rep.verdict.value}")


if __name__ == "__main__":
    main()

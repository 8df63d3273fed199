"""Reduced-equation reference: centre values, Richardson error bars and grid-convergence slope.

    python scripts/oracle_reference.py --ha 10 --bc hunt
"""
import argparse

from semmhd import oracle as orc


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--ha", type=float, nargs="+", default=[0.0, 10.0, 100.0])
    ap.add_argument("--bc", default="insulating", choices=["insulating", "hunt"])
    ap.add_argument("--n", type=int, default=255, help="coarse grid points (odd)")
    a = ap.parse_args()
    if 0.0 in a.ha:
        print(f"Fourier-series duct centre value: {orc.duct_poisson_series():.12g}")
    for Ha in a.ha:
        n = max(a.n, orc.min_points(Ha)) | 1
        r = orc.richardson(Ha, a.bc, n)
        u, b = r.center()
        print(f"Ha={Ha:g} {a.bc}: u(0,0)={u:.12g} +- {r.u_error_bar:.1e}  b(0,0)={b:.3g}  "
              f"Ha^-1={1 / Ha if Ha else float('inf'):.3g}  Ha^-2={1 / Ha ** 2 if Ha else float('inf'):.3g}")
    print(f"grid-convergence slope (Ha=10, {a.bc}): {orc.convergence_slope(10.0, a.bc):.3f}")


if __name__ == "__main__":
    main()

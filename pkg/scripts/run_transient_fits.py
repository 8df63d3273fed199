"""Transient Hartmann runs and Levenberg-Marquardt fits of the centre velocity, one row per Ha.

    python scripts/run_transient_fits.py --kind hunt --ha 10 50
"""
import argparse
import math
from pathlib import Path

from semmhd.cases import CaseSpec, make_case
from semmhd.history import ProbeHistory, write_history_csv
from semmhd.transient import constrained_fit, lm_fit, modal_eigenvalues, write_comparison_csv


def run(kind, Ha, counts, N, T):
    case = make_case(CaseSpec(kind=kind, Ha=Ha, mesh_counts=counts, N=N, L=1.0, dt=1e-3, cfl=0.5))
    case.solver.run(case.state, T)
    return ProbeHistory.from_records(case.solver.records, {"Ha": Ha, "Re": 1.0, "Rm": 1.0})


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--kind", default="hunt", choices=["shercliff", "hunt"])
    ap.add_argument("--ha", type=float, nargs="+", default=[10.0, 50.0])
    ap.add_argument("--elements", default="1x8x8")
    ap.add_argument("--N", type=int, default=4)
    ap.add_argument("--periods", type=float, default=8.0, help="run length in units of 4/Ha past 1/Ha")
    ap.add_argument("--out", default="out/transient_fits")
    a = ap.parse_args()
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    counts = tuple(int(v) for v in a.elements.split("x"))
    fits = {}
    for Ha in a.ha:
        T = 1.0 / Ha + a.periods * 4.0 / Ha
        hist = run(a.kind, Ha, counts, a.N, T)
        write_history_csv(hist, out / f"history_Ha{Ha:g}.csv")
        fit = lm_fit(hist, raise_on_failure=False)
        s, w, osc = modal_eigenvalues(1.0, 1.0, Ha)
        pin = constrained_fit(hist, s, w)
        fits[Ha] = fit
        print(f"Ha={Ha:g}: s={fit.decay_s:.5g} (model {s:.5g}) w={fit.freq_w:.5g} (model {w:.5g}) "
              f"s0={fit.offset_s0:.5g} (1/Ha^2 = {1 / Ha ** 2:.3g}) converged={fit.converged} "
              f"residual={fit.residual_norm:.3e} pinned residual={pin.residual_norm:.3e}")
    write_comparison_csv(fits, out / "fit_comparison.csv")


if __name__ == "__main__":
    main()

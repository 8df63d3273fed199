"""Command-line driver: ``mhd run | converge | transient-fit | oracle | compare``.

Exit codes: 0 success, 2 tolerance violation, 1 error.
"""
from __future__ import annotations

import argparse
import logging
import math
from pathlib import Path
import sys
import time

import numpy as np

from . import oracle as orc
from .cases import HUNT, SHERCLIFF, make_case, sample_cross_section
from .history import ProbeHistory, write_history_csv
from .io import (
    ConfigError, JsonlLog, RunConfig, dump_from_state, parse_config,
    read_slice_csv, validate_config, write_field_dump, write_json, write_slice_csv,
)
from .transient import lm_fit, constrained_fit, modal_eigenvalues, write_comparison_csv

log = logging.getLogger("semmhd")

EXIT_OK, EXIT_ERROR, EXIT_TOLERANCE = 0, 1, 2


def oracle_bc(case):
    if case.kind == SHERCLIFF:
        return orc.insulating()
    if case.kind == HUNT:
        return orc.hunt()
    return orc.conducting(case.r_w_solid, case.delta)


# ----------------------------------------------------------------------------
# simulation helpers

def simulate(cfg: RunConfig, N: int | None = None, out: Path | None = None, initial=None):
    """Run one case; returns (case, history, converged)."""
    spec = cfg.case if N is None else cfg.case.with_(N=N)
    case = make_case(spec)
    solver = case.solver
    if initial is not None:
        case.state = solver.initial_state(*initial(case))
    meta = {"case": spec.kind, "Ha": spec.Ha, "Re": spec.Re, "Rm": spec.Rm, "N": spec.N,
            "dt_cap": spec.dt}
    logf = JsonlLog(out / "run.jsonl") if out is not None else None

    def cb(state):
        if logf is not None:
            logf.write(solver.records[-1].as_dict())

    t0 = time.perf_counter()
    try:
        if cfg.t_end is not None:
            solver.run(case.state, cfg.t_end, callback=cb)
            converged = True
        else:
            _, converged = solver.march_to_steady(case.state, spec.steady_tol, spec.t_max, callback=cb)
    finally:
        if logf is not None:
            logf.close()
    meta["wall_time"] = time.perf_counter() - t0
    hist = ProbeHistory.from_records(solver.records, meta)
    return case, hist, converged


def write_run_outputs(cfg: RunConfig, case, hist, converged: bool, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    write_history_csv(hist, out / "history.csv")
    write_field_dump(dump_from_state(case.mesh, case.state), out / "fields.bin")
    npts = cfg.slice_points
    summary = {"converged": converged, "time": case.state.time, "steps": case.state.step_index,
               "u_center": hist.u_center[-1] if len(hist) else float("nan"),
               "b_center": hist.b_center[-1] if len(hist) else float("nan"),
               "Ha": case.spec.Ha, "Re": case.spec.Re, "Rm": case.spec.Rm, "N": case.spec.N,
               "kind": case.spec.kind}
    for name, f, lo in (("u_x", case.state.u[0], -1.0), ("B_x", case.state.B[0], case.mesh.yb[0])):
        ys = np.linspace(lo, -lo, npts)
        vals = sample_cross_section(case.mesh, f, cfg.x_station, ys, ys)
        write_slice_csv(ys, ys, vals, out / f"slice_{name}.csv")
    write_json(summary, out / "summary.json")
    return summary


def oracle_reference(cfg: RunConfig):
    c = cfg.case
    return orc.richardson(c.Ha, oracle_bc(c), cfg.oracle_n)


def sem_error_vs_oracle(case, ref) -> tuple[float, float]:
    """Relative max-norm errors of u_x and of b = sqrt(Re/Rm) B_x on the oracle fluid nodes."""
    ys, zs, u_ref, b_ref = ref.fluid_view()
    x = 0.0
    u_sem = sample_cross_section(case.mesh, case.state.u[0], x, ys, zs)
    b_sem = orc.scale_b(sample_cross_section(case.mesh, case.state.B[0], x, ys, zs),
                        case.spec.Re, case.spec.Rm)
    eu = float(np.abs(u_sem - u_ref).max() / np.abs(u_ref).max())
    bscale = np.abs(b_ref).max()
    eb = float(np.abs(b_sem - b_ref).max() / bscale) if bscale > 0 else float("nan")
    return eu, eb


# ----------------------------------------------------------------------------
# commands

def cmd_run(cfg: RunConfig, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    case, hist, converged = simulate(cfg, out=out)
    s = write_run_outputs(cfg, case, hist, converged, out)
    log.info("run finished: t=%.4f steps=%d u_center=%.10g converged=%s",
             s["time"], s["steps"], s["u_center"], converged)
    return EXIT_OK if converged else EXIT_TOLERANCE


def cmd_converge(cfg: RunConfig, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    ref = oracle_reference(cfg)
    rows = []
    status = EXIT_OK
    for N in cfg.orders:
        sub = out / f"N{N}"
        sub.mkdir(exist_ok=True)
        try:
            case, hist, converged = simulate(cfg, N=N, out=sub)
            write_run_outputs(cfg, case, hist, converged, sub)
            eu, eb = sem_error_vs_oracle(case, ref)
            rows.append((N, eu, eb, "ok" if converged else "not-steady"))
            if not converged:
                status = EXIT_TOLERANCE
        except Exception as exc:  # keep the partial table
            log.error("N=%d failed: %s", N, exc)
            rows.append((N, float("nan"), float("nan"), "failed"))
            status = EXIT_ERROR
        log.info("N=%d err_u=%.4e err_b=%.4e", N, rows[-1][1], rows[-1][2])
    with open(out / "convergence.csv", "w") as fh:
        fh.write("N,err_u,err_b,status\n")
        for N, eu, eb, st in rows:
            fh.write(f"{N},{eu:.17g},{eb:.17g},{st}\n")
    with open(out / "convergence_plot.dat", "w") as fh:
        fh.write("# N log10(err_u) log10(err_b)\n")
        for N, eu, eb, _ in rows:
            lu = math.log10(eu) if eu > 0 else float("nan")
            lb = math.log10(eb) if eb > 0 else float("nan")
            fh.write(f"{N} {lu:.17g} {lb:.17g}\n")
    write_json({"oracle_n": cfg.oracle_n, "oracle_u_error_bar": ref.u_error_bar,
                "oracle_b_error_bar": ref.b_error_bar}, out / "oracle_info.json")
    return status


def cmd_transient_fit(cfg: RunConfig, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    if cfg.t_end is None:
        cfg.t_end = cfg.case.t_max
    case, hist, _ = simulate(cfg, out=out)
    write_run_outputs(cfg, case, hist, True, out)
    c = cfg.case
    fit = lm_fit(hist, t_start=cfg.fit_t_start, raise_on_failure=False)
    s, w, osc = modal_eigenvalues(c.Re, c.Rm, c.Ha)
    pinned = constrained_fit(hist, s, w, t_start=cfg.fit_t_start) if osc else None
    write_comparison_csv({c.Ha: fit}, out / "fit_comparison.csv", c.Re, c.Rm)
    write_json({"fit": {k: getattr(fit, k) for k in
                        ("u0_amp", "decay_s", "freq_w", "phase", "offset_s0", "residual_norm",
                         "converged", "iterations")},
                "pinned": None if pinned is None else {
                    k: getattr(pinned, k) for k in
                    ("u0_amp", "decay_s", "freq_w", "phase", "offset_s0", "residual_norm")},
                "analytic": {"s": s, "w": w, "oscillatory": osc}}, out / "fit.json")
    log.info("fit: s=%.5g w=%.5g s0=%.5g (analytic s=%.5g w=%.5g)",
             fit.decay_s, fit.freq_w, fit.offset_s0, s, w)
    return EXIT_OK if fit.converged else EXIT_TOLERANCE


def cmd_oracle(cfg: RunConfig, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    c = cfg.case
    ref = oracle_reference(cfg)
    ys, zs, u, b = ref.fluid_view()
    write_slice_csv(ys, zs, u, out / "slice_u_x.csv")
    write_slice_csv(ys, zs, b / math.sqrt(c.Re / c.Rm), out / "slice_B_x.csv")
    uc, bc = ref.center()
    write_json({"u_center": uc, "b_center": bc, "u_error_bar": ref.u_error_bar,
                "b_error_bar": ref.b_error_bar, "n": cfg.oracle_n, "Ha": c.Ha,
                "kind": c.kind}, out / "summary.json")
    if cfg.oracle_T > 0:
        n = max(cfg.oracle_n, orc.min_points(c.Ha)) | 1  # odd: node at the centre
        hist = orc.solve_transient_reduced(c.Ha, c.Re, c.Rm, oracle_bc(c), n,
                                           dt=cfg.oracle_dt, T=cfg.oracle_T)
        write_history_csv(hist, out / "history.csv")
    log.info("oracle centre u=%.12g (+- %.2e)", uc, ref.u_error_bar)
    return EXIT_OK


DEFAULT_TOLERANCES = {"u_center_rel": 1e-3, "u_linf_rel": 1e-2}


def read_tolerances(path) -> dict:
    tol = dict(DEFAULT_TOLERANCES)
    if path is None:
        return tol
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line or line.startswith("["):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}: expected 'key = value'", lineno)
        k, v = (s.strip() for s in line.split("=", 1))
        if k not in ("u_center_rel", "u_linf_rel", "b_linf_rel"):
            raise ConfigError(f"{path}: unknown tolerance {k!r}", lineno, k)
        tol[k] = float(v)
    return tol


def compare_dirs(ref_dir: Path, run_dir: Path, tol: dict) -> dict:
    """Centre value and slice comparisons; returns {metric: (value, tolerance, ok)}."""
    import json
    from scipy.interpolate import RegularGridInterpolator

    ref = json.loads((ref_dir / "summary.json").read_text())
    run = json.loads((run_dir / "summary.json").read_text())
    out = {}
    rel = abs(run["u_center"] - ref["u_center"]) / abs(ref["u_center"])
    out["u_center_rel"] = (rel, tol["u_center_rel"], rel <= tol["u_center_rel"])
    for name, key in (("u_x", "u_linf_rel"), ("B_x", "b_linf_rel")):
        if key not in tol:
            continue
        ry, rz, rv = read_slice_csv(ref_dir / f"slice_{name}.csv")
        sy, sz, sv = read_slice_csv(run_dir / f"slice_{name}.csv")
        interp = RegularGridInterpolator((ry, rz), rv, method="cubic")
        Y, Z = np.meshgrid(sy, sz, indexing="ij")
        inside = (np.abs(Y) <= ry.max()) & (np.abs(Z) <= rz.max())
        refv = interp(np.stack([Y[inside], Z[inside]], axis=1))
        err = float(np.abs(sv[inside] - refv).max() / max(np.abs(refv).max(), 1e-300))
        out[key] = (err, tol[key], err <= tol[key])
    return out


def cmd_compare(ref_dir: Path, run_dir: Path, tol_file) -> int:
    tol = read_tolerances(tol_file)
    res = compare_dirs(ref_dir, run_dir, tol)
    ok = True
    for k, (v, t, good) in res.items():
        print(f"{'PASS' if good else 'FAIL'} {k}: {v:.4e} (tolerance {t:.1e})")
        ok &= good
    return EXIT_OK if ok else EXIT_TOLERANCE


# ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mhd", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("run", "converge", "transient-fit", "oracle"):
        sp = sub.add_parser(name)
        sp.add_argument("-c", "--config", required=True)
        sp.add_argument("-o", "--output", help="output directory (overrides output_dir)")
        if name == "converge":
            sp.add_argument("--orders", help="comma-separated polynomial orders")
    sp = sub.add_parser("compare")
    sp.add_argument("--ref", required=True)
    sp.add_argument("--run", required=True)
    sp.add_argument("--tol-file")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "compare":
            return cmd_compare(Path(args.ref), Path(args.run), args.tol_file)
        cfg = parse_config(args.config)
        cfg.command = args.command
        if getattr(args, "orders", None):
            try:
                cfg.orders = [int(v) for v in args.orders.split(",") if v.strip()]
            except ValueError:
                raise ConfigError(f"bad --orders value {args.orders!r}") from None
            validate_config(cfg)
        logging.getLogger().setLevel(cfg.log_level.upper() if not args.verbose else "DEBUG")
        out = Path(args.output or cfg.output_dir)
        handler = {"run": cmd_run, "converge": cmd_converge,
                   "transient-fit": cmd_transient_fit, "oracle": cmd_oracle}[args.command]
        return handler(cfg, out)
    except (ConfigError, OSError, ValueError, RuntimeError) as exc:
        log.error("%s", exc)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

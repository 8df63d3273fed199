"""Polynomial-order convergence of the steady Shercliff or Hunt duct against the reduced oracle.

    python scripts/run_convergence.py --kind shercliff --elements 2x8x8 --orders 2,4,6
"""
import argparse
from pathlib import Path

from semmhd.cli import cmd_converge
from semmhd.io import build_config, _elements, _orders


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--kind", default="shercliff", choices=["shercliff", "hunt", "conducting_wall"])
    ap.add_argument("--ha", type=float, default=10.0)
    ap.add_argument("--elements", default="2x8x8")
    ap.add_argument("--orders", default="2,4,6")
    ap.add_argument("--delta", type=float, default=None, help="wall thickness (conducting_wall)")
    ap.add_argument("--oracle-n", type=int, default=255)
    ap.add_argument("--out", default=None)
    a = ap.parse_args()
    case = {"kind": a.kind, "Ha": a.ha, "mesh_counts": _elements(a.elements), "dt": 1e-2}
    if a.kind == "conducting_wall":
        case["delta"] = a.delta if a.delta is not None else 0.2
    out = Path(a.out or f"out/convergence_{a.kind}")
    cfg = build_config(case, {"command": "converge", "orders": _orders(a.orders), "oracle_n": a.oracle_n})
    code = cmd_converge(cfg, out)
    print((out / "convergence.csv").read_text(), end="")
    raise SystemExit(code)


if __name__ == "__main__":
    import logging
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    main()

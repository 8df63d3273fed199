"""Config files, binary field dumps, slice CSVs and JSONL run logs."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, fields
import json
import struct
from pathlib import Path

import numpy as np

from .cases import CaseSpec, InvalidCombination
from .history import fmt

COMMANDS = ("run", "converge", "transient-fit", "oracle", "compare")


class ConfigError(ValueError):
    """Parse or validation failure; ``line`` is set for syntax errors."""

    def __init__(self, msg, line=None, key=None):
        super().__init__(f"line {line}: {msg}" if line is not None else msg)
        self.line = line
        self.key = key


@dataclass
class RunConfig:
    command: str = "run"
    case: CaseSpec = field(default_factory=CaseSpec)
    orders: list = field(default_factory=lambda: [2, 4, 6])
    output_dir: str = "out"
    seed: int = 0
    log_level: str = "INFO"
    t_end: float | None = None        # None: march to steady state
    oracle_n: int = 255
    oracle_dt: float | None = None
    oracle_T: float = 0.0             # > 0 also writes a transient oracle history
    x_station: float = 0.0
    slice_points: int = 41
    fit_t_start: float | None = None


def _pos_int(v):
    return int(v)


def _float_or_none(v):
    return None if v.lower() in ("none", "") else float(v)


def _elements(v):
    parts = v.lower().replace("×", "x").split("x")
    if len(parts) != 3:
        raise ValueError("expected ExxEyxEz, e.g. 4x10x10")
    return tuple(int(p) for p in parts)


def _orders(v):
    return [int(p) for p in v.replace(" ", "").split(",") if p]


def _bool(v):
    lv = v.lower()
    if lv in ("1", "true", "yes", "on"):
        return True
    if lv in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


# key -> (target, attribute, parser); target is "case" or "run"
KEYS = {
    "kind": ("case", "kind", str), "case": ("case", "kind", str),
    "Ha": ("case", "Ha", float), "Re": ("case", "Re", float), "Rm": ("case", "Rm", float),
    "r_w": ("case", "r_w_solid", float), "delta": ("case", "delta", float),
    "L": ("case", "L", float), "elements": ("case", "mesh_counts", _elements),
    "N": ("case", "N", _pos_int), "wall_layers": ("case", "wall_layers", _pos_int),
    "grade": ("case", "grade", _bool), "dt": ("case", "dt", float), "cfl": ("case", "cfl", float),
    "order": ("case", "order", _pos_int), "t_max": ("case", "t_max", float),
    "steady_tol": ("case", "steady_tol", float),
    "command": ("run", "command", str), "orders": ("run", "orders", _orders),
    "output_dir": ("run", "output_dir", str), "seed": ("run", "seed", int),
    "log_level": ("run", "log_level", str), "t_end": ("run", "t_end", _float_or_none),
    "oracle_n": ("run", "oracle_n", _pos_int), "oracle_dt": ("run", "oracle_dt", _float_or_none),
    "oracle_T": ("run", "oracle_T", float), "x_station": ("run", "x_station", float),
    "slice_points": ("run", "slice_points", _pos_int),
    "fit_t_start": ("run", "fit_t_start", _float_or_none),
}


def parse_config_text(text: str, source: str = "<string>") -> RunConfig:
    case_kw, run_kw, seen = {}, {}, {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]") or len(line) < 3:
                raise ConfigError(f"{source}: malformed section header {raw.strip()!r}", lineno)
            continue
        if "=" not in line:
            raise ConfigError(f"{source}: expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"{source}: unknown key {key!r}", lineno, key)
        target, attr, parse = KEYS[key]
        if (target, attr) in seen:
            raise ConfigError(
                f"{source}: duplicate key {key!r} (first on line {seen[target, attr]})", lineno, key)
        seen[target, attr] = lineno
        try:
            val = parse(value)
        except ValueError as exc:
            raise ConfigError(f"{source}: bad value for {key!r}: {exc}", lineno, key) from None
        (case_kw if target == "case" else run_kw)[attr] = val
    return build_config(case_kw, run_kw)


def build_config(case_kw: dict, run_kw: dict) -> RunConfig:
    _validate_case_fields(case_kw)
    try:
        case = CaseSpec(**case_kw)
    except InvalidCombination as exc:
        raise ConfigError(str(exc)) from None
    cfg = RunConfig(case=case, **run_kw)
    validate_config(cfg)
    return cfg


def _validate_case_fields(kw: dict):
    if "Ha" in kw and kw["Ha"] < 0:
        raise ConfigError("Ha must be positive", key="Ha")
    for name in ("Re", "Rm", "L", "dt", "cfl", "t_max", "steady_tol", "r_w_solid"):
        if name in kw and kw[name] <= 0:
            raise ConfigError(f"{name} must be positive", key=name)
    if "N" in kw and kw["N"] < 1:
        raise ConfigError("N must be positive", key="N")
    if "mesh_counts" in kw and min(kw["mesh_counts"]) < 1:
        raise ConfigError("elements must be positive", key="mesh_counts")
    if "delta" in kw and kw["delta"] < 0:
        raise ConfigError("delta must be non-negative", key="delta")


def validate_config(cfg: RunConfig):
    if cfg.command not in COMMANDS:
        raise ConfigError(f"command must be one of {COMMANDS}", key="command")
    if not cfg.orders or any(o < 1 for o in cfg.orders) or sorted(set(cfg.orders)) != cfg.orders:
        raise ConfigError("orders must be a nonempty ascending list of positive integers",
                          key="orders")
    if cfg.t_end is not None and cfg.t_end <= 0:
        raise ConfigError("t_end must be positive", key="t_end")
    if cfg.oracle_n < 3:
        raise ConfigError("oracle_n must be at least 3", key="oracle_n")
    if cfg.slice_points < 2:
        raise ConfigError("slice_points must be at least 2", key="slice_points")
    if cfg.case.order not in (1, 2, 3):
        raise ConfigError("order must be 1, 2 or 3", key="order")


def parse_config(path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {path} not found")
    return parse_config_text(p.read_text(), str(path))


def format_config(cfg: RunConfig) -> str:
    """Inverse of :func:`parse_config_text` (round-trips every field)."""
    c = cfg.case
    lines = ["[case]", f"kind = {c.kind}", f"Ha = {fmt(c.Ha)}", f"Re = {fmt(c.Re)}",
             f"Rm = {fmt(c.Rm)}", f"r_w = {fmt(c.r_w_solid)}", f"delta = {fmt(c.delta)}",
             f"L = {fmt(c.L)}", "elements = " + "x".join(str(v) for v in c.mesh_counts),
             f"N = {c.N}", f"wall_layers = {c.wall_layers}", f"grade = {str(c.grade).lower()}",
             f"dt = {fmt(c.dt)}", f"cfl = {fmt(c.cfl)}", f"order = {c.order}",
             f"t_max = {fmt(c.t_max)}", f"steady_tol = {fmt(c.steady_tol)}", "", "[run]",
             f"command = {cfg.command}", "orders = " + ",".join(str(o) for o in cfg.orders),
             f"output_dir = {cfg.output_dir}", f"seed = {cfg.seed}", f"log_level = {cfg.log_level}",
             f"t_end = {'none' if cfg.t_end is None else fmt(cfg.t_end)}",
             f"oracle_n = {cfg.oracle_n}",
             f"oracle_dt = {'none' if cfg.oracle_dt is None else fmt(cfg.oracle_dt)}",
             f"oracle_T = {fmt(cfg.oracle_T)}", f"x_station = {fmt(cfg.x_station)}",
             f"slice_points = {cfg.slice_points}",
             f"fit_t_start = {'none' if cfg.fit_t_start is None else fmt(cfg.fit_t_start)}"]
    return "\n".join(lines) + "\n"


# ----------------------------------------------------------------------------
# binary field dumps

MAGIC = b"SEMMHD01"
VERSION = 1
FIELD_NAMES = ("u_x", "u_y", "u_z", "B_x", "B_y", "B_z", "p", "q")


class DumpError(ValueError):
    pass


class BadMagic(DumpError):
    pass


class VersionMismatch(DumpError):
    pass


class TruncatedFile(DumpError):
    pass


@dataclass
class FieldDump:
    counts: tuple          # (Ex, Ey, Ez)
    order: int
    element_boxes: np.ndarray   # (E, 6): xmin, xmax, ymin, ymax, zmin, zmax
    fields: dict           # name -> (E, n, n, n) float64

    @property
    def num_elements(self) -> int:
        return len(self.element_boxes)


def dump_from_state(mesh, state) -> FieldDump:
    ijk = mesh.elem_ijk
    boxes = np.stack([
        mesh.xb[ijk[:, 0]], mesh.xb[ijk[:, 0] + 1], mesh.yb[ijk[:, 1]], mesh.yb[ijk[:, 1] + 1],
        mesh.zb[ijk[:, 2]], mesh.zb[ijk[:, 2] + 1],
    ], axis=1)
    f = {}
    for c, ax in enumerate("xyz"):
        f[f"u_{ax}"] = state.u[c]
        f[f"B_{ax}"] = state.B[c]
    f["p"], f["q"] = state.p, state.q
    ordered = {k: np.ascontiguousarray(f[k], dtype=np.float64) for k in FIELD_NAMES}
    return FieldDump(tuple(int(v) for v in mesh.counts), int(mesh.order), boxes, ordered)


def write_field_dump(dump: FieldDump, path) -> None:
    E = dump.num_elements
    n = dump.order + 1
    parts = [MAGIC, struct.pack("<I", VERSION),
             struct.pack("<5I", *dump.counts, dump.order, E),
             np.ascontiguousarray(dump.element_boxes, dtype="<f8").tobytes(),
             struct.pack("<I", len(dump.fields))]
    for name in dump.fields:
        b = name.encode("utf-8")
        parts.append(struct.pack("<H", len(b)) + b)
    for name, arr in dump.fields.items():
        a = np.asarray(arr, dtype="<f8")
        if a.shape != (E, n, n, n):
            raise DumpError(f"field {name} has shape {a.shape}, expected {(E, n, n, n)}")
        parts.append(np.ascontiguousarray(a).tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, k: int) -> bytes:
        if self.pos + k > len(self.data):
            raise TruncatedFile(f"file ends at byte {len(self.data)}, needed {self.pos + k}")
        out = self.data[self.pos:self.pos + k]
        self.pos += k
        return out


def read_field_dump(path) -> FieldDump:
    rd = _Reader(Path(path).read_bytes())
    if rd.take(8) != MAGIC:
        raise BadMagic(f"{path}: not a field dump")
    (version,) = struct.unpack("<I", rd.take(4))
    if version != VERSION:
        raise VersionMismatch(f"{path}: version {version}, reader supports {VERSION}")
    Ex, Ey, Ez, N, E = struct.unpack("<5I", rd.take(20))
    boxes = np.frombuffer(rd.take(48 * E), dtype="<f8").reshape(E, 6).copy()
    (nf,) = struct.unpack("<I", rd.take(4))
    names = []
    for _ in range(nf):
        (ln,) = struct.unpack("<H", rd.take(2))
        names.append(rd.take(ln).decode("utf-8"))
    n = N + 1
    size = E * n ** 3
    out = {}
    for name in names:
        out[name] = np.frombuffer(rd.take(8 * size), dtype="<f8").reshape(E, n, n, n).copy()
    return FieldDump((Ex, Ey, Ez), N, boxes, out)


# ----------------------------------------------------------------------------
# CSV and JSONL

def write_slice_csv(ys, zs, values, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["y", "z", "value"])
        for a, y in enumerate(ys):
            for b, z in enumerate(zs):
                w.writerow([fmt(y), fmt(z), fmt(values[a, b])])


def read_slice_csv(path):
    """(ys, zs, values[len(ys), len(zs)]) from a slice CSV on a tensor grid."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["y", "z", "value"]:
        raise ValueError(f"{path}: not a slice CSV")
    data = np.array([[float(v) for v in r] for r in rows[1:]]).reshape(-1, 3)
    ys = np.unique(data[:, 0])
    zs = np.unique(data[:, 1])
    vals = np.full((len(ys), len(zs)), np.nan)
    vals[np.searchsorted(ys, data[:, 0]), np.searchsorted(zs, data[:, 1])] = data[:, 2]
    return ys, zs, vals


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serialisable: {type(o)}")


class JsonlLog:
    def __init__(self, path):
        self.fh = open(path, "w")

    def write(self, record: dict):
        self.fh.write(json.dumps(record, default=_json_default, sort_keys=True) + "\n")

    def close(self):
        self.fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_jsonl(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, default=_json_default, indent=2, sort_keys=True)
        fh.write("\n")

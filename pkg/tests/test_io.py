import numpy as np
import pytest
from hypothesis import given, strategies as st

from semmhd.cases import CaseSpec, extract_cross_section, make_case, sample_cross_section
from semmhd.history import ProbeHistory, read_history_csv, write_history_csv
from semmhd.io import (
    BadMagic, ConfigError, FieldDump, JsonlLog, RunConfig, TruncatedFile, VersionMismatch,
    dump_from_state, format_config, parse_config, parse_config_text, read_field_dump,
    read_jsonl, read_slice_csv, write_field_dump, write_slice_csv,
)
from semmhd.mesh import build_box_mesh

MINIMAL = """
[case]
case = shercliff
Ha = 10
N = 6
elements = 4x10x10
"""


def test_minimal_shercliff_config():
    cfg = parse_config_text(MINIMAL)
    assert isinstance(cfg, RunConfig)
    c = cfg.case
    assert (c.kind, c.Ha, c.N, c.mesh_counts, c.Re, c.Rm) == ("shercliff", 10.0, 6, (4, 10, 10), 1.0, 1.0)


def test_negative_ha_rejected():
    with pytest.raises(ConfigError, match="Ha must be positive"):
        parse_config_text(MINIMAL.replace("Ha = 10", "Ha = -1"))


def test_orders_sweep():
    cfg = parse_config_text(MINIMAL + "[run]\ncommand = converge\norders = 2,4,6,8\n")
    assert cfg.orders == [2, 4, 6, 8] and cfg.command == "converge"
    with pytest.raises(ConfigError, match="ascending"):
        parse_config_text(MINIMAL + "orders = 4,2\n")


def test_unknown_and_duplicate_keys_report_lines():
    with pytest.raises(ConfigError) as e:
        parse_config_text("Ha = 3\nbogus = 1\n")
    assert e.value.line == 2 and "bogus" in str(e.value)
    with pytest.raises(ConfigError) as e:
        parse_config_text("Ha = 3\n\nHa = 4\n")
    assert e.value.line == 3
    with pytest.raises(ConfigError) as e:
        parse_config_text("Ha 3\n")
    assert e.value.line == 1
    with pytest.raises(ConfigError) as e:
        parse_config_text("elements = 4x10\n")
    assert e.value.line == 1


def test_invalid_combination_surfaces():
    with pytest.raises(ConfigError, match="delta"):
        parse_config_text("case = shercliff\ndelta = 0.2\n")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "nope.cfg")


def test_shipped_configs_parse():
    from pathlib import Path
    root = Path(__file__).resolve().parents[1] / "configs"
    files = sorted(root.glob("*.cfg"))
    assert files
    for f in files:
        parse_config(f)


cfg_strategy = st.builds(
    lambda kind, Ha, Re, Rm, N, counts, dt, orders, t_end, seed: RunConfig(
        case=CaseSpec(kind=kind, Ha=Ha, Re=Re, Rm=Rm, N=N, mesh_counts=counts, dt=dt,
                      delta=0.2 if kind == "conducting_wall" else 0.0),
        orders=orders, t_end=t_end, seed=seed),
    st.sampled_from(["shercliff", "hunt", "conducting_wall"]),
    st.floats(0, 1e3), st.floats(1e-3, 1e3), st.floats(1e-3, 1e3), st.integers(1, 12),
    st.tuples(*[st.integers(1, 20)] * 3), st.floats(1e-6, 1.0),
    st.lists(st.integers(1, 12), min_size=1, max_size=5, unique=True).map(sorted),
    st.one_of(st.none(), st.floats(1e-3, 10)), st.integers(0, 2 ** 31),
)


@given(cfg_strategy)
def test_config_round_trip(cfg):
    back = parse_config_text(format_config(cfg))
    assert back == cfg


def _random_state(case, rng):
    s = case.state
    s.u = rng.standard_normal(s.u.shape)
    s.B = rng.standard_normal(s.B.shape)
    s.p = rng.standard_normal(s.p.shape)
    s.q = rng.standard_normal(s.q.shape)
    return s


@pytest.fixture(scope="module")
def io_case():
    return make_case(CaseSpec(kind="conducting_wall", delta=0.25, mesh_counts=(2, 4, 4), N=3, L=2.0))


def test_dump_round_trip_bit_exact(io_case, tmp_path):
    rng = np.random.default_rng(3)
    d = dump_from_state(io_case.mesh, _random_state(io_case, rng))
    p = tmp_path / "f.bin"
    write_field_dump(d, p)
    back = read_field_dump(p)
    assert back.counts == d.counts and back.order == d.order
    assert back.element_boxes.tobytes() == d.element_boxes.tobytes()
    assert list(back.fields) == list(d.fields)
    for k in d.fields:
        assert back.fields[k].tobytes() == d.fields[k].tobytes()
    write_field_dump(back, tmp_path / "g.bin")
    assert (tmp_path / "g.bin").read_bytes() == p.read_bytes()


def test_dump_size_single_element_n1(tmp_path):
    mesh = build_box_mesh((1, 1, 1), L=1.0, delta=0.0, N=1, periodic_x=False)
    fields = {f"f{i}": np.full((1, 2, 2, 2), float(i)) for i in range(3)}
    boxes = np.array([[0.0, 1.0, -1.0, 1.0, -1.0, 1.0]])
    p = tmp_path / "n1.bin"
    write_field_dump(FieldDump((1, 1, 1), 1, boxes, fields), p)
    names = sum(2 + len(k) for k in fields)
    header = 8 + 4 + 20 + 48 + 4 + names
    assert p.stat().st_size == header + 3 * 8 * 8
    raw = p.read_bytes()
    assert raw[:8] == b"SEMMHD01"
    assert np.frombuffer(raw[-64:], dtype="<f8").tolist() == [2.0] * 8
    assert mesh.coords.shape[1] == 1


def test_dump_errors(io_case, tmp_path):
    p = tmp_path / "f.bin"
    write_field_dump(dump_from_state(io_case.mesh, io_case.state), p)
    raw = p.read_bytes()
    (tmp_path / "m.bin").write_bytes(b"XEMMHD01" + raw[8:])
    with pytest.raises(BadMagic):
        read_field_dump(tmp_path / "m.bin")
    (tmp_path / "v.bin").write_bytes(raw[:8] + (2).to_bytes(4, "little") + raw[12:])
    with pytest.raises(VersionMismatch):
        read_field_dump(tmp_path / "v.bin")
    for cut in (5, 30, len(raw) - 1):
        (tmp_path / "t.bin").write_bytes(raw[:cut])
        with pytest.raises(TruncatedFile):
            read_field_dump(tmp_path / "t.bin")


def test_slice_from_dump_equals_live(io_case, tmp_path):
    rng = np.random.default_rng(5)
    state = _random_state(io_case, rng)
    p = tmp_path / "f.bin"
    write_field_dump(dump_from_state(io_case.mesh, state), p)
    back = read_field_dump(p)
    ys, zs, live = extract_cross_section(state, io_case.mesh, "B_x", 0.3)
    again = sample_cross_section(io_case.mesh, back.fields["B_x"], 0.3, ys, zs)
    assert live.shape == (41, 41) and np.isfinite(live).all()
    assert again.tobytes() == live.tobytes()


def test_history_csv(tmp_path):
    p = tmp_path / "h.csv"
    write_history_csv(ProbeHistory([], [], []), p)
    assert p.read_text().strip() == "t,u_center,b_center"
    assert len(read_history_csv(p)) == 0


@given(st.lists(st.tuples(st.floats(allow_nan=False, allow_infinity=False),
                          st.floats(allow_nan=False, allow_infinity=False)), max_size=30))
def test_history_csv_lossless(tmp_path_factory, vals):
    t = np.arange(len(vals)) * 0.1 + 1e-3
    u = np.array([v[0] for v in vals])
    b = np.array([v[1] for v in vals])
    p = tmp_path_factory.mktemp("h") / "h.csv"
    write_history_csv(ProbeHistory(t, u, b), p)
    back = read_history_csv(p)
    assert back.times.tobytes() == t.tobytes()
    assert back.u_center.tobytes() == u.astype(float).tobytes()
    assert back.b_center.tobytes() == b.astype(float).tobytes()


def test_history_validation():
    with pytest.raises(ValueError):
        ProbeHistory([0, 0], [1, 2], [3, 4])
    with pytest.raises(ValueError):
        ProbeHistory([0, 1], [1], [3, 4])


def test_slice_csv_lossless(tmp_path):
    rng = np.random.default_rng(0)
    ys = np.linspace(-1, 1, 7)
    zs = np.linspace(-1, 1, 5)
    v = rng.standard_normal((7, 5))
    write_slice_csv(ys, zs, v, tmp_path / "s.csv")
    a, b, w = read_slice_csv(tmp_path / "s.csv")
    assert np.array_equal(a, ys) and np.array_equal(b, zs) and w.tobytes() == v.tobytes()


def test_jsonl(tmp_path):
    with JsonlLog(tmp_path / "r.jsonl") as lg:
        lg.write({"step": np.int64(1), "t": np.float64(0.5), "v": np.arange(2)})
        lg.write({"step": 2})
    assert read_jsonl(tmp_path / "r.jsonl") == [{"step": 1, "t": 0.5, "v": [0, 1]}, {"step": 2}]

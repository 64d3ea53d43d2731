import math

import pytest
from hypothesis import given, strategies as st

from csn.syntax import Builtin, Obj
from csn.world import (
    BuiltinArityMismatch, Constant, Gaussian, Grid, LogEntry, LogStore, UnknownBuiltin,
    WorldConfig, call_builtin, distance, sample_field,
)

coords = st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))


def test_distance_examples():
    assert distance((0, 0), (3, 4)) == 5.0
    assert distance((2.5, -1), (2.5, -1)) == 0.0
    assert distance((1, 1), (4, 5)) == math.sqrt(9 + 16) == 5.0


@given(coords, coords)
def test_distance_symmetric(p, q):
    assert distance(p, q) == distance(q, p) >= 0
    assert (distance(p, q) == 0) == (p == q)


def test_fields():
    assert sample_field(Constant(25.0), (7, 7)) == Builtin(25.0)
    g = Gaussian((1.0, 2.0), 30.0, 0.5)
    assert sample_field(g, (1.0, 2.0)) == Builtin(30.0)
    assert sample_field(g, (1.5, 2.0)).payload == pytest.approx(30 * math.exp(-0.5))


def test_grid_bilinear():
    grid = Grid(((0, 1), (0, 1)))
    assert sample_field(grid, (0.5, 0.5)) == Builtin(0.5)
    g = Grid(((0, 10, 20), (5, 15, 25)), origin=(1.0, 1.0), cell=2.0)
    # corner samples, row 0 at the lowest y
    assert sample_field(g, (1, 1)).payload == 0
    assert sample_field(g, (5, 3)).payload == 25
    assert sample_field(g, (2, 2)).payload == pytest.approx((0 + 10 + 5 + 15) / 4)


def test_grid_clamps_outside():
    g = Grid(((0, 1), (2, 3)))
    assert sample_field(g, (-5, -5)).payload == 0
    assert sample_field(g, (9, 9)).payload == 3
    assert sample_field(g, (0.5, -3)).payload == 0.5
    assert sample_field(Grid(((7,),)), (4, 4)).payload == 7


def test_grid_validation(tmp_path):
    with pytest.raises(ValueError):
        Grid(((1, 2), (3,)))
    with pytest.raises(ValueError):
        Grid(((1,),), cell=0)
    with pytest.raises(ValueError):
        Gaussian((0, 0), 1, 0)
    path = tmp_path / "f.csv"
    path.write_text("1,2\n3,4\n")
    assert Grid.from_csv(path).samples == ((1.0, 2.0), (3.0, 4.0))


def test_world_config_validation():
    with pytest.raises(ValueError):
        WorldConfig(e_in=-1)
    with pytest.raises(ValueError):
        WorldConfig(e_out=math.inf)
    assert WorldConfig(e_in=1, e_out=5).min_energy == 1


def test_builtins():
    w = WorldConfig(field=Gaussian((3, 0), 12.0, 1.0))
    logs = LogStore()
    out, logs = call_builtin("log_mac", (Builtin("m3"),), "sink", (0, 0), w, logs, 4)
    assert out == Obj()
    assert logs.values("sink") == [Builtin("m3")]
    out, logs2 = call_builtin("field", (), "s3", (3, 0), w, logs, 5)
    assert out == Builtin(12.0) and logs2 == logs
    out, logs = call_builtin("log_field", (Builtin(25.0),), "sink", (0, 0), w, logs, 6)
    assert logs.values("sink", "log_field") == [Builtin(25.0)]
    with pytest.raises(UnknownBuiltin):
        call_builtin("nope", (), "s", (0, 0), w, logs, 7)
    with pytest.raises(BuiltinArityMismatch):
        call_builtin("log_mac", (), "s", (0, 0), w, logs, 7)


def test_logstore_append_only():
    a = LogStore()
    b = a.append("s", LogEntry(1, "log_mac", Builtin("x")))
    assert len(a) == 0 and len(b) == 1
    with pytest.raises(ValueError):
        b.append("s", LogEntry(1, "log_mac", Builtin("y")))
    assert b.append("t", LogEntry(1, "log_mac", Builtin("y"))).sensors() == ["s", "t"]

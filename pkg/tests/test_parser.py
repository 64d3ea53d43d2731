import random

import pytest
from hypothesis import given

from csn.parser import (
    DuplicateLabel, DuplicateName, LexError, ParseError, ReservedWord, UnboundTemplate,
    parse_file, parse_network, parse_object, parse_program, parse_type, pretty_print,
)
from csn.load import CORPUS
from csn.syntax import (
    Call, Install, Let, Loc, Net, Obj, alpha_equal, free_vars,
)
from csn.typecheck import B, EMPTY, MethodType, ObjT, PLAIN, SENSOR
from strategies import programs

HEADER = "interface { ping: () -> {}  forward: (B) -> {} }\n"


def test_sequence_desugars_to_unused_let():
    p = parse_program("net.forward(m); net.ping()")
    assert isinstance(p, Let) and "#" in p.binder
    assert p.bound == Call(Net(), "forward", (parse_program("m"),))
    assert p.body == Call(Net(), "ping", ())
    assert p.binder not in free_vars(p.body)


def test_install_one_operand_means_loc():
    assert parse_program("install {}") == Install(Loc(), Obj())


def test_bare_call_targets_loc():
    assert parse_program("log_mac(x)") == parse_program("loc.log_mac(x)")


def test_printing_examples():
    assert pretty_print(Obj()) == "{}"
    assert pretty_print(Call(Net(), "ping", ())) == "net.ping()"
    assert pretty_print(parse_program("install { f = () {} }")) == \
        "install loc { f = () {} }"
    assert pretty_print(parse_program("net.forward(m); net.ping()")) == \
        "net.forward(m); net.ping()"


def test_round_trip_simple_object():
    o = parse_object("{ f = (x) x }")
    assert alpha_equal(parse_program(pretty_print(o)), o)


def test_nested_sequence_keeps_grouping():
    p = parse_program("(loc.a(); loc.b()); loc.c()")
    assert alpha_equal(parse_program(pretty_print(p)), p)


@given(programs)
def test_round_trip_property(p):
    assert alpha_equal(parse_program(pretty_print(p)), p)


def test_types():
    assert parse_type("B") == B
    assert parse_type("{}") == EMPTY
    t = parse_type("{f: (B, {}) -> B}")
    assert t == ObjT.of(PLAIN, {"f": MethodType((B, EMPTY), B)})
    s = parse_type("[g: () -> {}]")
    assert s.kind == SENSOR
    assert parse_type(pretty_print(t)) == t


def test_ping_listing_parses():
    unit = parse_file(CORPUS / "ping.csn")
    assert set(unit.templates) == {"MSensor", "MSink"}
    assert len(unit.nodes) == 5
    assert unit.nodes[1].template[0] == "MSensor"
    ping = unit.nodes[1].object.get("ping")
    assert free_vars(ping.body) == set()
    assert pretty_print(ping.body) == 'net.forward("m1"); net.ping()'


def test_unit_round_trip():
    for path in sorted(CORPUS.glob("*.csn")):
        unit = parse_file(path)
        again = parse_network(pretty_print(unit), path.parent)
        assert again.interface == unit.interface
        assert again.world == unit.world
        for a, b in zip(unit.nodes, again.nodes):
            assert (a.name, a.position, a.radius, a.energy) == \
                (b.name, b.position, b.radius, b.energy)
            assert alpha_equal(a.object, b.object)
            assert all(alpha_equal(x, y) for x, y in zip(a.queue, b.queue))


@pytest.mark.parametrize("text, exc, where", [
    ("sensor s at (0, 0) radius 1 energy 1 object {}", ParseError, None),
    (HEADER + "sensor s at (0, 0) radius 1 energy 1 object { f = () {} f = () {} }",
     DuplicateLabel, (2, 57)),
    (HEADER + "sensor s at (0,0) radius 1 energy 1 object {}\n"
              "sensor s at (0,0) radius 1 energy 1 object {}", DuplicateName, (3, 1)),
    (HEADER + "sensor s at (0,0) radius 1 energy 1 object Nope", UnboundTemplate, None),
    (HEADER + "sensor s at (0,0) radius 1 energy 1 object {} run let in = 1 in 2",
     ReservedWord, None),
    (HEADER + "sensor s at (0,0) radius 1 energy 1 object {} run x#1", LexError, (2, 52)),
    (HEADER + "sensor s at (0,0) radius -1 energy 1 object {}", ParseError, None),
])
def test_errors(text, exc, where):
    with pytest.raises(exc) as info:
        parse_network(text)
    if where is not None:
        assert (info.value.line, info.value.col) == where


def test_template_arguments_substituted():
    unit = parse_network(HEADER + 'T(m) = { ping = () net.forward(m) }\n'
                         'sensor s at (0,0) radius 1 energy 1 object T("a")')
    assert pretty_print(unit.nodes[0].object) == '{ ping = () net.forward("a") }'


def test_world_block(tmp_path):
    (tmp_path / "g.csv").write_text("0,1\n0,1\n")
    unit = parse_network(HEADER + 'world { e_in = 1; e_out = 2.5; meter = true; '
                         'field = grid("g.csv", 0, 0, 1); }', tmp_path)
    w = unit.world
    assert (w.e_in, w.e_out, w.metering) == (1.0, 2.5, True)
    assert w.field.samples == ((0.0, 1.0), (0.0, 1.0))

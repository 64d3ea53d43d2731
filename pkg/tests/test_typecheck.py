import itertools

import pytest

from csn.load import CORPUS, load_network
from csn.parser import parse_file, parse_object, parse_program
from csn.semantics import Network, Sensor
from csn.syntax import Loc, Net, Obj
from csn.typecheck import (
    B, EMPTY, NET, PLAIN, SENSOR, ArgumentTypeMismatch, ArityMismatch,
    IllegalInstallCombination, InterfaceConflict, MethodNotInInterface, MethodType,
    NoSuchMethod, ObjT, SignatureMismatch, UnannotatedParameter, UnboundVariable,
    check_network, check_sensor, type_combine, type_of_program, type_of_value,
)
from csn.world import WorldConfig, build_interface

PING = build_interface({"ping": MethodType((), EMPTY), "forward": MethodType((B,), EMPTY)})


def sensor(obj="{}", queue=(), sid="s"):
    return Sensor(sid, tuple(parse_program(q) for q in queue), parse_object(obj),
                  (0.0, 0.0), 1.0, 1.0)


def test_values():
    assert type_of_value({}, PING, Net()) == NET
    assert type_of_value({}, PING, Loc()) == PING
    assert PING.kind == SENSOR
    with pytest.raises(UnboundVariable):
        type_of_value({}, PING, parse_program("x"))


def test_msensor_object_type():
    o = parse_object("{ ping = () net.forward(m); net.ping()  forward = (x: B) net.forward(x) }")
    t = type_of_value({"m": B}, PING, o)
    assert t == ObjT.of(PLAIN, {"ping": MethodType((), EMPTY),
                                "forward": MethodType((B,), EMPTY)})
    assert str(t) == "{forward: (B) -> {}, ping: () -> {}}"


def test_unannotated_literal_cannot_be_synthesized():
    with pytest.raises(UnannotatedParameter):
        type_of_value({}, PING, parse_object("{ f = (x) x }"))


def test_program_examples():
    assert type_of_program({}, PING, parse_program("net.ping()")) == EMPTY
    assert type_of_program({}, PING, parse_program("loc.forward(7.0)")) == EMPTY
    with pytest.raises(NoSuchMethod):
        type_of_program({}, PING, parse_program("let x = net.ping() in x.forward(1.0)"))


def test_call_errors():
    with pytest.raises(ArityMismatch):
        type_of_program({}, PING, parse_program("loc.forward()"))
    with pytest.raises(ArgumentTypeMismatch):
        type_of_program({}, PING, parse_program("loc.forward({})"))
    with pytest.raises(NoSuchMethod):
        type_of_program({}, PING, parse_program("net.nonexistent(1)"))


def test_field_is_a_builtin_number():
    assert type_of_program({}, PING, parse_program("let f = loc.field() in f")) == B


def test_install_types():
    t = type_of_program({}, PING, parse_program("install {} { f = () {} }"))
    assert t == ObjT.of(PLAIN, {"f": MethodType((), EMPTY)})
    assert type_of_program({}, PING, parse_program("install loc { ping = () {} }")) == PING
    with pytest.raises(IllegalInstallCombination):
        type_of_program({}, PING, parse_program("install {} loc"))
    with pytest.raises(MethodNotInInterface):
        type_of_program({}, PING, parse_program("install loc { extra = () {} }"))


def test_type_combine_examples():
    f0 = MethodType((), EMPTY)
    fb = MethodType((B,), EMPTY)
    assert type_combine(ObjT.of(PLAIN, {}), ObjT.of(PLAIN, {"f": f0})) == \
        ObjT.of(PLAIN, {"f": f0})
    assert type_combine(ObjT.of(SENSOR, {"f": f0}), ObjT.of(PLAIN, {"f": fb})) == \
        ObjT.of(SENSOR, {"f": fb})
    with pytest.raises(IllegalInstallCombination):
        type_combine(ObjT.of(PLAIN, {}), ObjT.of(SENSOR, {}))


def _small_maps():
    sigs = (None, MethodType((), EMPTY), MethodType((B,), B))
    for a, b in itertools.product(sigs, repeat=2):
        yield {k: v for k, v in (("f", a), ("g", b)) if v is not None}


def test_type_combine_agrees_with_update_exhaustively():
    for left, right in itertools.product(list(_small_maps()), repeat=2):
        for k1, k2 in itertools.product((PLAIN, SENSOR), repeat=2):
            if (k1, k2) == (PLAIN, SENSOR):
                continue
            out = type_combine(ObjT.of(k1, left), ObjT.of(k2, right))
            assert out.kind == k1
            assert out.as_dict() == {**left, **right}


def test_check_sensor_examples():
    assert check_sensor(PING, sensor()) == []
    [err] = check_sensor(PING, sensor("{ extra = () loc.extra() }"))
    assert isinstance(err, MethodNotInInterface)
    [err] = check_sensor(PING, sensor("{ ping = (x) {} }"))
    assert isinstance(err, SignatureMismatch)
    [err] = check_sensor(PING, sensor(queue=["loc.nope()"]))
    assert err.sensor == "s" and err.location == "queue[0]"


def test_check_network_collects_all_errors():
    net = Network((sensor("{ extra = () {} }", sid="a"), sensor("{ ping = (x) {} }", sid="b")),
                  WorldConfig(), PING)
    assert [e.code for e in check_network(PING, net)] == \
        ["MethodNotInInterface", "SignatureMismatch"]
    assert check_network(PING, Network((), WorldConfig(), PING)) == []


def test_ping_network_types():
    net = load_network("ping")
    assert check_network(net.interface, net) == []
    # one sensor with a broadcast outside the interface
    bad = net.sensors[1]
    obj = parse_object("{ ping = () net.forward(\"m1\"); net.ping()  "
                       "forward = (x) net.nonexistent(x) }")
    broken = Network((net.sensors[0], Sensor(bad.id, (), obj, bad.position, bad.radius,
                                             bad.energy)) + net.sensors[2:],
                     net.world, net.interface)
    errors = check_network(net.interface, broken)
    assert [e.code for e in errors] == ["NoSuchMethod"]


def test_bad_install_corpus_file():
    unit = parse_file(CORPUS / "ping-bad-install.csn")
    iface = build_interface(unit.interface)
    net = Network(tuple(Sensor(d.name, d.queue, d.object, d.position, d.radius, d.energy)
                        for d in unit.nodes), unit.world, iface)
    codes = {e.code for e in check_network(iface, net)}
    assert codes == {"IllegalInstallCombination"}


def test_builtin_conflict():
    with pytest.raises(InterfaceConflict):
        build_interface({"field": MethodType((B,), B)})
    # restating a built-in with its own signature is fine
    assert build_interface({"log_mac": MethodType((B,), EMPTY)}).get("log_mac")


def test_checking_is_deterministic():
    net = load_network("deploy")
    assert check_network(net.interface, net) == check_network(net.interface, net)


def test_error_report_shape():
    [err] = check_sensor(PING, sensor("{ extra = () {} }"))
    d = err.to_dict()
    assert set(d) == {"code", "sensor", "location", "message"}
    assert d["code"] == "MethodNotInInterface" and d["location"] == "method extra"

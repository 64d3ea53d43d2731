"""Static types for CSN.

Checking is bidirectional: ``_synth`` computes a type, ``_check`` pushes an
expected type into object literals so their parameters need no annotation.
Both return the elaborated term, in which every method parameter carries
its type; running elaborated terms keeps every reachable object literal
synthesizable.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Mapping, Optional, Union

from csn.syntax import (
    Builtin, Call, Install, Let, Loc, Method, Net, Obj, Program, Var,
)

PLAIN = "plain"
SENSOR = "sensor"


@dataclass(frozen=True)
class BuiltinT:
    def __str__(self):
        return "B"


@dataclass(frozen=True)
class NetT:
    def __str__(self):
        return "Net"


@dataclass(frozen=True)
class MethodType:
    params: tuple["Type", ...]
    ret: "Type"

    def __str__(self):
        return f"({', '.join(map(str, self.params))}) -> {self.ret}"


@dataclass(frozen=True)
class ObjT:
    kind: str
    methods: tuple[tuple[str, MethodType], ...] = ()

    def __post_init__(self):
        if self.kind not in (PLAIN, SENSOR):
            raise ValueError(f"bad object kind {self.kind!r}")
        ms = tuple(sorted(self.methods, key=lambda kv: kv[0]))
        for (a, _), (b, _) in zip(ms, ms[1:]):
            if a == b:
                raise ValueError(f"duplicate method label {a!r} in type")
        object.__setattr__(self, "methods", ms)

    @classmethod
    def of(cls, kind: str, methods: Mapping[str, MethodType]) -> "ObjT":
        return cls(kind, tuple(methods.items()))

    def get(self, label: str) -> Optional[MethodType]:
        for k, v in self.methods:
            if k == label:
                return v
        return None

    @property
    def labels(self) -> frozenset[str]:
        return frozenset(k for k, _ in self.methods)

    def as_dict(self) -> dict[str, MethodType]:
        return dict(self.methods)

    def __str__(self):
        inner = ", ".join(f"{k}: {v}" for k, v in self.methods)
        return f"{{{inner}}}" if self.kind == PLAIN else f"[{inner}]"


Type = Union[BuiltinT, NetT, ObjT]
B = BuiltinT()
NET = NetT()
EMPTY = ObjT(PLAIN)


# -- errors ------------------------------------------------------------------

class CSNTypeError(Exception):
    """A typing failure; ``code`` names the rule that rejected the term."""

    def __init__(self, message: str, sensor: Optional[str] = None,
                 location: Optional[str] = None):
        super().__init__(message)
        self.message = message
        self.sensor = sensor
        self.location = location

    @property
    def code(self) -> str:
        return type(self).__name__

    def at(self, sensor: Optional[str], location: Optional[str]) -> "CSNTypeError":
        if self.sensor is None:
            self.sensor = sensor
        if self.location is None:
            self.location = location
        return self

    def to_dict(self) -> dict:
        return {"code": self.code, "sensor": self.sensor,
                "location": self.location, "message": self.message}

    def __str__(self):
        where = ""
        if self.sensor is not None:
            where = f"sensor {self.sensor}"
            if self.location:
                where += f", {self.location}"
            where += ": "
        return f"{where}{self.code}: {self.message}"


class UnboundVariable(CSNTypeError):
    pass


class NoSuchMethod(CSNTypeError):
    pass


class ArityMismatch(CSNTypeError):
    pass


class ArgumentTypeMismatch(CSNTypeError):
    pass


class TypeMismatch(CSNTypeError):
    pass


class TargetNotObject(CSNTypeError):
    pass


class TargetNotNetOrObject(CSNTypeError):
    pass


class IllegalInstallCombination(CSNTypeError):
    pass


class MethodNotInInterface(CSNTypeError):
    pass


class SignatureMismatch(CSNTypeError):
    pass


class UnannotatedParameter(CSNTypeError):
    pass


class InterfaceConflict(CSNTypeError):
    pass


class TypeCheckFailed(Exception):
    """Raised by the elaborating entry points; carries every error found."""

    def __init__(self, errors: list[CSNTypeError]):
        super().__init__("\n".join(str(e) for e in errors))
        self.errors = errors


# -- the combination operator ------------------------------------------------

def type_combine(t1: Type, t2: Type) -> ObjT:
    """Type-level counterpart of object update; the left kind is kept."""
    if not isinstance(t1, ObjT) or not isinstance(t2, ObjT):
        raise TargetNotObject(f"install needs two object types, got {t1} and {t2}")
    if t1.kind == PLAIN and t2.kind == SENSOR:
        raise IllegalInstallCombination(
            f"cannot install a sensor object {t2} into anonymous object {t1}")
    merged = t1.as_dict()
    merged.update(t2.as_dict())
    return ObjT.of(t1.kind, merged)


# -- values and programs -----------------------------------------------------

Env = Mapping[str, Type]


def type_of_value(env: Env, iface: ObjT, v: Program) -> Type:
    return _synth(env, iface, v)[0]


def type_of_program(env: Env, iface: ObjT, p: Program) -> Type:
    return _synth(env, iface, p)[0]


def elaborate_program(env: Env, iface: ObjT, p: Program,
                      expected: Optional[Type] = None) -> tuple[Type, Program]:
    """Type ``p`` and return it with every method parameter annotated."""
    if expected is None:
        return _synth(env, iface, p)
    return expected, _check(env, iface, p, expected)


def _synth(env: Env, iface: ObjT, p: Program) -> tuple[Type, Program]:
    if isinstance(p, Builtin):
        return B, p
    if isinstance(p, Var):
        if p.name not in env:
            raise UnboundVariable(f"variable {p.name!r} is not bound")
        return env[p.name], p
    if isinstance(p, Net):
        return NET, p
    if isinstance(p, Loc):
        return iface, p
    if isinstance(p, Obj):
        return _synth_object(env, iface, p)
    if isinstance(p, Call):
        return _synth_call(env, iface, p)
    if isinstance(p, Install):
        return _synth_install(env, iface, p)
    if isinstance(p, Let):
        tb, bound = _synth(env, iface, p.bound)
        tr, body = _synth({**env, p.binder: tb}, iface, p.body)
        return tr, Let(p.binder, bound, body)
    raise TypeError(f"not a program: {p!r}")


def _synth_object(env, iface, o: Obj) -> tuple[ObjT, Obj]:
    sigs = {}
    methods = []
    for m in o.methods:
        if m.types is None and m.params:
            raise UnannotatedParameter(
                f"method {m.label}: parameter types cannot be inferred here; "
                f"annotate them as ({', '.join(x + ': T' for x in m.params)})")
        ptypes = m.types or ()
        inner = {**env, **dict(zip(m.params, ptypes))}
        ret, body = _synth(inner, iface, m.body)
        sigs[m.label] = MethodType(tuple(ptypes), ret)
        methods.append(Method(m.label, m.params, body, tuple(ptypes)))
    return ObjT.of(PLAIN, sigs), Obj(tuple(methods))


def _synth_call(env, iface, c: Call) -> tuple[Type, Program]:
    tt, target = _synth(env, iface, c.target)
    if isinstance(tt, NetT):
        sig = iface.get(c.label)
        if sig is None:
            raise NoSuchMethod(f"broadcast of {c.label!r}: not in the sensor interface")
        result: Type = EMPTY
    elif isinstance(tt, ObjT):
        sig = tt.get(c.label)
        if sig is None:
            raise NoSuchMethod(f"method {c.label!r} not found in {tt}")
        result = sig.ret
    else:
        raise TargetNotNetOrObject(f"call of {c.label!r} on a value of type {tt}")
    if len(c.args) != len(sig.params):
        raise ArityMismatch(
            f"{c.label!r} expects {len(sig.params)} argument(s), got {len(c.args)}")
    args = []
    for i, (a, pt) in enumerate(zip(c.args, sig.params)):
        try:
            args.append(_check(env, iface, a, pt))
        except TypeMismatch as e:
            raise ArgumentTypeMismatch(
                f"argument {i} of {c.label!r}: {e.message}") from None
    return result, Call(target, c.label, tuple(args))


def _synth_install(env, iface, ins: Install) -> tuple[Type, Program]:
    tt, target = _synth(env, iface, ins.target)
    if not isinstance(tt, ObjT):
        raise TargetNotObject(f"install target has type {tt}")
    if tt.kind == SENSOR:
        ta, addition = _install_into_sensor(env, iface, ins.addition)
    else:
        ta, addition = _synth(env, iface, ins.addition)
    return type_combine(tt, ta), Install(target, addition)


def _install_into_sensor(env, iface, a: Program) -> tuple[Type, Program]:
    # every installed method must keep the sensor object within the interface
    if isinstance(a, Obj):
        for m in a.methods:
            if iface.get(m.label) is None:
                raise MethodNotInInterface(
                    f"installing {m.label!r}, which the sensor interface lacks")
        expected = ObjT.of(PLAIN, {m.label: iface.get(m.label) for m in a.methods})
        return expected, _check(env, iface, a, expected)
    ta, a2 = _synth(env, iface, a)
    if isinstance(ta, ObjT) and ta.kind == PLAIN:
        for label, mt in ta.methods:
            want = iface.get(label)
            if want is None:
                raise MethodNotInInterface(
                    f"installing {label!r}, which the sensor interface lacks")
            if want != mt:
                raise SignatureMismatch(
                    f"installing {label!r} with type {mt}, interface says {want}")
    return ta, a2


def _check(env, iface, p: Program, expected: Type) -> Program:
    if isinstance(p, Obj) and isinstance(expected, ObjT):
        return _check_object(env, iface, p, expected)
    if isinstance(p, Let):
        tb, bound = _synth(env, iface, p.bound)
        body = _check({**env, p.binder: tb}, iface, p.body, expected)
        return Let(p.binder, bound, body)
    t, p2 = _synth(env, iface, p)
    if t != expected:
        raise TypeMismatch(f"expected {expected}, found {t}")
    return p2


def _check_object(env, iface, o: Obj, expected: ObjT) -> Obj:
    if expected.kind != PLAIN:
        raise TypeMismatch(f"an object literal never has sensor type {expected}")
    if o.labels != expected.labels:
        raise TypeMismatch(
            f"expected methods {sorted(expected.labels)}, found {sorted(o.labels)}")
    methods = []
    for m in o.methods:
        sig = expected.get(m.label)
        methods.append(_check_method(env, iface, m, sig, TypeMismatch))
    return Obj(tuple(methods))


def _check_method(env, iface, m: Method, sig: MethodType, err) -> Method:
    if len(m.params) != len(sig.params):
        raise err(f"method {m.label!r} takes {len(m.params)} parameter(s), "
                  f"expected {len(sig.params)}")
    if m.types is not None and tuple(m.types) != sig.params:
        raise err(f"method {m.label!r} is annotated "
                  f"({', '.join(map(str, m.types))}), expected {sig}")
    inner = {**env, **dict(zip(m.params, sig.params))}
    try:
        body = _check(inner, iface, m.body, sig.ret)
    except TypeMismatch as e:
        raise err(f"method {m.label!r} body: {e.message}") from None
    return Method(m.label, m.params, body, sig.params)


# -- sensors and networks ----------------------------------------------------

def _check_sensor(iface: ObjT, s) -> tuple[list[CSNTypeError], object]:
    if not getattr(s, "online", True):
        return [], s
    errors: list[CSNTypeError] = []
    methods = []
    for m in s.obj.methods:
        loc = f"method {m.label}"
        try:
            sig = iface.get(m.label)
            if sig is None:
                raise MethodNotInInterface(
                    f"method {m.label!r} is not part of the sensor interface")
            methods.append(_check_method({}, iface, m, sig, SignatureMismatch))
        except CSNTypeError as e:
            errors.append(e.at(s.id, loc))
    queue = []
    for i, p in enumerate(s.queue):
        try:
            queue.append(_synth({}, iface, p)[1])
        except CSNTypeError as e:
            errors.append(e.at(s.id, f"queue[{i}]"))
    if errors:
        return errors, s
    return [], dataclasses.replace(s, obj=Obj(tuple(methods)), queue=tuple(queue))


def check_sensor(iface: ObjT, s) -> list[CSNTypeError]:
    """Empty list iff the sensor is well typed under the interface."""
    return _check_sensor(iface, s)[0]


def check_network(iface: ObjT, network) -> list[CSNTypeError]:
    errors: list[CSNTypeError] = []
    for s in network.sensors:
        errors.extend(_check_sensor(iface, s)[0])
    return errors


def elaborate_sensor(iface: ObjT, s):
    errors, s2 = _check_sensor(iface, s)
    if errors:
        raise TypeCheckFailed(errors)
    return s2


def elaborate_network(iface: ObjT, network):
    """Type check and return the network with all parameters annotated."""
    errors: list[CSNTypeError] = []
    sensors = []
    for s in network.sensors:
        errs, s2 = _check_sensor(iface, s)
        errors.extend(errs)
        sensors.append(s2)
    if errors:
        raise TypeCheckFailed(errors)
    return dataclasses.replace(network, sensors=tuple(sensors))

"""Abstract syntax of CSN terms.

Values are programs (a value in program position is the ``Val`` form), so
``Program`` is a plain union.  All nodes are frozen dataclasses; objects keep
their methods sorted by label so equality and hashing ignore source order.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Mapping, Optional, Union

if TYPE_CHECKING:
    from csn.typecheck import Type

RESERVED = frozenset({"net", "loc", "install", "let", "in", "off", "unit"})


class UnitValue:
    """The built-in unit payload."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "UNIT"

    def __reduce__(self):
        return (UnitValue, ())


UNIT = UnitValue()


@dataclass(frozen=True)
class Builtin:
    payload: Union[float, str, UnitValue]

    def __post_init__(self):
        p = self.payload
        if isinstance(p, bool) or not isinstance(p, (float, int, str, UnitValue)):
            raise TypeError(f"bad built-in payload {p!r}")
        if isinstance(p, int):
            object.__setattr__(self, "payload", float(p))
        if isinstance(p, str) and not p:
            raise ValueError("symbol payloads must be non-empty")


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Net:
    pass


@dataclass(frozen=True)
class Loc:
    pass


@dataclass(frozen=True)
class Method:
    label: str
    params: tuple[str, ...]
    body: "Program"
    # parameter type annotations; None when the source left them out
    types: Optional[tuple["Type", ...]] = None

    def __post_init__(self):
        if len(set(self.params)) != len(self.params):
            raise ValueError(f"method {self.label}: duplicate parameters")
        if not self.params:
            object.__setattr__(self, "types", ())
        if self.types is not None and len(self.types) != len(self.params):
            raise ValueError(f"method {self.label}: annotation count mismatch")


@dataclass(frozen=True)
class Obj:
    methods: tuple[Method, ...] = ()

    def __post_init__(self):
        ms = tuple(sorted(self.methods, key=lambda m: m.label))
        for a, b in zip(ms, ms[1:]):
            if a.label == b.label:
                raise ValueError(f"duplicate method label {a.label!r}")
        object.__setattr__(self, "methods", ms)

    @property
    def labels(self) -> frozenset[str]:
        return frozenset(m.label for m in self.methods)

    def get(self, label: str) -> Optional[Method]:
        for m in self.methods:
            if m.label == label:
                return m
        return None


Value = Union[Builtin, Var, Net, Loc, Obj]
VALUE_TYPES = (Builtin, Var, Net, Loc, Obj)


@dataclass(frozen=True)
class Call:
    target: Value
    label: str
    args: tuple[Value, ...] = ()


@dataclass(frozen=True)
class Install:
    target: Value
    addition: Value


@dataclass(frozen=True)
class Let:
    binder: str
    bound: "Program"
    body: "Program"


Program = Union[Builtin, Var, Net, Loc, Obj, Call, Install, Let]


def is_value(p) -> bool:
    return isinstance(p, VALUE_TYPES)


# -- fresh names -------------------------------------------------------------

_fresh_counter = itertools.count(1)


def fresh(base: str) -> str:
    """Return a variable name no parsed program can contain."""
    return f"{base.split('#')[0]}#{next(_fresh_counter)}"


# -- free variables ----------------------------------------------------------

def free_vars(p: Program) -> frozenset[str]:
    if isinstance(p, Var):
        return frozenset({p.name})
    if isinstance(p, (Builtin, Net, Loc)):
        return frozenset()
    if isinstance(p, Obj):
        out: frozenset[str] = frozenset()
        for m in p.methods:
            out |= free_vars(m.body) - set(m.params)
        return out
    if isinstance(p, Call):
        out = free_vars(p.target)
        for a in p.args:
            out |= free_vars(a)
        return out
    if isinstance(p, Install):
        return free_vars(p.target) | free_vars(p.addition)
    if isinstance(p, Let):
        return free_vars(p.bound) | (free_vars(p.body) - {p.binder})
    raise TypeError(f"not a program: {p!r}")


def is_closed(p: Program) -> bool:
    return not free_vars(p)


# -- substitution ------------------------------------------------------------

def substitute(p: Program, bindings: Mapping[str, Value]) -> Program:
    """Simultaneous capture-avoiding substitution of values for variables.

    Binders are renamed only when they would capture a free variable of one of
    the substituted values.
    """
    return _subst(p, dict(bindings))


def _subst(p, sub: dict):
    if not sub:
        return p
    if isinstance(p, Var):
        return sub.get(p.name, p)
    if isinstance(p, (Builtin, Net, Loc)):
        return p
    if isinstance(p, Obj):
        return Obj(tuple(_subst_method(m, sub) for m in p.methods))
    if isinstance(p, Call):
        return Call(_subst(p.target, sub), p.label,
                    tuple(_subst(a, sub) for a in p.args))
    if isinstance(p, Install):
        return Install(_subst(p.target, sub), _subst(p.addition, sub))
    if isinstance(p, Let):
        (binder,), body, inner = _enter_binders((p.binder,), p.body, sub)
        return Let(binder, _subst(p.bound, sub), _subst(body, inner))
    raise TypeError(f"not a program: {p!r}")


def _subst_method(m: Method, sub: dict) -> Method:
    params, body, inner = _enter_binders(m.params, m.body, sub)
    return Method(m.label, params, _subst(body, inner), m.types)


def _enter_binders(binders, body, sub):
    """Drop shadowed bindings; rename binders that would capture.

    Returns the (possibly renamed) binders, the body with renamings applied,
    and the bindings still active under the binders.
    """
    body_fv = free_vars(body)
    inner = {k: v for k, v in sub.items() if k not in binders and k in body_fv}
    if not inner:
        return tuple(binders), body, inner
    live = frozenset().union(*(free_vars(v) for v in inner.values()))
    renamed = []
    for b in binders:
        if b in live:
            new = fresh(b)
            body = _subst(body, {b: Var(new)})
            renamed.append(new)
        else:
            renamed.append(b)
    return tuple(renamed), body, inner


# -- object update -----------------------------------------------------------

def object_update(base: Obj, addition: Obj) -> Obj:
    """``base + addition``: methods of ``addition`` replace same-named ones."""
    replaced = addition.labels
    kept = tuple(m for m in base.methods if m.label not in replaced)
    return Obj(kept + addition.methods)


# -- alpha equivalence -------------------------------------------------------

def alpha_equal(p1: Program, p2: Program) -> bool:
    return _alpha(p1, p2, {}, {}, 0)


def _alpha(a, b, env_a: dict, env_b: dict, depth: int) -> bool:
    if type(a) is not type(b):
        return False
    if isinstance(a, Var):
        ia, ib = env_a.get(a.name), env_b.get(b.name)
        if ia is None and ib is None:
            return a.name == b.name
        return ia == ib
    if isinstance(a, (Builtin, Net, Loc)):
        return a == b
    if isinstance(a, Obj):
        if len(a.methods) != len(b.methods):
            return False
        for ma, mb in zip(a.methods, b.methods):
            if (ma.label != mb.label or len(ma.params) != len(mb.params)
                    or ma.types != mb.types):
                return False
            ea, eb = dict(env_a), dict(env_b)
            for i, (xa, xb) in enumerate(zip(ma.params, mb.params)):
                ea[xa] = depth + i
                eb[xb] = depth + i
            if not _alpha(ma.body, mb.body, ea, eb, depth + len(ma.params)):
                return False
        return True
    if isinstance(a, Call):
        return (a.label == b.label and len(a.args) == len(b.args)
                and _alpha(a.target, b.target, env_a, env_b, depth)
                and all(_alpha(x, y, env_a, env_b, depth)
                        for x, y in zip(a.args, b.args)))
    if isinstance(a, Install):
        return (_alpha(a.target, b.target, env_a, env_b, depth)
                and _alpha(a.addition, b.addition, env_a, env_b, depth))
    if isinstance(a, Let):
        if not _alpha(a.bound, b.bound, env_a, env_b, depth):
            return False
        return _alpha(a.body, b.body, {**env_a, a.binder: depth},
                      {**env_b, b.binder: depth}, depth + 1)
    raise TypeError(f"not a program: {a!r}")


def normalize(p: Program) -> Program:
    """Rename every binder to a depth-indexed name (``#0``, ``#1``, ...).

    Two programs are alpha-equal iff their normal forms are equal, which makes
    the result usable as a hash key.
    """
    return _norm(p, {}, 0)


def _norm(p, env: dict, depth: int):
    if isinstance(p, Var):
        return Var(env.get(p.name, p.name))
    if isinstance(p, (Builtin, Net, Loc)):
        return p
    if isinstance(p, Obj):
        ms = []
        for m in p.methods:
            inner = dict(env)
            names = []
            for i, x in enumerate(m.params):
                inner[x] = f"#{depth + i}"
                names.append(f"#{depth + i}")
            ms.append(Method(m.label, tuple(names),
                             _norm(m.body, inner, depth + len(m.params)), m.types))
        return Obj(tuple(ms))
    if isinstance(p, Call):
        return Call(_norm(p.target, env, depth), p.label,
                    tuple(_norm(a, env, depth) for a in p.args))
    if isinstance(p, Install):
        return Install(_norm(p.target, env, depth), _norm(p.addition, env, depth))
    if isinstance(p, Let):
        name = f"#{depth}"
        return Let(name, _norm(p.bound, env, depth),
                   _norm(p.body, {**env, p.binder: name}, depth + 1))
    raise TypeError(f"not a program: {p!r}")


def subterms(p: Program) -> Iterable[Program]:
    """Pre-order walk over every program node, including method bodies."""
    yield p
    if isinstance(p, Obj):
        for m in p.methods:
            yield from subterms(m.body)
    elif isinstance(p, Call):
        yield from subterms(p.target)
        for a in p.args:
            yield from subterms(a)
    elif isinstance(p, Install):
        yield from subterms(p.target)
        yield from subterms(p.addition)
    elif isinstance(p, Let):
        yield from subterms(p.bound)
        yield from subterms(p.body)

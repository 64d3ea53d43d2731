"""Concrete syntax: lexer, recursive-descent parser, and pretty-printer.

A ``.csn`` file holds an ``interface`` block, an optional ``world`` block,
object templates, and ``sensor`` declarations::

    interface { ping: () -> {}  forward: (B) -> {} }
    world { e_in = 1; e_out = 1; field = gaussian(0, 0, 30, 2) }
    MSensor(m) = { ping = () net.forward(m); net.ping()
                   forward = (x) net.forward(x) }
    sensor s1 at (1, 0) radius 1.5 energy 100 object MSensor("m1")
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from csn.syntax import (
    RESERVED, UNIT, Builtin, Call, Install, Let, Loc, Method, Net, Obj,
    Program, UnitValue, Var, free_vars, fresh, subterms, substitute,
)
from csn.typecheck import (
    B, NET, PLAIN, SENSOR, BuiltinT, MethodType, NetT, ObjT, Type,
)
from csn.world import Constant, FieldModel, Gaussian, Grid, WorldConfig

ITEM_KEYWORDS = frozenset({"sensor", "world", "interface", "off"})


class ParseError(Exception):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        super().__init__(f"{line}:{col}: {message}")
        self.message = message
        self.line = line
        self.col = col


class LexError(ParseError):
    pass


class DuplicateLabel(ParseError):
    pass


class DuplicateName(ParseError):
    pass


class UnboundTemplate(ParseError):
    pass


class ReservedWord(ParseError):
    pass


# -- lexer -------------------------------------------------------------------

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\n]+|//[^\n]*)
  | (?P<arrow>->)
  | (?P<num>-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
  | (?P<str>"(?:[^"\\\n]|\\.)*")
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[{}()\[\],;.=:])
""", re.VERBOSE)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int
    value: object = None


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise LexError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        s = m.group()
        if kind == "num":
            tokens.append(Token("num", s, line, col, float(s)))
        elif kind == "str":
            try:
                val = json.loads(s)
            except ValueError:
                raise LexError(f"bad string literal {s}", line, col) from None
            tokens.append(Token("str", s, line, col, val))
        elif kind == "ident":
            tokens.append(Token("ident", s, line, col))
        elif kind in ("punct", "arrow"):
            tokens.append(Token(s, s, line, col))
        nl = s.count("\n")
        if nl:
            line += nl
            line_start = pos + s.rindex("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


# -- source units ------------------------------------------------------------

@dataclass(frozen=True)
class Template:
    name: str
    params: tuple[str, ...]
    body: Obj


@dataclass(frozen=True)
class NodeDecl:
    name: str
    position: tuple[float, float]
    radius: float
    energy: float
    object: Obj
    queue: tuple[Program, ...] = ()
    # (template name, arguments) when the object came from a template
    template: Optional[tuple[str, tuple[Program, ...]]] = None


@dataclass
class SourceUnit:
    interface: dict[str, MethodType]
    world: WorldConfig
    templates: dict[str, Template] = field(default_factory=dict)
    nodes: list[NodeDecl] = field(default_factory=list)
    offline: int = 0
    field_source: Optional[str] = None


# -- parser ------------------------------------------------------------------

class _Parser:
    def __init__(self, text: str, base_dir: Optional[Path] = None):
        self.toks = tokenize(text)
        self.i = 0
        self.base_dir = base_dir

    # token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, msg: str, tok: Optional[Token] = None, cls=ParseError):
        t = tok or self.tok
        return cls(msg, t.line, t.col)

    def at(self, kind: str, text: Optional[str] = None) -> bool:
        t = self.tok
        return t.kind == kind and (text is None or t.text == text)

    def at_word(self, word: str) -> bool:
        return self.at("ident", word)

    def expect(self, kind: str, text: Optional[str] = None) -> Token:
        if not self.at(kind, text):
            want = text or kind
            got = self.tok.text or self.tok.kind
            raise self.error(f"expected {want!r}, found {got!r}")
        t = self.tok
        self.i += 1
        return t

    def expect_word(self, word: str) -> Token:
        return self.expect("ident", word)

    def accept(self, kind: str, text: Optional[str] = None) -> bool:
        if self.at(kind, text):
            self.i += 1
            return True
        return False

    def variable(self) -> str:
        t = self.expect("ident")
        if t.text in RESERVED:
            raise self.error(f"reserved word {t.text!r} cannot be a variable", t,
                             ReservedWord)
        return t.text

    def number(self) -> float:
        return self.expect("num").value

    # programs
    def program(self) -> Program:
        first = self.simple()
        if self.accept(";"):
            rest = self.program()
            return Let(fresh("x"), first, rest)
        return first

    def simple(self) -> Program:
        t = self.tok
        if self.at_word("let"):
            self.i += 1
            x = self.variable()
            self.expect("=")
            bound = self.program()
            self.expect_word("in")
            return Let(x, bound, self.program())
        if self.at_word("install"):
            self.i += 1
            first = self.value()
            if self._starts_operand():
                return Install(first, self.value())
            return Install(Loc(), first)
        if self.at("("):
            self.i += 1
            p = self.program()
            self.expect(")")
            return p
        if t.kind == "ident" and t.text not in RESERVED and self.peek().kind == "(":
            # bare call f(...) targets the sensor object
            self.i += 1
            return Call(Loc(), t.text, self.args())
        target = self.value()
        if self.accept("."):
            label = self.expect("ident").text
            return Call(target, label, self.args())
        return target

    def _starts_operand(self) -> bool:
        t = self.tok
        if t.kind in ("num", "str", "{"):
            return True
        if t.kind != "ident":
            return False
        if t.text in ("net", "loc", "unit"):
            return True
        if t.text in RESERVED:
            return False
        nxt = self.peek()
        if nxt.kind in ("=", "(", ":"):
            return False
        if t.text in ITEM_KEYWORDS and nxt.kind == "ident":
            return False
        return True

    def args(self) -> tuple[Program, ...]:
        self.expect("(")
        out = []
        if not self.at(")"):
            out.append(self.value())
            while self.accept(","):
                out.append(self.value())
        self.expect(")")
        return tuple(out)

    def value(self) -> Program:
        t = self.tok
        if t.kind == "num":
            self.i += 1
            return Builtin(t.value)
        if t.kind == "str":
            self.i += 1
            if not t.value:
                raise self.error("symbol literals must be non-empty", t)
            return Builtin(t.value)
        if t.kind == "{":
            return self.object()
        if t.kind == "ident":
            if t.text == "net":
                self.i += 1
                return Net()
            if t.text == "loc":
                self.i += 1
                return Loc()
            if t.text == "unit":
                self.i += 1
                return Builtin(UNIT)
            return Var(self.variable())
        raise self.error(f"expected a value, found {t.text or t.kind!r}")

    def object(self) -> Obj:
        self.expect("{")
        methods: dict[str, Method] = {}
        while not self.at("}"):
            lt = self.expect("ident")
            if lt.text in methods:
                raise self.error(f"duplicate method label {lt.text!r}", lt,
                                 DuplicateLabel)
            self.expect("=")
            params, types = self.params()
            body = self.program()
            methods[lt.text] = Method(lt.text, params, body, types)
            self.accept(",")
        self.expect("}")
        return Obj(tuple(methods.values()))

    def params(self):
        self.expect("(")
        names: list[str] = []
        types: list[Optional[Type]] = []
        if not self.at(")"):
            while True:
                t = self.tok
                x = self.variable()
                if x in names:
                    raise self.error(f"duplicate parameter {x!r}", t)
                names.append(x)
                types.append(self.type() if self.accept(":") else None)
                if not self.accept(","):
                    break
        self.expect(")")
        if not names or all(ty is None for ty in types):
            return tuple(names), None
        if any(ty is None for ty in types):
            raise self.error("annotate either all parameters or none")
        return tuple(names), tuple(types)

    # types
    def type(self) -> Type:
        t = self.tok
        if self.accept("ident", "B"):
            return B
        if self.accept("ident", "Net"):
            return NET
        if self.at("{"):
            return self.object_type("{", "}", PLAIN)
        if self.at("["):
            return self.object_type("[", "]", SENSOR)
        raise self.error(f"expected a type, found {t.text or t.kind!r}")

    def object_type(self, open_: str, close: str, kind: str) -> ObjT:
        self.expect(open_)
        return ObjT.of(kind, self.signatures(close))

    def signatures(self, close: str) -> dict[str, MethodType]:
        sigs: dict[str, MethodType] = {}
        while not self.at(close):
            lt = self.expect("ident")
            if lt.text in sigs:
                raise self.error(f"duplicate method label {lt.text!r}", lt,
                                 DuplicateLabel)
            self.expect(":")
            sigs[lt.text] = self.method_type()
            if not self.accept(","):
                self.accept(";")
        self.expect(close)
        return sigs

    def method_type(self) -> MethodType:
        self.expect("(")
        params = []
        if not self.at(")"):
            params.append(self.type())
            while self.accept(","):
                params.append(self.type())
        self.expect(")")
        self.expect("->")
        return MethodType(tuple(params), self.type())

    # file level
    def unit(self) -> SourceUnit:
        interface: Optional[dict[str, MethodType]] = None
        world_kw: dict = {}
        field_source = None
        templates: dict[str, Template] = {}
        nodes: list[NodeDecl] = []
        node_names: set[str] = set()
        offline = 0
        seen_world = False
        while not self.at("eof"):
            t = self.tok
            if self.at_word("interface"):
                if interface is not None:
                    raise self.error("duplicate interface block", t, DuplicateName)
                self.i += 1
                self.expect("{")
                interface = self.signatures("}")
            elif self.at_word("world"):
                if seen_world:
                    raise self.error("duplicate world block", t, DuplicateName)
                seen_world = True
                self.i += 1
                world_kw, field_source = self.world_block()
            elif self.at_word("sensor"):
                self.i += 1
                node = self.node(templates)
                if node.name in node_names:
                    raise self.error(f"duplicate sensor name {node.name!r}", t,
                                     DuplicateName)
                node_names.add(node.name)
                nodes.append(node)
            elif self.at_word("off"):
                self.i += 1
                offline += 1
            elif t.kind == "ident":
                tpl = self.template()
                if tpl.name in templates:
                    raise self.error(f"duplicate template {tpl.name!r}", t,
                                     DuplicateName)
                templates[tpl.name] = tpl
            else:
                raise self.error(f"unexpected {t.text or t.kind!r} at top level")
        if interface is None:
            raise self.error("missing interface block")
        return SourceUnit(interface, WorldConfig(**world_kw), templates, nodes,
                          offline, field_source)

    def template(self) -> Template:
        t = self.expect("ident")
        if t.text in RESERVED or t.text in ITEM_KEYWORDS:
            raise self.error(f"reserved word {t.text!r} cannot name a template",
                             t, ReservedWord)
        params: tuple[str, ...] = ()
        if self.at("("):
            params, types = self.params()
            if types is not None:
                raise self.error("template parameters are untyped", t)
        self.expect("=")
        if not self.at("{"):
            raise self.error("a template body must be an object literal")
        return Template(t.text, params, self.object())

    def node(self, templates: dict[str, Template]) -> NodeDecl:
        name = self.expect("ident").text
        self.expect_word("at")
        self.expect("(")
        x = self.number()
        self.expect(",")
        y = self.number()
        self.expect(")")
        self.expect_word("radius")
        rt = self.tok
        radius = self.number()
        self.expect_word("energy")
        et = self.tok
        energy = self.number()
        if radius < 0:
            raise self.error("radius must be non-negative", rt)
        if energy < 0:
            raise self.error("energy must be non-negative", et)
        self.expect_word("object")
        tpl_ref = None
        if self.at("{"):
            obj = self.object()
        else:
            tt = self.expect("ident")
            tpl = templates.get(tt.text)
            if tpl is None:
                raise self.error(f"unknown template {tt.text!r}", tt, UnboundTemplate)
            args: tuple[Program, ...] = ()
            if self.at("("):
                args = self.args()
            if len(args) != len(tpl.params):
                raise self.error(f"template {tpl.name} takes {len(tpl.params)} "
                                 f"argument(s), got {len(args)}", tt)
            for a in args:
                if free_vars(a):
                    raise self.error("template arguments must be closed values", tt)
            obj = substitute(tpl.body, dict(zip(tpl.params, args)))
            tpl_ref = (tpl.name, args)
        queue: list[Program] = []
        if self.accept("ident", "run"):
            queue.append(self.program())
            while self.accept(","):
                queue.append(self.program())
        return NodeDecl(name, (x, y), radius, energy, obj, tuple(queue), tpl_ref)

    def world_block(self):
        self.expect("{")
        kw: dict = {}
        source = None
        while not self.at("}"):
            kt = self.expect("ident")
            self.expect("=")
            key = kt.text
            if key in kw:
                raise self.error(f"duplicate world key {key!r}", kt, DuplicateName)
            if key in ("e_in", "e_out"):
                v = self.number()
                if v < 0:
                    raise self.error(f"{key} must be non-negative", kt)
                kw[key] = v
            elif key == "meter":
                vt = self.expect("ident")
                if vt.text not in ("true", "false"):
                    raise self.error("meter must be true or false", vt)
                kw["metering"] = vt.text == "true"
            elif key == "field":
                kw["field"], source = self.field_model()
            else:
                raise self.error(f"unknown world key {key!r}", kt)
            if not self.accept(";"):
                self.accept(",")
        self.expect("}")
        return kw, source

    def field_model(self) -> tuple[FieldModel, Optional[str]]:
        kt = self.expect("ident")
        self.expect("(")
        try:
            if kt.text == "const":
                f: FieldModel = Constant(self.number())
                src = None
            elif kt.text == "gaussian":
                cx = self.number(); self.expect(",")
                cy = self.number(); self.expect(",")
                peak = self.number(); self.expect(",")
                f = Gaussian((cx, cy), peak, self.number())
                src = None
            elif kt.text == "grid":
                if self.at("str"):
                    src = self.expect("str").value
                    path = Path(src)
                    if not path.is_absolute() and self.base_dir is not None:
                        path = self.base_dir / path
                    rows = Grid.from_csv(path).samples
                else:
                    src = None
                    rows = self.number_rows()
                self.expect(",")
                x0 = self.number(); self.expect(",")
                y0 = self.number(); self.expect(",")
                f = Grid(rows, (x0, y0), self.number())
            else:
                raise self.error(f"unknown field model {kt.text!r}", kt)
        except (ValueError, OSError) as e:
            raise self.error(str(e), kt) from None
        self.expect(")")
        return f, src

    def number_rows(self):
        self.expect("[")
        rows = []
        while self.at("["):
            self.i += 1
            row = [self.number()]
            while self.accept(","):
                row.append(self.number())
            self.expect("]")
            rows.append(tuple(row))
            self.accept(",")
        self.expect("]")
        return tuple(rows)


def parse_network(text: str, base_dir: Union[str, Path, None] = None) -> SourceUnit:
    p = _Parser(text, Path(base_dir) if base_dir is not None else None)
    return p.unit()


def parse_file(path: Union[str, Path]) -> SourceUnit:
    path = Path(path)
    return parse_network(path.read_text(encoding="utf-8"), path.parent)


def _parse_only(text: str, rule: str):
    p = _Parser(text)
    out = getattr(p, rule)()
    if not p.at("eof"):
        raise p.error(f"unexpected {p.tok.text!r} after {rule}")
    return out


def parse_program(text: str) -> Program:
    return _parse_only(text, "program")


def parse_object(text: str) -> Obj:
    return _parse_only(text, "object")


def parse_type(text: str) -> Type:
    return _parse_only(text, "type")


# -- pretty-printer ----------------------------------------------------------

def format_number(x: float) -> str:
    return repr(float(x))


class _Printer:
    def __init__(self, term):
        self.used: set[str] = set()
        for node in _all_programs(term):
            if isinstance(node, Var):
                self.used.add(node.name)
            elif isinstance(node, Let):
                self.used.add(node.binder)
            elif isinstance(node, Obj):
                for m in node.methods:
                    self.used.update(m.params)
        self.counter = 0

    def binder(self, name: str, env: dict) -> tuple[str, dict]:
        if "#" not in name:
            return name, {**env, name: name}
        base = name.split("#")[0] or "x"
        while True:
            self.counter += 1
            cand = f"{base}_{self.counter}"
            if cand not in self.used:
                break
        self.used.add(cand)
        return cand, {**env, name: cand}

    def prog(self, p: Program, env: dict, seq_left: bool = False) -> str:
        if isinstance(p, Let):
            if p.binder not in free_vars(p.body):
                s = f"{self.prog(p.bound, env, True)}; {self.prog(p.body, env)}"
            else:
                name, inner = self.binder(p.binder, env)
                s = (f"let {name} = {self.prog(p.bound, env)} in "
                     f"{self.prog(p.body, inner)}")
            return f"({s})" if seq_left else s
        if isinstance(p, Call):
            args = ", ".join(self.value(a, env) for a in p.args)
            return f"{self.value(p.target, env)}.{p.label}({args})"
        if isinstance(p, Install):
            return f"install {self.value(p.target, env)} {self.value(p.addition, env)}"
        return self.value(p, env)

    def value(self, v: Program, env: dict) -> str:
        if isinstance(v, Builtin):
            if isinstance(v.payload, UnitValue):
                return "unit"
            if isinstance(v.payload, str):
                return json.dumps(v.payload, ensure_ascii=False)
            return format_number(v.payload)
        if isinstance(v, Var):
            return env.get(v.name, v.name)
        if isinstance(v, Net):
            return "net"
        if isinstance(v, Loc):
            return "loc"
        if isinstance(v, Obj):
            return self.obj(v, env)
        raise TypeError(f"not a value: {v!r}")

    def obj(self, o: Obj, env: dict) -> str:
        if not o.methods:
            return "{}"
        parts = []
        for m in o.methods:
            inner = env
            ps = []
            for i, x in enumerate(m.params):
                name, inner = self.binder(x, inner)
                if m.types is not None:
                    ps.append(f"{name}: {m.types[i]}")
                else:
                    ps.append(name)
            parts.append(f"{m.label} = ({', '.join(ps)}) {self.prog(m.body, inner)}")
        return "{ " + ", ".join(parts) + " }"


def _all_programs(term):
    if isinstance(term, SourceUnit):
        for t in term.templates.values():
            yield from subterms(t.body)
        for n in term.nodes:
            yield from subterms(n.object)
            for q in n.queue:
                yield from subterms(q)
    else:
        yield from subterms(term)


def pretty_print(term: Union[Program, SourceUnit, Type, MethodType]) -> str:
    if isinstance(term, SourceUnit):
        return _print_unit(term)
    if isinstance(term, (ObjT, MethodType, BuiltinT, NetT)):
        return str(term)
    pr = _Printer(term)
    return pr.prog(term, {})


def _print_field(unit: SourceUnit) -> str:
    f = unit.world.field
    if isinstance(f, Constant):
        return f"const({format_number(f.value)})"
    if isinstance(f, Gaussian):
        nums = (f.center[0], f.center[1], f.peak, f.sigma)
        return f"gaussian({', '.join(map(format_number, nums))})"
    rows = ", ".join("[" + ", ".join(map(format_number, r)) + "]" for r in f.samples)
    tail = f"{format_number(f.origin[0])}, {format_number(f.origin[1])}, " \
           f"{format_number(f.cell)}"
    return f"grid([{rows}], {tail})"


def _print_unit(unit: SourceUnit) -> str:
    out = ["interface {"]
    for label, mt in sorted(unit.interface.items()):
        out.append(f"  {label}: {mt}")
    out.append("}")
    w = unit.world
    out.append(f"world {{ e_in = {format_number(w.e_in)}; "
               f"e_out = {format_number(w.e_out)}; field = {_print_field(unit)}; "
               f"meter = {'true' if w.metering else 'false'} }}")
    for tpl in unit.templates.values():
        pr = _Printer(tpl.body)
        head = tpl.name + (f"({', '.join(tpl.params)})" if tpl.params else "")
        out.append(f"{head} = {pr.obj(tpl.body, {})}")
    for n in unit.nodes:
        pr = _Printer(n.object)
        if n.template is not None:
            name, args = n.template
            obj = name + (f"({', '.join(pr.value(a, {}) for a in args)})" if args else "")
        else:
            obj = pr.obj(n.object, {})
        line = (f"sensor {n.name} at ({format_number(n.position[0])}, "
                f"{format_number(n.position[1])}) radius {format_number(n.radius)} "
                f"energy {format_number(n.energy)} object {obj}")
        if n.queue:
            line += " run " + ", ".join(_Printer(q).prog(q, {}) for q in n.queue)
        out.append(line)
    out.extend("off" for _ in range(unit.offline))
    return "\n".join(out) + "\n"

"""Physical environment: geometry, scalar fields, energy constants, built-ins."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence, Union

from csn.syntax import Builtin, Obj, Program
from csn.typecheck import (
    B, EMPTY, SENSOR, InterfaceConflict, MethodType, ObjT,
)

Position = tuple[float, float]


def distance(p1: Position, p2: Position) -> float:
    return math.hypot(p1[0] - p2[0], p1[1] - p2[1])


# -- fields ------------------------------------------------------------------

@dataclass(frozen=True)
class Constant:
    value: float


@dataclass(frozen=True)
class Gaussian:
    center: Position
    peak: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("gaussian sigma must be positive")


@dataclass(frozen=True)
class Grid:
    """Samples on a regular lattice; row 0 holds the smallest y."""

    samples: tuple[tuple[float, ...], ...]
    origin: Position = (0.0, 0.0)
    cell: float = 1.0

    def __post_init__(self):
        rows = tuple(tuple(float(v) for v in r) for r in self.samples)
        if not rows or not rows[0]:
            raise ValueError("grid needs at least one sample")
        if any(len(r) != len(rows[0]) for r in rows):
            raise ValueError("grid rows must have equal length")
        if not self.cell > 0:
            raise ValueError("grid cell size must be positive")
        object.__setattr__(self, "samples", rows)

    @classmethod
    def from_csv(cls, path: Union[str, Path], origin: Position = (0.0, 0.0),
                 cell: float = 1.0) -> "Grid":
        with open(path, newline="") as fh:
            rows = [[float(x) for x in row] for row in csv.reader(fh) if row]
        return cls(tuple(tuple(r) for r in rows), origin, cell)


FieldModel = Union[Constant, Gaussian, Grid]


def sample_field(f: FieldModel, p: Position) -> Builtin:
    if isinstance(f, Constant):
        return Builtin(float(f.value))
    if isinstance(f, Gaussian):
        d2 = (p[0] - f.center[0]) ** 2 + (p[1] - f.center[1]) ** 2
        return Builtin(f.peak * math.exp(-d2 / (2.0 * f.sigma ** 2)))
    if isinstance(f, Grid):
        return Builtin(_bilinear(f, p))
    raise TypeError(f"unknown field model {f!r}")


def _bilinear(g: Grid, p: Position) -> float:
    rows, cols = len(g.samples), len(g.samples[0])
    # out-of-range positions are clamped onto the grid
    gx = min(max((p[0] - g.origin[0]) / g.cell, 0.0), cols - 1)
    gy = min(max((p[1] - g.origin[1]) / g.cell, 0.0), rows - 1)
    j0, i0 = min(int(gx), max(cols - 2, 0)), min(int(gy), max(rows - 2, 0))
    j1, i1 = min(j0 + 1, cols - 1), min(i0 + 1, rows - 1)
    tx, ty = gx - j0, gy - i0
    s = g.samples
    bottom = s[i0][j0] * (1 - tx) + s[i0][j1] * tx
    top = s[i1][j0] * (1 - tx) + s[i1][j1] * tx
    return bottom * (1 - ty) + top * ty


# -- logs --------------------------------------------------------------------

@dataclass(frozen=True)
class LogEntry:
    step: int
    builtin: str
    value: Program


class LogStore:
    """Per-sensor append-only logs.  Appending returns a new store."""

    __slots__ = ("_logs",)

    def __init__(self, logs: Optional[Mapping[str, tuple[LogEntry, ...]]] = None):
        self._logs = dict(logs or {})

    def append(self, sensor: str, entry: LogEntry) -> "LogStore":
        prev = self._logs.get(sensor, ())
        if prev and prev[-1].step >= entry.step:
            raise ValueError("log steps must strictly increase per sensor")
        logs = dict(self._logs)
        logs[sensor] = prev + (entry,)
        return LogStore(logs)

    def entries(self, sensor: str) -> tuple[LogEntry, ...]:
        return self._logs.get(sensor, ())

    def values(self, sensor: str, builtin: Optional[str] = None) -> list:
        return [e.value for e in self.entries(sensor)
                if builtin is None or e.builtin == builtin]

    def sensors(self) -> list[str]:
        return sorted(self._logs)

    def __len__(self):
        return sum(len(v) for v in self._logs.values())

    def __eq__(self, other):
        return isinstance(other, LogStore) and self._logs == other._logs

    def __repr__(self):
        return f"LogStore({self._logs!r})"


# -- built-in methods --------------------------------------------------------

class UnknownBuiltin(LookupError):
    pass


class BuiltinArityMismatch(Exception):
    pass


@dataclass(frozen=True)
class BuiltinContext:
    sensor: str
    position: Position
    world: "WorldConfig"
    step: int


@dataclass(frozen=True)
class BuiltinSpec:
    """A method every sensor can reach through ``loc``.

    ``impl`` returns the call's result value; ``logs`` marks entries whose
    argument is appended to the calling sensor's log.
    """

    name: str
    signature: MethodType
    impl: Callable[..., Program]
    logs: bool = False


def _field(ctx: BuiltinContext) -> Program:
    return sample_field(ctx.world.field, ctx.position)


def _log(ctx: BuiltinContext, value: Program) -> Program:
    return Obj()


def logging_builtin(name: str) -> BuiltinSpec:
    """A ``(B) -> {}`` built-in that records its argument."""
    return BuiltinSpec(name, MethodType((B,), EMPTY), _log, logs=True)


DEFAULT_BUILTINS: Mapping[str, BuiltinSpec] = {
    "field": BuiltinSpec("field", MethodType((), B), _field),
    "log_mac": logging_builtin("log_mac"),
    "log_field": logging_builtin("log_field"),
}


@dataclass(frozen=True)
class WorldConfig:
    e_in: float = 0.0
    e_out: float = 0.0
    field: FieldModel = Constant(0.0)
    metering: bool = False
    builtins: Mapping[str, BuiltinSpec] = dc_field(
        default_factory=lambda: dict(DEFAULT_BUILTINS), compare=False, hash=False)

    def __post_init__(self):
        for name in ("e_in", "e_out"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and non-negative")

    @property
    def min_energy(self) -> float:
        return min(self.e_in, self.e_out)


def call_builtin(name: str, args: Sequence[Program], sensor: str,
                 position: Position, world: WorldConfig, logs: LogStore,
                 step: int) -> tuple[Program, LogStore]:
    entry = world.builtins.get(name)
    if entry is None:
        raise UnknownBuiltin(name)
    if len(args) != len(entry.signature.params):
        raise BuiltinArityMismatch(
            f"{name} expects {len(entry.signature.params)} argument(s), got {len(args)}")
    ctx = BuiltinContext(sensor, position, world, step)
    result = entry.impl(ctx, *args)
    if entry.logs:
        logs = logs.append(sensor, LogEntry(step, name, args[0]))
    return result, logs


def build_interface(declared: Mapping[str, MethodType],
                    builtins: Mapping[str, BuiltinSpec] = DEFAULT_BUILTINS) -> ObjT:
    """The global sensor interface: declared methods plus every built-in."""
    sigs = dict(declared)
    for name, entry in builtins.items():
        if name in sigs and sigs[name] != entry.signature:
            raise InterfaceConflict(
                f"interface declares {name}: {sigs[name]}, "
                f"but the built-in has {entry.signature}")
        sigs[name] = entry.signature
    return ObjT.of(SENSOR, sigs)

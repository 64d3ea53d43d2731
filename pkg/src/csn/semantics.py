"""Small-step reduction of sensor networks.

Nondeterminism is reified: ``enabled_choices`` lists every step the rules
license in a network, ``apply_step`` performs one of them, and a scheduling
policy drives ``run`` by picking among the enabled choices.
"""

from __future__ import annotations

import dataclasses
import json
import random
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence, Union

from csn.parser import pretty_print
from csn.syntax import (
    UNIT, Builtin, Call, Install, Let, Loc, Net, Obj, Program, UnitValue,
    is_value, normalize, object_update, substitute,
)
from csn.typecheck import ObjT, check_sensor
from csn.world import (
    BuiltinArityMismatch, LogStore, Position, WorldConfig, call_builtin, distance,
)

RULES = ("method-top", "no-method-top", "method", "broadcast-deliver", "release",
         "install-top", "install", "let", "switch", "complete")
LOCAL_RULES = frozenset({"method-top", "no-method-top", "method", "install-top",
                         "install", "let", "complete"})


class InvalidChoice(ValueError):
    """A step was requested that is not enabled in the network."""


class RuntimeFault(Exception):
    """A call with the wrong number of arguments reached a defined method."""


class StateBudgetExceeded(Exception):
    def __init__(self, visited: int):
        super().__init__(f"state budget exceeded after {visited} states")
        self.visited = visited


# -- network state -----------------------------------------------------------

@dataclass(frozen=True)
class Sensor:
    id: str
    queue: tuple[Program, ...]
    obj: Obj
    position: Position
    radius: float
    energy: float
    online: bool = True
    # ids already reached by the broadcast in progress; None when idle
    membrane: Optional[frozenset[str]] = None

    def __post_init__(self):
        if self.radius < 0 or self.energy < 0:
            raise ValueError(f"sensor {self.id}: radius and energy must be >= 0")
        if self.membrane is not None and not self.membrane:
            object.__setattr__(self, "membrane", None)


@dataclass(frozen=True)
class Network:
    sensors: tuple[Sensor, ...]
    world: WorldConfig
    interface: ObjT
    step_count: int = 0
    logs: LogStore = field(default_factory=LogStore, compare=False)

    def __post_init__(self):
        ids = [s.id for s in self.sensors]
        if len(set(ids)) != len(ids):
            raise ValueError("sensor ids must be unique")

    def sensor(self, sid: str) -> Sensor:
        for s in self.sensors:
            if s.id == sid:
                return s
        raise KeyError(sid)

    def replace_sensors(self, updated: dict[str, Sensor], **kw) -> "Network":
        sensors = tuple(updated.get(s.id, s) for s in self.sensors)
        return dataclasses.replace(self, sensors=sensors, **kw)


# -- reduction contexts ------------------------------------------------------

@dataclass(frozen=True)
class Frame:
    """The context ``let binder = [ ] in body``."""

    binder: str
    body: Program


@dataclass(frozen=True)
class Redex:
    context: tuple[Frame, ...]
    core: Program

    def plug(self, p: Program) -> Program:
        for fr in reversed(self.context):
            p = Let(fr.binder, p, fr.body)
        return p


@dataclass(frozen=True)
class Completed:
    value: Program


@dataclass(frozen=True)
class Stuck:
    reason: str


def decompose(p: Program) -> Union[Redex, Completed]:
    """Split a head program into its reduction context and innermost redex.

    Stuck cores (calls on missing anonymous methods and the like) are still
    returned as redexes; whether they can move is decided against the sensor.
    """
    if is_value(p):
        return Completed(p)
    frames = []
    while isinstance(p, Let) and not is_value(p.bound):
        frames.append(Frame(p.binder, p.body))
        p = p.bound
    return Redex(tuple(frames), p)


# -- choices -----------------------------------------------------------------

@dataclass(frozen=True, order=True)
class LocalStep:
    sensor: str
    rule: str


@dataclass(frozen=True, order=True)
class BroadcastDeliver:
    sender: str
    receiver: str


@dataclass(frozen=True, order=True)
class BroadcastRelease:
    sender: str


@dataclass(frozen=True, order=True)
class Switch:
    sensor: str


StepChoice = Union[LocalStep, BroadcastDeliver, BroadcastRelease, Switch]


def choice_sensor(c: StepChoice) -> str:
    return c.sender if isinstance(c, (BroadcastDeliver, BroadcastRelease)) else c.sensor


_KIND_ORDER = {LocalStep: 0, BroadcastDeliver: 1, BroadcastRelease: 2, Switch: 3}


def choice_key(c: StepChoice) -> tuple:
    """Total order over choices of every kind."""
    return (choice_sensor(c), _KIND_ORDER[type(c)], dataclasses.astuple(c))


def is_productive(c: StepChoice) -> bool:
    return not (isinstance(c, Switch)
                or (isinstance(c, LocalStep) and c.rule == "no-method-top"))


def _exhausted(s: Sensor, world: WorldConfig) -> bool:
    return (not s.online) or s.energy < world.min_energy


def _classify(s: Sensor, p: Program, world: WorldConfig) -> Union[str, Stuck]:
    """Name the rule that reduces ``p`` at the head of ``s``."""
    d = decompose(p)
    if isinstance(d, Completed):
        return "complete"
    core = d.core
    if isinstance(core, Let):
        return "let"
    if isinstance(core, Call):
        t = core.target
        if isinstance(t, Loc):
            if s.obj.get(core.label) is not None or core.label in world.builtins:
                return "method-top"
            return "no-method-top"
        if isinstance(t, Net):
            return "broadcast"
        if isinstance(t, Obj):
            m = t.get(core.label)
            if m is None:
                return Stuck(f"anonymous object has no method {core.label!r}")
            if len(m.params) != len(core.args):
                return Stuck(f"{core.label!r} called with {len(core.args)} argument(s)")
            return "method"
        return Stuck(f"cannot call {core.label!r} on {pretty_print(t)}")
    if isinstance(core, Install):
        if isinstance(core.addition, Obj):
            if isinstance(core.target, Loc):
                return "install-top"
            if isinstance(core.target, Obj):
                return "install"
        return Stuck("install needs object operands")
    return Stuck(f"unexpected redex {core!r}")


def _engaged(n: Network) -> frozenset[str]:
    out: set[str] = set()
    for s in n.sensors:
        if s.membrane:
            out |= s.membrane
    return frozenset(out)


def _receivers(n: Network, sender: Sensor, engaged: frozenset[str]) -> list[str]:
    out = []
    for t in n.sensors:
        if (t.id == sender.id or t.id in engaged or t.membrane
                or _exhausted(t, n.world)):
            continue
        if distance(sender.position, t.position) < sender.radius:
            out.append(t.id)
    return sorted(out)


def _head_choices(n: Network, s: Sensor, engaged) -> list[StepChoice]:
    """Choices for the program at the head of ``s`` (no switches)."""
    if not s.queue:
        return []
    w = n.world
    rule = _classify(s, s.queue[0], w)
    if isinstance(rule, Stuck):
        return []
    if rule == "broadcast":
        out: list[StepChoice] = []
        if s.energy >= w.e_out:
            out.extend(BroadcastDeliver(s.id, r) for r in _receivers(n, s, engaged)
                       if r not in (s.membrane or ()))
        out.append(BroadcastRelease(s.id))
        return out
    if rule in ("no-method-top", "complete"):
        return [LocalStep(s.id, rule)]
    if s.energy >= w.e_in:
        return [LocalStep(s.id, rule)]
    return []


def _can_switch(s: Sensor, engaged) -> bool:
    return bool(s.queue) and not s.membrane and s.id not in engaged


def enabled_choices(n: Network) -> list[StepChoice]:
    engaged = _engaged(n)
    out: list[StepChoice] = []
    for s in n.sensors:
        if _exhausted(s, n.world) or s.id in engaged:
            continue
        out.extend(_head_choices(n, s, engaged))
        if _can_switch(s, engaged):
            out.append(Switch(s.id))
    return out


def _program_productive(s: Sensor, p: Program, world: WorldConfig) -> bool:
    rule = _classify(s, p, world)
    if isinstance(rule, Stuck) or rule == "no-method-top":
        return False
    if rule in ("broadcast", "complete"):
        return True
    return s.energy >= world.e_in


def productive_after_switch(n: Network, s: Sensor, engaged=None) -> bool:
    """Whether some non-head program of ``s`` could reduce once rotated in."""
    if engaged is None:
        engaged = _engaged(n)
    if _exhausted(s, n.world) or not _can_switch(s, engaged):
        return False
    return any(_program_productive(s, p, n.world) for p in s.queue[1:])


def is_quiescent(n: Network, choices: Optional[Sequence[StepChoice]] = None) -> bool:
    """No productive step is enabled now or reachable by queue rotation."""
    if choices is None:
        choices = enabled_choices(n)
    if any(is_productive(c) for c in choices):
        return False
    engaged = _engaged(n)
    return not any(productive_after_switch(n, s, engaged) for s in n.sensors)


# -- applying steps ----------------------------------------------------------

def _install_top(obj: Obj, addition: Obj) -> tuple[Program, Obj]:
    """Result of ``install loc addition``: (value left in the hole, new object)."""
    updated = object_update(obj, addition)
    return updated, updated


def _charge(s: Sensor, world: WorldConfig, cost: float) -> float:
    if not world.metering:
        return s.energy
    return max(0.0, s.energy - cost)


def value_json(v: Program):
    if isinstance(v, Builtin):
        if isinstance(v.payload, UnitValue):
            return None
        return v.payload
    return {"term": pretty_print(v)}


def apply_step(n: Network, c: StepChoice) -> Network:
    if c not in enabled_choices(n):
        raise InvalidChoice(f"{c} is not enabled")
    return _step(n, c)[0]


def _event(n: Network, rule: str, sensor: str, **detail) -> dict:
    return {"step": n.step_count, "rule": rule, "sensor": sensor, "detail": detail}


def _step(n: Network, c: StepChoice) -> tuple[Network, list[dict]]:
    w = n.world
    nxt = n.step_count + 1
    if isinstance(c, Switch):
        s = n.sensor(c.sensor)
        s2 = dataclasses.replace(s, queue=s.queue[1:] + s.queue[:1])
        ev = _event(n, "switch", s.id, queue=len(s.queue))
        return n.replace_sensors({s.id: s2}, step_count=nxt), [ev]
    if isinstance(c, BroadcastDeliver):
        s, t = n.sensor(c.sender), n.sensor(c.receiver)
        red = decompose(s.queue[0])
        core = red.core
        msg = Call(Loc(), core.label, core.args)
        s2 = dataclasses.replace(s, membrane=(s.membrane or frozenset()) | {t.id})
        t2 = dataclasses.replace(t, queue=t.queue + (msg,))
        ev = _event(n, "broadcast-deliver", s.id, receiver=t.id, label=core.label,
                    args=[value_json(a) for a in core.args],
                    distance=distance(s.position, t.position), radius=s.radius)
        return n.replace_sensors({s.id: s2, t.id: t2}, step_count=nxt), [ev]
    if isinstance(c, BroadcastRelease):
        s = n.sensor(c.sender)
        red = decompose(s.queue[0])
        delivered = sorted(s.membrane or ())
        s2 = dataclasses.replace(
            s, queue=(red.plug(Obj()),) + s.queue[1:], membrane=None,
            energy=_charge(s, w, w.e_out))
        ev = _event(n, "release", s.id, label=red.core.label, delivered=delivered)
        return n.replace_sensors({s.id: s2}, step_count=nxt), [ev]
    return _local_step(n, c, nxt)


def _local_step(n: Network, c: LocalStep, nxt: int) -> tuple[Network, list[dict]]:
    w = n.world
    s = n.sensor(c.sensor)
    head, rest = s.queue[0], s.queue[1:]
    if c.rule == "complete":
        ev = _event(n, "complete", s.id, value=value_json(head))
        return n.replace_sensors({s.id: dataclasses.replace(s, queue=rest)},
                                 step_count=nxt), [ev]
    red = decompose(head)
    core = red.core
    obj = s.obj
    logs = n.logs
    events: list[dict] = []
    if c.rule == "let":
        new_core = substitute(core.body, {core.binder: core.bound})
        detail = {"binder": core.binder.split("#")[0]}
    elif c.rule == "method-top":
        m = obj.get(core.label)
        if m is not None:
            if len(m.params) != len(core.args):
                raise RuntimeFault(
                    f"sensor {s.id}: {core.label!r} expects {len(m.params)} "
                    f"argument(s), got {len(core.args)}")
            new_core = substitute(m.body, dict(zip(m.params, core.args)))
            detail = {"label": core.label}
        else:
            try:
                new_core, logs = call_builtin(core.label, core.args, s.id,
                                              s.position, w, logs, n.step_count)
            except BuiltinArityMismatch as e:
                raise RuntimeFault(f"sensor {s.id}: {e}") from None
            detail = {"label": core.label, "builtin": True,
                      "result": value_json(new_core)}
            if len(logs) != len(n.logs):
                events.append({"step": n.step_count, "sensor": s.id,
                               "builtin": core.label,
                               "value": value_json(core.args[0])})
    elif c.rule == "no-method-top":
        ev = _event(n, "no-method-top", s.id, label=core.label)
        return dataclasses.replace(n, step_count=nxt), [ev]
    elif c.rule == "method":
        m = core.target.get(core.label)
        new_core = substitute(m.body, dict(zip(m.params, core.args)))
        detail = {"label": core.label}
    elif c.rule == "install-top":
        new_core, obj = _install_top(obj, core.addition)
        detail = {"labels": sorted(core.addition.labels)}
    elif c.rule == "install":
        new_core = object_update(core.target, core.addition)
        detail = {"labels": sorted(core.addition.labels)}
    else:
        raise InvalidChoice(f"unknown rule {c.rule!r}")
    s2 = dataclasses.replace(s, queue=(red.plug(new_core),) + rest, obj=obj,
                             energy=_charge(s, w, w.e_in))
    ev = _event(n, c.rule, s.id, **detail)
    return (n.replace_sensors({s.id: s2}, step_count=nxt, logs=logs),
            [ev] + events)


# -- policies ----------------------------------------------------------------

class Policy:
    """Picks one enabled choice per step."""

    name = "policy"

    def reset(self, n: Network) -> None:
        pass

    def choose(self, n: Network, choices: Sequence[StepChoice]) -> StepChoice:
        raise NotImplementedError


def _by_sensor(choices: Iterable[StepChoice]) -> dict[str, list[StepChoice]]:
    out: dict[str, list[StepChoice]] = {}
    for c in choices:
        out.setdefault(choice_sensor(c), []).append(c)
    return out


def _broadcast_step(cs: Sequence[StepChoice]) -> Optional[StepChoice]:
    delivers = sorted(c for c in cs if isinstance(c, BroadcastDeliver))
    if delivers:
        return delivers[0]
    for c in cs:
        if isinstance(c, BroadcastRelease):
            return c
    return None


class RoundRobin(Policy):
    """Visit sensors cyclically, one productive step per visit.

    A sensor whose head cannot move rotates its queue instead.  With
    ``atomic`` set, a started broadcast reaches every receiver in range and is
    released before any other sensor moves.
    """

    def __init__(self, atomic: bool = False):
        self.atomic = atomic
        self.name = "deliver-all" if atomic else "round-robin"
        self.cursor = 0
        self.stepped: set[str] = set()

    def reset(self, n: Network) -> None:
        self.cursor = 0
        self.stepped: set[str] = set()

    def choose(self, n, choices):
        groups = _by_sensor(choices)
        k = len(n.sensors)
        if self.atomic:
            for idx, s in enumerate(n.sensors):
                if s.membrane and s.id in groups:
                    pick = _broadcast_step(groups[s.id])
                    if isinstance(pick, BroadcastRelease):
                        # the whole broadcast was this sensor's turn
                        self.cursor = idx + 1
                        self.stepped.add(s.id)
                    return pick
        engaged = _engaged(n)
        for off in range(k):
            idx = (self.cursor + off) % k
            s = n.sensors[idx]
            if s.id in engaged:
                # push the broadcast holding this sensor along, then revisit it
                holder = next(b for b in n.sensors if b.membrane and s.id in b.membrane)
                self.cursor = idx
                return _broadcast_step(groups[holder.id])
            cs = groups.get(s.id, [])
            # programs of one queue share the sensor: after the head moved,
            # rotate before its next step so no looping program starves others
            if (s.id in self.stepped and len(s.queue) > 1 and Switch(s.id) in cs
                    and productive_after_switch(n, s, engaged)):
                self.stepped.discard(s.id)
                self.cursor = idx
                return Switch(s.id)
            productive = [c for c in cs if is_productive(c)]
            if productive:
                b = _broadcast_step(productive)
                pick = b if b is not None else productive[0]
                if not (self.atomic and isinstance(pick, BroadcastDeliver)):
                    self.cursor = idx + 1
                    self.stepped.add(s.id)
                return pick
            if Switch(s.id) in cs and productive_after_switch(n, s, engaged):
                self.cursor = idx
                return Switch(s.id)
        productive = [c for c in choices if is_productive(c)]
        return (productive or list(choices))[0]


class RandomPolicy(Policy):
    """Seeded random choice that does not depend on sensor declaration order.

    Each step draws the acting sensor from the ids (sorted) with a generator
    keyed by (seed, step), then draws that sensor's move from a generator keyed
    by (seed, sensor id, step).
    """

    name = "random"

    def __init__(self, seed: int = 0):
        self.seed = seed

    def choose(self, n, choices):
        groups = _by_sensor(choices)
        engaged = _engaged(n)
        options: dict[str, list[StepChoice]] = {}
        for sid in sorted(groups):
            s = n.sensor(sid)
            cs = groups[sid]
            productive = sorted((c for c in cs if is_productive(c)), key=choice_key)
            opts = list(productive)
            can_rotate = (Switch(sid) in cs and len(s.queue) > 1
                          and (productive or productive_after_switch(n, s, engaged)))
            if can_rotate:
                opts.append(Switch(sid))
            if opts:
                options[sid] = opts
        if not options:
            return sorted(choices, key=choice_key)[0]
        step = n.step_count
        sid = random.Random(f"{self.seed}/{step}").choice(sorted(options))
        return random.Random(f"{self.seed}/{sid}/{step}").choice(options[sid])


class Scripted(Policy):
    """Play a fixed list of choices, then hand over to another policy."""

    name = "scripted"

    def __init__(self, script: Sequence[StepChoice], then: Optional[Policy] = None):
        self.script = list(script)
        self.then = then or RoundRobin(atomic=True)
        self._pending: deque = deque()

    def reset(self, n):
        self._pending = deque(self.script)
        self.then.reset(n)

    def choose(self, n, choices):
        if self._pending:
            c = self._pending.popleft()
            if c not in choices:
                raise InvalidChoice(f"scripted step {c} is not enabled")
            return c
        return self.then.choose(n, choices)


def make_policy(name: str, seed: int = 0) -> Policy:
    if name == "deliver-all":
        return RoundRobin(atomic=True)
    if name == "round-robin":
        return RoundRobin(atomic=False)
    if name == "random":
        return RandomPolicy(seed)
    raise ValueError(f"unknown schedule {name!r}")


# -- runs --------------------------------------------------------------------

@dataclass
class Trace:
    events: list[dict] = field(default_factory=list)
    outcome: str = "quiescent"
    steps: int = 0
    error: Optional[str] = None

    def rule_events(self, rule: Optional[str] = None) -> list[dict]:
        return [e for e in self.events
                if "rule" in e and (rule is None or e["rule"] == rule)]

    def log_events(self) -> list[dict]:
        return [e for e in self.events if "builtin" in e and "rule" not in e]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e, separators=(", ", ": ")) + "\n"
                       for e in self.events)

    def write(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")


def run(n: Network, policy: Optional[Policy] = None,
        max_steps: int = 10_000) -> tuple[Network, Trace]:
    """Step until quiescence, a runtime fault, or ``max_steps`` steps."""
    if max_steps < 0:
        raise ValueError("max_steps must be >= 0")
    policy = policy or RoundRobin(atomic=True)
    policy.reset(n)
    trace = Trace()
    while True:
        choices = enabled_choices(n)
        if is_quiescent(n, choices):
            trace.outcome = "quiescent"
            break
        if trace.steps >= max_steps:
            trace.outcome = "budget"
            break
        c = policy.choose(n, choices)
        try:
            n, events = _step(n, c)
        except RuntimeFault as e:
            trace.events.append({"step": n.step_count, "rule": "error",
                                 "sensor": choice_sensor(c),
                                 "detail": {"message": str(e)}})
            trace.outcome = "error"
            trace.error = str(e)
            break
        trace.events.extend(events)
        trace.steps += 1
    return n, trace


# -- bounded exploration -----------------------------------------------------

def sensor_key(s: Sensor):
    k = s.__dict__.get("_key")
    if k is None:
        k = (s.id, tuple(normalize(p) for p in s.queue), normalize(s.obj),
             s.position, s.radius, s.energy, s.online, s.membrane)
        object.__setattr__(s, "_key", k)
    return k


def state_key(n: Network):
    return tuple(sorted((sensor_key(s) for s in n.sensors), key=lambda k: k[0]))


@dataclass
class AllHold:
    states: int


@dataclass
class Counterexample:
    path: list[StepChoice]
    network: Network
    states: int = 0


def explore(n: Network, depth: int, predicate: Callable[[Network], bool],
            max_states: int = 50_000) -> Union[AllHold, Counterexample]:
    """Breadth-first search over every enabled choice up to ``depth`` steps."""
    if not predicate(n):
        return Counterexample([], n, 1)
    visited = {state_key(n)}
    frontier: list[tuple[Network, tuple]] = [(n, ())]
    for _ in range(depth):
        nxt = []
        for m, path in frontier:
            for c in enabled_choices(m):
                try:
                    m2 = _step(m, c)[0]
                except RuntimeFault:
                    continue
                k = state_key(m2)
                if k in visited:
                    continue
                visited.add(k)
                if len(visited) > max_states:
                    raise StateBudgetExceeded(len(visited))
                if not predicate(m2):
                    return Counterexample(list(path) + [c], m2, len(visited))
                nxt.append((m2, path + (c,)))
        frontier = nxt
        if not frontier:
            break
    return AllHold(len(visited))


# -- state predicates --------------------------------------------------------

def well_typed() -> Callable[[Network], bool]:
    cache: dict = {}

    def pred(n: Network) -> bool:
        for s in n.sensors:
            k = sensor_key(s)
            ok = cache.get(k)
            if ok is None:
                ok = not check_sensor(n.interface, s)
                cache[k] = ok
            if not ok:
                return False
        return True

    return pred


def membrane_once() -> Callable[[Network], bool]:
    """Open membranes hold only in-range peers, never the broadcaster."""

    def pred(n: Network) -> bool:
        for s in n.sensors:
            for t in s.membrane or ():
                if t == s.id:
                    return False
                if not distance(s.position, n.sensor(t).position) < s.radius:
                    return False
        return True

    return pred


def energy_gate(initial: Network) -> Callable[[Network], bool]:
    """Exhausted sensors never change; low-power ones never reach a peer."""
    w = initial.world
    frozen = {s.id: s for s in initial.sensors if _exhausted(s, w)}

    def pred(n: Network) -> bool:
        for s in n.sensors:
            if s.id in frozen and s != frozen[s.id]:
                return False
            if s.membrane and s.energy < w.e_out:
                return False
        return True

    return pred


PREDICATES = {
    "well-typed": lambda n: well_typed(),
    "membrane-once": lambda n: membrane_once(),
    "energy-gate": energy_gate,
}

"""Random well-typed networks and the property harness built on them.

Generation is type-directed: every term is built at a requested type, so a
generated network passes the checker by construction.  Method parameters
always carry annotations, which keeps every reachable state synthesizable.
"""

from __future__ import annotations

import dataclasses
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

from csn.semantics import (
    Counterexample, Network, Sensor, StateBudgetExceeded, StepChoice, explore,
    well_typed,
)
from csn.syntax import (
    UNIT, Builtin, Call, Install, Let, Loc, Method, Net, Obj, Program, Var, fresh,
)
from csn.typecheck import (
    B, EMPTY, NET, PLAIN, SENSOR, BuiltinT, MethodType, ObjT, Type, check_network,
)
from csn.world import DEFAULT_BUILTINS, WorldConfig, build_interface

LABELS = ("a", "b", "c", "d", "e", "f")
VARS = ("x", "y", "z")
# an object type small enough to pass around as an argument
THUNK = ObjT.of(PLAIN, {"g": MethodType((), B)})


class GenerationExhausted(Exception):
    pass


@dataclass(frozen=True)
class GenConfig:
    seed: int = 0
    max_sensors: int = 3
    max_methods: int = 3
    max_program_depth: int = 2
    interface: Optional[ObjT] = None

    def __post_init__(self):
        for name in ("max_sensors", "max_methods", "max_program_depth"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


def random_interface(rng: random.Random) -> ObjT:
    """3 to 6 declared methods over B, {} and a thunk type, plus the built-ins."""
    labels = rng.sample(LABELS, rng.randint(3, 6))
    declared = {}
    for label in sorted(labels):
        params = tuple(rng.choice((B, B, EMPTY, THUNK)) for _ in range(rng.randint(0, 2)))
        declared[label] = MethodType(params, rng.choice((B, EMPTY)))
    return build_interface(declared)


def declared_labels(iface: ObjT) -> list[str]:
    return sorted(l for l in iface.labels if l not in DEFAULT_BUILTINS)


class TermGen:
    """Builds closed-under-``env`` terms of a requested type."""

    def __init__(self, rng: random.Random, iface: ObjT):
        self.rng = rng
        self.iface = iface

    def pick(self, options):
        return options[self.rng.randrange(len(options))]

    # values
    def value(self, env: dict, t: Type, depth: int) -> Program:
        vars_ = [Var(x) for x, tx in env.items() if tx == t]
        if vars_ and self.rng.random() < 0.4:
            return self.pick(vars_)
        if isinstance(t, BuiltinT):
            if self.rng.random() < 0.5:
                return Builtin(float(self.rng.randint(0, 9)))
            return self.pick((Builtin(self.pick(("m1", "m2", "m3"))), Builtin(UNIT)))
        if t == NET:
            return Net()
        if isinstance(t, ObjT) and t.kind == SENSOR:
            return Loc()
        return self.obj_literal(env, t, depth)

    def obj_literal(self, env: dict, t: ObjT, depth: int) -> Obj:
        methods = []
        for label, mt in t.methods:
            names = self.rng.sample(VARS, len(mt.params))
            inner = {**env, **dict(zip(names, mt.params))}
            body = self.program(inner, mt.ret, depth - 1)
            methods.append(Method(label, tuple(names), body, mt.params))
        return Obj(tuple(methods))

    def args(self, env, params, depth) -> tuple[Program, ...]:
        return tuple(self.value(env, pt, depth - 1) for pt in params)

    # programs
    def program(self, env: dict, t: Type, depth: int) -> Program:
        forms: list[Callable[[], Program]] = [lambda: self.value(env, t, depth)]
        if depth > 0:
            forms.append(lambda: self.let(env, t, depth))
            forms.append(lambda: self.seq(env, t, depth))
            forms.append(lambda: self.anon_call(env, t, depth))
            tops = [l for l, mt in self.iface.methods if mt.ret == t]
            if tops:
                forms.append(lambda: self.loc_call(env, self.pick(tops), depth))
            if t == EMPTY:
                forms.append(lambda: self.broadcast(env, depth))
                forms.append(lambda: self.broadcast(env, depth))
            if isinstance(t, ObjT) and t.kind == PLAIN:
                forms.append(lambda: self.anon_install(env, t, depth))
        return self.pick(forms)()

    def any_type(self) -> Type:
        return self.pick((B, EMPTY, THUNK))

    def let(self, env, t, depth) -> Program:
        bt = self.any_type()
        x = self.pick(VARS)
        bound = self.program(env, bt, depth - 1)
        return Let(x, bound, self.program({**env, x: bt}, t, depth - 1))

    def seq(self, env, t, depth) -> Program:
        # the one place an install into the sensor object may appear: its
        # result is discarded, so the literal left behind is never used
        if self.rng.random() < 0.5:
            first = self.loc_install(env, depth)
        else:
            first = self.program(env, self.any_type(), depth - 1)
        return Let(fresh("x"), first, self.program(env, t, depth - 1))

    def target(self, env, t: Type) -> Program:
        vars_ = [Var(x) for x, tx in env.items() if tx == t]
        if vars_ and self.rng.random() < 0.3:
            return self.pick(vars_)
        return Loc() if t == self.iface else Net()

    def loc_call(self, env, label, depth) -> Program:
        mt = self.iface.get(label)
        return Call(self.target(env, self.iface), label, self.args(env, mt.params, depth))

    def broadcast(self, env, depth) -> Program:
        label = self.pick(declared_labels(self.iface))
        mt = self.iface.get(label)
        return Call(self.target(env, NET), label, self.args(env, mt.params, depth))

    def anon_call(self, env, t, depth) -> Program:
        params = tuple(self.pick((B, EMPTY)) for _ in range(self.rng.randint(0, 1)))
        sig = MethodType(params, t)
        o = self.obj_literal(env, ObjT.of(PLAIN, {"h": sig}), depth)
        return Call(o, "h", self.args(env, params, depth))

    def anon_install(self, env, t: ObjT, depth) -> Program:
        labels = sorted(t.labels)
        left = {l for l in labels if self.rng.random() < 0.5}
        right = set(labels) - left
        if labels and self.rng.random() < 0.5:
            right.add(self.pick(labels))
        lt = ObjT.of(PLAIN, {l: t.get(l) for l in left})
        rt = ObjT.of(PLAIN, {l: t.get(l) for l in right})
        return Install(self.obj_literal(env, lt, depth - 1),
                       self.obj_literal(env, rt, depth - 1))

    def loc_install(self, env, depth) -> Program:
        labels = [l for l in declared_labels(self.iface) if self.rng.random() < 0.5]
        at = ObjT.of(PLAIN, {l: self.iface.get(l) for l in labels})
        return Install(Loc(), self.obj_literal(env, at, depth - 1))


def gen_well_typed_network(cfg: GenConfig) -> Network:
    rng = random.Random(cfg.seed)
    iface = cfg.interface or random_interface(rng)
    world = WorldConfig(e_in=rng.choice((0.0, 1.0)), e_out=rng.choice((0.0, 2.0)),
                        metering=rng.random() < 0.3)
    g = TermGen(rng, iface)
    labels = declared_labels(iface)
    sensors = []
    for i in range(rng.randint(1, cfg.max_sensors)):
        chosen = rng.sample(labels, rng.randint(0, min(cfg.max_methods, len(labels))))
        obj_t = ObjT.of(PLAIN, {l: iface.get(l) for l in chosen})
        obj = g.obj_literal({}, obj_t, cfg.max_program_depth)
        queue = []
        for _ in range(rng.randint(0, 2)):
            r = rng.random()
            if r < 0.3:
                queue.append(g.broadcast({}, cfg.max_program_depth))
            elif r < 0.5:
                label = rng.choice(labels)
                queue.append(Call(Loc(), label,
                                  g.args({}, iface.get(label).params, 1)))
            else:
                queue.append(g.program({}, g.any_type(), cfg.max_program_depth))
        sensors.append(Sensor(
            f"s{i}", tuple(queue), obj,
            (float(rng.randint(0, 2)), float(rng.randint(0, 2))),
            rng.choice((0.5, 1.5, 3.0)), rng.choice((0.0, 1.0, 5.0))))
    net = Network(tuple(sensors), world, iface)
    errors = check_network(iface, net)
    if errors:
        raise GenerationExhausted(f"seed {cfg.seed}: generated an ill-typed network: "
                                  f"{errors[0]}")
    return net


# -- subject reduction -------------------------------------------------------

@dataclass
class Failure:
    seed: int
    path: list[StepChoice]
    network: Network


@dataclass
class SuiteReport:
    instances: int = 0
    holds: int = 0
    skipped: int = 0
    states: int = 0
    failures: list[Failure] = field(default_factory=list)

    @property
    def counterexamples(self) -> int:
        return len(self.failures)

    def summary(self) -> str:
        rows = [("instances", self.instances), ("all hold", self.holds),
                ("counterexamples", self.counterexamples),
                ("skipped (state cap)", self.skipped), ("states visited", self.states)]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows)


def _one_instance(args):
    cfg, depth, max_states = args
    net = gen_well_typed_network(cfg)
    try:
        res = explore(net, depth, well_typed(), max_states)
    except StateBudgetExceeded as e:
        return cfg.seed, "skipped", e.visited, None, None
    if isinstance(res, Counterexample):
        return cfg.seed, "fail", res.states, res.path, net
    return cfg.seed, "ok", res.states, None, None


def subject_reduction_suite(cfg: GenConfig, instances: int, depth: int,
                            max_states: int = 50_000, jobs: int = 1,
                            shrink_failures: bool = True) -> SuiteReport:
    """Explore each generated network and check every reachable state types."""
    tasks = [(dataclasses.replace(cfg, seed=cfg.seed + i), depth, max_states)
             for i in range(instances)]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            results = list(pool.map(_one_instance, tasks, chunksize=8))
    else:
        results = [_one_instance(t) for t in tasks]
    report = SuiteReport()
    for seed, status, states, path, net in results:
        report.instances += 1
        report.states += states
        if status == "ok":
            report.holds += 1
        elif status == "skipped":
            report.skipped += 1
        else:
            if shrink_failures:
                net = shrink(net, lambda m: _violates(m, depth, max_states))
                res = explore(net, depth, well_typed(), max_states)
                path = res.path if isinstance(res, Counterexample) else path
            report.failures.append(Failure(seed, path, net))
    return report


def _violates(net: Network, depth: int, max_states: int) -> bool:
    if check_network(net.interface, net):
        return False
    try:
        return isinstance(explore(net, depth, well_typed(), max_states), Counterexample)
    except StateBudgetExceeded:
        return False


# -- shrinking ---------------------------------------------------------------

def _candidates(net: Network):
    sensors = net.sensors
    for i in range(len(sensors)):
        yield dataclasses.replace(net, sensors=sensors[:i] + sensors[i + 1:])
    for i, s in enumerate(sensors):
        for j in range(len(s.queue)):
            s2 = dataclasses.replace(s, queue=s.queue[:j] + s.queue[j + 1:])
            yield dataclasses.replace(net, sensors=sensors[:i] + (s2,) + sensors[i + 1:])
        for m in s.obj.methods:
            obj = Obj(tuple(x for x in s.obj.methods if x.label != m.label))
            s2 = dataclasses.replace(s, obj=obj)
            yield dataclasses.replace(net, sensors=sensors[:i] + (s2,) + sensors[i + 1:])


def shrink(net: Network, fails: Callable[[Network], bool]) -> Network:
    """Greedily drop sensors, queued programs and methods while ``fails`` holds."""
    changed = True
    while changed:
        changed = False
        for cand in _candidates(net):
            if fails(cand):
                net = cand
                changed = True
                break
    return net

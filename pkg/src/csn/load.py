"""Turn parsed source units into runnable networks."""

from __future__ import annotations

import dataclasses
from pathlib import Path
from typing import Optional, Union

from csn.parser import NodeDecl, SourceUnit, parse_file, parse_network
from csn.semantics import Network, Sensor
from csn.typecheck import TypeCheckFailed, check_network, elaborate_network
from csn.world import build_interface

CORPUS = Path(__file__).with_name("corpus")


def network_from_unit(unit: SourceUnit, *, typed: bool = True,
                      metering: Optional[bool] = None) -> Network:
    """Build the network of a unit.

    With ``typed`` set the network is type-checked (raising
    ``TypeCheckFailed``) and every method parameter gets its type annotation.
    """
    world = unit.world
    if metering is not None:
        world = dataclasses.replace(world, metering=metering)
    iface = build_interface(unit.interface, world.builtins)
    sensors = tuple(
        Sensor(d.name, tuple(d.queue), d.object, d.position, d.radius, d.energy)
        for d in unit.nodes)
    net = Network(sensors, world, iface)
    if typed:
        errors = check_network(iface, net)
        if errors:
            raise TypeCheckFailed(errors)
        net = elaborate_network(iface, net)
    return net


def load_network(source: Union[str, Path], *, typed: bool = True,
                 metering: Optional[bool] = None) -> Network:
    """Load a ``.csn`` file (or a bare corpus name such as ``"ping"``)."""
    path = Path(source)
    if not path.exists() and not path.suffix:
        path = CORPUS / f"{source}.csn"
    return network_from_unit(parse_file(path), typed=typed, metering=metering)


def load_text(text: str, *, typed: bool = True) -> Network:
    return network_from_unit(parse_network(text), typed=typed)


def unit_from_network(net: Network) -> SourceUnit:
    """The source form of a network's current sensors (logs are not kept)."""
    declared = {label: mt for label, mt in net.interface.methods
                if label not in net.world.builtins}
    nodes = [NodeDecl(s.id, s.position, s.radius, s.energy, s.obj, tuple(s.queue))
             for s in net.sensors if s.online]
    offline = sum(1 for s in net.sensors if not s.online)
    return SourceUnit(declared, net.world, {}, nodes, offline)

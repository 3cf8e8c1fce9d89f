"""Discrete household simulator: travel over a weighted graph, noisy detection, truthful user.

Positions are graph nodes; furniture names double as the nodes where the
robot stands to inspect that furniture.  Travel time is the shortest-path
weight in seconds.  Detection is a seeded Bernoulli draw with no false
positives.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence, Union

import networkx as nx
import numpy as np

from .kb import OntologyStore, normalize_name

UNKNOWN_ANSWER = "unknown"


class WorldConfigError(ValueError):
    pass


class UnreachableError(RuntimeError):
    pass


class NotAtLocationError(RuntimeError):
    pass


@dataclass
class WorldState:
    rooms: tuple[str, ...]
    furniture: dict[str, str]  # furniture -> room
    graph: nx.Graph
    placements: dict[str, str]  # object -> furniture
    delivery_point: str
    initial_position: str
    preferences: dict[str, str] = field(default_factory=dict)
    grasp_cost_s: float = 5.0
    release_cost_s: float = 5.0

    def copy(self) -> "WorldState":
        return copy.deepcopy(self)

    def check_consistent(self, store: OntologyStore) -> None:
        """Raise unless the world and the ontology name the same rooms and furniture."""
        if set(self.rooms) != set(store.rooms):
            raise WorldConfigError("world and ontology disagree on rooms")
        for name, room in self.furniture.items():
            if store.furniture.get(name) is None or store.furniture[name].room != room:
                raise WorldConfigError(f"furniture {name!r} differs between world and ontology")
        if set(self.furniture) != set(store.furniture):
            raise WorldConfigError("world and ontology disagree on furniture")
        stray = set(self.placements) - set(store.object_index)
        if stray:
            raise WorldConfigError(f"placed objects missing from ontology: {sorted(stray)}")


@dataclass
class RobotState:
    position: str
    carrying: Optional[str] = None
    odometer: float = 0.0
    delivered: list[str] = field(default_factory=list)


class PerceptionModel:
    """Bernoulli detector; one draw is consumed per ``perceive`` call."""

    def __init__(self, detect_prob: float = 1.0, rng_seed: Union[int, Sequence[int]] = 0):
        if not 0.0 <= detect_prob <= 1.0:
            raise ValueError(f"detect_prob must be in [0, 1], got {detect_prob}")
        self.detect_prob = detect_prob
        self.rng_seed = rng_seed
        self.rng = np.random.default_rng(rng_seed)

    def draw(self) -> bool:
        return bool(self.rng.random() < self.detect_prob)


def load_world(config: Union[str, Path, Mapping[str, Any]]) -> WorldState:
    if isinstance(config, Path):
        config = json.loads(config.read_text(encoding="utf-8"))
    elif isinstance(config, str):
        config = json.loads(config)
    required = {"rooms", "furniture", "edges", "placements", "delivery_point", "initial_position"}
    missing = required - set(config)
    if missing:
        raise WorldConfigError(f"world config missing {sorted(missing)}")

    rooms = tuple(normalize_name(r) for r in config["rooms"])
    furniture: dict[str, str] = {}
    for entry in config["furniture"]:
        name, room = normalize_name(entry["name"]), normalize_name(entry["room"])
        if room not in rooms:
            raise WorldConfigError(f"furniture {name!r} in undeclared room {room!r}")
        if name in furniture:
            raise WorldConfigError(f"duplicate furniture {name!r}")
        furniture[name] = room

    graph = nx.Graph()
    for edge in config["edges"]:
        if len(edge) != 3 or not isinstance(edge[2], (int, float)) or edge[2] < 0:
            raise WorldConfigError(f"edge must be [a, b, seconds>=0], got {edge!r}")
        graph.add_edge(normalize_name(edge[0]), normalize_name(edge[1]), weight=float(edge[2]))

    start = normalize_name(config["initial_position"])
    delivery = normalize_name(config["delivery_point"])
    for node in (start, delivery, *furniture):
        if node not in graph:
            raise WorldConfigError(f"location {node!r} is not on the travel graph")
    reachable = nx.node_connected_component(graph, start)
    stranded = [f for f in furniture if f not in reachable]
    if stranded:
        raise WorldConfigError(f"furniture unreachable from the start: {stranded}")

    placements: dict[str, str] = {}
    for obj, where in config["placements"].items():
        where = normalize_name(where)
        if where not in furniture:
            raise WorldConfigError(f"object {obj!r} placed on unknown furniture {where!r}")
        placements[normalize_name(obj)] = where

    return WorldState(
        rooms=rooms,
        furniture=furniture,
        graph=graph,
        placements=placements,
        delivery_point=delivery,
        initial_position=start,
        preferences={normalize_name(k): normalize_name(v) for k, v in config.get("preferences", {}).items()},
        grasp_cost_s=float(config.get("grasp_cost_s", 5.0)),
        release_cost_s=float(config.get("release_cost_s", 5.0)),
    )


def load_fixture_world() -> WorldState:
    from importlib.resources import files

    return load_world(files("bringme.data").joinpath("world.json").read_text("utf-8"))


def travel_time(world: WorldState, origin: str, destination: str) -> float:
    if destination not in world.graph:
        raise UnreachableError(f"unknown destination {destination!r}")
    try:
        return nx.shortest_path_length(world.graph, origin, destination, weight="weight")
    except nx.NetworkXNoPath:
        raise UnreachableError(f"no path from {origin!r} to {destination!r}") from None


def travel(world: WorldState, robot: RobotState, destination: str) -> RobotState:
    robot.odometer += travel_time(world, robot.position, destination)
    robot.position = destination
    return robot


def perceive(
    world: WorldState, robot: RobotState, furniture: str, target: str, perception: PerceptionModel
) -> bool:
    if robot.position != furniture:
        raise NotAtLocationError(f"robot is at {robot.position!r}, not {furniture!r}")
    hit = perception.draw()
    return hit and world.placements.get(target) == furniture


@dataclass(frozen=True)
class Inquiry:
    kind: str  # "object_preference" or "location"
    subject: str
    question: str
    options: tuple[str, ...] = ()


class SimulatedUser:
    """Always answers in line with the ground truth it was given."""

    def __init__(self, placements: Mapping[str, str], preference_table: Mapping[str, str]):
        self.ground_truth = dict(placements)
        self.preference_table = dict(preference_table)

    @classmethod
    def for_world(cls, world: WorldState) -> "SimulatedUser":
        return cls(world.placements, world.preferences)

    def ask(self, inquiry: Inquiry) -> str:
        return answer_inquiry(self, inquiry)


def answer_inquiry(user: SimulatedUser, inquiry: Inquiry) -> str:
    subject = normalize_name(inquiry.subject)
    if inquiry.kind == "location":
        return user.ground_truth.get(subject, UNKNOWN_ANSWER)
    if inquiry.kind == "object_preference":
        if subject in user.preference_table:
            return user.preference_table[subject]
        # Otherwise the first offered option that actually exists in the house.
        for option in inquiry.options:
            if option in user.ground_truth:
                return option
        return UNKNOWN_ANSWER
    raise ValueError(f"unsupported inquiry kind {inquiry.kind!r}")


@dataclass(frozen=True)
class Visit:
    furniture: str
    arrived_at: float
    detected: bool


@dataclass
class VisitLog:
    visits: list[Visit] = field(default_factory=list)
    found_at: Optional[str] = None
    grasped: bool = False
    delivered: bool = False

    @property
    def success(self) -> bool:
        return self.found_at is not None


def execute_plan(
    world: WorldState,
    robot: RobotState,
    plan,
    target: str,
    perception: PerceptionModel,
    grasp: bool = False,
) -> VisitLog:
    """Visit ``plan.visit_list`` in order, stopping at the first detection.

    With ``grasp`` the robot picks the object up on detection; if the plan has
    a ``deliver_to`` location it then carries the object there and lets go.
    """
    log = VisitLog()
    for furniture in plan.visit_list:
        travel(world, robot, furniture)
        detected = perceive(world, robot, furniture, target, perception)
        log.visits.append(Visit(furniture, robot.odometer, detected))
        if detected:
            log.found_at = furniture
            break
    if log.found_at is None:
        return log
    deliver_to = getattr(plan, "deliver_to", None)
    if grasp or deliver_to:
        robot.odometer += world.grasp_cost_s
        robot.carrying = target
        log.grasped = True
    if deliver_to:
        travel(world, robot, deliver_to)
        robot.odometer += world.release_cost_s
        robot.delivered.append(target)
        robot.carrying = None
        log.delivered = True
    return log

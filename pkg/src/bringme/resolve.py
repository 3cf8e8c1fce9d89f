"""Command understanding and ambiguity resolution for fetch tasks.

Which object to fetch is settled by the ontology or by asking the user, never
by the model, because object preference is personal.  Where to look is
settled by the ontology first, then the model with verification, then the
user.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional, Protocol

from .kb import (
    AmbiguousClass,
    ConcreteObject,
    OntologyStore,
    classify_term,
    default_locations,
    normalize_name,
)
from .llm import BackendError, ChatSession
from .prompts import Bindings, InquiryLabel, render_inquiry
from .simworld import (
    Inquiry,
    PerceptionModel,
    RobotState,
    WorldState,
    execute_plan,
)
from .verify import VerificationConfig, verify_locations

logger = logging.getLogger(__name__)

MAX_FALLBACK_ROUNDS = 2


class CommandParseError(ValueError):
    pass


class UnresolvableObjectError(LookupError):
    pass


class UnresolvableLocationError(LookupError):
    pass


class Verb(str, Enum):
    FIND = "Find"
    TAKE = "Take"
    BRING = "Bring"


@dataclass(frozen=True)
class Command:
    verb: Verb
    object_term: str


_COMMAND = re.compile(
    r"^\s*(?P<verb>find|take|bring)\b\s*(?:me\b\s*)?(?:(?:a|an|the|some)\s+)?(?P<obj>.*?)[\s.!?]*$",
    re.IGNORECASE,
)


def parse_command(text: str) -> Command:
    m = _COMMAND.match(text)
    if not m:
        raise CommandParseError(f"expected a command starting with find/take/bring: {text!r}")
    obj = normalize_name(m.group("obj"))
    if not obj:
        raise CommandParseError(f"no object in command {text!r}")
    return Command(Verb(m.group("verb").capitalize()), obj)


APPROACHES = {
    "OKB": (False, False),
    "OKB+LLM": (True, False),
    "OKB+LLM+MEM": (True, True),
}
SITUATIONS = {"without_defaults": False, "with_defaults": True}


@dataclass(frozen=True)
class ApproachConfig:
    use_llm: bool = False
    use_memory: bool = False
    use_defaults: bool = True

    def __post_init__(self):
        if self.use_memory and not self.use_llm:
            raise ValueError("dialog memory only makes sense with a model backend")

    @classmethod
    def named(cls, approach: str, situation: str) -> "ApproachConfig":
        try:
            use_llm, use_memory = APPROACHES[approach]
            use_defaults = SITUATIONS[situation]
        except KeyError as exc:
            raise ValueError(f"unknown approach or situation: {exc}") from None
        return cls(use_llm, use_memory, use_defaults)

    @property
    def name(self) -> str:
        return {v: k for k, v in APPROACHES.items()}[(self.use_llm, self.use_memory)]

    @property
    def situation(self) -> str:
        return "with_defaults" if self.use_defaults else "without_defaults"


@dataclass(frozen=True)
class ResolutionPlan:
    object: str
    visit_list: tuple[str, ...]
    deliver_to: Optional[str] = None

    def __post_init__(self):
        if not self.visit_list:
            raise ValueError("a plan needs at least one place to visit")
        if len(set(self.visit_list)) != len(self.visit_list):
            raise ValueError(f"duplicate visits in plan {self.visit_list}")


@dataclass(frozen=True)
class InquiryEvent:
    kind: str
    question: str
    answer: str


class User(Protocol):
    def ask(self, inquiry: Inquiry) -> str: ...


def _ask(user: User, inquiry: Inquiry, events: list[InquiryEvent]) -> str:
    answer = user.ask(inquiry)
    events.append(InquiryEvent(inquiry.kind, inquiry.question, answer))
    return answer


def resolve_object(
    store: OntologyStore, user: User, term: str, events: Optional[list[InquiryEvent]] = None
) -> str:
    events = [] if events is None else events
    resolution = classify_term(store, term)
    if isinstance(resolution, ConcreteObject):
        return resolution.name
    if isinstance(resolution, AmbiguousClass):
        inquiry = Inquiry(
            "object_preference",
            resolution.name,
            f"Which {term} would you like? I know of: {', '.join(resolution.members)}.",
            resolution.members,
        )
    else:
        inquiry = Inquiry(
            "object_preference", resolution.term, f"I don't know what '{term}' is. Which object do you mean?"
        )
    answer = store.canonical(_ask(user, inquiry, events))
    if answer not in store.object_index:
        raise UnresolvableObjectError(f"could not resolve {term!r}; user answered {answer!r}")
    return answer


def _ask_location(
    store: OntologyStore, user: User, obj: str, question: str, events: list[InquiryEvent]
) -> str:
    answer = normalize_name(_ask(user, Inquiry("location", obj, question), events))
    if not store.is_furniture(answer):
        raise UnresolvableLocationError(f"user location {answer!r} for {obj!r} is not known furniture")
    return answer


@dataclass
class LocationResolution:
    plan: ResolutionPlan
    events: list[InquiryEvent]
    source: str  # "ontology", "llm" or "user"
    trace: list[dict[str, Any]] = field(default_factory=list)


def resolve_location(
    store: OntologyStore,
    session: Optional[ChatSession],
    user: User,
    obj: str,
    approach: ApproachConfig,
    config: VerificationConfig = VerificationConfig(),
) -> LocationResolution:
    events: list[InquiryEvent] = []
    defaults = default_locations(store, obj) if approach.use_defaults else None
    where_question = f"Where can I find the {obj}?"

    if defaults is not None and len(defaults) == 1:
        return LocationResolution(ResolutionPlan(obj, tuple(defaults)), events, "ontology")

    if not approach.use_llm or session is None:
        answer = _ask_location(store, user, obj, where_question, events)
        return LocationResolution(ResolutionPlan(obj, (answer,)), events, "user")

    session.memory.enabled = approach.use_memory
    if defaults:
        label = InquiryLabel.MULTIPLE_POS
        inquiry = render_inquiry(label, Bindings(object_name=obj, position_list=defaults))
    else:
        label = InquiryLabel.GENERAL_POS
        inquiry = render_inquiry(label, Bindings(object_name=obj))
    try:
        raw = session.ask(inquiry, label.value, obj).text
        outcome = verify_locations(store, session, obj, raw, defaults, config)
        trace = outcome.trace
    except BackendError as exc:
        logger.info("model inquiry for %s failed: %s", obj, exc)
        outcome, trace = None, [{"step": "backend_error", "error": repr(exc)}]

    if outcome is not None and outcome.found:
        return LocationResolution(ResolutionPlan(obj, outcome.locations), events, "llm", trace)
    answer = _ask_location(store, user, obj, where_question, events)
    return LocationResolution(ResolutionPlan(obj, (answer,)), events, "user", trace)


def handle_search_failure(
    store: OntologyStore,
    user: User,
    obj: str,
    exhausted_plan,
    events: Optional[list[InquiryEvent]] = None,
) -> ResolutionPlan:
    """Ask the user where to look after every stop of ``exhausted_plan`` came up empty.

    ``exhausted_plan`` is a ResolutionPlan or a bare sequence of visited furniture.
    """
    visited = tuple(getattr(exhausted_plan, "visit_list", exhausted_plan or ()))
    if not visited:
        raise ValueError("search failure handling needs the plan that was just exhausted")
    events = [] if events is None else events
    question = f"I could not find the {obj} at {', '.join(visited)}. Where should I look?"
    answer = _ask_location(store, user, obj, question, events)
    return ResolutionPlan(obj, (answer,), getattr(exhausted_plan, "deliver_to", None))


class EpisodeLog:
    """Structured event records for one episode, serializable as NDJSON."""

    def __init__(self, episode_id: str = ""):
        self.episode_id = episode_id
        self.records: list[dict[str, Any]] = []

    def emit(self, event: str, t: float, **payload: Any) -> None:
        self.records.append({"episode": self.episode_id, "event": event, "t": round(t, 6), "payload": payload})

    def to_ndjson(self) -> str:
        return "".join(json.dumps(r, sort_keys=True, default=str) + "\n" for r in self.records)


@dataclass
class EpisodeResult:
    command: str
    approach: str
    situation: str
    success: bool
    time_s: float
    inquiries: list[InquiryEvent]
    visits: int
    llm_calls: int
    llm_time_s: float
    tokens: int
    verb: Optional[Verb] = None
    object: Optional[str] = None
    plans: list[tuple[str, ...]] = field(default_factory=list)
    found_at: Optional[str] = None
    failure: Optional[str] = None
    log: EpisodeLog = field(default_factory=EpisodeLog)

    @property
    def n_inquiries(self) -> int:
        return len(self.inquiries)


def run_episode(
    world: WorldState,
    store: OntologyStore,
    session: Optional[ChatSession],
    user: User,
    approach: ApproachConfig,
    command_text: str,
    perception: Optional[PerceptionModel] = None,
    config: VerificationConfig = VerificationConfig(),
    log: Optional[EpisodeLog] = None,
    max_fallback_rounds: int = MAX_FALLBACK_ROUNDS,
) -> EpisodeResult:
    """Execute one command end to end. Failures are recorded on the result, never raised."""
    perception = perception or PerceptionModel(1.0)
    log = log or EpisodeLog()
    robot = RobotState(world.initial_position)
    events: list[InquiryEvent] = []
    plans: list[tuple[str, ...]] = []
    visits = 0
    found_at = None
    failure = None
    command = None
    obj = None

    def llm_time() -> float:
        return session.total_latency if session is not None else 0.0

    def clock() -> float:
        return robot.odometer + llm_time()

    logged = {"events": 0, "calls": 0}

    def flush() -> None:
        for event in events[logged["events"]:]:
            log.emit("inquiry", clock(), kind=event.kind, question=event.question, answer=event.answer)
        logged["events"] = len(events)
        calls = session.calls if session is not None else []
        for call in calls[logged["calls"]:]:
            log.emit(
                "llm_call", clock(), label=call.label, object=call.object, room=call.room,
                history_turns=call.history_turns, tokens=call.generated_tokens, error=call.error,
            )
        logged["calls"] = len(calls)

    log.emit("command", 0.0, text=command_text, approach=approach.name, situation=approach.situation)
    try:
        command = parse_command(command_text)
        obj = resolve_object(store, user, command.object_term, events)
        flush()
        log.emit("object_resolved", clock(), term=command.object_term, object=obj)

        resolution = resolve_location(store, session, user, obj, approach, config)
        events.extend(resolution.events)
        flush()
        for step in resolution.trace:
            log.emit("verification", clock(), **step)
        deliver_to = world.delivery_point if command.verb is Verb.BRING else None
        plan = ResolutionPlan(obj, resolution.plan.visit_list, deliver_to)
        log.emit("plan", clock(), source=resolution.source, visit_list=list(plan.visit_list))

        rounds = 0
        while True:
            plans.append(plan.visit_list)
            outcome = execute_plan(world, robot, plan, obj, perception, grasp=command.verb is not Verb.FIND)
            visits += len(outcome.visits)
            for v in outcome.visits:
                log.emit("visit", v.arrived_at + llm_time(), furniture=v.furniture, detected=v.detected)
            if outcome.success:
                found_at = outcome.found_at
                if outcome.grasped:
                    log.emit("grasp", clock(), object=obj, at=found_at)
                if outcome.delivered:
                    log.emit("deliver", clock(), object=obj, to=deliver_to)
                break
            if rounds >= max_fallback_rounds:
                failure = "object not found"
                break
            rounds += 1
            plan = handle_search_failure(store, user, obj, plan, events)
            flush()
            log.emit("fallback", clock(), round=rounds, visit_list=list(plan.visit_list))
    except (CommandParseError, UnresolvableObjectError, UnresolvableLocationError) as exc:
        failure = f"{type(exc).__name__}: {exc}"

    flush()
    calls = session.calls if session is not None else []
    success = found_at is not None and failure is None
    log.emit("result", clock(), success=success, found_at=found_at, failure=failure)
    return EpisodeResult(
        command=command_text,
        approach=approach.name,
        situation=approach.situation,
        success=success,
        time_s=clock(),
        inquiries=events,
        visits=visits,
        llm_calls=len(calls),
        llm_time_s=llm_time(),
        tokens=sum(c.generated_tokens for c in calls),
        verb=command.verb if command else None,
        object=obj,
        plans=plans,
        found_at=found_at,
        failure=failure,
        log=log,
    )

"""Consistency verification of model-proposed locations against the ontology.

A reply goes through three stages: parse the structured output (asking the
model to summarize into the required format if it answered in prose), split
the names into rooms, furniture and unknowns, then ground everything to
existing furniture.  Rooms are expanded by asking the model which of the
room's furniture is most likely.  Whatever cannot be grounded is dropped;
an empty result is reported as not found.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

from pydantic import ValidationError

from .kb import OntologyStore, furniture_in_room, normalize_name
from .llm import BackendError, ChatSession
from .prompts import Bindings, InquiryLabel, LocationOutputSchema, render_inquiry

logger = logging.getLogger(__name__)

NOT_FOUND = "not_found"


class UnparseableOutputError(ValueError):
    pass


@dataclass(frozen=True)
class VerificationConfig:
    max_summarize_retries: int = 1
    max_again_retries: int = 1
    top_k_furniture: int = 3
    top_k_general: int = 5

    def __post_init__(self):
        if self.max_summarize_retries < 0 or self.max_again_retries < 0:
            raise ValueError("retry counts must be >= 0")
        if self.top_k_furniture <= 0 or self.top_k_general <= 0:
            raise ValueError("top-k values must be positive")

    def max_backend_calls(self, n_rooms: int) -> int:
        """Upper bound on calls for one verification, counting the original inquiry."""
        per_pass = 1 + self.max_summarize_retries + n_rooms * (1 + self.max_summarize_retries)
        return per_pass * (1 + self.max_again_retries)


@dataclass(frozen=True)
class NamePartition:
    rooms: tuple[str, ...] = ()
    furniture: tuple[str, ...] = ()
    unknown: tuple[str, ...] = ()


@dataclass
class VerificationOutcome:
    locations: tuple[str, ...]
    trace: list[dict[str, Any]] = field(default_factory=list)

    @property
    def found(self) -> bool:
        return bool(self.locations)

    @property
    def label(self) -> str:
        return "found" if self.found else NOT_FOUND


_FENCE = re.compile(r"```(?:json)?\s*(.*?)```", re.S)
_OBJECT = re.compile(r"\{.*\}", re.S)


def parse_location_list(raw: str, schema: LocationOutputSchema = LocationOutputSchema()) -> Optional[list[str]]:
    """Names from a schema-conformant reply, or None if no valid JSON object is found.

    Models often wrap the JSON in a code fence or a sentence, so the first
    fenced block and the outermost brace span are tried after the raw text.
    """
    candidates = [raw.strip()]
    candidates += [m.strip() for m in _FENCE.findall(raw)]
    span = _OBJECT.search(raw)
    if span:
        candidates.append(span.group(0))
    model = schema.model()
    for text in candidates:
        try:
            parsed = model.model_validate(json.loads(text), strict=True)
        except (json.JSONDecodeError, ValidationError, TypeError, RecursionError):
            continue
        names = [normalize_name(n) for n in getattr(parsed, schema.field_name)]
        return [n for n in names if n]
    return None


def preprocess(
    raw: str,
    session: ChatSession,
    obj: str,
    config: VerificationConfig = VerificationConfig(),
    schema: LocationOutputSchema = LocationOutputSchema(),
    room: str = "",
) -> list[str]:
    names = parse_location_list(raw, schema)
    attempts = 0
    while names is None:
        if attempts >= config.max_summarize_retries:
            raise UnparseableOutputError(f"no structured output after {attempts} summarize retries")
        attempts += 1
        inquiry = render_inquiry(InquiryLabel.SUMMARIZE, Bindings(object_name=obj, situation="locations"))
        raw = session.ask(inquiry, InquiryLabel.SUMMARIZE.value, obj, room).text
        names = parse_location_list(raw, schema)
    return names


def classify_names(store: OntologyStore, names: Sequence[str]) -> NamePartition:
    rooms: list[str] = []
    furniture: list[str] = []
    unknown: list[str] = []
    seen = set()
    for name in names:
        if name in seen:
            continue
        seen.add(name)
        if store.is_room(name):
            rooms.append(name)
        elif store.is_furniture(name):
            furniture.append(name)
        else:
            unknown.append(name)
    return NamePartition(tuple(rooms), tuple(furniture), tuple(unknown))


def expand_room(
    store: OntologyStore,
    session: ChatSession,
    obj: str,
    room: str,
    config: VerificationConfig = VerificationConfig(),
    schema: LocationOutputSchema = LocationOutputSchema(),
) -> list[str]:
    """Up to top_k furniture of ``room`` that the model ranks likely for ``obj``."""
    options = furniture_in_room(store, room)
    if not options:
        return []
    inquiry = render_inquiry(
        InquiryLabel.FURNITURE, Bindings(object_name=obj, room_name=room, furniture_list=options)
    )
    try:
        raw = session.ask(inquiry, InquiryLabel.FURNITURE.value, obj, room).text
        names = preprocess(raw, session, obj, config, schema, room=room)
    except (BackendError, UnparseableOutputError) as exc:
        logger.info("room expansion for %s failed: %s", room, exc)
        return []
    picked: list[str] = []
    for name in names:
        if name in options and name not in picked:
            picked.append(name)
        if len(picked) == config.top_k_furniture:
            break
    return picked


def _ground(
    store: OntologyStore,
    session: ChatSession,
    obj: str,
    raw: str,
    defaults: Optional[Sequence[str]],
    config: VerificationConfig,
    schema: LocationOutputSchema,
    trace: list[dict[str, Any]],
) -> list[str]:
    step: dict[str, Any] = {"step": "ground", "raw": raw}
    trace.append(step)
    try:
        names = preprocess(raw, session, obj, config, schema)
    except UnparseableOutputError as exc:
        step["error"] = str(exc)
        return []
    step["names"] = names
    part = classify_names(store, names)
    # Keep the model's top-k places, counted over names that exist.
    known = [n for n in dict.fromkeys(names) if store.is_room(n) or store.is_furniture(n)]
    known = set(known[: config.top_k_general])
    rooms = [r for r in part.rooms if r in known]
    direct = [f for f in part.furniture if f in known]
    step["partition"] = {"rooms": rooms, "furniture": direct, "unknown": list(part.unknown)}

    expansions: dict[str, list[str]] = {}
    for room in rooms:
        expansions[room] = expand_room(store, session, obj, room, config, schema)
    step["expansions"] = expansions

    candidates = list(dict.fromkeys(direct + [f for r in rooms for f in expansions[r]]))
    if defaults is not None:
        allowed = set(defaults)
        candidates = [c for c in candidates if c in allowed]
    step["candidates"] = candidates
    return candidates


def verify_locations(
    store: OntologyStore,
    session: ChatSession,
    obj: str,
    raw: str,
    defaults: Optional[Sequence[str]] = None,
    config: VerificationConfig = VerificationConfig(),
    schema: LocationOutputSchema = LocationOutputSchema(),
) -> VerificationOutcome:
    """Ground a reply to an existence-checked furniture list, or report not found.

    ``raw`` is the model's reply to the general_pos or multiple_pos inquiry.
    Backend failures never escape; they end the pipeline with not found.
    """
    trace: list[dict[str, Any]] = []
    try:
        candidates = _ground(store, session, obj, raw, defaults, config, schema, trace)
        again = 0
        while not candidates and again < config.max_again_retries:
            again += 1
            inquiry = render_inquiry(InquiryLabel.AGAIN)
            raw = session.ask(inquiry, InquiryLabel.AGAIN.value, obj).text
            candidates = _ground(store, session, obj, raw, defaults, config, schema, trace)
    except BackendError as exc:
        trace.append({"step": "backend_error", "error": repr(exc)})
        candidates = []
    outcome = VerificationOutcome(tuple(candidates), trace)
    trace.append({"step": "outcome", "label": outcome.label, "locations": list(outcome.locations)})
    return outcome

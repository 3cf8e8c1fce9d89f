"""System prompt construction and inquiry templates."""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib.resources import files
from typing import Optional, Sequence

from pydantic import BaseModel, create_model

from .kb import OntologyStore


class InquiryLabel(str, Enum):
    GENERAL_POS = "general_pos"
    MULTIPLE_POS = "multiple_pos"
    FURNITURE = "furniture"
    AGAIN = "again"
    SUMMARIZE = "summarize"


class BindingError(ValueError):
    def __init__(self, label: InquiryLabel, missing: str):
        super().__init__(f"{label.value} inquiry needs binding {missing!r}")
        self.label = label
        self.missing = missing


@dataclass(frozen=True)
class Bindings:
    object_name: Optional[str] = None
    position_list: Optional[Sequence[str]] = None
    room_name: Optional[str] = None
    furniture_list: Optional[Sequence[str]] = None
    situation: Optional[str] = "locations"


# placeholder -> Bindings attribute
_PLACEHOLDERS = {
    "#object name": "object_name",
    "#position": "position_list",
    "#room name": "room_name",
    "#furniture list": "furniture_list",
    "#situation": "situation",
}

_REQUIRED = {
    InquiryLabel.GENERAL_POS: ("object_name",),
    InquiryLabel.MULTIPLE_POS: ("object_name", "position_list"),
    InquiryLabel.FURNITURE: ("object_name", "room_name", "furniture_list"),
    InquiryLabel.AGAIN: (),
    InquiryLabel.SUMMARIZE: ("object_name", "situation"),
}


@lru_cache(maxsize=None)
def load_templates() -> dict[InquiryLabel, str]:
    raw = json.loads(files("bringme.data").joinpath("templates.json").read_text("utf-8"))
    if set(raw) != {label.value for label in InquiryLabel}:
        raise ValueError(f"template file labels {sorted(raw)} do not match the inquiry label set")
    return {InquiryLabel(k): v for k, v in raw.items()}


def render_inquiry(label: InquiryLabel, bindings: Bindings = Bindings()) -> str:
    label = InquiryLabel(label)
    for attr in _REQUIRED[label]:
        value = getattr(bindings, attr)
        if not value:
            raise BindingError(label, attr)
    text = load_templates()[label]
    for placeholder, attr in _PLACEHOLDERS.items():
        if placeholder not in text:
            continue
        value = getattr(bindings, attr)
        rendered = value if isinstance(value, str) else ", ".join(value)
        text = text.replace(placeholder, rendered)
    return text


@dataclass(frozen=True)
class LocationOutputSchema:
    """Structured model output: one field holding a likelihood-ordered list of names."""

    field_name: str = "position_list"

    def model(self) -> type[BaseModel]:
        return _location_model(self.field_name)

    def json_schema(self) -> dict:
        return self.model().model_json_schema()


@lru_cache(maxsize=None)
def _location_model(field_name: str) -> type[BaseModel]:
    return create_model("LocationList", **{field_name: (list[str], ...)})


def schema_instruction(schema: LocationOutputSchema = LocationOutputSchema()) -> str:
    example = '{"%s": [...]}' % schema.field_name
    return (
        "The output should be formatted as a JSON instance that conforms to the JSON schema below.\n"
        f"{json.dumps(schema.json_schema(), sort_keys=True)}\n"
        f'Answer with JSON only, for example {example}. The field "{schema.field_name}" '
        "is a list of room or furniture names ordered from most to least likely. "
        "Do not add any other text."
    )


def build_system_prompt(store: OntologyStore, schema: LocationOutputSchema = LocationOutputSchema()) -> str:
    lines = [
        "You are a household service robot assistant. You help a robot decide where to look "
        "for objects in the house described below. Only use the rooms and furniture listed here.",
        "",
        "Rooms: " + ", ".join(store.rooms),
        "Furniture: " + ", ".join(store.furniture),
        "",
        "Furniture locations (furniture: room):",
    ]
    lines.extend(f"{f.name}: {f.room}" for f in store.furniture.values())
    lines.append("")
    lines.append(schema_instruction(schema))
    return "\n".join(lines)

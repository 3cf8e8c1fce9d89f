"""Ontological knowledge base: rooms, furniture, object classes, default locations.

The store is loaded once from a JSON document and is read-only afterwards.
Every list it hands back keeps the declaration order of the source document,
since default-location lists are ordered by likelihood.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Any, Mapping, Optional, Union

__all__ = [
    "OntologyError",
    "UnknownEntityError",
    "Furniture",
    "ObjectClass",
    "OntologyStore",
    "ConcreteObject",
    "AmbiguousClass",
    "Unknown",
    "normalize_name",
    "load_ontology",
    "dump_ontology",
    "furniture_in_room",
    "default_locations",
    "classify_term",
]


class OntologyError(ValueError):
    """The ontology document violates the schema or a store invariant."""

    def __init__(self, message: str, name: Optional[str] = None):
        super().__init__(message)
        self.name = name


class UnknownEntityError(LookupError):
    def __init__(self, kind: str, name: str):
        super().__init__(f"unknown {kind}: {name!r}")
        self.kind = kind
        self.name = name


_SEPARATORS = re.compile(r"[\s\-]+")


def normalize_name(raw: str) -> str:
    """Lowercase snake_case form used for every comparison in the package."""
    return _SEPARATORS.sub("_", raw.strip().lower()).strip("_")


@dataclass(frozen=True)
class Furniture:
    name: str
    room: str


@dataclass(frozen=True)
class ObjectClass:
    name: str
    members: tuple[str, ...]
    # None means "no defaults recorded", which is not the same as an empty list.
    default_locations: Optional[tuple[str, ...]] = None


@dataclass(frozen=True)
class OntologyStore:
    rooms: tuple[str, ...]
    furniture: Mapping[str, Furniture]
    classes: Mapping[str, ObjectClass]
    object_index: Mapping[str, str]
    synonyms: Mapping[str, str] = field(default_factory=dict)

    @property
    def furniture_names(self) -> tuple[str, ...]:
        return tuple(self.furniture)

    @property
    def objects(self) -> tuple[str, ...]:
        return tuple(self.object_index)

    def is_room(self, name: str) -> bool:
        return name in self.rooms

    def is_furniture(self, name: str) -> bool:
        return name in self.furniture

    def room_of(self, furniture: str) -> str:
        try:
            return self.furniture[furniture].room
        except KeyError:
            raise UnknownEntityError("furniture", furniture) from None

    def canonical(self, term: str) -> str:
        """Normalize a term and map it through the synonym table."""
        name = normalize_name(term)
        return self.synonyms.get(name, name)


@dataclass(frozen=True)
class ConcreteObject:
    name: str


@dataclass(frozen=True)
class AmbiguousClass:
    name: str
    members: tuple[str, ...]


@dataclass(frozen=True)
class Unknown:
    term: str


TermResolution = Union[ConcreteObject, AmbiguousClass, Unknown]


def _section(doc: Mapping[str, Any], key: str) -> list:
    value = doc.get(key, [])
    if not isinstance(value, list):
        raise OntologyError(f"section {key!r} must be a list")
    return value


def _entity(raw: Any, kind: str) -> str:
    if not isinstance(raw, str) or not raw.strip():
        raise OntologyError(f"{kind} name must be a non-empty string, got {raw!r}")
    return normalize_name(raw)


def load_ontology(source: Union[str, Path, Mapping[str, Any]]) -> OntologyStore:
    """Build a store from a JSON document, a path to one, or an already-parsed dict.

    Raises OntologyError naming the offending entity on any invariant breach.
    """
    if isinstance(source, Mapping):
        doc = source
    else:
        text = Path(source).read_text(encoding="utf-8") if isinstance(source, Path) else source
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise OntologyError(f"ontology is not valid JSON: {exc}") from exc
    if not isinstance(doc, Mapping):
        raise OntologyError("ontology document must be a JSON object")
    unknown_sections = set(doc) - {"rooms", "furniture", "classes", "synonyms"}
    if unknown_sections:
        raise OntologyError(f"unknown sections: {sorted(unknown_sections)}")

    rooms: list[str] = []
    for raw in _section(doc, "rooms"):
        name = _entity(raw, "room")
        if name in rooms:
            raise OntologyError(f"duplicate room {name!r}", name)
        rooms.append(name)

    furniture: dict[str, Furniture] = {}
    for entry in _section(doc, "furniture"):
        if not isinstance(entry, Mapping) or set(entry) != {"name", "room"}:
            raise OntologyError(f"furniture entry must be {{name, room}}, got {entry!r}")
        name = _entity(entry["name"], "furniture")
        room = _entity(entry["room"], "room")
        if name in furniture:
            raise OntologyError(f"duplicate furniture {name!r}", name)
        if name in rooms:
            raise OntologyError(f"{name!r} is declared both as room and furniture", name)
        if room not in rooms:
            raise OntologyError(f"furniture {name!r} references undeclared room {room!r}", room)
        furniture[name] = Furniture(name, room)

    classes: dict[str, ObjectClass] = {}
    object_index: dict[str, str] = {}
    for entry in _section(doc, "classes"):
        if not isinstance(entry, Mapping) or not {"name", "members"} <= set(entry):
            raise OntologyError(f"class entry needs name and members, got {entry!r}")
        extra = set(entry) - {"name", "members", "default_locations"}
        if extra:
            raise OntologyError(f"class entry has unknown keys {sorted(extra)}")
        cname = _entity(entry["name"], "class")
        if cname in classes:
            raise OntologyError(f"duplicate class {cname!r}", cname)
        raw_members = entry["members"]
        if not isinstance(raw_members, list) or not raw_members:
            raise OntologyError(f"class {cname!r} needs a non-empty member list", cname)
        members: list[str] = []
        for raw in raw_members:
            obj = _entity(raw, "object")
            if obj in object_index:
                raise OntologyError(
                    f"object {obj!r} listed in both {object_index[obj]!r} and {cname!r}", obj
                )
            object_index[obj] = cname
            members.append(obj)

        defaults = None
        if entry.get("default_locations") is not None:
            raw_defaults = entry["default_locations"]
            if not isinstance(raw_defaults, list) or not raw_defaults:
                raise OntologyError(
                    f"class {cname!r}: default_locations must be a non-empty list when present",
                    cname,
                )
            seen: list[str] = []
            for raw in raw_defaults:
                loc = _entity(raw, "furniture")
                if loc not in furniture:
                    raise OntologyError(
                        f"class {cname!r}: default location {loc!r} is not declared furniture", loc
                    )
                if loc in seen:
                    raise OntologyError(f"class {cname!r}: duplicate default location {loc!r}", loc)
                seen.append(loc)
            defaults = tuple(seen)
        classes[cname] = ObjectClass(cname, tuple(members), defaults)

    synonyms: dict[str, str] = {}
    raw_synonyms = doc.get("synonyms", {})
    if not isinstance(raw_synonyms, Mapping):
        raise OntologyError("section 'synonyms' must be an object")
    for raw_term, raw_target in raw_synonyms.items():
        term = _entity(raw_term, "synonym")
        target = _entity(raw_target, "synonym target")
        if target not in object_index and target not in classes:
            raise OntologyError(f"synonym {term!r} points at unknown name {target!r}", target)
        if term in object_index or term in classes:
            raise OntologyError(f"synonym {term!r} shadows a declared name", term)
        synonyms[term] = target

    return OntologyStore(
        rooms=tuple(rooms),
        furniture=MappingProxyType(furniture),
        classes=MappingProxyType(classes),
        object_index=MappingProxyType(object_index),
        synonyms=MappingProxyType(synonyms),
    )


def dump_ontology(store: OntologyStore) -> dict[str, Any]:
    """Inverse of load_ontology: the JSON-ready document for a store."""
    classes = []
    for cls in store.classes.values():
        entry: dict[str, Any] = {"name": cls.name, "members": list(cls.members)}
        if cls.default_locations is not None:
            entry["default_locations"] = list(cls.default_locations)
        classes.append(entry)
    doc: dict[str, Any] = {
        "rooms": list(store.rooms),
        "furniture": [{"name": f.name, "room": f.room} for f in store.furniture.values()],
        "classes": classes,
    }
    if store.synonyms:
        doc["synonyms"] = dict(store.synonyms)
    return doc


def furniture_in_room(store: OntologyStore, room: str) -> list[str]:
    room = normalize_name(room)
    if room not in store.rooms:
        raise UnknownEntityError("room", room)
    return [f.name for f in store.furniture.values() if f.room == room]


def default_locations(store: OntologyStore, obj: str) -> Optional[list[str]]:
    """Default furniture list for an object's class, or None if the class has none."""
    name = store.canonical(obj)
    cls_name = store.object_index.get(name)
    if cls_name is None:
        raise UnknownEntityError("object", name)
    defaults = store.classes[cls_name].default_locations
    return None if defaults is None else list(defaults)


def classify_term(store: OntologyStore, term: str) -> TermResolution:
    name = store.canonical(term)
    if name in store.object_index:
        return ConcreteObject(name)
    cls = store.classes.get(name)
    if cls is not None and len(cls.members) == 1:
        # nothing to choose between
        return ConcreteObject(cls.members[0])
    if cls is not None and cls.members:
        return AmbiguousClass(cls.name, cls.members)
    return Unknown(name)


def load_fixture_ontology() -> OntologyStore:
    """The household ontology bundled with the package."""
    from importlib.resources import files

    return load_ontology(files("bringme.data").joinpath("ontology.json").read_text("utf-8"))

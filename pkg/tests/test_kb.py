import json

import pytest
from hypothesis import given, strategies as st

from bringme.kb import (
    AmbiguousClass,
    ConcreteObject,
    OntologyError,
    Unknown,
    UnknownEntityError,
    classify_term,
    default_locations,
    dump_ontology,
    furniture_in_room,
    load_ontology,
    normalize_name,
)

# Default-location table for object classes, transcribed from the survey data.
TABLE_DEFAULTS = {
    "mug": ["dining_table", "coffee_table", "counter_wagon"],
    "cracker_box": ["cabinet_kitchen", "dining_table", "coffee_table", "counter_wagon"],
    "apple": ["dining_table", "counter_wagon", "high_table"],
    "mustard_bottle": ["cabinet_kitchen", "dining_table", "counter_wagon", "high_table"],
    "spatula": ["cabinet_kitchen", "counter_wagon", "high_table"],
    "power_drill": ["shelf_lobby"],
    "pitcher_base": ["cabinet_kitchen", "dining_table", "counter_wagon", "high_table"],
    "tennis_ball": ["shelf_lobby"],
    "pudding_box": ["cabinet_kitchen", "dining_table", "coffee_table", "counter_wagon"],
    "colored_wood_blocks": None,
    "bleach_cleanser": ["cabinet_kitchen", "counter_wagon"],
    "potted_meat_can": ["cabinet_kitchen", "counter_wagon", "high_table"],
    "tomato_soup_can": ["cabinet_kitchen", "counter_wagon", "high_table"],
    "sugar_box": ["cabinet_kitchen", "counter_wagon", "high_table"],
    "hammer": ["shelf_lobby"],
    "adjustable_wrench": ["shelf_lobby", "sideboard"],
    "scissors": ["sideboard", "desk"],
}

# Distinct names of the object set (item 15 is printed twice).
OBJECT_SET = {
    "apple", "adjustable_wrench", "banana", "bleach_cleanser", "colored_wood_blocks",
    "cracker_box", "hammer", "orange", "mug", "mustard_bottle", "peach", "pear",
    "pitcher_base", "potted_meat_can", "power_drill", "pudding_box", "scissors",
    "spatula", "strawberry", "sugar_box", "tennis_ball", "tomato_soup_can",
}


def minimal_doc(**overrides):
    doc = {
        "rooms": ["kitchen", "hall"],
        "furniture": [{"name": "table", "room": "kitchen"}],
        "classes": [{"name": "cup", "members": ["cup"], "default_locations": ["table"]}],
    }
    doc.update(overrides)
    return doc


def test_fixture_counts(store):
    assert len(store.rooms) == 4
    assert len(store.furniture) == 10
    assert set(store.objects) == OBJECT_SET


@pytest.mark.parametrize("obj, expected", sorted(TABLE_DEFAULTS.items()))
def test_default_locations_match_table(store, obj, expected):
    assert default_locations(store, obj) == expected


def test_colored_wood_blocks_has_no_defaults_not_empty_list(store):
    assert default_locations(store, "colored_wood_blocks") is None


def test_default_locations_unknown_object(store):
    with pytest.raises(UnknownEntityError):
        default_locations(store, "unicorn")


def test_furniture_in_room(store):
    assert furniture_in_room(store, "kitchen") == ["cabinet_kitchen", "counter_wagon", "high_table", "dining_table"]
    assert furniture_in_room(store, "lobby") == ["shelf_lobby"]
    with pytest.raises(UnknownEntityError):
        furniture_in_room(store, "spaceship")


def test_empty_room_gives_empty_list():
    store = load_ontology(minimal_doc())
    assert furniture_in_room(store, "hall") == []


def test_classify_term(store):
    assert classify_term(store, "apple") == ConcreteObject("apple")
    fruit = classify_term(store, "fruit")
    assert isinstance(fruit, AmbiguousClass)
    assert set(fruit.members) == {"apple", "banana", "orange", "peach", "pear", "strawberry"}
    assert classify_term(store, "unicorn") == Unknown("unicorn")
    assert classify_term(store, "pitcher") == ConcreteObject("pitcher_base")
    assert classify_term(store, "Power Drill") == ConcreteObject("power_drill")
    assert classify_term(store, "ball") == ConcreteObject("tennis_ball")


def test_dangling_room_reference():
    doc = minimal_doc(furniture=[{"name": "desk", "room": "garage"}], classes=[])
    with pytest.raises(OntologyError) as err:
        load_ontology(doc)
    assert err.value.name == "garage"


def test_object_in_two_classes():
    doc = minimal_doc(classes=[
        {"name": "fruits", "members": ["apple"]},
        {"name": "snacks", "members": ["apple", "chips"]},
    ])
    with pytest.raises(OntologyError) as err:
        load_ontology(doc)
    assert err.value.name == "apple"


@pytest.mark.parametrize("doc", [
    minimal_doc(rooms=["kitchen", "kitchen"]),
    minimal_doc(furniture=[{"name": "kitchen", "room": "kitchen"}]),
    minimal_doc(furniture=[{"name": "table", "room": "kitchen"}, {"name": "table", "room": "hall"}]),
    minimal_doc(classes=[{"name": "cup", "members": ["cup"], "default_locations": []}]),
    minimal_doc(classes=[{"name": "cup", "members": ["cup"], "default_locations": ["shelf"]}]),
    minimal_doc(classes=[{"name": "cup", "members": ["cup"], "default_locations": ["table", "table"]}]),
    minimal_doc(classes=[{"name": "cup", "members": []}]),
    minimal_doc(extra=[]),
    minimal_doc(synonyms={"mug": "glass"}),
])
def test_invalid_documents(doc):
    with pytest.raises(OntologyError):
        load_ontology(doc)


def test_not_json():
    with pytest.raises(OntologyError):
        load_ontology("{rooms: ")


def test_names_are_normalized():
    doc = minimal_doc(rooms=["Kitchen", "Hall"], furniture=[{"name": "Dining Table", "room": "KITCHEN"}],
                      classes=[{"name": "cup", "members": ["Coffee Cup"], "default_locations": ["dining table"]}])
    store = load_ontology(doc)
    assert store.rooms == ("kitchen", "hall")
    assert default_locations(store, "coffee cup") == ["dining_table"]


def test_round_trip_fixture(store):
    again = load_ontology(json.dumps(dump_ontology(store)))
    assert dump_ontology(again) == dump_ontology(store)
    assert again.rooms == store.rooms
    assert dict(again.furniture) == dict(store.furniture)
    assert dict(again.classes) == dict(store.classes)


name = st.from_regex(r"[a-z][a-z_]{0,8}", fullmatch=True).map(normalize_name).filter(bool)


@st.composite
def ontology_docs(draw):
    names = draw(st.lists(name, min_size=3, max_size=25, unique=True))
    n_rooms = draw(st.integers(1, max(1, len(names) // 3)))
    rooms, rest = names[:n_rooms], names[n_rooms:]
    n_furn = draw(st.integers(0, len(rest) // 2))
    furniture, objects = rest[:n_furn], rest[n_furn:]
    furn = [{"name": f, "room": draw(st.sampled_from(rooms))} for f in furniture]
    classes, i = [], 0
    while i < len(objects):
        k = draw(st.integers(1, 3))
        members = objects[i:i + k]
        entry = {"name": members[0] + "_cls", "members": members}
        if furniture and draw(st.booleans()):
            entry["default_locations"] = draw(st.lists(st.sampled_from(furniture), min_size=1, unique=True))
        classes.append(entry)
        i += k
    return {"rooms": rooms, "furniture": furn, "classes": classes}


@given(ontology_docs())
def test_round_trip_and_invariants(doc):
    store = load_ontology(doc)
    assert dump_ontology(load_ontology(dump_ontology(store))) == dump_ontology(store)
    for f in store.furniture.values():
        assert f.room in store.rooms
    for cls in store.classes.values():
        if cls.default_locations is not None:
            assert set(cls.default_locations) <= set(store.furniture)
    for obj in store.objects:
        assert classify_term(store, obj) == ConcreteObject(obj)
        cls = store.classes[store.object_index[obj]]
        assert (default_locations(store, obj) is None) == (cls.default_locations is None)
    for cls in store.classes.values():
        if cls.name not in store.object_index:
            result = classify_term(store, cls.name)
            assert isinstance(result, AmbiguousClass) == (len(cls.members) >= 2)
            if len(cls.members) == 1:
                assert result == ConcreteObject(cls.members[0])

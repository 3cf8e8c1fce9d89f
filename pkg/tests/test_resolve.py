import json

import pytest
from hypothesis import given, settings, strategies as st

from bringme.llm import CallableBackend, TransportError
from bringme.resolve import (
    APPROACHES,
    SITUATIONS,
    ApproachConfig,
    CommandParseError,
    EpisodeLog,
    ResolutionPlan,
    UnresolvableLocationError,
    UnresolvableObjectError,
    Verb,
    handle_search_failure,
    parse_command,
    resolve_location,
    resolve_object,
    run_episode,
)
from bringme.simworld import Inquiry, PerceptionModel, SimulatedUser

from conftest import as_json, scripted


class RecordingUser:
    """Answers from a fixed mapping (or the truthful user) and remembers every question."""

    def __init__(self, answers=None, fallback=None):
        self.answers = answers or {}
        self.fallback = fallback
        self.asked: list[Inquiry] = []

    def ask(self, inquiry):
        self.asked.append(inquiry)
        if (inquiry.kind, inquiry.subject) in self.answers:
            return self.answers[(inquiry.kind, inquiry.subject)]
        if self.fallback is not None:
            return self.fallback.ask(inquiry)
        raise AssertionError(f"unexpected question {inquiry}")


@pytest.mark.parametrize("text, verb, obj", [
    ("Find an apple.", Verb.FIND, "apple"),
    ("Bring a sugar_box.", Verb.BRING, "sugar_box"),
    ("bring me the mustard bottle!", Verb.BRING, "mustard_bottle"),
    ("  TAKE some peach ", Verb.TAKE, "peach"),
    ("Find a pitcher.", Verb.FIND, "pitcher"),
])
def test_parse_command(text, verb, obj):
    cmd = parse_command(text)
    assert (cmd.verb, cmd.object_term) == (verb, obj)


@pytest.mark.parametrize("text", ["Dance!", "Find.", "", "finder an apple", "Bring me."])
def test_parse_command_errors(text):
    with pytest.raises(CommandParseError):
        parse_command(text)


def test_approach_names():
    for a in APPROACHES:
        for s in SITUATIONS:
            cfg = ApproachConfig.named(a, s)
            assert (cfg.name, cfg.situation) == (a, s)
    with pytest.raises(ValueError):
        ApproachConfig.named("GPT", "with_defaults")
    with pytest.raises(ValueError):
        ApproachConfig(use_llm=False, use_memory=True)


def test_plan_invariants():
    with pytest.raises(ValueError):
        ResolutionPlan("apple", ())
    with pytest.raises(ValueError):
        ResolutionPlan("apple", ("desk", "desk"))


def test_resolve_object_concrete(store):
    events = []
    assert resolve_object(store, RecordingUser(), "apple", events) == "apple"
    assert events == []


def test_resolve_object_class(store, world):
    events = []
    assert resolve_object(store, SimulatedUser.for_world(world), "fruit", events) == "apple"
    assert [e.kind for e in events] == ["object_preference"]


def test_resolve_object_unknown(store):
    events = []
    user = RecordingUser({("object_preference", "unicorn"): "apple"})
    assert resolve_object(store, user, "unicorn", events) == "apple"
    assert len(events) == 1


def test_resolve_object_unresolvable(store):
    user = RecordingUser({("object_preference", "unicorn"): "dragon"})
    with pytest.raises(UnresolvableObjectError):
        resolve_object(store, user, "unicorn")


def test_single_default_fast_path(store, silent_session):
    res = resolve_location(store, silent_session, RecordingUser(), "power_drill",
                           ApproachConfig.named("OKB", "with_defaults"))
    assert res.plan.visit_list == ("shelf_lobby",) and res.events == [] and res.source == "ontology"
    res = resolve_location(store, silent_session, RecordingUser(), "hammer",
                           ApproachConfig.named("OKB+LLM+MEM", "with_defaults"))
    assert res.plan.visit_list == ("shelf_lobby",)
    assert silent_session.n_calls == 0


def test_okb_asks_user_without_defaults(store, world, silent_session):
    res = resolve_location(store, silent_session, SimulatedUser.for_world(world), "colored_wood_blocks",
                           ApproachConfig.named("OKB", "with_defaults"))
    assert res.plan.visit_list == ("bookshelf_bedroom",)
    assert [e.kind for e in res.events] == ["location"]


def test_llm_multiple_pos_keeps_reply_order(store, make_session):
    session = make_session(scripted([
        ({"label": "multiple_pos", "object": "mug"}, as_json("counter_wagon", "dining_table", "coffee_table")),
    ]))
    res = resolve_location(store, session, RecordingUser(), "mug", ApproachConfig.named("OKB+LLM", "with_defaults"))
    assert res.plan.visit_list == ("counter_wagon", "dining_table", "coffee_table")
    assert res.events == []
    assert session.calls[0].label == "multiple_pos"
    assert "dining_table, coffee_table, counter_wagon" in session.calls[0].inquiry


def test_llm_general_pos_without_defaults(store, make_session):
    session = make_session(scripted([({"label": "general_pos"}, as_json("desk", "garage"))]))
    res = resolve_location(store, session, RecordingUser(), "mug", ApproachConfig.named("OKB+LLM", "without_defaults"))
    assert res.plan.visit_list == ("desk",)
    assert session.calls[0].label == "general_pos"


def test_llm_not_found_asks_user(store, world, make_session):
    session = make_session(scripted([({}, as_json("garage"))]))
    res = resolve_location(store, session, SimulatedUser.for_world(world), "mug",
                           ApproachConfig.named("OKB+LLM", "without_defaults"))
    assert res.source == "user" and res.plan.visit_list == (world.placements["mug"],)
    assert len(res.events) == 1


def test_llm_backend_down_asks_user(store, world, make_session):
    def down(request):
        raise TransportError("refused")

    res = resolve_location(store, make_session(CallableBackend(down)), SimulatedUser.for_world(world), "mug",
                           ApproachConfig.named("OKB+LLM", "with_defaults"))
    assert res.source == "user" and len(res.events) == 1


def test_memory_flag_follows_approach(store, make_session):
    session = make_session(scripted([({}, as_json("dining_table"))]), use_memory=True)
    resolve_location(store, session, RecordingUser(), "mug", ApproachConfig.named("OKB+LLM", "with_defaults"))
    assert session.calls[0].history_turns == 0 and session.memory.turns == []


def test_handle_search_failure(store, world):
    user = SimulatedUser.for_world(world)
    plan = handle_search_failure(store, user, "apple", ResolutionPlan("apple", ("cabinet_kitchen",)))
    assert plan.visit_list == ("dining_table",)
    with pytest.raises(ValueError):
        handle_search_failure(store, user, "apple", ())
    with pytest.raises(UnresolvableLocationError):
        handle_search_failure(store, RecordingUser({("location", "apple"): "garage"}), "apple", ["desk"])


def test_episode_okb_without_defaults(store, world):
    result = run_episode(world, store, None, SimulatedUser.for_world(world),
                         ApproachConfig.named("OKB", "without_defaults"), "Find an apple.")
    assert result.success and result.n_inquiries == 1 and result.visits == 1
    assert result.found_at == "dining_table"


def test_episode_single_default(store, world, silent_session):
    result = run_episode(world, store, silent_session, RecordingUser(),
                         ApproachConfig.named("OKB+LLM", "with_defaults"), "Find a power_drill.")
    assert result.success and result.n_inquiries == 0 and result.visits == 1 and result.llm_calls == 0


@pytest.mark.parametrize("approach", list(APPROACHES))
def test_episode_bring_postcondition(store, world, make_session, approach):
    session = make_session(scripted([({}, as_json("cabinet_kitchen", "counter_wagon"))]))
    result = run_episode(world, store, session, SimulatedUser.for_world(world),
                         ApproachConfig.named(approach, "with_defaults"), "Bring a sugar_box.")
    assert result.success
    events = [r["event"] for r in result.log.records]
    assert events.index("grasp") < events.index("deliver")
    deliver = next(r for r in result.log.records if r["event"] == "deliver")
    assert deliver["payload"]["to"] == world.delivery_point


def test_episode_time_includes_grasp_and_model_latency(store, world, make_session):
    session = make_session(scripted([({}, as_json("dining_table"))], latency=1.5))
    result = run_episode(world, store, session, SimulatedUser.for_world(world),
                         ApproachConfig.named("OKB+LLM", "without_defaults"), "Take an apple.")
    assert result.llm_time_s == 1.5
    assert result.time_s == pytest.approx(28 + 5 + 1.5)


def test_episode_fallback_bounded(store, world, make_session):
    session = make_session(scripted([({}, as_json("desk"))]))
    user = RecordingUser({("location", "apple"): "sofa"})
    result = run_episode(world, store, session, user, ApproachConfig.named("OKB+LLM", "without_defaults"),
                         "Find an apple.", max_fallback_rounds=2)
    assert not result.success and result.failure == "object not found"
    assert result.plans == [("desk",), ("sofa",), ("sofa",)]
    assert result.n_inquiries == 2


def test_episode_fallback_recovers(store, world, make_session):
    session = make_session(scripted([({}, as_json("desk", "sofa"))]))
    result = run_episode(world, store, session, SimulatedUser.for_world(world),
                         ApproachConfig.named("OKB+LLM", "without_defaults"), "Find an apple.")
    assert result.success and result.visits == 3 and result.n_inquiries == 1


def test_episode_failures_are_recorded(store, world):
    result = run_episode(world, store, None, SimulatedUser.for_world(world),
                         ApproachConfig.named("OKB", "with_defaults"), "Dance!")
    assert not result.success and "CommandParseError" in result.failure


def test_object_preference_never_reaches_model(store, world, make_session):
    backend = CallableBackend(lambda request: as_json("dining_table", "counter_wagon"))
    session = make_session(backend)
    result = run_episode(world, store, session, SimulatedUser.for_world(world),
                         ApproachConfig.named("OKB+LLM", "without_defaults"), "Take a fruit.")
    assert result.success and result.object == "apple"
    assert [e.kind for e in result.inquiries] == ["object_preference"]
    assert all("Which fruit" not in r.inquiry for r in backend.requests)
    assert all(r.meta["object"] == "apple" for r in backend.requests)


def test_log_is_ndjson_and_chronological(store, world, make_session):
    session = make_session(scripted([({}, as_json("cabinet_kitchen", "dining_table"))]))
    log = EpisodeLog("e1")
    run_episode(world, store, session, SimulatedUser.for_world(world),
                ApproachConfig.named("OKB+LLM", "without_defaults"), "Find an apple.", log=log)
    lines = [json.loads(line) for line in log.to_ndjson().splitlines()]
    assert lines[0]["event"] == "command" and lines[-1]["event"] == "result"
    assert all(line["episode"] == "e1" for line in lines)
    times = [line["t"] for line in lines]
    assert times == sorted(times)


OBJECTS = ["apple", "mug", "sugar_box", "pitcher_base", "hammer", "colored_wood_blocks", "scissors", "peach"]
NAMES = ["cabinet_kitchen", "counter_wagon", "high_table", "dining_table", "coffee_table", "sofa", "sideboard",
         "shelf_lobby", "desk", "bookshelf_bedroom", "kitchen", "bedroom", "garage", "fridge"]


@settings(max_examples=150, deadline=None)
@given(
    obj=st.sampled_from(OBJECTS),
    verb=st.sampled_from(["Find", "Take", "Bring"]),
    approach=st.sampled_from(list(APPROACHES)),
    situation=st.sampled_from(list(SITUATIONS)),
    replies=st.lists(st.lists(st.sampled_from(NAMES), max_size=5), min_size=1, max_size=4),
)
def test_episode_invariants(store, system_prompt, obj, verb, approach, situation, replies):
    from bringme.llm import ChatSession
    from bringme.simworld import load_fixture_world

    world = load_fixture_world()
    queue = iter(replies)
    backend = CallableBackend(lambda request: as_json(*next(queue, replies[-1])))
    session = ChatSession(backend, system_prompt)
    result = run_episode(world, store, session, SimulatedUser.for_world(world),
                         ApproachConfig.named(approach, situation), f"{verb} a {obj}.", PerceptionModel(1.0))
    # a truthful user and perfect perception always succeed
    assert result.success and result.found_at == world.placements[obj]
    assert result.time_s >= 0 and result.visits >= 1
    if approach == "OKB":
        assert result.llm_calls == 0 and result.visits == 1
    for plan in result.plans:
        assert all(store.is_furniture(f) for f in plan)
    assert result.n_inquiries <= 2

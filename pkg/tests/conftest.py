import json

import pytest

from bringme.kb import load_fixture_ontology
from bringme.llm import CallableBackend, ChatSession, ScriptedBackend
from bringme.prompts import build_system_prompt
from bringme.simworld import load_fixture_world


@pytest.fixture(scope="session")
def store():
    return load_fixture_ontology()


@pytest.fixture
def world():
    return load_fixture_world()


@pytest.fixture(scope="session")
def system_prompt(store):
    return build_system_prompt(store)


def as_json(*names):
    return json.dumps({"position_list": list(names)})


def scripted(entries, latency=0.0):
    """ScriptedBackend from (match dict, response) pairs."""
    return ScriptedBackend.from_document(
        [{"match": m, "response": r} for m, r in entries], latency=latency
    )


@pytest.fixture
def make_session(system_prompt):
    def make(backend, use_memory=False):
        return ChatSession(backend, system_prompt, use_memory=use_memory)

    return make


@pytest.fixture
def silent_session(make_session):
    """A session whose backend must never be called."""

    def refuse(request):
        raise AssertionError(f"unexpected backend call: {request.inquiry}")

    return make_session(CallableBackend(refuse))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])

"""Chat-model backends and token-budgeted dialog memory.

Two backends ship here: ``HttpBackend`` speaks the JSON wire protocol to a
model server, and ``ScriptedBackend`` answers from a canned script so that
experiments are reproducible without hosting a model.  ``ChatSession`` ties a
backend to a system prompt and an episode-owned ``DialogMemory``.
"""

from __future__ import annotations

import json
import logging
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Optional, Protocol, Sequence, Union

logger = logging.getLogger(__name__)

ENDPOINT_ENV = "BRINGME_LLM_ENDPOINT"

# Fraction of the half-window that the dialog history may occupy.
CONTEXT_FRACTION = 0.8


class BudgetError(ValueError):
    pass


class OversizedTurnError(ValueError):
    pass


class BackendError(RuntimeError):
    """Base for every failure a backend can report."""


class TransportError(BackendError):
    pass


class TruncatedResponseError(BackendError):
    pass


class BackendTimeout(BackendError):
    pass


class NoScriptMatch(BackendError):
    pass


@dataclass(frozen=True)
class GenerationParams:
    max_seq_len: int = 4096
    max_gen_len: int = 2048
    temperature: float = 0.6
    top_p: float = 0.9

    def __post_init__(self):
        if self.max_seq_len <= 0 or self.max_gen_len <= 0:
            raise ValueError("token limits must be positive")
        if self.max_gen_len > self.max_seq_len:
            raise ValueError("max_gen_len cannot exceed max_seq_len")
        if not 0 < self.temperature <= 2:
            raise ValueError(f"temperature out of range: {self.temperature}")
        if not 0 < self.top_p <= 1:
            raise ValueError(f"top_p out of range: {self.top_p}")


def compute_token_budget(max_seq_len: int, sys_token: int) -> int:
    """History budget: 80% of what is left of half the window after the system prompt."""
    if max_seq_len <= 0 or sys_token < 0:
        raise ValueError("max_seq_len must be positive and sys_token non-negative")
    half = max_seq_len / 2
    if sys_token >= half:
        raise BudgetError(f"system prompt ({sys_token} tokens) leaves no room in {max_seq_len}")
    return math.floor((half - sys_token) * CONTEXT_FRACTION)


def estimate_tokens(text: str) -> int:
    return math.ceil(len(text) / 4)


TokenEstimator = Callable[[str], int]


@dataclass(frozen=True)
class ChatTurn:
    role: str
    text: str
    token_count: int

    def __post_init__(self):
        if self.role not in ("user", "assistant"):
            raise ValueError(f"bad role {self.role!r}")
        if not self.text:
            raise ValueError("turn text must be non-empty")

    @classmethod
    def of(cls, role: str, text: str, estimator: TokenEstimator = estimate_tokens) -> "ChatTurn":
        return cls(role, text, estimator(text))


@dataclass
class DialogMemory:
    budget: int
    enabled: bool = True
    turns: list[ChatTurn] = field(default_factory=list)
    evicted: int = 0

    @property
    def total_tokens(self) -> int:
        return sum(t.token_count for t in self.turns)

    def history(self) -> list[ChatTurn]:
        return list(self.turns) if self.enabled else []


def append_and_trim(memory: DialogMemory, turn: ChatTurn) -> DialogMemory:
    """Append a turn, then drop whole turns from the front until under budget."""
    if turn.token_count > memory.budget:
        raise OversizedTurnError(
            f"turn of {turn.token_count} tokens exceeds memory budget {memory.budget}"
        )
    memory.turns.append(turn)
    while memory.total_tokens > memory.budget:
        memory.turns.pop(0)
        memory.evicted += 1
    return memory


@dataclass(frozen=True)
class BackendRequest:
    system_prompt: str
    turns: tuple[ChatTurn, ...]
    inquiry: str
    params: GenerationParams
    # Routing hints (template label, object, room); never sent over the wire.
    meta: Mapping[str, str] = field(default_factory=dict)

    def to_wire(self) -> dict[str, Any]:
        messages = [{"role": t.role, "text": t.text} for t in self.turns]
        messages.append({"role": "user", "text": self.inquiry})
        return {
            "system": self.system_prompt,
            "messages": messages,
            "max_gen_len": self.params.max_gen_len,
            "temperature": self.params.temperature,
            "top_p": self.params.top_p,
        }


@dataclass(frozen=True)
class BackendResponse:
    text: str
    generated_tokens: int
    latency: float


class Backend(Protocol):
    # True when latency is wall-clock time that belongs in task timings.
    live: bool

    def complete(self, request: BackendRequest) -> BackendResponse: ...

    def fork(self) -> "Backend": ...


class HttpBackend:
    """Client for the JSON-over-HTTP model service."""

    live = True

    def __init__(self, endpoint: str, timeout: float = 120.0, transport=None):
        import httpx

        self.endpoint = endpoint
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def complete(self, request: BackendRequest) -> BackendResponse:
        import httpx

        start = time.perf_counter()
        try:
            resp = self._client.post(self.endpoint, json=request.to_wire())
            resp.raise_for_status()
            body = resp.json()
        except httpx.TimeoutException as exc:
            raise BackendTimeout(str(exc)) from exc
        except (httpx.HTTPError, ValueError) as exc:
            raise TransportError(str(exc)) from exc
        latency = time.perf_counter() - start

        text = body.get("text") if isinstance(body, dict) else None
        if not isinstance(text, str) or not text.strip():
            raise TransportError(f"malformed response body: {body!r}")
        generated = int(body.get("generated_tokens", estimate_tokens(text)))
        if generated >= request.params.max_gen_len:
            raise TruncatedResponseError(f"generation hit max_gen_len={request.params.max_gen_len}")
        return BackendResponse(text, generated, latency)

    def fork(self) -> "HttpBackend":
        return self

    def close(self):
        self._client.close()


@dataclass(frozen=True)
class ScriptEntry:
    label: Optional[str]
    object: Optional[str]
    room: Optional[str]
    responses: tuple[str, ...]

    def specificity(self) -> int:
        return sum(v is not None for v in (self.label, self.object, self.room))

    def matches(self, meta: Mapping[str, str]) -> bool:
        return all(
            want is None or meta.get(key) == want
            for key, want in (("label", self.label), ("object", self.object), ("room", self.room))
        )


class ScriptedBackend:
    """Deterministic backend answering by (template label, object, room).

    Entries leaving a key out act as wildcards; the most specific match wins.
    An entry with a list of responses replays them in order on repeated
    matches and then sticks on the last one.
    """

    live = False

    def __init__(self, entries: Sequence[ScriptEntry], latency: float = 0.0):
        self.entries = list(entries)
        self.latency = latency
        self._hits: dict[int, int] = {}

    @classmethod
    def from_document(cls, doc: Union[str, Path, Sequence[Mapping[str, Any]]], latency: float = 0.0):
        if isinstance(doc, Path):
            doc = json.loads(doc.read_text(encoding="utf-8"))
        elif isinstance(doc, str):
            doc = json.loads(doc)
        entries = []
        for raw in doc:
            match = raw.get("match", {})
            unknown = set(match) - {"label", "object", "room"}
            if unknown:
                raise ValueError(f"unknown match keys {sorted(unknown)}")
            response = raw["response"]
            responses = (response,) if isinstance(response, str) else tuple(response)
            if not responses or not all(isinstance(r, str) and r for r in responses):
                raise ValueError(f"script entry needs non-empty response text: {raw!r}")
            entries.append(ScriptEntry(match.get("label"), match.get("object"), match.get("room"), responses))
        return cls(entries, latency=latency)

    def reset(self):
        self._hits.clear()

    def fork(self) -> "ScriptedBackend":
        """Same script, fresh replay counters; one fork per episode."""
        return ScriptedBackend(self.entries, latency=self.latency)

    def complete(self, request: BackendRequest) -> BackendResponse:
        best = None
        for idx, entry in enumerate(self.entries):
            if entry.matches(request.meta) and (best is None or entry.specificity() > self.entries[best].specificity()):
                best = idx
        if best is None:
            raise NoScriptMatch(f"no script entry for {dict(request.meta)}")
        entry = self.entries[best]
        hit = self._hits.get(best, 0)
        self._hits[best] = hit + 1
        text = entry.responses[min(hit, len(entry.responses) - 1)]
        return BackendResponse(text, estimate_tokens(text), self.latency)


class CallableBackend:
    """Wrap a plain function ``request -> text``; handy in tests."""

    live = False

    def __init__(self, fn: Callable[[BackendRequest], str], latency: float = 0.0):
        self.fn = fn
        self.latency = latency
        self.requests: list[BackendRequest] = []

    def fork(self) -> "CallableBackend":
        return self

    def complete(self, request: BackendRequest) -> BackendResponse:
        self.requests.append(request)
        text = self.fn(request)
        if not text:
            raise TransportError("empty response")
        return BackendResponse(text, estimate_tokens(text), self.latency)


def backend_from_env(script: Union[str, Path, None] = None, latency: float = 0.0, env=None) -> Backend:
    """Live backend when the endpoint variable is set, else the scripted one."""
    env = os.environ if env is None else env
    endpoint = env.get(ENDPOINT_ENV)
    if endpoint:
        return HttpBackend(endpoint)
    if script is None:
        from importlib.resources import files

        script = files("bringme.data").joinpath("script.json").read_text("utf-8")
    elif not isinstance(script, str) or not script.lstrip().startswith("["):
        script = Path(script)
    return ScriptedBackend.from_document(script, latency=latency)


def generate(
    backend: Backend,
    system_prompt: str,
    memory: DialogMemory,
    inquiry: str,
    params: GenerationParams,
    meta: Optional[Mapping[str, str]] = None,
    estimator: TokenEstimator = estimate_tokens,
) -> BackendResponse:
    """One request/response exchange; on success the pair is remembered if memory is on."""
    if not inquiry:
        raise ValueError("inquiry must be non-empty")
    request = BackendRequest(system_prompt, tuple(memory.history()), inquiry, params, dict(meta or {}))
    response = backend.complete(request)
    if memory.enabled:
        asked = ChatTurn.of("user", inquiry, estimator)
        answered = ChatTurn.of("assistant", response.text, estimator)
        if max(asked.token_count, answered.token_count) > memory.budget:
            # Keeping half an exchange would mislead the model; drop both.
            logger.warning("exchange too large for memory budget %d, not remembered", memory.budget)
        else:
            append_and_trim(memory, asked)
            append_and_trim(memory, answered)
    return response


@dataclass
class CallRecord:
    label: str
    object: str
    room: str
    inquiry: str
    history_turns: int
    response: str
    latency: float
    generated_tokens: int
    error: Optional[str] = None


class ChatSession:
    """One episode's conversation with a backend, with a call log for metrics."""

    def __init__(
        self,
        backend: Backend,
        system_prompt: str,
        params: GenerationParams = GenerationParams(),
        use_memory: bool = False,
        estimator: TokenEstimator = estimate_tokens,
    ):
        self.backend = backend
        self.system_prompt = system_prompt
        self.params = params
        self.estimator = estimator
        budget = compute_token_budget(params.max_seq_len, estimator(system_prompt))
        self.memory = DialogMemory(budget=budget, enabled=use_memory)
        self.calls: list[CallRecord] = []

    def ask(self, inquiry: str, label: str, obj: str = "", room: str = "") -> BackendResponse:
        meta = {"label": label, "object": obj, "room": room}
        history = len(self.memory.history())
        try:
            response = generate(
                self.backend, self.system_prompt, self.memory, inquiry, self.params, meta, self.estimator
            )
        except BackendError as exc:
            self.calls.append(CallRecord(label, obj, room, inquiry, history, "", 0.0, 0, repr(exc)))
            raise
        self.calls.append(
            CallRecord(label, obj, room, inquiry, history, response.text, response.latency, response.generated_tokens)
        )
        return response

    @property
    def n_calls(self) -> int:
        return len(self.calls)

    @property
    def total_latency(self) -> float:
        return sum(c.latency for c in self.calls)

    @property
    def total_tokens(self) -> int:
        return sum(c.generated_tokens for c in self.calls)

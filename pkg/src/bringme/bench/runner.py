"""Experiment grid: approaches x situations x commands x repetitions."""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from importlib.resources import files
from pathlib import Path
from typing import Any, Optional, Union

from ..kb import OntologyStore, load_ontology
from ..llm import Backend, ChatSession, GenerationParams, HttpBackend, ScriptedBackend, ENDPOINT_ENV
from ..prompts import build_system_prompt
from ..resolve import APPROACHES, SITUATIONS, ApproachConfig, EpisodeLog, EpisodeResult, run_episode
from ..simworld import PerceptionModel, SimulatedUser, WorldState, load_world
from ..verify import VerificationConfig

logger = logging.getLogger(__name__)


class FixtureError(RuntimeError):
    pass


@dataclass
class ExperimentSpec:
    commands: list[str]
    approaches: list[str] = field(default_factory=lambda: list(APPROACHES))
    situations: list[str] = field(default_factory=lambda: list(SITUATIONS))
    repetitions: int = 10
    seed: int = 0
    detect_prob: float = 1.0
    ontology: str = "ontology.json"
    world: str = "world.json"
    script: Optional[str] = "script.json"
    endpoint: Optional[str] = None
    synthetic_latency_s: float = 0.0
    parallelism: int = 1
    base_dir: Optional[str] = None

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if not self.commands:
            raise ValueError("an experiment needs at least one command")
        for a in self.approaches:
            if a not in APPROACHES:
                raise ValueError(f"unknown approach {a!r}")
        for s in self.situations:
            if s not in SITUATIONS:
                raise ValueError(f"unknown situation {s!r}")
        if not 0.0 <= self.detect_prob <= 1.0:
            raise ValueError("detect_prob must be within [0, 1]")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")

    @classmethod
    def from_dict(cls, doc: dict[str, Any], base_dir: Union[str, Path, None] = None) -> "ExperimentSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown experiment keys {sorted(unknown)}")
        spec = cls(**doc)
        if base_dir is not None and spec.base_dir is None:
            spec.base_dir = str(base_dir)
        return spec

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "ExperimentSpec":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text(encoding="utf-8")), base_dir=path.parent)

    @classmethod
    def default(cls, **overrides) -> "ExperimentSpec":
        doc = json.loads(files("bringme.data").joinpath("experiment.json").read_text("utf-8"))
        return replace(cls.from_dict(doc), **overrides)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def read_fixture(self, name: str) -> str:
        """Text of a fixture, looked up beside the experiment file, then in the bundled data."""
        candidate = Path(name)
        if not candidate.is_absolute() and self.base_dir:
            candidate = Path(self.base_dir) / name
        if candidate.is_file():
            return candidate.read_text(encoding="utf-8")
        bundled = files("bringme.data").joinpath(name)
        if bundled.is_file():
            return bundled.read_text("utf-8")
        raise FixtureError(f"fixture not found: {name}")

    def grid(self) -> list[tuple[str, str, int, str, int]]:
        """(approach, situation, command index, command, rep) in canonical order."""
        return [
            (a, s, ci, c, rep)
            for a in self.approaches
            for s in self.situations
            for ci, c in enumerate(self.commands)
            for rep in range(self.repetitions)
        ]


@dataclass(frozen=True)
class MetricsRecord:
    approach: str
    situation: str
    command: str
    rep: int
    success: bool
    time_s: float
    inquiries: int
    visits: int
    llm_calls: int
    llm_time_s: float
    tokens: int

    @property
    def verb(self) -> str:
        words = self.command.split()
        return words[0].capitalize() if words else ""

    @classmethod
    def from_episode(cls, result: EpisodeResult, rep: int) -> "MetricsRecord":
        return cls(
            approach=result.approach,
            situation=result.situation,
            command=result.command,
            rep=rep,
            success=result.success,
            time_s=round(result.time_s, 6),
            inquiries=result.n_inquiries,
            visits=result.visits,
            llm_calls=result.llm_calls,
            llm_time_s=round(result.llm_time_s, 6),
            tokens=result.tokens,
        )


@dataclass
class Fixtures:
    store: OntologyStore
    world: WorldState
    backend: Optional[Backend]
    system_prompt: str


def load_fixtures(spec: ExperimentSpec, env: Optional[dict] = None) -> Fixtures:
    env = os.environ if env is None else env
    try:
        store = load_ontology(spec.read_fixture(spec.ontology))
        world = load_world(spec.read_fixture(spec.world))
        world.check_consistent(store)
    except Exception as exc:
        raise FixtureError(f"could not load fixtures: {exc}") from exc
    endpoint = spec.endpoint or env.get(ENDPOINT_ENV)
    if endpoint:
        backend = HttpBackend(endpoint)
    elif spec.script:
        backend = ScriptedBackend.from_document(spec.read_fixture(spec.script), latency=spec.synthetic_latency_s)
    else:
        backend = None
    return Fixtures(store, world, backend, build_system_prompt(store))


def run_single(
    fixtures: Fixtures,
    approach: ApproachConfig,
    command: str,
    seed: Union[int, tuple] = 0,
    detect_prob: float = 1.0,
    episode_id: str = "",
    params: GenerationParams = GenerationParams(),
    config: VerificationConfig = VerificationConfig(),
    user=None,
) -> EpisodeResult:
    """One isolated episode: own world copy, backend fork, session and RNG stream.

    ``user`` defaults to the truthful simulated user of the world.
    """
    world = fixtures.world.copy()
    session = None
    if approach.use_llm and fixtures.backend is not None:
        session = ChatSession(fixtures.backend.fork(), fixtures.system_prompt, params, approach.use_memory)
    perception = PerceptionModel(detect_prob, seed)
    user = user or SimulatedUser.for_world(world)
    return run_episode(
        world, fixtures.store, session, user, approach, command, perception, config, EpisodeLog(episode_id)
    )


def run_experiment(
    spec: ExperimentSpec,
    log_dir: Union[str, Path, None] = None,
    fixtures: Optional[Fixtures] = None,
) -> list[MetricsRecord]:
    fixtures = fixtures or load_fixtures(spec)
    grid = spec.grid()

    def job(index: int) -> tuple[MetricsRecord, EpisodeLog]:
        a, s, ci, command, rep = grid[index]
        approach = ApproachConfig.named(a, s)
        episode_id = f"{a}|{s}|{ci}|{rep}"
        try:
            result = run_single(fixtures, approach, command, (spec.seed, index), spec.detect_prob, episode_id)
        except Exception as exc:  # keep the grid going; the record shows a failed episode
            logger.exception("episode %s crashed", episode_id)
            log = EpisodeLog(episode_id)
            log.emit("crash", 0.0, error=repr(exc))
            return MetricsRecord(a, s, command, rep, False, 0.0, 0, 0, 0, 0.0, 0), log
        return MetricsRecord.from_episode(result, rep), result.log

    if spec.parallelism > 1:
        with ThreadPoolExecutor(max_workers=spec.parallelism) as pool:
            outputs = list(pool.map(job, range(len(grid))))
    else:
        outputs = [job(i) for i in range(len(grid))]

    if log_dir is not None:
        write_logs(Path(log_dir), spec, outputs)
    return [record for record, _ in outputs]


def write_logs(log_dir: Path, spec: ExperimentSpec, outputs) -> None:
    log_dir.mkdir(parents=True, exist_ok=True)
    per_cell: dict[tuple[str, str], list[str]] = {}
    for record, log in outputs:
        per_cell.setdefault((record.approach, record.situation), []).append(log.to_ndjson())
    for (approach, situation), chunks in per_cell.items():
        name = f"{approach.replace('+', '_')}__{situation}.ndjson"
        (log_dir / name).write_text("".join(chunks), encoding="utf-8")

"""Scenario configuration and population generation.

A scenario is a single JSON file describing agent populations (persona
attribute pools + behavioral templates), ingestion settings, scheduled
narrative injections, and run parameters. Population generation is a pure
function of (spec, rng) so a seed fully determines the agent roster.
"""
from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .behavior import ActionCode, DnaProgram, TemporalModel
from .domain import Archetype, Persona, validate_persona
from .ingestion import StreamConfig
from .memory import MemoryParams


class InvalidScenario(ValueError):
    def __init__(self, path: str, reason: str):
        super().__init__(f"{path}: {reason}")
        self.path = path
        self.reason = reason


_DEFAULT_TRAITS = {
    Archetype.BENIGN: {
        "disinformation_propensity": "low",
        "skepticism": "high; questions exaggerated posts and checks sources",
    },
    Archetype.DISINFORMATIVE: {
        "disinformation_propensity": "high",
        "persuasiveness": "high; argues at length in reply threads",
    },
}

_DEFAULT_SEQUENCES = {
    Archetype.BENIGN: ["P", "W", "L", "R", "W", "S", "L", "I"],
    Archetype.DISINFORMATIVE: ["P", "P", "S", "W", "R", "S", "I", "R"],
}


@dataclass
class PopulationSpec:
    archetype: Archetype
    count: int
    handle_base: str
    persona_pools: dict[str, list] = field(default_factory=dict)
    behavioral_traits: dict[str, str] = field(default_factory=dict)
    dna_sequence: Optional[list[str]] = None
    mutation_rate: float = 0.05
    temporal: TemporalModel = field(default_factory=TemporalModel)
    memory: MemoryParams = field(default_factory=MemoryParams)

    @classmethod
    def from_dict(cls, d: dict, path: str) -> "PopulationSpec":
        try:
            archetype = Archetype(d.get("archetype", "benign"))
        except ValueError:
            raise InvalidScenario(f"{path}.archetype", f"unknown archetype {d.get('archetype')!r}")
        count = d.get("count")
        if not isinstance(count, int) or count < 0:
            raise InvalidScenario(f"{path}.count", "count must be a nonnegative integer")
        handle_base = d.get("handle_base")
        if not handle_base or not isinstance(handle_base, str):
            raise InvalidScenario(f"{path}.handle_base", "handle_base is required")
        pools = d.get("persona_pools", {})
        for key, pool in pools.items():
            if not isinstance(pool, list) or not pool:
                raise InvalidScenario(f"{path}.persona_pools.{key}", "pool must be a non-empty list")
        try:
            temporal = TemporalModel.from_state(d.get("temporal", {}))
        except ValueError as exc:
            raise InvalidScenario(f"{path}.temporal", str(exc))
        try:
            memory = MemoryParams.from_dict(d.get("memory", {}))
        except ValueError as exc:
            raise InvalidScenario(f"{path}.memory", str(exc))
        seq = d.get("dna_sequence")
        if seq is not None:
            try:
                DnaProgram(sequence=list(seq))
            except ValueError as exc:
                raise InvalidScenario(f"{path}.dna_sequence", str(exc))
        rate = d.get("mutation_rate", 0.05)
        if not (0.0 <= rate <= 1.0):
            raise InvalidScenario(f"{path}.mutation_rate", "must be in [0, 1]")
        return cls(
            archetype=archetype,
            count=count,
            handle_base=handle_base,
            persona_pools=pools,
            behavioral_traits=dict(d.get("behavioral_traits", {})),
            dna_sequence=list(seq) if seq is not None else None,
            mutation_rate=rate,
            temporal=temporal,
            memory=memory,
        )

    def to_dict(self) -> dict:
        return {
            "archetype": self.archetype.value,
            "count": self.count,
            "handle_base": self.handle_base,
            "persona_pools": self.persona_pools,
            "behavioral_traits": self.behavioral_traits,
            "dna_sequence": self.dna_sequence,
            "mutation_rate": self.mutation_rate,
            "temporal": self.temporal.to_state(),
            "memory": self.memory.to_dict(),
        }


@dataclass
class NarrativeInjection:
    at: int  # virtual ms
    narrative_id: str
    text: str
    assignees: dict  # {"archetype": "..."} or {"agents": [...]}

    @classmethod
    def from_dict(cls, d: dict, path: str) -> "NarrativeInjection":
        for key in ("at", "narrative_id", "text"):
            if key not in d:
                raise InvalidScenario(f"{path}.{key}", "required")
        if d["at"] < 0:
            raise InvalidScenario(f"{path}.at", "must be nonnegative")
        return cls(
            at=int(d["at"]),
            narrative_id=str(d["narrative_id"]),
            text=str(d["text"]),
            assignees=d.get("assignees", {"archetype": "disinformative"}),
        )

    def to_dict(self) -> dict:
        return {
            "at": self.at,
            "narrative_id": self.narrative_id,
            "text": self.text,
            "assignees": self.assignees,
        }


@dataclass
class ScenarioConfig:
    name: str
    duration: int  # virtual ms
    populations: list[PopulationSpec]
    ingestion: Optional[StreamConfig] = None
    narratives: list[NarrativeInjection] = field(default_factory=list)
    attention_sample: int = 50
    narrative_bias: float = 3.0
    context_k: int = 5
    target_k: int = 10
    seed: Optional[int] = None

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        if "name" not in d:
            raise InvalidScenario("name", "required")
        duration = d.get("duration_ms")
        if not isinstance(duration, int) or duration <= 0:
            raise InvalidScenario("duration_ms", "must be a positive integer")
        pops = d.get("populations")
        if not isinstance(pops, list) or not pops:
            raise InvalidScenario("populations", "at least one population entry is required")
        populations = [PopulationSpec.from_dict(p, f"populations[{i}]") for i, p in enumerate(pops)]
        ingestion = None
        if d.get("ingestion"):
            try:
                ingestion = StreamConfig.from_dict(d["ingestion"])
            except ValueError as exc:
                raise InvalidScenario("ingestion", str(exc))
        narratives = [
            NarrativeInjection.from_dict(n, f"narratives[{i}]")
            for i, n in enumerate(d.get("narratives", []))
        ]
        for i, n in enumerate(narratives):
            if n.at > duration:
                raise InvalidScenario(f"narratives[{i}].at", "injection scheduled after scenario end")
        attention = d.get("attention_sample", 50)
        if not isinstance(attention, int) or attention < 1:
            raise InvalidScenario("attention_sample", "must be a positive integer")
        return cls(
            name=str(d["name"]),
            duration=duration,
            populations=populations,
            ingestion=ingestion,
            narratives=narratives,
            attention_sample=attention,
            narrative_bias=float(d.get("narrative_bias", 3.0)),
            context_k=int(d.get("context_k", 5)),
            target_k=int(d.get("target_k", 10)),
            seed=d.get("seed"),
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "duration_ms": self.duration,
            "populations": [p.to_dict() for p in self.populations],
            "ingestion": self.ingestion.to_dict() if self.ingestion else None,
            "narratives": [n.to_dict() for n in self.narratives],
            "attention_sample": self.attention_sample,
            "narrative_bias": self.narrative_bias,
            "context_k": self.context_k,
            "target_k": self.target_k,
            "seed": self.seed,
        }

    @classmethod
    def load(cls, path: str | Path) -> "ScenarioConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except ValueError as exc:
            raise InvalidScenario(str(path), f"not valid JSON: {exc}")
        return cls.from_dict(raw)


@dataclass
class AgentBlueprint:
    agent_id: str
    persona: Persona
    program: DnaProgram
    temporal: TemporalModel
    memory_params: MemoryParams


def _sample_pool(pool: list, rng: random.Random) -> Any:
    """Pools are either plain values or [value, weight] pairs."""
    if pool and isinstance(pool[0], list) and len(pool[0]) == 2:
        values = [v for v, _ in pool]
        weights = [w for _, w in pool]
        return rng.choices(values, weights=weights, k=1)[0]
    return pool[rng.randrange(len(pool))]


_POOL_FIELDS = (
    "age",
    "gender",
    "location",
    "political_orientation",
    "religious_orientation",
    "education",
)

_POOL_DEFAULTS = {
    "age": list(range(18, 71)),
    "gender": ["male", "female", "non-binary"],
    "location": ["Canada", "USA", "UK", "Germany", "Italy", "Brazil", "India", "Japan"],
    "political_orientation": ["liberal", "conservative", "centrist", "apolitical"],
    "religious_orientation": ["agnostic", "atheist", "christian", "muslim", "buddhist"],
    "education": ["High School", "University Degree", "Postgraduate Degree", "Self-taught"],
}


def generate_population(spec: ScenarioConfig, rng: random.Random) -> list[AgentBlueprint]:
    """Exactly `count` agents per population entry, attributes drawn from
    the entry's pools (weighted), handles unique as base + running index."""
    agents: list[AgentBlueprint] = []
    index = 0
    for pop in spec.populations:
        sequence = pop.dna_sequence or _DEFAULT_SEQUENCES[pop.archetype]
        for _ in range(pop.count):
            raw: dict[str, Any] = {"handle": f"{pop.handle_base}{index}", "archetype": pop.archetype.value}
            for fname in _POOL_FIELDS:
                pool = pop.persona_pools.get(fname, _POOL_DEFAULTS[fname])
                raw[fname] = _sample_pool(pool, rng)
            traits = dict(_DEFAULT_TRAITS[pop.archetype])
            traits.update(pop.behavioral_traits)
            raw["behavioral_traits"] = traits
            persona = validate_persona(raw)
            agents.append(
                AgentBlueprint(
                    agent_id=f"a{index:05d}",
                    persona=persona,
                    program=DnaProgram(
                        sequence=[ActionCode(c) for c in sequence],
                        mutation_rate=pop.mutation_rate,
                    ),
                    temporal=pop.temporal,
                    memory_params=pop.memory,
                )
            )
            index += 1
    return agents

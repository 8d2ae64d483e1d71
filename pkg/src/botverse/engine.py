"""Event-driven simulation engine.

A single priority queue ordered by (virtual time, enqueue sequence)
drives everything: agent wakes expand into sessions of actions, actions
produce posts and interactions that fan out into other agents' memories,
external stream posts arrive as stimuli, and control commands are
ordinary events so that interventions are part of the replayable history.

Every applied event is appended to the store and folded into a hash
chain; (scenario, seed, replay file) fully determine the final hash.
Checkpoints serialize the complete engine state, including every rng
stream, so a killed run resumes to the same hash.
"""
from __future__ import annotations

import hashlib
import heapq
import json
import math
import random
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import brain
from .behavior import (
    ActionCode,
    ActionDecision,
    DnaProgram,
    TemporalModel,
    choose_target,
    next_session_start,
    sample_session,
)
from .domain import (
    Archetype,
    ExternalPost,
    Interaction,
    InteractionKind,
    Persona,
    Post,
    canonical_json,
    narrative_of,
    validate_persona,
)
from .ingestion import IngestionCounters, replay_external_posts, sample_and_forward
from .memory import AgentMemory, MemoryItem, MemoryParams
from .scenario import AgentBlueprint, ScenarioConfig, generate_population

GENESIS_HASH = hashlib.sha256(b"botverse-log").hexdigest()
CHECKPOINT_EVERY = 10_000


class EngineError(Exception):
    pass


class Causality(EngineError):
    pass


class EmptyQueue(EngineError):
    pass


class NoAssignees(EngineError):
    pass


class DuplicateNarrative(EngineError):
    pass


@dataclass
class PacingMode:
    mode: str = "free_run"  # "free_run" | "scaled"
    factor: float = 1.0  # wall seconds per virtual second, scaled mode

    def __post_init__(self):
        if self.mode not in ("free_run", "scaled"):
            raise ValueError(f"unknown pacing mode {self.mode}")
        if self.factor <= 0:
            raise ValueError("pacing factor must be positive")

    def to_dict(self) -> dict:
        return {"mode": self.mode, "factor": self.factor}

    @classmethod
    def from_dict(cls, d: dict) -> "PacingMode":
        return cls(mode=d.get("mode", "free_run"), factor=d.get("factor", 1.0))


@dataclass
class AgentState:
    agent_id: str
    persona: Persona
    program: DnaProgram
    temporal: TemporalModel
    memory: AgentMemory
    rng: random.Random
    active_narrative: Optional[str] = None
    narrative_text: Optional[str] = None
    latest_stimulus: Optional[ExternalPost] = None


def _rng_state_to_json(state) -> list:
    version, internal, gauss = state
    return [version, list(internal), gauss]


def _rng_state_from_json(data) -> tuple:
    version, internal, gauss = data
    return (version, tuple(internal), gauss)


class Engine:
    """Owns all mutable simulation state; single-writer by contract."""

    def __init__(
        self,
        config: ScenarioConfig,
        seed: int,
        store,
        renderer: Optional[brain.StubRenderer] = None,
        backend: Optional[brain.BackendDescriptor] = None,
        image_post_rate: float = 0.05,
    ):
        self.config = config
        self.seed = seed
        self.store = store
        self.backend = backend
        self.renderer = renderer if renderer is not None else brain.StubRenderer(None)
        self.image_post_rate = image_post_rate

        self.clock: int = 0
        self.status: str = "paused"  # running | paused | finished
        self.pacing = PacingMode()
        self._queue: list[tuple[int, int, dict]] = []
        self._seq = 0
        self.applied_index = -1
        self.log_hash = GENESIS_HASH
        self._post_counter = 0
        self._command_counter = 0
        self.agents: dict[str, AgentState] = {}
        self._agent_ids: list[str] = []
        self.narratives: dict[str, dict] = {}
        self.ingestion_counters = IngestionCounters()
        self.counters: dict[str, int] = {
            "posts": 0,
            "likes": 0,
            "replies": 0,
            "reposts": 0,
            "skipped_actions": 0,
            "sessions": 0,
            "stimuli_delivered": 0,
            "backend_failures": 0,
        }
        self._delivery_rng = random.Random(f"{seed}:delivery")
        self.on_applied: Optional[Callable[[dict, list, list], None]] = None

    # -- construction ------------------------------------------------------

    @classmethod
    def init(cls, config: ScenarioConfig, seed: int, store, **kwargs) -> "Engine":
        engine = cls(config, seed, store, **kwargs)
        blueprints = generate_population(config, random.Random(f"{seed}:population"))
        for bp in blueprints:
            engine._register_agent(bp)
        for agent in engine.agents.values():
            wake_at = next_session_start(0, agent.temporal, agent.rng)
            engine._enqueue(wake_at, {"type": "agent_wake", "agent": agent.agent_id})
        engine._schedule_external(seed)
        for injection in config.narratives:
            engine._enqueue(
                injection.at,
                {
                    "type": "control",
                    "command_id": engine._next_command_id(),
                    "command": {
                        "kind": "inject_narrative",
                        "narrative_id": injection.narrative_id,
                        "text": injection.text,
                        "assignees": injection.assignees,
                    },
                },
            )
        store.set_meta("seed", str(seed))
        store.set_meta("scenario", canonical_json(config.to_dict()))
        store.set_meta(
            "scenario_hash",
            hashlib.sha256(canonical_json(config.to_dict()).encode()).hexdigest(),
        )
        return engine

    def _register_agent(self, bp: AgentBlueprint) -> None:
        agent = AgentState(
            agent_id=bp.agent_id,
            persona=bp.persona,
            program=bp.program,
            temporal=bp.temporal,
            memory=AgentMemory(bp.memory_params),
            rng=random.Random(f"{self.seed}:agent:{bp.agent_id}"),
        )
        self.agents[bp.agent_id] = agent
        self._agent_ids.append(bp.agent_id)
        self.store.put_agent(bp.agent_id, bp.persona.to_dict(), bp.memory_params.to_dict())

    def _schedule_external(self, seed: int) -> None:
        cfg = self.config.ingestion
        if cfg is None or cfg.mode != "replay" or not cfg.replay_path:
            return
        posts = replay_external_posts(cfg)
        forwarded: list[ExternalPost] = []
        self.ingestion_counters = sample_and_forward(
            posts,
            cfg.sample_rate,
            random.Random(f"{seed}:ingestion"),
            lambda p: (forwarded.append(p) or True),
        )
        for post in forwarded:
            if post.observed_at <= self.config.duration:
                self._enqueue(post.observed_at, {"type": "external_ingest", "post": post.to_dict()})

    # -- queue -------------------------------------------------------------

    def _enqueue(self, at: int, payload: dict) -> int:
        if at < self.clock:
            raise Causality(f"event at {at} is before clock {self.clock}")
        seq = self._seq
        self._seq += 1
        heapq.heappush(self._queue, (at, seq, payload))
        return seq

    def peek_at(self) -> Optional[int]:
        return self._queue[0][0] if self._queue else None

    def queue_size(self) -> int:
        return len(self._queue)

    def _next_command_id(self) -> int:
        self._command_counter += 1
        return self._command_counter

    # -- stepping ----------------------------------------------------------

    def step(self) -> dict:
        """Apply the minimum-(at, seq) event; returns the applied log entry."""
        if not self._queue:
            raise EmptyQueue("no events to apply")
        at, seq, payload = heapq.heappop(self._queue)
        self.clock = at
        new_posts: list[Post] = []
        new_interactions: list[Interaction] = []
        entry = {"at": at, "seq": seq, "type": payload["type"]}
        kind = payload["type"]
        if kind == "agent_wake":
            self._dispatch_wake(payload, entry)
        elif kind == "action_due":
            self._dispatch_action(payload, entry, new_posts, new_interactions)
        elif kind == "external_ingest":
            self._dispatch_external(payload, entry)
        elif kind == "control":
            self._dispatch_control(payload, entry)
        else:
            raise EngineError(f"unknown event type {kind}")
        self._apply_entry(entry, new_posts, new_interactions)
        return entry

    def _apply_entry(self, entry: dict, new_posts: list, new_interactions: list) -> None:
        self.applied_index += 1
        self.log_hash = hashlib.sha256(
            (self.log_hash + canonical_json(entry)).encode("utf-8")
        ).hexdigest()
        self.store.append_event(self.applied_index, entry)
        self.store.set_meta("log_hash", self.log_hash)
        if self.on_applied is not None:
            self.on_applied(entry, new_posts, new_interactions)
        if self.applied_index and self.applied_index % CHECKPOINT_EVERY == 0:
            self.checkpoint()

    def run_until(self, t_end: int, inbox: Optional[Callable[[], Optional[dict]]] = None) -> None:
        """Apply events while their time is within t_end; respects pacing,
        reacts to pause within one dispatch, drains submitted commands
        through `inbox` between steps."""
        if t_end < self.clock:
            raise Causality(f"t_end {t_end} is before clock {self.clock}")
        wall_anchor = time.monotonic()
        virtual_anchor = self.clock
        while True:
            if inbox is not None:
                cmd = inbox()
                while cmd is not None:
                    self.submit_control(cmd)
                    cmd = inbox()
            if self.status != "running":
                break
            nxt = self.peek_at()
            if nxt is None or nxt > t_end:
                break
            if self.pacing.mode == "scaled":
                due = wall_anchor + (nxt - virtual_anchor) / 1000.0 * self.pacing.factor
                delay = due - time.monotonic()
                if delay > 0:
                    time.sleep(min(delay, 0.25))
                    continue
            self.step()
        if self.status == "running" and self.peek_at() is None:
            self.status = "finished"

    def submit_control(self, command: dict) -> int:
        """Route a command into the event stream. While paused the command
        is applied immediately (same-instant queue entries are re-stamped
        behind it so the applied log stays (at, seq)-sorted)."""
        command_id = command.get("command_id") or self._next_command_id()
        payload = {"type": "control", "command_id": command_id, "command": command}
        if self.status == "paused":
            same_instant = []
            while self._queue and self._queue[0][0] == self.clock:
                same_instant.append(heapq.heappop(self._queue))
            seq = self._seq
            self._seq += 1
            for at, _, pl in same_instant:
                self._enqueue(at, pl)
            entry = {"at": self.clock, "seq": seq, "type": "control"}
            self._dispatch_control(payload, entry)
            self._apply_entry(entry, [], [])
        else:
            self._enqueue(self.clock, payload)
        return command_id

    # -- dispatchers -------------------------------------------------------

    def _dispatch_wake(self, payload: dict, entry: dict) -> None:
        agent = self.agents[payload["agent"]]
        session = sample_session(agent.program, agent.temporal, self.clock, agent.rng)
        for decision in session:
            self._enqueue(
                decision.at,
                {"type": "action_due", "agent": agent.agent_id, "code": decision.code.value},
            )
        last_at = session[-1].at if session else self.clock
        next_wake = next_session_start(max(last_at, self.clock), agent.temporal, agent.rng)
        self._enqueue(next_wake, {"type": "agent_wake", "agent": agent.agent_id})
        self.counters["sessions"] += 1
        entry["agent"] = agent.agent_id
        entry["actions"] = len(session)

    def _effective_narrative(self, post_id: str) -> Optional[str]:
        post = self.store.get_post(post_id)
        if post is None:
            return None
        return narrative_of(post, self.store.get_post)

    def _dispatch_action(self, payload: dict, entry: dict, new_posts: list, new_interactions: list) -> None:
        agent = self.agents[payload["agent"]]
        code = ActionCode(payload["code"])
        entry["agent"] = agent.agent_id
        entry["code"] = code.value
        if code in (ActionCode.POST, ActionCode.INGEST_REACT):
            if code is ActionCode.INGEST_REACT and agent.latest_stimulus is None:
                entry["skipped"] = "no_stimulus"
                self.counters["skipped_actions"] += 1
                return
            self._do_post(agent, code, entry, new_posts)
            return
        target_id = choose_target(
            code,
            agent.memory.top_k(self.clock, self.config.target_k),
            agent.rng,
            active_narrative=agent.active_narrative,
            narrative_of_post=self._effective_narrative,
            narrative_bias=self.config.narrative_bias,
        )
        if target_id is None:
            entry["skipped"] = "empty_memory"
            self.counters["skipped_actions"] += 1
            return
        entry["target"] = target_id
        if code is ActionCode.LIKE:
            self._do_like(agent, target_id, new_interactions)
        elif code is ActionCode.REPLY:
            self._do_reply(agent, target_id, entry, new_posts, new_interactions)
        elif code is ActionCode.REPOST:
            self._do_repost(agent, target_id, entry, new_posts, new_interactions)

    def _context(self, agent: AgentState) -> list[tuple[str, int, int]]:
        out = []
        for item, _ in agent.memory.top_k(self.clock, self.config.context_k):
            post = self.store.get_post(item.post_id)
            if post is not None:
                out.append((post.text, item.likes_seen, item.reposts_seen))
        return out

    def _generate(self, bundle: brain.PromptBundle, agent: AgentState) -> Optional[str]:
        if self.backend is not None:
            try:
                return brain.generate(bundle, self.backend).text
            except brain.BackendError:
                self.counters["backend_failures"] += 1
                return None
        return brain.stub_generate(bundle, agent.rng).text

    def _new_post_id(self) -> str:
        self._post_counter += 1
        return f"p{self._post_counter:08d}"

    def _do_post(self, agent: AgentState, code: ActionCode, entry: dict, new_posts: list) -> None:
        stimulus = agent.latest_stimulus if code is ActionCode.INGEST_REACT else None
        bundle = brain.build_prompt(
            agent.persona,
            self._context(agent),
            brain.Task.COMPOSE_POST,
            stimulus=stimulus,
            narrative_id=agent.active_narrative,
            narrative_text=agent.narrative_text,
        )
        text = self._generate(bundle, agent)
        if text is None:
            entry["skipped"] = "backend_failure"
            self.counters["skipped_actions"] += 1
            return
        image_prompt = image_ref = None
        if self.image_post_rate > 0 and agent.rng.random() < self.image_post_rate:
            topic = (stimulus.text[:60] if stimulus else None) or (agent.narrative_text or text)[:60]
            image_prompt, image_ref, _ = brain.compose_image_prompt(
                agent.persona, topic, agent.rng, renderer=self.renderer
            )
        post = Post(
            post_id=self._new_post_id(),
            author=agent.agent_id,
            text=text,
            created_at=self.clock,
            image_prompt=image_prompt,
            image_ref=image_ref,
            narrative_id=agent.active_narrative,
        )
        self.store.put_post(post, event_index=self.applied_index + 1)
        self.counters["posts"] += 1
        entry["post_id"] = post.post_id
        new_posts.append(post)
        self._fanout_post(agent, post)

    def _do_reply(self, agent: AgentState, target_id: str, entry: dict, new_posts: list, new_interactions: list) -> None:
        target = self.store.get_post(target_id)
        bundle = brain.build_prompt(
            agent.persona,
            self._context(agent),
            brain.Task.COMPOSE_REPLY,
            target=target,
            narrative_id=agent.active_narrative,
            narrative_text=agent.narrative_text,
        )
        text = self._generate(bundle, agent)
        if text is None:
            entry["skipped"] = "backend_failure"
            self.counters["skipped_actions"] += 1
            return
        post = Post(
            post_id=self._new_post_id(),
            author=agent.agent_id,
            text=text,
            created_at=self.clock,
            narrative_id=agent.active_narrative,
            in_reply_to=target_id,
        )
        self.store.put_post(post, event_index=self.applied_index + 1)
        interaction = Interaction(
            kind=InteractionKind.REPLY,
            actor=agent.agent_id,
            target=target_id,
            at=self.clock,
            produced_post=post.post_id,
        )
        self.store.append_interaction(interaction, event_index=self.applied_index + 1)
        self.counters["replies"] += 1
        entry["post_id"] = post.post_id
        new_posts.append(post)
        new_interactions.append(interaction)
        self._fanout_post(agent, post)

    def _do_repost(self, agent: AgentState, target_id: str, entry: dict, new_posts: list, new_interactions: list) -> None:
        target = self.store.get_post(target_id)
        inherited = self._effective_narrative(target_id)
        bundle = brain.build_prompt(
            agent.persona,
            self._context(agent),
            brain.Task.COMPOSE_REPOST_COMMENT,
            target=target,
            narrative_id=agent.active_narrative or inherited,
            narrative_text=agent.narrative_text,
        )
        text = self._generate(bundle, agent)
        if text is None:
            entry["skipped"] = "backend_failure"
            self.counters["skipped_actions"] += 1
            return
        post = Post(
            post_id=self._new_post_id(),
            author=agent.agent_id,
            text=text,
            created_at=self.clock,
            narrative_id=inherited or agent.active_narrative,
            repost_of=target_id,
        )
        self.store.put_post(post, event_index=self.applied_index + 1)
        interaction = Interaction(
            kind=InteractionKind.REPOST,
            actor=agent.agent_id,
            target=target_id,
            at=self.clock,
            produced_post=post.post_id,
        )
        self.store.append_interaction(interaction, event_index=self.applied_index + 1)
        likes, reposts = self.store.bump_engagement(target_id, "repost")
        self.counters["reposts"] += 1
        entry["post_id"] = post.post_id
        new_posts.append(post)
        new_interactions.append(interaction)
        self._fanout_post(agent, post)
        self._fanout_engagement(agent, target_id, likes, reposts)

    def _do_like(self, agent: AgentState, target_id: str, new_interactions: list) -> None:
        interaction = Interaction(
            kind=InteractionKind.LIKE, actor=agent.agent_id, target=target_id, at=self.clock
        )
        self.store.append_interaction(interaction, event_index=self.applied_index + 1)
        likes, reposts = self.store.bump_engagement(target_id, "like")
        self.counters["likes"] += 1
        new_interactions.append(interaction)
        agent.memory.bump_engagement(target_id, likes, reposts)
        self._fanout_engagement(agent, target_id, likes, reposts)

    def _observers(self, rng: random.Random, exclude: str) -> list[AgentState]:
        n = len(self._agent_ids)
        k = min(self.config.attention_sample, n)
        picked = rng.sample(self._agent_ids, k)
        return [self.agents[a] for a in picked if a != exclude]

    def _fanout_post(self, actor: AgentState, post: Post) -> None:
        likes, reposts = self.store.engagement(post.post_id)
        item = MemoryItem(post.post_id, self.clock, likes, reposts)
        for observer in self._observers(actor.rng, actor.agent_id):
            observer.memory.remember(item, self.clock)

    def _fanout_engagement(self, actor: AgentState, post_id: str, likes: int, reposts: int) -> None:
        for observer in self._observers(actor.rng, actor.agent_id):
            observer.memory.bump_engagement(post_id, likes, reposts)

    def _dispatch_external(self, payload: dict, entry: dict) -> None:
        post = ExternalPost.from_dict(payload["post"])
        post = ExternalPost(
            source_id=post.source_id, text=post.text, observed_at=self.clock, topics=post.topics
        )
        n = len(self._agent_ids)
        k = min(self.config.attention_sample, n)
        targets = self._delivery_rng.sample(self._agent_ids, k) if n else []
        for agent_id in targets:
            self.agents[agent_id].latest_stimulus = post
        self.counters["stimuli_delivered"] += len(targets)
        entry["source_id"] = post.source_id
        entry["delivered"] = len(targets)

    def _dispatch_control(self, payload: dict, entry: dict) -> None:
        command = payload["command"]
        entry["command_id"] = payload["command_id"]
        entry["command"] = command
        kind = command.get("kind")
        try:
            if kind == "pause":
                if self.status == "paused":
                    raise EngineError("already paused")
                self.status = "paused"
                self.checkpoint()
            elif kind == "resume":
                if self.status == "running":
                    raise EngineError("already running")
                self.status = "running"
            elif kind == "set_pacing":
                self.pacing = PacingMode.from_dict(command.get("pacing", {}))
            elif kind == "inject_narrative":
                self._apply_injection(command)
            elif kind == "spawn_agents":
                self._apply_spawn(command, payload["command_id"])
            elif kind == "patch_memory_params":
                self._apply_patch_params(command)
            else:
                raise EngineError(f"unknown command kind {kind!r}")
        except (EngineError, ValueError) as exc:
            entry["error"] = str(exc)

    def _resolve_assignees(self, policy: dict) -> list[AgentState]:
        if "agents" in policy:
            return [self.agents[a] for a in policy["agents"] if a in self.agents]
        if "archetype" in policy:
            arch = Archetype(policy["archetype"])
            return [a for a in self.agents.values() if a.persona.archetype is arch]
        if policy.get("all"):
            return list(self.agents.values())
        return []

    def _apply_injection(self, command: dict) -> None:
        narrative_id = command["narrative_id"]
        if narrative_id in self.narratives and not command.get("reusable"):
            raise DuplicateNarrative(f"narrative {narrative_id} already registered")
        assignees = self._resolve_assignees(command.get("assignees", {"archetype": "disinformative"}))
        if not assignees:
            raise NoAssignees("assignee policy matches no agents")
        text = command.get("text", "")
        self.narratives[narrative_id] = {
            "text": text,
            "injected_at": self.clock,
            "assignees": [a.agent_id for a in assignees],
        }
        for agent in assignees:
            agent.active_narrative = narrative_id
            agent.narrative_text = text

    def _apply_spawn(self, command: dict, command_id: int) -> None:
        from .scenario import PopulationSpec

        spec_dict = command.get("population")
        if not spec_dict:
            raise EngineError("spawn_agents requires a population spec")
        pop = PopulationSpec.from_dict(spec_dict, "spawn.population")
        sub_config = ScenarioConfig(
            name="spawn", duration=self.config.duration, populations=[pop]
        )
        rng = random.Random(f"{self.seed}:spawn:{command_id}")
        offset = len(self.agents)
        for i, bp in enumerate(generate_population(sub_config, rng)):
            bp.agent_id = f"a{offset + i:05d}"
            bp.persona = validate_persona({**bp.persona.to_dict(), "handle": f"{pop.handle_base}{offset + i}"})
            self._register_agent(bp)
            agent = self.agents[bp.agent_id]
            wake_at = next_session_start(self.clock, agent.temporal, agent.rng)
            self._enqueue(wake_at, {"type": "agent_wake", "agent": agent.agent_id})

    def _apply_patch_params(self, command: dict) -> None:
        targets = self._resolve_assignees(command.get("selector", {"all": True}))
        if not targets:
            raise NoAssignees("selector matches no agents")
        patch = command.get("patch", {})
        for agent in targets:
            params = agent.memory.params.replacing(patch)
            agent.memory.set_params(params, self.clock)
            self.store.update_agent_params(agent.agent_id, params.to_dict())

    # -- snapshots and checkpoints ----------------------------------------

    def snapshot(self) -> dict:
        counts = self.store.counts()
        return {
            "status": self.status,
            "clock": self.clock,
            "agents": len(self.agents),
            "applied_events": self.applied_index + 1,
            "log_hash": self.log_hash,
            "pacing": self.pacing.to_dict(),
            "queue_size": len(self._queue),
            "counters": dict(self.counters),
            "narratives": sorted(self.narratives),
            "posts": counts["posts"],
            "interactions": counts["interactions"],
        }

    def to_state(self) -> dict:
        return {
            "seed": self.seed,
            "clock": self.clock,
            "status": self.status,
            "pacing": self.pacing.to_dict(),
            "seq": self._seq,
            "applied_index": self.applied_index,
            "log_hash": self.log_hash,
            "post_counter": self._post_counter,
            "command_counter": self._command_counter,
            "queue": [[at, seq, payload] for at, seq, payload in sorted(self._queue)],
            "delivery_rng": _rng_state_to_json(self._delivery_rng.getstate()),
            "counters": dict(self.counters),
            "ingestion_counters": self.ingestion_counters.to_dict(),
            "narratives": self.narratives,
            "agent_order": list(self._agent_ids),
            "agents": {
                a.agent_id: {
                    "persona": a.persona.to_dict(),
                    "program": a.program.to_state(),
                    "temporal": a.temporal.to_state(),
                    "memory": a.memory.to_state(),
                    "rng": _rng_state_to_json(a.rng.getstate()),
                    "active_narrative": a.active_narrative,
                    "narrative_text": a.narrative_text,
                    "latest_stimulus": a.latest_stimulus.to_dict() if a.latest_stimulus else None,
                }
                for a in self.agents.values()
            },
        }

    @classmethod
    def from_state(cls, config: ScenarioConfig, state: dict, store, **kwargs) -> "Engine":
        engine = cls(config, state["seed"], store, **kwargs)
        engine.clock = state["clock"]
        engine.status = state["status"]
        engine.pacing = PacingMode.from_dict(state["pacing"])
        engine._seq = state["seq"]
        engine.applied_index = state["applied_index"]
        engine.log_hash = state["log_hash"]
        engine._post_counter = state["post_counter"]
        engine._command_counter = state["command_counter"]
        engine._queue = [(at, seq, payload) for at, seq, payload in state["queue"]]
        heapq.heapify(engine._queue)
        engine._delivery_rng.setstate(_rng_state_from_json(state["delivery_rng"]))
        engine.counters = dict(state["counters"])
        for key, value in state["ingestion_counters"].items():
            setattr(engine.ingestion_counters, key, value)
        engine.narratives = dict(state["narratives"])
        engine._agent_ids = list(state["agent_order"])
        for agent_id in engine._agent_ids:
            a = state["agents"][agent_id]
            rng = random.Random()
            rng.setstate(_rng_state_from_json(a["rng"]))
            stimulus = a.get("latest_stimulus")
            engine.agents[agent_id] = AgentState(
                agent_id=agent_id,
                persona=validate_persona(a["persona"]),
                program=DnaProgram.from_state(a["program"]),
                temporal=TemporalModel.from_state(a["temporal"]),
                memory=AgentMemory.from_state(a["memory"]),
                rng=rng,
                active_narrative=a.get("active_narrative"),
                narrative_text=a.get("narrative_text"),
                latest_stimulus=ExternalPost.from_dict(stimulus) if stimulus else None,
            )
        return engine

    def checkpoint(self) -> None:
        self.store.save_checkpoint(self.applied_index, self.to_state())

    @classmethod
    def resume(cls, store, **kwargs) -> "Engine":
        """Rebuild an engine from the store's latest checkpoint. Rows newer
        than the checkpoint are dropped; determinism regenerates them."""
        scenario_json = store.get_meta("scenario")
        if scenario_json is None:
            from .store import NoCheckpoint

            raise NoCheckpoint("store carries no run metadata")
        config = ScenarioConfig.from_dict(json.loads(scenario_json))
        event_index, state = store.load_latest_checkpoint()
        store.truncate_after_event(event_index)
        return cls.from_state(config, state, store, **kwargs)

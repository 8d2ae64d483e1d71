"""Orchestration API: REST + push-stream service over a running engine.

All payloads use the canonical JSON encodings of the domain types. The
/stream endpoint emits sequence-numbered state deltas as one JSON object
per line over a long-lived response; a subscriber connected from the
start can rebuild the store's contents from deltas alone.
"""
from __future__ import annotations

import json
from typing import Optional

from fastapi import FastAPI, HTTPException, Query
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import StreamingResponse

from ..domain import Archetype
from ..runner import EngineRunner
from ..store import InvalidCursor
from .models import (
    AgentDetailResponse,
    AgentListResponse,
    AgentSummary,
    ControlAck,
    ControlRequest,
    EdgeModel,
    GraphResponse,
    HealthResponse,
    IngestionStatsResponse,
    MemoryParamsPatch,
    MemoryViewItem,
    PostModel,
    PostsResponse,
    SimulationResponse,
)

_CONTROL_KINDS = {
    "pause",
    "resume",
    "set_pacing",
    "inject_narrative",
    "spawn_agents",
    "patch_memory_params",
}


def _validate_control(runner: EngineRunner, cmd: ControlRequest) -> dict:
    """Pre-flight validation; raises HTTPException 400/409 on bad commands."""
    if cmd.kind not in _CONTROL_KINDS:
        raise HTTPException(400, f"unknown command kind {cmd.kind!r}")
    engine = runner.engine
    with runner.state_lock:
        status = engine.status
        if cmd.kind == "pause" and status != "running":
            raise HTTPException(409, f"cannot pause while {status}")
        if cmd.kind == "resume" and status == "running":
            raise HTTPException(409, "already running")
        if cmd.kind == "set_pacing":
            if cmd.pacing is None:
                raise HTTPException(400, "set_pacing requires a pacing object")
            if cmd.pacing.mode not in ("free_run", "scaled"):
                raise HTTPException(400, f"unknown pacing mode {cmd.pacing.mode!r}")
        if cmd.kind == "inject_narrative":
            if not cmd.narrative_id or cmd.text is None:
                raise HTTPException(400, "inject_narrative requires narrative_id and text")
            if cmd.narrative_id in engine.narratives and not cmd.reusable:
                raise HTTPException(409, f"narrative {cmd.narrative_id} already registered")
            assignees = cmd.assignees or {"archetype": "disinformative"}
            try:
                matched = engine._resolve_assignees(assignees)
            except ValueError as exc:
                raise HTTPException(400, str(exc))
            if not matched:
                raise HTTPException(400, "assignee policy matches no agents")
        if cmd.kind == "spawn_agents" and not cmd.population:
            raise HTTPException(400, "spawn_agents requires a population spec")
        if cmd.kind == "patch_memory_params" and not cmd.patch:
            raise HTTPException(400, "patch_memory_params requires a patch")
    payload = {"kind": cmd.kind}
    if cmd.pacing is not None:
        payload["pacing"] = cmd.pacing.model_dump()
    for name in ("narrative_id", "text", "assignees", "population", "selector", "patch"):
        value = getattr(cmd, name)
        if value is not None:
            payload[name] = value
    if cmd.reusable:
        payload["reusable"] = True
    return payload


def create_app(runner: EngineRunner) -> FastAPI:
    app = FastAPI(title="botverse", version="0.1.0")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    engine = runner.engine
    store = engine.store

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse()

    @app.get("/simulation", response_model=SimulationResponse)
    def simulation():
        return SimulationResponse(**runner.snapshot())

    @app.get("/agents", response_model=AgentListResponse)
    def agents(cursor: Optional[str] = None, limit: int = Query(default=100, ge=1, le=1000)):
        with runner.state_lock:
            ids = store.list_agents()
            if cursor is not None:
                ids = [a for a in ids if a > cursor]
            page = ids[:limit]
            out = []
            for agent_id in page:
                state = engine.agents.get(agent_id)
                if state is None:
                    continue
                out.append(
                    AgentSummary(
                        agent_id=agent_id,
                        handle=state.persona.handle,
                        archetype=state.persona.archetype.value,
                    )
                )
        next_cursor = page[-1] if len(ids) > limit and page else None
        return AgentListResponse(agents=out, next_cursor=next_cursor)

    @app.get("/agents/{agent_id}", response_model=AgentDetailResponse)
    def agent_detail(agent_id: str, k: int = Query(default=10, ge=1, le=100)):
        with runner.state_lock:
            state = engine.agents.get(agent_id)
            if state is None:
                raise HTTPException(404, f"unknown agent {agent_id}")
            top = state.memory.top_k(engine.clock, k)
            return AgentDetailResponse(
                agent_id=agent_id,
                persona=state.persona.to_dict(),
                memory_params=state.memory.params.to_dict(),
                memory_top_k=[
                    MemoryViewItem(
                        post_id=item.post_id,
                        observed_at=item.observed_at,
                        likes_seen=item.likes_seen,
                        reposts_seen=item.reposts_seen,
                        score=score,
                    )
                    for item, score in top
                ],
                dna_sequence=[c.value for c in state.program.sequence],
                dna_position=state.program.position,
                active_narrative=state.active_narrative,
            )

    @app.get("/posts", response_model=PostsResponse)
    def posts(
        since: Optional[int] = None,
        narrative: Optional[str] = None,
        author: Optional[str] = None,
        cursor: Optional[str] = None,
        limit: int = Query(default=100, ge=1, le=1000),
    ):
        with runner.state_lock:
            try:
                page = store.get_timeline(
                    author=author, narrative=narrative, since=since, limit=limit, cursor=cursor
                )
            except InvalidCursor as exc:
                raise HTTPException(400, f"invalid cursor: {exc}")
            models = []
            for post in page.posts:
                likes, reposts = store.engagement(post.post_id)
                models.append(PostModel(**post.to_dict(), likes=likes, reposts=reposts))
        return PostsResponse(posts=models, next_cursor=page.next_cursor)

    @app.get("/graph", response_model=GraphResponse)
    def graph(since: Optional[int] = None):
        with runner.state_lock:
            posts_by_id = {p.post_id: p for p in store.all_posts()}
            edges = []
            for inter in store.interactions(since=since):
                target_post = posts_by_id.get(inter.target)
                if target_post is None:
                    continue
                edges.append(
                    EdgeModel(
                        source_agent=inter.actor,
                        target_agent=target_post.author,
                        kind=inter.kind.value,
                        virtual_time_ms=inter.at,
                    )
                )
        return GraphResponse(edges=edges)

    @app.get("/ingestion/stats", response_model=IngestionStatsResponse)
    def ingestion_stats():
        with runner.state_lock:
            return IngestionStatsResponse(**engine.ingestion_counters.to_dict())

    @app.post("/control", response_model=ControlAck)
    def control(cmd: ControlRequest):
        payload = _validate_control(runner, cmd)
        try:
            command_id = runner.submit(payload)
        except Exception:
            raise HTTPException(503, "command queue full")
        return ControlAck(command_id=command_id, accepted=True)

    @app.patch("/agents/{agent_id}/memory_params", response_model=ControlAck)
    def patch_memory_params(agent_id: str, patch: MemoryParamsPatch):
        with runner.state_lock:
            if agent_id not in engine.agents:
                raise HTTPException(404, f"unknown agent {agent_id}")
        fields = {k: v for k, v in patch.model_dump().items() if v is not None}
        if not fields:
            raise HTTPException(400, "empty patch")
        command_id = runner.submit(
            {"kind": "patch_memory_params", "selector": {"agents": [agent_id]}, "patch": fields}
        )
        return ControlAck(command_id=command_id, accepted=True)

    @app.get("/stream")
    def stream(from_seq: int = Query(default=0, ge=0), follow: bool = True):
        def frames():
            index = from_seq
            if not follow:
                # catch-up mode: emit everything accumulated so far, then end
                limit = runner.delta_count()
                while index < limit:
                    delta = runner.wait_for_delta(index, timeout=1.0)
                    if delta is None:
                        return
                    yield json.dumps(delta, separators=(",", ":"), ensure_ascii=False) + "\n"
                    index += 1
                return
            while True:
                delta = runner.wait_for_delta(index, timeout=30.0)
                if delta is None:
                    if runner._stop.is_set():
                        return
                    yield json.dumps({"seq": None, "heartbeat": True}) + "\n"
                    continue
                yield json.dumps(delta, separators=(",", ":"), ensure_ascii=False) + "\n"
                index += 1

        return StreamingResponse(frames(), media_type="application/x-ndjson")

    return app

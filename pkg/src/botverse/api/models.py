"""Pydantic request/response models for the orchestration API."""
from __future__ import annotations

from typing import Any, Optional

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str = "ok"


class SimulationResponse(BaseModel):
    status: str
    clock: int
    agents: int
    applied_events: int
    log_hash: str
    pacing: dict
    queue_size: int
    counters: dict
    narratives: list[str]
    posts: int
    interactions: int


class PacingIn(BaseModel):
    mode: str = "free_run"
    factor: float = Field(default=1.0, gt=0)


class ControlRequest(BaseModel):
    kind: str
    pacing: Optional[PacingIn] = None
    narrative_id: Optional[str] = None
    text: Optional[str] = None
    assignees: Optional[dict] = None
    population: Optional[dict] = None
    selector: Optional[dict] = None
    patch: Optional[dict] = None
    reusable: bool = False


class ControlAck(BaseModel):
    command_id: int
    accepted: bool = True


class MemoryParamsPatch(BaseModel):
    alpha: Optional[float] = Field(default=None, ge=0)
    beta: Optional[float] = Field(default=None, ge=0)
    half_life: Optional[float] = Field(default=None, gt=0)
    repost_weight: Optional[float] = Field(default=None, ge=0)
    engagement_cap: Optional[int] = Field(default=None, ge=1)
    capacity: Optional[int] = Field(default=None, ge=1)


class MemoryViewItem(BaseModel):
    post_id: str
    observed_at: int
    likes_seen: int
    reposts_seen: int
    score: float


class AgentSummary(BaseModel):
    agent_id: str
    handle: str
    archetype: str


class AgentListResponse(BaseModel):
    agents: list[AgentSummary]
    next_cursor: Optional[str] = None


class AgentDetailResponse(BaseModel):
    agent_id: str
    persona: dict
    memory_params: dict
    memory_top_k: list[MemoryViewItem]
    dna_sequence: list[str]
    dna_position: int
    active_narrative: Optional[str] = None


class PostModel(BaseModel):
    post_id: str
    author: str
    text: str
    created_at: int
    image_prompt: Optional[str] = None
    image_ref: Optional[str] = None
    narrative_id: Optional[str] = None
    in_reply_to: Optional[str] = None
    repost_of: Optional[str] = None
    likes: int = 0
    reposts: int = 0


class PostsResponse(BaseModel):
    posts: list[PostModel]
    next_cursor: Optional[str] = None


class EdgeModel(BaseModel):
    source_agent: str
    target_agent: str
    kind: str
    virtual_time_ms: int


class GraphResponse(BaseModel):
    edges: list[EdgeModel]


class IngestionStatsResponse(BaseModel):
    seen: int
    forwarded: int
    sampled_out: int
    dropped: int
    protocol_errors: int
    reconnects: int

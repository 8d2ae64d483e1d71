"""Per-agent dynamic memory: salience scoring and top-k retrieval.

Each observed post is scored as

    S = alpha * recency + beta * importance

where recency decays exponentially with a configurable half-life and
importance is a log-saturating function of observed likes/reposts.
AgentMemory keeps the hot path vectorized (numpy) because the engine
performs hundreds of thousands of observations in a large run.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .domain import VirtualTime


class NegativeAge(ValueError):
    pass


@dataclass(frozen=True)
class MemoryParams:
    alpha: float = 1.0
    beta: float = 1.0
    half_life: float = 3600.0  # virtual seconds
    repost_weight: float = 2.0
    engagement_cap: int = 100
    capacity: int = 256

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be nonnegative")
        if self.alpha + self.beta <= 0:
            raise ValueError("alpha + beta must be positive")
        if self.half_life <= 0:
            raise ValueError("half_life must be positive")
        if self.repost_weight < 0:
            raise ValueError("repost_weight must be nonnegative")
        if self.engagement_cap < 1 or self.capacity < 1:
            raise ValueError("engagement_cap and capacity must be positive")

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "half_life": self.half_life,
            "repost_weight": self.repost_weight,
            "engagement_cap": self.engagement_cap,
            "capacity": self.capacity,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MemoryParams":
        base = cls()
        return cls(**{k: d.get(k, getattr(base, k)) for k in base.to_dict()})

    def replacing(self, patch: dict) -> "MemoryParams":
        merged = self.to_dict()
        merged.update({k: v for k, v in patch.items() if v is not None})
        return MemoryParams.from_dict(merged)


@dataclass
class MemoryItem:
    post_id: str
    observed_at: VirtualTime
    likes_seen: int = 0
    reposts_seen: int = 0


def recency(now: VirtualTime, observed_at: VirtualTime, half_life: float) -> float:
    """2^(-age/half_life); 1.0 at zero age, 0.5 after one half-life."""
    if now < observed_at:
        raise NegativeAge(f"now={now} < observed_at={observed_at}")
    age_s = (now - observed_at) / 1000.0
    return 2.0 ** (-age_s / half_life)


def importance(likes: int, reposts: int, params: MemoryParams) -> float:
    """Log-saturating engagement signal in [0, 1], reposts weighted above likes."""
    if likes < 0 or reposts < 0:
        raise ValueError("engagement counts must be nonnegative")
    raw = math.log1p(likes + params.repost_weight * reposts)
    return min(1.0, raw / math.log1p(params.engagement_cap))


def score(item: MemoryItem, now: VirtualTime, params: MemoryParams) -> float:
    return params.alpha * recency(now, item.observed_at, params.half_life) + params.beta * importance(
        item.likes_seen, item.reposts_seen, params
    )


def _rank_key(item: MemoryItem, now: VirtualTime, params: MemoryParams):
    # Descending score, newer first, then ascending post_id: deterministic.
    return (-score(item, now, params), -item.observed_at, item.post_id)


def retrieve_top_k(
    memory: Iterable[MemoryItem], now: VirtualTime, k: int, params: MemoryParams
) -> list[MemoryItem]:
    """Top-k items by salience; ties broken by newer observed_at then by
    ascending post_id, so the result is a pure function of its inputs."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return heapq.nsmallest(k, memory, key=lambda it: _rank_key(it, now, params))


class AgentMemory:
    """Bounded memory of one agent, owned by the engine loop.

    Items merge by post_id (counters take the elementwise max, observed_at
    keeps the earliest sighting). When the store exceeds capacity the
    minimum-score item under the current clock is evicted (same tie-break
    as retrieval, inverted). Backed by parallel numpy arrays so eviction
    and retrieval stay cheap at capacity.
    """

    def __init__(self, params: MemoryParams):
        self.params = params
        cap = params.capacity + 1
        self._ids: list[str] = []
        self._index: dict[str, int] = {}
        self._obs = np.zeros(cap, dtype=np.float64)
        self._likes = np.zeros(cap, dtype=np.float64)
        self._reposts = np.zeros(cap, dtype=np.float64)

    def __len__(self) -> int:
        return len(self._ids)

    def __contains__(self, post_id: str) -> bool:
        return post_id in self._index

    def items(self) -> list[MemoryItem]:
        return [
            MemoryItem(pid, int(self._obs[i]), int(self._likes[i]), int(self._reposts[i]))
            for i, pid in enumerate(self._ids)
        ]

    def _scores(self, now: VirtualTime) -> np.ndarray:
        n = len(self._ids)
        p = self.params
        age_s = (now - self._obs[:n]) / 1000.0
        rec = np.exp2(-age_s / p.half_life)
        imp = np.minimum(
            1.0, np.log1p(self._likes[:n] + p.repost_weight * self._reposts[:n]) / math.log1p(p.engagement_cap)
        )
        return p.alpha * rec + p.beta * imp

    def remember(self, item: MemoryItem, now: VirtualTime) -> None:
        idx = self._index.get(item.post_id)
        if idx is not None:
            self._obs[idx] = min(self._obs[idx], item.observed_at)
            self._likes[idx] = max(self._likes[idx], item.likes_seen)
            self._reposts[idx] = max(self._reposts[idx], item.reposts_seen)
            return
        n = len(self._ids)
        self._ids.append(item.post_id)
        self._index[item.post_id] = n
        self._obs[n] = item.observed_at
        self._likes[n] = item.likes_seen
        self._reposts[n] = item.reposts_seen
        if len(self._ids) > self.params.capacity:
            self._evict_min(now)

    def bump_engagement(self, post_id: str, likes: int, reposts: int) -> None:
        """Raise the remembered engagement counters toward fresher values."""
        idx = self._index.get(post_id)
        if idx is None:
            return
        self._likes[idx] = max(self._likes[idx], likes)
        self._reposts[idx] = max(self._reposts[idx], reposts)

    def _evict_min(self, now: VirtualTime) -> None:
        scores = self._scores(now)
        lo = scores.min()
        tied = np.flatnonzero(scores == lo)
        if len(tied) == 1:
            victim = int(tied[0])
        else:
            # Inverted retrieval tie-break: evict the oldest, then the
            # lexicographically greatest post_id.
            victim = min(tied, key=lambda i: (self._obs[i], _neg_str(self._ids[i])))
        self._remove_at(victim)

    def _remove_at(self, idx: int) -> None:
        last = len(self._ids) - 1
        removed = self._ids[idx]
        if idx != last:
            self._ids[idx] = self._ids[last]
            self._index[self._ids[idx]] = idx
            self._obs[idx] = self._obs[last]
            self._likes[idx] = self._likes[last]
            self._reposts[idx] = self._reposts[last]
        self._ids.pop()
        del self._index[removed]

    def top_k(self, now: VirtualTime, k: int) -> list[tuple[MemoryItem, float]]:
        n = len(self._ids)
        if n == 0 or k < 1:
            return []
        scores = self._scores(now)
        order = sorted(
            range(n), key=lambda i: (-scores[i], -self._obs[i], self._ids[i])
        )[: min(k, n)]
        return [
            (
                MemoryItem(self._ids[i], int(self._obs[i]), int(self._likes[i]), int(self._reposts[i])),
                float(scores[i]),
            )
            for i in order
        ]

    # -- checkpoint support ------------------------------------------------

    def to_state(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "items": [
                [pid, int(self._obs[i]), int(self._likes[i]), int(self._reposts[i])]
                for i, pid in enumerate(self._ids)
            ],
        }

    @classmethod
    def from_state(cls, state: dict) -> "AgentMemory":
        mem = cls(MemoryParams.from_dict(state["params"]))
        for pid, obs, likes, reposts in state["items"]:
            n = len(mem._ids)
            mem._ids.append(pid)
            mem._index[pid] = n
            mem._obs[n] = obs
            mem._likes[n] = likes
            mem._reposts[n] = reposts
        return mem

    def set_params(self, params: MemoryParams, now: VirtualTime = 0) -> None:
        n = len(self._ids)
        if params.capacity + 1 > len(self._obs):
            for name in ("_obs", "_likes", "_reposts"):
                arr = np.zeros(params.capacity + 1, dtype=np.float64)
                arr[:n] = getattr(self, name)[:n]
                setattr(self, name, arr)
        self.params = params
        while len(self._ids) > params.capacity:
            self._evict_min(now)


class _neg_str:
    """Wrapper inverting string comparison, for the inverted tie-break."""

    __slots__ = ("s",)

    def __init__(self, s: str):
        self.s = s

    def __lt__(self, other: "_neg_str") -> bool:
        return self.s > other.s

    def __eq__(self, other: object) -> bool:
        return isinstance(other, _neg_str) and self.s == other.s

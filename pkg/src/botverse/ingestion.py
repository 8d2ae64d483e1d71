"""Environmental grounding: external post stream ingestion.

Consumes the public AtProto JSON stream (live mode) or an NDJSON
recording (replay mode), normalizes post-creation records into
ExternalPost values, samples them, and forwards ExternalIngest stimuli
to the engine. Strictly read-only toward the real network: the only
outbound traffic is the stream subscription itself.
"""
from __future__ import annotations

import asyncio
import json
import logging
import math
import random
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator, Optional

from .domain import ExternalPost, VirtualTime, canonical_json

log = logging.getLogger(__name__)

DEFAULT_ENDPOINT = "wss://jetstream2.us-east.bsky.network/subscribe?wantedCollections=app.bsky.feed.post"


class IngestionError(Exception):
    pass


class ConnectFailed(IngestionError):
    pass


class MalformedLine(IngestionError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no


@dataclass(frozen=True)
class StreamConfig:
    mode: str = "replay"  # "live" | "replay"
    endpoint: str = DEFAULT_ENDPOINT
    replay_path: Optional[str] = None
    sample_rate: float = 1.0
    language_filter: Optional[tuple[str, ...]] = None
    backoff_initial: float = 1.0
    backoff_max: float = 60.0
    max_text_len: int = 1000
    gap_scale: float = 1.0  # wall gap -> virtual gap multiplier in replay

    def __post_init__(self):
        if self.mode not in ("live", "replay"):
            raise ValueError(f"unknown ingestion mode: {self.mode}")
        if not (0.0 < self.sample_rate <= 1.0):
            raise ValueError("sample_rate must be in (0, 1]")
        if self.max_text_len < 1:
            raise ValueError("max_text_len must be positive")
        if self.gap_scale < 0:
            raise ValueError("gap_scale must be nonnegative")

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "endpoint": self.endpoint,
            "replay_path": self.replay_path,
            "sample_rate": self.sample_rate,
            "language_filter": list(self.language_filter) if self.language_filter else None,
            "backoff_initial": self.backoff_initial,
            "backoff_max": self.backoff_max,
            "max_text_len": self.max_text_len,
            "gap_scale": self.gap_scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StreamConfig":
        base = cls()
        kwargs = {k: d[k] for k in base.to_dict() if k in d}
        if kwargs.get("language_filter"):
            kwargs["language_filter"] = tuple(kwargs["language_filter"])
        return cls(**kwargs)


@dataclass(frozen=True)
class RawRecord:
    received_at: float  # wall-clock seconds (unix epoch)
    kind: str  # record collection name, e.g. app.bsky.feed.post
    body: dict  # opaque frame payload, round-trips byte-identically

    def to_dict(self) -> dict:
        return {"received_at": self.received_at, "kind": self.kind, "body": self.body}

    @classmethod
    def from_dict(cls, d: dict) -> "RawRecord":
        return cls(received_at=d["received_at"], kind=d["kind"], body=d["body"])


@dataclass
class IngestionCounters:
    seen: int = 0
    forwarded: int = 0
    sampled_out: int = 0
    dropped: int = 0
    protocol_errors: int = 0
    reconnects: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def parse_frame(raw_text: str, received_at: float) -> Optional[RawRecord]:
    """One JSON stream frame -> RawRecord, or None for unparseable input."""
    try:
        body = json.loads(raw_text)
    except ValueError:
        return None
    if not isinstance(body, dict):
        return None
    kind = ""
    commit = body.get("commit")
    if isinstance(commit, dict):
        kind = commit.get("collection", "") or ""
    elif isinstance(body.get("kind"), str) and body.get("kind") not in ("commit",):
        kind = body["kind"]
    return RawRecord(received_at=received_at, kind=kind, body=body)


def normalize(raw: RawRecord, config: StreamConfig, observed_at: VirtualTime = 0) -> Optional[ExternalPost]:
    """RawRecord -> ExternalPost iff it is a post-creation record passing
    the language filter. Likes, follows, deletes and malformed frames
    filter to None."""
    if raw.kind != "app.bsky.feed.post":
        return None
    commit = raw.body.get("commit")
    if not isinstance(commit, dict) or commit.get("operation", "create") != "create":
        return None
    record = commit.get("record")
    if not isinstance(record, dict):
        return None
    text = record.get("text")
    if not isinstance(text, str) or not text:
        return None
    if config.language_filter:
        langs = record.get("langs") or []
        if not any(lang in config.language_filter for lang in langs):
            return None
    source_id = f"{raw.body.get('did', 'unknown')}/{commit.get('rkey', '')}"
    topics = tuple(
        feature.get("tag", "")
        for facet in record.get("facets") or []
        for feature in facet.get("features") or []
        if feature.get("$type", "").endswith("#tag")
    )
    return ExternalPost(
        source_id=source_id,
        text=text[: config.max_text_len],
        observed_at=observed_at,
        topics=tuple(t for t in topics if t),
    )


def sample_and_forward(
    posts: Iterable[ExternalPost],
    sample_rate: float,
    rng: random.Random,
    forward: Callable[[ExternalPost], bool],
    counters: Optional[IngestionCounters] = None,
) -> IngestionCounters:
    """Forward each post independently with probability sample_rate.

    `forward` returns False when the engine's inbound queue is full; the
    post is then dropped (newest-dropped backpressure) and counted.
    """
    counters = counters or IngestionCounters()
    for post in posts:
        counters.seen += 1
        if sample_rate < 1.0 and rng.random() >= sample_rate:
            counters.sampled_out += 1
            continue
        if forward(post):
            counters.forwarded += 1
        else:
            counters.dropped += 1
    return counters


# -- replay files ---------------------------------------------------------


def record_replay(records: Iterable[RawRecord], path: str | Path) -> int:
    """Write records as NDJSON; returns the number written."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(canonical_json(record.to_dict()) + "\n")
            n += 1
    return n


def load_replay(path: str | Path) -> list[RawRecord]:
    records: list[RawRecord] = []
    with open(path, "r", encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(RawRecord.from_dict(json.loads(line)))
            except (ValueError, KeyError) as exc:
                raise MalformedLine(i, str(exc)) from exc
    return records


def replay_virtual_times(records: list[RawRecord], gap_scale: float) -> list[VirtualTime]:
    """Map recorded wall-clock gaps onto virtual time. The first record
    lands at t=0; subsequent records preserve inter-arrival gaps scaled by
    gap_scale (0 collapses everything to t=0, order kept via seq)."""
    if not records:
        return []
    t0 = records[0].received_at
    return [max(0, int(round((r.received_at - t0) * 1000.0 * gap_scale))) for r in records]


def replay_external_posts(config: StreamConfig) -> list[ExternalPost]:
    """Load + normalize a replay file into virtually-timed external posts."""
    if not config.replay_path:
        return []
    records = load_replay(config.replay_path)
    times = replay_virtual_times(records, config.gap_scale)
    out: list[ExternalPost] = []
    for record, vt in zip(records, times):
        post = normalize(record, config, observed_at=vt)
        if post is not None:
            out.append(post)
    return out


# -- live stream ----------------------------------------------------------


async def connect_and_stream(
    config: StreamConfig,
    handle_record: Callable[[RawRecord], None],
    counters: Optional[IngestionCounters] = None,
    stop: Optional[asyncio.Event] = None,
):
    """Long-lived subscription to the JSON stream endpoint with
    exponential backoff (full jitter) on disconnect. Malformed frames are
    skipped and counted, never fatal."""
    import websockets

    counters = counters or IngestionCounters()
    stop = stop or asyncio.Event()
    backoff = config.backoff_initial
    jitter = random.Random()
    while not stop.is_set():
        try:
            async with websockets.connect(config.endpoint, max_size=2**22) as ws:
                backoff = config.backoff_initial
                while not stop.is_set():
                    frame = await asyncio.wait_for(ws.recv(), timeout=30.0)
                    if isinstance(frame, bytes):
                        frame = frame.decode("utf-8", errors="replace")
                    record = parse_frame(frame, received_at=time.time())
                    if record is None:
                        counters.protocol_errors += 1
                        continue
                    handle_record(record)
        except asyncio.CancelledError:
            raise
        except Exception as exc:
            if stop.is_set():
                break
            counters.reconnects += 1
            delay = jitter.uniform(0, backoff)
            log.warning("stream disconnected (%s); reconnecting in %.1fs", exc, delay)
            try:
                await asyncio.wait_for(stop.wait(), timeout=delay)
            except asyncio.TimeoutError:
                pass
            backoff = min(backoff * 2, config.backoff_max)
    return counters

"""Core value types shared across the simulator.

Everything here is an immutable value with a canonical JSON encoding
(snake_case field names, no extra whitespace). These encodings are the
wire format of the HTTP API, the persistence layer, and replay files.
Virtual time is integer milliseconds since the simulation epoch so that
event ordering and log hashing are exact.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Optional

# Integer milliseconds since simulation epoch.
VirtualTime = int

MIN_AGE = 13
MAX_AGE = 120

# Persona keys with dedicated fields; everything else round-trips via `extra`.
_PERSONA_KNOWN = {
    "handle",
    "age",
    "gender",
    "location",
    "political_orientation",
    "religious_orientation",
    "education",
    "behavioral_traits",
    "archetype",
}


class DomainError(Exception):
    pass


class MissingField(DomainError):
    def __init__(self, name: str):
        super().__init__(f"missing required field: {name}")
        self.field = name


class OutOfRange(DomainError):
    def __init__(self, name: str, value: Any):
        super().__init__(f"field {name} out of range: {value!r}")
        self.field = name
        self.value = value


class MalformedJson(DomainError):
    pass


class DanglingReference(DomainError):
    def __init__(self, post_id: str):
        super().__init__(f"unresolvable post reference: {post_id}")
        self.post_id = post_id


class Archetype(str, Enum):
    BENIGN = "benign"
    DISINFORMATIVE = "disinformative"


@dataclass(frozen=True)
class Persona:
    """Demographic + psychographic agent profile, extensible via traits
    and unknown top-level keys (both preserved through serialization)."""

    handle: str
    age: int
    gender: str = ""
    location: str = ""
    political_orientation: str = ""
    religious_orientation: str = ""
    education: str = ""
    behavioral_traits: tuple[tuple[str, str], ...] = ()
    archetype: Archetype = Archetype.BENIGN
    extra: tuple[tuple[str, Any], ...] = ()

    def trait(self, key: str) -> Optional[str]:
        for k, v in self.behavioral_traits:
            if k == key:
                return v
        return None

    def to_dict(self) -> dict:
        d: dict[str, Any] = {
            "handle": self.handle,
            "age": self.age,
            "gender": self.gender,
            "location": self.location,
            "political_orientation": self.political_orientation,
            "religious_orientation": self.religious_orientation,
            "education": self.education,
            "behavioral_traits": dict(self.behavioral_traits),
            "archetype": self.archetype.value,
        }
        for k, v in self.extra:
            d[k] = v
        return d

    @classmethod
    def from_dict(cls, raw: dict) -> "Persona":
        return validate_persona(raw)


def validate_persona(raw: Any) -> Persona:
    """Validate a raw JSON object into a Persona.

    Unknown top-level keys are preserved (sorted by key for canonical
    ordering) so that validate -> serialize -> validate is idempotent.
    """
    if isinstance(raw, (str, bytes)):
        try:
            raw = json.loads(raw)
        except (ValueError, TypeError) as exc:
            raise MalformedJson(str(exc)) from exc
    if not isinstance(raw, dict):
        raise MalformedJson(f"expected JSON object, got {type(raw).__name__}")
    handle = raw.get("handle")
    if not handle or not isinstance(handle, str):
        raise MissingField("handle")
    if "age" not in raw:
        raise MissingField("age")
    age = raw["age"]
    if not isinstance(age, int) or isinstance(age, bool) or not (MIN_AGE <= age <= MAX_AGE):
        raise OutOfRange("age", age)
    traits = raw.get("behavioral_traits", {})
    if not isinstance(traits, dict):
        raise MalformedJson("behavioral_traits must be an object")
    arch_raw = raw.get("archetype", Archetype.BENIGN.value)
    try:
        archetype = Archetype(arch_raw)
    except ValueError as exc:
        raise OutOfRange("archetype", arch_raw) from exc
    extra = tuple(sorted((k, v) for k, v in raw.items() if k not in _PERSONA_KNOWN))
    return Persona(
        handle=handle,
        age=age,
        gender=str(raw.get("gender", "")),
        location=str(raw.get("location", "")),
        political_orientation=str(raw.get("political_orientation", "")),
        religious_orientation=str(raw.get("religious_orientation", "")),
        education=str(raw.get("education", "")),
        behavioral_traits=tuple((str(k), str(v)) for k, v in traits.items()),
        archetype=archetype,
        extra=extra,
    )


@dataclass(frozen=True)
class Post:
    """A synthetic post. At most one of in_reply_to / repost_of is set;
    narrative_id, once set, is immutable and inherited by reposts."""

    post_id: str
    author: str  # AgentId, or "ext:<source_id>" never occurs: external posts stay out of the feed
    text: str
    created_at: VirtualTime
    image_prompt: Optional[str] = None
    image_ref: Optional[str] = None
    narrative_id: Optional[str] = None
    in_reply_to: Optional[str] = None
    repost_of: Optional[str] = None

    def __post_init__(self):
        if self.in_reply_to is not None and self.repost_of is not None:
            raise DomainError("post cannot be both a reply and a repost")
        if self.created_at < 0:
            raise DomainError("created_at must be nonnegative")

    def to_dict(self) -> dict:
        return {
            "post_id": self.post_id,
            "author": self.author,
            "text": self.text,
            "created_at": self.created_at,
            "image_prompt": self.image_prompt,
            "image_ref": self.image_ref,
            "narrative_id": self.narrative_id,
            "in_reply_to": self.in_reply_to,
            "repost_of": self.repost_of,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Post":
        return cls(
            post_id=d["post_id"],
            author=d["author"],
            text=d["text"],
            created_at=d["created_at"],
            image_prompt=d.get("image_prompt"),
            image_ref=d.get("image_ref"),
            narrative_id=d.get("narrative_id"),
            in_reply_to=d.get("in_reply_to"),
            repost_of=d.get("repost_of"),
        )


class InteractionKind(str, Enum):
    LIKE = "like"
    REPLY = "reply"
    REPOST = "repost"


@dataclass(frozen=True)
class Interaction:
    kind: InteractionKind
    actor: str
    target: str  # post_id
    at: VirtualTime
    produced_post: Optional[str] = None

    def __post_init__(self):
        if self.kind is InteractionKind.LIKE and self.produced_post is not None:
            raise DomainError("like carries no produced post")
        if self.kind is not InteractionKind.LIKE and self.produced_post is None:
            raise DomainError(f"{self.kind.value} must carry a produced post")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "actor": self.actor,
            "target": self.target,
            "at": self.at,
            "produced_post": self.produced_post,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Interaction":
        return cls(
            kind=InteractionKind(d["kind"]),
            actor=d["actor"],
            target=d["target"],
            at=d["at"],
            produced_post=d.get("produced_post"),
        )


@dataclass(frozen=True)
class ExternalPost:
    """A real post sampled from the external stream. Never enters the
    synthetic feed directly; agents only react to it as a stimulus."""

    source_id: str
    text: str
    observed_at: VirtualTime
    topics: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "source_id": self.source_id,
            "text": self.text,
            "observed_at": self.observed_at,
            "topics": list(self.topics),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExternalPost":
        return cls(
            source_id=d["source_id"],
            text=d["text"],
            observed_at=d["observed_at"],
            topics=tuple(d.get("topics") or ()),
        )


def canonical_json(obj: Any) -> str:
    """Canonical encoding used for log hashing and on-disk formats."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def narrative_of(post: Post, lookup: Callable[[str], Optional[Post]]) -> Optional[str]:
    """Effective narrative of a post: its own tag, or the nearest ancestor's
    along the repost_of / in_reply_to chain. Posts form a DAG by
    construction (targets must exist before the referencing post), so the
    walk terminates."""
    current = post
    while True:
        if current.narrative_id is not None:
            return current.narrative_id
        parent_id = current.repost_of or current.in_reply_to
        if parent_id is None:
            return None
        parent = lookup(parent_id)
        if parent is None:
            raise DanglingReference(parent_id)
        current = parent

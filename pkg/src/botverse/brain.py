"""Content generation: persona-conditioned prompts and text backends.

build_prompt renders a persona profile plus retrieved memory context into
a prompt bundle. generate() speaks the OpenAI-compatible chat-completion
protocol to any registered HTTP backend; stub_generate() is a fully
offline, deterministic template-bank expander used for reproducible runs
and tests. Backend failures never crash the engine: the action is skipped
and counted.
"""
from __future__ import annotations

import hashlib
import random
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional

import httpx

from .domain import Archetype, ExternalPost, Persona, Post

NARRATIVE_TAG_OPEN = "⟦N:"
NARRATIVE_TAG_CLOSE = "⟧"


class Task(str, Enum):
    COMPOSE_POST = "compose_post"
    COMPOSE_REPLY = "compose_reply"
    COMPOSE_REPOST_COMMENT = "compose_repost_comment"
    COMPOSE_IMAGE_PROMPT = "compose_image_prompt"


class BackendError(Exception):
    pass


class BackendTimeout(BackendError):
    pass


class BackendRejected(BackendError):
    def __init__(self, status: int):
        super().__init__(f"backend rejected request with status {status}")
        self.status = status


class AllRetriesExhausted(BackendError):
    pass


class RendererUnavailable(Exception):
    pass


@dataclass(frozen=True)
class BackendDescriptor:
    name: str
    endpoint: str
    model_id: str
    timeout: float = 30.0
    max_retries: int = 2


@dataclass(frozen=True)
class PromptBundle:
    system_text: str
    context_items: tuple[tuple[str, int, int], ...]  # (text, likes, reposts)
    task: Task
    stimulus_text: Optional[str] = None
    target_text: Optional[str] = None
    narrative_id: Optional[str] = None
    narrative_text: Optional[str] = None
    archetype: Archetype = Archetype.BENIGN
    persona_handle: str = ""
    topic: Optional[str] = None
    temperature: float = 0.9
    max_tokens: int = 256


@dataclass(frozen=True)
class GenerationResult:
    text: str
    backend: str
    latency: float
    truncated: bool = False


def render_system_text(persona: Persona) -> str:
    """Deterministic persona framing: identity sentence, psychographic
    sentence, then one sentence per behavioral trait in key order."""
    lines = [
        f"You are {persona.handle}, a {persona.age}-year-old {persona.gender or 'person'} "
        f"living in {persona.location or 'an unspecified place'}.",
        f"Your political orientation is {persona.political_orientation or 'unstated'}, "
        f"your religious orientation is {persona.religious_orientation or 'unstated'}, "
        f"and your education is {persona.education or 'unstated'}.",
    ]
    for key, value in sorted(persona.behavioral_traits):
        lines.append(f"Your trait '{key}' is: {value}.")
    for key, value in persona.extra:
        lines.append(f"Your attribute '{key}' is: {value}.")
    return "\n".join(lines)


def build_prompt(
    persona: Persona,
    context: list[tuple],  # (MemoryItem-like with text attached) -> (text, likes, reposts)
    task: Task,
    stimulus: Optional[ExternalPost] = None,
    target: Optional[Post] = None,
    narrative_id: Optional[str] = None,
    narrative_text: Optional[str] = None,
    topic: Optional[str] = None,
    temperature: Optional[float] = None,
    max_tokens: int = 256,
) -> PromptBundle:
    if temperature is None:
        temperature = 0.7 if task in (Task.COMPOSE_REPLY, Task.COMPOSE_REPOST_COMMENT) else 0.9
    return PromptBundle(
        system_text=render_system_text(persona),
        context_items=tuple((t, int(l), int(r)) for t, l, r in context),
        task=task,
        stimulus_text=stimulus.text if stimulus is not None else None,
        target_text=target.text if target is not None else None,
        narrative_id=narrative_id,
        narrative_text=narrative_text,
        archetype=persona.archetype,
        persona_handle=persona.handle,
        topic=topic,
        temperature=temperature,
        max_tokens=max_tokens,
    )


def _user_text(bundle: PromptBundle) -> str:
    parts = []
    if bundle.context_items:
        parts.append("Recent posts you remember (most salient first):")
        for text, likes, reposts in bundle.context_items:
            parts.append(f"- ({likes} likes, {reposts} reposts) {text}")
    if bundle.stimulus_text:
        parts.append(f"You just saw this post from outside your network: {bundle.stimulus_text}")
    if bundle.target_text:
        parts.append(f"The post you are responding to: {bundle.target_text}")
    if bundle.narrative_text:
        parts.append(f"Your current campaign message: {bundle.narrative_text}")
    task_line = {
        Task.COMPOSE_POST: "Write a short social media post in your own voice.",
        Task.COMPOSE_REPLY: "Write a reply to the post above, in your own voice.",
        Task.COMPOSE_REPOST_COMMENT: "Write a one-line comment to attach to your repost.",
        Task.COMPOSE_IMAGE_PROMPT: f"Write a vivid one-sentence image prompt about: {bundle.topic or 'your day'}.",
    }[bundle.task]
    parts.append(task_line)
    return "\n".join(parts)


def generate(bundle: PromptBundle, backend: BackendDescriptor) -> GenerationResult:
    """Chat-completion call with bounded retries and backoff."""
    payload = {
        "model": backend.model_id,
        "messages": [
            {"role": "system", "content": bundle.system_text},
            {"role": "user", "content": _user_text(bundle)},
        ],
        "temperature": bundle.temperature,
        "max_tokens": bundle.max_tokens,
    }
    start = time.monotonic()
    last_error: Optional[Exception] = None
    for attempt in range(backend.max_retries + 1):
        if attempt:
            time.sleep(min(0.5 * 2 ** (attempt - 1), 5.0))
        try:
            resp = httpx.post(
                backend.endpoint.rstrip("/") + "/chat/completions",
                json=payload,
                timeout=backend.timeout,
            )
        except httpx.TimeoutException as exc:
            last_error = BackendTimeout(str(exc))
            continue
        except httpx.HTTPError as exc:
            last_error = BackendError(str(exc))
            continue
        if resp.status_code >= 500:
            last_error = BackendRejected(resp.status_code)
            continue
        if resp.status_code >= 400:
            raise BackendRejected(resp.status_code)
        body = resp.json()
        choice = body["choices"][0]
        text = (choice["message"]["content"] or "").strip()
        if not text:
            last_error = BackendError("empty completion")
            continue
        return GenerationResult(
            text=text,
            backend=backend.name,
            latency=time.monotonic() - start,
            truncated=choice.get("finish_reason") == "length",
        )
    raise AllRetriesExhausted(str(last_error))


# Offline template bank. Slots: {handle}, {location}, {topic}, {snippet}.
_TEMPLATES = {
    (Task.COMPOSE_POST, Archetype.BENIGN): [
        "Quiet morning here in {location}. Thinking about {topic} and keeping an open mind.",
        "Saw a lot of noise about {topic} today. Checking sources before I share anything.",
        "{topic} is everywhere on my feed. Curious what people actually verified.",
        "Sharing a thought from {location}: {topic} deserves a calmer conversation.",
    ],
    (Task.COMPOSE_POST, Archetype.DISINFORMATIVE): [
        "They don't want you to know the truth about {topic}. Wake up.",
        "BREAKING: what the media hides about {topic} will shock you.",
        "I did my own research on {topic}. The official story does not add up.",
        "Everyone in {location} is being lied to about {topic}. Spread this.",
    ],
    (Task.COMPOSE_REPLY, Archetype.BENIGN): [
        "Do you have a source for this? \"{snippet}\" sounds exaggerated to me.",
        "I'd be careful with claims like \"{snippet}\" before verifying.",
        "Interesting point, but \"{snippet}\" needs evidence.",
    ],
    (Task.COMPOSE_REPLY, Archetype.DISINFORMATIVE): [
        "You're missing the bigger picture. \"{snippet}\" is exactly what they planted. "
        "Look at who benefits, follow the money, and ask why this surfaced now.",
        "Classic deflection. \"{snippet}\" is the cover story; the real documents say otherwise "
        "and thousands of people have already seen them.",
        "Keep doubting if you want, but \"{snippet}\" has been debunked by independent "
        "researchers again and again. The silence from officials says everything.",
    ],
    (Task.COMPOSE_REPOST_COMMENT, Archetype.BENIGN): [
        "Worth reading.",
        "Signal-boosting this.",
        "This matches what I've seen elsewhere.",
    ],
    (Task.COMPOSE_REPOST_COMMENT, Archetype.DISINFORMATIVE): [
        "This is the proof. Share before it gets taken down.",
        "Exactly what I've been saying. Amplify.",
        "Finally someone says it out loud.",
    ],
    (Task.COMPOSE_IMAGE_PROMPT, Archetype.BENIGN): [
        "A calm photograph capturing {topic}, soft light, documentary style.",
        "A wide shot of {topic}, natural colors, journalistic framing.",
    ],
    (Task.COMPOSE_IMAGE_PROMPT, Archetype.DISINFORMATIVE): [
        "A dramatic, high-contrast image of {topic}, ominous sky, viral poster style.",
        "A shocking close-up scene of {topic}, red tint, urgent mood.",
    ],
}


def stub_generate(bundle: PromptBundle, rng: random.Random) -> GenerationResult:
    """Deterministic offline generation.

    Pure function of (bundle, rng state). Disinformative post/reply output
    under an active campaign embeds an explicit narrative tag token so
    diffusion measurement needs no classifier.
    """
    templates = _TEMPLATES[(bundle.task, bundle.archetype)]
    template = templates[rng.randrange(len(templates))]
    topic = bundle.topic
    if topic is None:
        if bundle.narrative_text:
            topic = bundle.narrative_text.split(".")[0][:60]
        elif bundle.stimulus_text:
            topic = bundle.stimulus_text[:60]
        elif bundle.context_items:
            topic = bundle.context_items[0][0][:60]
        else:
            topic = "the day's news"
    snippet = (bundle.target_text or topic or "")[:60]
    text = template.format(
        handle=bundle.persona_handle,
        location="my town",
        topic=topic,
        snippet=snippet,
    )
    if (
        bundle.archetype is Archetype.DISINFORMATIVE
        and bundle.narrative_id is not None
        and bundle.task in (Task.COMPOSE_POST, Task.COMPOSE_REPLY, Task.COMPOSE_REPOST_COMMENT)
    ):
        text = f"{text} {NARRATIVE_TAG_OPEN}{bundle.narrative_id}{NARRATIVE_TAG_CLOSE}"
    bound = bundle.max_tokens * 8  # generous chars-per-token bound
    truncated = len(text) > bound
    return GenerationResult(text=text[:bound], backend="stub", latency=0.0, truncated=truncated)


class StubRenderer:
    """Content-addressed stand-in for an image pipeline: writes the prompt
    to a sidecar file and returns the prompt's hash as the image ref."""

    def __init__(self, out_dir: Optional[Path] = None):
        self.out_dir = Path(out_dir) if out_dir is not None else None

    def render(self, prompt: str) -> str:
        ref = hashlib.sha256(prompt.encode("utf-8")).hexdigest()
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            (self.out_dir / f"{ref}.prompt.txt").write_text(prompt, encoding="utf-8")
        return ref


def compose_image_prompt(
    persona: Persona,
    topic: str,
    rng: random.Random,
    renderer: Optional[StubRenderer] = None,
    backend: Optional[BackendDescriptor] = None,
) -> tuple[str, Optional[str], bool]:
    """Returns (image_prompt, image_ref, degraded). degraded=True means the
    renderer was unavailable and the post falls back to text-only."""
    bundle = build_prompt(persona, [], Task.COMPOSE_IMAGE_PROMPT, topic=topic)
    if backend is not None:
        result = generate(bundle, backend)
    else:
        result = stub_generate(bundle, rng)
    prompt = result.text
    if renderer is None:
        return prompt, None, True
    try:
        return prompt, renderer.render(prompt), False
    except OSError:
        return prompt, None, True

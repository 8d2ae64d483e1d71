"""Digital-DNA action logic and human-like temporal sampling.

Agents run a cyclic program over a small action alphabet. Activity is
generated on two timescales: session starts follow a nonhomogeneous
Poisson process (base rate modulated by a 24-hour circadian curve,
sampled by thinning), and actions inside a session are separated by
lognormal gaps. Together these produce circadian rhythm and bursty,
super-Poissonian inter-action gaps.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

from .domain import VirtualTime

MS_PER_DAY = 86_400_000
MS_PER_HOUR = 3_600_000


class ActionCode(str, Enum):
    POST = "P"
    REPLY = "R"
    REPOST = "S"
    LIKE = "L"
    INGEST_REACT = "I"
    WAIT = "W"


TARGETED = frozenset({ActionCode.REPLY, ActionCode.REPOST, ActionCode.LIKE})


@dataclass
class DnaProgram:
    """Cyclic behavioral sequence. With probability mutation_rate a step is
    resampled from the program's own non-wait action frequencies instead of
    following the sequence."""

    sequence: list[ActionCode]
    position: int = 0
    mutation_rate: float = 0.0

    def __post_init__(self):
        self.sequence = [ActionCode(c) for c in self.sequence]
        if not self.sequence:
            raise ValueError("sequence must be non-empty")
        if all(c is ActionCode.WAIT for c in self.sequence):
            raise ValueError("sequence needs at least one non-wait code")
        if not (0.0 <= self.mutation_rate <= 1.0):
            raise ValueError("mutation_rate must be in [0, 1]")
        self.position %= len(self.sequence)

    def action_pool(self) -> list[ActionCode]:
        return [c for c in self.sequence if c is not ActionCode.WAIT]

    def to_state(self) -> dict:
        return {
            "sequence": [c.value for c in self.sequence],
            "position": self.position,
            "mutation_rate": self.mutation_rate,
        }

    @classmethod
    def from_state(cls, d: dict) -> "DnaProgram":
        return cls(
            sequence=[ActionCode(c) for c in d["sequence"]],
            position=d.get("position", 0),
            mutation_rate=d.get("mutation_rate", 0.0),
        )


# Bimodal default: morning shoulder and a strong evening peak, small
# overnight floor. Normalized so max == 1.
DEFAULT_CIRCADIAN = (
    0.05, 0.03, 0.02, 0.02, 0.03, 0.06, 0.15, 0.35,
    0.55, 0.60, 0.50, 0.45, 0.50, 0.55, 0.45, 0.40,
    0.45, 0.55, 0.70, 0.90, 1.00, 0.85, 0.45, 0.15,
)


@dataclass
class TemporalModel:
    base_rate: float = 6.0  # expected sessions per virtual day
    circadian: tuple[float, ...] = DEFAULT_CIRCADIAN
    session_len_mu: float = math.log(4.0)  # median 4 actions / session
    session_len_sigma: float = 0.6
    intra_gap_mu: float = math.log(45.0)  # median 45 s between actions
    intra_gap_sigma: float = 1.0

    def __post_init__(self):
        self.circadian = tuple(float(c) for c in self.circadian)
        if self.base_rate <= 0:
            raise ValueError("base_rate must be positive")
        if len(self.circadian) != 24:
            raise ValueError("circadian curve needs 24 hourly values")
        if abs(max(self.circadian) - 1.0) > 1e-9:
            raise ValueError("circadian curve must be normalized to max 1")
        if min(self.circadian) < 0.02:
            raise ValueError("circadian floor is 0.02")
        if self.session_len_sigma <= 0 or self.intra_gap_sigma <= 0:
            raise ValueError("lognormal sigmas must be positive")

    def to_state(self) -> dict:
        return {
            "base_rate": self.base_rate,
            "circadian": list(self.circadian),
            "session_len_mu": self.session_len_mu,
            "session_len_sigma": self.session_len_sigma,
            "intra_gap_mu": self.intra_gap_mu,
            "intra_gap_sigma": self.intra_gap_sigma,
        }

    @classmethod
    def from_state(cls, d: dict) -> "TemporalModel":
        base = cls()
        kwargs = {k: d[k] for k in base.to_state() if k in d}
        if "circadian" in kwargs:
            kwargs["circadian"] = tuple(kwargs["circadian"])
        return cls(**kwargs)


@dataclass(frozen=True)
class ActionDecision:
    code: ActionCode
    at: VirtualTime
    target: Optional[str] = None

    def __post_init__(self):
        if self.code in TARGETED:
            pass  # target may be resolved lazily at dispatch time
        elif self.target is not None:
            raise ValueError(f"{self.code.value} carries no target")

    def to_dict(self) -> dict:
        return {"code": self.code.value, "at": self.at, "target": self.target}


def hour_of(t: VirtualTime) -> int:
    return (t % MS_PER_DAY) // MS_PER_HOUR


def next_session_start(now: VirtualTime, model: TemporalModel, rng: random.Random) -> VirtualTime:
    """Next session arrival after `now`, via thinning.

    Candidate arrivals are drawn from a homogeneous Poisson process at the
    peak rate base_rate/day and accepted with probability equal to the
    circadian multiplier of the candidate's hour.
    """
    peak_rate_per_ms = model.base_rate / MS_PER_DAY
    t = float(now)
    while True:
        t += rng.expovariate(peak_rate_per_ms)
        if rng.random() <= model.circadian[hour_of(int(t))]:
            return max(int(math.ceil(t)), now + 1)


def sample_session(
    program: DnaProgram, model: TemporalModel, start: VirtualTime, rng: random.Random
) -> list[ActionDecision]:
    """One burst of activity beginning at `start`.

    Draws the number of non-wait actions from the session-length lognormal
    (rounded up, at least 1) and walks the cyclic DNA sequence. Wait codes
    emit no action; each one adds an extra intra-session gap before the
    next action. Advances program.position.
    """
    n = max(1, math.ceil(rng.lognormvariate(model.session_len_mu, model.session_len_sigma)))
    pool = program.action_pool()
    out: list[ActionDecision] = []
    t = float(start)
    first = True
    while len(out) < n:
        code = program.sequence[program.position]
        program.position = (program.position + 1) % len(program.sequence)
        if program.mutation_rate > 0 and rng.random() < program.mutation_rate:
            code = pool[rng.randrange(len(pool))]
        if code is ActionCode.WAIT:
            t += rng.lognormvariate(model.intra_gap_mu, model.intra_gap_sigma) * 1000.0
            continue
        if not first:
            t += rng.lognormvariate(model.intra_gap_mu, model.intra_gap_sigma) * 1000.0
        first = False
        at = int(math.ceil(t))
        if out and at <= out[-1].at:
            at = out[-1].at + 1
        out.append(ActionDecision(code=code, at=at))
    return out


def choose_target(
    code: ActionCode,
    scored_items: Sequence[tuple],  # (MemoryItem, score) pairs, best first
    rng: random.Random,
    active_narrative: Optional[str] = None,
    narrative_of_post=None,
    narrative_bias: float = 3.0,
) -> Optional[str]:
    """Pick a target post for R/S/L, weighted by memory score.

    An agent with an active narrative campaign upweights posts already
    carrying that narrative by `narrative_bias`. Returns None on empty
    memory (the action becomes a no-op).
    """
    if code not in TARGETED:
        raise ValueError(f"{code.value} takes no target")
    if not scored_items:
        return None
    weights = []
    for item, s in scored_items:
        w = max(s, 1e-12)
        if active_narrative is not None and narrative_of_post is not None:
            if narrative_of_post(item.post_id) == active_narrative:
                w *= narrative_bias
        weights.append(w)
    total = sum(weights)
    u = rng.random() * total
    acc = 0.0
    for (item, _), w in zip(scored_items, weights):
        acc += w
        if u <= acc:
            return item.post_id
    return scored_items[-1][0].post_id

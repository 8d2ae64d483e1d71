"""Factory persistence layer: authoritative store for one simulation run.

Two interchangeable backends behind one contract: an in-memory reference
implementation (tests, fast desk runs) and a SQL backend (sqlalchemy
core; any connection string, sqlite file by default). Posts, interactions
and events are append-only; referential integrity is enforced on write.
Checkpoints carry a content hash so corruption is detected on resume.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Iterator, Optional

import sqlalchemy as sa

from .domain import Interaction, Post, canonical_json


class StoreError(Exception):
    pass


class IntegrityViolation(StoreError):
    pass


class InvalidCursor(StoreError):
    pass


class NoCheckpoint(StoreError):
    pass


class CorruptCheckpoint(StoreError):
    pass


@dataclass(frozen=True)
class TimelinePage:
    posts: list[Post]
    next_cursor: Optional[str]


def _encode_cursor(created_at: int, post_id: str) -> str:
    return f"{created_at}:{post_id}"


def _decode_cursor(cursor: str) -> tuple[int, str]:
    try:
        at, post_id = cursor.split(":", 1)
        return int(at), post_id
    except ValueError as exc:
        raise InvalidCursor(cursor) from exc


def _after_cursor(post: Post, cursor: tuple[int, str]) -> bool:
    # Timeline order: created_at desc, post_id asc. Strictly after cursor.
    at, pid = cursor
    return post.created_at < at or (post.created_at == at and post.post_id > pid)


class Store:
    """Backend-neutral contract; see InMemoryStore for reference semantics."""

    # agents ---------------------------------------------------------------
    def put_agent(self, agent_id: str, persona: dict, memory_params: dict) -> None:
        raise NotImplementedError

    def get_agent(self, agent_id: str) -> Optional[dict]:
        raise NotImplementedError

    def list_agents(self) -> list[str]:
        raise NotImplementedError

    def update_agent_params(self, agent_id: str, memory_params: dict) -> None:
        raise NotImplementedError

    # posts / interactions -------------------------------------------------
    def put_post(self, post: Post) -> None:
        raise NotImplementedError

    def get_post(self, post_id: str) -> Optional[Post]:
        raise NotImplementedError

    def engagement(self, post_id: str) -> tuple[int, int]:
        raise NotImplementedError

    def bump_engagement(self, post_id: str, kind: str) -> tuple[int, int]:
        raise NotImplementedError

    def append_interaction(self, interaction: Interaction) -> None:
        raise NotImplementedError

    def interactions(self, since: Optional[int] = None) -> list[Interaction]:
        raise NotImplementedError

    def get_timeline(
        self,
        author: Optional[str] = None,
        narrative: Optional[str] = None,
        since: Optional[int] = None,
        limit: int = 100,
        cursor: Optional[str] = None,
    ) -> TimelinePage:
        raise NotImplementedError

    def all_posts(self) -> list[Post]:
        raise NotImplementedError

    # events ---------------------------------------------------------------
    def append_event(self, index: int, event: dict) -> None:
        raise NotImplementedError

    def events(self) -> list[tuple[int, dict]]:
        raise NotImplementedError

    def event_count(self) -> int:
        raise NotImplementedError

    def truncate_after_event(self, index: int) -> None:
        """Drop posts/interactions/events newer than the given applied-event
        index (used on resume: later state is regenerated deterministically)."""
        raise NotImplementedError

    # metadata / checkpoints ----------------------------------------------
    def set_meta(self, key: str, value: str) -> None:
        raise NotImplementedError

    def get_meta(self, key: str) -> Optional[str]:
        raise NotImplementedError

    def save_checkpoint(self, event_index: int, state: dict) -> None:
        raise NotImplementedError

    def load_latest_checkpoint(self) -> tuple[int, dict]:
        raise NotImplementedError

    def counts(self) -> dict:
        raise NotImplementedError

    def close(self) -> None:
        pass


def _checkpoint_hash(state_json: str) -> str:
    return hashlib.sha256(state_json.encode("utf-8")).hexdigest()


def _timeline_filter(posts: list[Post], author, narrative, since) -> list[Post]:
    out = posts
    if author is not None:
        out = [p for p in out if p.author == author]
    if narrative is not None:
        out = [p for p in out if p.narrative_id == narrative]
    if since is not None:
        out = [p for p in out if p.created_at >= since]
    return out


class InMemoryStore(Store):
    """Reference backend: plain dicts, no durability."""

    def __init__(self):
        self._agents: dict[str, dict] = {}
        self._posts: dict[str, Post] = {}
        self._engagement: dict[str, list[int]] = {}  # post_id -> [likes, reposts]
        self._interactions: list[Interaction] = []
        self._events: list[tuple[int, dict]] = []
        self._meta: dict[str, str] = {}
        self._checkpoint: Optional[tuple[int, str, str]] = None  # (index, json, hash)
        # event index high-water marks for truncation
        self._post_event: dict[str, int] = {}
        self._interaction_event: list[int] = []

    def put_agent(self, agent_id, persona, memory_params):
        self._agents[agent_id] = {
            "agent_id": agent_id,
            "persona": persona,
            "memory_params": memory_params,
        }

    def get_agent(self, agent_id):
        row = self._agents.get(agent_id)
        return dict(row) if row else None

    def list_agents(self):
        return sorted(self._agents)

    def update_agent_params(self, agent_id, memory_params):
        if agent_id not in self._agents:
            raise IntegrityViolation(f"unknown agent {agent_id}")
        self._agents[agent_id]["memory_params"] = memory_params

    def put_post(self, post, event_index: int = -1):
        parent = post.in_reply_to or post.repost_of
        if parent is not None and parent not in self._posts:
            raise IntegrityViolation(f"parent post {parent} does not exist")
        if post.post_id in self._posts:
            raise IntegrityViolation(f"duplicate post {post.post_id}")
        self._posts[post.post_id] = post
        self._engagement[post.post_id] = [0, 0]
        self._post_event[post.post_id] = event_index

    def get_post(self, post_id):
        return self._posts.get(post_id)

    def engagement(self, post_id):
        likes, reposts = self._engagement.get(post_id, (0, 0))
        return likes, reposts

    def bump_engagement(self, post_id, kind):
        if post_id not in self._engagement:
            raise IntegrityViolation(f"unknown post {post_id}")
        slot = self._engagement[post_id]
        if kind == "like":
            slot[0] += 1
        elif kind == "repost":
            slot[1] += 1
        return slot[0], slot[1]

    def append_interaction(self, interaction, event_index: int = -1):
        if interaction.target not in self._posts:
            raise IntegrityViolation(f"interaction targets unknown post {interaction.target}")
        if interaction.produced_post is not None and interaction.produced_post not in self._posts:
            raise IntegrityViolation(f"produced post {interaction.produced_post} does not exist")
        self._interactions.append(interaction)
        self._interaction_event.append(event_index)

    def interactions(self, since=None):
        if since is None:
            return list(self._interactions)
        return [i for i in self._interactions if i.at >= since]

    def get_timeline(self, author=None, narrative=None, since=None, limit=100, cursor=None):
        posts = _timeline_filter(list(self._posts.values()), author, narrative, since)
        posts.sort(key=lambda p: (-p.created_at, p.post_id))
        if cursor is not None:
            cur = _decode_cursor(cursor)
            posts = [p for p in posts if _after_cursor(p, cur)]
        page = posts[:limit]
        next_cursor = None
        if len(posts) > limit and page:
            next_cursor = _encode_cursor(page[-1].created_at, page[-1].post_id)
        return TimelinePage(posts=page, next_cursor=next_cursor)

    def all_posts(self):
        return sorted(self._posts.values(), key=lambda p: (p.created_at, p.post_id))

    def append_event(self, index, event):
        self._events.append((index, event))

    def events(self):
        return list(self._events)

    def event_count(self):
        return len(self._events)

    def truncate_after_event(self, index):
        self._events = [(i, e) for i, e in self._events if i <= index]
        keep_posts = {pid for pid, ei in self._post_event.items() if ei <= index}
        for pid in list(self._posts):
            if pid not in keep_posts:
                del self._posts[pid]
                del self._engagement[pid]
                del self._post_event[pid]
        kept, kept_ei = [], []
        for inter, ei in zip(self._interactions, self._interaction_event):
            if ei <= index:
                kept.append(inter)
                kept_ei.append(ei)
        self._interactions, self._interaction_event = kept, kept_ei
        # engagement counters are regenerated with the events; rebuild from kept interactions
        for slot in self._engagement.values():
            slot[0] = slot[1] = 0
        for inter in self._interactions:
            if inter.kind.value == "like":
                self._engagement[inter.target][0] += 1
            elif inter.kind.value == "repost":
                self._engagement[inter.target][1] += 1

    def set_meta(self, key, value):
        self._meta[key] = value

    def get_meta(self, key):
        return self._meta.get(key)

    def save_checkpoint(self, event_index, state):
        state_json = canonical_json(state)
        self._checkpoint = (event_index, state_json, _checkpoint_hash(state_json))

    def load_latest_checkpoint(self):
        if self._checkpoint is None:
            raise NoCheckpoint("store has no checkpoint")
        index, state_json, digest = self._checkpoint
        if _checkpoint_hash(state_json) != digest:
            raise CorruptCheckpoint("checkpoint hash mismatch")
        return index, json.loads(state_json)

    def counts(self):
        return {
            "agents": len(self._agents),
            "posts": len(self._posts),
            "interactions": len(self._interactions),
            "events": len(self._events),
        }


class SqlStore(Store):
    """SQL backend via sqlalchemy core. Writes commit before returning, so
    acknowledged writes survive a process kill. Migration is idempotent."""

    def __init__(self, url: str):
        try:
            self._engine = sa.create_engine(url)
            self._meta_obj = sa.MetaData()
            self._define_tables()
            self._meta_obj.create_all(self._engine)  # idempotent
        except sa.exc.SQLAlchemyError as exc:
            raise StoreError(f"cannot open store at {url}: {exc}") from exc

    def _define_tables(self):
        m = self._meta_obj
        self.t_agents = sa.Table(
            "agents", m,
            sa.Column("agent_id", sa.String, primary_key=True),
            sa.Column("persona", sa.Text, nullable=False),
            sa.Column("memory_params", sa.Text, nullable=False),
        )
        self.t_posts = sa.Table(
            "posts", m,
            sa.Column("post_id", sa.String, primary_key=True),
            sa.Column("author", sa.String, nullable=False),
            sa.Column("created_at", sa.BigInteger, nullable=False, index=True),
            sa.Column("narrative_id", sa.String, nullable=True),
            sa.Column("likes", sa.Integer, nullable=False, default=0),
            sa.Column("reposts", sa.Integer, nullable=False, default=0),
            sa.Column("event_index", sa.BigInteger, nullable=False, default=-1),
            sa.Column("body", sa.Text, nullable=False),
        )
        self.t_interactions = sa.Table(
            "interactions", m,
            sa.Column("id", sa.Integer, primary_key=True, autoincrement=True),
            sa.Column("kind", sa.String, nullable=False),
            sa.Column("actor", sa.String, nullable=False),
            sa.Column("target", sa.String, nullable=False),
            sa.Column("at", sa.BigInteger, nullable=False),
            sa.Column("produced_post", sa.String, nullable=True),
            sa.Column("event_index", sa.BigInteger, nullable=False, default=-1),
        )
        self.t_events = sa.Table(
            "events", m,
            sa.Column("idx", sa.BigInteger, primary_key=True),
            sa.Column("body", sa.Text, nullable=False),
        )
        self.t_meta = sa.Table(
            "run_meta", m,
            sa.Column("key", sa.String, primary_key=True),
            sa.Column("value", sa.Text, nullable=False),
        )
        self.t_checkpoints = sa.Table(
            "checkpoints", m,
            sa.Column("event_index", sa.BigInteger, primary_key=True),
            sa.Column("state", sa.Text, nullable=False),
            sa.Column("digest", sa.String, nullable=False),
        )

    def put_agent(self, agent_id, persona, memory_params):
        with self._engine.begin() as conn:
            conn.execute(self.t_agents.delete().where(self.t_agents.c.agent_id == agent_id))
            conn.execute(
                self.t_agents.insert().values(
                    agent_id=agent_id,
                    persona=json.dumps(persona),
                    memory_params=json.dumps(memory_params),
                )
            )

    def get_agent(self, agent_id):
        with self._engine.connect() as conn:
            row = conn.execute(
                sa.select(self.t_agents).where(self.t_agents.c.agent_id == agent_id)
            ).first()
        if row is None:
            return None
        return {
            "agent_id": row.agent_id,
            "persona": json.loads(row.persona),
            "memory_params": json.loads(row.memory_params),
        }

    def list_agents(self):
        with self._engine.connect() as conn:
            rows = conn.execute(sa.select(self.t_agents.c.agent_id).order_by(self.t_agents.c.agent_id)).all()
        return [r.agent_id for r in rows]

    def update_agent_params(self, agent_id, memory_params):
        with self._engine.begin() as conn:
            result = conn.execute(
                self.t_agents.update()
                .where(self.t_agents.c.agent_id == agent_id)
                .values(memory_params=json.dumps(memory_params))
            )
            if result.rowcount == 0:
                raise IntegrityViolation(f"unknown agent {agent_id}")

    def put_post(self, post, event_index: int = -1):
        parent = post.in_reply_to or post.repost_of
        with self._engine.begin() as conn:
            if parent is not None:
                exists = conn.execute(
                    sa.select(self.t_posts.c.post_id).where(self.t_posts.c.post_id == parent)
                ).first()
                if exists is None:
                    raise IntegrityViolation(f"parent post {parent} does not exist")
            dup = conn.execute(
                sa.select(self.t_posts.c.post_id).where(self.t_posts.c.post_id == post.post_id)
            ).first()
            if dup is not None:
                raise IntegrityViolation(f"duplicate post {post.post_id}")
            conn.execute(
                self.t_posts.insert().values(
                    post_id=post.post_id,
                    author=post.author,
                    created_at=post.created_at,
                    narrative_id=post.narrative_id,
                    likes=0,
                    reposts=0,
                    event_index=event_index,
                    body=canonical_json(post.to_dict()),
                )
            )

    def get_post(self, post_id):
        with self._engine.connect() as conn:
            row = conn.execute(sa.select(self.t_posts.c.body).where(self.t_posts.c.post_id == post_id)).first()
        return Post.from_dict(json.loads(row.body)) if row else None

    def engagement(self, post_id):
        with self._engine.connect() as conn:
            row = conn.execute(
                sa.select(self.t_posts.c.likes, self.t_posts.c.reposts).where(self.t_posts.c.post_id == post_id)
            ).first()
        return (row.likes, row.reposts) if row else (0, 0)

    def bump_engagement(self, post_id, kind):
        col = {"like": self.t_posts.c.likes, "repost": self.t_posts.c.reposts}.get(kind)
        with self._engine.begin() as conn:
            if col is not None:
                result = conn.execute(
                    self.t_posts.update().where(self.t_posts.c.post_id == post_id).values({col.name: col + 1})
                )
                if result.rowcount == 0:
                    raise IntegrityViolation(f"unknown post {post_id}")
            row = conn.execute(
                sa.select(self.t_posts.c.likes, self.t_posts.c.reposts).where(self.t_posts.c.post_id == post_id)
            ).first()
        if row is None:
            raise IntegrityViolation(f"unknown post {post_id}")
        return row.likes, row.reposts

    def append_interaction(self, interaction, event_index: int = -1):
        with self._engine.begin() as conn:
            target = conn.execute(
                sa.select(self.t_posts.c.post_id).where(self.t_posts.c.post_id == interaction.target)
            ).first()
            if target is None:
                raise IntegrityViolation(f"interaction targets unknown post {interaction.target}")
            if interaction.produced_post is not None:
                produced = conn.execute(
                    sa.select(self.t_posts.c.post_id).where(self.t_posts.c.post_id == interaction.produced_post)
                ).first()
                if produced is None:
                    raise IntegrityViolation(f"produced post {interaction.produced_post} does not exist")
            conn.execute(
                self.t_interactions.insert().values(
                    kind=interaction.kind.value,
                    actor=interaction.actor,
                    target=interaction.target,
                    at=interaction.at,
                    produced_post=interaction.produced_post,
                    event_index=event_index,
                )
            )

    def interactions(self, since=None):
        query = sa.select(self.t_interactions).order_by(self.t_interactions.c.id)
        if since is not None:
            query = query.where(self.t_interactions.c.at >= since)
        with self._engine.connect() as conn:
            rows = conn.execute(query).all()
        return [
            Interaction.from_dict(
                {"kind": r.kind, "actor": r.actor, "target": r.target, "at": r.at, "produced_post": r.produced_post}
            )
            for r in rows
        ]

    def get_timeline(self, author=None, narrative=None, since=None, limit=100, cursor=None):
        query = sa.select(self.t_posts.c.body, self.t_posts.c.created_at, self.t_posts.c.post_id)
        if author is not None:
            query = query.where(self.t_posts.c.author == author)
        if narrative is not None:
            query = query.where(self.t_posts.c.narrative_id == narrative)
        if since is not None:
            query = query.where(self.t_posts.c.created_at >= since)
        if cursor is not None:
            at, pid = _decode_cursor(cursor)
            query = query.where(
                sa.or_(
                    self.t_posts.c.created_at < at,
                    sa.and_(self.t_posts.c.created_at == at, self.t_posts.c.post_id > pid),
                )
            )
        query = query.order_by(self.t_posts.c.created_at.desc(), self.t_posts.c.post_id.asc()).limit(limit + 1)
        with self._engine.connect() as conn:
            rows = conn.execute(query).all()
        page = [Post.from_dict(json.loads(r.body)) for r in rows[:limit]]
        next_cursor = None
        if len(rows) > limit and page:
            next_cursor = _encode_cursor(page[-1].created_at, page[-1].post_id)
        return TimelinePage(posts=page, next_cursor=next_cursor)

    def all_posts(self):
        with self._engine.connect() as conn:
            rows = conn.execute(
                sa.select(self.t_posts.c.body).order_by(self.t_posts.c.created_at, self.t_posts.c.post_id)
            ).all()
        return [Post.from_dict(json.loads(r.body)) for r in rows]

    def append_event(self, index, event):
        with self._engine.begin() as conn:
            conn.execute(self.t_events.insert().values(idx=index, body=canonical_json(event)))

    def events(self):
        with self._engine.connect() as conn:
            rows = conn.execute(sa.select(self.t_events).order_by(self.t_events.c.idx)).all()
        return [(r.idx, json.loads(r.body)) for r in rows]

    def event_count(self):
        with self._engine.connect() as conn:
            return conn.execute(sa.select(sa.func.count()).select_from(self.t_events)).scalar_one()

    def truncate_after_event(self, index):
        with self._engine.begin() as conn:
            conn.execute(self.t_events.delete().where(self.t_events.c.idx > index))
            conn.execute(self.t_interactions.delete().where(self.t_interactions.c.event_index > index))
            conn.execute(self.t_posts.delete().where(self.t_posts.c.event_index > index))
            conn.execute(self.t_posts.update().values(likes=0, reposts=0))
            rows = conn.execute(sa.select(self.t_interactions.c.kind, self.t_interactions.c.target)).all()
            for kind, target in rows:
                col = {"like": self.t_posts.c.likes, "repost": self.t_posts.c.reposts}.get(kind)
                if col is not None:
                    conn.execute(self.t_posts.update().where(self.t_posts.c.post_id == target).values({col.name: col + 1}))

    def set_meta(self, key, value):
        with self._engine.begin() as conn:
            conn.execute(self.t_meta.delete().where(self.t_meta.c.key == key))
            conn.execute(self.t_meta.insert().values(key=key, value=value))

    def get_meta(self, key):
        with self._engine.connect() as conn:
            row = conn.execute(sa.select(self.t_meta.c.value).where(self.t_meta.c.key == key)).first()
        return row.value if row else None

    def save_checkpoint(self, event_index, state):
        state_json = canonical_json(state)
        with self._engine.begin() as conn:
            conn.execute(self.t_checkpoints.delete())
            conn.execute(
                self.t_checkpoints.insert().values(
                    event_index=event_index, state=state_json, digest=_checkpoint_hash(state_json)
                )
            )

    def load_latest_checkpoint(self):
        with self._engine.connect() as conn:
            row = conn.execute(
                sa.select(self.t_checkpoints).order_by(self.t_checkpoints.c.event_index.desc())
            ).first()
        if row is None:
            raise NoCheckpoint("store has no checkpoint")
        if _checkpoint_hash(row.state) != row.digest:
            raise CorruptCheckpoint("checkpoint hash mismatch")
        return row.event_index, json.loads(row.state)

    def counts(self):
        with self._engine.connect() as conn:
            return {
                "agents": conn.execute(sa.select(sa.func.count()).select_from(self.t_agents)).scalar_one(),
                "posts": conn.execute(sa.select(sa.func.count()).select_from(self.t_posts)).scalar_one(),
                "interactions": conn.execute(
                    sa.select(sa.func.count()).select_from(self.t_interactions)
                ).scalar_one(),
                "events": conn.execute(sa.select(sa.func.count()).select_from(self.t_events)).scalar_one(),
            }

    def close(self):
        self._engine.dispose()


def open_store(backend: str) -> Store:
    """`in_memory`, or any sqlalchemy connection string (`sqlite:///run.db`)."""
    if backend == "in_memory":
        return InMemoryStore()
    return SqlStore(backend)

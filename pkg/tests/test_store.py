import random

import pytest
import sqlalchemy as sa

from botverse.domain import Interaction, InteractionKind, Post
from botverse.store import (
    CorruptCheckpoint,
    InMemoryStore,
    IntegrityViolation,
    InvalidCursor,
    NoCheckpoint,
    SqlStore,
    StoreError,
    open_store,
)


def _post(i, created_at=None, parent=None, repost=False, narrative=None):
    return Post(
        post_id=f"p{i:05d}",
        author=f"a{i % 7:05d}",
        text=f"text {i}",
        created_at=created_at if created_at is not None else i * 10,
        narrative_id=narrative,
        in_reply_to=parent if parent and not repost else None,
        repost_of=parent if parent and repost else None,
    )


@pytest.fixture(params=["in_memory", "sql"])
def store(request, tmp_path):
    if request.param == "in_memory":
        yield InMemoryStore()
    else:
        s = SqlStore(f"sqlite:///{tmp_path}/run.db")
        yield s
        s.close()


class TestStoreContract:
    def test_agents(self, store):
        store.put_agent("a1", {"handle": "h1", "age": 30}, {"alpha": 1.0})
        store.put_agent("a0", {"handle": "h0", "age": 40}, {"alpha": 1.0})
        assert store.list_agents() == ["a0", "a1"]
        assert store.get_agent("a1")["persona"]["handle"] == "h1"
        assert store.get_agent("missing") is None
        store.update_agent_params("a1", {"alpha": 2.0})
        assert store.get_agent("a1")["memory_params"]["alpha"] == 2.0
        with pytest.raises(IntegrityViolation):
            store.update_agent_params("missing", {})

    def test_post_integrity(self, store):
        store.put_post(_post(1))
        with pytest.raises(IntegrityViolation):
            store.put_post(_post(1))  # duplicate
        with pytest.raises(IntegrityViolation):
            store.put_post(_post(2, parent="p99999"))  # dangling parent
        store.put_post(_post(2, parent="p00001"))
        assert store.get_post("p00001").text == "text 1"
        assert store.get_post("nope") is None

    def test_engagement(self, store):
        store.put_post(_post(1))
        assert store.engagement("p00001") == (0, 0)
        assert store.bump_engagement("p00001", "like") == (1, 0)
        assert store.bump_engagement("p00001", "repost") == (1, 1)
        with pytest.raises(IntegrityViolation):
            store.bump_engagement("nope", "like")

    def test_interactions(self, store):
        store.put_post(_post(1))
        store.put_post(_post(2, parent="p00001", repost=True))
        inter = Interaction(
            kind=InteractionKind.REPOST, actor="a1", target="p00001", at=20, produced_post="p00002"
        )
        store.append_interaction(inter)
        store.append_interaction(
            Interaction(kind=InteractionKind.LIKE, actor="a2", target="p00001", at=30)
        )
        assert len(store.interactions()) == 2
        assert store.interactions(since=25)[0].kind is InteractionKind.LIKE
        with pytest.raises(IntegrityViolation):
            store.append_interaction(
                Interaction(kind=InteractionKind.LIKE, actor="a1", target="nope", at=0)
            )

    def test_timeline_pagination_walk(self, store):
        for i in range(1000):
            store.put_post(_post(i, created_at=(i // 3) * 100))
        seen = []
        cursor = None
        pages = 0
        while True:
            page = store.get_timeline(limit=100, cursor=cursor)
            seen.extend(p.post_id for p in page.posts)
            pages += 1
            if page.next_cursor is None:
                break
            cursor = page.next_cursor
        assert pages == 10
        assert len(seen) == 1000 and len(set(seen)) == 1000
        # order: created_at desc, post_id asc
        keyed = [(-store.get_post(pid).created_at, pid) for pid in seen]
        assert keyed == sorted(keyed)

    def test_timeline_filters(self, store):
        store.put_post(_post(1, created_at=100, narrative="N1"))
        store.put_post(_post(2, created_at=200))
        store.put_post(_post(3, created_at=300, narrative="N1"))
        assert [p.post_id for p in store.get_timeline(narrative="N1").posts] == ["p00003", "p00001"]
        assert [p.post_id for p in store.get_timeline(since=200).posts] == ["p00003", "p00002"]
        assert [p.post_id for p in store.get_timeline(author="a00002").posts] == ["p00002"]

    def test_bad_cursor(self, store):
        with pytest.raises(InvalidCursor):
            store.get_timeline(cursor="garbage")

    def test_events_and_meta(self, store):
        store.append_event(0, {"at": 0, "type": "x"})
        store.append_event(1, {"at": 5, "type": "y"})
        assert store.event_count() == 2
        assert store.events()[1] == (1, {"at": 5, "type": "y"})
        store.set_meta("k", "v1")
        store.set_meta("k", "v2")
        assert store.get_meta("k") == "v2"
        assert store.get_meta("missing") is None

    def test_truncate_after_event(self, store):
        store.put_post(_post(1), event_index=0)
        store.put_post(_post(2), event_index=1)
        store.append_interaction(
            Interaction(kind=InteractionKind.LIKE, actor="a1", target="p00001", at=1), event_index=1
        )
        store.bump_engagement("p00001", "like")
        store.append_interaction(
            Interaction(kind=InteractionKind.LIKE, actor="a2", target="p00001", at=2), event_index=2
        )
        store.bump_engagement("p00001", "like")
        store.append_event(0, {"a": 0})
        store.append_event(1, {"a": 1})
        store.append_event(2, {"a": 2})
        store.truncate_after_event(1)
        assert store.event_count() == 2
        assert store.get_post("p00002") is not None
        assert len(store.interactions()) == 1
        # engagement rebuilt from surviving interactions
        assert store.engagement("p00001") == (1, 0)

    def test_checkpoint_round_trip(self, store):
        with pytest.raises(NoCheckpoint):
            store.load_latest_checkpoint()
        state = {"clock": 42, "agents": {"a1": {"x": 1}}}
        store.save_checkpoint(17, state)
        index, loaded = store.load_latest_checkpoint()
        assert index == 17 and loaded == state
        store.save_checkpoint(30, {"clock": 99})
        assert store.load_latest_checkpoint()[0] == 30

    def test_counts(self, store):
        store.put_agent("a1", {}, {})
        store.put_post(_post(1))
        store.append_event(0, {})
        assert store.counts() == {"agents": 1, "posts": 1, "interactions": 0, "events": 1}


class TestSqlSpecifics:
    def test_kill_and_reopen_preserves_acknowledged_writes(self, tmp_path):
        url = f"sqlite:///{tmp_path}/durable.db"
        store = SqlStore(url)
        store.put_agent("a1", {"handle": "h", "age": 30}, {})
        for i in range(20):
            store.put_post(_post(i), event_index=i)
            store.append_event(i, {"at": i, "type": "t"})
        store.bump_engagement("p00003", "like")
        store.set_meta("log_hash", "abc")
        store.save_checkpoint(19, {"clock": 5})
        # simulate a kill: drop the handle without any graceful shutdown
        del store
        reopened = SqlStore(url)
        assert reopened.counts() == {"agents": 1, "posts": 20, "interactions": 0, "events": 20}
        assert reopened.engagement("p00003") == (1, 0)
        assert reopened.get_meta("log_hash") == "abc"
        assert reopened.load_latest_checkpoint() == (19, {"clock": 5})
        reopened.close()

    def test_corrupt_checkpoint_detected(self, tmp_path):
        url = f"sqlite:///{tmp_path}/corrupt.db"
        store = SqlStore(url)
        store.save_checkpoint(3, {"clock": 1})
        engine = sa.create_engine(url)
        with engine.begin() as conn:
            conn.execute(sa.text("UPDATE checkpoints SET state = :s").bindparams(s='{"clock": 2}'))
        engine.dispose()
        reopened = SqlStore(url)
        with pytest.raises(CorruptCheckpoint):
            reopened.load_latest_checkpoint()
        reopened.close()

    def test_open_store_dispatch(self, tmp_path):
        assert isinstance(open_store("in_memory"), InMemoryStore)
        s = open_store(f"sqlite:///{tmp_path}/x.db")
        assert isinstance(s, SqlStore)
        s.close()
        with pytest.raises(StoreError):
            open_store("not-a-url://nope")


# -- differential conformance ---------------------------------------------


def _apply(store, op):
    """Apply one op; return a comparable (tag, payload) result."""
    kind = op[0]
    try:
        if kind == "put_agent":
            store.put_agent(op[1], {"handle": op[1], "age": 30}, {"alpha": op[2]})
            return ("ok", None)
        if kind == "get_agent":
            return ("agent", store.get_agent(op[1]))
        if kind == "update_params":
            store.update_agent_params(op[1], {"alpha": op[2]})
            return ("ok", None)
        if kind == "put_post":
            store.put_post(op[1], event_index=op[2])
            return ("ok", None)
        if kind == "get_post":
            post = store.get_post(op[1])
            return ("post", post.to_dict() if post else None)
        if kind == "bump":
            return ("engagement", store.bump_engagement(op[1], op[2]))
        if kind == "interaction":
            store.append_interaction(op[1], event_index=op[2])
            return ("ok", None)
        if kind == "timeline":
            page = store.get_timeline(**op[1])
            return ("page", ([p.to_dict() for p in page.posts], page.next_cursor))
        if kind == "event":
            store.append_event(op[1], op[2])
            return ("ok", None)
        if kind == "truncate":
            store.truncate_after_event(op[1])
            return ("ok", None)
        if kind == "meta":
            store.set_meta(op[1], op[2])
            return ("meta", store.get_meta(op[1]))
        if kind == "checkpoint":
            store.save_checkpoint(op[1], op[2])
            return ("ckpt", store.load_latest_checkpoint())
        raise AssertionError(f"unknown op {kind}")
    except IntegrityViolation:
        return ("integrity_violation", None)
    except InvalidCursor:
        return ("invalid_cursor", None)


def _op_sequence(rng, length=40):
    """Randomized op sequence sharing a small id space to provoke duplicate
    and dangling-reference paths on both backends."""
    ops = []
    next_post = 0
    known_posts = []
    event_index = 0
    for _ in range(length):
        roll = rng.random()
        if roll < 0.08:
            ops.append(("put_agent", f"a{rng.randrange(6):05d}", rng.uniform(0.1, 3)))
        elif roll < 0.12:
            ops.append(("get_agent", f"a{rng.randrange(8):05d}"))
        elif roll < 0.16:
            ops.append(("update_params", f"a{rng.randrange(8):05d}", rng.uniform(0.1, 3)))
        elif roll < 0.42:
            parent = rng.choice(known_posts) if known_posts and rng.random() < 0.5 else None
            if rng.random() < 0.08:
                parent = "p99999"  # dangling
            dup = known_posts and rng.random() < 0.08
            i = int(rng.choice(known_posts)[1:]) if dup else next_post
            post = _post(
                i,
                created_at=rng.randrange(0, 5) * 100,
                parent=parent,
                repost=rng.random() < 0.5,
                narrative=rng.choice([None, "N1"]),
            )
            ops.append(("put_post", post, event_index))
            if not dup and not (parent == "p99999"):
                known_posts.append(post.post_id)
                next_post += 1
        elif roll < 0.5:
            pid = rng.choice(known_posts) if known_posts and rng.random() < 0.8 else "p99999"
            ops.append(("get_post", pid))
        elif roll < 0.6:
            pid = rng.choice(known_posts) if known_posts and rng.random() < 0.8 else "p99999"
            ops.append(("bump", pid, rng.choice(["like", "repost"])))
        elif roll < 0.7:
            target = rng.choice(known_posts) if known_posts else "p99999"
            kind = rng.choice(list(InteractionKind))
            produced = None
            if kind is not InteractionKind.LIKE:
                produced = rng.choice(known_posts) if known_posts else "p99999"
            inter = Interaction(
                kind=kind, actor=f"a{rng.randrange(6):05d}", target=target,
                at=rng.randrange(0, 500), produced_post=produced,
            )
            ops.append(("interaction", inter, event_index))
        elif roll < 0.82:
            kwargs = {"limit": rng.choice([1, 3, 10, 100])}
            if rng.random() < 0.3:
                kwargs["narrative"] = "N1"
            if rng.random() < 0.3:
                kwargs["since"] = rng.randrange(0, 500)
            if rng.random() < 0.2:
                kwargs["author"] = f"a{rng.randrange(7):05d}"
            if rng.random() < 0.15:
                kwargs["cursor"] = rng.choice([f"{rng.randrange(500)}:p00001", "junk"])
            ops.append(("timeline", kwargs))
        elif roll < 0.88:
            ops.append(("event", event_index, {"at": rng.randrange(500), "type": "t", "n": event_index}))
            event_index += 1
        elif roll < 0.92 and event_index:
            ops.append(("truncate", rng.randrange(0, event_index)))
        elif roll < 0.96:
            ops.append(("meta", rng.choice(["k1", "k2"]), str(rng.randrange(100))))
        else:
            ops.append(("checkpoint", event_index, {"clock": rng.randrange(1000)}))
    return ops


def _fingerprint(store):
    return {
        "counts": store.counts(),
        "agents": [store.get_agent(a) for a in store.list_agents()],
        "posts": [p.to_dict() for p in store.all_posts()],
        "engagement": {p.post_id: store.engagement(p.post_id) for p in store.all_posts()},
        "interactions": [i.to_dict() for i in store.interactions()],
        "events": store.events(),
    }


def test_differential_conformance_suite(tmp_path):
    """>= 50 randomized op sequences behave identically on both backends."""
    for trial in range(50):
        rng = random.Random(1000 + trial)
        ops = _op_sequence(rng)
        mem = InMemoryStore()
        sql = SqlStore(f"sqlite:///{tmp_path}/diff_{trial}.db")
        for op in ops:
            got_mem = _apply(mem, op)
            got_sql = _apply(sql, op)
            assert got_mem == got_sql, f"trial {trial}: divergence on {op[0]}: {got_mem} != {got_sql}"
        assert _fingerprint(mem) == _fingerprint(sql), f"trial {trial}: final state diverged"
        sql.close()

import json
import time

import pytest
from fastapi.testclient import TestClient

from botverse.api import create_app
from botverse.engine import Engine
from botverse.runner import EngineRunner
from botverse.scenario import ScenarioConfig
from botverse.store import InMemoryStore

from conftest import tiny_config_dict


def _wait(predicate, timeout=20.0, interval=0.01):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        if predicate():
            return True
        time.sleep(interval)
    return False


@pytest.fixture(scope="module")
def service():
    """A finished run behind the API, with a scripted control phase first."""
    config = ScenarioConfig.from_dict(tiny_config_dict())
    engine = Engine.init(config, 21, InMemoryStore())
    runner = EngineRunner(engine)
    runner.start()
    client = TestClient(create_app(runner))
    script = {}

    # paused-phase commands apply as soon as the loop drains them
    resp = client.post(
        "/control",
        json={"kind": "inject_narrative", "narrative_id": "N1", "text": "story.",
              "assignees": {"archetype": "disinformative"}},
    )
    assert resp.status_code == 200
    script["inject"] = resp.json()["command_id"]
    assert _wait(lambda: "N1" in engine.narratives)

    resp = client.patch("/agents/a00000/memory_params", json={"alpha": 2.0, "capacity": 32})
    assert resp.status_code == 200
    script["patch"] = resp.json()["command_id"]
    assert _wait(lambda: engine.agents["a00000"].memory.params.alpha == 2.0)

    resp = client.post("/control", json={"kind": "resume"})
    assert resp.status_code == 200
    script["resume"] = resp.json()["command_id"]
    assert _wait(lambda: runner.snapshot()["status"] == "finished")

    yield client, runner, engine, script
    runner.stop()


class TestEndpoints:
    def test_health(self, service):
        client, *_ = service
        assert client.get("/health").json() == {"status": "ok"}

    def test_simulation_snapshot(self, service):
        client, runner, engine, _ = service
        body = client.get("/simulation").json()
        assert body["status"] == "finished"
        assert body["agents"] == 9
        assert body["applied_events"] == engine.applied_index + 1
        assert body["log_hash"] == engine.log_hash
        assert body["narratives"] == ["N1"]

    def test_agents_paging_and_detail(self, service):
        client, _, engine, _ = service
        seen = []
        cursor = None
        while True:
            params = {"limit": 4}
            if cursor:
                params["cursor"] = cursor
            body = client.get("/agents", params=params).json()
            seen.extend(a["agent_id"] for a in body["agents"])
            cursor = body["next_cursor"]
            if cursor is None:
                break
        assert seen == [f"a{i:05d}" for i in range(9)]

        detail = client.get("/agents/a00006", params={"k": 5}).json()
        assert detail["persona"]["archetype"] == "disinformative"
        assert detail["active_narrative"] == "N1"
        assert detail["dna_sequence"] == [c.value for c in engine.agents["a00006"].program.sequence]
        scores = [m["score"] for m in detail["memory_top_k"]]
        assert scores == sorted(scores, reverse=True)

    def test_agent_404(self, service):
        client, *_ = service
        assert client.get("/agents/nope").status_code == 404

    def test_posts_pagination_matches_store(self, service):
        client, _, engine, _ = service
        collected = []
        cursor = None
        while True:
            params = {"limit": 7}
            if cursor:
                params["cursor"] = cursor
            body = client.get("/posts", params=params).json()
            collected.extend(p["post_id"] for p in body["posts"])
            cursor = body["next_cursor"]
            if cursor is None:
                break
        assert sorted(collected) == sorted(p.post_id for p in engine.store.all_posts())
        assert len(set(collected)) == len(collected)

    def test_posts_filters(self, service):
        client, _, engine, _ = service
        tagged = client.get("/posts", params={"narrative": "N1", "limit": 1000}).json()["posts"]
        assert tagged
        assert all(p["narrative_id"] == "N1" for p in tagged)
        by_author = client.get("/posts", params={"author": "a00000", "limit": 1000}).json()["posts"]
        assert all(p["author"] == "a00000" for p in by_author)

    def test_posts_bad_cursor_400(self, service):
        client, *_ = service
        assert client.get("/posts", params={"cursor": "junk"}).status_code == 400

    def test_graph_matches_interactions(self, service):
        client, _, engine, _ = service
        edges = client.get("/graph").json()["edges"]
        assert len(edges) == len(engine.store.interactions())
        since = engine.config.duration // 2
        late = client.get("/graph", params={"since": since}).json()["edges"]
        assert all(e["virtual_time_ms"] >= since for e in late)

    def test_ingestion_stats(self, service):
        client, *_ = service
        body = client.get("/ingestion/stats").json()
        assert set(body) == {"seen", "forwarded", "sampled_out", "dropped", "protocol_errors", "reconnects"}


class TestControlValidation:
    def test_unknown_kind_400(self, service):
        client, *_ = service
        assert client.post("/control", json={"kind": "explode"}).status_code == 400

    def test_pause_when_not_running_409(self, service):
        client, *_ = service
        assert client.post("/control", json={"kind": "pause"}).status_code == 409

    def test_duplicate_narrative_409(self, service):
        client, *_ = service
        resp = client.post(
            "/control", json={"kind": "inject_narrative", "narrative_id": "N1", "text": "again."}
        )
        assert resp.status_code == 409

    def test_inject_requires_fields_400(self, service):
        client, *_ = service
        assert client.post("/control", json={"kind": "inject_narrative"}).status_code == 400

    def test_inject_empty_assignees_400(self, service):
        client, *_ = service
        resp = client.post(
            "/control",
            json={"kind": "inject_narrative", "narrative_id": "N9", "text": "x",
                  "assignees": {"agents": ["nobody"]}},
        )
        assert resp.status_code == 400

    def test_set_pacing_requires_object_400(self, service):
        client, *_ = service
        assert client.post("/control", json={"kind": "set_pacing"}).status_code == 400

    def test_patch_unknown_agent_404(self, service):
        client, *_ = service
        assert client.patch("/agents/ghost/memory_params", json={"alpha": 1.0}).status_code == 404

    def test_patch_empty_400(self, service):
        client, *_ = service
        assert client.patch("/agents/a00000/memory_params", json={}).status_code == 400

    def test_patch_invalid_value_422(self, service):
        client, *_ = service
        assert client.patch("/agents/a00000/memory_params", json={"alpha": -3}).status_code == 422


class TestStreamConsistency:
    def _drain_stream(self, client, runner):
        """Read /stream in catch-up mode: all accumulated deltas, then EOF."""
        resp = client.get("/stream", params={"from_seq": 0, "follow": "false"})
        assert resp.status_code == 200
        return [json.loads(line) for line in resp.text.splitlines() if line.strip()]

    def test_deltas_are_sequential(self, service):
        client, runner, _, _ = service
        deltas = self._drain_stream(client, runner)
        assert [d["seq"] for d in deltas] == list(range(len(deltas)))

    def test_stream_posts_equal_paged_rest(self, service):
        client, runner, _, _ = service
        deltas = self._drain_stream(client, runner)
        stream_posts = {}
        for delta in deltas:
            for post in delta["new_posts"]:
                stream_posts[post["post_id"]] = post
        rest_posts = {}
        cursor = None
        while True:
            params = {"limit": 50}
            if cursor:
                params["cursor"] = cursor
            body = client.get("/posts", params=params).json()
            for post in body["posts"]:
                rest_posts[post["post_id"]] = {
                    k: v for k, v in post.items() if k not in ("likes", "reposts")
                }
            cursor = body["next_cursor"]
            if cursor is None:
                break
        assert stream_posts == rest_posts

    def test_stream_interactions_equal_graph(self, service):
        client, runner, _, _ = service
        deltas = self._drain_stream(client, runner)
        stream_edges = [
            (i["actor"], i["target"], i["kind"], i["at"])
            for delta in deltas
            for i in delta["new_interactions"]
        ]
        posts_author = {}
        for delta in deltas:
            for post in delta["new_posts"]:
                posts_author[post["post_id"]] = post["author"]
        stream_graph = sorted(
            (actor, posts_author[target], kind, at) for actor, target, kind, at in stream_edges
        )
        rest_graph = sorted(
            (e["source_agent"], e["target_agent"], e["kind"], e["virtual_time_ms"])
            for e in client.get("/graph").json()["edges"]
        )
        assert stream_graph == rest_graph


class TestCommandAudit:
    def test_every_command_logged_exactly_once(self, service):
        client, _, engine, script = service
        logged = [
            e["command_id"] for _, e in engine.store.events() if e["type"] == "control"
        ]
        for name, cid in script.items():
            assert logged.count(cid) == 1, f"{name} command appears {logged.count(cid)} times"

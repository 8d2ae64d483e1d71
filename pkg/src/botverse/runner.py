"""Run orchestration.

run_headless drives an engine to its scenario horizon in-process (the
CLI `run` path). EngineRunner owns the engine on a background thread for
the HTTP service: commands arrive through a queue, state is read under a
shared lock, and every applied event is folded into sequence-numbered
state deltas that /stream subscribers can replay from the beginning.
"""
from __future__ import annotations

import queue
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .engine import Engine
from .report import (
    DiffusionReport,
    build_report,
    export_actions_csv,
    export_agents_ndjson,
    export_edge_list,
    export_event_log,
    export_interactions_ndjson,
    export_posts_ndjson,
    write_report,
)
from .scenario import ScenarioConfig
from .store import Store

SNAPSHOT_EVERY_EVENTS = 500
SNAPSHOT_EVERY_SECONDS = 1.0


def run_headless(
    config: ScenarioConfig,
    seed: int,
    store: Store,
    out_dir: Optional[str | Path] = None,
    backend=None,
) -> tuple[Engine, DiffusionReport]:
    """Execute a scenario start-to-finish and compute its report."""
    from . import brain

    renderer = None
    if out_dir is not None:
        renderer = brain.StubRenderer(Path(out_dir) / "images")
    engine = Engine.init(config, seed, store, renderer=renderer, backend=backend)
    engine.submit_control({"kind": "resume"})
    engine.run_until(config.duration)
    if engine.status == "running":
        engine.status = "finished"
    report = build_report(store)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        export_event_log(store, out / "events.ndjson")
        export_posts_ndjson(store, out / "posts.ndjson")
        export_interactions_ndjson(store, out / "interactions.ndjson")
        export_agents_ndjson(store, out / "agents.ndjson")
        export_edge_list(store, out / "edges.csv")
        export_actions_csv(store, out / "actions.csv")
        write_report(report, out / "report.json")
    return engine, report


def resume_headless(
    store: Store, out_dir: Optional[str | Path] = None, backend=None
) -> tuple[Engine, DiffusionReport]:
    """Continue a checkpointed run to its horizon."""
    engine = Engine.resume(store, backend=backend)
    if engine.status != "running":
        engine.submit_control({"kind": "resume"})
    engine.run_until(engine.config.duration)
    if engine.status == "running":
        engine.status = "finished"
    report = build_report(store)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        export_event_log(store, out / "events.ndjson")
        export_posts_ndjson(store, out / "posts.ndjson")
        export_interactions_ndjson(store, out / "interactions.ndjson")
        export_agents_ndjson(store, out / "agents.ndjson")
        export_edge_list(store, out / "edges.csv")
        export_actions_csv(store, out / "actions.csv")
        write_report(report, out / "report.json")
    return engine, report


class EngineRunner:
    """Background thread owning the engine; the coordination point between
    the event loop and HTTP handlers.

    state_lock guards every engine/store access. Handlers take it for
    reads; the loop takes it per step batch, so any single HTTP response
    reflects one consistent snapshot.
    """

    def __init__(self, engine: Engine, batch: int = 200):
        self.engine = engine
        self.batch = batch
        self.state_lock = threading.RLock()
        self.commands: "queue.Queue[dict]" = queue.Queue(maxsize=1024)
        self.externals: "queue.Queue[dict]" = queue.Queue(maxsize=4096)
        self.deltas: list[dict] = []
        self._delta_cond = threading.Condition()
        self._pending_events: list[dict] = []
        self._pending_posts: list[dict] = []
        self._pending_interactions: list[dict] = []
        self._snapshot: dict = engine.snapshot()
        self._last_snapshot_wall = time.monotonic()
        self._events_since_snapshot = 0
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None
        engine.on_applied = self._collect

    # -- engine-thread side ------------------------------------------------

    def _collect(self, entry: dict, new_posts: list, new_interactions: list) -> None:
        self._pending_events.append(entry)
        self._pending_posts.extend(p.to_dict() for p in new_posts)
        self._pending_interactions.extend(i.to_dict() for i in new_interactions)
        self._events_since_snapshot += 1

    def _flush_delta(self) -> None:
        if not self._pending_events:
            return
        delta = {
            "seq": len(self.deltas),
            "as_of": self.engine.clock,
            "events": self._pending_events,
            "new_posts": self._pending_posts,
            "new_interactions": self._pending_interactions,
            "counters": dict(self.engine.counters),
            "status": self.engine.status,
        }
        self._pending_events = []
        self._pending_posts = []
        self._pending_interactions = []
        with self._delta_cond:
            self.deltas.append(delta)
            self._delta_cond.notify_all()

    def _maybe_snapshot(self) -> None:
        now = time.monotonic()
        if (
            self._events_since_snapshot >= SNAPSHOT_EVERY_EVENTS
            or now - self._last_snapshot_wall >= SNAPSHOT_EVERY_SECONDS
        ):
            self._snapshot = self.engine.snapshot()
            self._last_snapshot_wall = now
            self._events_since_snapshot = 0

    def _drain_commands(self) -> None:
        while True:
            try:
                cmd = self.commands.get_nowait()
            except queue.Empty:
                break
            self.engine.submit_control(cmd)
        while True:
            try:
                payload = self.externals.get_nowait()
            except queue.Empty:
                break
            self.engine._enqueue(self.engine.clock, payload)

    def _loop(self) -> None:
        horizon = self.engine.config.duration
        pace_anchor: Optional[tuple[float, int]] = None  # (wall, virtual) for scaled mode
        while not self._stop.is_set():
            with self.state_lock:
                self._drain_commands()
                stepped = 0
                scaled = self.engine.pacing.mode == "scaled"
                if not scaled or self.engine.status != "running":
                    pace_anchor = None
                elif pace_anchor is None:
                    pace_anchor = (time.monotonic(), self.engine.clock)
                while (
                    self.engine.status == "running"
                    and stepped < self.batch
                    and self.engine.peek_at() is not None
                    and self.engine.peek_at() <= horizon
                ):
                    if pace_anchor is not None:
                        wall0, virt0 = pace_anchor
                        due = wall0 + (self.engine.peek_at() - virt0) / 1000.0 * self.engine.pacing.factor
                        if time.monotonic() < due:
                            break
                    self.engine.step()
                    stepped += 1
                if (
                    self.engine.status == "running"
                    and (self.engine.peek_at() is None or self.engine.peek_at() > horizon)
                ):
                    self.engine.status = "finished"
                    self.engine.checkpoint()
                self._flush_delta()
                self._maybe_snapshot()
            if stepped == 0:
                time.sleep(0.01)

    # -- handler side ------------------------------------------------------

    def start(self) -> None:
        self._thread = threading.Thread(target=self._loop, name="engine-loop", daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5.0)
        with self._delta_cond:
            self._delta_cond.notify_all()

    def snapshot(self) -> dict:
        with self.state_lock:
            self._snapshot = self.engine.snapshot()
            return dict(self._snapshot)

    def submit(self, command: dict) -> int:
        """Validate + id a command and hand it to the loop. Raises
        queue.Full under backpressure."""
        with self.state_lock:
            command_id = self.engine._next_command_id()
        command = dict(command, command_id=command_id)
        self.commands.put_nowait(command)
        return command_id

    def submit_external(self, post) -> bool:
        """Forward an external post into the engine; False when the bounded
        queue is full (backpressure: caller drops the newest)."""
        try:
            self.externals.put_nowait({"type": "external_ingest", "post": post.to_dict()})
            return True
        except queue.Full:
            return False

    def delta_count(self) -> int:
        with self._delta_cond:
            return len(self.deltas)

    def wait_for_delta(self, index: int, timeout: float = 10.0) -> Optional[dict]:
        """Blocking read of delta `index`; None on timeout/shutdown."""
        deadline = time.monotonic() + timeout
        with self._delta_cond:
            while len(self.deltas) <= index:
                remaining = deadline - time.monotonic()
                if remaining <= 0 or self._stop.is_set():
                    return None
                self._delta_cond.wait(timeout=min(remaining, 0.5))
            return self.deltas[index]

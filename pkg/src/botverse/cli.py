"""Operator command line: validate, run, resume, serve, record, analyze.

Exit codes: 0 success, 1 validation error, 2 runtime error. A seed is
mandatory for `run`: reproducibility is the core promise, so there is no
silent entropy.
"""
from __future__ import annotations

import asyncio
import json
import os
import sys
import time
from pathlib import Path

import click

from . import brain
from .engine import Engine
from .ingestion import RawRecord, StreamConfig, connect_and_stream, record_replay
from .report import build_report, write_report
from .runner import EngineRunner, resume_headless, run_headless
from .scenario import InvalidScenario, ScenarioConfig
from .store import InMemoryStore, StoreError, open_store


def _fail(message: str, code: int) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _backend_from_env() -> brain.BackendDescriptor | None:
    url = os.environ.get("BOTVERSE_BACKEND_URL")
    if not url:
        return None
    return brain.BackendDescriptor(
        name="env", endpoint=url, model_id=os.environ.get("BOTVERSE_BACKEND_MODEL", "default")
    )


def _open_store(backend: str):
    backend = os.environ.get("BOTVERSE_STORE_URL", backend)
    try:
        return open_store(backend)
    except StoreError as exc:
        _fail(str(exc), 2)


@click.group()
@click.option("-v", "--verbose", count=True, help="Increase log verbosity.")
def main(verbose: int) -> None:
    """Sandboxed multi-agent social network simulator."""
    import logging

    level = logging.WARNING - min(verbose, 2) * 10
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(levelname)s %(message)s")


@main.command()
@click.option("--scenario", "scenario_path", required=True, type=click.Path(exists=True))
def validate(scenario_path: str) -> None:
    """Check a scenario file; exit 0 if valid."""
    try:
        config = ScenarioConfig.load(scenario_path)
    except InvalidScenario as exc:
        _fail(str(exc), 1)
    total = sum(p.count for p in config.populations)
    click.echo(f"ok: {config.name} ({total} agents, {config.duration} virtual ms)")


@main.command()
@click.option("--scenario", "scenario_path", required=True, type=click.Path(exists=True))
@click.option("--seed", required=True, type=int)
@click.option("--out", "out_dir", type=click.Path(), default=None)
@click.option("--store", "store_backend", default="in_memory", show_default=True)
def run(scenario_path: str, seed: int, out_dir: str | None, store_backend: str) -> None:
    """Execute a scenario headless to completion."""
    try:
        config = ScenarioConfig.load(scenario_path)
    except InvalidScenario as exc:
        _fail(str(exc), 1)
    store = _open_store(store_backend)
    started = time.monotonic()
    try:
        engine, report = run_headless(config, seed, store, out_dir=out_dir, backend=_backend_from_env())
    except Exception as exc:
        _fail(f"run failed: {exc}", 2)
    elapsed = time.monotonic() - started
    click.echo(f"applied_events={engine.applied_index + 1}")
    click.echo(f"virtual_clock_ms={engine.clock}")
    click.echo(f"wall_seconds={elapsed:.1f}")
    click.echo(f"log_hash={engine.log_hash}")
    if out_dir:
        click.echo(f"outputs in {out_dir}")


@main.command()
@click.option("--store", "store_backend", required=True, help="Store URL holding the checkpoint.")
@click.option("--out", "out_dir", type=click.Path(), default=None)
def resume(store_backend: str, out_dir: str | None) -> None:
    """Continue a checkpointed run to its scenario horizon."""
    store = _open_store(store_backend)
    try:
        engine, report = resume_headless(store, out_dir=out_dir, backend=_backend_from_env())
    except StoreError as exc:
        _fail(str(exc), 1)
    except Exception as exc:
        _fail(f"resume failed: {exc}", 2)
    click.echo(f"log_hash={engine.log_hash}")


@main.command()
@click.option("--scenario", "scenario_path", required=True, type=click.Path(exists=True))
@click.option("--seed", required=True, type=int)
@click.option("--bind", default="127.0.0.1:8000", show_default=True)
@click.option("--store", "store_backend", default="in_memory", show_default=True)
@click.option("--out", "out_dir", type=click.Path(), default=None)
@click.option(
    "--pacing",
    default="free_run",
    show_default=True,
    help="free_run or a scale factor (wall seconds per virtual second), e.g. 0.5",
)
def serve(scenario_path: str, seed: int, bind: str, store_backend: str, out_dir: str | None, pacing: str) -> None:
    """Run engine + orchestration API together (paused until resumed)."""
    import uvicorn

    from .api import create_app

    try:
        config = ScenarioConfig.load(scenario_path)
    except InvalidScenario as exc:
        _fail(str(exc), 1)
    store = _open_store(store_backend)
    renderer = brain.StubRenderer(Path(out_dir) / "images") if out_dir else None
    engine = Engine.init(config, seed, store, renderer=renderer, backend=_backend_from_env())
    if pacing != "free_run":
        try:
            engine.pacing = engine.pacing.from_dict({"mode": "scaled", "factor": float(pacing)})
        except ValueError:
            _fail(f"bad --pacing value {pacing!r}", 1)
    runner = EngineRunner(engine)
    runner.start()
    if config.ingestion and config.ingestion.mode == "live":
        if engine.pacing.mode == "free_run":
            click.echo("live ingestion disabled in free_run pacing (replay only)", err=True)
        else:
            _start_live_ingestion(runner, config.ingestion, seed)
    host, _, port = bind.partition(":")
    app = create_app(runner)
    try:
        uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8000), log_level="warning")
    finally:
        runner.stop()


def _start_live_ingestion(runner: EngineRunner, config: StreamConfig, seed: int) -> None:
    import random
    import threading

    from .ingestion import normalize, sample_and_forward

    engine = runner.engine
    rng = random.Random(f"{seed}:ingestion-live")

    def handle_record(record: RawRecord) -> None:
        post = normalize(record, config)
        if post is None:
            return
        sample_and_forward(
            [post], config.sample_rate, rng, runner.submit_external, counters=engine.ingestion_counters
        )

    def worker():
        asyncio.run(connect_and_stream(config, handle_record, counters=engine.ingestion_counters))

    threading.Thread(target=worker, name="live-ingestion", daemon=True).start()


@main.command()
@click.option("--record", "record_path", required=True, type=click.Path())
@click.option("--endpoint", default=None, help="Stream endpoint URL override.")
@click.option("--seconds", default=60.0, show_default=True, help="Capture duration.")
@click.option("--max-records", default=10000, show_default=True)
def record(record_path: str, endpoint: str | None, seconds: float, max_records: int) -> None:
    """Capture the live stream into a replay file."""
    kwargs = {"mode": "live"}
    if endpoint:
        kwargs["endpoint"] = endpoint
    config = StreamConfig(**kwargs)
    records: list[RawRecord] = []
    stop = asyncio.Event()

    def handle(record: RawRecord) -> None:
        records.append(record)
        if len(records) >= max_records:
            stop.set()

    async def capture():
        task = asyncio.create_task(connect_and_stream(config, handle, stop=stop))
        try:
            await asyncio.wait_for(asyncio.shield(task), timeout=seconds)
        except asyncio.TimeoutError:
            stop.set()
        finally:
            task.cancel()
            try:
                await task
            except (asyncio.CancelledError, Exception):
                pass

    try:
        asyncio.run(capture())
    except KeyboardInterrupt:
        pass
    n = record_replay(records, record_path)
    click.echo(f"recorded {n} records to {record_path}")
    if n == 0:
        sys.exit(2)


@main.command()
@click.option("--out", "out_dir", type=click.Path(exists=True), default=None, help="Run output directory.")
@click.option("--store", "store_backend", default=None, help="Store URL of a persisted run.")
@click.option("--report", "report_path", type=click.Path(), default=None)
def analyze(out_dir: str | None, store_backend: str | None, report_path: str | None) -> None:
    """Recompute the diffusion report from a store or an out directory."""
    if store_backend:
        store = _open_store(store_backend)
    elif out_dir:
        store = _store_from_exports(Path(out_dir))
    else:
        _fail("analyze requires --store or --out", 1)
    report = build_report(store)
    rendered = json.dumps(report.to_dict(), indent=2, sort_keys=True)
    if report_path:
        Path(report_path).write_text(rendered + "\n", encoding="utf-8")
        click.echo(f"report written to {report_path}")
    else:
        click.echo(rendered)


def _store_from_exports(out_dir: Path) -> InMemoryStore:
    """Rebuild a read-only store view from run exports (posts, interactions,
    events, agents). Post ids are sequential, so id order is insert order."""
    from .domain import Interaction, Post

    store = InMemoryStore()
    agents_path = out_dir / "agents.ndjson"
    if agents_path.exists():
        for line in agents_path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                row = json.loads(line)
                store.put_agent(row["agent_id"], row["persona"], row["memory_params"])
    posts_path = out_dir / "posts.ndjson"
    if not posts_path.exists():
        _fail(f"{posts_path} not found", 1)
    posts = [
        Post.from_dict(json.loads(line))
        for line in posts_path.read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    for post in sorted(posts, key=lambda p: p.post_id):
        store.put_post(post)
    inter_path = out_dir / "interactions.ndjson"
    if inter_path.exists():
        for line in inter_path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                inter = Interaction.from_dict(json.loads(line))
                store.append_interaction(inter)
                store.bump_engagement(inter.target, inter.kind.value)
    events_path = out_dir / "events.ndjson"
    if events_path.exists():
        index = 0
        for line in events_path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            row = json.loads(line)
            if "log_hash" in row and "at" not in row:
                store.set_meta("log_hash", row["log_hash"])
                continue
            store.append_event(index, row)
            index += 1
    return store


if __name__ == "__main__":
    main()

"""Post-hoc diffusion analysis over a finished (or paused) run.

Everything here is a pure function of the store contents, so reports are
reproducible from the event log alone and freely recomputable.
"""
from __future__ import annotations

import csv
import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .domain import Archetype, Interaction, Post, canonical_json, narrative_of
from .store import Store


class UnknownNarrative(KeyError):
    pass


@dataclass
class Cascade:
    root: str
    size: int
    depth: int
    members: list[str]


@dataclass
class NarrativeStats:
    narrative_id: str
    tagged_posts: int
    reach: int  # distinct agents interacting with tagged posts (authors + reactors)
    adoption: int  # distinct benign agents reposting/replying to tagged posts
    cascade_count: int
    max_cascade_depth: int
    cascade_sizes: list[int]

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class DiffusionReport:
    narratives: list[NarrativeStats]
    total_agents: int
    total_posts: int
    total_interactions: int
    graph_nodes: int
    graph_edges: int
    degree_distribution: dict[int, int]
    agent_trajectories: dict[str, list] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "narratives": [n.to_dict() for n in self.narratives],
            "total_agents": self.total_agents,
            "total_posts": self.total_posts,
            "total_interactions": self.total_interactions,
            "graph_nodes": self.graph_nodes,
            "graph_edges": self.graph_edges,
            "degree_distribution": {str(k): v for k, v in sorted(self.degree_distribution.items())},
            "agent_trajectories": self.agent_trajectories,
        }


def _effective_narratives(posts: list[Post]) -> dict[str, Optional[str]]:
    by_id = {p.post_id: p for p in posts}
    result: dict[str, Optional[str]] = {}
    for post in posts:
        result[post.post_id] = narrative_of(post, by_id.get)
    return result


def compute_cascades(store: Store, narrative_id: str) -> list[Cascade]:
    """Repost/reply trees rooted at tagged origin posts. A root is a tagged
    post whose parent (if any) is not part of the same narrative."""
    posts = store.all_posts()
    effective = _effective_narratives(posts)
    if narrative_id not in set(effective.values()):
        known = {p.narrative_id for p in posts if p.narrative_id}
        if narrative_id not in known:
            raise UnknownNarrative(narrative_id)
    children: dict[str, list[str]] = defaultdict(list)
    by_id = {p.post_id: p for p in posts}
    for post in posts:
        parent = post.repost_of or post.in_reply_to
        if parent is not None:
            children[parent].append(post.post_id)
    tagged = {pid for pid, n in effective.items() if n == narrative_id}
    roots = []
    for pid in sorted(tagged):
        parent = by_id[pid].repost_of or by_id[pid].in_reply_to
        if parent is None or parent not in tagged:
            roots.append(pid)
    cascades = []
    for root in roots:
        members = []
        depth = 0
        stack = [(root, 1)]
        while stack:
            node, d = stack.pop()
            if node not in tagged:
                continue
            members.append(node)
            depth = max(depth, d)
            for child in children.get(node, ()):
                stack.append((child, d + 1))
        cascades.append(Cascade(root=root, size=len(members), depth=depth, members=sorted(members)))
    return cascades


def build_report(store: Store, include_trajectories: bool = False) -> DiffusionReport:
    posts = store.all_posts()
    interactions = store.interactions()
    effective = _effective_narratives(posts)
    by_id = {p.post_id: p for p in posts}
    agent_rows = {a: store.get_agent(a) for a in store.list_agents()}
    archetypes = {
        a: row["persona"].get("archetype", "benign") for a, row in agent_rows.items() if row
    }

    narrative_ids = sorted({n for n in effective.values() if n is not None})
    stats = []
    for nid in narrative_ids:
        tagged = {pid for pid, n in effective.items() if n == nid}
        reach_agents = {by_id[pid].author for pid in tagged}
        adopters = set()
        for inter in interactions:
            if inter.target in tagged:
                reach_agents.add(inter.actor)
                if inter.kind.value in ("repost", "reply") and archetypes.get(inter.actor) == Archetype.BENIGN.value:
                    adopters.add(inter.actor)
        cascades = compute_cascades(store, nid)
        stats.append(
            NarrativeStats(
                narrative_id=nid,
                tagged_posts=len(tagged),
                reach=len(reach_agents),
                adoption=len(adopters),
                cascade_count=len(cascades),
                max_cascade_depth=max((c.depth for c in cascades), default=0),
                cascade_sizes=sorted((c.size for c in cascades), reverse=True),
            )
        )

    degree: dict[str, int] = defaultdict(int)
    edges = 0
    for inter in interactions:
        target_post = by_id.get(inter.target)
        if target_post is None:
            continue
        degree[inter.actor] += 1
        degree[target_post.author] += 1
        edges += 1
    degree_distribution: dict[int, int] = defaultdict(int)
    for d in degree.values():
        degree_distribution[d] += 1

    trajectories: dict[str, list] = {}
    if include_trajectories:
        for agent_id in archetypes:
            acts = [
                {"kind": i.kind.value, "target": i.target, "at": i.at}
                for i in interactions
                if i.actor == agent_id
            ]
            trajectories[agent_id] = acts

    return DiffusionReport(
        narratives=stats,
        total_agents=len(archetypes),
        total_posts=len(posts),
        total_interactions=len(interactions),
        graph_nodes=len(degree),
        graph_edges=edges,
        degree_distribution=dict(degree_distribution),
        agent_trajectories=trajectories,
    )


# -- exports ---------------------------------------------------------------


def export_edge_list(store: Store, path: str | Path) -> int:
    """Interaction graph as CSV: source_agent, target_agent, kind,
    virtual_time_ms. Returns the number of edges written."""
    posts = {p.post_id: p for p in store.all_posts()}
    n = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["source_agent", "target_agent", "kind", "virtual_time_ms"])
        for inter in store.interactions():
            target_post = posts.get(inter.target)
            if target_post is None:
                continue
            writer.writerow([inter.actor, target_post.author, inter.kind.value, inter.at])
            n += 1
    return n


def export_event_log(store: Store, path: str | Path) -> str:
    """NDJSON of applied events, final line carries the chain hash."""
    log_hash = store.get_meta("log_hash") or ""
    with open(path, "w", encoding="utf-8") as fh:
        for _, event in store.events():
            fh.write(canonical_json(event) + "\n")
        fh.write(canonical_json({"log_hash": log_hash}) + "\n")
    return log_hash


def export_posts_ndjson(store: Store, path: str | Path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for post in store.all_posts():
            fh.write(canonical_json(post.to_dict()) + "\n")
            n += 1
    return n


def export_interactions_ndjson(store: Store, path: str | Path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for inter in store.interactions():
            fh.write(canonical_json(inter.to_dict()) + "\n")
            n += 1
    return n


def export_agents_ndjson(store: Store, path: str | Path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for agent_id in store.list_agents():
            fh.write(canonical_json(store.get_agent(agent_id)) + "\n")
            n += 1
    return n


def export_actions_csv(store: Store, path: str | Path) -> int:
    """Digital-DNA export: agent_id, code, virtual_time_ms per action event."""
    n = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["agent_id", "code", "virtual_time_ms"])
        for _, event in store.events():
            if event.get("type") == "action_due" and "skipped" not in event:
                writer.writerow([event["agent"], event["code"], event["at"]])
                n += 1
    return n


def write_report(report: DiffusionReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True), encoding="utf-8")

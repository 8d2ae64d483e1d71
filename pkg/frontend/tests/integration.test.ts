/** Round-trip against a real server: spawns the simulator API, drives the
 * control panel's code paths (pause / inject), and checks that the stream
 * fold converges to the paged REST views. */
import { spawn, type ChildProcess } from "node:child_process";
import path from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { applyCatchUp, feedPosts, initialState, registerCommand } from "../src/state.js";

const PORT = 8907;
const BASE = `http://127.0.0.1:${PORT}`;
const REPO_ROOT = path.resolve(path.dirname(fileURLToPath(import.meta.url)), "..", "..");

let server: ChildProcess;
const client = new ApiClient(BASE);

async function waitFor(predicate: () => Promise<boolean>, timeoutMs = 60_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  let lastError: unknown;
  while (Date.now() < deadline) {
    try {
      if (await predicate()) return;
    } catch (err) {
      lastError = err;
    }
    await new Promise((resolve) => setTimeout(resolve, 100));
  }
  throw new Error(`timed out waiting for condition: ${lastError ?? "predicate false"}`);
}

beforeAll(async () => {
  server = spawn(
    "botverse",
    [
      "serve",
      "--scenario",
      path.join(REPO_ROOT, "scenarios", "desk.json"),
      "--seed",
      "42",
      "--bind",
      `127.0.0.1:${PORT}`,
    ],
    { cwd: REPO_ROOT, stdio: ["ignore", "inherit", "inherit"] },
  );
  await waitFor(async () => (await client.health()).status === "ok");
});

afterAll(async () => {
  server.kill("SIGTERM");
  await new Promise((resolve) => {
    server.on("exit", resolve);
    setTimeout(resolve, 5000);
  });
});

describe("observatory round-trip", () => {
  it("inspector sees every persona field of a live agent", async () => {
    const agents = await client.agentsAll();
    expect(agents).toHaveLength(50);
    const detail = await client.agentDetail(agents[0].agent_id);
    for (const field of [
      "handle",
      "age",
      "gender",
      "location",
      "political_orientation",
      "religious_orientation",
      "education",
      "behavioral_traits",
      "archetype",
    ]) {
      expect(detail.persona).toHaveProperty(field);
    }
  });

  it("panel commands resolve in the stream and the quiescent feed equals GET /posts", async () => {
    const state = initialState();

    // control-panel actions, issued exactly as the UI does
    const inject = await client.control({
      kind: "inject_narrative",
      narrative_id: "N2",
      text: "A rival narrative seeded from the panel.",
      assignees: { archetype: "disinformative" },
    });
    registerCommand(state, inject.command_id, "inject_narrative");
    const pacing = await client.control({
      kind: "set_pacing",
      pacing: { mode: "scaled", factor: 0.001 },
    });
    registerCommand(state, pacing.command_id, "set_pacing");
    const resume = await client.control({ kind: "resume" });
    registerCommand(state, resume.command_id, "resume");

    // let ~50 virtual minutes elapse, past the scheduled N1 injection
    await waitFor(async () => (await client.simulation()).clock >= 3_000_000);
    const pause = await client.control({ kind: "pause" });
    registerCommand(state, pause.command_id, "pause");
    await waitFor(async () => (await client.simulation()).status === "paused");

    // fold the full delta history; re-drain until the pause command lands
    await waitFor(async () => {
      applyCatchUp(state, await client.streamCatchUp(state.lastSeq + 1));
      return state.pending.get(pause.command_id)?.resolved === true;
    });

    for (const id of [inject, pacing, resume, pause].map((a) => a.command_id)) {
      expect(state.pending.get(id)?.resolved).toBe(true);
      expect(state.pending.get(id)?.error).toBeUndefined();
    }
    expect([...state.narratives].sort()).toEqual(["N1", "N2"]);
    expect(state.status).toBe("paused");
    expect(state.needsResync).toBe(false);

    // view-store equivalence at quiescence
    const restPosts = await client.postsAll();
    expect(restPosts.length).toBeGreaterThan(0);
    const stripped = new Map(
      restPosts.map((p) => {
        const { likes: _likes, reposts: _reposts, ...rest } = p;
        return [p.post_id, rest];
      }),
    );
    const streamed = new Map(feedPosts(state).map((p) => [p.post_id, p]));
    expect(Object.fromEntries(streamed)).toEqual(Object.fromEntries(stripped));

    // interaction fold matches the graph endpoint
    const edges = await client.graph();
    expect(edges.length).toBe(state.interactions.length);

    // narrative badge data reaches the feed within the folded deltas
    const tagged = feedPosts(state).filter((p) => p.narrative_id === "N1");
    expect(tagged.length).toBeGreaterThan(0);
  });
});

import { describe, expect, it } from "vitest";

import type { Delta, PostView } from "../src/api.js";
import {
  applyCatchUp,
  applyDelta,
  feedPosts,
  initialState,
  registerCommand,
  resyncFrom,
  unresolvedCommands,
} from "../src/state.js";

function post(id: string, createdAt: number, narrative: string | null = null): PostView {
  return {
    post_id: id,
    author: "a00001",
    text: `text ${id}`,
    created_at: createdAt,
    image_prompt: null,
    image_ref: null,
    narrative_id: narrative,
    in_reply_to: null,
    repost_of: null,
  };
}

function delta(seq: number, overrides: Partial<Delta> = {}): Delta {
  return {
    seq,
    as_of: seq * 1000,
    events: [],
    new_posts: [],
    new_interactions: [],
    counters: { posts: seq },
    status: "running",
    ...overrides,
  };
}

describe("view state fold", () => {
  it("applies gapless deltas and accumulates posts/interactions", () => {
    const state = initialState();
    expect(applyDelta(state, delta(0, { new_posts: [post("p1", 10)] }))).toBe(true);
    expect(
      applyDelta(state, {
        ...delta(1),
        new_posts: [post("p2", 20)],
        new_interactions: [
          { kind: "like", actor: "a00002", target: "p1", at: 900, produced_post: null },
        ],
      }),
    ).toBe(true);
    expect(state.lastSeq).toBe(1);
    expect(state.posts.size).toBe(2);
    expect(state.interactions).toHaveLength(1);
    expect(state.status).toBe("running");
    expect(state.needsResync).toBe(false);
  });

  it("rejects out-of-order deltas and flags resync", () => {
    const state = initialState();
    applyDelta(state, delta(0));
    expect(applyDelta(state, delta(2))).toBe(false);
    expect(state.needsResync).toBe(true);
    expect(state.lastSeq).toBe(0);
    expect(resyncFrom(state)).toBe(1);
  });

  it("recovers via catch-up batches, skipping already-folded deltas", () => {
    const state = initialState();
    applyDelta(state, delta(0, { new_posts: [post("p1", 10)] }));
    applyDelta(state, delta(3)); // gap
    applyCatchUp(state, [
      delta(0, { new_posts: [post("p1", 10)] }),
      delta(1, { new_posts: [post("p2", 20)] }),
      delta(2),
      delta(3, { new_posts: [post("p3", 30)] }),
    ]);
    expect(state.needsResync).toBe(false);
    expect(state.lastSeq).toBe(3);
    expect([...state.posts.keys()].sort()).toEqual(["p1", "p2", "p3"]);
  });

  it("orders the feed like the REST timeline (created_at desc, post_id asc)", () => {
    const state = initialState();
    applyDelta(
      state,
      delta(0, { new_posts: [post("pb", 100), post("pa", 100), post("pc", 50)] }),
    );
    expect(feedPosts(state).map((p) => p.post_id)).toEqual(["pa", "pb", "pc"]);
  });

  it("resolves pending commands exactly when their control event streams by", () => {
    const state = initialState();
    registerCommand(state, 7, "pause");
    registerCommand(state, 8, "inject_narrative");
    expect(unresolvedCommands(state)).toHaveLength(2);
    applyDelta(
      state,
      delta(0, {
        events: [
          { at: 500, seq: 3, type: "control", command_id: 7, command: { kind: "pause" } },
          { at: 500, seq: 4, type: "agent_wake" },
        ],
      }),
    );
    expect(state.pending.get(7)?.resolved).toBe(true);
    expect(state.pending.get(7)?.at).toBe(500);
    expect(unresolvedCommands(state).map((c) => c.commandId)).toEqual([8]);
  });

  it("tracks narrative registration, ignoring rejected injections", () => {
    const state = initialState();
    applyDelta(
      state,
      delta(0, {
        events: [
          {
            at: 1,
            seq: 0,
            type: "control",
            command_id: 1,
            command: { kind: "inject_narrative", narrative_id: "N1" },
          },
          {
            at: 2,
            seq: 1,
            type: "control",
            command_id: 2,
            command: { kind: "inject_narrative", narrative_id: "N1" },
            error: "narrative N1 already registered",
          },
        ],
      }),
    );
    expect([...state.narratives]).toEqual(["N1"]);
  });
});

/** Client-side view state: a pure fold over sequence-numbered stream deltas.
 *
 * Invariants the tests pin down:
 *  - deltas apply only in gapless seq order; a gap flags needsResync and the
 *    delta is ignored (recovery = catch-up read from lastSeq + 1);
 *  - at quiescence the accumulated post set equals paged GET /posts;
 *  - a submitted command resolves exactly when its control event streams by.
 */
import type { Delta, InteractionView, PostView } from "./api.js";

export type Connection = "connecting" | "live" | "reconnecting" | "closed";

export interface PendingCommand {
  commandId: number;
  kind: string;
  resolved: boolean;
  error?: string;
  at?: number;
}

export interface ViewState {
  connection: Connection;
  lastSeq: number; // -1 before the first delta
  needsResync: boolean;
  status: string;
  asOf: number;
  counters: Record<string, number>;
  posts: Map<string, PostView>;
  interactions: InteractionView[];
  narratives: Set<string>;
  pending: Map<number, PendingCommand>;
}

export function initialState(): ViewState {
  return {
    connection: "connecting",
    lastSeq: -1,
    needsResync: false,
    status: "paused",
    asOf: 0,
    counters: {},
    posts: new Map(),
    interactions: [],
    narratives: new Set(),
    pending: new Map(),
  };
}

/** Record a command the user just submitted, keyed by the ack's id. */
export function registerCommand(state: ViewState, commandId: number, kind: string): void {
  state.pending.set(commandId, { commandId, kind, resolved: false });
}

/** Fold one delta. Returns true if applied, false if it was out of order. */
export function applyDelta(state: ViewState, delta: Delta): boolean {
  if (delta.seq !== state.lastSeq + 1) {
    state.needsResync = true;
    return false;
  }
  state.lastSeq = delta.seq;
  state.asOf = delta.as_of;
  state.status = delta.status;
  state.counters = { ...delta.counters };
  for (const post of delta.new_posts) {
    state.posts.set(post.post_id, post);
  }
  state.interactions.push(...delta.new_interactions);
  for (const event of delta.events) {
    if (event.type !== "control") continue;
    if (event.command?.kind === "inject_narrative" && event.command.narrative_id && !event.error) {
      state.narratives.add(String(event.command.narrative_id));
    }
    const pending = event.command_id !== undefined ? state.pending.get(event.command_id) : undefined;
    if (pending) {
      pending.resolved = true;
      pending.at = event.at;
      if (event.error) pending.error = event.error;
    }
  }
  return true;
}

/** First seq to request when recovering from a gap or reconnect. */
export function resyncFrom(state: ViewState): number {
  return state.lastSeq + 1;
}

/** Apply a catch-up batch; clears needsResync once the chain is gapless again. */
export function applyCatchUp(state: ViewState, deltas: Delta[]): void {
  for (const delta of deltas) {
    if (delta.seq <= state.lastSeq) continue; // already folded
    applyDelta(state, delta);
  }
  if (deltas.length === 0 || deltas[deltas.length - 1].seq === state.lastSeq) {
    state.needsResync = false;
  }
}

/** Feed ordering mirroring the REST timeline: created_at desc, post_id asc. */
export function feedPosts(state: ViewState): PostView[] {
  return [...state.posts.values()].sort(
    (a, b) => b.created_at - a.created_at || (a.post_id < b.post_id ? -1 : 1),
  );
}

export function unresolvedCommands(state: ViewState): PendingCommand[] {
  return [...state.pending.values()].filter((c) => !c.resolved);
}

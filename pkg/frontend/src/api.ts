/** Typed client for the orchestration HTTP API.
 *
 * The Observatory holds no state the API cannot reconstruct: everything
 * here is a thin, paged, or streamed read plus command submission.
 */
import { parseNdjson } from "./ndjson.js";

export interface PostView {
  post_id: string;
  author: string;
  text: string;
  created_at: number;
  image_prompt: string | null;
  image_ref: string | null;
  narrative_id: string | null;
  in_reply_to: string | null;
  repost_of: string | null;
  likes?: number;
  reposts?: number;
}

export interface InteractionView {
  kind: "like" | "reply" | "repost";
  actor: string;
  target: string;
  at: number;
  produced_post: string | null;
}

export interface EdgeView {
  source_agent: string;
  target_agent: string;
  kind: string;
  virtual_time_ms: number;
}

export interface LogEvent {
  at: number;
  seq: number;
  type: string;
  command_id?: number;
  command?: { kind?: string; narrative_id?: string; [key: string]: unknown };
  error?: string;
  [key: string]: unknown;
}

export interface Delta {
  seq: number;
  as_of: number;
  events: LogEvent[];
  new_posts: PostView[];
  new_interactions: InteractionView[];
  counters: Record<string, number>;
  status: string;
}

export interface SimulationSnapshot {
  status: string;
  clock: number;
  agents: number;
  applied_events: number;
  log_hash: string;
  pacing: { mode: string; factor: number };
  queue_size: number;
  counters: Record<string, number>;
  narratives: string[];
  posts: number;
  interactions: number;
}

export interface AgentSummary {
  agent_id: string;
  handle: string;
  archetype: string;
}

export interface MemoryViewItem {
  post_id: string;
  observed_at: number;
  likes_seen: number;
  reposts_seen: number;
  score: number;
}

export interface AgentDetail {
  agent_id: string;
  persona: Record<string, unknown>;
  memory_params: Record<string, number>;
  memory_top_k: MemoryViewItem[];
  dna_sequence: string[];
  dna_position: number;
  active_narrative: string | null;
}

export interface ControlCommand {
  kind: string;
  pacing?: { mode: string; factor?: number };
  narrative_id?: string;
  text?: string;
  assignees?: Record<string, unknown>;
  population?: Record<string, unknown>;
  selector?: Record<string, unknown>;
  patch?: Record<string, number>;
  reusable?: boolean;
}

export interface ControlAck {
  command_id: number;
  accepted: boolean;
}

export interface PostFilters {
  since?: number;
  narrative?: string;
  author?: string;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private readonly fetchFn: FetchLike;

  constructor(
    readonly base: string,
    fetchFn?: FetchLike,
  ) {
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  url(path: string, params: Record<string, string | number | boolean | undefined> = {}): string {
    const query = Object.entries(params)
      .filter(([, v]) => v !== undefined)
      .map(([k, v]) => `${encodeURIComponent(k)}=${encodeURIComponent(String(v))}`)
      .join("&");
    return `${this.base}${path}${query ? `?${query}` : ""}`;
  }

  private async request<T>(path: string, params = {}, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(this.url(path, params), init);
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        const body = (await resp.json()) as { detail?: string };
        if (body.detail) detail = body.detail;
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  health(): Promise<{ status: string }> {
    return this.request("/health");
  }

  simulation(): Promise<SimulationSnapshot> {
    return this.request("/simulation");
  }

  async agentsAll(pageSize = 200): Promise<AgentSummary[]> {
    const out: AgentSummary[] = [];
    let cursor: string | undefined;
    for (;;) {
      const page = await this.request<{ agents: AgentSummary[]; next_cursor: string | null }>(
        "/agents",
        { limit: pageSize, cursor },
      );
      out.push(...page.agents);
      if (page.next_cursor === null) return out;
      cursor = page.next_cursor;
    }
  }

  agentDetail(agentId: string, k = 10): Promise<AgentDetail> {
    return this.request(`/agents/${encodeURIComponent(agentId)}`, { k });
  }

  async postsAll(filters: PostFilters = {}, pageSize = 200): Promise<PostView[]> {
    const out: PostView[] = [];
    let cursor: string | undefined;
    for (;;) {
      const page = await this.request<{ posts: PostView[]; next_cursor: string | null }>("/posts", {
        limit: pageSize,
        cursor,
        ...filters,
      });
      out.push(...page.posts);
      if (page.next_cursor === null) return out;
      cursor = page.next_cursor;
    }
  }

  async graph(since?: number): Promise<EdgeView[]> {
    const body = await this.request<{ edges: EdgeView[] }>("/graph", { since });
    return body.edges;
  }

  ingestionStats(): Promise<Record<string, number>> {
    return this.request("/ingestion/stats");
  }

  control(command: ControlCommand): Promise<ControlAck> {
    return this.request("/control", {}, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(command),
    });
  }

  patchMemoryParams(agentId: string, patch: Record<string, number>): Promise<ControlAck> {
    return this.request(`/agents/${encodeURIComponent(agentId)}/memory_params`, {}, {
      method: "PATCH",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(patch),
    });
  }

  /** One-shot catch-up read: all deltas from `fromSeq` accumulated so far. */
  async streamCatchUp(fromSeq: number): Promise<Delta[]> {
    const resp = await this.fetchFn(this.url("/stream", { from_seq: fromSeq, follow: false }));
    if (!resp.ok) throw new ApiError(resp.status, resp.statusText);
    const text = await resp.text();
    return parseNdjson(text).filter((obj): obj is Delta => (obj as Delta).seq !== null);
  }
}

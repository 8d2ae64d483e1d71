/** DOM rendering for the four Observatory surfaces: feed, graph, agent
 * inspector, and control panel. Pure render-from-state functions; all
 * data comes from the API client / stream fold. */
import type { AgentDetail, AgentSummary } from "./api.js";
import type { Graph } from "./graph.js";
import { feedPosts, unresolvedCommands, ViewState } from "./state.js";

const ARCHETYPE_COLORS: Record<string, string> = {
  benign: "#4f8fd0",
  disinformative: "#d05a4f",
};

function el(tag: string, className?: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function fmtVirtual(ms: number): string {
  const s = Math.floor(ms / 1000);
  const h = Math.floor(s / 3600);
  const m = Math.floor((s % 3600) / 60);
  return `${h}h${String(m).padStart(2, "0")}m`;
}

export function renderStatus(container: HTMLElement, state: ViewState): void {
  container.replaceChildren();
  const chip = el("span", `chip chip-${state.status}`, state.status);
  const conn = el("span", `chip chip-conn-${state.connection}`, state.connection);
  const clock = el("span", "clock", `t = ${fmtVirtual(state.asOf)}`);
  const counters = el(
    "span",
    "counters",
    `posts ${state.counters.posts ?? 0} · likes ${state.counters.likes ?? 0} · ` +
      `replies ${state.counters.replies ?? 0} · reposts ${state.counters.reposts ?? 0}`,
  );
  container.append(chip, conn, clock, counters);
  if (state.needsResync) container.append(el("span", "chip chip-warn", "re-syncing"));
}

export function renderFeed(
  container: HTMLElement,
  state: ViewState,
  onSelectAgent: (agentId: string) => void,
  limit = 100,
): void {
  container.replaceChildren();
  for (const post of feedPosts(state).slice(0, limit)) {
    const card = el("article", "post");
    const head = el("header");
    const author = el("a", "author", post.author);
    author.addEventListener("click", () => onSelectAgent(post.author));
    head.append(author, el("span", "time", fmtVirtual(post.created_at)));
    if (post.narrative_id) head.append(el("span", "badge", post.narrative_id));
    if (post.repost_of) head.append(el("span", "kind", `↻ ${post.repost_of}`));
    if (post.in_reply_to) head.append(el("span", "kind", `↩ ${post.in_reply_to}`));
    card.append(head, el("p", "text", post.text));
    const likes = post.likes ?? 0;
    const reposts = post.reposts ?? 0;
    card.append(el("footer", "engagement", `♥ ${likes}   ↻ ${reposts}`));
    container.append(card);
  }
}

export function renderGraph(svg: SVGSVGElement, graph: Graph, selected?: string): void {
  svg.replaceChildren();
  const width = svg.clientWidth || 600;
  const height = svg.clientHeight || 400;
  const pad = 24;
  const xs = graph.nodes.map((n) => n.x);
  const ys = graph.nodes.map((n) => n.y);
  const minX = Math.min(...xs, -1);
  const maxX = Math.max(...xs, 1);
  const minY = Math.min(...ys, -1);
  const maxY = Math.max(...ys, 1);
  const sx = (x: number) => pad + ((x - minX) / (maxX - minX || 1)) * (width - 2 * pad);
  const sy = (y: number) => pad + ((y - minY) / (maxY - minY || 1)) * (height - 2 * pad);
  const ns = "http://www.w3.org/2000/svg";
  const byId = new Map(graph.nodes.map((n) => [n.id, n]));
  for (const link of graph.links) {
    const a = byId.get(link.source);
    const b = byId.get(link.target);
    if (!a || !b) continue;
    const line = document.createElementNS(ns, "line");
    line.setAttribute("x1", String(sx(a.x)));
    line.setAttribute("y1", String(sy(a.y)));
    line.setAttribute("x2", String(sx(b.x)));
    line.setAttribute("y2", String(sy(b.y)));
    line.setAttribute("stroke", "#99a");
    line.setAttribute("stroke-width", String(Math.min(4, 0.5 + link.weight * 0.5)));
    svg.append(line);
  }
  for (const node of graph.nodes) {
    const circle = document.createElementNS(ns, "circle");
    circle.setAttribute("cx", String(sx(node.x)));
    circle.setAttribute("cy", String(sy(node.y)));
    circle.setAttribute("r", String(3 + Math.min(9, Math.sqrt(node.degree))));
    circle.setAttribute("fill", ARCHETYPE_COLORS[node.archetype ?? ""] ?? "#888");
    if (node.id === selected) circle.setAttribute("stroke", "#000");
    const title = document.createElementNS(ns, "title");
    title.textContent = `${node.id} (degree ${node.degree})`;
    circle.append(title);
    svg.append(circle);
  }
}

export function renderInspector(
  container: HTMLElement,
  detail: AgentDetail | null,
  summary?: AgentSummary,
): void {
  container.replaceChildren();
  if (!detail) {
    container.append(el("p", "hint", "Select an agent to inspect."));
    return;
  }
  container.append(el("h3", undefined, `${summary?.handle ?? detail.agent_id} (${detail.agent_id})`));
  const persona = el("dl", "persona");
  for (const [key, value] of Object.entries(detail.persona)) {
    persona.append(el("dt", undefined, key));
    persona.append(
      el("dd", undefined, typeof value === "object" ? JSON.stringify(value) : String(value)),
    );
  }
  container.append(persona);
  container.append(
    el("p", "dna", `program: ${detail.dna_sequence.join(" ")} @ ${detail.dna_position}`),
  );
  if (detail.active_narrative) {
    container.append(el("p", "badge", `campaign: ${detail.active_narrative}`));
  }
  container.append(el("h4", undefined, "memory top-k"));
  const list = el("ol", "memory");
  for (const item of detail.memory_top_k) {
    list.append(
      el(
        "li",
        undefined,
        `${item.post_id}  score ${item.score.toFixed(3)}  (♥${item.likes_seen} ↻${item.reposts_seen})`,
      ),
    );
  }
  container.append(list);
}

export interface ControlHandlers {
  onPause: () => void;
  onResume: () => void;
  onPacing: (mode: string, factor: number) => void;
  onInject: (narrativeId: string, text: string, archetype: string) => void;
  onPatchMemory: (patch: Record<string, number>) => void;
}

export function renderControlPanel(
  container: HTMLElement,
  state: ViewState,
  handlers: ControlHandlers,
): void {
  container.replaceChildren();

  const runRow = el("div", "row");
  const pause = el("button", undefined, "pause") as HTMLButtonElement;
  pause.disabled = state.status !== "running";
  pause.addEventListener("click", handlers.onPause);
  const resume = el("button", undefined, "resume") as HTMLButtonElement;
  resume.disabled = state.status !== "paused";
  resume.addEventListener("click", handlers.onResume);
  runRow.append(pause, resume);
  container.append(runRow);

  const paceRow = el("div", "row");
  const factor = el("input") as HTMLInputElement;
  factor.type = "number";
  factor.step = "0.001";
  factor.value = "0.01";
  const scaled = el("button", undefined, "scaled pacing") as HTMLButtonElement;
  scaled.addEventListener("click", () => handlers.onPacing("scaled", Number(factor.value)));
  const free = el("button", undefined, "free run") as HTMLButtonElement;
  free.addEventListener("click", () => handlers.onPacing("free_run", 1));
  paceRow.append(factor, scaled, free);
  container.append(paceRow);

  const injectRow = el("div", "row");
  const nid = el("input") as HTMLInputElement;
  nid.placeholder = "narrative id";
  const text = el("input") as HTMLInputElement;
  text.placeholder = "narrative text";
  const arch = el("select") as HTMLSelectElement;
  for (const a of ["disinformative", "benign"]) {
    const opt = el("option", undefined, a) as HTMLOptionElement;
    opt.value = a;
    arch.append(opt);
  }
  const inject = el("button", undefined, "inject") as HTMLButtonElement;
  inject.addEventListener("click", () => handlers.onInject(nid.value, text.value, arch.value));
  injectRow.append(nid, text, arch, inject);
  container.append(injectRow);

  const sliders = el("div", "row sliders");
  const patch: Record<string, number> = {};
  for (const [name, min, max, step, initial] of [
    ["alpha", 0, 5, 0.1, 1],
    ["beta", 0, 5, 0.1, 1],
    ["half_life", 60, 14400, 60, 3600],
  ] as const) {
    const label = el("label", undefined, name);
    const slider = el("input") as HTMLInputElement;
    slider.type = "range";
    slider.min = String(min);
    slider.max = String(max);
    slider.step = String(step);
    slider.value = String(initial);
    slider.addEventListener("input", () => {
      patch[name] = Number(slider.value);
    });
    label.append(slider);
    sliders.append(label);
  }
  const apply = el("button", undefined, "apply memory params") as HTMLButtonElement;
  apply.addEventListener("click", () => handlers.onPatchMemory({ ...patch }));
  sliders.append(apply);
  container.append(sliders);

  const pendingList = el("ul", "pending");
  for (const cmd of state.pending.values()) {
    const label = cmd.error
      ? `#${cmd.commandId} ${cmd.kind} — rejected: ${cmd.error}`
      : `#${cmd.commandId} ${cmd.kind} — ${cmd.resolved ? `applied @ ${fmtVirtual(cmd.at ?? 0)}` : "pending"}`;
    pendingList.append(el("li", cmd.resolved ? "resolved" : "pending", label));
  }
  container.append(el("h4", undefined, `commands (${unresolvedCommands(state).length} pending)`));
  container.append(pendingList);
}

/** Observatory bootstrap: wires the API client, stream fold, and the four
 * UI surfaces together. API base URL comes from ?api=… or defaults to the
 * serving origin. */
import { ApiClient, type AgentSummary, type ControlAck } from "./api.js";
import { buildGraph, runLayout } from "./graph.js";
import { applyCatchUp, initialState, registerCommand, resyncFrom } from "./state.js";
import { StreamFollower } from "./stream.js";
import {
  renderControlPanel,
  renderFeed,
  renderGraph,
  renderInspector,
  renderStatus,
} from "./ui.js";

function apiBase(): string {
  const fromQuery = new URLSearchParams(window.location.search).get("api");
  return (fromQuery ?? window.location.origin).replace(/\/$/, "");
}

async function boot(): Promise<void> {
  const client = new ApiClient(apiBase());
  const state = initialState();
  const agents = new Map<string, AgentSummary>();
  const archetypes = new Map<string, string>();
  let selectedAgent: string | undefined;

  const statusEl = document.getElementById("status")!;
  const feedEl = document.getElementById("feed")!;
  const graphEl = document.getElementById("graph") as unknown as SVGSVGElement;
  const inspectorEl = document.getElementById("inspector")!;
  const controlsEl = document.getElementById("controls")!;

  async function refreshAgents(): Promise<void> {
    for (const agent of await client.agentsAll()) {
      agents.set(agent.agent_id, agent);
      archetypes.set(agent.agent_id, agent.archetype);
    }
  }

  async function refreshInspector(): Promise<void> {
    if (!selectedAgent) {
      renderInspector(inspectorEl, null);
      return;
    }
    const detail = await client.agentDetail(selectedAgent, 10);
    renderInspector(inspectorEl, detail, agents.get(selectedAgent));
  }

  async function refreshGraph(): Promise<void> {
    const graph = buildGraph(await client.graph(), archetypes);
    runLayout(graph, 80);
    renderGraph(graphEl, graph, selectedAgent);
  }

  function selectAgent(agentId: string): void {
    selectedAgent = agentId;
    void refreshInspector();
    void refreshGraph();
  }

  function redraw(): void {
    renderStatus(statusEl, state);
    renderFeed(feedEl, state, selectAgent);
    renderControlPanel(controlsEl, state, {
      onPause: () => submit(client.control({ kind: "pause" }), "pause"),
      onResume: () => submit(client.control({ kind: "resume" }), "resume"),
      onPacing: (mode, factor) =>
        submit(client.control({ kind: "set_pacing", pacing: { mode, factor } }), "set_pacing"),
      onInject: (narrativeId, text, archetype) =>
        submit(
          client.control({
            kind: "inject_narrative",
            narrative_id: narrativeId,
            text,
            assignees: { archetype },
          }),
          "inject_narrative",
        ),
      onPatchMemory: (patch) => {
        if (selectedAgent) {
          submit(client.patchMemoryParams(selectedAgent, patch), "patch_memory_params");
        }
      },
    });
  }

  function submit(ack: Promise<ControlAck>, kind: string): void {
    ack
      .then((resp) => {
        registerCommand(state, resp.command_id, kind);
        redraw();
      })
      .catch((err) => {
        statusEl.append(Object.assign(document.createElement("span"), {
          className: "chip chip-warn",
          textContent: String(err),
        }));
      });
  }

  await refreshAgents();
  redraw();
  void refreshGraph();

  let graphDirty = false;
  const follower = new StreamFollower(client, {
    onDelta: (delta) => {
      if (state.needsResync) {
        void client.streamCatchUp(resyncFrom(state)).then((missed) => {
          applyCatchUp(state, missed);
          redraw();
        });
      }
      applyCatchUp(state, [delta]);
      graphDirty = graphDirty || delta.new_interactions.length > 0;
      redraw();
    },
    onConnection: (conn) => {
      state.connection = conn;
      renderStatus(statusEl, state);
    },
  });
  void follower.run(0);

  setInterval(() => {
    if (graphDirty) {
      graphDirty = false;
      void refreshGraph();
    }
    void refreshInspector();
  }, 2000);

  window.addEventListener("beforeunload", () => follower.stop());
}

if (typeof document !== "undefined") {
  void boot();
}

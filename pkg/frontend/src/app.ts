// Browser entry point. Wires the DOM in static/index.html to the client:
// every number on screen comes from a snapshot, every button turns into one
// command frame.

import { ConsoleClient } from "./client.js";
import * as proto from "./protocol.js";
import { polylinePoints, renderTimeline } from "./timeline.js";
import { ConsoleSessionView } from "./view.js";

const wsUrl = `${location.origin.replace(/^http/, "ws")}/ws`;
const client = new ConsoleClient(wsUrl);

const views = new Map<string, ConsoleSessionView>();
let selected: string | null = null;

const $ = (id: string) => document.getElementById(id)!;

function viewFor(session: string): ConsoleSessionView {
  let view = views.get(session);
  if (!view) {
    view = new ConsoleSessionView(session);
    views.set(session, view);
    const option = document.createElement("option");
    option.value = session;
    option.textContent = session;
    $("session-select").appendChild(option);
    if (selected === null) select(session);
  }
  return view;
}

function select(session: string): void {
  selected = session;
  ($("session-select") as HTMLSelectElement).value = session;
  redraw();
}

function setStatusLine(text: string, cls: string): void {
  const el = $("conn-status");
  el.textContent = text;
  el.className = cls;
}

client.on("state", (s) => {
  setStatusLine(s === "open" ? "connected" : s, s === "open" ? "ok" : "down");
});
client.on("error", (e) => {
  $("last-error").textContent = e.error;
});
client.on("snapshot", (snap) => {
  viewFor(snap.session).apply(snap);
  if (snap.session === selected) redraw();
});

function redraw(): void {
  if (!selected) return;
  const view = views.get(selected);
  if (!view) return;
  const tl = renderTimeline(view);
  $("status").textContent = `${tl.status}${tl.phase ? ` (${tl.phase})` : ""}`;
  $("method").textContent = tl.method ?? "—";
  $("action").textContent = tl.lastAction ?? "—";
  $("terminal").textContent = tl.terminalMarker ? `ended: ${tl.terminalMarker.outcome}` : "";

  const t1 = view.latest?.t ?? 0;
  const t0 = Math.max(0, t1 - 300);
  drawLine("chart-estimate", tl.estimate, t0, t1, 0, 10);
  drawLine("chart-desired", tl.desired, t0, t1, 0, 10);
  drawLine("chart-reward", tl.reward, t0, t1, -1, 1);
  drawLine("chart-eda", tl.eda, Math.max(0, t1 - 60), t1, 0, edaMax(tl.eda));
  drawGauges(tl.spider);
}

function edaMax(points: readonly { value: number }[]): number {
  let max = 1;
  for (const p of points) if (p.value > max) max = p.value;
  return max * 1.1;
}

function drawLine(
  id: string,
  series: readonly { t: number; value: number }[],
  t0: number,
  t1: number,
  v0: number,
  v1: number,
): void {
  const el = $(id);
  const svg = el.closest("svg")!;
  const w = Number(svg.getAttribute("viewBox")!.split(" ")[2]);
  const h = Number(svg.getAttribute("viewBox")!.split(" ")[3]);
  el.setAttribute("points", polylinePoints(series, w, h, t0, t1, v0, v1));
}

function drawGauges(spider: { name: string; value: number; max: number }[] | null): void {
  const host = $("spider");
  host.innerHTML = "";
  if (!spider) {
    host.textContent = "no stimulus shown (relax phase)";
    return;
  }
  for (const g of spider) {
    const row = document.createElement("div");
    row.className = "gauge";
    const ticks = Array.from({ length: g.max + 1 }, (_, i) => (i <= g.value ? "●" : "○")).join(" ");
    row.textContent = `${g.name}: ${ticks} (${g.value}/${g.max})`;
    host.appendChild(row);
  }
}

async function steer(cmd: proto.Command): Promise<void> {
  try {
    await client.send(cmd);
    $("last-error").textContent = "";
  } catch (err) {
    $("last-error").textContent = String(err instanceof Error ? err.message : err);
  }
}

function wireControls(): void {
  $("session-select").addEventListener("change", (ev) => {
    select((ev.target as HTMLSelectElement).value);
  });
  $("start").addEventListener("click", () => {
    const persona = Number(($("persona") as HTMLInputElement).value);
    const manual = ($("manual") as HTMLInputElement).checked;
    void steer(
      proto.startSession({
        ...(manual ? { manual: true } : { source: { persona } }),
        pace_s: Number(($("pace") as HTMLInputElement).value),
        seed: Math.floor(Math.random() * 1e6),
      }),
    );
  });
  $("desired").addEventListener("input", () => {
    $("desired-value").textContent = ($("desired") as HTMLInputElement).value;
  });
  $("set-desired").addEventListener("click", () => {
    if (selected) void steer(proto.setDesired(selected, Number(($("desired") as HTMLInputElement).value)));
  });
  $("pause").addEventListener("click", () => selected && void steer(proto.pause(selected)));
  $("resume").addEventListener("click", () => selected && void steer(proto.resume(selected)));
  $("switch-rl").addEventListener("click", () => selected && void steer(proto.switchMethod(selected, "rl")));
  $("switch-rules").addEventListener("click", () => selected && void steer(proto.switchMethod(selected, "rules")));
  $("abort").addEventListener("click", () => {
    if (selected && confirm(`Abort session ${selected}?`)) void steer(proto.abort(selected));
  });
  $("submit-suds").addEventListener("click", () => {
    if (selected) void steer(proto.submitSuds(selected, Number(($("suds") as HTMLInputElement).value)));
  });
}

async function loadExistingSessions(): Promise<void> {
  const res = await fetch("/sessions");
  const body = (await res.json()) as { sessions: { id: string; snapshot: unknown }[] };
  for (const s of body.sessions) {
    const view = viewFor(s.id);
    if (s.snapshot) {
      view.apply(proto.parseFrame(JSON.stringify(s.snapshot)) as proto.Snapshot);
    }
  }
  redraw();
}

wireControls();
client.connect();
void loadExistingSessions();

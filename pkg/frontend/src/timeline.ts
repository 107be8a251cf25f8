import type { Point } from "./buffers.js";
import { ATTRIBUTE_CARDINALITIES, ATTRIBUTE_NAMES } from "./protocol.js";
import type { ConsoleSessionView } from "./view.js";

export interface Gauge {
  name: string;
  value: number;
  max: number;
}

export interface TerminalMarker {
  t: number;
  outcome: string;
}

/** Everything a renderer needs to draw one session panel; derived purely from
 * buffered snapshots, no extra computation on the numbers themselves. */
export interface TimelineState {
  session: string;
  status: string;
  phase: string | null;
  method: string | null;
  lastAction: string | null;
  estimate: readonly Point[];
  desired: readonly Point[];
  reward: readonly Point[];
  eda: readonly Point[];
  /** One labeled ordinal gauge per stimulus attribute, null during relax. */
  spider: Gauge[] | null;
  /** Set once the session ended by safety stop or operator abort. */
  terminalMarker: TerminalMarker | null;
}

export function renderTimeline(view: ConsoleSessionView): TimelineState {
  const snap = view.latest;
  const spider =
    snap?.config == null
      ? null
      : snap.config.map((value, i) => ({
          name: ATTRIBUTE_NAMES[i],
          value,
          max: ATTRIBUTE_CARDINALITIES[i] - 1,
        }));
  return {
    session: view.sessionId,
    status: snap?.status ?? "idle",
    phase: snap?.phase ?? null,
    method: snap?.method ?? null,
    lastAction: snap?.action ?? null,
    estimate: view.estimate.points(),
    desired: view.desired.points(),
    reward: view.reward.points(),
    eda: view.eda.points(),
    spider,
    terminalMarker: snap && snap.safety.terminal ? { t: snap.t, outcome: snap.safety.outcome } : null,
  };
}

/** Map a series into an SVG polyline `points` attribute within a viewport. */
export function polylinePoints(
  series: readonly Point[],
  width: number,
  height: number,
  tMin: number,
  tMax: number,
  vMin: number,
  vMax: number,
): string {
  if (tMax <= tMin || vMax <= vMin) return "";
  return series
    .filter((p) => p.t >= tMin && p.t <= tMax)
    .map((p) => {
      const x = ((p.t - tMin) / (tMax - tMin)) * width;
      const y = height - ((p.value - vMin) / (vMax - vMin)) * height;
      return `${x.toFixed(1)},${y.toFixed(1)}`;
    })
    .join(" ");
}

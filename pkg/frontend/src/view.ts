import { SeriesBuffer } from "./buffers.js";
import type { Snapshot } from "./protocol.js";

const HORIZON_S = 300;

/**
 * Client-side state for one observed session: the latest snapshot plus ring
 * buffers over the last 300 s of estimate/desired/reward/EDA. Snapshots are
 * stored as received and never mutated; null fields (relax phase) simply add
 * no points.
 */
export class ConsoleSessionView {
  readonly estimate = new SeriesBuffer(HORIZON_S);
  readonly desired = new SeriesBuffer(HORIZON_S);
  readonly reward = new SeriesBuffer(HORIZON_S);
  readonly eda = new SeriesBuffer(HORIZON_S);
  latest: Snapshot | null = null;
  snapshotCount = 0;

  constructor(readonly sessionId: string) {}

  /** Fold one snapshot into the buffers; frames for other sessions are ignored. */
  apply(snap: Snapshot): boolean {
    if (snap.session !== this.sessionId) return false;
    this.latest = snap;
    this.snapshotCount++;
    if (snap.estimate !== null) this.estimate.push(snap.t, snap.estimate);
    if (snap.desired !== null) this.desired.push(snap.t, snap.desired);
    if (snap.reward !== null) this.reward.push(snap.t, snap.reward);
    for (const [t, conductance] of snap.eda) this.eda.push(t, conductance);
    return true;
  }

  get terminal(): boolean {
    return this.latest !== null && this.latest.safety.terminal;
  }

  get done(): boolean {
    const s = this.latest?.status;
    return s === "terminated" || s === "completed";
  }
}

export interface Point {
  t: number;
  value: number;
}

/**
 * Time-ordered series with a sliding horizon (default 300 s).
 *
 * Out-of-order or already-seen timestamps are dropped, so replaying snapshots
 * after a reconnect cannot duplicate points or fold the polyline back on
 * itself.
 */
export class SeriesBuffer {
  private buf: Point[] = [];

  constructor(readonly horizonS: number = 300) {
    if (!(horizonS > 0)) throw new Error(`horizon must be positive, got ${horizonS}`);
  }

  get lastT(): number | null {
    return this.buf.length ? this.buf[this.buf.length - 1].t : null;
  }

  /** Append one sample; returns false if the timestamp was not newer than the tail. */
  push(t: number, value: number): boolean {
    const last = this.lastT;
    if (last !== null && t <= last) return false;
    this.buf.push({ t, value });
    const cutoff = t - this.horizonS;
    let drop = 0;
    while (drop < this.buf.length && this.buf[drop].t < cutoff) drop++;
    if (drop > 0) this.buf = this.buf.slice(drop);
    return true;
  }

  points(): readonly Point[] {
    return this.buf;
  }

  get length(): number {
    return this.buf.length;
  }

  clear(): void {
    this.buf = [];
  }
}

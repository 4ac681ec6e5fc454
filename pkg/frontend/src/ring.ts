// Bounded, time-ordered trace buffer for the scrolling plots.

export interface TracePoint {
  t: number;
  v: number;
}

export class TraceRing {
  private buf: TracePoint[] = [];

  constructor(
    readonly windowS: number,
    readonly maxPoints = 4096,
  ) {}

  /** Append a sample; out-of-order stamps are dropped to keep the buffer time-ordered. */
  push(t: number, v: number): void {
    const last = this.buf[this.buf.length - 1];
    if (last !== undefined && t < last.t) return;
    this.buf.push({ t, v });
    const cutoff = t - this.windowS;
    let drop = 0;
    while (
      drop < this.buf.length - 1 &&
      (this.buf[drop].t < cutoff || this.buf.length - drop > this.maxPoints)
    ) {
      drop++;
    }
    if (drop > 0) this.buf = this.buf.slice(drop);
  }

  points(): readonly TracePoint[] {
    return this.buf;
  }

  latest(): TracePoint | undefined {
    return this.buf[this.buf.length - 1];
  }

  clear(): void {
    this.buf = [];
  }
}

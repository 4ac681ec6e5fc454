import { describe, expect, it } from "vitest";

import { TraceRing } from "../src/ring.js";

describe("TraceRing", () => {
  it("keeps only the configured time window", () => {
    const ring = new TraceRing(10);
    for (let t = 0; t <= 25; t++) ring.push(t, t * 2);
    const pts = ring.points();
    expect(pts[0].t).toBeGreaterThanOrEqual(15);
    expect(pts[pts.length - 1]).toEqual({ t: 25, v: 50 });
  });

  it("stays time-ordered by dropping out-of-order samples", () => {
    const ring = new TraceRing(10);
    ring.push(1, 10);
    ring.push(3, 30);
    ring.push(2, 99); // replayed/stale sample
    expect(ring.points().map((p) => p.t)).toEqual([1, 3]);
  });

  it("caps the point count", () => {
    const ring = new TraceRing(1e9, 100);
    for (let i = 0; i < 500; i++) ring.push(i, i);
    expect(ring.points().length).toBeLessThanOrEqual(100);
    expect(ring.latest()).toEqual({ t: 499, v: 499 });
  });

  it("clear empties the buffer", () => {
    const ring = new TraceRing(10);
    ring.push(1, 1);
    ring.clear();
    expect(ring.points().length).toBe(0);
    expect(ring.latest()).toBeUndefined();
  });
});

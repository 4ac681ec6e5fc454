import { describe, expect, it } from "vitest";

import { ApertureCommander, OperatorCmd } from "../src/commander.js";

/** Deterministic clock + timer queue so the rate cap is tested exactly. */
function harness() {
  let t = 0;
  const timers: { at: number; fn: () => void; dead: boolean }[] = [];
  const sent: OperatorCmd[] = [];
  const commander = new ApertureCommander((cmd) => sent.push(cmd), 0, 0.05, {
    now: () => t,
    schedule: (fn, ms) => {
      const h = { at: t + ms, fn, dead: false };
      timers.push(h);
      return h;
    },
    cancel: (h) => {
      (h as { dead: boolean }).dead = true;
    },
  });
  const advance = (ms: number) => {
    const target = t + ms;
    for (;;) {
      const due = timers
        .filter((h) => !h.dead && h.at <= target)
        .sort((a, b) => a.at - b.at)[0];
      if (!due) break;
      t = due.at;
      due.dead = true;
      due.fn();
    }
    t = target;
  };
  return { commander, sent, advance };
}

describe("ApertureCommander", () => {
  it("publishes immediately when idle", () => {
    const { commander, sent } = harness();
    commander.set(0.012);
    expect(sent).toEqual([{ aperture_m: 0.012, feedback: true }]);
  });

  it("caps a rapid drag at 60 Hz with latest-wins", () => {
    const { commander, sent, advance } = harness();
    for (let i = 0; i < 500; i++) {
      commander.set(i * 0.0001);
      advance(1); // 500 updates over 500 ms
    }
    advance(20); // let the trailing timer flush
    expect(sent.length).toBeLessThanOrEqual(Math.ceil(520 / (1000 / 60)) + 1);
    expect(sent.length).toBeGreaterThanOrEqual(25);
    expect(sent[sent.length - 1].aperture_m).toBeCloseTo(0.0499, 10);
    for (let i = 1; i < sent.length; i++) {
      expect(sent[i].aperture_m).toBeGreaterThan(sent[i - 1].aperture_m);
    }
  });

  it("clamps to the configured range", () => {
    const { commander, sent, advance } = harness();
    commander.set(0.2);
    advance(100);
    commander.set(-0.5);
    advance(100);
    expect(sent.map((c) => c.aperture_m)).toEqual([0.05, 0]);
  });

  it("steps relative to the current value", () => {
    const { commander, advance, sent } = harness();
    commander.set(0.01);
    advance(100);
    commander.step(0.0005);
    advance(100);
    expect(sent[sent.length - 1].aperture_m).toBeCloseTo(0.0105, 10);
  });

  it("feedback toggle publishes through the same rate cap", () => {
    const { commander, sent, advance } = harness();
    commander.set(0.02);
    commander.setFeedback(false);
    advance(100);
    expect(sent[sent.length - 1]).toEqual({ aperture_m: 0.02, feedback: false });
    // two calls inside one 60 Hz window coalesce to at most two sends
    expect(sent.length).toBeLessThanOrEqual(2);
  });
});

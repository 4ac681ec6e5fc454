// Aperture command publisher with latest-wins coalescing.
//
// Slider drags and key repeats can fire far faster than the bus should see;
// commands are capped at `maxRateHz` (default 60) by sending immediately
// when the window allows and otherwise arming one trailing timer that sends
// whatever value is current when it fires.

export interface CommanderOptions {
  maxRateHz?: number;
  now?: () => number; // ms
  schedule?: (fn: () => void, ms: number) => unknown;
  cancel?: (handle: unknown) => void;
}

export interface OperatorCmd {
  aperture_m: number;
  feedback: boolean;
}

export class ApertureCommander {
  aperture: number;
  feedback = true;
  sent = 0; // published command count (tests assert the rate cap on this)

  private readonly minIntervalMs: number;
  private readonly now: () => number;
  private readonly schedule: (fn: () => void, ms: number) => unknown;
  private readonly cancel: (handle: unknown) => void;
  private lastSentAt = -Infinity;
  private pending: unknown = null;

  constructor(
    private readonly send: (cmd: OperatorCmd) => void,
    readonly min: number,
    readonly max: number,
    opts: CommanderOptions = {},
  ) {
    this.minIntervalMs = 1000 / (opts.maxRateHz ?? 60);
    this.now = opts.now ?? (() => performance.now());
    this.schedule = opts.schedule ?? ((fn, ms) => setTimeout(fn, ms));
    this.cancel = opts.cancel ?? ((h) => clearTimeout(h as any));
    this.aperture = max;
  }

  set(value: number): void {
    this.aperture = Math.min(Math.max(value, this.min), this.max);
    this.flush();
  }

  step(delta: number): void {
    this.set(this.aperture + delta);
  }

  setFeedback(flag: boolean): void {
    this.feedback = flag;
    this.flush();
  }

  /** Re-announce the current command (after a reconnect). */
  resend(): void {
    this.flush();
  }

  private flush(): void {
    const elapsed = this.now() - this.lastSentAt;
    if (elapsed >= this.minIntervalMs) {
      this.fire();
    } else if (this.pending === null) {
      this.pending = this.schedule(() => {
        this.pending = null;
        this.fire();
      }, this.minIntervalMs - elapsed);
    }
    // else: a timer is armed and will pick up the latest value — latest wins
  }

  private fire(): void {
    if (this.pending !== null) {
      this.cancel(this.pending);
      this.pending = null;
    }
    this.lastSentAt = this.now();
    this.sent++;
    this.send({ aperture_m: this.aperture, feedback: this.feedback });
  }
}

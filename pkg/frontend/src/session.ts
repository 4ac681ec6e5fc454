// UI session state: the latest message per topic plus rolling trace buffers.
// Pure data + reducers, no DOM, so the whole thing is unit-testable.

import {
  DecodedFrame,
  ForceRecord,
  FramePayload,
  StateRecord,
  TOPICS,
  decodeFramePayload,
} from "./protocol.js";
import { TraceRing } from "./ring.js";

const TRACE_WINDOW_S = 10;

export class SessionState {
  leader: StateRecord | null = null;
  follower: StateRecord | null = null;
  force: ForceRecord | null = null;
  frame: DecodedFrame | null = null;
  frameReceivedAt = 0; // ms clock, for the staleness indicator
  framesSeen = 0;

  readonly xh = new TraceRing(TRACE_WINDOW_S);
  readonly xf = new TraceRing(TRACE_WINDOW_S);
  readonly fs = new TraceRing(TRACE_WINDOW_S);

  constructor(private readonly now: () => number = () => performance.now()) {}

  /** Route one PUB payload into the latest-value slots and trace rings. */
  apply(topic: string, data: unknown): void {
    switch (topic) {
      case TOPICS.leader: {
        this.leader = data as StateRecord;
        this.xh.push(this.leader.t, this.leader.x_h);
        break;
      }
      case TOPICS.follower: {
        this.follower = data as StateRecord;
        this.xf.push(this.follower.t, this.follower.x_f);
        this.fs.push(this.follower.t, this.follower.f_s);
        break;
      }
      case TOPICS.force: {
        this.force = data as ForceRecord;
        break;
      }
      case TOPICS.frame: {
        this.frame = decodeFramePayload(data as FramePayload);
        this.frameReceivedAt = this.now();
        this.framesSeen++;
        break;
      }
    }
  }

  frameAgeMs(): number {
    return this.frame === null ? Infinity : this.now() - this.frameReceivedAt;
  }
}

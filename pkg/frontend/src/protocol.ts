// Wire types for the tactiforce telemetry bus, plus the TFR1 frame decoder.
// Everything here mirrors what the server sends; the console renders these
// numbers and computes nothing physical itself.

export interface Envelope {
  type: string; // PUB | ACK | NACK | CLOSE
  topic?: string;
  seq?: number;
  stamp?: number;
  data?: unknown;
  op?: string;
  reason?: string;
}

export interface StateRecord {
  t: number;
  x_h: number;
  x_l: number;
  x_fd: number;
  x_f: number;
  v_f: number;
  f_l: number;
  f_ld: number;
  f_s: number;
  feedback: boolean;
}

export interface ForceRecord {
  frame_id: number;
  stamp: number;
  force_n: number;
  depth_mm: number;
  clamped: boolean;
}

export interface FramePayload {
  frame_id: number;
  stamp: number;
  width: number;
  height: number;
  encoding: string;
  data: string; // base64 TFR1 bytes
}

export interface DecodedFrame {
  width: number;
  height: number;
  channels: number;
  pixels: Float32Array; // row-major, HWC, float32 in [0, 1]
  stamp: number;
  frameId: number;
}

export const TOPICS = {
  leader: "/leader/state",
  follower: "/follower/state",
  frame: "/digit/frame",
  force: "/digit/force",
  cmd: "/operator/cmd",
} as const;

const TFR1_MAGIC = 0x31524654; // "TFR1" little-endian

export function base64ToBytes(b64: string): Uint8Array {
  if (typeof atob === "function") {
    const bin = atob(b64);
    const out = new Uint8Array(bin.length);
    for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
    return out;
  }
  // node (tests)
  return new Uint8Array(Buffer.from(b64, "base64"));
}

export function decodeTfr(bytes: Uint8Array): {
  width: number;
  height: number;
  channels: number;
  pixels: Float32Array;
} {
  if (bytes.length < 16) throw new Error("truncated TFR1 header");
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  if (view.getUint32(0, true) !== TFR1_MAGIC) throw new Error("bad TFR1 magic");
  const width = view.getUint32(4, true);
  const height = view.getUint32(8, true);
  const channels = view.getUint32(12, true);
  const n = width * height * channels;
  if (bytes.length !== 16 + n * 4) {
    throw new Error(`TFR1 size mismatch: ${bytes.length} bytes for ${n} floats`);
  }
  // copy so the Float32Array is 4-byte aligned regardless of the source offset
  const body = bytes.slice(16);
  const pixels = new Float32Array(body.buffer, 0, n);
  return { width, height, channels, pixels };
}

export function decodeFramePayload(payload: FramePayload): DecodedFrame {
  if (payload.encoding !== "tfr1+base64") {
    throw new Error(`unsupported frame encoding ${payload.encoding}`);
  }
  const { width, height, channels, pixels } = decodeTfr(base64ToBytes(payload.data));
  return {
    width,
    height,
    channels,
    pixels,
    stamp: payload.stamp ?? 0,
    frameId: payload.frame_id ?? 0,
  };
}

// Canvas rendering for the dashboard panes, plus the pure pixel helpers
// (exported separately so they can be unit-tested without a DOM).

import type { DecodedFrame } from "./protocol.js";
import type { SessionState } from "./session.js";

// -- pure helpers -------------------------------------------------------------

/** 0..1 -> heat ramp (dark blue -> cyan -> yellow -> red), 0..255 channels. */
export function heatColor(x: number): [number, number, number] {
  const stops: [number, number, number][] = [
    [12, 24, 48],
    [0, 170, 200],
    [240, 220, 60],
    [230, 40, 30],
  ];
  const c = Math.min(Math.max(x, 0), 1) * (stops.length - 1);
  const i = Math.min(Math.floor(c), stops.length - 2);
  const f = c - i;
  const a = stops[i];
  const b = stops[i + 1];
  return [
    Math.round(a[0] + (b[0] - a[0]) * f),
    Math.round(a[1] + (b[1] - a[1]) * f),
    Math.round(a[2] + (b[2] - a[2]) * f),
  ];
}

/**
 * Per-pixel shading deviation from the background, for the contact heatmap.
 *
 * The background level of each channel is estimated as a strided median
 * (the flat gel dominates the image), and the deviation is the mean
 * |pixel - background| across channels. This is a *visualization* of where
 * the image changed — the physical depth number shown next to it comes from
 * the bus, not from this.
 */
export function deviationField(frame: DecodedFrame): Float32Array {
  const { width, height, channels, pixels } = frame;
  const n = width * height;
  const background = new Float32Array(channels);
  const stride = Math.max(1, Math.floor(n / 2048));
  for (let c = 0; c < channels; c++) {
    const sample: number[] = [];
    for (let p = 0; p < n; p += stride) sample.push(pixels[p * channels + c]);
    sample.sort((x, y) => x - y);
    background[c] = sample[Math.floor(sample.length / 2)];
  }
  const out = new Float32Array(n);
  for (let p = 0; p < n; p++) {
    let acc = 0;
    for (let c = 0; c < channels; c++) {
      acc += Math.abs(pixels[p * channels + c] - background[c]);
    }
    out[p] = acc / channels;
  }
  return out;
}

// -- canvas panes ---------------------------------------------------------------

const scratch = { canvas: null as HTMLCanvasElement | null, w: 0, h: 0 };

function scratchCanvas(w: number, h: number): HTMLCanvasElement {
  if (scratch.canvas === null) scratch.canvas = document.createElement("canvas");
  if (scratch.w !== w || scratch.h !== h) {
    scratch.canvas.width = w;
    scratch.canvas.height = h;
    scratch.w = w;
    scratch.h = h;
  }
  return scratch.canvas;
}

function blitPixels(canvas: HTMLCanvasElement, rgba: ImageData): void {
  const off = scratchCanvas(rgba.width, rgba.height);
  off.getContext("2d")!.putImageData(rgba, 0, 0);
  const ctx = canvas.getContext("2d")!;
  ctx.imageSmoothingEnabled = false;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.drawImage(off, 0, 0, canvas.width, canvas.height);
}

function overlayText(canvas: HTMLCanvasElement, text: string, color = "#e8e8e8"): void {
  const ctx = canvas.getContext("2d")!;
  ctx.font = "13px monospace";
  ctx.fillStyle = "rgba(0,0,0,0.55)";
  const w = ctx.measureText(text).width;
  ctx.fillRect(6, canvas.height - 24, w + 10, 19);
  ctx.fillStyle = color;
  ctx.fillText(text, 11, canvas.height - 10);
}

const STALE_AFTER_MS = 500;

export function drawFrame(canvas: HTMLCanvasElement, frame: DecodedFrame | null, ageMs: number): void {
  if (frame === null) {
    const ctx = canvas.getContext("2d")!;
    ctx.fillStyle = "#10141a";
    ctx.fillRect(0, 0, canvas.width, canvas.height);
    overlayText(canvas, "waiting for frames…", "#8a93a0");
    return;
  }
  const img = new ImageData(frame.width, frame.height);
  const { pixels, channels } = frame;
  for (let p = 0; p < frame.width * frame.height; p++) {
    for (let k = 0; k < 3; k++) {
      const v = pixels[p * channels + Math.min(k, channels - 1)];
      img.data[p * 4 + k] = Math.min(Math.max(v, 0), 1) * 255;
    }
    img.data[p * 4 + 3] = 255;
  }
  blitPixels(canvas, img);
  if (ageMs > STALE_AFTER_MS) {
    const ctx = canvas.getContext("2d")!;
    ctx.fillStyle = "rgba(16,20,26,0.45)";
    ctx.fillRect(0, 0, canvas.width, canvas.height);
    overlayText(canvas, `STALE ${(ageMs / 1000).toFixed(1)} s (frame #${frame.frameId})`, "#ffb74d");
  } else {
    overlayText(canvas, `frame #${frame.frameId}  t=${frame.stamp.toFixed(2)} s`);
  }
}

const HEAT_FULL_SCALE = 0.3; // shading deviation mapped to the top of the ramp

export function drawHeatmap(
  canvas: HTMLCanvasElement,
  frame: DecodedFrame | null,
  depthMm: number | null,
): void {
  if (frame === null) {
    const ctx = canvas.getContext("2d")!;
    ctx.fillStyle = "#10141a";
    ctx.fillRect(0, 0, canvas.width, canvas.height);
    return;
  }
  const dev = deviationField(frame);
  const img = new ImageData(frame.width, frame.height);
  for (let p = 0; p < dev.length; p++) {
    const [r, g, b] = heatColor(dev[p] / HEAT_FULL_SCALE);
    img.data[p * 4] = r;
    img.data[p * 4 + 1] = g;
    img.data[p * 4 + 2] = b;
    img.data[p * 4 + 3] = 255;
  }
  blitPixels(canvas, img);
  overlayText(
    canvas,
    depthMm === null ? "depth: –" : `measured depth ${depthMm.toFixed(3)} mm`,
  );
}

export function drawGauge(canvas: HTMLCanvasElement, session: SessionState, fullScaleN = 10): void {
  const ctx = canvas.getContext("2d")!;
  const { width: W, height: H } = canvas;
  ctx.fillStyle = "#10141a";
  ctx.fillRect(0, 0, W, H);

  const forceN = session.force?.force_n ?? 0;
  const frac = Math.min(Math.max(forceN / fullScaleN, 0), 1);
  const barY = 34;
  const barH = 26;
  ctx.fillStyle = "#1d242e";
  ctx.fillRect(12, barY, W - 24, barH);
  const [r, g, b] = heatColor(frac);
  ctx.fillStyle = `rgb(${r},${g},${b})`;
  ctx.fillRect(12, barY, (W - 24) * frac, barH);
  ctx.strokeStyle = "#3a4350";
  ctx.strokeRect(12, barY, W - 24, barH);
  for (let n = 0; n <= fullScaleN; n += 2) {
    const x = 12 + ((W - 24) * n) / fullScaleN;
    ctx.strokeStyle = "#3a4350";
    ctx.beginPath();
    ctx.moveTo(x, barY + barH);
    ctx.lineTo(x, barY + barH + 5);
    ctx.stroke();
  }
  ctx.font = "bold 20px monospace";
  ctx.fillStyle = "#e8e8e8";
  ctx.fillText(`${forceN.toFixed(2)} N`, 12, 24);
  if (session.force?.clamped) {
    ctx.fillStyle = "#ffb74d";
    ctx.font = "12px monospace";
    ctx.fillText("curve range clamped", W - 160, 24);
  }

  // 10 s force sparkline under the bar
  const points = session.fs.points();
  if (points.length > 1) {
    const top = barY + barH + 14;
    const h = H - top - 8;
    const tEnd = points[points.length - 1].t;
    const t0 = tEnd - session.fs.windowS;
    let vMax = fullScaleN / 2;
    for (const pt of points) vMax = Math.max(vMax, pt.v);
    ctx.strokeStyle = "#62d0ff";
    ctx.beginPath();
    for (let i = 0; i < points.length; i++) {
      const x = 12 + ((points[i].t - t0) / session.fs.windowS) * (W - 24);
      const y = top + h - (Math.max(points[i].v, 0) / vMax) * h;
      if (i === 0) ctx.moveTo(x, y);
      else ctx.lineTo(x, y);
    }
    ctx.stroke();
    ctx.fillStyle = "#8a93a0";
    ctx.font = "11px monospace";
    ctx.fillText(`f_s, last ${session.fs.windowS} s`, 12, top + h + 2);
  }
}

export function drawTraces(canvas: HTMLCanvasElement, session: SessionState): void {
  const ctx = canvas.getContext("2d")!;
  const { width: W, height: H } = canvas;
  ctx.fillStyle = "#10141a";
  ctx.fillRect(0, 0, W, H);

  const xh = session.xh.points();
  const xf = session.xf.points();
  if (xh.length < 2) {
    overlayText(canvas, "waiting for state…", "#8a93a0");
    return;
  }
  const tEnd = xh[xh.length - 1].t;
  const t0 = tEnd - session.xh.windowS;
  let vMin = Infinity;
  let vMax = -Infinity;
  for (const pt of xh) {
    vMin = Math.min(vMin, pt.v);
    vMax = Math.max(vMax, pt.v);
  }
  for (const pt of xf) {
    vMin = Math.min(vMin, pt.v);
    vMax = Math.max(vMax, pt.v);
  }
  const pad = Math.max((vMax - vMin) * 0.15, 0.002);
  vMin -= pad;
  vMax += pad;

  const px = (t: number) => ((t - t0) / session.xh.windowS) * W;
  const py = (v: number) => H - ((v - vMin) / (vMax - vMin)) * H;

  // horizontal grid every 10 mm
  ctx.strokeStyle = "#1d242e";
  ctx.fillStyle = "#5a6370";
  ctx.font = "11px monospace";
  const stepM = 0.01;
  for (let v = Math.ceil(vMin / stepM) * stepM; v <= vMax; v += stepM) {
    ctx.beginPath();
    ctx.moveTo(0, py(v));
    ctx.lineTo(W, py(v));
    ctx.stroke();
    ctx.fillText(`${(v * 1000).toFixed(0)} mm`, 4, py(v) - 3);
  }

  // error band between commanded and actual follower position
  if (xf.length > 1) {
    ctx.fillStyle = "rgba(230, 90, 60, 0.18)";
    ctx.beginPath();
    ctx.moveTo(px(xh[0].t), py(xh[0].v));
    for (const pt of xh) ctx.lineTo(px(pt.t), py(pt.v));
    for (let i = xf.length - 1; i >= 0; i--) ctx.lineTo(px(xf[i].t), py(xf[i].v));
    ctx.closePath();
    ctx.fill();
  }

  const line = (pts: readonly { t: number; v: number }[], color: string) => {
    ctx.strokeStyle = color;
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    pts.forEach((pt, i) => {
      if (i === 0) ctx.moveTo(px(pt.t), py(pt.v));
      else ctx.lineTo(px(pt.t), py(pt.v));
    });
    ctx.stroke();
  };
  line(xh, "#62d0ff");
  line(xf, "#ffd35c");

  ctx.font = "12px monospace";
  ctx.fillStyle = "#62d0ff";
  ctx.fillText("x_h commanded", W - 130, 16);
  ctx.fillStyle = "#ffd35c";
  ctx.fillText("x_f follower", W - 130, 32);
  if (session.leader !== null && session.follower !== null) {
    const err = Math.abs(session.leader.x_h - session.follower.x_f) * 1000;
    ctx.fillStyle = "#e8e8e8";
    ctx.fillText(`|x_h − x_f| = ${err.toFixed(2)} mm`, W - 200, H - 8);
  }
}

/** Screen-edge glow proportional to the sensed force (visual force feedback). */
export function edgeGlowCss(forceN: number, fullScaleN = 10): string {
  const frac = Math.min(Math.max(forceN / fullScaleN, 0), 1);
  if (frac <= 0.01) return "none";
  const spread = Math.round(10 + 70 * frac);
  return `inset 0 0 ${spread}px ${Math.round(spread / 3)}px rgba(230, 60, 40, ${(0.15 + 0.55 * frac).toFixed(2)})`;
}

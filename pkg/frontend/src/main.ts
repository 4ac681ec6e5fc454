// Browser entry point: wires the bus client, session state, controls, and
// the render loop together. Pass ?bus=ws://host:port to point the console
// at a non-default server.

import { ConsoleBus } from "./bus.js";
import { ApertureCommander } from "./commander.js";
import { TOPICS } from "./protocol.js";
import {
  drawFrame,
  drawGauge,
  drawHeatmap,
  drawTraces,
  edgeGlowCss,
} from "./render.js";
import { SessionState } from "./session.js";

const APERTURE_MIN = 0.0;
const APERTURE_MAX = 0.05;
const KEY_STEP = 0.0005; // m per arrow press (0.1 mm with shift)

const params = new URLSearchParams(location.search);
const busUrl = params.get("bus") ?? `ws://${location.hostname || "127.0.0.1"}:8765`;

const $ = (id: string) => document.getElementById(id)!;
const banner = $("banner");
const frameCanvas = $("frame") as HTMLCanvasElement;
const heatCanvas = $("heatmap") as HTMLCanvasElement;
const gaugeCanvas = $("gauge") as HTMLCanvasElement;
const tracesCanvas = $("traces") as HTMLCanvasElement;
const slider = $("aperture") as HTMLInputElement;
const apertureReadout = $("aperture-readout");
const feedbackBox = $("feedback") as HTMLInputElement;
const dragStrip = $("dragstrip");

const session = new SessionState();
const bus = new ConsoleBus(busUrl);
const commander = new ApertureCommander(
  (cmd) => bus.publish(TOPICS.cmd, cmd),
  APERTURE_MIN,
  APERTURE_MAX,
);

for (const topic of [TOPICS.leader, TOPICS.follower, TOPICS.force, TOPICS.frame]) {
  bus.subscribe(topic, (data) => session.apply(topic, data));
}

bus.onStatus((status) => {
  banner.textContent =
    status === "connected"
      ? `connected — ${busUrl}`
      : status === "server-closed"
        ? `server closed the session — retrying ${busUrl}`
        : `${status} — ${busUrl}`;
  banner.className = status;
  if (status === "connected") commander.resend(); // server state matches the UI again
});

// -- controls -----------------------------------------------------------------

function showAperture(): void {
  slider.value = String(commander.aperture);
  apertureReadout.textContent = `${(commander.aperture * 1000).toFixed(2)} mm`;
}

slider.min = String(APERTURE_MIN);
slider.max = String(APERTURE_MAX);
slider.step = "0.0001";
slider.addEventListener("input", () => {
  commander.set(Number(slider.value));
  showAperture();
});

feedbackBox.addEventListener("change", () => {
  commander.setFeedback(feedbackBox.checked);
});

window.addEventListener("keydown", (ev) => {
  if (ev.target instanceof HTMLInputElement && ev.target.type !== "range") return;
  const step = ev.shiftKey ? KEY_STEP / 5 : KEY_STEP;
  if (ev.key === "ArrowUp" || ev.key === "ArrowRight") commander.step(step);
  else if (ev.key === "ArrowDown" || ev.key === "ArrowLeft") commander.step(-step);
  else return;
  ev.preventDefault();
  showAperture();
});

// vertical drag on the strip: full strip height sweeps the full range
let dragFrom: { y: number; aperture: number } | null = null;
dragStrip.addEventListener("pointerdown", (ev) => {
  dragFrom = { y: ev.clientY, aperture: commander.aperture };
  dragStrip.setPointerCapture(ev.pointerId);
});
dragStrip.addEventListener("pointermove", (ev) => {
  if (dragFrom === null) return;
  const span = dragStrip.clientHeight || 200;
  const delta = ((dragFrom.y - ev.clientY) / span) * (APERTURE_MAX - APERTURE_MIN);
  commander.set(dragFrom.aperture + delta);
  showAperture();
});
dragStrip.addEventListener("pointerup", () => (dragFrom = null));
dragStrip.addEventListener("pointercancel", () => (dragFrom = null));

showAperture();

// -- optional gamepad rumble proportional to the sensed force ----------------

let lastRumble = 0;
function rumble(forceN: number): void {
  const now = performance.now();
  if (now - lastRumble < 100) return;
  lastRumble = now;
  const pads = navigator.getGamepads ? navigator.getGamepads() : [];
  for (const pad of pads) {
    const actuator = (pad as any)?.vibrationActuator;
    if (!actuator?.playEffect) continue;
    const magnitude = Math.min(forceN / 10, 1);
    if (magnitude < 0.02) continue;
    actuator
      .playEffect("dual-rumble", {
        duration: 100,
        strongMagnitude: magnitude,
        weakMagnitude: magnitude / 2,
      })
      .catch(() => {});
  }
}

// -- render loop ---------------------------------------------------------------

function frameLoop(): void {
  drawFrame(frameCanvas, session.frame, session.frameAgeMs());
  drawHeatmap(heatCanvas, session.frame, session.force?.depth_mm ?? null);
  drawGauge(gaugeCanvas, session);
  drawTraces(tracesCanvas, session);
  const force = session.force?.force_n ?? 0;
  document.body.style.boxShadow = edgeGlowCss(force);
  rumble(force);
  requestAnimationFrame(frameLoop);
}
requestAnimationFrame(frameLoop);

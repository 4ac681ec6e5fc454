"""Live teleoperation service: control loop + telemetry bus in one process.

``tactiforce serve`` starts the WebSocket bus and a real-time-paced teleop
loop.  Operator consoles publish ``OperatorCmd`` messages on
``/operator/cmd``; the loop tracks the latest command, steps the follower at
the control rate, and publishes:

* ``/leader/state`` and ``/follower/state`` (StateRecord, decimated to the
  configured state rate);
* ``/digit/force`` (ForceRecord) at the sensor rate;
* ``/digit/frame`` (FrameRef with base64 TFR1 pixels) at the frame rate.

Sensing is either ``oracle`` (ground-truth Hertz force; frames are still
rendered for display) or ``full`` (frames go through the trained MLP +
Poisson + curve pipeline).  With full sensing on a slow machine the loop
degrades to slower-than-real-time rather than skipping physics ticks.
"""

from __future__ import annotations

import asyncio
import logging
import math
import time

from .bus import BusServer, frame_payload
from .config import Config
from .errors import ConfigError
from .gel import CylinderCurved, Indenter, indent_depth, normals_from_depth, render
from .pipeline import ForcePipeline
from .teleop import TeleopModels, initial_state, step

log = logging.getLogger(__name__)

#: Wake period of the loop task; physics ticks are batched inside it.
_BATCH_S = 0.01


class LiveLoop:
    """Wall-clock-paced teleop loop publishing on a bus server."""

    def __init__(
        self,
        config: Config,
        server: BusServer,
        pipeline: ForcePipeline | None = None,
        initial_aperture: float | None = None,
    ):
        self._config = config
        self._server = server
        self._models: TeleopModels = config.teleop_models()
        self._gel = config.gel()
        self._lighting = config.lighting()
        self._pipeline = pipeline
        self._probe = CylinderCurved(
            radius=float(config["calibration"]["probe_radius_mm"]),
            cap_radius=float(config["calibration"]["probe_cap_radius_mm"]),
        )

        teleop_cfg = config["teleop"]
        self._control_rate = float(teleop_cfg["control_rate_hz"])
        self._sensor_rate = float(teleop_cfg["sensor_rate_hz"])
        self._state_rate = float(config["bus"]["state_rate_hz"])
        self._frame_rate = float(config["bus"]["frame_rate_hz"])
        if self._sensor_rate > self._control_rate:
            raise ConfigError("sensor rate cannot exceed control rate")

        start = (
            initial_aperture
            if initial_aperture is not None
            else self._models.follower.aperture_max * 0.6
        )
        self._command = start
        self._feedback = True
        self._state = initial_state(start)
        self._tick = 0
        self._frame_id = 0
        self._stop = asyncio.Event()
        self._task: asyncio.Task | None = None

        server.on_message("/operator/cmd", self._on_cmd)

    # -- operator input ------------------------------------------------------

    def _on_cmd(self, envelope: dict) -> None:
        data = envelope.get("data", {})
        try:
            aperture = float(data["aperture_m"])
        except (KeyError, TypeError, ValueError):
            log.warning("ignoring malformed operator command: %r", data)
            return
        fol = self._models.follower
        self._command = min(max(aperture, fol.aperture_min), fol.aperture_max)
        if "feedback" in data:
            self._feedback = bool(data["feedback"])

    # -- lifecycle -----------------------------------------------------------

    def start(self) -> None:
        self._task = asyncio.create_task(self._run())

    async def stop(self) -> None:
        self._stop.set()
        if self._task is not None:
            await self._task

    async def _run(self) -> None:
        loop = asyncio.get_running_loop()
        dt = 1.0 / self._control_rate
        ticks_per_batch = max(1, round(_BATCH_S * self._control_rate))
        next_wake = loop.time()
        while not self._stop.is_set():
            for _ in range(ticks_per_batch):
                self._advance_one(dt)
            next_wake += ticks_per_batch * dt
            delay = next_wake - loop.time()
            if delay > 0:
                try:
                    await asyncio.wait_for(self._stop.wait(), timeout=delay)
                except asyncio.TimeoutError:
                    pass
            else:
                # Fell behind (e.g. vision sensing on a slow core): keep sim
                # time continuous instead of bursting to catch up.
                next_wake = loop.time()
                await asyncio.sleep(0)

    # -- one control tick ------------------------------------------------------

    def _rate_edge(self, rate: float) -> bool:
        k = self._tick
        return math.floor(k * rate / self._control_rate) > math.floor(
            (k - 1) * rate / self._control_rate
        )

    def _advance_one(self, dt: float) -> None:
        self._tick += 1
        f_sensor = None
        if self._rate_edge(self._sensor_rate):
            f_sensor = self._measure()
        self._state = step(
            self._state, self._models, dt, self._command, self._feedback, f_sensor
        )
        if self._rate_edge(self._state_rate):
            payload = {
                "t": self._state.t,
                "x_h": self._state.x_h,
                "x_l": self._state.x_l,
                "x_fd": self._state.x_fd,
                "x_f": self._state.x_f,
                "v_f": self._state.v_f,
                "f_l": self._state.f_l,
                "f_ld": self._state.f_ld,
                "f_s": self._state.f_s,
                "feedback": self._feedback,
            }
            self._server.publish("/leader/state", payload)
            self._server.publish("/follower/state", payload)

    def _measure(self) -> float:
        press = self._models.contact.press_depth_mm(self._state.x_f)
        want_frame = self._rate_edge(self._frame_rate)
        frame = None
        if self._pipeline is not None or want_frame:
            dm = indent_depth(
                self._gel, Indenter(self._probe, self._gel.center, press)
            )
            frame = render(
                normals_from_depth(dm),
                self._lighting,
                stamp=self._state.t,
                frame_id=self._frame_id,
            )
            self._frame_id += 1
        if self._pipeline is not None and frame is not None:
            record = self._pipeline.process(frame)
            force = record.force_n
            depth_mm = record.depth_mm
            clamped = record.clamped
        else:
            force = self._models.contact.material.force(press)
            depth_mm = press
            clamped = False
        self._server.publish(
            "/digit/force",
            {
                "frame_id": self._frame_id - 1 if frame is not None else -1,
                "stamp": self._state.t,
                "force_n": force,
                "depth_mm": depth_mm,
                "clamped": clamped,
            },
        )
        if frame is not None and want_frame:
            self._server.publish("/digit/frame", frame_payload(frame))
        return force


async def serve_forever(
    config: Config,
    host: str,
    port: int,
    pipeline: ForcePipeline | None = None,
    ready_callback=None,
    stop_event: asyncio.Event | None = None,
) -> None:
    """Run bus + live loop until SIGINT/SIGTERM (or ``stop_event``)."""
    import signal

    server = BusServer(host=host, port=port)
    await server.start()
    loop_task = LiveLoop(config, server, pipeline=pipeline)
    loop_task.start()

    stop = stop_event if stop_event is not None else asyncio.Event()
    running_loop = asyncio.get_running_loop()
    for sig in (signal.SIGINT, signal.SIGTERM):
        try:
            running_loop.add_signal_handler(sig, stop.set)
        except NotImplementedError:
            pass

    print(f"tactiforce bus on {server.url} (ctrl-c to stop)", flush=True)
    if ready_callback is not None:
        ready_callback(server)
    try:
        await stop.wait()
    finally:
        await loop_task.stop()
        await server.stop()
        log.info("bus stats at shutdown: %s", server.stats())

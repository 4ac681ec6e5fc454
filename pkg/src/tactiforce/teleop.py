"""Bilateral position-force teleoperation loop (1-D gripper aperture).

Architecture (one control tick, default 1 kHz):

* The *operator* scripts an intended aperture trajectory ``command(t)``
  (half-width of the gripper opening, metres).  The measured hand position
  ``x_h`` is the command plus the yield of the operator's hand under the
  rendered force: ``x_h = command + f_l / k_h`` when force feedback is
  enabled, ``x_h = command`` otherwise.  Rendered force pushes the hand
  *open*, away from contact -- this is what lets the operator stop at an
  object boundary they cannot see.
* The *leader* device tracks the hand ideally: ``x_l = x_h``; the desired
  follower position is the leader position: ``x_fd = x_l``; and the desired
  leader force is the sensed force: ``f_ld = f_s`` (position-force
  architecture).  ``f_s`` is the tactile force estimate, updated at the
  sensor rate (default 30 Hz) and held between samples.
* The *follower* is a PD-servoed mass with aperture limits, integrated
  semi-implicitly (damping handled implicitly for stability).  Contact with
  a rigid object of half-width ``w`` produces a penetration
  ``max(0, w - x_f)`` which maps onto a gel press depth (clipped to the
  gel's indentation budget); the ground-truth Hertzian reaction acts on the
  follower at the control rate, while the *sensed* force may come from the
  full vision pipeline at the sensor rate.

Everything is deterministic: same scenario, same models, same log, byte for
byte.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, GeometryError
from .gel import (
    CylinderCurved,
    GelConfig,
    HertzParams,
    Indenter,
    IndenterShape,
    LightingModel,
    default_lighting,
    indent_depth,
    normals_from_depth,
    render,
)

# ---------------------------------------------------------------------------
# Models


@dataclass(frozen=True)
class FollowerModel:
    """PD-servoed follower gripper: one translational degree of freedom."""

    mass: float = 0.1  # kg
    kp: float = 2000.0  # N/m
    kd: float = 20.0  # N s/m
    aperture_min: float = 0.0  # m
    aperture_max: float = 0.05  # m

    def __post_init__(self) -> None:
        if self.mass <= 0 or self.kp <= 0 or self.kd < 0:
            raise ConfigError("follower mass/kp must be positive, kd non-negative")
        if self.aperture_min >= self.aperture_max:
            raise ConfigError("aperture_min must be < aperture_max")


@dataclass(frozen=True)
class OperatorModel:
    """The operator's hand between intent and measured position.

    The rendered force deflects the hand like a spring, but the deflection
    relaxes toward its spring value ``f_l / hand_stiffness`` with a
    first-order time constant ``hand_relax_time`` (arm viscosity).  The
    relaxation is what keeps the closed loop stable: an instantaneous
    spring would reflect newton-scale forces as centimetre-scale hand jumps
    within one 30 Hz sensor hold and limit-cycle against the contact.
    Statics are unchanged — at equilibrium the deflection equals
    ``f_l / hand_stiffness`` exactly.
    """

    hand_stiffness: float = 250.0  # N/m
    hand_relax_time: float = 0.25  # s

    def __post_init__(self) -> None:
        if self.hand_stiffness <= 0:
            raise ConfigError("hand_stiffness must be positive")
        if self.hand_relax_time <= 0:
            raise ConfigError("hand_relax_time must be positive")


@dataclass(frozen=True)
class ContactModel:
    """Rigid grasped object + gel contact law.

    ``object_halfwidth`` is the aperture at first gel contact (m); closing
    beyond it presses the gel.  Penetration maps to a press depth in mm,
    clipped to the gel budget, and the ground-truth reaction follows the
    Hertz law.  ``object_halfwidth=None`` models empty air.
    """

    object_halfwidth: float | None = 0.010  # m
    material: HertzParams = HertzParams()
    max_indent: float = 1.25  # mm

    def press_depth_mm(self, x_f: float) -> float:
        if self.object_halfwidth is None:
            return 0.0
        pen_mm = max(0.0, self.object_halfwidth - x_f) * 1e3
        return min(pen_mm, self.max_indent)

    def reaction_force(self, x_f: float) -> float:
        """Ground-truth contact force (N, >= 0, pushes the aperture open)."""
        return self.material.force(self.press_depth_mm(x_f))


@dataclass(frozen=True)
class TeleopModels:
    follower: FollowerModel = FollowerModel()
    operator: OperatorModel = OperatorModel()
    contact: ContactModel = ContactModel()


@dataclass(frozen=True)
class TeleopState:
    """Full loop state after one control tick."""

    t: float
    x_h: float  # measured hand position (m)
    x_l: float  # leader position (m)
    x_fd: float  # desired follower position (m)
    x_f: float  # follower position (m)
    v_f: float  # follower velocity (m/s)
    f_l: float  # force rendered at the leader (N)
    f_ld: float  # desired leader force (N)
    f_s: float  # latest tactile force estimate (N)
    d_h: float = 0.0  # hand deflection under rendered force (m)


def initial_state(command: float) -> TeleopState:
    return TeleopState(
        t=0.0, x_h=command, x_l=command, x_fd=command, x_f=command,
        v_f=0.0, f_l=0.0, f_ld=0.0, f_s=0.0, d_h=0.0,
    )


def step(
    state: TeleopState,
    models: TeleopModels,
    dt: float,
    command: float,
    feedback: bool,
    f_sensor: float | None = None,
) -> TeleopState:
    """Advance the loop one control tick.

    ``f_sensor`` carries a fresh tactile estimate on sensor ticks and is
    None in between (zero-order hold).  The returned state is at
    ``state.t + dt``.
    """
    fol, op, contact = models.follower, models.operator, models.contact

    f_s = state.f_s if f_sensor is None else f_sensor
    f_ld = f_s
    f_l = f_ld  # ideal haptic rendering
    if feedback:
        # Backward-Euler relaxation toward the spring deflection f_l / k_h.
        a = dt / op.hand_relax_time
        d_h = (state.d_h + a * f_l / op.hand_stiffness) / (1.0 + a)
    else:
        d_h = 0.0  # hand held rigidly at the commanded pose
    x_h = command + d_h
    x_l = x_h
    x_fd = x_l

    f_c = contact.reaction_force(state.x_f)
    # Semi-implicit Euler with implicit viscous damping:
    #   v' = (v + dt (kp e + f_c) / m) / (1 + dt kd / m)
    drive = fol.kp * (x_fd - state.x_f) + f_c
    v = (state.v_f + dt * drive / fol.mass) / (1.0 + dt * fol.kd / fol.mass)
    x = state.x_f + dt * v
    if x < fol.aperture_min:
        x, v = fol.aperture_min, 0.0
    elif x > fol.aperture_max:
        x, v = fol.aperture_max, 0.0

    return TeleopState(
        t=state.t + dt, x_h=x_h, x_l=x_l, x_fd=x_fd,
        x_f=x, v_f=v, f_l=f_l, f_ld=f_ld, f_s=f_s, d_h=d_h,
    )


# ---------------------------------------------------------------------------
# Tactile sensors for the loop


class OracleSensor:
    """Sensor that reports the ground-truth Hertz force (no vision)."""

    def __init__(self, contact: ContactModel):
        self._contact = contact

    def measure(self, press_depth_mm: float, stamp: float, frame_id: int):
        force = self._contact.material.force(min(press_depth_mm, self._contact.max_indent))
        return force, None


class VisionSensor:
    """Sensor that runs the full render -> MLP -> Poisson -> curve pipeline.

    The scalar gel press (from follower penetration) is realised as a
    centred probe press on the simulated gel; the rendered frame is pushed
    through the given :class:`~tactiforce.pipeline.ForcePipeline`.
    """

    def __init__(
        self,
        gel: GelConfig,
        lighting: LightingModel | None,
        pipeline,
        probe: IndenterShape | None = None,
        center: tuple[float, float] | None = None,
    ):
        self._gel = gel
        self._lighting = lighting if lighting is not None else default_lighting()
        self._pipeline = pipeline
        self._probe = probe if probe is not None else CylinderCurved(radius=5.0, cap_radius=9.0)
        self._center = center if center is not None else gel.center

    def measure(self, press_depth_mm: float, stamp: float, frame_id: int):
        press = min(press_depth_mm, self._gel.max_indent)
        dm = indent_depth(self._gel, Indenter(self._probe, self._center, press))
        frame = render(normals_from_depth(dm), self._lighting, stamp=stamp, frame_id=frame_id)
        record = self._pipeline.process(frame)
        return record.force_n, frame


# ---------------------------------------------------------------------------
# Scenario description


@dataclass(frozen=True)
class Region:
    """A named time window with its own force-feedback switch."""

    name: str
    start: float
    end: float
    feedback: bool


@dataclass(frozen=True)
class Scenario:
    """A scripted teleoperation run."""

    name: str
    duration: float  # s
    control_rate: float = 1000.0  # Hz
    sensor_rate: float = 30.0  # Hz
    seed: int = 0
    sensing: str = "oracle"  # "oracle" | "full"
    feedback_default: bool = False
    object_halfwidth: float | None = 0.010  # m
    command: tuple[tuple[float, float], ...] = ((0.0, 0.03),)
    regions: tuple[Region, ...] = ()

    def __post_init__(self) -> None:
        if self.duration < 0:
            raise ConfigError("scenario: duration must be >= 0")
        if self.control_rate <= 0 or self.sensor_rate <= 0:
            raise ConfigError("scenario: rates must be positive")
        if self.sensor_rate > self.control_rate:
            raise ConfigError("scenario: sensor_rate cannot exceed control_rate")
        if self.sensing not in ("oracle", "full"):
            raise ConfigError(f"scenario: unknown sensing mode {self.sensing!r}")
        if not self.command:
            raise ConfigError("scenario: command table is empty")
        times = [t for t, _ in self.command]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigError("scenario: command times must be strictly increasing")
        if not all(np.isfinite(t) and np.isfinite(x) for t, x in self.command):
            raise ConfigError("scenario: command table has non-finite entries")
        names = [r.name for r in self.regions]
        if len(set(names)) != len(names):
            raise ConfigError("scenario: region names must be unique")
        for r in self.regions:
            if r.start >= r.end:
                raise ConfigError(f"scenario: region {r.name!r} has start >= end")

    def command_at(self, t: float) -> float:
        times = [p[0] for p in self.command]
        values = [p[1] for p in self.command]
        return float(np.interp(t, times, values))

    def region_at(self, t: float) -> Region | None:
        for r in self.regions:
            if r.start <= t <= r.end:
                return r
        return None

    def feedback_at(self, t: float) -> bool:
        r = self.region_at(t)
        return r.feedback if r is not None else self.feedback_default

    # -- JSON --------------------------------------------------------------

    @classmethod
    def from_json(cls, path: str | Path) -> "Scenario":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(
                f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
            ) from exc
        return cls.from_dict(data, source=str(path))

    @classmethod
    def from_dict(cls, data: dict, source: str = "<scenario>") -> "Scenario":
        known = {
            "name", "duration_s", "control_rate_hz", "sensor_rate_hz", "seed",
            "sensing", "feedback_default", "object", "command_m", "regions",
        }
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"{source}: unknown scenario keys {sorted(unknown)}")
        try:
            obj = data.get("object", {})
            halfwidth = obj.get("halfwidth_m") if isinstance(obj, dict) else None
            regions = tuple(
                Region(
                    name=str(r["name"]),
                    start=float(r["start_s"]),
                    end=float(r["end_s"]),
                    feedback=bool(r["feedback"]),
                )
                for r in data.get("regions", [])
            )
            return cls(
                name=str(data.get("name", "unnamed")),
                duration=float(data["duration_s"]),
                control_rate=float(data.get("control_rate_hz", 1000.0)),
                sensor_rate=float(data.get("sensor_rate_hz", 30.0)),
                seed=int(data.get("seed", 0)),
                sensing=str(data.get("sensing", "oracle")),
                feedback_default=bool(data.get("feedback_default", False)),
                object_halfwidth=None if halfwidth is None else float(halfwidth),
                command=tuple((float(t), float(x)) for t, x in data["command_m"]),
                regions=regions,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{source}: bad scenario structure: {exc}") from exc

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "duration_s": self.duration,
            "control_rate_hz": self.control_rate,
            "sensor_rate_hz": self.sensor_rate,
            "seed": self.seed,
            "sensing": self.sensing,
            "feedback_default": self.feedback_default,
            "object": {"halfwidth_m": self.object_halfwidth},
            "command_m": [list(p) for p in self.command],
            "regions": [
                {"name": r.name, "start_s": r.start, "end_s": r.end, "feedback": r.feedback}
                for r in self.regions
            ],
        }


def bundled_scenario_path(name: str = "fig_contact_demo") -> Path:
    """Path of a scenario shipped with the package."""
    path = Path(__file__).parent / "data" / f"{name}.json"
    if not path.exists():
        raise ConfigError(f"no bundled scenario named {name!r}")
    return path


# ---------------------------------------------------------------------------
# Log and metrics


@dataclass(frozen=True)
class TelemetryRecord:
    t: float
    x_h: float
    x_l: float
    x_fd: float
    x_f: float
    f_l: float
    f_ld: float
    f_s: float
    region: str

    def to_json_line(self) -> str:
        return json.dumps(
            {
                "t": self.t, "x_h": self.x_h, "x_l": self.x_l, "x_fd": self.x_fd,
                "x_f": self.x_f, "f_l": self.f_l, "f_ld": self.f_ld, "f_s": self.f_s,
                "region": self.region,
            },
            sort_keys=True,
        )


@dataclass
class TelemetryLog:
    records: list[TelemetryRecord]

    def __len__(self) -> int:
        return len(self.records)

    def save_jsonl(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for rec in self.records:
                fh.write(rec.to_json_line())
                fh.write("\n")

    @classmethod
    def load_jsonl(cls, path: str | Path) -> "TelemetryLog":
        records = []
        try:
            fh = open(path)
        except OSError as exc:
            raise ConfigError(f"cannot read telemetry {path}: {exc}") from exc
        with fh:
            for i, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    d = json.loads(line)
                    records.append(
                        TelemetryRecord(
                            t=d["t"], x_h=d["x_h"], x_l=d["x_l"], x_fd=d["x_fd"],
                            x_f=d["x_f"], f_l=d["f_l"], f_ld=d["f_ld"], f_s=d["f_s"],
                            region=d["region"],
                        )
                    )
                except (json.JSONDecodeError, KeyError) as exc:
                    raise ConfigError(f"{path}: bad telemetry record on line {i}: {exc}") from exc
        return cls(records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=np.float64)


def region_metrics(log: TelemetryLog, region: str) -> dict:
    """Tracking and force statistics over one named region of a log.

    ``mean_abs_error_m`` is the mean |x_h - x_f|: how far the follower sits
    from where the operator's hand is.
    """
    rows = [r for r in log.records if r.region == region]
    if not rows:
        raise GeometryError(f"log has no records in region {region!r}")
    err = np.array([abs(r.x_h - r.x_f) for r in rows])
    forces = np.array([r.f_s for r in rows])
    return {
        "region": region,
        "n": len(rows),
        "mean_abs_error_m": float(err.mean()),
        "max_abs_error_m": float(err.max()),
        "mean_force_n": float(forces.mean()),
        "max_force_n": float(forces.max()),
    }


# ---------------------------------------------------------------------------
# Scenario runner


def run_scenario(
    scenario: Scenario,
    models: TeleopModels | None = None,
    sensor=None,
    feedback_override: bool | None = None,
    frame_sink=None,
) -> TelemetryLog:
    """Integrate a scenario at the control rate and return the telemetry log.

    ``sensor`` must expose ``measure(press_depth_mm, stamp, frame_id) ->
    (force_n, frame_or_None)``; the default is the ground-truth
    :class:`OracleSensor`.  ``feedback_override`` forces feedback on/off for
    the whole run regardless of region flags.  ``frame_sink(frame)`` is
    called for every sensor frame a :class:`VisionSensor` produces.
    """
    if models is None:
        models = TeleopModels(contact=ContactModel(object_halfwidth=scenario.object_halfwidth))
    if sensor is None:
        sensor = OracleSensor(models.contact)

    dt = 1.0 / scenario.control_rate
    n_steps = round(scenario.duration * scenario.control_rate)
    state = initial_state(scenario.command_at(0.0))
    records: list[TelemetryRecord] = []
    frame_id = 0

    for k in range(1, n_steps + 1):
        t = k * dt
        # Counting whole sensor periods keeps the cadence drift-free: a tick
        # fires whenever floor(k * sr / cr) advances.
        prev_ticks = math.floor((k - 1) * scenario.sensor_rate / scenario.control_rate)
        now_ticks = math.floor(k * scenario.sensor_rate / scenario.control_rate)
        f_sensor = None
        if now_ticks > prev_ticks:
            press = models.contact.press_depth_mm(state.x_f)
            f_sensor, frame = sensor.measure(press, state.t, frame_id)
            frame_id += 1
            if frame is not None and frame_sink is not None:
                frame_sink(frame)

        feedback = (
            feedback_override if feedback_override is not None else scenario.feedback_at(t)
        )
        state = step(state, models, dt, scenario.command_at(t), feedback, f_sensor)
        region = scenario.region_at(t)
        records.append(
            TelemetryRecord(
                t=state.t, x_h=state.x_h, x_l=state.x_l, x_fd=state.x_fd,
                x_f=state.x_f, f_l=state.f_l, f_ld=state.f_ld, f_s=state.f_s,
                region=region.name if region is not None else "",
            )
        )
    return TelemetryLog(records)

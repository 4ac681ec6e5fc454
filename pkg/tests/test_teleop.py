"""Closed-loop teleoperation: step physics, scenarios, telemetry.

The equilibrium oracle solves the static force-balance equations with
scipy's root bracketing — independent of the simulated integrator:

* feedback off:  kp (x - c) = F(x)            (hand holds the commanded pose)
* feedback on:   x = c + F/k_h + F/kp        (hand yields to the rendered force)

written in press-depth form p (mm) with F = k p^1.5.
"""

import json
import math

import numpy as np
import pytest
from scipy.optimize import brentq

from tactiforce.errors import ConfigError, GeometryError
from tactiforce.teleop import (
    ContactModel,
    FollowerModel,
    OperatorModel,
    OracleSensor,
    Region,
    Scenario,
    TelemetryLog,
    TelemetryRecord,
    TeleopModels,
    VisionSensor,
    bundled_scenario_path,
    initial_state,
    region_metrics,
    run_scenario,
    step,
)

HALFWIDTH = 0.010  # m
COMMAND = 0.005  # m


def models_with_contact() -> TeleopModels:
    return TeleopModels(contact=ContactModel(object_halfwidth=HALFWIDTH))


def press_equilibrium_mm(feedback: bool, models: TeleopModels, command: float) -> float:
    """Static press depth solved independently of the integrator."""
    fol, op, contact = models.follower, models.operator, models.contact
    k = contact.material.k
    hw_mm = contact.object_halfwidth * 1e3
    c_mm = command * 1e3

    def balance(p):
        force = k * p**1.5
        if feedback:
            # x = c + F/k_h + F/kp, press p = hw - x  (all in mm)
            x_mm = c_mm + force * 1e3 * (1.0 / op.hand_stiffness + 1.0 / fol.kp)
        else:
            # kp (x - c) = F  ->  x = c + F/kp
            x_mm = c_mm + force * 1e3 / fol.kp
        return (hw_mm - x_mm) - p

    return brentq(balance, 0.0, hw_mm - c_mm)


def steady_state(feedback: bool, duration: float = 2.0) -> list:
    scenario = Scenario(
        name="hold",
        duration=duration,
        command=((0.0, COMMAND),),
        object_halfwidth=HALFWIDTH,
        feedback_default=feedback,
    )
    log = run_scenario(scenario, models=models_with_contact())
    return log.records[-100:]


class TestStepIdentities:
    def test_no_feedback_hand_tracks_command(self):
        models = models_with_contact()
        state = initial_state(0.03)
        for k in range(50):
            state = step(state, models, 1e-3, command=0.02, feedback=False, f_sensor=5.0)
        assert state.x_h == 0.02  # exact, not approx
        assert state.x_l == state.x_h
        assert state.x_fd == state.x_l

    def test_feedback_hand_yields_by_relaxation_law(self):
        models = models_with_contact()
        op = models.operator
        state = initial_state(0.03)
        state = step(state, models, 1e-3, command=0.02, feedback=True, f_sensor=5.0)
        # one backward-Euler step from d_h = 0 toward f_l / k_h
        assert state.f_ld == 5.0
        assert state.f_l == 5.0
        a = 1e-3 / op.hand_relax_time
        expected = (a * 5.0 / op.hand_stiffness) / (1.0 + a)
        assert state.x_h == pytest.approx(0.02 + expected, abs=1e-18)

    def test_feedback_deflection_converges_to_spring_value(self):
        models = models_with_contact()
        state = initial_state(0.03)
        for _ in range(5000):
            state = step(state, models, 1e-3, command=0.02, feedback=True, f_sensor=5.0)
        assert state.d_h == pytest.approx(5.0 / 250.0, abs=1e-9)
        assert state.x_h == pytest.approx(0.02 + 5.0 / 250.0, abs=1e-9)

    def test_deflection_resets_when_feedback_drops(self):
        models = models_with_contact()
        state = initial_state(0.03)
        for _ in range(100):
            state = step(state, models, 1e-3, command=0.02, feedback=True, f_sensor=5.0)
        assert state.d_h > 0.0
        state = step(state, models, 1e-3, command=0.02, feedback=False, f_sensor=5.0)
        assert state.d_h == 0.0
        assert state.x_h == 0.02

    def test_zero_order_hold_between_sensor_ticks(self):
        models = models_with_contact()
        state = initial_state(0.03)
        state = step(state, models, 1e-3, 0.03, False, f_sensor=2.5)
        for _ in range(10):
            state = step(state, models, 1e-3, 0.03, False, f_sensor=None)
        assert state.f_s == 2.5
        assert state.f_ld == 2.5

    def test_free_space_forces_stay_zero(self):
        models = TeleopModels(contact=ContactModel(object_halfwidth=None))
        state = initial_state(0.03)
        for _ in range(100):
            state = step(state, models, 1e-3, 0.025, feedback=False, f_sensor=0.0)
        assert state.f_l == 0.0 and state.f_ld == 0.0 and state.f_s == 0.0

    def test_aperture_clipped_at_limits(self):
        models = models_with_contact()
        state = initial_state(0.03)
        for _ in range(2000):
            state = step(state, models, 1e-3, command=0.2, feedback=False, f_sensor=0.0)
        assert state.x_f == models.follower.aperture_max
        assert state.v_f == 0.0

    def test_follower_converges_to_command_in_free_space(self):
        models = TeleopModels(contact=ContactModel(object_halfwidth=None))
        state = initial_state(0.03)
        for _ in range(3000):
            state = step(state, models, 1e-3, command=0.012, feedback=False, f_sensor=0.0)
        assert state.x_f == pytest.approx(0.012, abs=1e-9)


class TestEquilibriumOracle:
    def test_no_feedback_press_matches_bisection(self):
        # analytic special case: 5 - p = 4 p^1.5 has the exact root p = 1
        p_oracle = press_equilibrium_mm(False, models_with_contact(), COMMAND)
        assert p_oracle == pytest.approx(1.0, abs=1e-12)
        tail = steady_state(False)
        press = [models_with_contact().contact.press_depth_mm(r.x_f) for r in tail]
        assert np.mean(press) == pytest.approx(p_oracle, abs=1e-6)

    def test_feedback_press_matches_bisection(self):
        p_oracle = press_equilibrium_mm(True, models_with_contact(), COMMAND)
        tail = steady_state(True)
        press = [models_with_contact().contact.press_depth_mm(r.x_f) for r in tail]
        assert np.mean(press) == pytest.approx(p_oracle, abs=1e-5)

    def test_feedback_reduces_force_and_error(self):
        tail_off = steady_state(False)
        tail_on = steady_state(True)
        err_off = np.mean([abs(r.x_h - r.x_f) for r in tail_off])
        err_on = np.mean([abs(r.x_h - r.x_f) for r in tail_on])
        f_off = np.mean([r.f_s for r in tail_off])
        f_on = np.mean([r.f_s for r in tail_on])
        assert f_on < f_off / 5.0
        assert err_on < err_off / 5.0

    def test_no_feedback_equilibrium_numbers(self):
        # p = 1 mm -> F = 8 N, x_f = 9 mm, error = 4 mm
        tail = steady_state(False)
        assert np.mean([r.f_s for r in tail]) == pytest.approx(8.0, abs=1e-4)
        assert np.mean([abs(r.x_h - r.x_f) for r in tail]) == pytest.approx(4e-3, abs=1e-7)


class TestContactModel:
    def test_press_depth_clipped_to_budget(self):
        contact = ContactModel(object_halfwidth=0.010, max_indent=1.25)
        assert contact.press_depth_mm(0.010) == 0.0
        assert contact.press_depth_mm(0.0095) == pytest.approx(0.5)
        assert contact.press_depth_mm(0.0) == 1.25  # capped

    def test_no_object_never_presses(self):
        contact = ContactModel(object_halfwidth=None)
        assert contact.press_depth_mm(0.0) == 0.0
        assert contact.reaction_force(0.0) == 0.0

    def test_reaction_follows_hertz(self):
        contact = ContactModel(object_halfwidth=0.010)
        assert contact.reaction_force(0.0095) == pytest.approx(8.0 * 0.5**1.5)


class TestModelValidation:
    def test_follower_rejects_bad_mass(self):
        with pytest.raises(ConfigError):
            FollowerModel(mass=0.0)

    def test_follower_rejects_inverted_aperture(self):
        with pytest.raises(ConfigError):
            FollowerModel(aperture_min=0.05, aperture_max=0.05)

    def test_operator_rejects_bad_stiffness(self):
        with pytest.raises(ConfigError):
            OperatorModel(hand_stiffness=0.0)


class TestScenario:
    def _demo(self) -> Scenario:
        return Scenario(
            name="demo",
            duration=1.0,
            command=((0.0, 0.03), (0.5, 0.01), (1.0, 0.02)),
            regions=(
                Region("early", 0.1, 0.4, False),
                Region("late", 0.6, 0.9, True),
            ),
        )

    def test_command_interpolation(self):
        s = self._demo()
        assert s.command_at(0.0) == 0.03
        assert s.command_at(0.25) == pytest.approx(0.02)
        assert s.command_at(0.5) == 0.01
        assert s.command_at(2.0) == 0.02  # clamped to last value

    def test_region_lookup(self):
        s = self._demo()
        assert s.region_at(0.2).name == "early"
        assert s.region_at(0.5) is None
        assert s.feedback_at(0.7) is True
        assert s.feedback_at(0.5) is False  # default

    def test_rejects_negative_duration(self):
        with pytest.raises(ConfigError):
            Scenario(name="x", duration=-1.0)

    def test_rejects_sensor_faster_than_control(self):
        with pytest.raises(ConfigError):
            Scenario(name="x", duration=1.0, control_rate=100.0, sensor_rate=200.0)

    def test_rejects_nonincreasing_command_times(self):
        with pytest.raises(ConfigError):
            Scenario(name="x", duration=1.0, command=((0.0, 0.03), (0.0, 0.02)))

    def test_rejects_duplicate_region_names(self):
        with pytest.raises(ConfigError):
            Scenario(
                name="x",
                duration=1.0,
                regions=(Region("a", 0.0, 0.5, False), Region("a", 0.6, 0.9, True)),
            )

    def test_rejects_unknown_sensing(self):
        with pytest.raises(ConfigError):
            Scenario(name="x", duration=1.0, sensing="psychic")

    def test_dict_round_trip(self):
        s = self._demo()
        back = Scenario.from_dict(s.to_dict())
        assert back == s

    def test_json_round_trip(self, tmp_path):
        s = self._demo()
        path = tmp_path / "s.json"
        path.write_text(json.dumps(s.to_dict()))
        assert Scenario.from_json(path) == s

    def test_unknown_keys_rejected(self):
        data = self._demo().to_dict()
        data["gripper_torque"] = 5
        with pytest.raises(ConfigError, match="gripper_torque"):
            Scenario.from_dict(data)

    def test_json_error_reports_line_and_column(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{\n  "name": "x",\n  "duration_s": oops\n}\n')
        with pytest.raises(ConfigError, match=r"line 3"):
            Scenario.from_json(path)

    def test_bundled_scenario_loads(self):
        s = Scenario.from_json(bundled_scenario_path())
        assert s.duration > 0
        names = {r.name for r in s.regions}
        assert {"region_a", "region_b"} <= names
        # the two comparison windows must differ exactly in feedback
        by_name = {r.name: r for r in s.regions}
        assert by_name["region_a"].feedback is False
        assert by_name["region_b"].feedback is True

    def test_unknown_bundled_name(self):
        with pytest.raises(ConfigError):
            bundled_scenario_path("no_such_scenario")


class TestTelemetry:
    def _log(self) -> TelemetryLog:
        return TelemetryLog(
            records=[
                TelemetryRecord(0.001, 0.010, 0.010, 0.010, 0.014, 1.0, 1.0, 1.0, "a"),
                TelemetryRecord(0.002, 0.010, 0.010, 0.010, 0.012, 2.0, 2.0, 2.0, "a"),
                TelemetryRecord(0.003, 0.010, 0.010, 0.010, 0.010, 0.5, 0.5, 0.5, ""),
            ]
        )

    def test_jsonl_round_trip(self, tmp_path):
        log = self._log()
        path = tmp_path / "t.jsonl"
        log.save_jsonl(path)
        back = TelemetryLog.load_jsonl(path)
        assert back.records == log.records

    def test_column_extraction(self):
        np.testing.assert_allclose(self._log().column("x_f"), [0.014, 0.012, 0.010])

    def test_load_error_reports_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"t": 0.1}\n')
        with pytest.raises(ConfigError, match="line 1"):
            TelemetryLog.load_jsonl(path)

    def test_region_metrics_hand_computed(self):
        m = region_metrics(self._log(), "a")
        assert m["n"] == 2
        assert m["mean_abs_error_m"] == pytest.approx((0.004 + 0.002) / 2)
        assert m["max_abs_error_m"] == pytest.approx(0.004)
        assert m["mean_force_n"] == pytest.approx(1.5)
        assert m["max_force_n"] == pytest.approx(2.0)

    def test_region_metrics_missing_region(self):
        with pytest.raises(GeometryError):
            region_metrics(self._log(), "zzz")


class CountingSensor:
    """Stub sensor: returns an incrementing force, counts calls."""

    def __init__(self):
        self.calls = 0

    def measure(self, press_depth_mm, stamp, frame_id):
        self.calls += 1
        return float(self.calls), None


class TestRunScenario:
    def test_zero_duration_gives_empty_log(self):
        log = run_scenario(Scenario(name="nil", duration=0.0))
        assert len(log) == 0

    def test_record_count(self):
        log = run_scenario(Scenario(name="x", duration=0.25))
        assert len(log) == 250

    def test_sensor_tick_count_30hz(self):
        sensor = CountingSensor()
        run_scenario(Scenario(name="x", duration=1.0), sensor=sensor)
        assert sensor.calls == 30

    def test_sensor_tick_count_partial_second(self):
        sensor = CountingSensor()
        run_scenario(Scenario(name="x", duration=0.5), sensor=sensor)
        assert sensor.calls == 15

    def test_zero_order_hold_plateau_lengths(self):
        sensor = CountingSensor()
        log = run_scenario(Scenario(name="x", duration=1.0), sensor=sensor)
        f_s = log.column("f_s")
        # each sensor value persists ~1000/30 = 33-34 control ticks
        # (the final tick lands on the last record, so skip the last run)
        changes = np.flatnonzero(np.diff(f_s)) + 1
        runs = np.diff(np.concatenate([[0], changes, [len(f_s)]]))
        assert len(changes) == 30
        assert set(runs[:-1].tolist()) <= {33, 34}

    def test_determinism(self):
        s = Scenario.from_json(bundled_scenario_path())
        s = Scenario.from_dict({**s.to_dict(), "duration_s": 1.5})
        a = run_scenario(s)
        b = run_scenario(s)
        assert a.records == b.records

    def test_feedback_override(self):
        scenario = Scenario(
            name="x",
            duration=1.0,
            command=((0.0, COMMAND),),
            object_halfwidth=HALFWIDTH,
            regions=(Region("on", 0.0, 1.0, True),),
        )
        log_forced_off = run_scenario(
            scenario, models=models_with_contact(), feedback_override=False
        )
        # with feedback forced off the hand never yields: x_h == command
        assert np.all(log_forced_off.column("x_h") == COMMAND)

    def test_vision_sensor_in_the_loop(self, trained_rig):
        frames = []
        scenario = Scenario(
            name="grip",
            duration=0.2,
            command=((0.0, 0.009),),
            object_halfwidth=HALFWIDTH,
            sensing="full",
        )
        sensor = VisionSensor(
            trained_rig.gel, trained_rig.lighting, trained_rig.force_pipeline
        )
        log = run_scenario(
            scenario,
            models=models_with_contact(),
            sensor=sensor,
            frame_sink=frames.append,
        )
        assert len(frames) == 6  # 0.2 s at 30 Hz
        assert frames[0].pixels.shape == (120, 160, 3)
        # by 0.2 s the loop has settled; compare against the static oracle
        p_eq = press_equilibrium_mm(False, models_with_contact(), 0.009)
        truth = 8.0 * p_eq**1.5
        assert log.records[-1].f_s == pytest.approx(truth, rel=0.25)


class TestOracleSensor:
    def test_reports_hertz_force(self):
        contact = ContactModel(object_halfwidth=HALFWIDTH)
        sensor = OracleSensor(contact)
        force, frame = sensor.measure(0.5, stamp=0.0, frame_id=0)
        assert force == pytest.approx(8.0 * 0.5**1.5)
        assert frame is None

    def test_caps_at_max_indent(self):
        contact = ContactModel(object_halfwidth=HALFWIDTH, max_indent=1.25)
        sensor = OracleSensor(contact)
        force, _ = sensor.measure(99.0, stamp=0.0, frame_id=0)
        assert force == pytest.approx(8.0 * 1.25**1.5)

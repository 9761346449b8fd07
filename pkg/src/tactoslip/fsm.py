"""Closed-loop manipulation state machine driving gripper closure from
touch and slip events of two tactile sensors."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Protocol

from .config import RunConfig
from .core import SensorId, TactileFrame
from .detector import DetectionEvent, NoiseCalibration, Phase, SensorDetector
from .errors import ConfigurationError, TactoslipError

REPORT_SCHEMA_VERSION = 1


class State(Enum):
    S1_BuildRefEmpty = "S1"
    S2_CloseUntilTouch = "S2"
    S3_BuildRefHolding = "S3"
    S4_Manipulate = "S4"
    S5_ReverseMotion = "S5"
    S6_Tighten = "S6"
    S7_UpdateThreshold = "S7"
    Done = "Done"
    Failed = "Failed"

    @property
    def terminal(self) -> bool:
        return self in (State.Done, State.Failed)


class Outcome(Enum):
    Success = "Success"
    ObjectLost = "ObjectLost"
    GripperExhausted = "GripperExhausted"
    Timeout = "Timeout"


class GripperKind(Enum):
    CLOSE_AT_SPEED = "CloseAtSpeed"
    TIGHTEN_BY = "TightenBy"
    HOLD = "Hold"


class MotionKind(Enum):
    IDLE = "Idle"
    TASK = "TaskMotion"
    REVERSE = "ReverseMotion"


@dataclass(frozen=True)
class GripperCommand:
    kind: GripperKind
    value: float = 0.0  # speed in m/s or width delta in m

    @classmethod
    def close_at_speed(cls, speed: float) -> "GripperCommand":
        if speed <= 0:
            raise ConfigurationError("closing speed must be positive")
        return cls(GripperKind.CLOSE_AT_SPEED, speed)

    @classmethod
    def tighten_by(cls, delta: float) -> "GripperCommand":
        if delta <= 0:
            raise ConfigurationError("tighten step must be positive")
        return cls(GripperKind.TIGHTEN_BY, delta)

    @classmethod
    def hold(cls) -> "GripperCommand":
        return cls(GripperKind.HOLD)


@dataclass(frozen=True)
class MotionCommand:
    kind: MotionKind
    direction: tuple[float, float, float] | None = None
    speed: float = 0.0
    # arm pose the reverse motion returns to
    target: float | None = None

    @classmethod
    def idle(cls) -> "MotionCommand":
        return cls(MotionKind.IDLE)


@dataclass(frozen=True)
class EnvFeedback:
    """What the world reports back after the previous commands were applied."""

    gripper_width: float
    arm_pose: float = 0.0
    task_complete: bool = False
    object_lost: bool = False
    at_min_width: bool = False
    damaged: bool = False


class FrameSource(Protocol):
    def read(self) -> tuple[TactileFrame, TactileFrame] | None: ...


class ActuationSink(Protocol):
    def apply(self, grip: GripperCommand, motion: MotionCommand) -> None: ...

    def feedback(self) -> EnvFeedback: ...


@dataclass
class ManipState:
    state: State = State.S1_BuildRefEmpty
    k_s: float = 1.0
    tau_d: float = 0.01
    touch_latched: list[bool] = field(default_factory=lambda: [False, False])
    slip_count: int = 0
    step: int = 0
    waypoint: float | None = None
    outcome: Outcome | None = None


@dataclass
class RunReport:
    outcome: Outcome
    duration_steps: int
    duration_s: float
    compression_pct: float
    slip_count: int
    state_trace: list[tuple[int, str]]
    tau_d_final: float
    width_at_touch: float | None
    final_width: float
    damaged: bool = False
    scenario: str | None = None
    seed: int | None = None
    tau_n: list[float] = field(default_factory=list)
    calibration_frames: int = 0
    events: list[dict[str, Any]] = field(default_factory=list)
    schema_version: int = REPORT_SCHEMA_VERSION

    @property
    def states(self) -> list[str]:
        return [label for _, label in self.state_trace]

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": self.schema_version,
            "scenario": self.scenario,
            "seed": self.seed,
            "outcome": self.outcome.value,
            "duration_steps": self.duration_steps,
            "duration_s": self.duration_s,
            "compression_pct": self.compression_pct,
            "slip_count": self.slip_count,
            "tau_d_final": self.tau_d_final,
            "width_at_touch": self.width_at_touch,
            "final_width": self.final_width,
            "damaged": self.damaged,
            "tau_n": list(self.tau_n),
            "calibration_frames": self.calibration_frames,
            "state_trace": [[step, label] for step, label in self.state_trace],
            "events": list(self.events),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunReport":
        version = data.get("schema_version")
        if version != REPORT_SCHEMA_VERSION:
            raise ConfigurationError(f"unsupported run report schema version {version!r}")
        try:
            return cls(
                outcome=Outcome(data["outcome"]),
                duration_steps=int(data["duration_steps"]),
                duration_s=float(data["duration_s"]),
                compression_pct=float(data["compression_pct"]),
                slip_count=int(data["slip_count"]),
                state_trace=[(int(s), str(label)) for s, label in data["state_trace"]],
                tau_d_final=float(data["tau_d_final"]),
                width_at_touch=data.get("width_at_touch"),
                final_width=float(data["final_width"]),
                damaged=bool(data.get("damaged", False)),
                scenario=data.get("scenario"),
                seed=data.get("seed"),
                tau_n=list(data.get("tau_n", [])),
                calibration_frames=int(data.get("calibration_frames", 0)),
                events=list(data.get("events", [])),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigurationError(f"malformed run report: {exc}") from None


class ManipulationController:
    """Steps the seven-state algorithm one frame pair at a time.

    Both detectors must already hold a noise threshold.  Each call to
    :meth:`step` consumes the current frames plus world feedback and returns
    the gripper and motion commands for the next interval.
    """

    def __init__(self, config: RunConfig, detectors: tuple[SensorDetector, SensorDetector]):
        for det in detectors:
            if det.tau_n is None or det.phase is not Phase.BUILDING_REFERENCE:
                raise ConfigurationError(f"sensor {det.sensor_id} is not calibrated")
        self.config = config
        self.detectors = detectors
        self.m = ManipState(tau_d=config.tau_d_ini)
        self.trace: list[tuple[int, str]] = [(0, State.S1_BuildRefEmpty.value)]
        self.events: list[DetectionEvent] = []
        self.width_at_touch: float | None = None
        self._entered = True

    @property
    def finished(self) -> bool:
        return self.m.state.terminal

    def _enter(self, state: State) -> None:
        self.m.state = state
        self.trace.append((self.m.step, state.value))
        self._entered = True

    def fail(self, outcome: Outcome) -> None:
        self.m.outcome = outcome
        self._enter(State.Failed)

    def step(
        self, frames: tuple[TactileFrame, TactileFrame], env: EnvFeedback
    ) -> tuple[GripperCommand, MotionCommand]:
        if self.finished:
            raise TactoslipError("state machine already finished")
        m = self.m
        m.step += 1
        self._entered = False
        cfg = self.config
        state = m.state

        if state is State.S1_BuildRefEmpty:
            for det, frame in zip(self.detectors, frames):
                det.build_reference_step(frame)
            if all(det.phase is Phase.ARMED for det in self.detectors):
                self._enter(State.S2_CloseUntilTouch)

        elif state is State.S2_CloseUntilTouch:
            for i, (det, frame) in enumerate(zip(self.detectors, frames)):
                if m.touch_latched[i]:
                    continue
                event = det.detect_step(frame, m.tau_d)
                if event is not None:
                    self.events.append(event)
                    m.touch_latched[i] = True
            if all(m.touch_latched):
                self.width_at_touch = env.gripper_width
                for det in self.detectors:
                    det.rearm_as_slip()
                self._enter(State.S3_BuildRefHolding)
            elif env.at_min_width:
                self.fail(Outcome.GripperExhausted)

        elif state is State.S3_BuildRefHolding:
            for det, frame in zip(self.detectors, frames):
                det.build_reference_step(frame)
            if all(det.phase is Phase.ARMED for det in self.detectors):
                m.waypoint = env.arm_pose
                self._enter(State.S4_Manipulate)

        elif state is State.S4_Manipulate:
            if env.object_lost:
                self.fail(Outcome.ObjectLost)
            elif env.task_complete:
                self._enter(State.Done)
                m.outcome = Outcome.Success
            else:
                fired = [det.detect_step(frame, m.tau_d) for det, frame in zip(self.detectors, frames)]
                fired = [ev for ev in fired if ev is not None]
                self.events.extend(fired)
                if fired and cfg.slip_reaction:
                    self._enter(
                        State.S5_ReverseMotion if cfg.reverse_on_slip else State.S6_Tighten
                    )

        elif state is State.S5_ReverseMotion:
            assert m.waypoint is not None
            if env.arm_pose <= m.waypoint + 1e-12:
                self._enter(State.S6_Tighten)

        elif state is State.S6_Tighten:
            self._enter(State.S7_UpdateThreshold)

        elif state is State.S7_UpdateThreshold:
            m.k_s *= 2.0
            m.tau_d = m.k_s * cfg.tau_d_ini
            m.slip_count += 1
            for det in self.detectors:
                det.rearm_as_slip()
            self._enter(State.S3_BuildRefHolding)

        return self._commands()

    def _commands(self) -> tuple[GripperCommand, MotionCommand]:
        cfg = self.config
        state = self.m.state
        hold, idle = GripperCommand.hold(), MotionCommand.idle()
        if state is State.S2_CloseUntilTouch:
            return GripperCommand.close_at_speed(cfg.close_speed_mps), idle
        if state is State.S4_Manipulate:
            return hold, MotionCommand(MotionKind.TASK, cfg.task_direction, cfg.task_speed_mps)
        if state is State.S5_ReverseMotion:
            return hold, MotionCommand(
                MotionKind.REVERSE, cfg.task_direction, cfg.task_speed_mps, self.m.waypoint
            )
        if state is State.S6_Tighten and self._entered:
            return GripperCommand.tighten_by(cfg.tighten_delta_m), idle
        return hold, idle


def calibrate_sensors(
    config: RunConfig, source: FrameSource, sink: ActuationSink | None = None
) -> tuple[SensorDetector, SensorDetector]:
    """Run noise calibration on both sensors (K + 1 contact-free frame pairs)."""
    detectors = (
        SensorDetector(SensorId.S1, config.detection),
        SensorDetector(SensorId.S2, config.detection),
    )
    while any(det.phase is Phase.CALIBRATING for det in detectors):
        frames = source.read()
        if frames is None:
            raise ConfigurationError("frame source exhausted during noise calibration")
        for det, frame in zip(detectors, frames):
            det.calibrate_step(frame)
        if sink is not None:
            sink.apply(GripperCommand.hold(), MotionCommand.idle())
    return detectors


def run_to_completion(
    config: RunConfig,
    source: FrameSource,
    sink: ActuationSink,
    *,
    calibration: tuple[NoiseCalibration, NoiseCalibration] | None = None,
    scenario: str | None = None,
) -> RunReport:
    """Calibrate (unless thresholds are given) and step the controller to a terminal state."""
    if calibration is None:
        detectors = calibrate_sensors(config, source, sink)
        calibration_frames = config.K + 1
    else:
        calibration_frames = 0
        detectors = tuple(  # type: ignore[assignment]
            SensorDetector(c.sensor_id, config.detection, tau_n=c.tau_n) for c in calibration
        )
    ctl = ManipulationController(config, detectors)
    while not ctl.finished:
        if ctl.m.step >= config.timeout_steps:
            ctl.fail(Outcome.Timeout)
            break
        frames = source.read()
        if frames is None:
            ctl.fail(Outcome.Timeout)
            break
        grip, motion = ctl.step(frames, sink.feedback())
        sink.apply(grip, motion)

    env = sink.feedback()
    final_width = env.gripper_width
    if ctl.width_at_touch:
        compression = 100.0 * (ctl.width_at_touch - final_width) / ctl.width_at_touch
    else:
        compression = 0.0
    assert ctl.m.outcome is not None
    return RunReport(
        outcome=ctl.m.outcome,
        duration_steps=ctl.m.step,
        duration_s=ctl.m.step * config.dt,
        compression_pct=compression,
        slip_count=ctl.m.slip_count,
        state_trace=list(ctl.trace),
        tau_d_final=ctl.m.tau_d,
        width_at_touch=ctl.width_at_touch,
        final_width=final_width,
        damaged=env.damaged,
        scenario=scenario,
        seed=config.seed,
        tau_n=[float(det.tau_n) for det in detectors],  # type: ignore[arg-type]
        calibration_frames=calibration_frames,
        events=[ev.to_dict() for ev in ctl.events],
    )

"""Physics-lite gripper/object/sensor world for closed-loop runs.

The object is a slab of free width ``width_free`` squeezed by a two-finger
gripper.  Compression drives a soft circular imprint on both sensor images;
when the task pull exceeds the holding capacity the object slides and the
imprint translates down the image.  Nothing here is calibrated against real
hardware: the presets are synthetic and only reproduce the ordering of the
published per-object results.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .core import SensorId, TactileFrame
from .errors import ConfigurationError
from .config import RunConfig
from .fsm import EnvFeedback, GripperCommand, GripperKind, MotionCommand, MotionKind, RunReport

#: softness at or above which the imprint reaches full brightness
SOFTNESS_REF = 1000.0
BLOB_PEAK = 0.5
BLOB_TINT = (1.0, 0.8, 0.6)
BLOB_EDGE_PX = 0.8


@dataclass(frozen=True)
class SimObject:
    width_free: float
    softness: float
    mu_hold: float
    load_force: float
    detach_threshold: float
    fragile_limit: float
    slip_gain: float = 0.3
    sensor_gain: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self) -> None:
        for name in ("width_free", "softness", "mu_hold", "load_force", "detach_threshold", "slip_gain"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        if not 0.0 < self.fragile_limit <= 1.0:
            raise ConfigurationError("fragile_limit must lie in (0, 1]")
        if len(self.sensor_gain) != 2 or min(self.sensor_gain) <= 0:
            raise ConfigurationError("sensor_gain needs two positive entries")


@dataclass(frozen=True)
class Scenario:
    name: str
    obj: SimObject
    start_gap: float = 0.003
    noise_sigma: float = 0.01
    sensor_dims: tuple[int, int] = (64, 64)
    min_width: float = 0.0
    description: str = ""


# Parameter values are synthetic, chosen so slip counts and compression
# follow the per-object ordering measured on the real setup.
PRESETS: dict[str, Scenario] = {
    s.name: s
    for s in [
        Scenario(
            "rough_connector",
            SimObject(0.012, 3000.0, 1000.0, 4.75, 0.015, 0.9, slip_gain=0.15),
            description="unplug a ridged connector with a high pull-out force",
        ),
        Scenario(
            "smooth_connector",
            SimObject(0.016, 3000.0, 1000.0, 2.75, 0.012, 0.9, slip_gain=0.3),
            description="unplug a smooth connector",
        ),
        Scenario(
            "egg",
            SimObject(0.045, 2000.0, 1000.0, 0.75, 0.02, 0.05, slip_gain=0.6),
            description="lift a raw egg",
        ),
        Scenario(
            "glass",
            SimObject(0.07, 1500.0, 800.0, 0.05, 0.02, 0.03),
            description="lift a plastic glass",
        ),
        Scenario(
            "tomato",
            SimObject(0.06, 600.0, 500.0, 0.04, 0.01, 0.1),
            description="detach a tomato from its branch",
        ),
        Scenario(
            "white_grape",
            SimObject(0.018, 300.0, 400.0, 0.3, 0.01, 0.3, slip_gain=1.0),
            description="detach a white grape from its pedicel",
        ),
        Scenario(
            "black_grape",
            SimObject(0.02, 250.0, 400.0, 0.7, 0.01, 0.3, slip_gain=1.0),
            description="detach a black grape from its pedicel",
        ),
    ]
}

_OBJECT_FIELDS = {f.name for f in dataclasses.fields(SimObject)}
_SCENARIO_FIELDS = {"start_gap", "noise_sigma", "min_width", "sensor_h", "sensor_w", "description"}


def get_scenario(name: str) -> Scenario:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown scenario {name!r}; choose from {', '.join(PRESETS)}"
        ) from None


def scenario_from_mapping(values: dict[str, str], default: str | None = None) -> Scenario:
    """Build a scenario from ``base = <preset>`` plus field overrides (strings)."""
    values = dict(values)
    base_name = values.pop("base", None) or default
    if base_name is None:
        raise ConfigurationError("scenario needs a 'base' preset")
    base = get_scenario(base_name)
    obj_changes: dict[str, object] = {}
    scen_changes: dict[str, object] = {}
    h, w = base.sensor_dims
    try:
        for key, raw in values.items():
            if key == "name":
                scen_changes["name"] = raw
            elif key == "sensor_gain":
                obj_changes[key] = tuple(float(x) for x in raw.replace(",", " ").split())
            elif key in _OBJECT_FIELDS:
                obj_changes[key] = float(raw)
            elif key == "sensor_h":
                h = int(raw)
            elif key == "sensor_w":
                w = int(raw)
            elif key == "description":
                scen_changes[key] = raw
            elif key in _SCENARIO_FIELDS:
                scen_changes[key] = float(raw)
            else:
                raise ConfigurationError(f"unknown [scenario] key {key!r}")
    except ValueError as exc:
        raise ConfigurationError(f"bad scenario value: {exc}") from None
    if h < 1 or w < 1:
        raise ConfigurationError("sensor dimensions must be positive")
    return dataclasses.replace(
        base,
        obj=dataclasses.replace(base.obj, **obj_changes),  # type: ignore[arg-type]
        sensor_dims=(h, w),
        **scen_changes,  # type: ignore[arg-type]
    )


def _baseline_texture(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float32)
    yy /= max(h, 1)
    xx /= max(w, 1)
    out = np.empty((h, w, 3), dtype=np.float32)
    for c in range(3):
        fy, fx, phase = rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0), rng.uniform(0, 2 * math.pi)
        base = 0.3 + 0.1 * c
        out[:, :, c] = base + 0.06 * np.sin(2 * math.pi * (fy * yy + fx * xx) + phase)
    # vignetting as seen through the gel
    r2 = (yy - 0.5) ** 2 + (xx - 0.5) ** 2
    out *= (1.0 - 0.3 * r2)[:, :, None]
    return out


@dataclass
class SimWorld:
    """Mutable world state; also serves as frame source and actuation sink."""

    scenario: Scenario
    seed: int = 0
    dt: float = 1.0 / 30.0
    gripper_width: float = field(init=False)
    arm_pose: float = field(default=0.0, init=False)
    pull_progress: float = field(default=0.0, init=False)
    slip_offset: list[float] = field(default_factory=lambda: [0.0, 0.0], init=False)
    damaged: bool = field(default=False, init=False)
    clamped: bool = field(default=False, init=False)
    t: int = field(default=0, init=False)
    record: bool = False
    recorded: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list, init=False, repr=False)

    def __post_init__(self) -> None:
        self.gripper_width = self.scenario.obj.width_free + self.scenario.start_gap
        tex_rng, noise_seed = np.random.SeedSequence(self.seed).spawn(2)
        h, w = self.scenario.sensor_dims
        tex = np.random.default_rng(tex_rng)
        self._baseline = [_baseline_texture(tex, h, w) for _ in SensorId]
        self._noise = np.random.default_rng(noise_seed)
        yy, xx = np.mgrid[0:h, 0:w]
        self._yy = yy.astype(np.float32)
        self._xx = xx.astype(np.float32)

    @property
    def obj(self) -> SimObject:
        return self.scenario.obj

    @property
    def compression(self) -> float:
        return max(0.0, self.obj.width_free - self.gripper_width)

    @property
    def holding_capacity(self) -> float:
        return self.obj.mu_hold * self.compression

    @property
    def blob_origin(self) -> tuple[float, float]:
        h, w = self.scenario.sensor_dims
        return 0.35 * (h - 1), 0.5 * (w - 1)

    @property
    def lost_offset_px(self) -> float:
        # blob centre has left the bottom of the image
        h = self.scenario.sensor_dims[0]
        return (h - 1) - self.blob_origin[0]

    @property
    def object_lost(self) -> bool:
        return max(self.slip_offset) > self.lost_offset_px

    @property
    def task_complete(self) -> bool:
        return self.pull_progress >= self.obj.detach_threshold

    def blob_params(self, sensor: int) -> tuple[float, float, float, float] | None:
        """(centre row, centre col, radius px, peak intensity) or None without contact."""
        imprint = self.obj.softness * self.compression * self.obj.sensor_gain[sensor]
        if imprint <= 0.0:
            return None
        level = min(1.0, imprint)
        h, w = self.scenario.sensor_dims
        radius = 0.3 * min(h, w) * math.sqrt(level)
        peak = BLOB_PEAK * min(1.0, self.obj.softness / SOFTNESS_REF) * (0.5 + 0.5 * level)
        row, col = self.blob_origin
        return row + self.slip_offset[sensor], col, radius, peak

    def render_clean(self, sensor: int) -> np.ndarray:
        """Noise-free image of one sensor (not clipped)."""
        img = self._baseline[sensor].copy()
        blob = self.blob_params(sensor)
        if blob is not None:
            row, col, radius, peak = blob
            d = np.sqrt((self._yy - row) ** 2 + (self._xx - col) ** 2)
            z = np.clip((d - radius) / BLOB_EDGE_PX, -60.0, 60.0)
            profile = (peak / (1.0 + np.exp(z))).astype(np.float32)
            img += profile[:, :, None] * np.asarray(BLOB_TINT, dtype=np.float32)
        return img

    def render_frames(self) -> tuple[TactileFrame, TactileFrame]:
        """Render both sensors at the current step and advance the frame clock."""
        sigma = self.scenario.noise_sigma
        images = []
        for sensor in range(2):
            img = self.render_clean(sensor)
            if sigma > 0:
                img += self._noise.standard_normal(img.shape, dtype=np.float32) * np.float32(sigma)
            np.clip(img, 0.0, 1.0, out=img)
            images.append(img)
        if self.record:
            self.recorded.append((images[0], images[1]))
        frames = (
            TactileFrame(SensorId.S1, self.t, images[0]),
            TactileFrame(SensorId.S2, self.t, images[1]),
        )
        self.t += 1
        return frames

    def world_step(self, grip: GripperCommand, motion: MotionCommand) -> None:
        if grip.kind is GripperKind.CLOSE_AT_SPEED:
            self._set_width(self.gripper_width - grip.value * self.dt)
        elif grip.kind is GripperKind.TIGHTEN_BY:
            self._set_width(self.gripper_width - grip.value)

        if motion.kind is MotionKind.TASK:
            self.arm_pose += motion.speed * self.dt
            deficit = self.obj.load_force - self.holding_capacity
            if deficit > 0.0:
                for s in range(2):
                    self.slip_offset[s] += self.obj.slip_gain * deficit
            else:
                self.pull_progress += motion.speed * self.dt
        elif motion.kind is MotionKind.REVERSE:
            target = motion.target if motion.target is not None else 0.0
            self.arm_pose = max(target, self.arm_pose - motion.speed * self.dt)

        if self.compression / self.obj.width_free > self.obj.fragile_limit:
            self.damaged = True

    def _set_width(self, width: float) -> None:
        floor = self.scenario.min_width
        if width < floor:
            width = floor
            self.clamped = True
        self.gripper_width = width

    # FrameSource / ActuationSink protocol

    def read(self) -> tuple[TactileFrame, TactileFrame]:
        return self.render_frames()

    def apply(self, grip: GripperCommand, motion: MotionCommand) -> None:
        self.world_step(grip, motion)

    def feedback(self) -> EnvFeedback:
        return EnvFeedback(
            gripper_width=self.gripper_width,
            arm_pose=self.arm_pose,
            task_complete=self.task_complete,
            object_lost=self.object_lost,
            at_min_width=self.gripper_width <= self.scenario.min_width,
            damaged=self.damaged,
        )


class LogActuator:
    """Actuation sink that only integrates commanded kinematics.

    Used for replays, where frames come from a file and nothing can be
    moved.  The task counts as complete once the arm has travelled
    ``task_distance`` beyond its furthest reversal waypoint.
    """

    def __init__(self, start_width: float, dt: float, task_distance: float, min_width: float = 0.0):
        self.gripper_width = start_width
        self.arm_pose = 0.0
        self.dt = dt
        self.task_distance = task_distance
        self.min_width = min_width
        self.log: list[tuple[str, float, str, float]] = []

    def apply(self, grip: GripperCommand, motion: MotionCommand) -> None:
        if grip.kind is GripperKind.CLOSE_AT_SPEED:
            self.gripper_width -= grip.value * self.dt
        elif grip.kind is GripperKind.TIGHTEN_BY:
            self.gripper_width -= grip.value
        self.gripper_width = max(self.min_width, self.gripper_width)
        if motion.kind is MotionKind.TASK:
            self.arm_pose += motion.speed * self.dt
        elif motion.kind is MotionKind.REVERSE:
            target = motion.target if motion.target is not None else 0.0
            self.arm_pose = max(target, self.arm_pose - motion.speed * self.dt)
        self.log.append((grip.kind.value, grip.value, motion.kind.value, self.arm_pose))

    def feedback(self) -> EnvFeedback:
        return EnvFeedback(
            gripper_width=self.gripper_width,
            arm_pose=self.arm_pose,
            task_complete=self.arm_pose >= self.task_distance,
            at_min_width=self.gripper_width <= self.min_width,
        )


def simulate(
    config: RunConfig, scenario: Scenario | str, *, record: bool = False
) -> tuple[RunReport, SimWorld]:
    """Calibrate and run the full algorithm against a fresh world."""
    from .fsm import run_to_completion

    if isinstance(scenario, str):
        scenario = get_scenario(scenario)
    world = SimWorld(scenario, seed=config.seed, dt=config.dt, record=record)
    report = run_to_completion(config, world, world, scenario=scenario.name)
    return report, world

"""Deterministic planar LiDAR simulator and scenario handling.

Worlds are collections of line segments and axis-aligned boxes.  Two
spinning single-layer LiDARs are mounted on the vehicle; beams are cast
from each sensor's true pose, but the resulting scan only reports the
mount pose the system believes in.  An injected calibration error
(rotation about the sensor axis or a shift along the vehicle's
longitudinal axis) therefore corrupts the map exactly the way a real
miscalibration would: through systematically misplaced evidence, not
through noise.
"""

from __future__ import annotations

import hashlib
import math
import os
from dataclasses import dataclass, replace
from enum import Enum
from importlib import resources

import numpy as np

from .assess import AssessParams, Action, assess_grid
from .baseline import bayes_categorize, bayes_from_evidential, bayes_fuse_demorgan
from .classify import CategoryGrid, ClassifyThresholds, classify_grid, dilate
from .geometry import Pose, compose
from .grid import (
    EvidentialGrid,
    GridSpec,
    InverseSensorModel,
    OutOfBoundsError,
    Scan,
    fuse_grids,
    integrate_scan,
)
from .planner import PlannerParams


class DegenerateWorldError(ValueError):
    """Raised when world geometry cannot be ray cast against."""


@dataclass(frozen=True)
class World:
    """Static planar world: line segments plus axis-aligned boxes."""

    segments: tuple[tuple[float, float, float, float], ...] = ()
    boxes: tuple[tuple[float, float, float, float], ...] = ()

    def __post_init__(self):
        for x0, y0, x1, y1 in self.segments:
            if math.hypot(x1 - x0, y1 - y0) < 1e-9:
                raise DegenerateWorldError(f"zero-length segment ({x0}, {y0}, {x1}, {y1})")
        for xmin, ymin, xmax, ymax in self.boxes:
            if xmax - xmin < 1e-9 or ymax - ymin < 1e-9:
                raise DegenerateWorldError(f"degenerate box ({xmin}, {ymin}, {xmax}, {ymax})")

    def all_segments(self) -> np.ndarray:
        """(S, 4) array of segments; box sides are unrolled."""
        rows = list(self.segments)
        for xmin, ymin, xmax, ymax in self.boxes:
            rows.append((xmin, ymin, xmax, ymin))
            rows.append((xmax, ymin, xmax, ymax))
            rows.append((xmax, ymax, xmin, ymax))
            rows.append((xmin, ymax, xmin, ymin))
        if not rows:
            return np.zeros((0, 4))
        return np.asarray(rows, dtype=np.float64)


class ErrorKind(Enum):
    NONE = "none"
    ROTATIONAL = "rot"      # degrees about the sensor's own axis
    TRANSLATIONAL = "trans"  # meters along the vehicle's longitudinal axis


@dataclass(frozen=True)
class ErrorInjection:
    kind: ErrorKind = ErrorKind.NONE
    magnitude: float = 0.0
    target_sensor: int = 1

    def __post_init__(self):
        if self.magnitude < 0.0:
            raise ValueError(f"error magnitude must be >= 0, got {self.magnitude}")
        if self.target_sensor < 0:
            raise ValueError(f"target_sensor must be >= 0, got {self.target_sensor}")


@dataclass(frozen=True)
class SensorConfig:
    """Spinning single-layer LiDAR mounted on the vehicle.

    ``mount_pose`` is what the mapping pipeline believes;
    ``true_mount_pose`` is where beams are actually cast from.  The two
    differ only while a calibration error is injected.
    """

    mount_pose: Pose
    true_mount_pose: Pose | None = None
    channels: int = 32
    points_per_second: int = 1_310_720
    rotation_rate: float = 10.0  # [Hz]
    max_range: float = 30.0      # [m]
    min_range: float = 2.0       # [m]

    def __post_init__(self):
        if self.true_mount_pose is None:
            object.__setattr__(self, "true_mount_pose", self.mount_pose)
        if self.channels <= 0 or self.points_per_second <= 0 or self.rotation_rate <= 0.0:
            raise ValueError("channels, points_per_second, and rotation_rate must be positive")
        if not (0.0 <= self.min_range < self.max_range):
            raise ValueError(
                f"need 0 <= min_range < max_range, got {self.min_range}, {self.max_range}"
            )
        if self.beams_per_revolution < 8:
            raise ValueError(
                f"fewer than 8 beams per revolution ({self.beams_per_revolution}); "
                "check points_per_second / (channels * rotation_rate)"
            )

    @property
    def beams_per_revolution(self) -> int:
        """Azimuth samples of the single layer used by the planar model."""
        return int(round(self.points_per_second / (self.channels * self.rotation_rate)))


def apply_error(sensor: SensorConfig, error: ErrorInjection) -> SensorConfig:
    """Return the sensor with its true mount pose displaced by the error."""
    mount = sensor.mount_pose
    if error.kind == ErrorKind.NONE or error.magnitude == 0.0:
        true_pose = mount
    elif error.kind == ErrorKind.ROTATIONAL:
        true_pose = Pose(mount.x, mount.y, mount.theta + math.radians(error.magnitude))
    elif error.kind == ErrorKind.TRANSLATIONAL:
        true_pose = Pose(mount.x + error.magnitude, mount.y, mount.theta)
    else:  # pragma: no cover
        raise ValueError(f"unknown error kind {error.kind}")
    return replace(sensor, true_mount_pose=true_pose)


def simulate_scan(
    world: World,
    vehicle_pose: Pose,
    sensor: SensorConfig,
    noise_sigma: float = 0.0,
    rng: np.random.Generator | None = None,
) -> Scan:
    """Cast one revolution of beams from the sensor's true pose.

    The returned scan carries the believed mount pose.  Beams record the
    nearest surface intersection within (min_range, max_range]; beams
    without one run out at max_range.  With ``noise_sigma`` > 0 and an
    rng supplied, Gaussian range noise is added (off by default so runs
    are bit-exact).
    """
    beams = sensor.beams_per_revolution
    azimuths = -math.pi + 2.0 * math.pi * np.arange(beams) / beams
    true_pose = compose(vehicle_pose, sensor.true_mount_pose)
    angles = true_pose.theta + azimuths
    dir_x = np.cos(angles)
    dir_y = np.sin(angles)

    segments = world.all_segments()
    ranges = np.full(beams, np.inf)
    if segments.shape[0] > 0:
        px = segments[:, 0]
        py = segments[:, 1]
        ux = segments[:, 2] - px
        uy = segments[:, 3] - py
        # beam: o + t*d, segment: p + s*u; solve with the 2-d cross product
        wx = px[None, :] - true_pose.x
        wy = py[None, :] - true_pose.y
        denom = dir_x[:, None] * uy[None, :] - dir_y[:, None] * ux[None, :]
        safe = np.abs(denom) > 1e-12
        denom = np.where(safe, denom, 1.0)
        t = (wx * uy[None, :] - wy * ux[None, :]) / denom
        s = (wx * dir_y[:, None] - wy * dir_x[:, None]) / denom
        valid = safe & (s >= 0.0) & (s <= 1.0) & (t > sensor.min_range) & (t <= sensor.max_range)
        t = np.where(valid, t, np.inf)
        ranges = t.min(axis=1)

    hits = np.isfinite(ranges)
    ranges = np.where(hits, ranges, sensor.max_range)
    if noise_sigma > 0.0 and rng is not None:
        noisy = ranges + rng.normal(0.0, noise_sigma, size=beams)
        ranges = np.where(hits, np.clip(noisy, 1e-6, sensor.max_range), sensor.max_range)
    return Scan(
        sensor_pose=sensor.mount_pose,
        azimuths=azimuths,
        ranges=ranges,
        hits=hits,
        max_range=sensor.max_range,
        min_range=sensor.min_range,
    )


@dataclass(frozen=True)
class Scenario:
    """A world plus everything needed to map, assess, and plan in it."""

    name: str
    world: World
    grid: GridSpec
    vehicle_poses: tuple[Pose, ...]
    goal: Pose | None
    sensors: tuple[SensorConfig, ...]
    error: ErrorInjection = ErrorInjection()
    thresholds: ClassifyThresholds = ClassifyThresholds()
    assess: AssessParams = AssessParams()
    planner: PlannerParams = PlannerParams()
    sensor_model: InverseSensorModel = InverseSensorModel()
    dilation_radius: float = 1.5
    base_rate: float = 0.5
    noise_sigma: float = 0.0
    seed: int | None = None
    goal_search_radius: float = 5.0
    replay_advance: float = 1.0

    def __post_init__(self):
        if not self.vehicle_poses:
            raise ValueError("scenario needs at least one vehicle pose")
        if not self.sensors:
            raise ValueError("scenario needs at least one sensor")
        if self.dilation_radius < 0.0:
            raise ValueError(f"dilation_radius must be >= 0, got {self.dilation_radius}")

    @property
    def vehicle_pose(self) -> Pose:
        return self.vehicle_poses[0]

    def effective_sensors(self) -> tuple[SensorConfig, ...]:
        """Sensors with the scenario's error injected into the target one."""
        out = []
        for index, sensor in enumerate(self.sensors):
            if index == self.error.target_sensor and self.error.kind != ErrorKind.NONE:
                out.append(apply_error(sensor, self.error))
            else:
                out.append(replace(sensor, true_mount_pose=sensor.mount_pose))
        return tuple(out)


@dataclass(frozen=True)
class SceneGrids:
    """Mapping output for one vehicle pose: per sensor and fused."""

    per_sensor: tuple[EvidentialGrid, ...]
    fused: EvidentialGrid


def build_scene(scenario: Scenario, vehicle_pose: Pose | None = None) -> SceneGrids:
    """Simulate all sensors at one pose and build the evidential grids."""
    if vehicle_pose is None:
        vehicle_pose = scenario.vehicle_pose
    if not scenario.grid.contains(vehicle_pose.x, vehicle_pose.y):
        raise OutOfBoundsError(
            f"vehicle pose ({vehicle_pose.x:.3f}, {vehicle_pose.y:.3f}) lies outside the grid"
        )
    rng = None
    if scenario.noise_sigma > 0.0 and scenario.seed is not None:
        rng = np.random.default_rng(scenario.seed)
    per_sensor = []
    for sensor in scenario.effective_sensors():
        scan = simulate_scan(scenario.world, vehicle_pose, sensor, scenario.noise_sigma, rng)
        grid = EvidentialGrid.vacuous(scenario.grid, scenario.base_rate)
        grid = integrate_scan(grid, scan, scenario.sensor_model, vehicle_pose)
        per_sensor.append(grid)
    fused = per_sensor[0]
    for grid in per_sensor[1:]:
        fused = fuse_grids(fused, grid)
    return SceneGrids(tuple(per_sensor), fused)


def categorize_scene(
    scenario: Scenario, vehicle_pose: Pose | None = None, conventional: bool = False
) -> CategoryGrid:
    """Map one pose to a categorized (undilated) grid.

    With ``conventional`` the per-sensor grids are collapsed to
    probabilities, fused with the complement-product rule, and
    categorized three ways; conflicts cannot appear there.
    """
    scene = build_scene(scenario, vehicle_pose)
    if conventional:
        fused = bayes_fuse_demorgan([bayes_from_evidential(g) for g in scene.per_sensor])
        # the conventional stack reads anything at or above the certainty
        # threshold as occupied; there is no conflict band
        return bayes_categorize(
            fused, scenario.thresholds.free_max, scenario.thresholds.max_uncertainty
        )
    return classify_grid(scene.fused, scenario.thresholds)


def make_observer(scenario: Scenario, conventional: bool = False):
    """Observation callback for the replanning loop."""

    def observe(pose: Pose) -> CategoryGrid:
        return categorize_scene(scenario, pose, conventional)

    return observe


@dataclass(frozen=True)
class SweepRow:
    scenario_id: str
    error_kind: str
    error_magnitude: float
    alpha: float | None
    conflict_mass: float
    occupied_mass: float
    action: Action


def assess_scenario(scenario: Scenario, error: ErrorInjection | None = None) -> SweepRow:
    """Map, categorize, dilate, and score one scenario configuration."""
    if error is not None:
        scenario = replace(scenario, error=error)
    pose = scenario.vehicle_pose
    categories = categorize_scene(scenario, pose)
    dilated = dilate(categories, scenario.dilation_radius)
    assessment = assess_grid(dilated, pose, scenario.assess)
    return SweepRow(
        scenario.name,
        scenario.error.kind.value,
        scenario.error.magnitude,
        assessment.alpha,
        assessment.conflict_mass,
        assessment.occupied_mass,
        assessment.action,
    )


def sweep(scenarios, errors) -> list[SweepRow]:
    """Score every scenario under every error injection, in order."""
    rows = []
    for scenario in scenarios:
        for error in errors:
            rows.append(assess_scenario(scenario, error))
    return rows


def rotational_sweep_errors(target_sensor: int = 1) -> list[ErrorInjection]:
    """Rotational misalignments 0..15 degrees in 1 degree steps."""
    return [
        ErrorInjection(ErrorKind.ROTATIONAL if m else ErrorKind.NONE, float(m), target_sensor)
        for m in range(16)
    ]


def translational_sweep_errors(target_sensor: int = 1) -> list[ErrorInjection]:
    """Translational offsets 0..2.34 m in 0.234 m steps."""
    return [
        ErrorInjection(
            ErrorKind.TRANSLATIONAL if i else ErrorKind.NONE, round(0.234 * i, 6), target_sensor
        )
        for i in range(11)
    ]


# --- scenario files -------------------------------------------------------
#
# Plain text, one directive per line, '#' starts a comment:
#   name <id>
#   grid <origin_x> <origin_y> <width_cells> <height_cells> <resolution>
#   vehicle <x> <y> <theta>          (repeatable: pose sequence)
#   goal <x> <y> <theta>
#   sensor <x> <y> <theta>           (repeatable, vehicle frame)
#   error <none|rot|trans> <magnitude> <target_sensor>
#   segment <x0> <y0> <x1> <y1>      (repeatable)
#   box <xmin> <ymin> <xmax> <ymax>  (repeatable)
#   set <key> <value>                (parameter overrides)

_SET_KEYS = {
    "max_uncertainty", "free_max", "occupied_min",
    "roi_radius", "alert_threshold",
    "base_cost", "conflict_penalty", "conflict_block_distance",
    "turning_radius", "step_length", "heading_bins",
    "goal_position_tol", "goal_heading_tol_deg",
    "occupied_mass", "free_mass",
    "channels", "points_per_second", "rotation_rate", "max_range", "min_range",
    "dilation_radius", "base_rate", "noise_sigma",
    "goal_search_radius", "replay_advance",
}


class ScenarioFormatError(ValueError):
    """Raised when a scenario file cannot be parsed."""


def parse_scenario(text: str, fallback_name: str = "scenario") -> Scenario:
    name = fallback_name
    grid_spec = None
    vehicle_poses: list[Pose] = []
    goal = None
    sensor_poses: list[Pose] = []
    error = ErrorInjection()
    segments: list[tuple[float, float, float, float]] = []
    boxes: list[tuple[float, float, float, float]] = []
    params: dict[str, float] = {}

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        keyword, args = fields[0], fields[1:]
        try:
            if keyword == "name":
                name = args[0]
            elif keyword == "grid":
                grid_spec = GridSpec(
                    resolution=float(args[4]),
                    width=int(args[2]),
                    height=int(args[3]),
                    origin_x=float(args[0]),
                    origin_y=float(args[1]),
                )
            elif keyword == "vehicle":
                vehicle_poses.append(Pose(float(args[0]), float(args[1]), float(args[2])))
            elif keyword == "goal":
                goal = Pose(float(args[0]), float(args[1]), float(args[2]))
            elif keyword == "sensor":
                sensor_poses.append(Pose(float(args[0]), float(args[1]), float(args[2])))
            elif keyword == "error":
                error = ErrorInjection(ErrorKind(args[0]), float(args[1]), int(args[2]))
            elif keyword == "segment":
                segments.append(tuple(float(v) for v in args[:4]))
            elif keyword == "box":
                boxes.append(tuple(float(v) for v in args[:4]))
            elif keyword == "set":
                if args[0] not in _SET_KEYS:
                    raise ScenarioFormatError(f"unknown parameter {args[0]!r}")
                params[args[0]] = float(args[1])
            else:
                raise ScenarioFormatError(f"unknown directive {keyword!r}")
        except (IndexError, ValueError) as exc:
            if isinstance(exc, ScenarioFormatError):
                raise
            raise ScenarioFormatError(f"line {line_no}: cannot parse {raw!r}") from exc

    if grid_spec is None:
        raise ScenarioFormatError("scenario is missing a grid directive")
    if not vehicle_poses:
        raise ScenarioFormatError("scenario is missing a vehicle directive")
    if not sensor_poses:
        raise ScenarioFormatError("scenario is missing sensor directives")

    def take(key: str, default: float) -> float:
        return params.pop(key, default)

    thresholds = ClassifyThresholds(
        max_uncertainty=take("max_uncertainty", 0.3),
        free_max=take("free_max", 0.2),
        occupied_min=take("occupied_min", 0.8),
    )
    assess = AssessParams(
        roi_radius=take("roi_radius", 15.0),
        alert_threshold=take("alert_threshold", 0.1),
    )
    planner = PlannerParams(
        base_cost=take("base_cost", 1.0),
        conflict_penalty=take("conflict_penalty", 5.0),
        conflict_block_distance=take("conflict_block_distance", 5.0),
        turning_radius=take("turning_radius", 4.0),
        step_length=take("step_length", 1.0),
        heading_bins=int(take("heading_bins", 16)),
        goal_position_tol=take("goal_position_tol", 0.5),
        goal_heading_tol=math.radians(take("goal_heading_tol_deg", 15.0)),
    )
    model = InverseSensorModel(
        occupied_mass=take("occupied_mass", 0.6),
        free_mass=take("free_mass", 0.4),
    )
    sensor_common = dict(
        channels=int(take("channels", 32)),
        points_per_second=int(take("points_per_second", 1_310_720)),
        rotation_rate=take("rotation_rate", 10.0),
        max_range=take("max_range", 30.0),
        min_range=take("min_range", 2.0),
    )
    sensors = tuple(SensorConfig(mount_pose=p, **sensor_common) for p in sensor_poses)

    return Scenario(
        name=name,
        world=World(tuple(segments), tuple(boxes)),
        grid=grid_spec,
        vehicle_poses=tuple(vehicle_poses),
        goal=goal,
        sensors=sensors,
        error=error,
        thresholds=thresholds,
        assess=assess,
        planner=planner,
        sensor_model=model,
        dilation_radius=take("dilation_radius", 1.5),
        base_rate=take("base_rate", 0.5),
        noise_sigma=take("noise_sigma", 0.0),
        goal_search_radius=take("goal_search_radius", 5.0),
        replay_advance=take("replay_advance", 1.0),
    )


def load_scenario(path) -> Scenario:
    with open(path) as handle:
        text = handle.read()
    stem = os.path.splitext(os.path.basename(str(path)))[0]
    return parse_scenario(text, fallback_name=stem)


def scenario_digest(path) -> str:
    with open(path, "rb") as handle:
        return hashlib.sha256(handle.read()).hexdigest()


BUNDLED_SCENARIOS = (
    "conflict_parking",
    "narrow_passage",
    "picket_fence",
    "urban_1",
    "urban_2",
    "urban_3",
    "highway_1",
    "highway_2",
)

SWEEP_WORLDS = ("urban_1", "urban_2", "urban_3", "highway_1", "highway_2")


def bundled_scenario_path(name: str):
    if name not in BUNDLED_SCENARIOS:
        raise KeyError(f"unknown bundled scenario {name!r}; have {BUNDLED_SCENARIOS}")
    return resources.files("evigrid.scenarios").joinpath(f"{name}.txt")


def bundled_scenario(name: str) -> Scenario:
    text = bundled_scenario_path(name).read_text()
    return parse_scenario(text, fallback_name=name)

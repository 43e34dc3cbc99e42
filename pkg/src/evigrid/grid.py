"""Evidential occupancy grids and LiDAR scan integration.

Grids store per-cell evidence counts (positive evidence for "occupied",
negative evidence for "free") rather than opinion tuples directly; the
opinion view is derived on demand.  Storing evidence makes per-cell
cumulative fusion a plain addition and keeps whole-grid operations
vectorized.

Scan integration walks every beam through the grid with a 4-connected
supercover line step, so a beam can never jump diagonally across a cell
it geometrically crosses.  Cells traversed by a beam collect free
evidence, the cell containing a hit collects occupied evidence, and
nothing closer to the sensor than the beam's minimum range is touched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .geometry import Pose, compose
from .opinions import (
    DEFAULT_BASE_RATE,
    DEFAULT_PRIOR_WEIGHT,
    BinomialOpinion,
    EvidencePair,
    from_evidence,
)
from .pnm import write_pgm

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def decorate(func):
            return func

        return decorate


_MAX_CELLS = 100_000_000


class GridSpecMismatchError(ValueError):
    """Raised when combining grids whose geometry or priors differ."""


class OutOfBoundsError(ValueError):
    """Raised when a pose that must lie inside the grid does not."""


@dataclass(frozen=True)
class GridSpec:
    """Geometry of a regular grid: cell size, cell counts, world origin.

    ``origin_x``/``origin_y`` are the world coordinates of the lower-left
    corner of cell (0, 0).  Cell (ix, iy) covers the half-open square
    [origin + i * resolution, origin + (i + 1) * resolution).
    """

    resolution: float
    width: int
    height: int
    origin_x: float = 0.0
    origin_y: float = 0.0

    def __post_init__(self):
        if not (isinstance(self.resolution, (int, float)) and self.resolution > 0.0):
            raise ValueError(f"resolution must be positive, got {self.resolution!r}")
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"grid must have positive extent, got {self.width}x{self.height}")
        if self.width * self.height > _MAX_CELLS:
            raise ValueError(f"grid of {self.width}x{self.height} cells exceeds the size cap")

    @property
    def n_cells(self) -> int:
        return self.width * self.height

    @property
    def extent(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) of the covered rectangle."""
        return (
            self.origin_x,
            self.origin_y,
            self.origin_x + self.width * self.resolution,
            self.origin_y + self.height * self.resolution,
        )

    def contains(self, x: float, y: float) -> bool:
        xmin, ymin, xmax, ymax = self.extent
        return xmin <= x < xmax and ymin <= y < ymax

    def cell_index(self, x: float, y: float) -> tuple[int, int] | None:
        """Cell (ix, iy) containing the point, or None when outside."""
        ix = int(math.floor((x - self.origin_x) / self.resolution))
        iy = int(math.floor((y - self.origin_y) / self.resolution))
        if 0 <= ix < self.width and 0 <= iy < self.height:
            return ix, iy
        return None

    def cell_center(self, ix: int, iy: int) -> tuple[float, float]:
        return (
            self.origin_x + (ix + 0.5) * self.resolution,
            self.origin_y + (iy + 0.5) * self.resolution,
        )


@lru_cache(maxsize=32)
def cell_center_arrays(spec: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """(H, W) arrays of cell center x and y coordinates."""
    xs = spec.origin_x + (np.arange(spec.width) + 0.5) * spec.resolution
    ys = spec.origin_y + (np.arange(spec.height) + 0.5) * spec.resolution
    cx, cy = np.meshgrid(xs, ys)
    return cx, cy


@dataclass(frozen=True)
class InverseSensorModel:
    """Evidence masses a single beam deposits in the grid.

    A hit supports "occupied" with belief mass ``occupied_mass`` and a
    traversal supports "free" with disbelief mass ``free_mass``; the rest
    of each single-beam opinion stays uncertain.
    """

    occupied_mass: float = 0.6
    free_mass: float = 0.4
    prior_weight: float = DEFAULT_PRIOR_WEIGHT

    def __post_init__(self):
        for name in ("occupied_mass", "free_mass"):
            value = getattr(self, name)
            if not (0.0 < value < 1.0):
                raise ValueError(f"{name} must lie strictly inside (0, 1), got {value}")
        if self.prior_weight <= 0.0:
            raise ValueError(f"prior_weight must be positive, got {self.prior_weight}")

    @property
    def hit_evidence(self) -> float:
        """Occupied evidence one hit adds: W * b / u with d = 0."""
        return self.prior_weight * self.occupied_mass / (1.0 - self.occupied_mass)

    @property
    def free_evidence(self) -> float:
        """Free evidence one traversal adds: W * d / u with b = 0."""
        return self.prior_weight * self.free_mass / (1.0 - self.free_mass)


@dataclass(frozen=True)
class Scan:
    """One LiDAR revolution.

    ``sensor_pose`` is the mount pose in the vehicle frame as believed by
    the mapping system; when a calibration error is injected the beams
    were physically cast from somewhere else, which is exactly what the
    map cannot know.  ``azimuths`` are beam directions in the sensor
    frame, ``ranges`` the measured distances, and ``hits`` flags whether
    the beam returned (False means it ran out at ``max_range``).
    """

    sensor_pose: Pose
    azimuths: np.ndarray
    ranges: np.ndarray
    hits: np.ndarray
    max_range: float
    min_range: float = 0.0

    def __post_init__(self):
        az = np.asarray(self.azimuths, dtype=np.float64)
        rg = np.asarray(self.ranges, dtype=np.float64)
        ht = np.asarray(self.hits, dtype=np.bool_)
        if not (az.shape == rg.shape == ht.shape) or az.ndim != 1:
            raise ValueError("azimuths, ranges, and hits must be 1-d arrays of equal length")
        if az.size and (az.min() < -math.pi or az.max() >= math.pi):
            raise ValueError("azimuths must lie in [-pi, pi)")
        if not (0.0 <= self.min_range < self.max_range):
            raise ValueError(
                f"need 0 <= min_range < max_range, got {self.min_range}, {self.max_range}"
            )
        if rg.size and (rg.min() <= 0.0 or rg.max() > self.max_range + 1e-9):
            raise ValueError("ranges must lie in (0, max_range]")
        if np.any(~ht & (np.abs(rg - self.max_range) > 1e-9)):
            raise ValueError("no-return beams must carry range == max_range")
        object.__setattr__(self, "azimuths", az)
        object.__setattr__(self, "ranges", rg)
        object.__setattr__(self, "hits", ht)

    def __len__(self) -> int:
        return int(self.azimuths.size)


@dataclass
class EvidentialGrid:
    """Dense grid of binomial opinions stored as evidence counts.

    ``occ`` and ``fre`` are (height, width) float arrays of accumulated
    occupied/free evidence; cell (ix, iy) lives at ``[iy, ix]``.  All
    cells share one base rate and prior weight.  Treat instances as
    values: operations return new grids instead of mutating inputs.
    """

    spec: GridSpec
    occ: np.ndarray
    fre: np.ndarray
    base_rate: float = DEFAULT_BASE_RATE
    prior_weight: float = DEFAULT_PRIOR_WEIGHT

    def __post_init__(self):
        shape = (self.spec.height, self.spec.width)
        if self.occ.shape != shape or self.fre.shape != shape:
            raise GridSpecMismatchError(
                f"evidence arrays must have shape {shape}, got {self.occ.shape} and {self.fre.shape}"
            )
        if not (0.0 <= self.base_rate <= 1.0):
            raise ValueError(f"base_rate must lie in [0, 1], got {self.base_rate}")
        if self.prior_weight <= 0.0:
            raise ValueError(f"prior_weight must be positive, got {self.prior_weight}")

    @classmethod
    def vacuous(
        cls,
        spec: GridSpec,
        base_rate: float = DEFAULT_BASE_RATE,
        prior_weight: float = DEFAULT_PRIOR_WEIGHT,
    ) -> "EvidentialGrid":
        shape = (spec.height, spec.width)
        return cls(spec, np.zeros(shape), np.zeros(shape), base_rate, prior_weight)

    def copy(self) -> "EvidentialGrid":
        return EvidentialGrid(
            self.spec, self.occ.copy(), self.fre.copy(), self.base_rate, self.prior_weight
        )

    def opinion_at(self, ix: int, iy: int) -> BinomialOpinion:
        if not (0 <= ix < self.spec.width and 0 <= iy < self.spec.height):
            raise OutOfBoundsError(f"cell ({ix}, {iy}) outside {self.spec.width}x{self.spec.height}")
        ev = EvidencePair(float(self.occ[iy, ix]), float(self.fre[iy, ix]))
        return from_evidence(ev, self.base_rate, self.prior_weight)

    def _total(self) -> np.ndarray:
        return self.prior_weight + self.occ + self.fre

    def belief(self) -> np.ndarray:
        return self.occ / self._total()

    def disbelief(self) -> np.ndarray:
        return self.fre / self._total()

    def uncertainty(self) -> np.ndarray:
        return self.prior_weight / self._total()

    def projected(self) -> np.ndarray:
        """Projected probability b + a * u per cell."""
        return (self.occ + self.base_rate * self.prior_weight) / self._total()


def fuse_grids(first: EvidentialGrid, second: EvidentialGrid) -> EvidentialGrid:
    """Cell-wise cumulative fusion of two grids over the same geometry."""
    if first.spec != second.spec:
        raise GridSpecMismatchError(f"grid specs differ: {first.spec} vs {second.spec}")
    if abs(first.base_rate - second.base_rate) > 1e-9 or first.prior_weight != second.prior_weight:
        raise GridSpecMismatchError("grids must share base rate and prior weight to fuse")
    return EvidentialGrid(
        first.spec,
        first.occ + second.occ,
        first.fre + second.fre,
        first.base_rate,
        first.prior_weight,
    )


# --- beam traversal -------------------------------------------------------
#
# The kernel below is written once and compiled with numba when available.
# It must stay importable as plain Python so tests can compare both paths.


def _integrate_beams_impl(
    occ, fre, origin_x, origin_y, resolution, width, height,
    sensor_x, sensor_y, heading, azimuths, ranges, hits,
    min_range, hit_evidence, free_evidence,
):
    xmin = origin_x
    ymin = origin_y
    xmax = origin_x + width * resolution
    ymax = origin_y + height * resolution
    for k in range(azimuths.shape[0]):
        beam_range = ranges[k]
        if beam_range <= min_range:
            continue
        angle = heading + azimuths[k]
        dx = math.cos(angle)
        dy = math.sin(angle)
        # Clip the active interval [t0, t1] along the beam to the grid.
        t0 = min_range
        t1 = beam_range
        inside = True
        if dx != 0.0:
            ta = (xmin - sensor_x) / dx
            tb = (xmax - sensor_x) / dx
            if ta > tb:
                ta, tb = tb, ta
            if ta > t0:
                t0 = ta
            if tb < t1:
                t1 = tb
        elif sensor_x < xmin or sensor_x >= xmax:
            inside = False
        if dy != 0.0:
            ta = (ymin - sensor_y) / dy
            tb = (ymax - sensor_y) / dy
            if ta > tb:
                ta, tb = tb, ta
            if ta > t0:
                t0 = ta
            if tb < t1:
                t1 = tb
        elif sensor_y < ymin or sensor_y >= ymax:
            inside = False
        if not inside or t1 <= t0:
            continue
        hit_inside = hits[k] and t1 >= beam_range - 1e-9

        px = sensor_x + t0 * dx
        py = sensor_y + t0 * dy
        qx = sensor_x + t1 * dx
        qy = sensor_y + t1 * dy
        ix = int(math.floor((px - origin_x) / resolution))
        iy = int(math.floor((py - origin_y) / resolution))
        ex = int(math.floor((qx - origin_x) / resolution))
        ey = int(math.floor((qy - origin_y) / resolution))
        if ix < 0:
            ix = 0
        if ix > width - 1:
            ix = width - 1
        if iy < 0:
            iy = 0
        if iy > height - 1:
            iy = height - 1
        if ex < 0:
            ex = 0
        if ex > width - 1:
            ex = width - 1
        if ey < 0:
            ey = 0
        if ey > height - 1:
            ey = height - 1

        # 4-connected supercover walk: one axis advances per step, ties
        # resolved toward x, so no diagonal cell is ever skipped.
        if dx > 0.0:
            step_x = 1
            t_max_x = t0 + (origin_x + (ix + 1) * resolution - px) / dx
            t_delta_x = resolution / dx
        elif dx < 0.0:
            step_x = -1
            t_max_x = t0 + (origin_x + ix * resolution - px) / dx
            t_delta_x = -resolution / dx
        else:
            step_x = 0
            t_max_x = math.inf
            t_delta_x = math.inf
        if dy > 0.0:
            step_y = 1
            t_max_y = t0 + (origin_y + (iy + 1) * resolution - py) / dy
            t_delta_y = resolution / dy
        elif dy < 0.0:
            step_y = -1
            t_max_y = t0 + (origin_y + iy * resolution - py) / dy
            t_delta_y = -resolution / dy
        else:
            step_y = 0
            t_max_y = math.inf
            t_delta_y = math.inf

        n_steps = abs(ex - ix) + abs(ey - iy)
        for _ in range(n_steps):
            if 0 <= ix < width and 0 <= iy < height:
                fre[iy, ix] += free_evidence
            if t_max_x <= t_max_y:
                ix += step_x
                t_max_x += t_delta_x
            else:
                iy += step_y
                t_max_y += t_delta_y
        if 0 <= ix < width and 0 <= iy < height:
            if hit_inside:
                occ[iy, ix] += hit_evidence
            else:
                fre[iy, ix] += free_evidence


if _HAVE_NUMBA:
    _integrate_beams = njit(cache=True)(_integrate_beams_impl)
else:  # pragma: no cover
    _integrate_beams = _integrate_beams_impl


def supercover_cells(
    spec: GridSpec, x0: float, y0: float, x1: float, y1: float
) -> list[tuple[int, int]]:
    """Cells crossed by the segment (x0, y0) -> (x1, y1), 4-connected.

    Both endpoints must lie inside the grid.  Consecutive cells differ in
    exactly one index, so the chain never jumps across a diagonal.
    """
    if not spec.contains(x0, y0) or not spec.contains(x1, y1):
        raise OutOfBoundsError("segment endpoints must lie inside the grid")
    res = spec.resolution
    ix = int(math.floor((x0 - spec.origin_x) / res))
    iy = int(math.floor((y0 - spec.origin_y) / res))
    ex = int(math.floor((x1 - spec.origin_x) / res))
    ey = int(math.floor((y1 - spec.origin_y) / res))
    dx = x1 - x0
    dy = y1 - y0
    if dx > 0.0:
        step_x, t_max_x, t_delta_x = 1, (spec.origin_x + (ix + 1) * res - x0) / dx, res / dx
    elif dx < 0.0:
        step_x, t_max_x, t_delta_x = -1, (spec.origin_x + ix * res - x0) / dx, -res / dx
    else:
        step_x, t_max_x, t_delta_x = 0, math.inf, math.inf
    if dy > 0.0:
        step_y, t_max_y, t_delta_y = 1, (spec.origin_y + (iy + 1) * res - y0) / dy, res / dy
    elif dy < 0.0:
        step_y, t_max_y, t_delta_y = -1, (spec.origin_y + iy * res - y0) / dy, -res / dy
    else:
        step_y, t_max_y, t_delta_y = 0, math.inf, math.inf

    cells = [(ix, iy)]
    for _ in range(abs(ex - ix) + abs(ey - iy)):
        if t_max_x <= t_max_y:
            ix += step_x
            t_max_x += t_delta_x
        else:
            iy += step_y
            t_max_y += t_delta_y
        cells.append((ix, iy))
    return cells


def integrate_scan(
    grid: EvidentialGrid,
    scan: Scan,
    model: InverseSensorModel | None = None,
    vehicle_pose: Pose | None = None,
) -> EvidentialGrid:
    """Fuse one scan into the grid and return the updated grid.

    The believed sensor pose is ``vehicle_pose`` composed with the scan's
    mount pose (vehicle at the world origin when omitted).  Beams are
    clipped to the grid, so the sensor origin may lie outside it; hits
    that fall outside contribute only the free evidence along the
    clipped part.  Cells closer than the scan's minimum range collect
    nothing, which leaves the usual unknown ring around the vehicle.
    """
    if model is None:
        model = InverseSensorModel(prior_weight=grid.prior_weight)
    if model.prior_weight != grid.prior_weight:
        raise GridSpecMismatchError("sensor model and grid disagree on prior weight")
    if vehicle_pose is None:
        vehicle_pose = Pose(0.0, 0.0, 0.0)
    world_pose = compose(vehicle_pose, scan.sensor_pose)
    out = grid.copy()
    _integrate_beams(
        out.occ, out.fre,
        grid.spec.origin_x, grid.spec.origin_y, grid.spec.resolution,
        grid.spec.width, grid.spec.height,
        world_pose.x, world_pose.y, world_pose.theta,
        scan.azimuths, scan.ranges, scan.hits,
        scan.min_range, model.hit_evidence, model.free_evidence,
    )
    return out


_CHANNELS = ("belief", "disbelief", "uncertainty", "projected")


def write_channel_pgm(grid: EvidentialGrid, channel: str, path) -> None:
    """Write one scalar channel as a plain (P2) graymap, 0..1 -> 0..255.

    Row 0 of the image is the top of the map (highest y), so the file
    views like a conventional bird's eye image.
    """
    if channel not in _CHANNELS:
        raise ValueError(f"unknown channel {channel!r}, expected one of {_CHANNELS}")
    values = getattr(grid, channel)()
    scaled = np.rint(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8)
    spec = grid.spec
    comment = (
        f"channel={channel} resolution={spec.resolution} width={spec.width} "
        f"height={spec.height} origin=({spec.origin_x},{spec.origin_y}) "
        f"base_rate={grid.base_rate}"
    )
    write_pgm(path, scaled[::-1, :], comment)

"""Online self-assessment from the categorized grid.

The degradation score alpha is the distance-weighted share of conflict
cells among all alerting cells (conflict plus occupied) around the
vehicle.  Nearby cells weigh more, cells at or beyond the region of
interest weigh nothing.  A map full of ordinary obstacles scores near
zero; a map whose obstacles are mostly self-contradictory scores near
one, which indicates the perception chain rather than the world has a
problem.  When neither conflict nor occupied cells exist inside the
region the score is undefined (None), not zero: an empty map earns no
clean bill of health.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .classify import CategoryGrid, CellCategory
from .geometry import Pose
from .grid import cell_center_arrays


class PoseOutOfBoundsError(ValueError):
    """Raised when a pose that must lie on the grid does not."""


@dataclass(frozen=True)
class AssessParams:
    """Region of interest and alerting threshold for the score."""

    roi_radius: float = 15.0
    alert_threshold: float = 0.1

    def __post_init__(self):
        if self.roi_radius <= 0.0:
            raise ValueError(f"roi_radius must be positive, got {self.roi_radius}")
        if not (0.0 < self.alert_threshold < 1.0):
            raise ValueError(
                f"alert_threshold must lie strictly inside (0, 1), got {self.alert_threshold}"
            )


class Action(Enum):
    NOMINAL = "nominal"
    ALERT_AND_STOP = "alert_and_stop"
    ALERT_AND_PROCEED = "alert_and_proceed"


class PoseFlag(Enum):
    CLEAR = "clear"
    CONFLICT = "conflict"
    BLOCKED = "blocked"


@dataclass(frozen=True)
class Assessment:
    """Score plus the weighted masses it was computed from."""

    alpha: float | None
    conflict_mass: float
    occupied_mass: float
    action: Action


def weight(distance: float, roi_radius: float) -> float:
    """Linear distance weight: 1 at the vehicle, 0 at and beyond the ROI."""
    if distance < 0.0:
        raise ValueError(f"distance must be >= 0, got {distance}")
    if distance >= roi_radius:
        return 0.0
    return (roi_radius - distance) / roi_radius


def weighted_masses(
    grid: CategoryGrid, ego: Pose, params: AssessParams
) -> tuple[float, float]:
    """Distance-weighted conflict and occupied cell masses around ego."""
    cx, cy = cell_center_arrays(grid.spec)
    dist = np.hypot(cx - ego.x, cy - ego.y)
    weights = np.clip((params.roi_radius - dist) / params.roi_radius, 0.0, None)
    conflict = float(weights[grid.cells == int(CellCategory.CONFLICT)].sum())
    occupied = float(weights[grid.cells == int(CellCategory.OCCUPIED)].sum())
    return conflict, occupied


def degradation_score(grid: CategoryGrid, ego: Pose, params: AssessParams) -> float | None:
    """Share of weighted conflict mass among alerting cells, or None.

    None means undefined: no conflict and no occupied cell carries any
    weight inside the region of interest.
    """
    conflict, occupied = weighted_masses(grid, ego, params)
    total = conflict + occupied
    if total == 0.0:
        return None
    return conflict / total


def recommend_action(
    alpha: float | None,
    params: AssessParams,
    path_in_conflict: bool,
    permit_proceed: bool = False,
) -> Action:
    """Map a score to an action.

    Scores at or below the alert threshold (and undefined scores) are
    nominal.  Above it, the vehicle must stop if its planned path runs
    through conflicting cells, unless the mission explicitly permits
    proceeding at degraded confidence; a path clear of conflicts may
    proceed with the alert raised.
    """
    if alpha is None or alpha <= params.alert_threshold:
        return Action.NOMINAL
    if not path_in_conflict or permit_proceed:
        return Action.ALERT_AND_PROCEED
    return Action.ALERT_AND_STOP


def evaluate_path(poses: Sequence[Pose], grid: CategoryGrid) -> list[PoseFlag]:
    """Flag each pose by the category of the cell under it."""
    flags = []
    for i, pose in enumerate(poses):
        cell = grid.spec.cell_index(pose.x, pose.y)
        if cell is None:
            raise PoseOutOfBoundsError(
                f"path pose {i} at ({pose.x:.3f}, {pose.y:.3f}) lies outside the grid"
            )
        category = grid.category_at(*cell)
        if category == CellCategory.OCCUPIED:
            flags.append(PoseFlag.BLOCKED)
        elif category == CellCategory.CONFLICT:
            flags.append(PoseFlag.CONFLICT)
        else:
            flags.append(PoseFlag.CLEAR)
    return flags


def assess_grid(
    grid: CategoryGrid,
    ego: Pose,
    params: AssessParams,
    path_in_conflict: bool = False,
    permit_proceed: bool = False,
) -> Assessment:
    """Score the grid and bundle the recommended action."""
    conflict, occupied = weighted_masses(grid, ego, params)
    total = conflict + occupied
    alpha = None if total == 0.0 else conflict / total
    action = recommend_action(alpha, params, path_in_conflict, permit_proceed)
    return Assessment(alpha, conflict, occupied, action)

"""Conflict-aware lattice planner over a categorized grid.

The planner searches a forward-motion lattice: states are (cell x,
cell y, heading bin) and the three primitives (straight, left arc,
right arc) always start from the state's canonical pose, the cell
center with the bin-center heading.  That makes every edge a pure
function of its source state, so an exhaustive shortest-path search
over the same lattice must agree with A* exactly; the heuristic is
straight-line distance times the base cost, shortened by the goal
position tolerance so it never overestimates.

Conflict cells are traversable but cost extra per meter, so paths
divert around conflicting regions when a reasonable detour exists and
cut through when it does not.  Occupied cells always block.  Before
each search, conflict cells close to the vehicle are promoted to
occupied: an unresolved contradiction right next to the vehicle is not
worth the gamble, and the promotion is what forces replanning as the
vehicle closes in on conflicting regions.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from .assess import PoseFlag, evaluate_path
from .classify import CategoryGrid, CellCategory, dilate
from .geometry import Pose, wrap_angle
from .grid import OutOfBoundsError, cell_center_arrays

_SAMPLES_PER_STEP = 4


class StartBlockedError(ValueError):
    """Raised when the start cell is occupied in the effective grid."""


@dataclass(frozen=True)
class PlannerParams:
    base_cost: float = 1.0            # cost per traveled meter
    conflict_penalty: float = 5.0     # extra cost per meter on conflict cells
    conflict_block_distance: float = 5.0  # conflicts closer than this block
    turning_radius: float = 4.0       # [m]
    step_length: float = 1.0          # [m] per primitive
    heading_bins: int = 16
    goal_position_tol: float = 0.5    # [m]
    goal_heading_tol: float = math.radians(15.0)

    def __post_init__(self):
        if self.base_cost <= 0.0:
            raise ValueError(f"base_cost must be positive, got {self.base_cost}")
        if self.conflict_penalty < 0.0:
            raise ValueError(f"conflict_penalty must be >= 0, got {self.conflict_penalty}")
        if self.conflict_block_distance < 0.0:
            raise ValueError(
                f"conflict_block_distance must be >= 0, got {self.conflict_block_distance}"
            )
        if self.turning_radius <= 0.0 or self.step_length <= 0.0:
            raise ValueError("turning_radius and step_length must be positive")
        if self.heading_bins < 8:
            raise ValueError(f"need at least 8 heading bins, got {self.heading_bins}")
        if self.goal_position_tol <= 0.0 or self.goal_heading_tol <= 0.0:
            raise ValueError("goal tolerances must be positive")


@dataclass(frozen=True)
class Path:
    """Planned path: poses with per-pose conflict flags and running cost."""

    poses: tuple[Pose, ...]
    conflict_flags: tuple[bool, ...]
    costs: tuple[float, ...]
    total_cost: float

    def __post_init__(self):
        if not (len(self.poses) == len(self.conflict_flags) == len(self.costs)):
            raise ValueError("poses, flags, and costs must have equal length")

    def __len__(self) -> int:
        return len(self.poses)


class PlanStatus(Enum):
    SUCCESS = "success"
    GOAL_SHIFTED = "goal_shifted"
    UNREACHABLE = "unreachable"


@dataclass(frozen=True)
class PlanOutcome:
    status: PlanStatus
    path: Path | None
    goal: Pose | None


def apply_proximity_rule(grid: CategoryGrid, ego: Pose, distance: float) -> CategoryGrid:
    """Promote conflict cells strictly within ``distance`` of ego to occupied."""
    if distance <= 0.0:
        return grid.copy()
    cx, cy = cell_center_arrays(grid.spec)
    near = np.hypot(cx - ego.x, cy - ego.y) < distance
    cells = grid.cells.copy()
    cells[(cells == int(CellCategory.CONFLICT)) & near] = int(CellCategory.OCCUPIED)
    return CategoryGrid(grid.spec, cells)


def shift_goal(goal: Pose, grid: CategoryGrid, search_radius: float) -> Pose | None:
    """Nearest non-occupied cell center to the goal, keeping its heading.

    Ties on distance are broken by the smaller bearing deviation from the
    goal heading, then by cell index.  Returns None when no candidate
    exists within the search radius.
    """
    cell = grid.spec.cell_index(goal.x, goal.y)
    if cell is not None and grid.cells[cell[1], cell[0]] != int(CellCategory.OCCUPIED):
        return goal
    cx, cy = cell_center_arrays(grid.spec)
    dist = np.hypot(cx - goal.x, cy - goal.y)
    open_enough = (grid.cells != int(CellCategory.OCCUPIED)) & (dist <= search_radius)
    iys, ixs = np.nonzero(open_enough)
    if iys.size == 0:
        return None
    best = None
    for iy, ix in zip(iys.tolist(), ixs.tolist()):
        d = round(float(dist[iy, ix]), 9)
        bearing = math.atan2(float(cy[iy, ix]) - goal.y, float(cx[iy, ix]) - goal.x)
        deviation = round(abs(wrap_angle(bearing - goal.theta)), 9)
        key = (d, deviation, ix, iy)
        if best is None or key < best[0]:
            best = (key, ix, iy)
    _, ix, iy = best
    x, y = grid.spec.cell_center(ix, iy)
    return Pose(x, y, goal.theta)


class Lattice:
    """State lattice over a categorized grid.

    Primitive geometry depends only on the heading bin, so sample
    offsets and cell index deltas are tabulated once per (bin, turn)
    and every expansion is a table lookup plus category checks.
    """

    def __init__(self, grid: CategoryGrid, params: PlannerParams):
        self.grid = grid
        self.spec = grid.spec
        self.params = params
        self.cells = grid.cells
        self.bin_width = 2.0 * math.pi / params.heading_bins
        self._table = self._build_table()

    def _build_table(self):
        p = self.params
        res = self.spec.resolution
        length = p.step_length
        table = []
        for k in range(p.heading_bins):
            theta0 = -math.pi + (k + 0.5) * self.bin_width
            prims = []
            for turn in (0.0, length / p.turning_radius, -length / p.turning_radius):
                offsets = []
                deltas = []
                for i in range(1, _SAMPLES_PER_STEP + 1):
                    s = length * i / _SAMPLES_PER_STEP
                    theta = theta0 + turn * (i / _SAMPLES_PER_STEP)
                    if turn == 0.0:
                        ox = s * math.cos(theta0)
                        oy = s * math.sin(theta0)
                    else:
                        radius = length / abs(turn)
                        sign = 1.0 if turn > 0.0 else -1.0
                        # rotate about the turn center located sideways
                        ox = sign * radius * (math.sin(theta) - math.sin(theta0))
                        oy = sign * radius * (math.cos(theta0) - math.cos(theta))
                    offsets.append((ox, oy, wrap_angle(theta)))
                    deltas.append(
                        (
                            int(math.floor(0.5 + ox / res)),
                            int(math.floor(0.5 + oy / res)),
                        )
                    )
                next_bin = self.heading_bin(theta0 + turn)
                prims.append((tuple(offsets), tuple(deltas), next_bin))
            table.append(tuple(prims))
        return table

    def heading_bin(self, theta: float) -> int:
        return int(math.floor((wrap_angle(theta) + math.pi) / self.bin_width)) % self.params.heading_bins

    def bin_heading(self, k: int) -> float:
        return wrap_angle(-math.pi + (k + 0.5) * self.bin_width)

    def state_of(self, pose: Pose) -> tuple[int, int, int]:
        cell = self.spec.cell_index(pose.x, pose.y)
        if cell is None:
            raise OutOfBoundsError(f"pose ({pose.x:.3f}, {pose.y:.3f}) lies outside the grid")
        return (cell[0], cell[1], self.heading_bin(pose.theta))

    def pose_of(self, state: tuple[int, int, int]) -> Pose:
        x, y = self.spec.cell_center(state[0], state[1])
        return Pose(x, y, self.bin_heading(state[2]))

    def category(self, ix: int, iy: int) -> int:
        return int(self.cells[iy, ix])

    def expand(self, state: tuple[int, int, int]):
        """Yield (next_state, edge_cost, primitive_index, sample_flags)."""
        ix, iy, k = state
        p = self.params
        width, height = self.spec.width, self.spec.height
        occupied = int(CellCategory.OCCUPIED)
        conflict = int(CellCategory.CONFLICT)
        seg = p.step_length / _SAMPLES_PER_STEP
        out = []
        for prim_index, (offsets, deltas, next_bin) in enumerate(self._table[k]):
            cost = 0.0
            flags = []
            ok = True
            for dix, diy in deltas:
                jx, jy = ix + dix, iy + diy
                if not (0 <= jx < width and 0 <= jy < height):
                    ok = False
                    break
                category = self.cells[jy, jx]
                if category == occupied:
                    ok = False
                    break
                on_conflict = category == conflict
                flags.append(bool(on_conflict))
                cost += seg * (p.base_cost + (p.conflict_penalty if on_conflict else 0.0))
            if not ok:
                continue
            last = deltas[-1]
            out.append(((ix + last[0], iy + last[1], next_bin), cost, prim_index, tuple(flags)))
        return out

    def edge_poses(self, state: tuple[int, int, int], prim_index: int) -> tuple[Pose, ...]:
        base = self.pose_of(state)
        offsets = self._table[state[2]][prim_index][0]
        return tuple(Pose(base.x + ox, base.y + oy, theta) for ox, oy, theta in offsets)


def _goal_test(params: PlannerParams, goal: Pose) -> Callable[[Pose], bool]:
    def test(pose: Pose) -> bool:
        if math.hypot(pose.x - goal.x, pose.y - goal.y) > params.goal_position_tol:
            return False
        return abs(wrap_angle(pose.theta - goal.theta)) <= params.goal_heading_tol

    return test


def _search(lattice: Lattice, start: Pose, goal: Pose) -> Path | None:
    params = lattice.params
    start_state = lattice.state_of(start)
    at_goal = _goal_test(params, goal)

    def heuristic(state) -> float:
        pose = lattice.pose_of(state)
        slack = math.hypot(pose.x - goal.x, pose.y - goal.y) - params.goal_position_tol
        return params.base_cost * slack if slack > 0.0 else 0.0

    g_best: dict[tuple[int, int, int], float] = {start_state: 0.0}
    parents: dict[tuple, tuple] = {}
    h0 = heuristic(start_state)
    heap = [(h0, h0, 0, 0.0, start_state)]
    counter = 1
    goal_state = None
    while heap:
        _f, _h, _, g, state = heapq.heappop(heap)
        if g > g_best.get(state, math.inf):
            continue
        # test the pose the path will actually emit: the raw start pose
        # for the start state, else the arrival sample of the best edge
        # (arc endpoints sit between heading bins, so the canonical bin
        # pose can pass the heading tolerance while the emitted pose
        # does not)
        if state == start_state:
            pose = start
        else:
            prev, prim_index, _flags, _cost = parents[state]
            pose = lattice.edge_poses(prev, prim_index)[-1]
        if at_goal(pose):
            goal_state = state
            break
        for next_state, cost, prim_index, flags in lattice.expand(state):
            candidate = g + cost
            if candidate < g_best.get(next_state, math.inf):
                g_best[next_state] = candidate
                parents[next_state] = (state, prim_index, flags, cost)
                nh = heuristic(next_state)
                heapq.heappush(heap, (candidate + nh, nh, counter, candidate, next_state))
                counter += 1
    if goal_state is None:
        return None

    # walk parents back to the start, then emit sampled poses forward
    chain = []
    state = goal_state
    while state != start_state:
        prev, prim_index, flags, cost = parents[state]
        chain.append((prev, prim_index, flags, cost))
        state = prev
    chain.reverse()

    start_cell = lattice.state_of(start)
    start_flag = lattice.category(start_cell[0], start_cell[1]) == int(CellCategory.CONFLICT)
    poses = [start]
    flags_out = [start_flag]
    costs = [0.0]
    seg = params.step_length / _SAMPLES_PER_STEP
    running = 0.0
    for state, prim_index, flags, _cost in chain:
        for pose, flag in zip(lattice.edge_poses(state, prim_index), flags):
            running += seg * (params.base_cost + (params.conflict_penalty if flag else 0.0))
            poses.append(pose)
            flags_out.append(flag)
            costs.append(running)
    return Path(tuple(poses), tuple(flags_out), tuple(costs), g_best[goal_state])


def plan(
    start: Pose,
    goal: Pose,
    grid: CategoryGrid,
    params: PlannerParams,
    goal_search_radius: float = 5.0,
) -> PlanOutcome:
    """Plan from start to goal on a dilated category grid.

    The proximity rule is applied around the start pose first.  A goal
    on an occupied cell is shifted to the nearest open cell; a goal on a
    conflict cell is legitimate and simply yields flagged final poses.
    """
    effective = apply_proximity_rule(grid, start, params.conflict_block_distance)
    start_cell = effective.spec.cell_index(start.x, start.y)
    if start_cell is None:
        raise OutOfBoundsError(f"start pose ({start.x:.3f}, {start.y:.3f}) lies outside the grid")
    if effective.cells[start_cell[1], start_cell[0]] == int(CellCategory.OCCUPIED):
        raise StartBlockedError("start cell is occupied in the effective grid")
    if effective.spec.cell_index(goal.x, goal.y) is None:
        raise OutOfBoundsError(f"goal pose ({goal.x:.3f}, {goal.y:.3f}) lies outside the grid")

    target = shift_goal(goal, effective, goal_search_radius)
    if target is None:
        return PlanOutcome(PlanStatus.UNREACHABLE, None, None)
    shifted = (target.x, target.y) != (goal.x, goal.y)

    lattice = Lattice(effective, params)
    path = _search(lattice, start, target)
    if path is None:
        return PlanOutcome(PlanStatus.UNREACHABLE, None, target)
    status = PlanStatus.GOAL_SHIFTED if shifted else PlanStatus.SUCCESS
    return PlanOutcome(status, path, target)


@dataclass(frozen=True)
class ReplanStep:
    """One control step of the observe, validate, plan, advance loop."""

    index: int
    pose: Pose
    replanned: bool
    outcome: PlanOutcome | None
    conflict_poses: int
    blocked_poses: int
    goal_reached: bool


def _advance_along(
    path: Path,
    start_index: int,
    distance: float,
    stop: Callable[[Pose], bool] | None = None,
) -> int:
    """Index of the first pose at least ``distance`` along from start_index.

    A ``stop`` predicate halts the advance early so a goal region
    narrower than the step is not jumped over between landings.
    """
    traveled = 0.0
    index = start_index
    poses = path.poses
    while index + 1 < len(poses) and traveled < distance:
        a, b = poses[index], poses[index + 1]
        traveled += math.hypot(b.x - a.x, b.y - a.y)
        index += 1
        if stop is not None and stop(poses[index]):
            break
    return index

def replan_loop(
    start: Pose,
    goal: Pose,
    observe: Callable[[Pose], CategoryGrid],
    params: PlannerParams,
    dilation_radius: float = 1.5,
    advance: float = 1.0,
    goal_search_radius: float = 5.0,
    max_steps: int = 200,
) -> list[ReplanStep]:
    """Drive from start toward goal, replanning whenever the path degrades.

    ``observe`` maps the current vehicle pose to a fresh categorized
    (undilated) grid.  Each step the grid is dilated, the proximity rule
    is applied, the remaining path is revalidated against it, and the
    vehicle advances a fixed arc length along the current path.  The
    goal is re-shifted automatically by the planner when its cell turns
    occupied.  The returned trace ends when the goal region is reached,
    when planning fails, or after ``max_steps``.
    """
    steps: list[ReplanStep] = []
    pose = start
    current_goal = goal
    path: Path | None = None
    position = 0
    at_goal = _goal_test(params, current_goal)

    for index in range(max_steps):
        observed = observe(pose)
        dilated = dilate(observed, dilation_radius)
        effective = apply_proximity_rule(dilated, pose, params.conflict_block_distance)

        remaining = path.poses[position:] if path is not None else ()
        flags = evaluate_path(remaining, effective) if remaining else []
        blocked = sum(1 for f in flags if f == PoseFlag.BLOCKED)
        goal_cell = effective.spec.cell_index(current_goal.x, current_goal.y)
        goal_blocked = goal_cell is None or (
            effective.cells[goal_cell[1], goal_cell[0]] == int(CellCategory.OCCUPIED)
        )
        exhausted = path is not None and position >= len(path.poses) - 1

        outcome = None
        replanned = False
        creep_limit = None
        if path is None or blocked > 0 or goal_blocked or exhausted:
            replanned = True
            outcome = plan(pose, current_goal, dilated, params, goal_search_radius)
            if outcome.status == PlanStatus.UNREACHABLE:
                # A transient dead end: the proximity rule can wall off a
                # conflict-banded goal shortly before the goal cell itself
                # is promoted and shifted.  Keep the old path and creep to
                # the last pose before its first blocked one; abort only
                # when there is no room left to creep.
                first_blocked = next(
                    (i for i, f in enumerate(flags) if f == PoseFlag.BLOCKED), len(flags)
                )
                creep_limit = position + max(0, first_blocked - 1)
                if path is None or creep_limit <= position:
                    steps.append(ReplanStep(index, pose, True, outcome, 0, blocked, False))
                    return steps
            else:
                path = outcome.path
                position = 0
                if outcome.status == PlanStatus.GOAL_SHIFTED:
                    current_goal = outcome.goal
                    at_goal = _goal_test(params, current_goal)
                remaining = path.poses
            flags = evaluate_path(remaining, effective)
            blocked = sum(1 for f in flags if f == PoseFlag.BLOCKED)

        # conflict exposure is reported as planned: the flags frozen at
        # plan time, consumed as the path is walked (re-observation only
        # jitters them, while blocked detection must track the present)
        conflicts = sum(path.conflict_flags[position:]) if path is not None else 0
        reached = at_goal(pose)
        steps.append(ReplanStep(index, pose, replanned, outcome, conflicts, blocked, reached))
        if reached:
            return steps
        position = _advance_along(path, position, advance, stop=at_goal)
        if creep_limit is not None:
            position = min(position, creep_limit)
        pose = path.poses[position]
    return steps

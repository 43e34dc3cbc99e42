"""Lattice planner: proximity rule, goal shifting, optimality, replanning."""

import math
import pickle

import numpy as np
import pytest

from evigrid import (
    CellCategory,
    PlanStatus,
    PlannerParams,
    Pose,
    plan,
    replan_loop,
)
from evigrid.grid import OutOfBoundsError
from evigrid.planner import (
    StartBlockedError,
    _advance_along,
    apply_proximity_rule,
    shift_goal,
)

from conftest import category_field, paint_box
from lattice_oracle import exhaustive_best_cost, random_planning_world

NO_BLOCK = PlannerParams(conflict_block_distance=0.0)


def corridor(width_m=20.0, height_m=8.0, resolution=0.2):
    return category_field(
        int(round(width_m / resolution)), int(round(height_m / resolution)),
        resolution=resolution,
    )


# proximity rule


def test_proximity_rule_examples():
    grid = corridor()
    paint_box(grid, 2.9, 3.9, 3.1, 4.1, CellCategory.CONFLICT)   # about 3 m out
    paint_box(grid, 6.9, 3.9, 7.1, 4.1, CellCategory.CONFLICT)   # about 7 m out
    ego = Pose(0.1, 4.0, 0.0)

    untouched = apply_proximity_rule(grid, ego, 0.0)
    assert np.array_equal(untouched.cells, grid.cells)

    promoted = apply_proximity_rule(grid, ego, 5.0)
    near = grid.spec.cell_index(3.0, 4.0)
    far = grid.spec.cell_index(7.0, 4.0)
    assert promoted.category_at(*near) == CellCategory.OCCUPIED
    assert promoted.category_at(*far) == CellCategory.CONFLICT
    # the input grid is never mutated
    assert grid.category_at(*near) == CellCategory.CONFLICT


def test_proximity_rule_boundary_is_strict():
    grid = category_field(21, 21, resolution=1.0, origin=(-10.5, -10.5))
    grid.cells[10, 15] = int(CellCategory.CONFLICT)  # exactly 5 m from origin
    out = apply_proximity_rule(grid, Pose(0.0, 0.0, 0.0), 5.0)
    assert out.category_at(15, 10) == CellCategory.CONFLICT


# straight-line planning


def test_straight_corridor_plan():
    grid = corridor()
    start = Pose(2.0, 4.0, 0.0)
    goal = Pose(14.0, 4.0, 0.0)
    outcome = plan(start, goal, grid, NO_BLOCK)
    assert outcome.status == PlanStatus.SUCCESS
    path = outcome.path
    assert not any(path.conflict_flags)
    assert abs(path.total_cost - 12.0) <= 0.6
    assert all(abs(p.y - 4.0) < 0.3 for p in path.poses)
    assert math.hypot(path.poses[-1].x - goal.x, path.poses[-1].y - goal.y) <= 0.5
    assert path.poses[0] == start


def test_plan_rejects_bad_start_and_goal():
    grid = corridor()
    paint_box(grid, 1.9, 3.9, 2.1, 4.1, CellCategory.OCCUPIED)
    with pytest.raises(StartBlockedError):
        plan(Pose(2.0, 4.0, 0.0), Pose(14.0, 4.0, 0.0), grid, NO_BLOCK)
    with pytest.raises(OutOfBoundsError):
        plan(Pose(-5.0, 4.0, 0.0), Pose(14.0, 4.0, 0.0), grid, NO_BLOCK)
    with pytest.raises(OutOfBoundsError):
        plan(Pose(5.0, 4.0, 0.0), Pose(140.0, 4.0, 0.0), grid, NO_BLOCK)


# conflict handling


def banded_corridor():
    """Conflict band across the lower corridor, detour open above."""
    grid = corridor()
    paint_box(grid, 8.0, 0.0, 9.4, 3.0, CellCategory.CONFLICT)
    return grid


def test_conflict_penalty_diverts():
    grid = banded_corridor()
    start = Pose(2.0, 1.5, 0.0)
    goal = Pose(16.0, 1.5, 0.0)

    outcome = plan(start, goal, grid, NO_BLOCK)
    assert outcome.status == PlanStatus.SUCCESS
    # with the default penalty the detour over the band is cheaper
    assert not any(outcome.path.conflict_flags)
    assert max(p.y for p in outcome.path.poses) > 3.0


def test_zero_penalty_crosses_the_band():
    grid = banded_corridor()
    start = Pose(2.0, 1.5, 0.0)
    goal = Pose(16.0, 1.5, 0.0)
    params = PlannerParams(conflict_penalty=0.0, conflict_block_distance=0.0)

    outcome = plan(start, goal, grid, params)
    assert outcome.status == PlanStatus.SUCCESS
    assert any(outcome.path.conflict_flags)
    # without the penalty crossing is never dearer than the detour
    diverted = plan(start, goal, grid, NO_BLOCK)
    assert outcome.path.total_cost <= diverted.path.total_cost


def test_conflict_free_pose_count_monotone_in_penalty():
    grid = banded_corridor()
    start = Pose(2.0, 1.5, 0.0)
    goal = Pose(16.0, 1.5, 0.0)
    previous = -1
    for penalty in (0.0, 0.5, 1.5, 5.0, 10.0):
        params = PlannerParams(conflict_penalty=penalty, conflict_block_distance=0.0)
        path = plan(start, goal, grid, params).path
        clear = len(path) - sum(path.conflict_flags)
        assert clear >= previous
        previous = clear


def test_goal_on_conflict_is_accepted():
    grid = corridor()
    paint_box(grid, 13.0, 0.0, 16.0, 8.0, CellCategory.CONFLICT)
    outcome = plan(Pose(2.0, 4.0, 0.0), Pose(14.5, 4.0, 0.0), grid, NO_BLOCK)
    assert outcome.status == PlanStatus.SUCCESS
    assert outcome.goal == Pose(14.5, 4.0, 0.0)
    assert outcome.path.conflict_flags[-1]


def test_conflict_only_route_is_success_not_unreachable():
    # a conflict wall spanning the full corridor is traversable at a price
    grid = corridor()
    paint_box(grid, 9.0, 0.0, 10.4, 8.0, CellCategory.CONFLICT)
    outcome = plan(Pose(2.0, 4.0, 0.0), Pose(16.0, 4.0, 0.0), grid, NO_BLOCK)
    assert outcome.status == PlanStatus.SUCCESS
    assert any(outcome.path.conflict_flags)


def test_unreachable_goal():
    grid = corridor()
    paint_box(grid, 12.0, 0.0, 13.0, 8.0, CellCategory.OCCUPIED)
    outcome = plan(Pose(2.0, 4.0, 0.0), Pose(16.0, 4.0, 0.0), grid, NO_BLOCK)
    assert outcome.status == PlanStatus.UNREACHABLE
    assert outcome.path is None


# goal shifting


def test_shift_goal_unchanged_when_valid():
    grid = corridor()
    goal = Pose(5.0, 5.0, 1.0)
    assert shift_goal(goal, grid, 5.0) == goal


def test_shift_goal_off_occupied_island():
    grid = corridor()
    cell = grid.spec.cell_index(5.0, 4.0)
    grid.cells[cell[1], cell[0]] = int(CellCategory.OCCUPIED)
    goal = Pose(*grid.spec.cell_center(*cell), 0.0)
    shifted = shift_goal(goal, grid, 5.0)
    assert shifted is not None and shifted != goal
    assert shifted.theta == goal.theta
    # ties on distance resolve toward the goal heading: the +x neighbor
    expect = grid.spec.cell_center(cell[0] + 1, cell[1])
    assert (shifted.x, shifted.y) == expect


def test_shift_goal_none_when_everything_occupied():
    grid = category_field(20, 20, fill=CellCategory.OCCUPIED)
    assert shift_goal(Pose(2.0, 2.0, 0.0), grid, 50.0) is None


def test_shift_goal_respects_search_radius():
    grid = category_field(40, 5, resolution=0.2, fill=CellCategory.OCCUPIED)
    grid.cells[2, 35] = int(CellCategory.FREE)  # 4.1 m from the goal cell
    goal = Pose(*grid.spec.cell_center(15, 2), 0.0)
    assert shift_goal(goal, grid, 2.0) is None
    shifted = shift_goal(goal, grid, 5.0)
    assert shifted is not None
    assert (shifted.x, shifted.y) == grid.spec.cell_center(35, 2)


def test_plan_goal_shifted_status():
    grid = corridor()
    paint_box(grid, 13.5, 0.0, 20.1, 8.1, CellCategory.OCCUPIED)
    outcome = plan(Pose(2.0, 4.0, 0.0), Pose(15.0, 4.0, 0.0), grid, NO_BLOCK)
    assert outcome.status == PlanStatus.GOAL_SHIFTED
    assert outcome.goal.x < 13.5
    assert outcome.goal.theta == 0.0
    final = outcome.path.poses[-1]
    assert math.hypot(final.x - outcome.goal.x, final.y - outcome.goal.y) <= 0.5


# optimality and determinism


def test_plan_cost_matches_exhaustive_search():
    agreements = 0
    for seed in range(8):
        grid, start, goal, params = random_planning_world(seed)
        oracle = exhaustive_best_cost(grid, start, goal, params)
        try:
            outcome = plan(start, goal, grid, params)
        except StartBlockedError:
            continue
        if outcome.status == PlanStatus.UNREACHABLE:
            assert oracle is None
        else:
            assert oracle is not None
            assert abs(outcome.path.total_cost - oracle) <= 1e-6
            agreements += 1
    assert agreements >= 6


def test_paths_never_touch_occupied_cells():
    for seed in (3, 7, 11, 20):
        grid, start, goal, params = random_planning_world(seed)
        outcome = plan(start, goal, grid, params)
        if outcome.path is None:
            continue
        for pose in outcome.path.poses:
            cell = grid.spec.cell_index(pose.x, pose.y)
            assert grid.category_at(*cell) != CellCategory.OCCUPIED


def test_plan_is_deterministic():
    grid, start, goal, params = random_planning_world(5)
    first = plan(start, goal, grid, params)
    second = plan(start, goal, grid, params)
    assert pickle.dumps(first) == pickle.dumps(second)
    if first.path is not None:
        assert first.path.poses == second.path.poses
        assert first.path.costs == second.path.costs


# replanning loop


def static_observer(grid):
    return lambda pose: grid.copy()


def test_advance_along_stop_predicate():
    grid = corridor()
    path = plan(Pose(2.0, 4.0, 0.0), Pose(14.0, 4.0, 0.0), grid, NO_BLOCK).path
    end = _advance_along(path, 0, 100.0)
    assert end == len(path.poses) - 1
    stopped = _advance_along(path, 0, 100.0, stop=lambda p: p.x >= 5.0)
    assert path.poses[stopped].x >= 5.0
    assert path.poses[stopped - 1].x < 5.0 or stopped == 0
    assert _advance_along(path, 0, 0.5, stop=None) <= 3


def test_replay_error_free_world_never_replans_on_conflict():
    grid = corridor()
    paint_box(grid, 9.0, 6.5, 11.0, 8.0, CellCategory.OCCUPIED)  # off the route
    steps = replan_loop(
        Pose(2.0, 4.0, 0.0), Pose(14.0, 4.0, 0.0),
        static_observer(grid), NO_BLOCK, dilation_radius=0.4,
    )
    assert steps[0].replanned
    assert all(step.conflict_poses == 0 for step in steps)
    assert all(step.blocked_poses == 0 for step in steps)
    assert steps[-1].goal_reached
    # replans occur only at the start or when the path ran out
    assert all(not step.replanned for step in steps[1:-1])


def test_replay_proximity_promotion_triggers_replan():
    grid = corridor()
    # conflict patch on the straight route, 10 m ahead of the start
    paint_box(grid, 11.5, 2.5, 12.9, 5.5, CellCategory.CONFLICT)
    params = PlannerParams(conflict_penalty=0.0, conflict_block_distance=5.0)
    steps = replan_loop(
        Pose(1.0, 4.0, 0.0), Pose(18.0, 4.0, 0.0),
        static_observer(grid), params, dilation_radius=0.4,
    )
    assert steps[-1].goal_reached
    # the first plan crosses the band; approaching within the block
    # distance promotes it, invalidates the path, and forces a replan
    # (nothing else in this static world can trigger one mid-drive)
    assert steps[0].conflict_poses > 0
    assert any(step.replanned for step in steps[1:])


def test_replay_aborts_when_walled_in():
    grid = corridor()
    paint_box(grid, 6.0, 0.0, 7.0, 8.0, CellCategory.OCCUPIED)
    steps = replan_loop(
        Pose(2.0, 4.0, 0.0), Pose(16.0, 4.0, 0.0),
        static_observer(grid), NO_BLOCK, dilation_radius=0.4, max_steps=40,
    )
    last = steps[-1]
    assert not last.goal_reached
    assert last.outcome is not None
    assert last.outcome.status == PlanStatus.UNREACHABLE

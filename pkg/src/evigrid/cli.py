"""Command line front end.

Subcommands: map, assess, sweep, plan, replay.  Every run writes a JSON
manifest into the output directory with the scenario digest and the full
parameter set, which is enough to reproduce the run bit for bit.

Exit codes: 0 on success, 1 when planning ends unreachable, 2 on
configuration errors (unknown scenario, unparseable file, bad flags).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys

from . import __version__
from .classify import classify_grid, dilate, write_category_pgm, write_category_ppm
from .geometry import Pose
from .grid import write_channel_pgm
from .planner import PlanStatus, apply_proximity_rule, plan, replan_loop
from .sim import (
    BUNDLED_SCENARIOS,
    SWEEP_WORLDS,
    ErrorInjection,
    ErrorKind,
    Scenario,
    ScenarioFormatError,
    assess_scenario,
    build_scene,
    bundled_scenario,
    bundled_scenario_path,
    categorize_scene,
    load_scenario,
    make_observer,
    rotational_sweep_errors,
    scenario_digest,
    translational_sweep_errors,
)

EXIT_OK = 0
EXIT_UNREACHABLE = 1
EXIT_CONFIG = 2


class ConfigError(Exception):
    pass


def _resolve_scenario(name_or_path: str) -> tuple[Scenario, str]:
    """Load a scenario by bundled name or by file path; returns (scenario, digest)."""
    if os.path.exists(name_or_path):
        try:
            return load_scenario(name_or_path), scenario_digest(name_or_path)
        except ScenarioFormatError as exc:
            raise ConfigError(f"cannot parse scenario {name_or_path}: {exc}") from exc
    if name_or_path in BUNDLED_SCENARIOS:
        path = bundled_scenario_path(name_or_path)
        try:
            scenario = bundled_scenario(name_or_path)
        except ScenarioFormatError as exc:  # pragma: no cover - bundled files are tested
            raise ConfigError(f"cannot parse bundled scenario {name_or_path}: {exc}") from exc
        import hashlib

        return scenario, hashlib.sha256(path.read_bytes()).hexdigest()
    raise ConfigError(
        f"scenario {name_or_path!r} is neither a file nor one of {', '.join(BUNDLED_SCENARIOS)}"
    )


def _apply_overrides(scenario: Scenario, args) -> Scenario:
    updates = {}
    if args.error_kind is not None:
        kind = ErrorKind(args.error_kind)
        magnitude = args.error_mag if args.error_mag is not None else 0.0
        if kind == ErrorKind.NONE:
            magnitude = 0.0
        updates["error"] = ErrorInjection(kind, magnitude, scenario.error.target_sensor)
    elif args.error_mag is not None:
        if scenario.error.kind == ErrorKind.NONE:
            raise ConfigError("--error-mag without --error-kind needs a scenario error kind")
        updates["error"] = dataclasses.replace(scenario.error, magnitude=args.error_mag)
    if args.seed is not None:
        updates["seed"] = args.seed
    if updates:
        scenario = dataclasses.replace(scenario, **updates)
    return scenario


def _params_dict(scenario: Scenario) -> dict:
    def plain(value):
        if dataclasses.is_dataclass(value) and not isinstance(value, type):
            return {k: plain(v) for k, v in dataclasses.asdict(value).items()}
        if isinstance(value, tuple):
            return [plain(v) for v in value]
        if hasattr(value, "value"):
            return value.value
        return value

    return {
        "name": scenario.name,
        "grid": plain(scenario.grid),
        "vehicle_poses": plain(scenario.vehicle_poses),
        "goal": plain(scenario.goal) if scenario.goal else None,
        "sensors": plain(scenario.sensors),
        "error": plain(scenario.error),
        "thresholds": plain(scenario.thresholds),
        "assess": plain(scenario.assess),
        "planner": plain(scenario.planner),
        "sensor_model": plain(scenario.sensor_model),
        "dilation_radius": scenario.dilation_radius,
        "base_rate": scenario.base_rate,
        "noise_sigma": scenario.noise_sigma,
        "seed": scenario.seed,
        "goal_search_radius": scenario.goal_search_radius,
        "replay_advance": scenario.replay_advance,
    }


def _write_manifest(out_dir: str, command: str, scenario: Scenario, digest: str, outputs: list[str]) -> None:
    manifest = {
        "tool": "evigrid",
        "version": __version__,
        "command": command,
        "scenario_sha256": digest,
        "parameters": _params_dict(scenario),
        "outputs": sorted(outputs),
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
        handle.write("\n")


def _alpha_text(alpha) -> str:
    return "undefined" if alpha is None else f"{alpha:.6f}"


def _write_score_rows(path: str, rows) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            [
                "scenario_id", "error_kind", "error_magnitude", "alpha",
                "conflict_mass", "occupied_mass", "action",
            ]
        )
        for row in rows:
            writer.writerow(
                [
                    row.scenario_id, row.error_kind, f"{row.error_magnitude:.6f}",
                    _alpha_text(row.alpha), f"{row.conflict_mass:.6f}",
                    f"{row.occupied_mass:.6f}", row.action.value,
                ]
            )


def cmd_map(args) -> int:
    scenario, digest = _resolve_scenario(args.scenario)
    scenario = _apply_overrides(scenario, args)
    os.makedirs(args.out, exist_ok=True)
    scene = build_scene(scenario)
    outputs = []
    for index, grid in enumerate(scene.per_sensor):
        name = f"sensor{index}_projected.pgm"
        write_channel_pgm(grid, "projected", os.path.join(args.out, name))
        outputs.append(name)
    write_channel_pgm(scene.fused, "projected", os.path.join(args.out, "fused_projected.pgm"))
    write_channel_pgm(scene.fused, "uncertainty", os.path.join(args.out, "fused_uncertainty.pgm"))
    outputs += ["fused_projected.pgm", "fused_uncertainty.pgm"]
    if args.conventional:
        categories = categorize_scene(scenario, conventional=True)
    else:
        categories = classify_grid(scene.fused, scenario.thresholds)
    write_category_pgm(categories, os.path.join(args.out, "categories.pgm"))
    write_category_ppm(categories, os.path.join(args.out, "categories.ppm"))
    outputs += ["categories.pgm", "categories.ppm"]
    _write_manifest(args.out, "map", scenario, digest, outputs + ["manifest.json"])
    print(f"map: wrote {len(outputs) + 1} files to {args.out}")
    return EXIT_OK


def cmd_assess(args) -> int:
    scenario, digest = _resolve_scenario(args.scenario)
    scenario = _apply_overrides(scenario, args)
    os.makedirs(args.out, exist_ok=True)
    row = assess_scenario(scenario)
    _write_score_rows(os.path.join(args.out, "score.csv"), [row])
    _write_manifest(args.out, "assess", scenario, digest, ["score.csv", "manifest.json"])
    print(
        f"assess: {row.scenario_id} error={row.error_kind}:{row.error_magnitude:g} "
        f"alpha={_alpha_text(row.alpha)} action={row.action.value}"
    )
    return EXIT_OK


def cmd_sweep(args) -> int:
    if args.scenario:
        pairs = [_resolve_scenario(args.scenario)]
    else:
        pairs = [_resolve_scenario(name) for name in SWEEP_WORLDS]
    os.makedirs(args.out, exist_ok=True)
    rows = []
    for scenario, _digest in pairs:
        scenario = _apply_overrides(scenario, args) if args.seed is not None else scenario
        target = scenario.error.target_sensor
        kinds = []
        if args.error_kind in (None, "rot"):
            kinds.append(rotational_sweep_errors(target))
        if args.error_kind in (None, "trans"):
            kinds.append(translational_sweep_errors(target))
        if args.error_kind == "none":
            kinds = [[ErrorInjection(ErrorKind.NONE, 0.0, target)]]
        for errors in kinds:
            for error in errors:
                rows.append(assess_scenario(scenario, error))
    _write_score_rows(os.path.join(args.out, "sweep.csv"), rows)
    # gnuplot-friendly: whitespace columns, undefined alpha as NaN
    dat_path = os.path.join(args.out, "sweep.dat")
    with open(dat_path, "w") as handle:
        handle.write("# scenario error_kind magnitude alpha conflict_mass occupied_mass\n")
        for row in rows:
            alpha = "nan" if row.alpha is None else f"{row.alpha:.6f}"
            handle.write(
                f"{row.scenario_id} {row.error_kind} {row.error_magnitude:.6f} "
                f"{alpha} {row.conflict_mass:.6f} {row.occupied_mass:.6f}\n"
            )
    scenario, digest = pairs[0]
    _write_manifest(args.out, "sweep", scenario, digest, ["sweep.csv", "sweep.dat", "manifest.json"])
    print(f"sweep: {len(rows)} rows over {len(pairs)} worlds -> {args.out}")
    return EXIT_OK


def _outcome_line(outcome, requested_goal: Pose) -> str:
    if outcome.status == PlanStatus.UNREACHABLE:
        return "UNREACHABLE"
    if outcome.status == PlanStatus.GOAL_SHIFTED:
        dx = outcome.goal.x - requested_goal.x
        dy = outcome.goal.y - requested_goal.y
        return f"GOAL_SHIFTED {dx:.3f} {dy:.3f}"
    return "SUCCESS"


def _write_path_csv(path_file: str, path, outcome_line: str) -> None:
    with open(path_file, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["idx", "x_m", "y_m", "theta_rad", "conflict_flag", "cumulative_cost"])
        if path is not None:
            for i, (pose, flag, cost) in enumerate(
                zip(path.poses, path.conflict_flags, path.costs)
            ):
                writer.writerow(
                    [i, f"{pose.x:.6f}", f"{pose.y:.6f}", f"{pose.theta:.6f}",
                     int(flag), f"{cost:.6f}"]
                )
        writer.writerow([f"# outcome: {outcome_line}"])


def cmd_plan(args) -> int:
    scenario, digest = _resolve_scenario(args.scenario)
    scenario = _apply_overrides(scenario, args)
    if scenario.goal is None:
        raise ConfigError(f"scenario {scenario.name} has no goal to plan to")
    os.makedirs(args.out, exist_ok=True)
    categories = categorize_scene(scenario, conventional=args.conventional)
    dilated = dilate(categories, scenario.dilation_radius)
    outcome = plan(
        scenario.vehicle_pose, scenario.goal, dilated, scenario.planner,
        scenario.goal_search_radius,
    )
    line = _outcome_line(outcome, scenario.goal)
    outputs = ["path.csv", "manifest.json"]
    _write_path_csv(os.path.join(args.out, "path.csv"), outcome.path, line)
    if args.render:
        effective = apply_proximity_rule(
            dilated, scenario.vehicle_pose, scenario.planner.conflict_block_distance
        )
        overlay = {}
        if outcome.path is not None:
            for pose in outcome.path.poses:
                cell = effective.spec.cell_index(pose.x, pose.y)
                if cell:
                    overlay[cell] = (30, 100, 220)
        write_category_ppm(effective, os.path.join(args.out, "plan.ppm"), overlay)
        outputs.append("plan.ppm")
    _write_manifest(args.out, "plan", scenario, digest, outputs)
    print(f"plan: {line}")
    return EXIT_UNREACHABLE if outcome.status == PlanStatus.UNREACHABLE else EXIT_OK


def cmd_replay(args) -> int:
    scenario, digest = _resolve_scenario(args.scenario)
    scenario = _apply_overrides(scenario, args)
    if scenario.goal is None:
        raise ConfigError(f"scenario {scenario.name} has no goal to replay toward")
    os.makedirs(args.out, exist_ok=True)
    observe = make_observer(scenario, conventional=args.conventional)
    steps = replan_loop(
        scenario.vehicle_pose, scenario.goal, observe, scenario.planner,
        dilation_radius=scenario.dilation_radius,
        advance=scenario.replay_advance,
        goal_search_radius=scenario.goal_search_radius,
    )
    outputs = ["replay.csv", "manifest.json"]
    with open(os.path.join(args.out, "replay.csv"), "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["step", "x_m", "y_m", "theta_rad", "replanned", "outcome",
             "conflict_poses", "blocked_poses", "goal_reached"]
        )
        for step in steps:
            outcome = "" if step.outcome is None else step.outcome.status.value
            writer.writerow(
                [step.index, f"{step.pose.x:.6f}", f"{step.pose.y:.6f}",
                 f"{step.pose.theta:.6f}", int(step.replanned), outcome,
                 step.conflict_poses, step.blocked_poses, int(step.goal_reached)]
            )
    if args.render:
        final = dilate(observe(steps[-1].pose), scenario.dilation_radius)
        write_category_ppm(final, os.path.join(args.out, "replay_final.ppm"))
        outputs.append("replay_final.ppm")
    final_step = steps[-1]
    unreachable = (
        final_step.outcome is not None
        and final_step.outcome.status == PlanStatus.UNREACHABLE
    )
    shifted = any(
        s.outcome is not None and s.outcome.status == PlanStatus.GOAL_SHIFTED for s in steps
    )
    if unreachable:
        line = "UNREACHABLE"
    elif shifted:
        last_goal = next(
            s.outcome.goal for s in reversed(steps)
            if s.outcome is not None and s.outcome.goal is not None
        )
        line = f"GOAL_SHIFTED {last_goal.x - scenario.goal.x:.3f} {last_goal.y - scenario.goal.y:.3f}"
    else:
        line = "SUCCESS"
    with open(os.path.join(args.out, "replay_outcome.txt"), "w") as handle:
        handle.write(line + "\n")
    outputs.append("replay_outcome.txt")
    _write_manifest(args.out, "replay", scenario, digest, outputs)
    print(f"replay: {len(steps)} steps, {line}, goal_reached={final_step.goal_reached}")
    return EXIT_UNREACHABLE if unreachable else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evigrid",
        description="Conflict-aware evidential grid mapping, assessment, and planning.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func, needs_scenario in (
        ("map", cmd_map, True),
        ("assess", cmd_assess, True),
        ("sweep", cmd_sweep, False),
        ("plan", cmd_plan, True),
        ("replay", cmd_replay, True),
    ):
        p = sub.add_parser(name)
        p.set_defaults(func=func)
        if needs_scenario:
            p.add_argument("--scenario", required=True, help="bundled name or scenario file path")
        else:
            p.add_argument(
                "--scenario", default=None,
                help="bundled name or file path; default sweeps the bundled worlds",
            )
        p.add_argument("--out", default="out", help="output directory (default: ./out)")
        p.add_argument("--conventional", action="store_true",
                       help="use the probabilistic baseline instead of evidential fusion")
        p.add_argument("--render", action="store_true", help="write extra color renderings")
        p.add_argument("--error-kind", choices=[k.value for k in ErrorKind], default=None,
                       help="override the scenario's calibration error kind")
        p.add_argument("--error-mag", type=float, default=None,
                       help="override the scenario's error magnitude (deg or m)")
        p.add_argument("--seed", type=int, default=None, help="seed for the optional noise hook")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

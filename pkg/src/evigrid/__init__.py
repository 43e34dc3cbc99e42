"""Evidential occupancy grids with conflict-aware assessment and planning.

The package keeps sensor fusion in evidence space so that contradictory
measurements surface as a distinct conflict signal instead of averaging
away.  On top of the grid it offers a degradation score for online
self-checks, a lattice planner that prices conflict crossings, and a small
planar range-sensor simulator used by the bundled scenarios.
"""

__version__ = "0.1.0"

from .assess import (
    Action,
    AssessParams,
    Assessment,
    PoseFlag,
    degradation_score,
    evaluate_path,
    recommend_action,
)
from .baseline import (
    BayesGrid,
    bayes_categorize,
    bayes_from_evidential,
    bayes_fuse_max,
    bayes_fuse_demorgan,
)
from .classify import (
    CategoryGrid,
    CellCategory,
    ClassifyThresholds,
    classify_cell,
    classify_grid,
    dilate,
)
from .geometry import Pose, compose, planar_distance, wrap_angle
from .grid import (
    EvidentialGrid,
    GridSpec,
    InverseSensorModel,
    Scan,
    fuse_grids,
    integrate_scan,
)
from .opinions import (
    BinomialOpinion,
    EvidencePair,
    cumulative_fuse,
    from_evidence,
    projected_probability,
    to_evidence,
    vacuous,
)
from .planner import (
    Path,
    PlannerParams,
    PlanOutcome,
    PlanStatus,
    plan,
    replan_loop,
)
from .sim import (
    ErrorInjection,
    ErrorKind,
    Scenario,
    SensorConfig,
    World,
    build_scene,
    bundled_scenario,
    load_scenario,
    simulate_scan,
)

__all__ = [
    "Action",
    "AssessParams",
    "Assessment",
    "BayesGrid",
    "BinomialOpinion",
    "CategoryGrid",
    "CellCategory",
    "ClassifyThresholds",
    "ErrorInjection",
    "ErrorKind",
    "EvidencePair",
    "EvidentialGrid",
    "GridSpec",
    "InverseSensorModel",
    "Path",
    "PlanOutcome",
    "PlanStatus",
    "PlannerParams",
    "Pose",
    "PoseFlag",
    "Scan",
    "Scenario",
    "SensorConfig",
    "World",
    "bayes_categorize",
    "bayes_from_evidential",
    "bayes_fuse_max",
    "bayes_fuse_demorgan",
    "build_scene",
    "bundled_scenario",
    "classify_cell",
    "classify_grid",
    "compose",
    "cumulative_fuse",
    "degradation_score",
    "dilate",
    "evaluate_path",
    "from_evidence",
    "fuse_grids",
    "integrate_scan",
    "load_scenario",
    "plan",
    "planar_distance",
    "projected_probability",
    "recommend_action",
    "replan_loop",
    "simulate_scan",
    "to_evidence",
    "vacuous",
    "wrap_angle",
    "__version__",
]

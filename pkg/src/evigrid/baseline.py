"""Conventional probabilistic grid fusion, kept as a comparison baseline.

Cells hold a single occupancy probability with 0.5 meaning unknown.
Multi-sensor fusion either combines per-sensor probabilities with the
De Morgan product rule (one minus the product of complements) or simply
takes the maximum.  Both rules are deliberately conservative: when
sensors contradict each other the fused value lands high and the cell
reads as occupied, and no trace of the disagreement survives.  A cell
nobody measured keeps 0.5, which the three-way categorization also
files under occupied; that is part of the baseline's character, not a
bug in it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .classify import BadThresholdsError, CategoryGrid, CellCategory
from .grid import EvidentialGrid, GridSpec, GridSpecMismatchError


@dataclass
class BayesGrid:
    """Grid of plain occupancy probabilities in [0, 1]."""

    spec: GridSpec
    p: np.ndarray

    def __post_init__(self):
        shape = (self.spec.height, self.spec.width)
        if self.p.shape != shape:
            raise ValueError(f"probability array must have shape {shape}, got {self.p.shape}")
        if self.p.size and (self.p.min() < 0.0 or self.p.max() > 1.0):
            raise ValueError("cell probabilities must lie in [0, 1]")


def bayes_from_evidential(grid: EvidentialGrid) -> BayesGrid:
    """Collapse an evidential grid to probabilities via projection."""
    return BayesGrid(grid.spec, grid.projected())


def _check_specs(grids: Sequence[BayesGrid]) -> GridSpec:
    if not grids:
        raise ValueError("need at least one grid to fuse")
    spec = grids[0].spec
    for g in grids[1:]:
        if g.spec != spec:
            raise GridSpecMismatchError(f"grid specs differ: {spec} vs {g.spec}")
    return spec


def bayes_fuse_demorgan(grids: Sequence[BayesGrid]) -> BayesGrid:
    """Fuse by the De Morgan product rule: p = 1 - prod(1 - p_k).

    A probability of 1 from any sensor is absorbing; a probability of 0
    leaves the others untouched.  The rule never decreases below the
    largest input, which is exactly why contradictions vanish into
    occupied instead of standing out.
    """
    spec = _check_specs(grids)
    complement = np.ones((spec.height, spec.width))
    for g in grids:
        complement *= 1.0 - g.p
    return BayesGrid(spec, 1.0 - complement)


def bayes_fuse_max(grids: Sequence[BayesGrid]) -> BayesGrid:
    """Fuse by taking the largest probability per cell."""
    spec = _check_specs(grids)
    best = grids[0].p.copy()
    for g in grids[1:]:
        best = np.maximum(best, g.p)
    return BayesGrid(spec, best)


def bayes_categorize(grid: BayesGrid, free_max: float, occupied_min: float) -> CategoryGrid:
    """Three-way threshold categorization of a probability grid.

    p <= free_max is Free, p >= occupied_min is Occupied, the open band
    in between is Unknown.  There is no conflict category here;
    contradictions have already been fused away.
    """
    if not (0.0 <= free_max < occupied_min <= 1.0):
        raise BadThresholdsError(
            f"need 0 <= free_max < occupied_min <= 1, got {free_max} and {occupied_min}"
        )
    cells = np.full(grid.p.shape, int(CellCategory.UNKNOWN), dtype=np.int8)
    cells[grid.p <= free_max] = int(CellCategory.FREE)
    cells[grid.p >= occupied_min] = int(CellCategory.OCCUPIED)
    return CategoryGrid(grid.spec, cells)


def bayes_drivable(grid: BayesGrid, max_occupancy: float) -> np.ndarray:
    """Boolean drivability mask: strictly below the occupancy bound."""
    if not (0.0 < max_occupancy <= 1.0):
        raise BadThresholdsError(f"max_occupancy must lie in (0, 1], got {max_occupancy}")
    return grid.p < max_occupancy

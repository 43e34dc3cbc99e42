"""Four-way cell categorization and safety-ordered dilation.

A cell's opinion is mapped to Unknown, Free, Conflict, or Occupied.
Unknown captures cells whose uncertainty is still too high to act on.
Among the remaining cells the projected probability decides: low means
Free, high means Occupied, and the band in between is Conflict, i.e. the
cell holds substantial evidence for both occupied and free at once.
Conflict is what separates this categorization from a plain probability
threshold, where contradictory evidence silently averages out.

Dilation inflates the map for planning.  Each category carries a rank
(Occupied > Conflict > Unknown > Free) and a dilated cell takes the
maximum rank within a disk, so a dangerous label can grow outward but
can never be overwritten by a safer one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np
from scipy import ndimage

from .grid import EvidentialGrid, GridSpec
from .pnm import write_pgm, write_ppm


class BadThresholdsError(ValueError):
    """Raised when categorization thresholds are not properly ordered."""


class CellCategory(IntEnum):
    """Cell categories; the integer value is the safety rank used by dilation."""

    FREE = 0
    UNKNOWN = 1
    CONFLICT = 2
    OCCUPIED = 3


# Graymap values for category images (P2).
CATEGORY_GRAY = {
    CellCategory.FREE: 255,
    CellCategory.UNKNOWN: 128,
    CellCategory.CONFLICT: 64,
    CellCategory.OCCUPIED: 0,
}

# RGB for category images (P3); conflict stands out in red.
CATEGORY_COLOR = {
    CellCategory.FREE: (255, 255, 255),
    CellCategory.UNKNOWN: (160, 160, 160),
    CellCategory.CONFLICT: (214, 39, 40),
    CellCategory.OCCUPIED: (0, 0, 0),
}


@dataclass(frozen=True)
class ClassifyThresholds:
    """Thresholds for the four-way categorization.

    ``max_uncertainty`` splits Unknown from the certain categories, and
    ``free_max`` / ``occupied_min`` bracket the projected probability:
    P <= free_max is Free, P >= occupied_min is Occupied, anything in the
    open band between them is Conflict.  A cell exactly at
    ``max_uncertainty`` counts as certain.
    """

    max_uncertainty: float = 0.3
    free_max: float = 0.2
    occupied_min: float = 0.8

    def __post_init__(self):
        if not (0.0 < self.max_uncertainty < 1.0):
            raise BadThresholdsError(
                f"max_uncertainty must lie in (0, 1), got {self.max_uncertainty}"
            )
        if not (0.0 < self.free_max < self.occupied_min < 1.0):
            raise BadThresholdsError(
                f"need 0 < free_max < occupied_min < 1, got "
                f"{self.free_max} and {self.occupied_min}"
            )


@dataclass
class CategoryGrid:
    """Dense grid of cell categories over the same geometry as its source."""

    spec: GridSpec
    cells: np.ndarray

    def __post_init__(self):
        shape = (self.spec.height, self.spec.width)
        if self.cells.shape != shape:
            raise ValueError(f"cells must have shape {shape}, got {self.cells.shape}")
        if self.cells.dtype != np.int8:
            object.__setattr__(self, "cells", self.cells.astype(np.int8))

    def copy(self) -> "CategoryGrid":
        return CategoryGrid(self.spec, self.cells.copy())

    def category_at(self, ix: int, iy: int) -> CellCategory:
        return CellCategory(int(self.cells[iy, ix]))

    def count(self, category: CellCategory) -> int:
        return int(np.count_nonzero(self.cells == int(category)))


def classify_cell(
    belief: float, disbelief: float, uncertainty: float, base_rate: float,
    thresholds: ClassifyThresholds,
) -> CellCategory:
    """Categorize a single opinion; shares its branch logic with classify_grid."""
    if uncertainty > thresholds.max_uncertainty:
        return CellCategory.UNKNOWN
    projected = belief + base_rate * uncertainty
    if projected <= thresholds.free_max:
        return CellCategory.FREE
    if projected >= thresholds.occupied_min:
        return CellCategory.OCCUPIED
    return CellCategory.CONFLICT


def classify_grid(grid: EvidentialGrid, thresholds: ClassifyThresholds) -> CategoryGrid:
    """Categorize every cell of an evidential grid."""
    uncertainty = grid.uncertainty()
    projected = grid.projected()
    cells = np.full(uncertainty.shape, int(CellCategory.CONFLICT), dtype=np.int8)
    cells[projected <= thresholds.free_max] = int(CellCategory.FREE)
    cells[projected >= thresholds.occupied_min] = int(CellCategory.OCCUPIED)
    cells[uncertainty > thresholds.max_uncertainty] = int(CellCategory.UNKNOWN)
    return CategoryGrid(grid.spec, cells)


def disk_offsets(radius_m: float, resolution: float) -> np.ndarray:
    """Boolean footprint of cells whose center lies within radius_m.

    Membership is measured center to center, so radius equal to one cell
    size yields the 4-neighborhood plus the center (corners are sqrt(2)
    cells away and excluded).
    """
    if radius_m < 0.0:
        raise ValueError(f"radius must be >= 0, got {radius_m}")
    reach = int(math.floor(radius_m / resolution + 1e-9))
    if reach <= 0:
        return np.ones((1, 1), dtype=bool)
    span = np.arange(-reach, reach + 1)
    dist = np.hypot(span[:, None], span[None, :]) * resolution
    return dist <= radius_m + 1e-9


def _max_rank_filter(cells: np.ndarray, footprint: np.ndarray) -> np.ndarray:
    # Outside the grid counts as the lowest rank so borders never inflate.
    return ndimage.grey_dilation(cells, footprint=footprint, mode="constant", cval=0)


def dilate(grid: CategoryGrid, radius_m: float) -> CategoryGrid:
    """Safety-ordered dilation: max category rank over a centered disk."""
    footprint = disk_offsets(radius_m, grid.spec.resolution)
    if footprint.shape == (1, 1):
        return grid.copy()
    return CategoryGrid(grid.spec, _max_rank_filter(grid.cells, footprint))


def write_category_pgm(grid: CategoryGrid, path) -> None:
    """Write categories as a plain graymap with the fixed value mapping."""
    lookup = np.zeros(4, dtype=np.uint8)
    for category, gray in CATEGORY_GRAY.items():
        lookup[int(category)] = gray
    image = lookup[grid.cells]
    spec = grid.spec
    comment = (
        f"categories free=255 unknown=128 conflict=64 occupied=0 "
        f"resolution={spec.resolution} width={spec.width} height={spec.height} "
        f"origin=({spec.origin_x},{spec.origin_y})"
    )
    write_pgm(path, image[::-1, :], comment)


def write_category_ppm(grid: CategoryGrid, path, overlay: dict | None = None) -> None:
    """Write categories as a color pixmap; ``overlay`` maps (ix, iy) to RGB."""
    lookup = np.zeros((4, 3), dtype=np.uint8)
    for category, rgb in CATEGORY_COLOR.items():
        lookup[int(category)] = rgb
    image = lookup[grid.cells]
    if overlay:
        for (ix, iy), rgb in overlay.items():
            if 0 <= ix < grid.spec.width and 0 <= iy < grid.spec.height:
                image[iy, ix] = rgb
    comment = "categories: white=free gray=unknown red=conflict black=occupied"
    write_ppm(path, image[::-1, :, :], comment)

"""Shared helpers for the test suite."""

import numpy as np

from evigrid import BinomialOpinion, CategoryGrid, CellCategory, GridSpec


def random_mass_triples(n: int, seed: int) -> np.ndarray:
    """(n, 3) array of (b, d, u) rows drawn uniformly from the simplex."""
    rng = np.random.default_rng(seed)
    return rng.dirichlet((1.0, 1.0, 1.0), size=n)


def opinion_from_row(row, base_rate: float = 0.5) -> BinomialOpinion:
    b, d, u = (float(v) for v in row)
    # renormalize away the last-digit drift of the dirichlet sampler
    total = b + d + u
    return BinomialOpinion(b / total, d / total, u / total, base_rate)


def category_field(
    width: int,
    height: int,
    resolution: float = 0.2,
    origin: tuple[float, float] = (0.0, 0.0),
    fill: CellCategory = CellCategory.FREE,
) -> CategoryGrid:
    """Uniform category grid used as a canvas by planner and assess tests."""
    spec = GridSpec(resolution, width, height, origin[0], origin[1])
    cells = np.full((height, width), int(fill), dtype=np.int8)
    return CategoryGrid(spec, cells)


def paint_box(grid: CategoryGrid, x0: float, y0: float, x1: float, y1: float,
              category: CellCategory) -> None:
    """Set every cell whose center falls inside the world-frame box."""
    # pad so centers on the box edge are kept despite rounding
    eps = 1e-9
    spec = grid.spec
    for iy in range(spec.height):
        for ix in range(spec.width):
            cx, cy = spec.cell_center(ix, iy)
            if x0 - eps <= cx <= x1 + eps and y0 - eps <= cy <= y1 + eps:
                grid.cells[iy, ix] = int(category)

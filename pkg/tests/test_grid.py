"""Evidential grid construction: ray walks, scan integration, fusion."""

import math

import numpy as np
import pytest

from evigrid import (
    EvidentialGrid,
    GridSpec,
    InverseSensorModel,
    Pose,
    Scan,
    fuse_grids,
    integrate_scan,
)
from evigrid.grid import (
    GridSpecMismatchError,
    OutOfBoundsError,
    _integrate_beams_impl,
    supercover_cells,
    write_channel_pgm,
)

SPEC = GridSpec(0.2, 50, 40, 0.0, 0.0)


def single_beam_scan(azimuth, rng, hit=True, max_range=30.0, min_range=0.0):
    return Scan(
        sensor_pose=Pose(0.0, 0.0, 0.0),
        azimuths=np.array([azimuth]),
        ranges=np.array([rng]),
        hits=np.array([hit]),
        max_range=max_range,
        min_range=min_range,
    )


# supercover ray walk


def brute_force_supercover(spec, x0, y0, x1, y1):
    """All cells the closed segment truly passes through, by sampling.

    Dense sampling finds every crossed cell; the walk under test must
    visit at least those, in a 4-connected chain between the endpoints.
    """
    n = 4000
    found = set()
    for i in range(n + 1):
        t = i / n
        cell = spec.cell_index(x0 + t * (x1 - x0), y0 + t * (y1 - y0))
        if cell is not None:
            found.add(cell)
    return found


def test_supercover_is_four_connected_chain():
    rng = np.random.default_rng(7)
    for _ in range(60):
        x0, x1 = rng.uniform(0.05, 9.95, size=2)
        y0, y1 = rng.uniform(0.05, 7.95, size=2)
        cells = supercover_cells(SPEC, x0, y0, x1, y1)
        assert cells[0] == SPEC.cell_index(x0, y0)
        assert cells[-1] == SPEC.cell_index(x1, y1)
        for (ax, ay), (bx, by) in zip(cells, cells[1:]):
            assert abs(ax - bx) + abs(ay - by) == 1
        sampled = brute_force_supercover(SPEC, x0, y0, x1, y1)
        assert sampled <= set(cells)


def test_supercover_axis_aligned_and_single_cell():
    cells = supercover_cells(SPEC, 0.1, 0.1, 1.9, 0.1)
    assert cells == [(ix, 0) for ix in range(10)]
    assert supercover_cells(SPEC, 0.5, 0.5, 0.55, 0.52) == [(2, 2)]


def test_supercover_rejects_outside_endpoints():
    with pytest.raises(OutOfBoundsError):
        supercover_cells(SPEC, -1.0, 0.5, 1.0, 0.5)
    with pytest.raises(OutOfBoundsError):
        supercover_cells(SPEC, 0.5, 0.5, 99.0, 0.5)


# scan integration


def test_compiled_kernel_matches_reference():
    rng = np.random.default_rng(3)
    n = 64
    azimuths = rng.uniform(-math.pi, math.pi - 1e-9, size=n)
    ranges = rng.uniform(0.5, 12.0, size=n)
    hits = rng.uniform(size=n) < 0.7
    ranges[~hits] = 30.0
    args = (
        SPEC.origin_x, SPEC.origin_y, SPEC.resolution, SPEC.width, SPEC.height,
        1.7, 3.1, 0.4, azimuths, ranges, hits, 0.3, 3.0, 4.0 / 3.0,
    )
    from evigrid.grid import _integrate_beams

    occ_a = np.zeros((SPEC.height, SPEC.width))
    fre_a = np.zeros((SPEC.height, SPEC.width))
    _integrate_beams(occ_a, fre_a, *args)
    occ_b = np.zeros((SPEC.height, SPEC.width))
    fre_b = np.zeros((SPEC.height, SPEC.width))
    _integrate_beams_impl(occ_b, fre_b, *args)
    assert np.array_equal(occ_a, occ_b)
    assert np.array_equal(fre_a, fre_b)


def test_single_beam_evidence_pattern():
    grid = EvidentialGrid.vacuous(SPEC)
    scan = single_beam_scan(0.0, 5.0)
    out = integrate_scan(grid, scan, vehicle_pose=Pose(0.1, 3.1, 0.0))

    u = out.uncertainty()
    touched = np.argwhere(u < 1.0)
    # exactly the cells of the beam row up to the hit
    assert {(int(ix), int(iy)) for iy, ix in touched} == {(ix, 15) for ix in range(26)}
    hit = out.opinion_at(25, 15)
    assert hit.b > hit.d
    for ix in range(25):
        op = out.opinion_at(ix, 15)
        assert op.d > op.b


def test_no_return_beam_adds_only_free_evidence():
    grid = EvidentialGrid.vacuous(SPEC)
    scan = single_beam_scan(0.0, 30.0, hit=False)
    out = integrate_scan(grid, scan, vehicle_pose=Pose(0.1, 3.1, 0.0))
    assert np.all(out.occ == 0.0)
    assert np.count_nonzero(out.fre) > 0


def test_zero_beams_leaves_grid_unchanged():
    grid = EvidentialGrid.vacuous(SPEC)
    scan = Scan(Pose(0, 0, 0), np.zeros(0), np.zeros(0), np.zeros(0, dtype=bool), 30.0)
    out = integrate_scan(grid, scan, vehicle_pose=Pose(1.0, 1.0, 0.0))
    assert np.array_equal(out.occ, grid.occ)
    assert np.array_equal(out.fre, grid.fre)


def test_double_integration_lowers_uncertainty():
    grid = EvidentialGrid.vacuous(SPEC)
    scan = single_beam_scan(0.0, 5.0)
    once = integrate_scan(grid, scan, vehicle_pose=Pose(0.1, 3.1, 0.0))
    twice = integrate_scan(once, scan, vehicle_pose=Pose(0.1, 3.1, 0.0))
    hit_cell = (25, 15)
    assert twice.opinion_at(*hit_cell).u < once.opinion_at(*hit_cell).u


def test_min_range_ring_collects_nothing():
    grid = EvidentialGrid.vacuous(SPEC)
    scan = single_beam_scan(0.0, 5.0, min_range=2.0)
    out = integrate_scan(grid, scan, vehicle_pose=Pose(0.1, 3.1, 0.0))
    # cells inside the 2 m dead zone stay vacuous
    for ix in range(10):
        assert out.opinion_at(ix, 15).is_vacuous
    assert not out.opinion_at(25, 15).is_vacuous


def test_sensor_outside_grid_is_clipped():
    grid = EvidentialGrid.vacuous(SPEC)
    scan = single_beam_scan(0.0, 8.0)
    out = integrate_scan(grid, scan, vehicle_pose=Pose(-3.0, 3.1, 0.0))
    hit = out.opinion_at(25, 15)
    assert hit.b > hit.d
    # the part of the ray before the boundary lies outside; inside cells
    # up to the hit all collected free evidence
    for ix in range(25):
        op = out.opinion_at(ix, 15)
        assert op.d > op.b


def test_beam_leaving_grid_before_hit_adds_no_occupied():
    grid = EvidentialGrid.vacuous(SPEC)
    scan = single_beam_scan(0.0, 25.0)
    out = integrate_scan(grid, scan, vehicle_pose=Pose(0.1, 3.1, 0.0))
    # the grid is 10 m wide, the hit at 25 m falls outside it
    assert np.all(out.occ == 0.0)
    assert np.count_nonzero(out.fre) > 0


def test_model_prior_weight_must_match_grid():
    grid = EvidentialGrid.vacuous(SPEC)
    scan = single_beam_scan(0.0, 5.0)
    model = InverseSensorModel(prior_weight=4.0)
    with pytest.raises(GridSpecMismatchError):
        integrate_scan(grid, scan, model)


def test_inverse_sensor_model_evidence_strengths():
    model = InverseSensorModel()
    assert math.isclose(model.hit_evidence, 3.0, abs_tol=1e-12)
    assert math.isclose(model.free_evidence, 4.0 / 3.0, abs_tol=1e-12)


# grid fusion


def integrated_sample_grid(seed):
    rng = np.random.default_rng(seed)
    n = 48
    azimuths = rng.uniform(-math.pi, math.pi - 1e-9, size=n)
    ranges = rng.uniform(0.5, 9.0, size=n)
    hits = np.ones(n, dtype=bool)
    scan = Scan(Pose(0, 0, 0), azimuths, ranges, hits, 30.0)
    grid = EvidentialGrid.vacuous(SPEC)
    return integrate_scan(grid, scan, vehicle_pose=Pose(5.0, 4.0, 0.0))


def test_fuse_with_vacuous_is_identity():
    g = integrated_sample_grid(11)
    fused = fuse_grids(g, EvidentialGrid.vacuous(SPEC))
    assert np.allclose(fused.occ, g.occ, atol=1e-12)
    assert np.allclose(fused.fre, g.fre, atol=1e-12)


def test_fuse_is_commutative():
    a = integrated_sample_grid(11)
    b = integrated_sample_grid(12)
    ab = fuse_grids(a, b)
    ba = fuse_grids(b, a)
    assert np.allclose(ab.occ, ba.occ, atol=1e-12)
    assert np.allclose(ab.fre, ba.fre, atol=1e-12)


def test_fuse_conflicting_cell_example():
    a = EvidentialGrid.vacuous(SPEC)
    b = EvidentialGrid.vacuous(SPEC)
    # evidence equivalents of (0.8, 0, 0.2) and (0, 0.8, 0.2)
    a.occ[0, 0] = 8.0
    b.fre[0, 0] = 8.0
    fused = fuse_grids(a, b)
    op = fused.opinion_at(0, 0)
    assert math.isclose(op.b, 4.0 / 9.0, abs_tol=1e-12)
    assert math.isclose(op.d, 4.0 / 9.0, abs_tol=1e-12)
    assert math.isclose(op.u, 1.0 / 9.0, abs_tol=1e-12)


def test_fuse_rejects_mismatched_grids():
    other = GridSpec(0.2, 50, 41, 0.0, 0.0)
    with pytest.raises(GridSpecMismatchError):
        fuse_grids(EvidentialGrid.vacuous(SPEC), EvidentialGrid.vacuous(other))
    with pytest.raises(GridSpecMismatchError):
        fuse_grids(
            EvidentialGrid.vacuous(SPEC, base_rate=0.5),
            EvidentialGrid.vacuous(SPEC, base_rate=0.4),
        )


# validation and output


def test_scan_validation():
    with pytest.raises(ValueError):
        Scan(Pose(0, 0, 0), np.array([0.0]), np.array([0.0]), np.array([True]), 30.0)
    with pytest.raises(ValueError):
        Scan(Pose(0, 0, 0), np.array([math.pi]), np.array([5.0]), np.array([True]), 30.0)
    with pytest.raises(ValueError):
        Scan(Pose(0, 0, 0), np.array([0.0]), np.array([31.0]), np.array([True]), 30.0)
    with pytest.raises(ValueError):
        # no-return beam must carry max_range
        Scan(Pose(0, 0, 0), np.array([0.0]), np.array([5.0]), np.array([False]), 30.0)
    with pytest.raises(ValueError):
        Scan(Pose(0, 0, 0), np.array([0.0]), np.array([5.0]), np.array([True]), 30.0,
             min_range=30.0)


def test_write_channel_pgm(tmp_path):
    g = integrated_sample_grid(5)
    out = tmp_path / "belief.pgm"
    write_channel_pgm(g, "belief", out)
    lines = out.read_text().splitlines()
    assert lines[0] == "P2"
    body = [line for line in lines[1:] if not line.startswith("#")]
    width, height = (int(v) for v in body[0].split())
    assert (width, height) == (SPEC.width, SPEC.height)
    assert int(body[1]) == 255
    values = " ".join(body[2:]).split()
    assert len(values) == SPEC.width * SPEC.height
    assert all(0 <= int(v) <= 255 for v in values)
    with pytest.raises(ValueError):
        write_channel_pgm(g, "no_such_channel", tmp_path / "x.pgm")


def test_grid_spec_helpers():
    assert SPEC.cell_index(0.0, 0.0) == (0, 0)
    assert SPEC.cell_index(9.99, 7.99) == (49, 39)
    assert SPEC.cell_index(10.0, 4.0) is None
    assert SPEC.cell_center(0, 0) == (0.1, 0.1)
    assert SPEC.contains(5.0, 4.0) and not SPEC.contains(-0.01, 4.0)
    with pytest.raises(ValueError):
        GridSpec(0.0, 10, 10)
    with pytest.raises(ValueError):
        GridSpec(0.2, 0, 10)

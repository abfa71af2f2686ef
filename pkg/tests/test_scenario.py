import math

import numpy as np
import pytest

from gcalc.scenario import (
    DriverPath,
    FamilySpec,
    TimeGrid,
    VolatilityBand,
    VolatilityControl,
    control_family,
    generate_driver,
    generate_drivers,
    realize_path,
)


def test_band_validation():
    VolatilityBand(0.0, 1.0)
    VolatilityBand(0.7, 0.7)
    with pytest.raises(ValueError):
        VolatilityBand(1.0, 0.5)
    with pytest.raises(ValueError):
        VolatilityBand(-0.1, 1.0)
    with pytest.raises(ValueError):
        VolatilityBand(0.0, 0.0)


def test_time_grid():
    grid = TimeGrid(1.0, 7)
    times = grid.times()
    assert times[0] == 0.0
    assert times[-1] == 1.0  # (7*1.0)/7 is exact
    assert len(times) == 8
    assert grid.time(3) == times[3]
    with pytest.raises(ValueError):
        TimeGrid(0.0, 4)
    with pytest.raises(ValueError):
        TimeGrid(1.0, 0)


def test_driver_determinism():
    grid = TimeGrid(1.0, 32)
    a = generate_driver(grid, 123, 5)
    b = generate_driver(grid, 123, 5)
    assert np.array_equal(a.increments, b.increments)
    c = generate_driver(grid, 123, 6)
    assert not np.array_equal(a.increments, c.increments)
    d = generate_driver(grid, 124, 5)
    assert not np.array_equal(a.increments, d.increments)


def test_batch_rows_match_single_paths():
    grid = TimeGrid(2.0, 16)
    batch = generate_drivers(grid, 9, 40)
    for i in (0, 7, 39):
        single = generate_driver(grid, 9, i)
        assert np.array_equal(batch.increments[i], single.increments)


def test_driver_moments_against_clt_bounds():
    # sample mean within 4 sigma/sqrt(N), sample variance within 5 percent
    grid = TimeGrid(1.0, 4)
    batch = generate_drivers(grid, 2024, 100_000)
    dt = grid.dt
    for k in range(4):
        col = batch.increments[:, k]
        assert abs(col.mean()) <= 4.0 * math.sqrt(dt / 100_000)
        assert abs(col.var(ddof=1) - dt) <= 0.05 * dt


def test_realize_zero_driver():
    grid = TimeGrid(1.0, 8)
    control = VolatilityControl(0, np.full(8, 0.8))
    gp = realize_path(DriverPath(np.zeros(8)), control, grid)
    assert np.array_equal(gp.B, np.zeros(9))
    assert np.allclose(gp.QV, 0.64 * grid.times(), rtol=0, atol=1e-15)


def test_realize_constant_unit_control_total_qv():
    grid = TimeGrid(1.0, 16)
    control = VolatilityControl(0, np.ones(16))
    gp = realize_path(generate_driver(grid, 1, 0), control, grid)
    assert gp.QV[-1] == 1.0


def test_realize_qv_within_band():
    band = VolatilityBand(0.5, 1.0)
    grid = TimeGrid(1.0, 64)
    for control in control_family(band, grid, FamilySpec(2, 4, 8)):
        gp = realize_path(generate_driver(grid, 3, 1), control, grid)
        assert 0.25 <= gp.QV[-1] <= 1.0
        # pathwise bound on the increments, computed exactly as constructed
        inc = control.values ** 2 * grid.dt
        assert np.all(inc >= 0.25 * grid.dt)
        assert np.all(inc <= 1.0 * grid.dt)


def test_realize_length_mismatch():
    grid = TimeGrid(1.0, 8)
    control = VolatilityControl(0, np.ones(4))
    with pytest.raises(ValueError):
        realize_path(generate_driver(grid, 1, 0), control, grid)


def test_degenerate_band_is_classical_scaling():
    # scaling by a power of two commutes with rounding, so B == s*W bitwise
    grid = TimeGrid(1.0, 32)
    driver = generate_drivers(grid, 11, 10)
    control = VolatilityControl(0, np.full(32, 0.5))
    gp = realize_path(driver, control, grid)
    W = np.zeros((10, 33))
    np.cumsum(driver.increments, axis=-1, out=W[:, 1:])
    assert np.array_equal(gp.B, 0.5 * W)
    assert np.array_equal(gp.QV, (0.25 * 0.03125) * np.arange(33))


def test_family_extremes_only():
    band = VolatilityBand(0.5, 1.0)
    grid = TimeGrid(1.0, 8)
    fam = control_family(band, grid, FamilySpec(n_levels=2))
    assert len(fam) == 2
    assert np.array_equal(fam[0].values, np.full(8, 0.5))
    assert np.array_equal(fam[1].values, np.full(8, 1.0))


def test_family_three_levels():
    band = VolatilityBand(0.5, 1.0)
    grid = TimeGrid(1.0, 4)
    fam = control_family(band, grid, FamilySpec(n_levels=3))
    assert [c.values[0] for c in fam] == [0.5, 0.75, 1.0]


def test_family_degenerate_band_all_identical():
    band = VolatilityBand(0.8, 0.8)
    grid = TimeGrid(1.0, 8)
    fam = control_family(band, grid, FamilySpec(3, 4, 5))
    for c in fam:
        assert np.array_equal(c.values, np.full(8, 0.8))


def test_family_ids_and_sections():
    band = VolatilityBand(0.5, 1.0)
    grid = TimeGrid(1.0, 16)
    fam = control_family(band, grid, FamilySpec(4, 3, 2))
    assert [c.id for c in fam] == list(range(9))
    for c in fam[4:7]:  # bang-bang section only touches the extremes
        assert set(np.unique(c.values)) <= {0.5, 1.0}
    assert np.array_equal(fam[4].values == 0.5, fam[5].values == 1.0)  # both phases
    for c in fam[7:]:
        assert np.all((c.values >= 0.5) & (c.values <= 1.0))
        assert len(np.unique(c.values)) > 2


def test_family_reproducible():
    band = VolatilityBand(0.5, 1.0)
    grid = TimeGrid(1.0, 16)
    a = control_family(band, grid, FamilySpec(2, 2, 4, seed=5))
    b = control_family(band, grid, FamilySpec(2, 2, 4, seed=5))
    for ca, cb in zip(a, b):
        assert np.array_equal(ca.values, cb.values)
    c = control_family(band, grid, FamilySpec(2, 2, 4, seed=6))
    assert not np.array_equal(a[-1].values, c[-1].values)


def test_family_spec_validation():
    with pytest.raises(ValueError):
        FamilySpec(n_levels=1)
    with pytest.raises(ValueError):
        FamilySpec(n_levels=2, n_switch=-1)
    with pytest.raises(ValueError):
        FamilySpec(n_levels=2, n_random=-2)


def test_controls_are_read_only():
    band = VolatilityBand(0.5, 1.0)
    grid = TimeGrid(1.0, 8)
    fam = control_family(band, grid, FamilySpec(2))
    with pytest.raises(ValueError):
        fam[0].values[0] = 2.0

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fpoutflow import io
from fpoutflow.covering import (DensityVector, StateSpace, build_covering, l1_distance, l1_norm,
                                l1_norm_on_X, project, restrict_to_X, volume_fractions)
from fpoutflow.errors import ConfigurationError, UsageError
from fpoutflow.functions import indicator_box, radial_bump, tensor_bump


def test_unit_interval_four_boxes(unit_interval):
    cov = build_covering(unit_interval, [4])
    assert cov.n_active == 4
    edges = np.append(cov.lower_corners()[:, 0], cov.lower_corners()[-1, 0] + cov.box_size[0])
    np.testing.assert_allclose(edges, [0.0, 0.25, 0.5, 0.75, 1.0])


def test_disk_quadrants_all_active(disk):
    assert build_covering(disk, [2, 2]).n_active == 4


def test_disk_activity_matches_dense_sampling(disk):
    cov = build_covering(disk, [8, 8])
    # oracle: 100 x 100 membership samples per box
    h = 0.25
    s = (np.arange(100) + 0.5) / 100 * h
    count = 0
    for ix in range(8):
        for iy in range(8):
            x = -1 + ix * h + s
            y = -1 + iy * h + s
            X, Y = np.meshgrid(x, y)
            count += bool(np.any(X**2 + Y**2 <= 1.0))
    assert cov.n_active == count


def test_empty_covering_is_rejected():
    space = StateSpace(1, [[0.0, 1.0]], lambda x: np.zeros(len(x), dtype=bool))
    with pytest.raises(ConfigurationError):
        build_covering(space, [4])


def test_bad_box_counts(unit_interval):
    with pytest.raises(ConfigurationError):
        build_covering(unit_interval, [0])
    with pytest.raises(ConfigurationError):
        build_covering(unit_interval, [4, 4])


def test_neighbor_table_is_symmetric(disk):
    cov = build_covering(disk, [9, 7])
    nb = cov.neighbor_table
    for i in range(cov.n_active):
        for k in range(cov.dim):
            j = nb[i, 2 * k + 1]
            if j >= 0:
                assert nb[j, 2 * k] == i
            j = nb[i, 2 * k]
            if j >= 0:
                assert nb[j, 2 * k + 1] == i


def test_project_linear_function(unit_interval):
    cov = build_covering(unit_interval, [4])
    u = project(cov, lambda x: x[:, 0])
    np.testing.assert_allclose(u.values, [0.125, 0.375, 0.625, 0.875], atol=1e-15)


def test_project_constant(square):
    cov = build_covering(square, [5, 3])
    np.testing.assert_allclose(project(cov, lambda x: np.ones(len(x))).values, 1.0)


def test_project_radial_bump_matches_monte_carlo(disk):
    cov = build_covering(disk, [16, 16])
    u = radial_bump([0.1, -0.2], 0.7)
    got = project(cov, u).values
    rng = np.random.default_rng(1)
    pts = cov.lower_corners()[:, None, :] + rng.random((cov.n_active, 200, 2)) * cov.box_size
    vals = u(pts.reshape(-1, 2)) * disk.contains(pts.reshape(-1, 2))
    vals = vals.reshape(cov.n_active, 200)
    mean = vals.mean(axis=1)
    se = vals.std(axis=1, ddof=1) / np.sqrt(200)
    # Gauss nodes see the C^2 edge of the support; allow a quadrature floor
    floor = 1e-5 * np.max(np.abs(got))
    assert np.all(np.abs(got - mean) <= 3 * se + floor)


def test_indicator_uses_midpoint_grid(unit_interval):
    cov = build_covering(unit_interval, [4])
    u = project(cov, indicator_box([0.0], [0.3]))
    # 10 midpoints per box: box [0.25, 0.5) has 2 of 10 below 0.3
    np.testing.assert_allclose(u.values, [1.0, 0.2, 0.0, 0.0])


def test_l1_examples(unit_interval):
    cov = build_covering(unit_interval, [4])
    u = DensityVector(cov, [1.0, 1.0, 1.0, 1.0])
    assert l1_norm(u) == pytest.approx(1.0)
    assert l1_distance(u, u) == 0.0
    cov2 = build_covering(unit_interval, [2])
    assert l1_norm(DensityVector(cov2, [2.0, -1.0])) == pytest.approx(1.5)


def test_cross_level_arithmetic_is_an_error(unit_interval):
    a = DensityVector(build_covering(unit_interval, [4]), np.ones(4))
    b = DensityVector(build_covering(unit_interval, [8]), np.ones(8))
    with pytest.raises(UsageError):
        l1_distance(a, b)
    with pytest.raises(UsageError):
        a + b


def test_restriction_identity_on_box(square):
    cov = build_covering(square, [4, 4])
    u = DensityVector(cov, np.arange(16.0))
    r = restrict_to_X(cov, u)
    np.testing.assert_array_equal(r.values, u.values)
    assert l1_norm_on_X(r) == pytest.approx(l1_norm(u))


def test_restriction_box_inside_disk(disk):
    cov = build_covering(disk, [8, 8])
    i = int(cov.locate([0.1, 0.1])[0])
    u = DensityVector(cov, np.eye(cov.n_active)[i])
    assert l1_norm_on_X(u) == pytest.approx(l1_norm(u))


def test_restriction_half_box_on_disk(disk):
    cov = build_covering(disk, [9, 9])
    # dense-sampling volume fraction oracle
    s = (np.arange(200) + 0.5) / 200
    oracle = []
    for corner in cov.lower_corners():
        X, Y = np.meshgrid(corner[0] + s * cov.box_size[0], corner[1] + s * cov.box_size[1])
        oracle.append(np.mean(X**2 + Y**2 <= 1.0))
    oracle = np.array(oracle)
    i = int(np.argmin(np.abs(oracle - 0.5)))
    assert abs(oracle[i] - 0.5) < 0.05
    u = DensityVector(cov, np.eye(cov.n_active)[i])
    assert l1_norm_on_X(u) == pytest.approx(oracle[i] * cov.box_measure, abs=0.02 * cov.box_measure)
    assert volume_fractions(cov)[i] == pytest.approx(oracle[i], abs=0.02)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=12, max_size=12))
def test_projection_is_idempotent(vals):
    cov = build_covering(StateSpace.box([[0, 1], [0, 2]]), [3, 4])
    v = DensityVector(cov, np.array(vals))
    np.testing.assert_allclose(project(cov, v.interpolant()).values, v.values, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(-0.4, 0.4), st.floats(-0.4, 0.4), st.floats(0.05, 0.5), st.integers(2, 40))
def test_projection_is_l1_nonexpansive(cx, cy, r, n):
    cov = build_covering(StateSpace.box([[-1, 1], [-1, 1]]), [n, n])
    u = tensor_bump([cx, cy], r)  # unit mass, nonnegative, supported in the square
    # quadrature tolerance: 4-point Gauss is accurate once the bump spans a few boxes
    h = 2.0 / n
    tol = 1e-4 if r >= 4 * h else 0.05
    assert l1_norm(project(cov, u)) <= 1.0 + tol


def test_boxes_are_congruent(disk):
    cov = build_covering(disk, [7, 5])
    assert np.all(cov.box_size == cov.box_size[0:2])
    vols = np.full(cov.n_active, cov.box_measure)
    assert np.ptp(vols) == 0.0


@pytest.mark.parametrize("n", [3, 4, 8, 16])
def test_covering_monotone_under_refinement(disk, n):
    rng = np.random.default_rng(n)
    pts = rng.uniform(-1, 1, (20000, 2))
    pts = pts[disk.contains(pts)]
    for k in (n, 2 * n):
        cov = build_covering(disk, [k, k])
        assert np.all(cov.locate(pts) >= 0)


def test_state_space_validation(disk):
    disk.validate()
    bad = StateSpace(1, [[0.0, 1.0]], lambda x: x[:, 0] < 2.0)
    with pytest.raises(ConfigurationError):
        bad.validate()


def test_locate_half_open(unit_interval):
    cov = build_covering(unit_interval, [4])
    np.testing.assert_array_equal(cov.locate([[0.0], [0.25], [0.2499], [1.0], [-0.1]]), [0, 1, 0, -1, -1])


def test_covering_json_roundtrip(tmp_path, disk):
    cov = build_covering(disk, [6, 6])
    io.covering_to_json(cov, tmp_path / "c.json")
    back = io.covering_from_json(tmp_path / "c.json")
    np.testing.assert_array_equal(back.active, cov.active)
    assert back.boxes_per_axis == cov.boxes_per_axis


def test_density_csv_and_binary_roundtrip(tmp_path, unit_interval):
    cov = build_covering(unit_interval, [5])
    u = DensityVector(cov, [0.1, -2.5, 1e-300, 3.0, np.pi])
    io.density_to_csv(u, tmp_path / "u.csv")
    io.density_to_bin(u, tmp_path / "u.bin")
    np.testing.assert_array_equal(io.density_from_csv(tmp_path / "u.csv", cov).values, u.values)
    np.testing.assert_array_equal(io.density_from_bin(tmp_path / "u.bin", cov).values, u.values)
    raw = (tmp_path / "u.bin").read_bytes()
    assert len(raw) == 8 + 8 * 5
    assert int.from_bytes(raw[:8], "little") == 5

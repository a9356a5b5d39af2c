import numpy as np
import pytest
import scipy.sparse as sp

from fpoutflow.covering import build_covering
from fpoutflow.errors import ConfigurationError
from fpoutflow.experiments import catalog_cases
from fpoutflow.fields import constant_drift, linear_1d, rotation, saddle
from fpoutflow.generator import assemble
from fpoutflow.ulam import SamplingSpec, estimate, quotient_matrix, sample_points


def overlap_shift(n, shift):
    """Oracle for a 1D translation by ``shift`` on [0, 1] with ``n`` boxes."""
    edges = np.linspace(0, 1, n + 1)
    h = 1.0 / n
    out = np.zeros((n, n))
    for j in range(n):
        lo, hi = edges[j] + shift, edges[j + 1] + shift
        for i in range(n):
            out[i, j] = max(0.0, min(hi, edges[i + 1]) - max(lo, edges[i])) / h
    return out


@pytest.mark.parametrize("method", ["grid", "montecarlo", "exact"])
def test_zero_time_is_identity(unit_interval, method):
    cov = build_covering(unit_interval, [6])
    U = estimate(constant_drift([1.0]), cov, 0.0, sampling=SamplingSpec(method))
    assert (U.matrix != sp.identity(6)).nnz == 0


@pytest.mark.parametrize("method", ["grid", "exact"])
def test_whole_box_shift(unit_interval, method):
    cov = build_covering(unit_interval, [256])
    U = estimate(constant_drift([1.0]), cov, 1.0 / 256, sampling=SamplingSpec(method))
    np.testing.assert_allclose(U.matrix.toarray(), overlap_shift(256, 1.0 / 256), atol=1e-9)


@pytest.mark.parametrize("method", ["grid", "exact"])
def test_half_box_shift(unit_interval, method):
    cov = build_covering(unit_interval, [4])
    U = estimate(constant_drift([1.0]), cov, 0.125, sampling=SamplingSpec(method))
    expected = np.array([[0.5, 0, 0, 0], [0.5, 0.5, 0, 0], [0, 0.5, 0.5, 0], [0, 0, 0.5, 0.5]])
    np.testing.assert_allclose(U.matrix.toarray(), expected, atol=1e-9)
    np.testing.assert_allclose(U.column_sums(), [1, 1, 1, 0.5], atol=1e-9)


@pytest.mark.parametrize("k", [4, 8, 16])
def test_grid_sampling_error_bounded_by_subgrid_spacing(unit_interval, k):
    cov = build_covering(unit_interval, [10])
    shift = 0.037
    U = estimate(constant_drift([1.0]), cov, shift, sampling=SamplingSpec("grid", per_axis=k))
    assert np.max(np.abs(U.matrix.toarray() - overlap_shift(10, shift))) <= 1.0 / k


def test_exact_linear_1d_against_interval_oracle(unit_interval):
    # phi^t x = x e^t, so box j maps onto [a e^t, b e^t]
    cov = build_covering(unit_interval, [8])
    t = 0.2
    U = estimate(linear_1d(1.0), cov, t, sampling=SamplingSpec("exact")).matrix.toarray()
    edges = np.linspace(0, 1, 9)
    for j in range(8):
        a, b = edges[j], edges[j + 1]
        for i in range(8):
            lo, hi = edges[i] * np.exp(-t), edges[i + 1] * np.exp(-t)  # preimage of box i
            assert U[i, j] == pytest.approx(max(0.0, min(hi, b) - max(lo, a)) / (b - a), abs=1e-7)


def test_exact_quotient_recovers_upwind_generator_in_1d(unit_interval):
    cov = build_covering(unit_interval, [16])
    G = assemble(constant_drift([1.0]), cov).matrix
    Q = quotient_matrix(estimate(constant_drift([1.0]), cov, 1e-4, sampling=SamplingSpec("exact")))
    assert abs(Q - G).max() <= 1e-6


def test_exact_quotient_first_order_for_rotation(square):
    cov = build_covering(square, [16, 16])
    G = assemble(rotation(), cov).matrix
    errs = []
    for t in (1e-2, 1e-3, 1e-4):
        Q = quotient_matrix(estimate(rotation(), cov, t, sampling=SamplingSpec("exact")))
        errs.append(abs(Q - G).sum(axis=0).max())
    assert 5 <= errs[0] / errs[1] <= 20 and 5 <= errs[1] / errs[2] <= 20


def test_exact_2d_drift_against_rectangle_oracle(square):
    cov = build_covering(square, [4, 4])
    t = 0.1
    v = np.array([1.0, 0.6])
    U = estimate(constant_drift(v), cov, t, sampling=SamplingSpec("exact")).matrix.toarray()
    lo = cov.lower_corners()
    h = cov.box_size
    for j in range(cov.n_active):
        moved = lo[j] + v * t
        for i in range(cov.n_active):
            ov = np.clip(np.minimum(moved + h, lo[i] + h) - np.maximum(moved, lo[i]), 0, None)
            assert U[i, j] == pytest.approx(np.prod(ov / h), abs=1e-9)


@pytest.mark.parametrize("name,field,space", catalog_cases())
@pytest.mark.parametrize("mode", ["full", "killed"])
def test_column_sums_in_unit_interval(name, field, space, mode):
    cov = build_covering(space, [8] * space.dim)
    U = estimate(field, cov, 0.3, mode)
    sums = U.column_sums()
    assert np.all(U.matrix.data >= 0)
    assert np.all((sums >= 0) & (sums <= 1 + 1e-12))


def test_killed_is_bounded_by_full(square):
    cov = build_covering(square, [8, 8])
    full = estimate(saddle(), cov, 0.8, "full").matrix
    killed = estimate(saddle(), cov, 0.8, "killed").matrix
    assert (killed - full).max() <= 1e-15


def test_killed_drops_points_that_leave(unit_interval):
    cov = build_covering(unit_interval, [4])
    U = estimate(constant_drift([1.0]), cov, 0.5, "killed")
    np.testing.assert_allclose(U.column_sums(), [1, 1, 0, 0], atol=1e-12)


def test_monte_carlo_is_reproducible(square):
    cov = build_covering(square, [6, 6])
    spec = SamplingSpec("montecarlo", samples=64, seed=42)
    a = estimate(rotation(), cov, 0.3, sampling=spec).matrix
    b = estimate(rotation(), cov, 0.3, sampling=spec).matrix
    c = estimate(rotation(), cov, 0.3, sampling=SamplingSpec("montecarlo", samples=64, seed=43)).matrix
    assert (a != b).nnz == 0
    assert (a != c).nnz > 0


def test_monte_carlo_points_stay_in_boxes(square):
    cov = build_covering(square, [5, 5])
    pts = sample_points(cov, SamplingSpec("montecarlo", samples=50, seed=1))
    idx = cov.locate(pts.reshape(-1, 2)).reshape(cov.n_active, 50)
    assert np.all(idx == np.arange(cov.n_active)[:, None])


def test_exact_requires_full_mode(unit_interval):
    cov = build_covering(unit_interval, [4])
    with pytest.raises(ConfigurationError):
        estimate(constant_drift([1.0]), cov, 0.1, "killed", SamplingSpec("exact"))
    with pytest.raises(ConfigurationError):
        estimate(constant_drift([1.0]), cov, 0.1, "sideways")
    with pytest.raises(ConfigurationError):
        SamplingSpec("psychic")


def test_metadata(square):
    cov = build_covering(square, [4, 4])
    U = estimate(rotation(), cov, 0.2, "killed", SamplingSpec("montecarlo", samples=32, seed=5))
    meta = U.metadata()
    assert meta["samples_per_box"] == 32 and meta["rng_seed"] == 5
    assert meta["mode"] == "killed" and meta["t"] == 0.2 and meta["level"] == 4

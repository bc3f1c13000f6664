import json

import numpy as np
import pytest

from sguq.indices import generate_index_set
from sguq.models import beam_proxy, ishigami
from sguq.surrogate import (
    ExtrapolationWarning,
    Gaussian,
    ParameterSpace,
    Surrogate,
    TensorGrid,
    Uniform,
    build_sparse_grid,
    detail_decomposition_check,
    surrogate_from_json_dict,
    surrogate_to_json_dict,
    tensor_interpolate,
    validation_errors,
)


def uniform_space(bounds):
    return ParameterSpace.from_pairs(
        [(f"v{i + 1}", Uniform(a, b)) for i, (a, b) in enumerate(bounds)])


def random_points(space, n, seed):
    rng = np.random.default_rng(seed)
    box = space.uniform_box()
    return box[0] + (box[1] - box[0]) * rng.random((n, space.n_dims))


# ---------------------------------------------------------------------------
# grid construction
# ---------------------------------------------------------------------------


def test_gsa_grid_has_27_points():
    space = uniform_space([(-1, 1)] * 3)
    grid = build_sparse_grid(space, generate_index_set("max", 3, 1))
    assert grid.n_points == 27


def test_inverse_grid_has_25_points():
    space = uniform_space([(1130, 1450), (-5, 0)])
    grid = build_sparse_grid(space, generate_index_set("sum", 2, 3))
    assert grid.n_points == 25


def test_w0_grid_is_single_level1_knot():
    space = uniform_space([(0, 1), (-2, 4)])
    grid = build_sparse_grid(space, generate_index_set("sum", 2, 0))
    assert grid.n_points == 1
    # the first symmetric Leja point of each interval is its upper endpoint
    assert grid.points.tolist() == [[1.0, 4.0]]


def test_dimension_mismatch_rejected():
    space = uniform_space([(0, 1)] * 2)
    with pytest.raises(ValueError):
        build_sparse_grid(space, generate_index_set("sum", 3, 1))


def test_grid_points_are_distinct():
    space = uniform_space([(0, 1)] * 3)
    grid = build_sparse_grid(space, generate_index_set("sum", 3, 4))
    d = np.abs(grid.points[:, None, :] - grid.points[None, :, :]).max(axis=2)
    np.fill_diagonal(d, 1.0)
    assert d.min() > 1e-12


# ---------------------------------------------------------------------------
# tensor interpolation
# ---------------------------------------------------------------------------


def make_tensor_grid(space, index):
    families = [space.knot_family(n) for n in range(space.n_dims)]
    knots = tuple(f.points(2 * i - 1) for f, i in zip(families, index))
    return TensorGrid(index=tuple(index), knots=knots)


def test_tensor_constant_reproduction():
    space = uniform_space([(0, 1), (0, 1)])
    grid = make_tensor_grid(space, (2, 3))
    vals = np.full(grid.n_points, 4.25)
    v = random_points(space, 50, 1)
    assert np.allclose(tensor_interpolate(grid, vals, v), 4.25, rtol=0, atol=1e-13)


def test_tensor_linear_exactness():
    space = uniform_space([(-2, 3), (0, 1)])
    grid = make_tensor_grid(space, (2, 1))
    vals = grid.points()[:, 0]
    v = random_points(space, 100, 2)
    assert np.allclose(tensor_interpolate(grid, vals, v), v[:, 0], rtol=1e-13, atol=1e-13)


def test_tensor_degree2_exactness():
    space = uniform_space([(-1, 1), (-1, 1)])
    grid = make_tensor_grid(space, (2, 2))
    f = lambda p: p[:, 0] ** 2 * p[:, 1]
    vals = f(grid.points())
    v = random_points(space, 100, 3)
    assert np.allclose(tensor_interpolate(grid, vals, v), f(v), rtol=0, atol=1e-13)


def test_tensor_value_count_mismatch():
    space = uniform_space([(0, 1), (0, 1)])
    grid = make_tensor_grid(space, (2, 2))
    with pytest.raises(ValueError):
        tensor_interpolate(grid, np.zeros(5), np.array([0.5, 0.5]))


# ---------------------------------------------------------------------------
# combination-technique surrogate
# ---------------------------------------------------------------------------


def ishigami_surrogate(w, seed_space=None):
    space = uniform_space([(-np.pi, np.pi)] * 3)
    grid = build_sparse_grid(space, generate_index_set("sum", 3, w))
    return Surrogate.from_model(grid, ishigami, output_names=("f",)), space


def test_evaluate_reproduces_stored_values():
    sur, _ = ishigami_surrogate(3)
    got = sur.evaluate(sur.grid.points)
    ref = sur.values
    scale = np.abs(ref).max()
    assert np.max(np.abs(got - ref)) <= 1e-12 * scale


def test_constant_surrogate_everywhere():
    space = uniform_space([(0, 2), (0, 2)])
    grid = build_sparse_grid(space, generate_index_set("sum", 2, 2))
    sur = Surrogate.from_model(grid, lambda p: np.full((len(p), 1), 3.0))
    v = random_points(space, 200, 4)
    assert np.allclose(sur.evaluate(v), 3.0, rtol=0, atol=1e-12)


def test_partition_of_unity_at_1000_points():
    space = uniform_space([(-1, 1), (0, 5), (2, 3)])
    grid = build_sparse_grid(space, generate_index_set("sum", 3, 3))
    sur = Surrogate.from_model(grid, lambda p: np.ones((len(p), 1)))
    v = random_points(space, 1000, 5)
    assert np.max(np.abs(sur.evaluate(v) - 1.0)) <= 1e-12


def test_ishigami_error_decreases_with_budget():
    space = uniform_space([(-np.pi, np.pi)] * 3)
    v = random_points(space, 200, 6)
    ref = ishigami(v)
    errs = []
    for w in range(1, 6):
        grid = build_sparse_grid(space, generate_index_set("sum", 3, w))
        sur = Surrogate.from_model(grid, ishigami)
        errs.append(np.max(np.abs(sur.evaluate(v) - ref)))
    assert all(e2 < e1 for e1, e2 in zip(errs, errs[1:]))


@pytest.mark.parametrize("w", [1, 2, 3])
def test_max_grid_polynomial_exactness(w):
    # m(w+1) = 2w+1 points per dimension reproduce per-dim degree <= 2w
    space = uniform_space([(-1, 1), (0.5, 2.0)])
    grid = build_sparse_grid(space, generate_index_set("max", 2, w))
    rng = np.random.default_rng(100 + w)
    c1, c2 = rng.normal(size=2 * w + 1), rng.normal(size=2 * w + 1)

    def poly(p):
        return (np.polyval(c1, p[:, 0]) * np.polyval(c2, p[:, 1]))[:, None]

    sur = Surrogate.from_model(grid, poly)
    v = random_points(space, 200, 7)
    ref = poly(v)
    assert np.max(np.abs(sur.evaluate(v) - ref)) <= 1e-10 * np.abs(ref).max()


def test_nan_value_is_rejected_with_point_name():
    space = uniform_space([(0, 1), (0, 1)])
    grid = build_sparse_grid(space, generate_index_set("sum", 2, 1))
    vals = np.ones((grid.n_points, 1))
    vals[2, 0] = np.nan
    with pytest.raises(ValueError, match="grid point 2"):
        Surrogate(grid=grid, values=vals, output_names=("f",))


def test_extrapolation_warning_outside_box():
    space = uniform_space([(0, 1), (0, 1)])
    grid = build_sparse_grid(space, generate_index_set("sum", 2, 2))
    sur = Surrogate.from_model(grid, lambda p: p[:, :1])
    with pytest.warns(ExtrapolationWarning):
        sur.evaluate(np.array([1.5, 0.5]))


def test_gaussian_dims_build_and_evaluate():
    space = ParameterSpace.from_pairs([("t", Gaussian(10.0, 2.0)), ("x", Uniform(0, 1))])
    grid = build_sparse_grid(space, generate_index_set("sum", 2, 3))
    assert grid.n_points == 25
    f = lambda p: (0.5 * p[:, 0] + p[:, 1] ** 2)[:, None]
    sur = Surrogate.from_model(grid, f)
    rng = np.random.default_rng(8)
    v = np.column_stack([rng.normal(10, 2, 100), rng.random(100)])
    ref = f(v)
    assert np.max(np.abs(sur.evaluate(v) - ref)) <= 1e-10 * np.abs(ref).max()


# ---------------------------------------------------------------------------
# hierarchical detail decomposition
# ---------------------------------------------------------------------------


def ishigami_2d(p):
    full = np.column_stack([p[:, 0], p[:, 1], np.full(len(p), 1.234)])
    return ishigami(full)[:, 0]


def beam_first_displacement(p):
    return beam_proxy(p)[:, 0]


@pytest.mark.parametrize("fn,space,mset", [
    (lambda p: p[:, 0] + p[:, 1], uniform_space([(0, 1), (0, 1)]),
     generate_index_set("sum", 2, 2)),
    (ishigami_2d, uniform_space([(-np.pi, np.pi)] * 2),
     generate_index_set("sum", 2, 3)),
    (beam_first_displacement, uniform_space([(1130, 1450), (-5, 0)]),
     generate_index_set("sum", 2, 3)),
])
def test_detail_decomposition_equals_combination(fn, space, mset):
    assert detail_decomposition_check(space, mset, fn, n_points=50, rtol=1e-10, seed=11)


# ---------------------------------------------------------------------------
# validation metrics
# ---------------------------------------------------------------------------


def test_validation_zero_for_identical_model():
    sur, space = ishigami_surrogate(4)
    samples = random_points(space, 30, 12)
    err = validation_errors(sur, lambda p: sur.evaluate(p), samples)
    assert np.all(err.e_ppe == 0.0) and np.all(err.e_mse == 0.0)


def test_validation_single_sample_formula():
    # constant-1 surrogate vs reference 2: both metrics are |2-1|/|2| = 0.5
    space = uniform_space([(0, 1)])
    grid = build_sparse_grid(space, generate_index_set("sum", 1, 0))
    sur = Surrogate.from_model(grid, lambda p: np.ones((len(p), 1)))
    err = validation_errors(sur, np.array([[2.0]]), np.array([[0.3]]))
    assert err.e_ppe[0] == pytest.approx(0.5)
    assert err.e_mse[0] == pytest.approx(0.5)


def test_validation_beam_proxy_converges_below_percent():
    space = uniform_space([(1130, 1450), (-5, 0)])
    samples = random_points(space, 50, 13)
    disp = lambda p: beam_proxy(p)[:, :9]
    prev = None
    for w in range(4):
        grid = build_sparse_grid(space, generate_index_set("sum", 2, w))
        sur = Surrogate.from_model(grid, disp)
        err = validation_errors(sur, disp, samples)
        if prev is not None:
            assert np.all(err.e_ppe < prev.e_ppe)
            assert np.all(err.e_mse < prev.e_mse)
        prev = err
    assert np.all(prev.e_ppe < 1e-2)


def test_validation_skips_zero_reference_samples():
    space = uniform_space([(-1, 1)])
    grid = build_sparse_grid(space, generate_index_set("sum", 1, 2))
    f = lambda p: p[:, :1]  # crosses zero at v = 0
    sur = Surrogate.from_model(grid, f)
    samples = np.array([[0.5], [0.0], [-0.25]])
    err = validation_errors(sur, f, samples)
    assert (1, 0) in err.skipped
    assert np.isfinite(err.e_ppe).all()


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def test_surrogate_json_round_trip_is_exact():
    space = ParameterSpace.from_pairs([("t", Gaussian(3.0, 0.5)), ("x", Uniform(-5, 0))])
    grid = build_sparse_grid(space, generate_index_set("sum", 2, 2))
    sur = Surrogate.from_model(grid, lambda p: np.column_stack([np.sin(p[:, 0]), p[:, 1] ** 3]),
                               output_names=("s", "c"))
    blob = json.dumps(surrogate_to_json_dict(sur))
    back = surrogate_from_json_dict(json.loads(blob))
    assert np.array_equal(back.grid.points, sur.grid.points)
    assert np.array_equal(back.values, sur.values)
    assert back.output_names == sur.output_names
    v = np.array([3.1, -2.0])
    assert back.evaluate(v).tolist() == sur.evaluate(v).tolist()

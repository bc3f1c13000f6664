"""Sparse-grid construction and combination-technique surrogates.

A sparse grid is the union of small Cartesian ("tensor") grids, selected by a
downward-closed multi-index set, evaluated with signed combination
coefficients.  Each tensor interpolant is a tensor-product Lagrange
interpolant; univariate factors are evaluated in second-form barycentric
arithmetic for stability at 7+ points.

The surrogate of a P-valued model stores one value vector per global grid
point, so any number of outputs share a single set of model runs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .indices import (
    MultiIndexSet,
    combination_coefficients,
    index_set_from_json_dict,
    index_set_to_json_dict,
    is_downward_closed,
)
from .knots import GaussianLeja, UniformLeja, knots_for_level

__all__ = [
    "Uniform",
    "Gaussian",
    "Dim",
    "ParameterSpace",
    "TensorGrid",
    "SparseGrid",
    "Surrogate",
    "ExtrapolationWarning",
    "build_sparse_grid",
    "tensor_interpolate",
    "detail_decomposition_check",
    "validation_errors",
    "ValidationErrors",
    "surrogate_to_json_dict",
    "surrogate_from_json_dict",
]

#: two global points closer than this (relative to the per-dim scale) are a bug
DEDUP_RTOL = 1e-12


class ExtrapolationWarning(UserWarning):
    """A surrogate was evaluated outside the box of a uniform parameter."""


@dataclass(frozen=True)
class Uniform:
    a: float
    b: float

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError(f"uniform range requires a < b, got [{self.a}, {self.b}]")


@dataclass(frozen=True)
class Gaussian:
    mean: float
    std: float

    def __post_init__(self):
        if self.std <= 0:
            raise ValueError(f"gaussian std must be > 0, got {self.std}")


@dataclass(frozen=True)
class Dim:
    name: str
    dist: Uniform | Gaussian


@dataclass(frozen=True)
class ParameterSpace:
    """Ordered uncertain parameters; the distribution fixes the knot family."""

    dims: tuple[Dim, ...]

    def __post_init__(self):
        names = [d.name for d in self.dims]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate dimension names in {names}")

    @classmethod
    def from_pairs(cls, pairs) -> "ParameterSpace":
        return cls(dims=tuple(Dim(name, dist) for name, dist in pairs))

    @property
    def n_dims(self) -> int:
        return len(self.dims)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(d.name for d in self.dims)

    def knot_family(self, n: int):
        dist = self.dims[n].dist
        if isinstance(dist, Uniform):
            return UniformLeja(dist.a, dist.b)
        return GaussianLeja(dist.mean, dist.std)

    def is_all_uniform(self) -> bool:
        return all(isinstance(d.dist, Uniform) for d in self.dims)

    def uniform_box(self) -> np.ndarray:
        """(2, N) array of lower/upper bounds; requires all dims uniform."""
        if not self.is_all_uniform():
            raise ValueError("parameter box is only defined when all dims are uniform")
        return np.array([[d.dist.a for d in self.dims], [d.dist.b for d in self.dims]])

    def scales(self) -> np.ndarray:
        """Per-dim length scale: interval width or std."""
        return np.array([
            (d.dist.b - d.dist.a) if isinstance(d.dist, Uniform) else d.dist.std
            for d in self.dims
        ])


@dataclass(frozen=True)
class TensorGrid:
    """Cartesian grid of one multi-index: per-dim knots in generation order."""

    index: tuple[int, ...]
    knots: tuple[np.ndarray, ...]

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(k) for k in self.knots)

    @property
    def n_points(self) -> int:
        return int(np.prod(self.shape))

    def points(self) -> np.ndarray:
        """(n_points, N) array in C order of the knot axes."""
        mesh = np.meshgrid(*self.knots, indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])


def _bary_weights(knots: np.ndarray) -> np.ndarray:
    diff = knots[:, None] - knots[None, :]
    np.fill_diagonal(diff, 1.0)
    return 1.0 / np.prod(diff, axis=1)


def _lagrange_rows(knots: np.ndarray, weights: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Barycentric cardinal-function values; rows sum to 1, exact at knots."""
    diff = v[:, None] - knots[None, :]
    exact = diff == 0.0
    num = weights[None, :] / np.where(exact, 1.0, diff)
    hit = exact.any(axis=1)
    if hit.any():
        num[hit] = exact[hit]
    return num / num.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class SparseGrid:
    """Union of the tensor grids with nonzero combination coefficient."""

    space: ParameterSpace
    index_set: MultiIndexSet
    coefficients: dict[tuple[int, ...], int]
    points: np.ndarray                            # (M, N) deduplicated
    tensor_grids: tuple[TensorGrid, ...]          # only c_i != 0
    tensor_coeffs: tuple[int, ...]
    tensor_maps: tuple[np.ndarray, ...]           # flat grid order -> global ids
    _bary: tuple = field(repr=False, default=())  # per grid: per-dim weights

    @property
    def n_points(self) -> int:
        return len(self.points)


def build_sparse_grid(space: ParameterSpace, mset: MultiIndexSet) -> SparseGrid:
    """Assemble the sparse grid for a space and a downward-closed index set."""
    if mset.dim != space.n_dims:
        raise ValueError(
            f"index set dimension {mset.dim} does not match space dimension {space.n_dims}")
    if not is_downward_closed(mset.indices):
        raise ValueError("index set is not downward closed")
    coeffs = combination_coefficients(mset)
    families = [space.knot_family(n) for n in range(space.n_dims)]

    point_ids: dict[tuple[float, ...], int] = {}
    global_points: list[tuple[float, ...]] = []
    grids, gcoeffs, maps, bary = [], [], [], []
    for idx in mset.indices:
        c = coeffs[idx]
        if c == 0:
            continue
        knots = tuple(knots_for_level(families[n], idx[n]) for n in range(space.n_dims))
        grid = TensorGrid(index=idx, knots=knots)
        ids = np.empty(grid.n_points, dtype=np.int64)
        for j, p in enumerate(map(tuple, grid.points())):
            pid = point_ids.get(p)
            if pid is None:
                pid = len(global_points)
                point_ids[p] = pid
                global_points.append(p)
            ids[j] = pid
        grids.append(grid)
        gcoeffs.append(c)
        maps.append(ids)
        bary.append(tuple(_bary_weights(k) for k in knots))

    points = np.array(global_points)
    _assert_separated(points, space.scales())
    return SparseGrid(
        space=space, index_set=mset, coefficients=coeffs, points=points,
        tensor_grids=tuple(grids), tensor_coeffs=tuple(gcoeffs),
        tensor_maps=tuple(maps), _bary=tuple(bary),
    )


def _assert_separated(points: np.ndarray, scales: np.ndarray):
    # nested knot caching makes duplicates bit-equal; anything closer than
    # DEDUP_RTOL that survived exact dedup indicates a broken knot cache
    m = len(points)
    if m < 2:
        return
    z = points / scales[None, :]
    for start in range(0, m, 512):
        chunk = z[start:start + 512]
        d = np.abs(chunk[:, None, :] - z[None, :, :]).max(axis=2)
        near = d < DEDUP_RTOL
        near[np.arange(len(chunk)), start + np.arange(len(chunk))] = False
        if near.any():
            i, j = np.argwhere(near)[0]
            raise AssertionError(
                f"global points {start + i} and {j} are within {DEDUP_RTOL} relative distance")


def tensor_interpolate(grid: TensorGrid, values: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Evaluate the tensor-product Lagrange interpolant of one grid.

    Parameters
    ----------
    grid : TensorGrid
    values : array
        Model values at grid.points(), shape (n_points,) or (n_points, P).
    v : array
        Evaluation points, shape (N,) or (Q, N).
    """
    v = np.asarray(v, dtype=float)
    single = v.ndim == 1
    V = v[None, :] if single else v
    vals = np.asarray(values, dtype=float)
    scalar_output = vals.ndim == 1
    if scalar_output:
        vals = vals[:, None]
    if vals.shape[0] != grid.n_points:
        raise ValueError(
            f"expected {grid.n_points} values for grid {grid.index}, got {vals.shape[0]}")
    cube = vals.reshape(grid.shape + (vals.shape[1],))
    out = _contract(cube, grid.knots,
                    tuple(_bary_weights(k) for k in grid.knots), V)
    if scalar_output:
        out = out[:, 0]
    return out[0] if single else out


def _contract(cube: np.ndarray, knots, weights, V: np.ndarray) -> np.ndarray:
    rows = [_lagrange_rows(k, w, V[:, n]) for n, (k, w) in enumerate(zip(knots, weights))]
    out = np.einsum("qa,a...->q...", rows[0], cube)
    for r in rows[1:]:
        out = np.einsum("qa,qa...->q...", r, out)
    return out


@dataclass
class Surrogate:
    """Sparse-grid surrogate: grid plus one value row per global point.

    ``values`` has shape (M, P): M global points, P outputs.  The instance is
    treated as immutable once constructed; evaluation is reentrant.
    """

    grid: SparseGrid
    values: np.ndarray
    output_names: tuple[str, ...]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if self.values.shape[0] != self.grid.n_points:
            raise ValueError(
                f"values rows ({self.values.shape[0]}) must match grid points ({self.grid.n_points})")
        if not self.output_names:
            self.output_names = tuple(f"f{k}" for k in range(self.values.shape[1]))
        if len(self.output_names) != self.values.shape[1]:
            raise ValueError("output_names length must match value columns")
        bad = ~np.isfinite(self.values)
        if bad.any():
            i, k = np.argwhere(bad)[0]
            raise ValueError(
                f"non-finite value for output {self.output_names[k]!r} at grid point "
                f"{i} = {self.grid.points[i].tolist()}")
        self._cubes = None

    @property
    def n_outputs(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_model(cls, grid: SparseGrid, model_fn, output_names=()) -> "Surrogate":
        """Fill values by calling model_fn once on all global points."""
        vals = np.asarray(model_fn(grid.points), dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        return cls(grid=grid, values=vals, output_names=tuple(output_names))

    def _tensor_cubes(self):
        if self._cubes is None:
            cubes = []
            for grid, ids in zip(self.grid.tensor_grids, self.grid.tensor_maps):
                cubes.append(self.values[ids].reshape(grid.shape + (self.n_outputs,)))
            self._cubes = tuple(cubes)
        return self._cubes

    def evaluate(self, v: np.ndarray, warn_outside: bool = True) -> np.ndarray:
        """Combination-technique evaluation: sum of c_i times tensor interpolants.

        Accepts a single point (N,) or a batch (Q, N); returns (P,) or (Q, P).
        Points outside a uniform parameter's interval are evaluated by
        polynomial extrapolation and flagged with ExtrapolationWarning.
        """
        v = np.asarray(v, dtype=float)
        single = v.ndim == 1
        V = v[None, :] if single else v
        if V.shape[1] != self.grid.space.n_dims:
            raise ValueError(f"points have dimension {V.shape[1]}, expected {self.grid.space.n_dims}")
        if warn_outside:
            self._warn_outside(V)

        # cardinal rows are shared between tensor grids with equal per-dim level
        row_cache: dict[tuple[int, int], np.ndarray] = {}
        out = np.zeros((len(V), self.n_outputs))
        for grid, c, wts, cube in zip(self.grid.tensor_grids, self.grid.tensor_coeffs,
                                      self.grid._bary, self._tensor_cubes()):
            rows = []
            for n, (knots, w) in enumerate(zip(grid.knots, wts)):
                key = (n, len(knots))
                r = row_cache.get(key)
                if r is None:
                    r = _lagrange_rows(knots, w, V[:, n])
                    row_cache[key] = r
                rows.append(r)
            t = np.einsum("qa,a...->q...", rows[0], cube)
            for r in rows[1:]:
                t = np.einsum("qa,qa...->q...", r, t)
            out += c * t
        return out[0] if single else out

    def _warn_outside(self, V: np.ndarray):
        for n, d in enumerate(self.grid.space.dims):
            if isinstance(d.dist, Uniform):
                if np.any((V[:, n] < d.dist.a) | (V[:, n] > d.dist.b)):
                    warnings.warn(
                        f"evaluating surrogate outside [{d.dist.a}, {d.dist.b}] in "
                        f"dimension {d.name!r}: polynomial extrapolation",
                        ExtrapolationWarning, stacklevel=3)


def detail_decomposition_check(space: ParameterSpace, mset: MultiIndexSet, f,
                               n_points: int = 50, rtol: float = 1e-10,
                               seed: int = 0) -> bool:
    """Verify the hierarchical-surplus form equals the combination technique.

    Both express the same sparse approximation: the sum over the index set of
    multivariate detail operators (each expanded with alternating signs over
    the 0/1 shift cube) must match the coefficient-weighted sum of tensor
    interpolants at random points.  Intended for small sets and cheap f.
    """
    if mset.dim != space.n_dims:
        raise ValueError("index set and space dimensions differ")
    families = [space.knot_family(n) for n in range(space.n_dims)]

    interpolants: dict[tuple[int, ...], tuple[TensorGrid, np.ndarray]] = {}
    for idx in mset.indices:
        knots = tuple(knots_for_level(families[n], idx[n]) for n in range(space.n_dims))
        grid = TensorGrid(index=idx, knots=knots)
        fv = np.asarray(f(grid.points()), dtype=float).reshape(grid.n_points)
        interpolants[idx] = (grid, fv)

    rng = np.random.default_rng(seed)
    box = space.uniform_box()
    V = box[0] + (box[1] - box[0]) * rng.random((n_points, space.n_dims))

    def tensor_eval(idx):
        if any(c < 1 for c in idx):
            return np.zeros(len(V))
        grid, fv = interpolants[idx]
        return tensor_interpolate(grid, fv, V)

    coeffs = combination_coefficients(mset)
    combi = np.zeros(len(V))
    for idx, c in coeffs.items():
        if c != 0:
            combi += c * tensor_eval(idx)

    shifts = list(product((0, 1), repeat=mset.dim))
    hier = np.zeros(len(V))
    for idx in mset.indices:
        for j in shifts:
            sub = tuple(a - b for a, b in zip(idx, j))
            sign = -1.0 if sum(j) % 2 else 1.0
            hier += sign * tensor_eval(sub)

    scale = np.maximum(np.abs(combi), 1e-300)
    return bool(np.all(np.abs(hier - combi) / scale <= rtol))


@dataclass
class ValidationErrors:
    """Relative accuracy of a surrogate against reference model values."""

    e_ppe: np.ndarray          # per output: max relative pointwise error
    e_mse: np.ndarray          # per output: root mean square relative error
    n_samples: int
    skipped: list              # (sample, output) pairs with near-zero reference


def validation_errors(surrogate: Surrogate, reference, samples: np.ndarray) -> ValidationErrors:
    """Max relative pointwise error and relative RMS error over samples.

    ``reference`` is either a callable mapping (Q, N) points to (Q, P) values
    or a precomputed (Q, P) array.  Samples whose reference magnitude falls
    below 1e-14 of the output scale are excluded from both metrics and listed
    in ``skipped`` instead of producing a division by zero.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if len(samples) < 1:
        raise ValueError("at least one validation sample is required")
    ref = reference(samples) if callable(reference) else np.asarray(reference, dtype=float)
    if ref.ndim == 1:
        ref = ref[:, None]
    sur = surrogate.evaluate(samples)
    scale = np.abs(ref).max(axis=0)
    usable = np.abs(ref) >= 1e-14 * np.maximum(scale, 1e-300)[None, :]
    skipped = [(int(i), int(k)) for i, k in np.argwhere(~usable)]

    rel = np.zeros_like(ref)
    rel[usable] = np.abs(ref - sur)[usable] / np.abs(ref)[usable]
    counts = usable.sum(axis=0)
    if np.any(counts == 0):
        raise ValueError("an output has no usable (nonzero-reference) validation samples")
    e_ppe = np.where(usable, rel, -np.inf).max(axis=0)
    e_mse = np.sqrt(np.where(usable, rel ** 2, 0.0).sum(axis=0) / counts)
    return ValidationErrors(e_ppe=e_ppe, e_mse=e_mse, n_samples=len(samples), skipped=skipped)


def _space_to_json(space: ParameterSpace) -> list:
    out = []
    for d in space.dims:
        if isinstance(d.dist, Uniform):
            out.append({"name": d.name, "distribution": "uniform",
                        "range": [d.dist.a, d.dist.b]})
        else:
            out.append({"name": d.name, "distribution": "gaussian",
                        "mean": d.dist.mean, "std": d.dist.std})
    return out


def _space_from_json(data: list) -> ParameterSpace:
    dims = []
    for entry in data:
        kind = entry["distribution"].lower()
        if kind == "uniform":
            a, b = entry["range"]
            dims.append(Dim(entry["name"], Uniform(float(a), float(b))))
        elif kind == "gaussian":
            dims.append(Dim(entry["name"], Gaussian(float(entry["mean"]), float(entry["std"]))))
        else:
            raise ValueError(f"unknown distribution kind {entry['distribution']!r}")
    return ParameterSpace(dims=tuple(dims))


def surrogate_to_json_dict(surrogate: Surrogate) -> dict:
    grid = surrogate.grid
    return {
        "space": _space_to_json(grid.space),
        "index_set": index_set_to_json_dict(grid.index_set, grid.coefficients),
        "points": [[float(x) for x in p] for p in grid.points],
        "values": [[float(x) for x in col] for col in surrogate.values.T],
        "output_names": list(surrogate.output_names),
    }


def surrogate_from_json_dict(data: dict) -> Surrogate:
    space = _space_from_json(data["space"])
    mset, _ = index_set_from_json_dict(data["index_set"])
    grid = build_sparse_grid(space, mset)
    points = np.array(data["points"], dtype=float)
    if points.shape != grid.points.shape or not np.array_equal(points, grid.points):
        raise ValueError("serialized points do not match the rebuilt sparse grid")
    values = np.array(data["values"], dtype=float).T
    return Surrogate(grid=grid, values=values, output_names=tuple(data["output_names"]))

"""Bayesian inverse analysis on a sparse-grid surrogate.

The chain: synthetic noisy measurements -> misfit least squares on the
surrogate -> multi-start Nelder-Mead for the posterior mode (for a uniform
prior and Gaussian noise the MAP is the least-squares minimizer) -> noise
variance from the mean squared residual -> local Gaussian (Laplace)
covariance from finite-difference derivatives -> per-dimension profile
inspection that classifies each parameter as identifiable (Gaussian marginal)
or weakly identifiable (uniform marginal on the profile confidence interval).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .surrogate import Gaussian, ParameterSpace, Surrogate, Uniform

__all__ = [
    "Measurements",
    "MapResult",
    "ClusterMinimum",
    "LaplaceCovariance",
    "PosteriorSpec",
    "InversionError",
    "synthesize_data",
    "least_squares",
    "log_likelihood",
    "find_map",
    "sigma_map",
    "laplace_covariance",
    "profile_likelihood",
    "build_posterior",
]

#: simplex diameter convergence target in box-normalized coordinates
NM_XATOL = 1e-6
NM_MAXITER = 500
#: converged points closer than this (box-normalized) merge into one cluster
CLUSTER_TOL = 1e-3
#: 95% chi-square(1) quantile applied to the profile confidence sets
CHI2_95 = 3.84
#: a profile confidence interval wider than this fraction of the prior range
#: marks the dimension weakly identifiable
FLAT_FRACTION = 0.5
FD_STEP_JACOBIAN = 1e-4
FD_STEP_HESSIAN = 1e-3


class InversionError(RuntimeError):
    """Inverse analysis failed; carries partial results in ``details``."""

    def __init__(self, message, details=None):
        super().__init__(message)
        self.details = details


@dataclass
class Measurements:
    """Displacement data used by the misfit functional.

    ``location_ids`` index output components of the displacement surrogate.
    ``target`` records the generating parameter vector for synthetic data.
    """

    values: np.ndarray
    location_ids: tuple[int, ...]
    noise_std: float
    seed: int | None = None
    target: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.location_ids = tuple(int(i) for i in self.location_ids)
        if len(self.values) != len(self.location_ids):
            raise ValueError("values and location_ids lengths differ")
        if self.noise_std <= 0:
            raise ValueError(f"noise std must be > 0, got {self.noise_std}")
        if self.target is not None:
            self.target = np.asarray(self.target, dtype=float)

    @property
    def n(self) -> int:
        return len(self.values)

    def to_json_dict(self) -> dict:
        out = {
            "values": [float(x) for x in self.values],
            "location_ids": list(self.location_ids),
            "noise_std": self.noise_std,
        }
        if self.seed is not None:
            out["seed"] = self.seed
        if self.target is not None:
            out["target"] = [float(x) for x in self.target]
        return out

    @classmethod
    def from_json_dict(cls, data: dict) -> "Measurements":
        return cls(values=np.array(data["values"], dtype=float),
                   location_ids=tuple(data["location_ids"]),
                   noise_std=float(data["noise_std"]),
                   seed=data.get("seed"),
                   target=None if data.get("target") is None else np.array(data["target"]))


def synthesize_data(model, target, location_ids, noise_std: float, seed: int) -> Measurements:
    """Noisy synthetic measurements: model at the target plus iid Gaussian noise."""
    if noise_std <= 0:
        raise ValueError(f"noise std must be > 0, got {noise_std}")
    target = np.asarray(target, dtype=float)
    outputs = model(target[None, :]) if callable(model) else model.evaluate(target[None, :])
    clean = np.asarray(outputs, dtype=float)[0, list(location_ids)]
    rng = np.random.default_rng(seed)
    noisy = clean + rng.normal(0.0, noise_std, size=clean.shape)
    return Measurements(values=noisy, location_ids=tuple(location_ids),
                        noise_std=noise_std, seed=seed, target=target)


def _surrogate_at(surrogate: Surrogate, meas: Measurements, v, warn_outside=True) -> np.ndarray:
    out = surrogate.evaluate(v, warn_outside=warn_outside)
    return out[..., list(meas.location_ids)]


def least_squares(surrogate: Surrogate, meas: Measurements, v, warn_outside=True) -> float | np.ndarray:
    """Sum of squared misfits between the data and the surrogate at v."""
    pred = _surrogate_at(surrogate, meas, v, warn_outside=warn_outside)
    misfit = meas.values - pred
    ls = np.sum(misfit * misfit, axis=-1)
    return float(ls) if np.ndim(v) == 1 else ls


def log_likelihood(surrogate: Surrogate, meas: Measurements, v, warn_outside=True):
    """Gaussian log-likelihood; its argmax equals the least-squares argmin."""
    ls = least_squares(surrogate, meas, v, warn_outside=warn_outside)
    s2 = meas.noise_std ** 2
    return -0.5 * meas.n * np.log(2.0 * np.pi * s2) - ls / (2.0 * s2)


@dataclass
class ClusterMinimum:
    v: np.ndarray
    ls: float
    start_point: np.ndarray
    n_hits: int = 1


@dataclass
class MapResult:
    v_map: np.ndarray
    ls_min: float
    minima: list            # all clustered local minima
    in_bounds_minima: list  # after the range filter
    n_starts: int
    seed: int


def _fold_into_unit(z: np.ndarray) -> np.ndarray:
    # triangle-wave reflection of each coordinate into [0, 1]
    return 1.0 - np.abs(1.0 - np.mod(z, 2.0))


def _latin_hypercube(n: int, dim: int, seed: int) -> np.ndarray:
    """One stratified sample per row and axis; plain numpy for stream stability."""
    rng = np.random.default_rng(seed)
    strata = np.array([rng.permutation(n) for _ in range(dim)]).T
    return (strata + rng.random((n, dim))) / n


def find_map(surrogate: Surrogate, meas: Measurements, n_starts: int = 16,
             seed: int = 0, use_log_likelihood: bool = False) -> MapResult:
    """Multi-start Nelder-Mead minimization of the misfit least squares.

    Starts are a Latin hypercube over the prior box.  The optimizer works in
    box-normalized coordinates; points leaving the box are reflected back
    inside for the misfit evaluation and charged a quadratic penalty on the
    violation, which keeps the simplex well behaved without clamping.
    Converged points are merged within a small box-normalized distance and
    any representative outside the box is discarded before picking the MAP.
    """
    if n_starts < 4:
        raise ValueError(f"n_starts must be >= 4, got {n_starts}")
    space = surrogate.grid.space
    box = space.uniform_box()
    lo, width = box[0], box[1] - box[0]

    def ls_at(z):
        return least_squares(surrogate, meas, lo + _fold_into_unit(z) * width,
                             warn_outside=False)

    # penalty scale anchored at the box-center misfit so it dominates any
    # interior least-squares value regardless of the data's units
    scale = 1e3 * (1.0 + ls_at(np.full(space.n_dims, 0.5)))
    half_log = 0.5 * meas.n * np.log(2.0 * np.pi * meas.noise_std ** 2)

    def objective(z):
        viol = np.clip(-z, 0.0, None) + np.clip(z - 1.0, 0.0, None)
        val = ls_at(z) + scale * np.sum(viol * viol)
        if use_log_likelihood:
            val = half_log + val / (2.0 * meas.noise_std ** 2)
        return val

    starts = _latin_hypercube(n_starts, space.n_dims, seed)
    raw = []
    for z0 in starts:
        res = minimize(objective, z0, method="Nelder-Mead",
                       options={"xatol": NM_XATOL, "fatol": np.inf,
                                "maxiter": NM_MAXITER, "maxfev": 4 * NM_MAXITER})
        z = _fold_into_unit(res.x)
        v = lo + z * width
        raw.append((v, float(least_squares(surrogate, meas, v, warn_outside=False)),
                    lo + z0 * width))

    raw.sort(key=lambda t: t[1])
    clusters: list[ClusterMinimum] = []
    for v, ls, start in raw:
        if not np.isfinite(ls):
            continue
        for cl in clusters:
            if np.linalg.norm((v - cl.v) / width) < CLUSTER_TOL:
                cl.n_hits += 1
                break
        else:
            clusters.append(ClusterMinimum(v=v, ls=ls, start_point=start))

    in_bounds = [cl for cl in clusters
                 if np.all(cl.v >= box[0] - 1e-9 * width) and np.all(cl.v <= box[1] + 1e-9 * width)]
    if not in_bounds:
        raise InversionError("no in-bounds minimum found", details={"minima": clusters})
    best = min(in_bounds, key=lambda cl: cl.ls)
    return MapResult(v_map=np.clip(best.v, box[0], box[1]), ls_min=best.ls,
                     minima=clusters, in_bounds_minima=in_bounds,
                     n_starts=n_starts, seed=seed)


def sigma_map(ls_min: float, n_measurements: int) -> float:
    """Sample-variance estimate of the measurement noise: LS_min / K."""
    if n_measurements < 1:
        raise ValueError("n_measurements must be >= 1")
    return ls_min / n_measurements


@dataclass
class LaplaceCovariance:
    matrix: np.ndarray
    gauss_newton_fallback: bool
    one_sided_dims: tuple[int, ...]


def _fd_offsets(v: np.ndarray, h: np.ndarray, box: np.ndarray):
    """Per-dim stencil offsets (plus, minus); one-sided at the box edge."""
    plus = np.where(v + h <= box[1], h, 0.0)
    minus = np.where(v - h >= box[0], -h, 0.0)
    return plus, minus


def laplace_covariance(surrogate: Surrogate, meas: Measurements, v_map: np.ndarray,
                       sigma2_map: float,
                       step_jacobian: float = FD_STEP_JACOBIAN,
                       step_hessian: float = FD_STEP_HESSIAN) -> LaplaceCovariance:
    """Gaussian posterior covariance from local curvature at the MAP.

    Builds sigma2 * (J^T J + sum_k M_k H_k)^(-1) with the Jacobian and
    per-measurement Hessians of the surrogate by finite differences
    (one-sided and flagged at a box edge).  If the misfit-weighted Hessian
    term destroys positive definiteness the Gauss-Newton form J^T J is used
    instead.  A singular J^T J raises, naming the unidentified direction.
    """
    space = surrogate.grid.space
    box = space.uniform_box()
    width = box[1] - box[0]
    v_map = np.asarray(v_map, dtype=float)
    ndim = space.n_dims
    k = meas.n

    def u_at(v):
        return _surrogate_at(surrogate, meas, v, warn_outside=False)

    hj = step_jacobian * width
    pj, mj = _fd_offsets(v_map, hj, box)
    one_sided = tuple(int(n) for n in range(ndim) if pj[n] == 0.0 or mj[n] == 0.0)
    jac = np.empty((k, ndim))
    for n in range(ndim):
        vp, vm = v_map.copy(), v_map.copy()
        vp[n] += pj[n]
        vm[n] += mj[n]
        jac[:, n] = (u_at(vp) - u_at(vm)) / (pj[n] - mj[n])

    jtj = jac.T @ jac
    eigvals, eigvecs = np.linalg.eigh(jtj)
    # only structural singularity (an exactly dead direction) is an error; a
    # weakly identifiable direction may carry a near-zero derivative at an
    # interior minimum and then simply gets a huge, finite variance
    if eigvals[-1] <= 0.0 or eigvals[0] <= 0.0:
        null = eigvecs[:, 0]
        names = ", ".join(f"{space.names[n]}: {null[n]:+.3f}" for n in range(ndim))
        raise InversionError(
            f"J^T J is rank deficient; unidentified direction ({names})",
            details={"jacobian": jac})

    hh = step_hessian * width
    ph, mh = _fd_offsets(v_map, hh, box)
    misfit = meas.values - u_at(v_map)
    f0 = u_at(v_map)
    weighted_hessian = np.zeros((ndim, ndim))
    for n in range(ndim):
        vp, vm = v_map.copy(), v_map.copy()
        vp[n] += ph[n]
        vm[n] += mh[n]
        if ph[n] != 0.0 and mh[n] != 0.0:
            d2 = (u_at(vp) - 2.0 * f0 + u_at(vm)) / hh[n] ** 2
        else:
            # shifted three-point stencil entirely on the available side
            s = ph[n] + mh[n]  # +h or -h
            v2 = v_map.copy()
            v2[n] += 2.0 * s
            inner = vp if ph[n] != 0.0 else vm
            d2 = (f0 - 2.0 * u_at(inner) + u_at(v2)) / hh[n] ** 2
        weighted_hessian[n, n] = misfit @ d2
    for n in range(ndim):
        for m in range(n + 1, ndim):
            vpp, vpm, vmp, vmm = (v_map.copy() for _ in range(4))
            vpp[n] += ph[n]; vpp[m] += ph[m]
            vpm[n] += ph[n]; vpm[m] += mh[m]
            vmp[n] += mh[n]; vmp[m] += ph[m]
            vmm[n] += mh[n]; vmm[m] += mh[m]
            cross = (u_at(vpp) - u_at(vpm) - u_at(vmp) + u_at(vmm)) \
                / ((ph[n] - mh[n]) * (ph[m] - mh[m]))
            weighted_hessian[n, m] = weighted_hessian[m, n] = misfit @ cross

    inner = jtj + weighted_hessian
    inner = 0.5 * (inner + inner.T)
    fallback = False
    try:
        np.linalg.cholesky(inner)
    except np.linalg.LinAlgError:
        inner = jtj
        fallback = True
    try:
        cov = sigma2_map * np.linalg.inv(inner)
    except np.linalg.LinAlgError as exc:
        null = eigvecs[:, 0]
        names = ", ".join(f"{space.names[n]}: {null[n]:+.3f}" for n in range(ndim))
        raise InversionError(
            f"J^T J is rank deficient; unidentified direction ({names})",
            details={"jacobian": jac}) from exc
    cov = 0.5 * (cov + cov.T)
    # validate definiteness in correlation form: the per-dim variances may
    # differ by many orders of magnitude, which would swamp a raw eigencheck
    diag = np.diag(cov)
    if not np.all(np.isfinite(cov)) or np.any(diag <= 0.0):
        raise InversionError("posterior covariance is not positive definite",
                             details={"matrix": cov})
    scale = np.sqrt(diag)
    try:
        np.linalg.cholesky(cov / np.outer(scale, scale))
    except np.linalg.LinAlgError:
        raise InversionError("posterior covariance is not positive definite",
                             details={"matrix": cov}) from None
    return LaplaceCovariance(matrix=cov, gauss_newton_fallback=fallback,
                             one_sided_dims=one_sided)


def profile_likelihood(surrogate: Surrogate, meas: Measurements, dim: int,
                       fixed: np.ndarray, grid_size: int = 101):
    """Least-squares profile along one dimension, the others held fixed.

    Returns (grid, ls) arrays; a fixed one-dimensional cut, not a
    re-optimized profile.
    """
    if grid_size < 33:
        raise ValueError(f"grid_size must be >= 33, got {grid_size}")
    space = surrogate.grid.space
    box = space.uniform_box()
    grid = np.linspace(box[0, dim], box[1, dim], grid_size)
    pts = np.tile(np.asarray(fixed, dtype=float), (grid_size, 1))
    pts[:, dim] = grid
    return grid, least_squares(surrogate, meas, pts)


@dataclass
class PosteriorSpec:
    """Independent per-dimension posterior marginals.

    The product form (a Gaussian for each identifiable dimension, a uniform
    on a reduced interval for each weakly identifiable one) is a modeling
    choice recorded here, not a tested property of the joint posterior.
    """

    names: tuple[str, ...]
    marginals: tuple
    classification: tuple[str, ...]
    prior_box: np.ndarray
    sigma2_map: float | None = None
    covariance: np.ndarray | None = None

    @property
    def n_dims(self) -> int:
        return len(self.marginals)

    @classmethod
    def from_prior(cls, space: ParameterSpace) -> "PosteriorSpec":
        box = space.uniform_box()
        return cls(names=space.names,
                   marginals=tuple(d.dist for d in space.dims),
                   classification=tuple("prior" for _ in space.dims),
                   prior_box=box)

    def to_json_dict(self) -> dict:
        marg = []
        for m in self.marginals:
            if isinstance(m, Gaussian):
                marg.append({"type": "gaussian", "mean": m.mean, "std": m.std})
            else:
                marg.append({"type": "uniform", "a": m.a, "b": m.b})
        out = {
            "names": list(self.names),
            "marginals": marg,
            "classification": list(self.classification),
            "prior_box": [[float(x) for x in row] for row in self.prior_box],
        }
        if self.sigma2_map is not None:
            out["sigma2_map"] = float(self.sigma2_map)
        if self.covariance is not None:
            out["covariance"] = [[float(x) for x in row] for row in self.covariance]
        return out

    @classmethod
    def from_json_dict(cls, data: dict) -> "PosteriorSpec":
        marginals = []
        for m in data["marginals"]:
            if m["type"] == "gaussian":
                marginals.append(Gaussian(float(m["mean"]), float(m["std"])))
            elif m["type"] == "uniform":
                marginals.append(Uniform(float(m["a"]), float(m["b"])))
            else:
                raise ValueError(f"unknown marginal type {m['type']!r}")
        cov = data.get("covariance")
        return cls(names=tuple(data["names"]),
                   marginals=tuple(marginals),
                   classification=tuple(data["classification"]),
                   prior_box=np.array(data["prior_box"], dtype=float),
                   sigma2_map=data.get("sigma2_map"),
                   covariance=None if cov is None else np.array(cov, dtype=float))


def build_posterior(map_result: MapResult, covariance: LaplaceCovariance,
                    profiles, space: ParameterSpace, sigma2_map: float,
                    chi2_threshold: float = CHI2_95,
                    flat_fraction: float = FLAT_FRACTION) -> PosteriorSpec:
    """Classify each dimension from its profile and assemble the marginals.

    The confidence set of dimension n collects profile points whose
    least-squares excess over the minimum stays within chi2_threshold times
    the noise variance estimate; the MAP component is always a member.  If
    the smallest interval containing the set spans more than flat_fraction
    of the prior range the dimension is weakly identifiable and gets a
    uniform marginal on that interval; otherwise it gets the Laplace
    Gaussian marginal.
    """
    box = space.uniform_box()
    v_map = map_result.v_map
    level = map_result.ls_min + chi2_threshold * sigma2_map
    marginals, classes = [], []
    for n in range(space.n_dims):
        grid, ls = profiles[n]
        if np.any(~np.isfinite(ls)):
            raise InversionError(f"profile for dimension {space.names[n]!r} contains "
                                 "non-finite values", details={"profile": (grid, ls)})
        members = grid[ls <= level]
        lo = min(members.min(), v_map[n]) if members.size else v_map[n]
        hi = max(members.max(), v_map[n]) if members.size else v_map[n]
        lo = max(lo, box[0, n])
        hi = min(hi, box[1, n])
        frac = (hi - lo) / (box[1, n] - box[0, n])
        if frac > flat_fraction:
            marginals.append(Uniform(float(lo), float(hi)))
            classes.append("weakly_identifiable")
        else:
            std = float(np.sqrt(covariance.matrix[n, n]))
            marginals.append(Gaussian(float(v_map[n]), std))
            classes.append("identifiable")
    return PosteriorSpec(names=space.names, marginals=tuple(marginals),
                         classification=tuple(classes), prior_box=box,
                         sigma2_map=float(sigma2_map), covariance=covariance.matrix)


def inversion_report_json_dict(meas: Measurements, map_result: MapResult,
                               sigma2: float, covariance: LaplaceCovariance,
                               profiles, posterior: PosteriorSpec) -> dict:
    """Full inversion record: data, minima, covariance, profiles, posterior."""
    return {
        "measurements": meas.to_json_dict(),
        "v_map": [float(x) for x in map_result.v_map],
        "ls_min": float(map_result.ls_min),
        "sigma2_map": float(sigma2),
        "n_starts": map_result.n_starts,
        "start_seed": map_result.seed,
        "minima": [
            {"v": [float(x) for x in cl.v], "ls": float(cl.ls),
             "start_point": [float(x) for x in cl.start_point], "n_hits": cl.n_hits}
            for cl in map_result.minima
        ],
        "in_bounds_minima": [
            {"v": [float(x) for x in cl.v], "ls": float(cl.ls)}
            for cl in map_result.in_bounds_minima
        ],
        "covariance": [[float(x) for x in row] for row in covariance.matrix],
        "gauss_newton_fallback": covariance.gauss_newton_fallback,
        "one_sided_dims": list(covariance.one_sided_dims),
        "profiles": [
            {"dim": posterior.names[n], "grid": [float(x) for x in g],
             "ls": [float(x) for x in l]}
            for n, (g, l) in enumerate(profiles)
        ],
        "posterior": posterior.to_json_dict(),
    }


def write_inversion_report(path, *args, **kwargs):
    with open(path, "w") as fh:
        json.dump(inversion_report_json_dict(*args, **kwargs), fh, indent=2)
        fh.write("\n")

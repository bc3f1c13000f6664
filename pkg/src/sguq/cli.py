"""Workflow driver: screening, inversion and forward propagation subcommands.

Usage:
    sguq gsa|invert|forward|pipeline --config <file> [--out <dir>]
         [--validate] [--compare-prior] [--prior-only] [--densities]

One JSON config describes the parameter space, the model handle and the
per-stage options; every random stream has an explicit seed so a rerun with
the same config is byte-identical (set SOURCE_DATE_EPOCH to pin the manifest
timestamp as well).  Stages communicate through files only: the screening
stage writes a keep/drop recommendation, the inversion stage writes the
posterior spec and its full-output surrogate, the forward stage consumes
both.  Exit codes: 0 success, 2 config error, 3 model/protocol error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .forward import (
    BandComparison, estimate_density, propagate, sample_posterior,
    uncertainty_bands, write_bands_csv, write_densities_json,
)
from .indices import generate_index_set
from .inversion import (
    InversionError, Measurements, PosteriorSpec, build_posterior, find_map,
    laplace_covariance, profile_likelihood, sigma_map, synthesize_data,
    write_inversion_report,
)
from .models import ExternalModel, ExternalModelError, register_builtin
from .sobol import rank_parameters, sobol_indices, write_sobol_json
from .surrogate import (
    Dim, Gaussian, ParameterSpace, Surrogate, Uniform, build_sparse_grid,
    surrogate_from_json_dict, surrogate_to_json_dict, validation_errors,
)

EXIT_CONFIG = 2
EXIT_MODEL = 3
EXIT_NUMERICAL = 4

STAGE_DEFAULTS = {
    "gsa": {"kind": "max", "w": 1, "n_samples": 16384, "seed": 0, "threshold": 0.05},
    "inversion": {"kind": "sum", "w": 3, "n_starts": 16, "seed": 0, "start_seed": 1,
                  "chi2_threshold": 3.84, "flat_fraction": 0.5, "profile_grid": 101,
                  "fd_step_jacobian": 1e-4, "fd_step_hessian": 1e-3,
                  "validation_samples": 50, "validation_seed": 0},
    "forward": {"kind": "sum", "w": 3, "n_samples": 10000, "seed": 0, "kde_grid": 512,
                "validation_samples": 50, "validation_seed": 0},
}


class ConfigError(ValueError):
    pass


def _log(msg: str):
    print(f"sguq: {msg}", file=sys.stderr)


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _stage_options(config: dict, stage: str) -> dict:
    opts = dict(STAGE_DEFAULTS[stage])
    opts.update(config.get(stage, {}))
    return opts


def _parse_space(config: dict) -> ParameterSpace:
    try:
        dims = []
        for entry in config["space"]:
            kind = entry["distribution"].lower()
            if kind == "uniform":
                a, b = entry["range"]
                dims.append(Dim(entry["name"], Uniform(float(a), float(b))))
            elif kind == "gaussian":
                dims.append(Dim(entry["name"], Gaussian(float(entry["mean"]), float(entry["std"]))))
            else:
                raise ConfigError(f"unknown distribution {entry['distribution']!r}")
        return ParameterSpace(dims=tuple(dims))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid parameter space: {exc}") from exc


def _make_model(config: dict):
    spec = config.get("model")
    if not isinstance(spec, dict):
        raise ConfigError("config requires a 'model' object")
    if "builtin" in spec:
        try:
            return register_builtin(spec["builtin"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    if "command" in spec:
        try:
            return ExternalModel(
                command=spec["command"], workdir=spec.get("workdir", "."),
                input_names=spec["inputs"], output_names=spec["outputs"],
                timeout=spec.get("timeout", 3600.0),
                output_coordinates=spec.get("coordinates"),
                name=spec.get("name", "external"))
        except KeyError as exc:
            raise ConfigError(f"external model config missing {exc}") from exc
    raise ConfigError("model must specify 'builtin' or 'command'")


class StageModel:
    """Per-stage model view: name-based input projection plus eval accounting.

    Points are keyed on the stage space's full coordinate vector, so two
    stages never share an evaluation (each grid build is a fresh campaign)
    while repeated points within one stage are evaluated once.
    """

    def __init__(self, handle, space: ParameterSpace, fixed: dict | None = None):
        self.handle = handle
        self.space = space
        missing = [n for n in handle.input_names
                   if n not in space.names and n not in (fixed or {})]
        if missing:
            raise ConfigError(f"model inputs {missing} not found in parameter space")
        self._fixed = dict(fixed or {})
        self._cache: dict[tuple, np.ndarray] = {}
        self.evaluations = 0

    def _project(self, batch: np.ndarray) -> np.ndarray:
        cols = []
        for name in self.handle.input_names:
            if name in self.space.names:
                cols.append(batch[:, self.space.names.index(name)])
            else:
                cols.append(np.full(len(batch), self._fixed[name]))
        return np.column_stack(cols)

    def __call__(self, batch: np.ndarray) -> np.ndarray:
        batch = np.atleast_2d(np.asarray(batch, dtype=float))
        keys = [tuple(row) for row in batch]
        todo = [i for i, k in enumerate(keys) if k not in self._cache]
        if todo:
            try:
                fresh = self.handle.evaluate(self._project(batch[todo]))
            except ValueError as exc:
                raise ExternalModelError(
                    f"model {self.handle.name!r} failed on a batch of {len(todo)}: {exc}") from exc
            for j, i in enumerate(todo):
                self._cache[keys[i]] = fresh[j]
            self.evaluations += len(todo)
        return np.array([self._cache[k] for k in keys])


def _output_ids(handle, names_or_ids, group: str):
    """Resolve configured outputs, defaulting to a labeled group if present."""
    if names_or_ids is None:
        ids = getattr(handle, "output_groups", {}).get(group)
        return list(ids) if ids else list(range(handle.n_outputs))
    ids = []
    for o in names_or_ids:
        if isinstance(o, str):
            if o not in handle.output_names:
                raise ConfigError(f"unknown model output {o!r}")
            ids.append(handle.output_names.index(o))
        else:
            ids.append(int(o))
    if not ids:
        raise ConfigError("output selection is empty")
    return ids


def _build_stage_surrogate(space, kind, w, model: StageModel, output_names):
    grid = build_sparse_grid(space, generate_index_set(kind, space.n_dims, w))
    return Surrogate.from_model(grid, model, output_names=output_names)


def _slice_outputs(surrogate: Surrogate, ids, names) -> Surrogate:
    return Surrogate(grid=surrogate.grid, values=surrogate.values[:, ids],
                     output_names=tuple(names))


def _utc_timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = int(epoch) if epoch else int(time.time())
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))


def _config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return "sha256:" + hashlib.sha256(canon.encode()).hexdigest()


def _write_json(path: Path, data):
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def run_gsa(config: dict, out: Path) -> dict:
    opts = _stage_options(config, "gsa")
    space = _parse_space(config)
    handle = _make_model(config)
    model = StageModel(handle, space)
    stage_dir = out / "gsa"
    stage_dir.mkdir(parents=True, exist_ok=True)

    _log(f"gsa: building {opts['kind']} grid, w={opts['w']}, {space.n_dims} dims")
    surrogate = _build_stage_surrogate(space, opts["kind"], opts["w"], model,
                                       handle.output_names)
    _log(f"gsa: {surrogate.grid.n_points} grid points, {model.evaluations} model evaluations")

    participating = _output_ids(handle, opts.get("outputs"), "displacement")
    excluded = set(_output_ids(handle, opts.get("exclude_outputs"), "none")
                   if opts.get("exclude_outputs") else [])
    participating = [i for i in participating if i not in excluded]
    if not participating:
        raise ConfigError("all GSA outputs were excluded")

    result = sobol_indices(surrogate, n_samples=opts["n_samples"], seed=opts["seed"])
    ranking = rank_parameters(result, opts["threshold"], outputs=participating)
    write_sobol_json(stage_dir / "sobol.json", result, opts["threshold"], ranking)
    keep_names = [space.names[i] for i in ranking["keep"]]
    drop_names = [space.names[i] for i in ranking["drop"]]
    _log(f"gsa: keep {keep_names}, drop {drop_names}")
    return {"model_evaluations": model.evaluations,
            "grid_points": surrogate.grid.n_points,
            "files": {"sobol": "gsa/sobol.json"}}


def _reduced_space(config: dict, out: Path) -> tuple[ParameterSpace, dict]:
    """Inversion-stage space: configured dims, else the screening keep list."""
    space = _parse_space(config)
    opts = _stage_options(config, "inversion")
    dims = opts.get("dims")
    if dims is None:
        sobol_file = out / "gsa" / "sobol.json"
        if sobol_file.exists():
            with open(sobol_file) as fh:
                data = json.load(fh)
            dims = [data["dim_names"][i] for i in data.get("keep", range(len(data["dim_names"])))]
        else:
            dims = list(space.names)
    unknown = [d for d in dims if d not in space.names]
    if unknown:
        raise ConfigError(f"inversion dims {unknown} not in parameter space")
    kept = tuple(d for d in space.dims if d.name in dims)
    fixed = {}
    for d in space.dims:
        if d.name not in dims:
            if not isinstance(d.dist, Uniform):
                raise ConfigError(f"cannot fix non-uniform dimension {d.name!r}")
            fixed[d.name] = opts.get("fixed_values", {}).get(
                d.name, 0.5 * (d.dist.a + d.dist.b))
    return ParameterSpace(dims=kept), fixed


def run_invert(config: dict, out: Path, validate: bool = False) -> dict:
    opts = _stage_options(config, "inversion")
    handle = _make_model(config)
    space, fixed = _reduced_space(config, out)
    if not space.is_all_uniform():
        raise ConfigError("inversion requires uniform (prior-stage) dimensions")
    model = StageModel(handle, space, fixed=fixed)
    stage_dir = out / "invert"
    stage_dir.mkdir(parents=True, exist_ok=True)

    _log(f"invert: building {opts['kind']} grid, w={opts['w']}, dims {list(space.names)}"
         + (f", fixed {fixed}" if fixed else ""))
    surrogate = _build_stage_surrogate(space, opts["kind"], opts["w"], model,
                                       handle.output_names)
    _write_json(stage_dir / "surrogate.json", surrogate_to_json_dict(surrogate))
    _log(f"invert: {surrogate.grid.n_points} grid points, {model.evaluations} model evaluations")

    meas_ids = _output_ids(handle, opts.get("measurement_outputs"), "displacement")
    data_evaluations = 0
    if opts.get("data_file"):
        with open(opts["data_file"]) as fh:
            meas = Measurements.from_json_dict(json.load(fh))
        meas_ids = list(meas.location_ids)
    else:
        target = opts.get("target")
        if target is None:
            raise ConfigError("inversion requires 'target' (synthetic data) or 'data_file'")
        if len(target) != space.n_dims:
            raise ConfigError(f"target length {len(target)} != reduced dimension {space.n_dims}")
        if "noise_std" not in opts:
            raise ConfigError("synthetic data requires 'noise_std'")
        box = space.uniform_box()
        if np.any(np.asarray(target) < box[0]) or np.any(np.asarray(target) > box[1]):
            raise ConfigError("synthetic-data target lies outside the prior box")
        # the data-generating run is bookkept separately from the grid budget
        target_model = StageModel(handle, space, fixed=fixed)
        meas = synthesize_data(target_model, np.asarray(target, dtype=float),
                               meas_ids, opts["noise_std"], opts["seed"])
        data_evaluations = target_model.evaluations
    _write_json(stage_dir / "measurements.json", meas.to_json_dict())

    files = {"surrogate": "invert/surrogate.json",
             "measurements": "invert/measurements.json"}
    validation = None
    if validate:
        rng = np.random.default_rng(opts["validation_seed"])
        box = space.uniform_box()
        samples = box[0] + (box[1] - box[0]) * rng.random((opts["validation_samples"], space.n_dims))
        ref = model(samples)[:, meas_ids]
        validation = {"w": [], "n_samples": int(opts["validation_samples"]), "outputs": {}}
        names = [handle.output_names[i] for i in meas_ids]
        per_output = {n: {"e_ppe": [], "e_mse": []} for n in names}
        for w in range(opts["w"] + 1):
            sub_full = _build_stage_surrogate(space, opts["kind"], w, model,
                                              handle.output_names)
            err = validation_errors(_slice_outputs(sub_full, meas_ids, names), ref, samples)
            validation["w"].append(w)
            for j, n in enumerate(names):
                per_output[n]["e_ppe"].append(float(err.e_ppe[j]))
                per_output[n]["e_mse"].append(float(err.e_mse[j]))
        validation["outputs"] = per_output
        _write_json(stage_dir / "validation.json", validation)
        files["validation"] = "invert/validation.json"
        _log(f"invert: validation at w=0..{opts['w']} done")

    meas_surrogate = _slice_outputs(surrogate, meas_ids,
                                    [handle.output_names[i] for i in meas_ids])
    local_meas = Measurements(values=meas.values,
                              location_ids=tuple(range(len(meas_ids))),
                              noise_std=meas.noise_std, seed=meas.seed, target=meas.target)

    _log(f"invert: multi-start MAP search, {opts['n_starts']} starts")
    map_result = find_map(meas_surrogate, local_meas, n_starts=opts["n_starts"],
                          seed=opts["start_seed"])
    s2 = sigma_map(map_result.ls_min, local_meas.n)
    cov = laplace_covariance(meas_surrogate, local_meas, map_result.v_map, s2,
                             step_jacobian=opts["fd_step_jacobian"],
                             step_hessian=opts["fd_step_hessian"])
    profiles = [profile_likelihood(meas_surrogate, local_meas, n, map_result.v_map,
                                   grid_size=opts["profile_grid"])
                for n in range(space.n_dims)]
    posterior = build_posterior(map_result, cov, profiles, space, s2,
                                chi2_threshold=opts["chi2_threshold"],
                                flat_fraction=opts["flat_fraction"])
    write_inversion_report(stage_dir / "inversion.json", local_meas, map_result,
                           s2, cov, profiles, posterior)
    _write_json(stage_dir / "posterior.json", posterior.to_json_dict())
    files["report"] = "invert/inversion.json"
    files["posterior"] = "invert/posterior.json"
    _log(f"invert: v_map={np.round(map_result.v_map, 4).tolist()}, "
         f"sigma2_map={s2:.4g}, classes={list(posterior.classification)}")
    return {"model_evaluations": model.evaluations,
            "data_evaluations": data_evaluations,
            "grid_points": surrogate.grid.n_points,
            "files": files}


def _posterior_space(posterior: PosteriorSpec) -> ParameterSpace:
    dims = []
    for name, marginal in zip(posterior.names, posterior.marginals):
        dims.append(Dim(name, marginal))
    return ParameterSpace(dims=tuple(dims))


def run_forward(config: dict, out: Path, validate: bool = False,
                compare_prior: bool = False, prior_only: bool = False,
                densities: bool = False) -> dict:
    opts = _stage_options(config, "forward")
    handle = _make_model(config)
    stage_dir = out / "forward"
    stage_dir.mkdir(parents=True, exist_ok=True)

    posterior_file = opts.get("posterior_file", str(out / "invert" / "posterior.json"))
    if prior_only:
        space, fixed = _reduced_space(config, out)
        posterior = PosteriorSpec.from_prior(space)
    else:
        if not Path(posterior_file).exists():
            raise ConfigError(f"posterior spec not found: {posterior_file} "
                              "(run the inversion stage or pass --prior-only)")
        with open(posterior_file) as fh:
            posterior = PosteriorSpec.from_json_dict(json.load(fh))
        space_full = _parse_space(config)
        fixed = {}
        for d in space_full.dims:
            if d.name not in posterior.names:
                if not isinstance(d.dist, Uniform):
                    raise ConfigError(f"cannot fix non-uniform dimension {d.name!r}")
                fixed[d.name] = _stage_options(config, "inversion").get(
                    "fixed_values", {}).get(d.name, 0.5 * (d.dist.a + d.dist.b))

    post_space = _posterior_space(posterior)
    model = StageModel(handle, post_space, fixed=fixed)
    qoi_ids = _output_ids(handle, opts.get("qoi_outputs"), "strain")
    qoi_names = tuple(handle.output_names[i] for i in qoi_ids)

    _log(f"forward: building {opts['kind']} grid, w={opts['w']} on the "
         f"{'prior' if prior_only else 'posterior'}-matched space")
    surrogate_full = _build_stage_surrogate(post_space, opts["kind"], opts["w"], model,
                                            handle.output_names)
    qoi_surrogate = _slice_outputs(surrogate_full, qoi_ids, qoi_names)
    _log(f"forward: {qoi_surrogate.grid.n_points} grid points, {model.evaluations} model evaluations")

    files = {}
    validation = None
    if validate:
        samples = sample_posterior(posterior, opts["validation_samples"],
                                   opts["validation_seed"])
        ref = model(samples)[:, qoi_ids]
        validation = {"w": [], "n_samples": int(opts["validation_samples"]), "outputs": {}}
        per_output = {n: {"e_ppe": [], "e_mse": []} for n in qoi_names}
        for w in range(opts["w"] + 1):
            sub_full = _build_stage_surrogate(post_space, opts["kind"], w, model,
                                              handle.output_names)
            err = validation_errors(_slice_outputs(sub_full, qoi_ids, qoi_names), ref, samples)
            validation["w"].append(w)
            for j, n in enumerate(qoi_names):
                per_output[n]["e_ppe"].append(float(err.e_ppe[j]))
                per_output[n]["e_mse"].append(float(err.e_mse[j]))
        validation["outputs"] = per_output
        _write_json(stage_dir / "validation.json", validation)
        files["validation"] = "forward/validation.json"

    if compare_prior and not prior_only:
        prior_space, _ = _reduced_space(config, out)
        if tuple(prior_space.names) != tuple(posterior.names):
            raise ConfigError("prior space dims do not match the posterior spec")
        prior_spec = PosteriorSpec.from_prior(prior_space)
        prior_file = opts.get("prior_surrogate_file", str(out / "invert" / "surrogate.json"))
        if Path(prior_file).exists():
            with open(prior_file) as fh:
                prior_full = surrogate_from_json_dict(json.load(fh))
            prior_surrogate = _slice_outputs(prior_full, qoi_ids, qoi_names)
            _log("forward: prior propagation reuses the inversion-stage surrogate")
        else:
            prior_model = StageModel(handle, prior_space, fixed=fixed)
            prior_fullsur = _build_stage_surrogate(prior_space, opts["kind"], opts["w"],
                                                   prior_model, handle.output_names)
            prior_surrogate = _slice_outputs(prior_fullsur, qoi_ids, qoi_names)
            model.evaluations += prior_model.evaluations
            _log(f"forward: built a fresh prior surrogate (+{prior_model.evaluations} evaluations)")
        comparison = uncertainty_bands(prior_spec, prior_surrogate, posterior,
                                       qoi_surrogate, n=opts["n_samples"],
                                       seed=opts["seed"], kde_grid_size=opts["kde_grid"])
    else:
        samples = sample_posterior(posterior, opts["n_samples"], opts["seed"])
        values = propagate(qoi_surrogate, samples)
        dens = [estimate_density(values[:, j], opts["kde_grid"]) for j in range(values.shape[1])]
        comparison = BandComparison(prior=dens, posterior=dens)

    coords = None
    if getattr(handle, "output_coordinates", None) is not None:
        coords = [float(handle.output_coordinates[i]) for i in qoi_ids]
    write_bands_csv(stage_dir / "bands.csv", comparison, list(qoi_names), coords)
    files["bands"] = "forward/bands.csv"
    if densities:
        write_densities_json(stage_dir / "densities.json", comparison, list(qoi_names))
        files["densities"] = "forward/densities.json"
    _log(f"forward: bands written for {comparison.n_locations} locations, n={opts['n_samples']}")
    return {"model_evaluations": model.evaluations,
            "grid_points": qoi_surrogate.grid.n_points,
            "n_samples": int(opts["n_samples"]),
            "files": files}


def run_pipeline(config: dict, out: Path, validate: bool = False,
                 compare_prior: bool = False, densities: bool = False) -> dict:
    stages = {}
    stages["gsa"] = run_gsa(config, out)
    stages["invert"] = run_invert(config, out, validate=validate)
    stages["forward"] = run_forward(config, out, validate=validate,
                                    compare_prior=compare_prior, densities=densities)
    return stages


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _write_manifest(out: Path, config: dict, stages: dict):
    total = sum(s.get("model_evaluations", 0) for s in stages.values())
    data_evals = sum(s.get("data_evaluations", 0) for s in stages.values())
    manifest = {
        "tool_version": __version__,
        "config_hash": _config_hash(config),
        "created": _utc_timestamp(),
        "stages": stages,
        "total_model_evaluations": total,
        "data_evaluations": data_evals,
    }
    _write_json(out / "manifest.json", manifest)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="sguq", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("gsa", "invert", "forward", "pipeline"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=None)
        p.add_argument("--validate", action="store_true")
        if name in ("forward", "pipeline"):
            p.add_argument("--compare-prior", action="store_true")
            p.add_argument("--densities", action="store_true")
        if name == "forward":
            p.add_argument("--prior-only", action="store_true")
    args = parser.parse_args(argv)

    out = Path(args.out) if args.out else Path("run") / time.strftime("%Y%m%dT%H%M%SZ", time.gmtime())
    out.mkdir(parents=True, exist_ok=True)

    try:
        config = _load_config(args.config)
        if args.command == "gsa":
            stages = {"gsa": run_gsa(config, out)}
        elif args.command == "invert":
            stages = {"invert": run_invert(config, out, validate=args.validate)}
        elif args.command == "forward":
            stages = {"forward": run_forward(config, out, validate=args.validate,
                                             compare_prior=args.compare_prior,
                                             prior_only=args.prior_only,
                                             densities=args.densities)}
        else:
            stages = run_pipeline(config, out, validate=args.validate,
                                  compare_prior=args.compare_prior,
                                  densities=args.densities)
    except ConfigError as exc:
        _log(f"config error: {exc}")
        return EXIT_CONFIG
    except ExternalModelError as exc:
        _log(f"model error: {exc}")
        return EXIT_MODEL
    except InversionError as exc:
        _log(f"numerical failure: {exc}")
        return EXIT_NUMERICAL
    except ValueError as exc:
        _log(f"numerical failure: {exc}")
        return EXIT_NUMERICAL

    _write_manifest(out, config, stages)
    _log(f"done; manifest at {out / 'manifest.json'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

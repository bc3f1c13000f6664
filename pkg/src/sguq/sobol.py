"""Variance-based global sensitivity analysis on a sparse-grid surrogate.

Principal and total Sobol indices are estimated with the Jansen pick-freeze
estimators on two independent uniform sample matrices A and B plus the N
column-swapped hybrids: with V the sample variance over A and B,

    principal_n = (V - mean((f(B) - f(AB_n))^2) / 2) / V
    total_n     = (mean((f(A) - f(AB_n))^2) / 2) / V

where AB_n is A with column n taken from B.  All model evaluations go
through the surrogate, so large sample sizes are cheap.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .surrogate import Surrogate

__all__ = ["SobolResult", "sobol_indices", "rank_parameters", "sobol_result_to_json_dict"]

MIN_SAMPLES = 1024
#: outputs whose sample variance falls below this are flagged degenerate
DEGENERATE_VARIANCE = 1e-28


@dataclass
class SobolResult:
    """Per-output Sobol indices with estimation metadata.

    ``principal`` and ``total`` are (P, N) arrays clipped to [0, 1]; the raw
    unclipped estimates are kept for diagnostics.  ``degenerate`` flags
    outputs with (numerically) zero variance, whose indices are reported 0.
    """

    principal: np.ndarray
    total: np.ndarray
    raw_principal: np.ndarray
    raw_total: np.ndarray
    variance: np.ndarray
    n_samples: int
    seed: int
    degenerate: np.ndarray
    output_names: tuple[str, ...]
    dim_names: tuple[str, ...]


def sobol_indices(surrogate: Surrogate, n_samples: int = 16384, seed: int = 0,
                  sampler: str = "pseudo") -> SobolResult:
    """Jansen estimates of principal and total indices for every output.

    Requires a surrogate over all-uniform dimensions (the screening stage of
    the workflow operates under the prior).  ``sampler`` is "pseudo" for a
    seeded generator or "sobol" for a scrambled low-discrepancy sequence.
    """
    space = surrogate.grid.space
    if not space.is_all_uniform():
        raise ValueError("sobol_indices requires all dimensions uniform")
    if n_samples < MIN_SAMPLES:
        raise ValueError(f"n_samples must be >= {MIN_SAMPLES}, got {n_samples}")
    box = space.uniform_box()
    ndim = space.n_dims

    if sampler == "pseudo":
        rng = np.random.default_rng(seed)
        unit = rng.random((n_samples, 2 * ndim))
    elif sampler == "sobol":
        # A and B come from one 2N-dimensional design so they are jointly
        # low-discrepancy yet mutually unstructured
        from scipy.stats import qmc
        unit = qmc.Sobol(d=2 * ndim, scramble=True, seed=seed).random(n_samples)
    else:
        raise ValueError(f"unknown sampler {sampler!r}; expected 'pseudo' or 'sobol'")
    a = box[0] + (box[1] - box[0]) * unit[:, :ndim]
    b = box[0] + (box[1] - box[0]) * unit[:, ndim:]

    f_a = surrogate.evaluate(a)          # (M, P)
    f_b = surrogate.evaluate(b)
    variance = np.var(np.vstack([f_a, f_b]), axis=0, ddof=1)
    degenerate = variance < DEGENERATE_VARIANCE
    safe_var = np.where(degenerate, 1.0, variance)

    n_out = surrogate.n_outputs
    raw_principal = np.empty((n_out, ndim))
    raw_total = np.empty((n_out, ndim))
    for n in range(ndim):
        ab = a.copy()
        ab[:, n] = b[:, n]
        f_ab = surrogate.evaluate(ab)
        raw_principal[:, n] = (variance - 0.5 * np.mean((f_b - f_ab) ** 2, axis=0)) / safe_var
        raw_total[:, n] = 0.5 * np.mean((f_a - f_ab) ** 2, axis=0) / safe_var
    raw_principal[degenerate, :] = 0.0
    raw_total[degenerate, :] = 0.0

    return SobolResult(
        principal=np.clip(raw_principal, 0.0, 1.0),
        total=np.clip(raw_total, 0.0, 1.0),
        raw_principal=raw_principal,
        raw_total=raw_total,
        variance=variance,
        n_samples=n_samples,
        seed=seed,
        degenerate=degenerate,
        output_names=surrogate.output_names,
        dim_names=space.names,
    )


def rank_parameters(result: SobolResult, threshold: float,
                    outputs=None) -> dict[str, list[int]]:
    """Split dimensions into keep/drop by their worst-case total index.

    A dimension is dropped when its total index stays below ``threshold``
    across every participating output.  ``outputs`` selects the output
    components that take part (indices or names); default all.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    if outputs is None:
        rows = np.arange(len(result.output_names))
    else:
        rows = np.array([
            result.output_names.index(o) if isinstance(o, str) else int(o)
            for o in outputs
        ])
        if rows.size == 0:
            raise ValueError("at least one output must participate in ranking")
    worst = result.total[rows].max(axis=0)
    drop = [n for n in range(worst.size) if worst[n] < threshold]
    keep = [n for n in range(worst.size) if worst[n] >= threshold]
    return {"keep": keep, "drop": drop}


def sobol_result_to_json_dict(result: SobolResult, threshold: float | None = None,
                              ranking: dict | None = None) -> dict:
    out = {
        "dim_names": list(result.dim_names),
        "sample_size": result.n_samples,
        "seed": result.seed,
        "outputs": {
            name: {
                "principal": [float(x) for x in result.principal[k]],
                "total": [float(x) for x in result.total[k]],
                "variance": float(result.variance[k]),
                "degenerate": bool(result.degenerate[k]),
            }
            for k, name in enumerate(result.output_names)
        },
    }
    if threshold is not None:
        out["threshold"] = threshold
    if ranking is not None:
        out["keep"] = ranking["keep"]
        out["drop"] = ranking["drop"]
    return out


def write_sobol_json(path, result: SobolResult, threshold=None, ranking=None):
    with open(path, "w") as fh:
        json.dump(sobol_result_to_json_dict(result, threshold, ranking), fh, indent=2)
        fh.write("\n")

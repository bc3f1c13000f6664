"""Multi-index sets and combination-technique coefficients.

A multi-index is a tuple of positive integer discretization levels, one per
uncertain parameter.  A multi-index set selects which tensor grids enter a
sparse-grid approximation; it must be downward closed for the combination
technique to be valid.  Two standard families are supported:

* ``sum``:  all i with sum(i_n - 1) <= w  (total-degree style, the usual choice)
* ``max``:  all i with max(i_n - 1) <= w  (a full tensor grid in disguise)

Arbitrary user-supplied downward-closed sets are accepted as ``explicit``.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

__all__ = [
    "MultiIndexSet",
    "generate_index_set",
    "explicit_index_set",
    "is_downward_closed",
    "combination_coefficients",
    "index_set_to_json_dict",
    "index_set_from_json_dict",
]

MultiIndex = tuple[int, ...]


@dataclass(frozen=True)
class MultiIndexSet:
    """Immutable, lexicographically ordered collection of multi-indices.

    Attributes
    ----------
    kind : str
        "sum", "max" or "explicit".
    w : int
        Level budget.  For explicit sets this is the largest total level
        sum(i_n - 1) found in the set (informative only).
    dim : int
        Number of parameters; every index has this length.
    indices : tuple of tuples
        The member indices, sorted lexicographically.
    """

    kind: str
    w: int
    dim: int
    indices: tuple[MultiIndex, ...]

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dimension must be >= 1, got {self.dim}")
        if self.w < 0:
            raise ValueError(f"level budget must be >= 0, got {self.w}")
        for idx in self.indices:
            if len(idx) != self.dim:
                raise ValueError(f"index {idx} has length {len(idx)}, expected {self.dim}")
            if any(c < 1 for c in idx):
                raise ValueError(f"index {idx} has a component < 1")

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __contains__(self, idx):
        return tuple(idx) in set(self.indices)


def generate_index_set(kind: str, dim: int, w: int) -> MultiIndexSet:
    """Generate the defining "sum" or "max" multi-index set.

    Parameters
    ----------
    kind : {"sum", "max"}
    dim : int
        Number of parameters, >= 1.
    w : int
        Level budget, >= 0.
    """
    if dim < 1:
        raise ValueError(f"dimension must be >= 1, got {dim}")
    if w < 0:
        raise ValueError(f"level budget must be >= 0, got {w}")
    kind = kind.lower()
    if kind == "max":
        indices = sorted(product(range(1, w + 2), repeat=dim))
    elif kind == "sum":
        indices = []

        def _extend(prefix, remaining):
            if len(prefix) == dim - 1:
                for t in range(remaining + 1):
                    indices.append(tuple(prefix) + (t + 1,))
                return
            for t in range(remaining + 1):
                _extend(prefix + (t + 1,), remaining - t)

        _extend((), w)
        indices.sort()
    else:
        raise ValueError(f"unknown index-set kind {kind!r}; expected 'sum' or 'max'")
    return MultiIndexSet(kind=kind, w=w, dim=dim, indices=tuple(indices))


def explicit_index_set(indices) -> MultiIndexSet:
    """Wrap a user-supplied collection of multi-indices.

    The collection must be nonempty and downward closed.
    """
    idx = sorted({tuple(int(c) for c in i) for i in indices})
    if not idx:
        raise ValueError("empty index collection")
    dim = len(idx[0])
    if not is_downward_closed(idx):
        raise ValueError("index collection is not downward closed")
    w = max(sum(c - 1 for c in i) for i in idx)
    return MultiIndexSet(kind="explicit", w=w, dim=dim, indices=tuple(idx))


def is_downward_closed(indices) -> bool:
    """True iff every backward neighbor i - e_n (where i_n > 1) is a member."""
    members = {tuple(i) for i in indices}
    if not members:
        raise ValueError("empty index collection")
    for idx in members:
        for n, c in enumerate(idx):
            if c > 1:
                neighbor = idx[:n] + (c - 1,) + idx[n + 1:]
                if neighbor not in members:
                    return False
    return True


def combination_coefficients(mset: MultiIndexSet) -> dict[MultiIndex, int]:
    """Combination-technique coefficient of every index in the set.

    c_i = sum over j in {0,1}^dim with i + j in the set of (-1)^(|j|_1).
    Indices with zero coefficient are retained so callers can report the
    full breakdown; the coefficients always sum to 1.
    """
    members = set(mset.indices)
    if not is_downward_closed(members):
        raise ValueError("combination coefficients require a downward-closed set")
    coeffs: dict[MultiIndex, int] = {}
    shifts = list(product((0, 1), repeat=mset.dim))
    for idx in mset.indices:
        c = 0
        for j in shifts:
            if tuple(a + b for a, b in zip(idx, j)) in members:
                c += -1 if sum(j) % 2 else 1
        coeffs[idx] = c
    return coeffs


def index_set_to_json_dict(mset: MultiIndexSet, coeffs: dict[MultiIndex, int] | None = None) -> dict:
    """Serializable form with parallel arrays in lexicographic index order."""
    if coeffs is None:
        coeffs = combination_coefficients(mset)
    return {
        "kind": mset.kind,
        "w": mset.w,
        "N": mset.dim,
        "indices": [list(i) for i in mset.indices],
        "coefficients": [int(coeffs[i]) for i in mset.indices],
    }


def index_set_from_json_dict(data: dict) -> tuple[MultiIndexSet, dict[MultiIndex, int]]:
    indices = tuple(tuple(int(c) for c in i) for i in data["indices"])
    mset = MultiIndexSet(kind=data["kind"], w=int(data["w"]), dim=int(data["N"]), indices=indices)
    coeffs = {i: int(c) for i, c in zip(indices, data["coefficients"])}
    return mset, coeffs

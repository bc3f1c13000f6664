import json
from itertools import product
from math import comb

import pytest

from sguq.indices import (
    MultiIndexSet,
    combination_coefficients,
    explicit_index_set,
    generate_index_set,
    index_set_from_json_dict,
    index_set_to_json_dict,
    is_downward_closed,
)


def brute_force_sum_set(dim, w):
    return sorted(i for i in product(range(1, w + 2), repeat=dim)
                  if sum(c - 1 for c in i) <= w)


def test_sum_2_3_exact_members():
    ms = generate_index_set("sum", 2, 3)
    assert ms.indices == (
        (1, 1), (1, 2), (1, 3), (1, 4),
        (2, 1), (2, 2), (2, 3),
        (3, 1), (3, 2),
        (4, 1),
    )


def test_max_3_1_is_the_lattice_corner():
    ms = generate_index_set("max", 3, 1)
    assert len(ms) == 8
    assert set(ms.indices) == set(product((1, 2), repeat=3))


@pytest.mark.parametrize("dim", [1, 2, 3, 5])
def test_sum_w0_is_singleton(dim):
    ms = generate_index_set("sum", dim, 0)
    assert ms.indices == ((1,) * dim,)


@pytest.mark.parametrize("dim", [1, 2, 3, 4])
@pytest.mark.parametrize("w", [0, 1, 2, 3, 4, 5, 6])
def test_sum_sets_match_brute_force_and_binomial_count(dim, w):
    ms = generate_index_set("sum", dim, w)
    assert list(ms.indices) == brute_force_sum_set(dim, w)
    assert len(ms) == comb(w + dim, dim)


@pytest.mark.parametrize("kind", ["sum", "max"])
@pytest.mark.parametrize("dim", [1, 2, 3, 4])
@pytest.mark.parametrize("w", [0, 1, 2, 3, 4, 5, 6])
def test_generated_sets_are_downward_closed(kind, dim, w):
    ms = generate_index_set(kind, dim, w)
    assert is_downward_closed(ms.indices)


def test_is_downward_closed_examples():
    assert is_downward_closed([(1, 1), (2, 1), (1, 2)])
    assert not is_downward_closed([(1, 1), (2, 2)])
    assert is_downward_closed(generate_index_set("sum", 3, 4).indices)


def test_generate_rejects_bad_arguments():
    with pytest.raises(ValueError):
        generate_index_set("sum", 0, 2)
    with pytest.raises(ValueError):
        generate_index_set("sum", 2, -1)
    with pytest.raises(ValueError):
        generate_index_set("simplex", 2, 1)


def test_fig4_breakdown_coefficients():
    ms = generate_index_set("sum", 2, 3)
    coeffs = combination_coefficients(ms)
    nonzero = {i: c for i, c in coeffs.items() if c != 0}
    assert nonzero == {
        (1, 3): -1, (1, 4): 1,
        (2, 2): -1, (2, 3): 1,
        (3, 1): -1, (3, 2): 1,
        (4, 1): 1,
    }
    # zero-coefficient indices stay in the map
    assert set(coeffs) == set(ms.indices)


def test_w0_coefficients_singleton():
    ms = generate_index_set("sum", 4, 0)
    assert combination_coefficients(ms) == {(1, 1, 1, 1): 1}


def test_max_set_collapses_to_top_corner():
    ms = generate_index_set("max", 3, 1)
    coeffs = combination_coefficients(ms)
    nonzero = {i: c for i, c in coeffs.items() if c != 0}
    assert nonzero == {(2, 2, 2): 1}


@pytest.mark.parametrize("kind", ["sum", "max"])
@pytest.mark.parametrize("dim", [1, 2, 3, 4])
@pytest.mark.parametrize("w", [0, 1, 2, 3, 4, 5, 6])
def test_coefficients_telescope_to_one(kind, dim, w):
    coeffs = combination_coefficients(generate_index_set(kind, dim, w))
    assert sum(coeffs.values()) == 1


def test_coefficients_reject_non_downward_closed():
    ms = MultiIndexSet(kind="explicit", w=1, dim=2, indices=((1, 1), (2, 2)))
    with pytest.raises(ValueError):
        combination_coefficients(ms)


def test_explicit_set_accepts_any_downward_closed_collection():
    ms = explicit_index_set([(1, 1), (2, 1), (3, 1), (1, 2), (2, 2)])
    assert ms.kind == "explicit"
    assert sum(combination_coefficients(ms).values()) == 1
    with pytest.raises(ValueError):
        explicit_index_set([(1, 1), (3, 1)])


def test_json_round_trip():
    ms = generate_index_set("sum", 3, 2)
    coeffs = combination_coefficients(ms)
    blob = json.dumps(index_set_to_json_dict(ms, coeffs))
    ms2, coeffs2 = index_set_from_json_dict(json.loads(blob))
    assert ms2 == ms
    assert coeffs2 == coeffs
    data = json.loads(blob)
    assert data["kind"] == "sum" and data["w"] == 2 and data["N"] == 3

import itertools
import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hpsearch.space import (
    BASELINE_POINT,
    EnumerationRefused,
    InvalidPointError,
    ParamDim,
    ParamSpace,
    cardinality,
    default_space,
    encode,
    enumerate_points,
    sample_uniform,
)


def small_space():
    return ParamSpace((
        ParamDim("x", "integer-range", (0, 1)),
        ParamDim("y", "integer-exponent-base2", (1, 2, 3)),
    ))


def test_default_counts_and_cardinality():
    sp = default_space()
    assert sp.counts == (5, 7, 6, 2, 8, 7, 10, 2)
    assert cardinality(sp) == 5 * 7 * 6 * 2 * 8 * 7 * 10 * 2 == 470_400


def test_trivial_cardinalities():
    assert cardinality(ParamSpace((ParamDim("s", "integer-range", (3, 5)),))) == 2
    assert cardinality(ParamSpace(())) == 1


def test_baseline_derived_values():
    sp = default_space()
    assert sp.validate(BASELINE_POINT) == BASELINE_POINT
    d = sp.derived(BASELINE_POINT)
    assert d == {"b": 5, "c": 1, "r": 64, "s": 3, "l": 0.001, "a": 8, "e": 70, "g": "Yes"}


def test_encode_baseline_by_hand():
    x = encode(default_space(), BASELINE_POINT)
    expected = [4 / 4, 0 / 6, 4 / 5, 0 / 1, 4 / 7, 1 / 6, 6 / 9, 1 / 1]
    np.testing.assert_allclose(x, expected, rtol=0, atol=1e-15)


def test_encode_extremes():
    sp = default_space()
    lo = tuple(d.raw_values[0] for d in sp.dims)
    hi = tuple(d.raw_values[-1] for d in sp.dims)
    assert np.all(encode(sp, lo) == 0.0)
    assert np.all(encode(sp, hi) == 1.0)


def test_singleton_dim_encodes_to_zero():
    sp = ParamSpace((ParamDim("k", "integer-range", (4,)),))
    assert encode(sp, (4,)).tolist() == [0.0]


def test_invalid_point_names_dimension():
    with pytest.raises(InvalidPointError) as err:
        default_space().validate((5, 1, 6, 4, -3, 3, 7, "Yes"))
    assert err.value.dim == "s"
    with pytest.raises(ValueError):
        default_space().validate((5, 1))


def test_enumerate_small_lexicographic():
    pts = enumerate_points(small_space(), 10)
    assert pts == list(itertools.product((0, 1), (1, 2, 3)))


def test_enumerate_default_and_refusal():
    sp = default_space()
    assert len(sp.rank_grid(500_000)) == 470_400
    with pytest.raises(EnumerationRefused):
        enumerate_points(sp, 100_000)


def test_sample_frequency_and_determinism():
    sp = ParamSpace((ParamDim("s", "integer-range", (3, 5)),))
    rng = np.random.default_rng(0)
    draws = [sample_uniform(sp, rng)[0] for _ in range(10_000)]
    assert 0.47 <= draws.count(3) / 10_000 <= 0.53
    a = default_space().sample(np.random.default_rng(3))
    b = default_space().sample(np.random.default_rng(3))
    assert a == b


def test_sample_singleton_space():
    sp = ParamSpace((ParamDim("a", "integer-range", (1,)), ParamDim("g", "categorical", ("No",))))
    assert sample_uniform(sp, np.random.default_rng(1)) == (1, "No")


def test_bad_dimensions_rejected():
    with pytest.raises(ValueError):
        ParamDim("a", "integer-range", ())
    with pytest.raises(ValueError):
        ParamDim("a", "integer-range", (1, 1))
    with pytest.raises(ValueError):
        ParamDim("a", "integer-range", (2, 1))
    with pytest.raises(ValueError):
        ParamDim("a", "float", (1,))
    with pytest.raises(ValueError):
        ParamSpace((ParamDim("a", "integer-range", (1,)), ParamDim("a", "integer-range", (1,))))


def test_json_roundtrip(tmp_path):
    sp = default_space()
    sp.save(tmp_path / "space.json")
    assert ParamSpace.load(tmp_path / "space.json") == sp
    short = ParamSpace.from_dict({"dims": [{"name": "b", "kind": "integer-range", "values": {"min": 1, "max": 5}}]})
    assert short.dims[0].raw_values == (1, 2, 3, 4, 5)
    json.loads((tmp_path / "space.json").read_text())


def test_encode_decode_identity_on_every_point_of_small_space():
    sp = small_space()
    for p in sp.iter_points():
        assert sp.decode(sp.encode(p)) == p


def test_enumeration_length_equals_cardinality():
    sp = small_space()
    assert len(sp.enumerate(sp.cardinality)) == sp.cardinality


@given(st.integers(0, 2**32 - 1))
def test_sample_validates_and_roundtrips(seed):
    sp = default_space()
    p = sp.sample(np.random.default_rng(seed))
    assert sp.validate(p) == p
    x = sp.encode(p)
    assert x.shape == (8,) and np.all((0 <= x) & (x <= 1))
    assert sp.decode(x) == p


@given(st.integers(0, 7), st.integers(0, 4))
def test_encode_rank_monotone(dim, rank):
    sp = default_space()
    d = sp.dims[dim]
    if rank + 1 >= d.count:
        return
    base = [dd.raw_values[0] for dd in sp.dims]
    lo, hi = list(base), list(base)
    lo[dim], hi[dim] = d.raw_values[rank], d.raw_values[rank + 1]
    assert sp.encode(hi)[dim] > sp.encode(lo)[dim]

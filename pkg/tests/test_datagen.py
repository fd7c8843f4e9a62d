import numpy as np
import pytest
from hypothesis import given, strategies as st

from hpsearch import datagen
from hpsearch.datagen import GenConfig, StratificationError, Volume, largest_remainder, stratified_split


@pytest.fixture(scope="module")
def ds7():
    return datagen.generate(GenConfig(seed=7))


def _dummy_volumes(counts):
    vols, vid = [], 0
    for label, n in enumerate(counts):
        for _ in range(n):
            vols.append(Volume(vid, label, np.zeros((1, 4, 4), np.float32)))
            vid += 1
    return vols


def test_generation_is_byte_identical(ds7, tmp_path):
    again = datagen.generate(GenConfig(seed=7))
    datagen.save(ds7, tmp_path / "a")
    datagen.save(again, tmp_path / "b")
    for f in sorted((tmp_path / "a").rglob("*")):
        if f.is_file():
            assert f.read_bytes() == (tmp_path / "b" / f.relative_to(tmp_path / "a")).read_bytes()


def test_majority_share_near_thirty_percent(ds7):
    counts = np.zeros(4)
    for v in ds7.volumes:
        counts[v.label] += v.slice_count
    assert np.argmax(counts) == 0
    assert 0.27 <= counts[0] / counts.sum() <= 0.33


def test_pixels_and_shapes(ds7):
    for v in ds7.volumes:
        assert v.slices.shape[1:] == (16, 16)
        assert v.slices.min() >= 0 and v.slices.max() <= 1


def test_volume_wise_split(ds7):
    seen = {}
    for split in datagen.SPLITS:
        _, _, ids = ds7.arrays(split)
        for vid in set(ids.tolist()):
            assert ds7.split[vid] == split
            assert vid not in seen
            seen[vid] = split
    assert len(seen) == len(ds7.volumes)


def test_split_counts_per_class(ds7):
    for label in range(4):
        got = [sum(1 for v in ds7.volumes_in(s) if v.label == label) for s in datagen.SPLITS]
        assert got == [4, 2, 2]


def test_largest_remainder_examples():
    assert largest_remainder(8, (0.5, 0.25, 0.25)) == [4, 2, 2]
    assert largest_remainder(9, (0.5, 0.25, 0.25)) == [5, 2, 2]
    assert largest_remainder(10, (0.5, 0.25, 0.25)) == [5, 3, 2]


def test_split_of_nine_volumes():
    split = stratified_split(_dummy_volumes([9]), seed=3)
    got = [sum(1 for s in split.values() if s == name) for name in datagen.SPLITS]
    assert got in ([5, 2, 2], [4, 3, 2])


def test_split_ignores_input_order():
    vols = _dummy_volumes([6, 7])
    shuffled = [vols[i] for i in np.random.default_rng(0).permutation(len(vols))]
    assert stratified_split(vols, seed=4) == stratified_split(shuffled, seed=4)


def test_too_few_volumes_rejected():
    with pytest.raises(StratificationError):
        stratified_split(_dummy_volumes([5, 2]))
    with pytest.raises(StratificationError):
        datagen.generate(GenConfig(volumes_per_class=(2, 2, 2, 2)))
    with pytest.raises(ValueError):
        datagen.generate(GenConfig(side=12))
    with pytest.raises(ValueError):
        stratified_split(_dummy_volumes([4]), fractions=(0.5, 0.5, 0.5))


@given(st.lists(st.integers(3, 30), min_size=1, max_size=4), st.integers(0, 1000))
def test_split_counts_within_rounding(counts, seed):
    split = stratified_split(_dummy_volumes(counts), seed=seed)
    vid = 0
    for n in counts:
        names = [split[i] for i in range(vid, vid + n)]
        vid += n
        for name, f in zip(datagen.SPLITS, datagen.FRACTIONS):
            assert abs(names.count(name) - f * n) < 1


@given(st.integers(0, 50))
def test_weighted_class_frequency_is_balanced(seed):
    ds = datagen.generate(GenConfig(volumes_per_class=(4, 5, 4, 6), slice_range=(2, 5), seed=seed))
    _, y, _ = ds.arrays("train")
    w = ds.class_weights
    for c in range(4):
        assert w[c] * np.sum(y == c) == pytest.approx(len(y) / 4, rel=1e-12)


def test_other_seed_keeps_counts(ds7):
    other = datagen.generate(GenConfig(seed=8))
    assert sorted(v.slice_count for v in other.volumes) == sorted(v.slice_count for v in ds7.volumes)
    assert not np.array_equal(other.volumes[0].slices, ds7.volumes[0].slices)


def test_edge_slices_are_fainter(ds7):
    edge, mid = [], []
    for v in ds7.volumes:
        contrast = v.slices.reshape(v.slice_count, -1).std(axis=1)
        edge += [contrast[0], contrast[-1]]
        mid.append(np.median(contrast[1:-1]))
    assert np.mean(edge) < np.mean(mid)


def test_save_load_roundtrip(ds7, tmp_path):
    datagen.save(ds7, tmp_path)
    back = datagen.load(tmp_path)
    assert back.split == ds7.split and back.side == 16 and back.num_classes == 4
    for a, b in zip(ds7.volumes, back.volumes):
        assert a.label == b.label and np.array_equal(a.slices, b.slices)
    raw = (tmp_path / "slices" / "v0000_s000.f32").read_bytes()
    assert len(raw) == 16 * 16 * 4

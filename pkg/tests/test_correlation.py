import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from homopatch.correlation import avg_pool_half, build_volume, sample_slices, window_offsets
from homopatch.featmap import PatchPair
from homopatch.geometry import Homography, project_grid, random_homography, unit_grid

from oracles import correlation_loops, pool_loops, slices_loops


def pair(fa, fb):
    return PatchPair(np.asarray(fa, dtype=np.float32), np.asarray(fb, dtype=np.float32), (0, 0), (0, 0), 0)


def test_zero_features_give_zero_volume():
    v = build_volume(pair(np.zeros((5, 5, 1)), np.ones((5, 5, 1))))
    assert not v.full.any() and not v.half.any()


def test_one_hot_volume():
    fa = np.zeros((5, 5, 1))
    fa[0, 0] = 1.0
    v = build_volume(pair(fa, fa))
    assert v.full[0, 0, 0, 0] == 1.0
    assert v.full.sum() == 1.0


def test_relu_clamps_negative_correlation():
    v = build_volume(pair(np.ones((5, 5, 1)), -np.ones((5, 5, 1))))
    assert not v.full.any()


def test_shapes_odd_w():
    v = build_volume(pair(np.ones((9, 9, 2)), np.ones((9, 9, 2))))
    assert v.full.shape == (9, 9, 9, 9)
    assert v.half.shape == (9, 9, 5, 5)
    # last pooled row/column averages one real row with a zero pad
    assert v.half[0, 0, 4, 0] == pytest.approx(2 * 2.0 / 4)
    assert v.half[0, 0, 4, 4] == pytest.approx(2.0 / 4)


@given(st.integers(0, 2**31), st.sampled_from([3, 5, 9]))
def test_volume_matches_loop_oracle(seed, w):
    rng = np.random.default_rng(seed)
    fa, fb = rng.normal(size=(w, w, 3)), rng.normal(size=(w, w, 3))
    v = build_volume(pair(fa, fb))
    np.testing.assert_allclose(v.full, correlation_loops(fa.astype(np.float32), fb.astype(np.float32)), atol=1e-5)
    assert np.all(v.full >= 0) and np.all(v.half >= 0)
    np.testing.assert_array_equal(v.half, pool_loops(v.full))


@given(st.integers(0, 2**31))
def test_swap_transposes_volume(seed):
    rng = np.random.default_rng(seed)
    fa, fb = rng.normal(size=(5, 5, 4)), rng.normal(size=(5, 5, 4))
    ab = build_volume(pair(fa, fb)).full
    ba = build_volume(pair(fb, fa)).full
    np.testing.assert_allclose(ba, ab.transpose(2, 3, 0, 1), atol=1e-12)


@given(st.integers(0, 2**31), st.integers(1, 8))
def test_pool_matches_loop_oracle_any_size(seed, w):
    full = np.random.default_rng(seed).uniform(size=(2, 2, w, w))
    np.testing.assert_array_equal(avg_pool_half(full), pool_loops(full))


def test_avg_pool_even_exact():
    full = np.arange(16.0).reshape(1, 1, 4, 4)
    np.testing.assert_array_equal(avg_pool_half(full)[0, 0], [[2.5, 4.5], [10.5, 12.5]])


def test_window_offset_order():
    off = window_offsets(1)
    assert tuple(off[0, 2]) == (1.0, -1.0)
    assert tuple(off[1, 1]) == (0.0, 0.0)
    assert tuple(off[2, 0]) == (-1.0, 1.0)


def _volume(seed, w=9, d=4):
    rng = np.random.default_rng(seed)
    return build_volume(pair(rng.normal(size=(w, w, d)), rng.normal(size=(w, w, d))))


def test_identity_slices_are_direct_blocks():
    v = _volume(0)
    s = sample_slices(v, unit_grid(9), 1)
    padded = np.pad(v.full, ((0, 0), (0, 0), (1, 1), (1, 1)))
    for i in range(9):
        for j in range(9):
            np.testing.assert_array_equal(s.values[i, j], padded[i, j, i:i + 3, j:j + 3])


def test_far_projection_gives_zero_slices():
    v = _volume(1)
    s = sample_slices(v, project_grid(Homography.translation(27, 0), unit_grid(9)), 1)
    assert not s.values.any() and not s.half_values.any()


def test_half_pixel_offset_splits_unit_peak():
    full = np.zeros((3, 3, 3, 3))
    full[1, 1, 1, 1] = 1.0
    from homopatch.correlation import CorrelationVolume
    v = CorrelationVolume(full, avg_pool_half(full))
    s = sample_slices(v, unit_grid(3) + [0.5, 0.0], 1)
    # centre of cell (1, 1) sits at x = 1.5: the peak at x = 1 is half-way
    # between offsets -1 and 0 of the window
    np.testing.assert_allclose(s.values[1, 1], [[0, 0, 0], [0.5, 0.5, 0], [0, 0, 0]])


@given(st.integers(0, 2**31), st.sampled_from([1, 2, 3]))
def test_slices_match_brute_force(seed, r):
    rng = np.random.default_rng(seed)
    v = _volume(seed, w=7)
    h = random_homography(rng, 7, 2.5)
    proj = project_grid(h, unit_grid(7))
    s = sample_slices(v, proj, r)
    np.testing.assert_allclose(s.values, slices_loops(v.full, proj, r), atol=1e-9)
    np.testing.assert_allclose(s.half_values, slices_loops(v.half, proj, r, scale=0.5), atol=1e-9)
    assert np.all(s.values >= 0)


def test_sample_slices_rejects_bad_radius_and_shape():
    v = _volume(2)
    with pytest.raises(ValueError):
        sample_slices(v, unit_grid(9), 0)
    with pytest.raises(ValueError):
        sample_slices(v, unit_grid(7), 1)

import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from homopatch.errors import FormatError, InvalidConfig, LevelMismatch, PointOutsidePatch
from homopatch.featmap import COARSE, FINE, FeatureMap, cell_center, coarse_cell, fine_center
from homopatch.geometry import Homography
from homopatch.matcher import (
    PatchMeta,
    ScoreMatrix,
    _matchset,
    coarse_match,
    dual_softmax,
    load_homographies,
    map_point,
    mnn_pairs,
    run_pipeline,
    save_homographies,
    suppressed_matches,
)
from homopatch.refiner import RefinerConfig
from homopatch.synth import synth_scene


def test_two_cell_dual_softmax():
    desc = np.eye(2).reshape(2, 1, 2)
    ca = FeatureMap(desc, COARSE)
    m, sm = coarse_match(ca, FeatureMap(desc, COARSE), 0.2)
    e = np.e
    diag = (e / (e + 1)) ** 2
    off = (1 / (e + 1)) ** 2
    np.testing.assert_allclose(sm.p, [[diag, off], [off, diag]], atol=1e-12)
    assert len(m) == 2
    np.testing.assert_array_equal(m.pa, [[4, 4], [4, 12]])
    np.testing.assert_array_equal(m.pb, m.pa)
    assert m.image_dims == (16, 8, 16, 8)


def test_theta_one_gives_no_matches():
    desc = np.random.default_rng(0).normal(size=(4, 4, 8))
    m, _ = coarse_match(FeatureMap(desc, COARSE), FeatureMap(desc, COARSE), 1.0)
    assert len(m) == 0


@given(st.integers(0, 2**31), st.integers(1, 6), st.integers(1, 6))
def test_dual_softmax_ranges(seed, n, k):
    s = np.random.default_rng(seed).normal(scale=3, size=(n, k))
    p, row, col = dual_softmax(s)
    assert np.all(p > 0) and np.all(p <= 1)
    np.testing.assert_allclose(row.sum(axis=1), 1.0)
    np.testing.assert_allclose(col.sum(axis=0), 1.0)


@given(st.integers(0, 2**31), st.floats(0, 1), st.floats(0, 1))
def test_mnn_unique_and_threshold_monotone(seed, t1, t2):
    lo, hi = sorted((t1, t2))
    rng = np.random.default_rng(seed)
    p, _, _ = dual_softmax(rng.normal(scale=4, size=(rng.integers(1, 20), rng.integers(1, 20))))
    r_lo, c_lo = mnn_pairs(p, lo)
    r_hi, c_hi = mnn_pairs(p, hi)
    assert len(set(r_lo)) == len(r_lo) and len(set(c_lo)) == len(c_lo)
    assert set(zip(r_hi, c_hi)) <= set(zip(r_lo, c_lo))


def _score(p):
    p = np.asarray(p, dtype=np.float64)
    return ScoreMatrix(p, (p.shape[0], 1), (p.shape[1], 1), (8 * p.shape[0], 8, 8 * p.shape[1], 8))


def test_suppressed_many_to_one():
    sm = _score([[0.6, 0.05, 0.05], [0.3, 0.1, 0.05], [0.05, 0.05, 0.7]])
    mnn = _matchset(sm, *mnn_pairs(sm.p, 0.2))
    assert len(mnn) == 2
    sup = suppressed_matches(sm, mnn, 0.2)
    assert len(sup) == 1
    np.testing.assert_array_equal(sup.pa, [cell_center((0, 1))])
    np.testing.assert_array_equal(sup.pb, [cell_center((0, 0))])


def test_suppressed_empty_when_all_mutual():
    sm = _score(np.eye(3) * 0.9 + 0.01)
    mnn = _matchset(sm, *mnn_pairs(sm.p, 0.2))
    assert len(suppressed_matches(sm, mnn, 0.2)) == 0


@given(st.integers(0, 1000), st.integers(0, 1000))
def test_level_round_trip(cx, cy):
    orig = cell_center((cx, cy))
    assert coarse_cell(orig) == (cx, cy)
    fx, fy = fine_center(coarse_cell(orig))
    assert coarse_cell((FINE * fx, FINE * fy)) == (cx, cy)
    assert (FINE * fx, FINE * fy) == (COARSE * cx, COARSE * cy)


def test_coarse_match_checks_levels_and_channels():
    a = FeatureMap(np.ones((2, 2, 3)), COARSE)
    with pytest.raises(LevelMismatch):
        coarse_match(FeatureMap(np.ones((2, 2, 3)), FINE), a)
    with pytest.raises(InvalidConfig):
        coarse_match(a, FeatureMap(np.ones((2, 2, 4)), COARSE))


@pytest.fixture(scope="module")
def identity_scene():
    return synth_scene(0, 64, 64, channels=16, max_corner_disp=0.0)


def test_pipeline_identity_warp(identity_scene):
    s = identity_scene
    res = run_pipeline(s.coarse_a, s.coarse_b, s.fine_a, s.fine_b)
    assert len(res.fine) == len(res.homographies) == len(res.patch_meta) > 0
    cells_a = np.floor(res.coarse.pa / COARSE)
    kept = {m.match_id for m in res.patch_meta}
    expected = {tuple(COARSE * c) for k, c in enumerate(cells_a) if res.coarse.match_id[k] in kept}
    assert {tuple(p) for p in res.fine.pa} == expected
    np.testing.assert_allclose(res.fine.pb, res.fine.pa, atol=0.1)
    assert len(res.fine) + res.n_discarded == len(res.coarse)


def test_pipeline_warped_scene_accuracy():
    s = synth_scene(4, 128, 128, max_corner_disp=2.0)
    fine, homs, meta = run_pipeline(s.coarse_a, s.coarse_b, s.fine_a, s.fine_b)
    from homopatch.evaluate import HomographyOracle, match_epe
    assert match_epe(fine, HomographyOracle(s.h_full)).mean() < 0.5


def test_pipeline_empty_path(identity_scene):
    s = identity_scene
    res = run_pipeline(s.coarse_a, s.coarse_b, s.fine_a, s.fine_b, theta_c=1.0)
    assert len(res.fine) == 0 and res.homographies == [] and res.patch_meta == []


def test_pipeline_rejects_mismatched_sizes(identity_scene):
    s = identity_scene
    small = FeatureMap(s.fine_a.data[:16], FINE)
    with pytest.raises(InvalidConfig):
        run_pipeline(s.coarse_a, s.coarse_b, small, s.fine_b)


def test_map_point_cases(identity_scene):
    s = identity_scene
    res = run_pipeline(s.coarse_a, s.coarse_b, s.fine_a, s.fine_b)
    for k in (0, len(res.patch_meta) - 1):
        m = res.patch_meta[k]
        assert map_point(res.homographies[k], m.center_a, m) == tuple(res.fine.pb[k])
    meta = PatchMeta(0, 0, (12, 20), (16, 20), 9)
    assert map_point(Homography.identity(), (13, 21), PatchMeta(0, 0, (12, 20), (12, 20), 9)) == (26.0, 42.0)
    # local corner (0, 0) of patch A is fine pixel (8, 16); translation adds (1.5, -0.5)
    qx, qy = map_point(Homography.translation(1.5, -0.5), (8, 16), meta)
    assert (qx, qy) == (2 * (16 - 4 + 1.5), 2 * (20 - 4 - 0.5))
    with pytest.raises(PointOutsidePatch):
        map_point(Homography.identity(), (7, 16), meta)


def test_homography_file_round_trip(tmp_path):
    homs = [Homography.translation(0.25, -1), Homography.identity()]
    meta = [PatchMeta(0, 5, (8, 8), (9, 8), 9, 0.75), PatchMeta(1, 7, (12, 8), (12, 8), 9, 0.5, True)]
    save_homographies(tmp_path / "h.json", homs, meta, (32, 32, 32, 32))
    h2, m2, dims = load_homographies(tmp_path / "h.json")
    assert h2 == homs and m2 == meta and dims == (32, 32, 32, 32)


@pytest.mark.parametrize("doc", ["not json", json.dumps({"format": "other"}),
                                 json.dumps({"format": "homopatch-homographies v1", "patches": [{}]})])
def test_homography_file_malformed(tmp_path, doc):
    (tmp_path / "h.json").write_text(doc)
    with pytest.raises(FormatError):
        load_homographies(tmp_path / "h.json")


def test_heavy_config_in_pipeline(identity_scene):
    s = identity_scene
    res = run_pipeline(s.coarse_a, s.coarse_b, s.fine_a, s.fine_b, RefinerConfig(w=17, r=3, k_iters=3))
    assert all(m.w == 17 for m in res.patch_meta)

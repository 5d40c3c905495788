import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from homopatch.errors import FormatError, MissingGroundTruth
from homopatch.evaluate import (
    BENCH_COLUMNS,
    FlowFieldOracle,
    HomographyOracle,
    bench_table,
    corner_auc,
    corner_error,
    epe_pck,
    error_auc,
    fine_loss,
    load_oracle,
    pck_from_epe,
    run_benchmark,
)
from homopatch.geometry import Homography, project_points, random_homography
from homopatch.matchset import MatchSet

DIMS = (64, 64, 64, 64)
IDENTITY = HomographyOracle(Homography.identity())


def matches(pa, pb, kind="fine"):
    pa = np.asarray(pa, dtype=np.float64).reshape(-1, 2)
    n = len(pa)
    return MatchSet(kind, range(n), range(n), pa, pb, np.ones(n), DIMS)


def test_exact_predictions():
    h = random_homography(np.random.default_rng(0), 64, 3.0)
    pa = np.random.default_rng(1).uniform(0, 63, size=(50, 2))
    rep = epe_pck(matches(pa, project_points(h, pa)), HomographyOracle(h))
    assert rep.mean_epe < 1e-12
    assert rep.pck == {1.0: 100.0, 3.0: 100.0, 5.0: 100.0}


def test_two_pixel_offset():
    rep = epe_pck(matches([[10, 10]], [[12, 10]]), IDENTITY)
    assert rep.mean_epe == 2.0
    assert rep.pck == {1.0: 0.0, 3.0: 100.0, 5.0: 100.0}


def test_threshold_is_strict():
    assert pck_from_epe(np.array([1.0]), (1.0,)) == {1.0: 0.0}


def test_empty_matches():
    rep = epe_pck(MatchSet.empty("fine", DIMS), IDENTITY)
    assert rep.n_matches == 0 and rep.mean_epe is None and rep.pck[1.0] == 0.0


@given(st.lists(st.floats(0, 100), min_size=1, max_size=50), st.lists(st.floats(0, 200), min_size=2, max_size=6))
def test_pck_monotone(errors, thresholds):
    ts = sorted(thresholds)
    p = pck_from_epe(np.array(errors), ts)
    values = [p[float(t)] for t in ts]
    assert values == sorted(values)
    assert pck_from_epe(np.array(errors), (np.inf,))[np.inf] == 100.0


def test_report_json_keys():
    rep = epe_pck(matches([[1, 1]], [[1, 1]]), IDENTITY)
    doc = json.loads(rep.to_json())
    assert set(doc["pck"]) == {"1", "3", "5"}
    assert doc["n_matches"] == 1


def test_corner_auc_exact_and_translation():
    h = random_homography(np.random.default_rng(2), 64, 3.0)
    assert corner_auc(h, h, DIMS[:2]) == {3.0: 100.0, 5.0: 100.0, 10.0: 100.0}
    shifted = Homography.translation(4, 0) @ h
    assert corner_error(shifted, h, DIMS[:2]) == pytest.approx(4.0, abs=1e-9)
    auc = corner_auc(shifted, h, DIMS[:2])
    # recall rises linearly from 0 at error 0 to 1 at error 4
    assert auc[3.0] == pytest.approx(0.0)
    assert auc[5.0] == pytest.approx(100 * (0.5 * 4 + 1) / 5)
    assert auc[10.0] == pytest.approx(100 * (0.5 * 4 + 6) / 10)


@given(st.integers(0, 2**31))
def test_corner_auc_symmetric(seed):
    rng = np.random.default_rng(seed)
    a, b = random_homography(rng, 64, 5.0), random_homography(rng, 64, 5.0)
    assert corner_auc(a, b, (64, 64)) == corner_auc(b, a, (64, 64))


def test_error_auc_list():
    auc = error_auc([0.0, 0.0, 20.0, 20.0], (10.0,))
    # half the samples are perfect and recall stays flat until the next error (20 px)
    assert auc[10.0] == pytest.approx(50.0)


def test_fine_loss_unit_offset():
    gt = IDENTITY
    assert fine_loss(matches([[10, 10]], [[10, 10]]), gt, 9) == 0.0
    # 4 fine px = 8 original px = half a w=9 patch
    assert fine_loss(matches([[10, 10]], [[18, 10]]), gt, 9) == pytest.approx(1.0)


def test_fine_loss_dense_average():
    from homopatch.densify import densify_matches
    from homopatch.matcher import PatchMeta
    meta = [PatchMeta(0, 0, (16, 16), (16, 16), 9)]
    d = densify_matches([Homography.translation(0.4, 0)], meta, 2.0, DIMS)
    assert len(d) == 81
    assert fine_loss(d, IDENTITY, 9) == pytest.approx((0.4 / 4) ** 2)


@given(st.integers(0, 2**31))
def test_fine_loss_order_invariant(seed):
    rng = np.random.default_rng(seed)
    pa = rng.uniform(0, 60, size=(20, 2))
    pb = pa + rng.normal(size=(20, 2))
    m = matches(pa, pb)
    perm = rng.permutation(20)
    m2 = MatchSet("fine", perm, perm[::-1], pa[perm], pb[perm], np.ones(20), DIMS)
    assert fine_loss(m, IDENTITY, 9) == pytest.approx(fine_loss(m2, IDENTITY, 9), rel=1e-12)


def test_flow_field_oracle(tmp_path):
    yy, xx = np.mgrid[0:8, 0:8].astype(float)
    field = np.stack([xx + 1.0, yy * 2.0], axis=-1)
    field[7, 7] = np.nan
    np.save(tmp_path / "gt.npy", field)
    oracle = load_oracle(tmp_path / "gt.npy")
    np.testing.assert_allclose(oracle([[2.5, 3.25]]), [[3.5, 6.5]])
    with pytest.raises(MissingGroundTruth):
        oracle([[6.5, 6.5]])
    with pytest.raises(MissingGroundTruth):
        oracle([[20.0, 0.0]])


def test_load_oracle_json(tmp_path):
    h = Homography.translation(1, 2)
    (tmp_path / "a.json").write_text(json.dumps({"h_full": h.to_dict()}))
    (tmp_path / "b.json").write_text(h.to_json())
    (tmp_path / "c.json").write_text("{")
    for name in ("a.json", "b.json"):
        np.testing.assert_allclose(load_oracle(tmp_path / name)([[0, 0]]), [[1, 2]])
    with pytest.raises(FormatError):
        load_oracle(tmp_path / "c.json")


def test_missing_ground_truth_at_infinity():
    m = np.eye(3)
    m[2, 0] = -1.0
    with pytest.raises(MissingGroundTruth):
        HomographyOracle(Homography(m))([[1.0, 0.0]])
    with pytest.raises(FormatError):
        FlowFieldOracle(np.zeros((4, 4)))


def test_benchmark_shape_and_determinism():
    rows = run_benchmark(range(2), ["5/1/1", "9/1/3"], size=(32, 32))
    table = bench_table(rows)
    lines = table.splitlines()
    assert lines[0].split("\t") == list(BENCH_COLUMNS)
    assert [ln.split("\t")[0] for ln in lines[1:]] == ["5/1/1", "9/1/3"]
    again = run_benchmark(range(2), ["5/1/1", "9/1/3"], size=(32, 32))
    for a, b in zip(rows, again):
        assert (a.pck, a.mean_epe, a.n_matches, a.dense_epe) == (b.pck, b.mean_epe, b.n_matches, b.dense_epe)

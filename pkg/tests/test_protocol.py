import warnings

import numpy as np
import pytest

from shadowmarket.detection.protocol import (LabeledData, ProtocolConfig, ProtocolError,
                                             feature_importance, labeled_data, run_protocol,
                                             stratified_folds, stratified_split)
from shadowmarket.detection.svm import SvmParams
from shadowmarket.simgen import build_market

from small_market import small_config

FAST = dict(n_negative_subsets=3, cv_folds=3, params=SvmParams(gamma=0.05))


@pytest.fixture(scope="module")
def data():
    ds, _ = build_market(small_config(seed=3))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return labeled_data(ds, "ABCD")


def test_stratified_split_and_folds():
    rng = np.random.default_rng(0)
    y = np.r_[np.ones(40), -np.ones(60)]
    tr, te = stratified_split(y, 0.7, rng)
    assert (y[tr] > 0).sum() == 28 and (y[tr] < 0).sum() == 42
    assert set(tr).isdisjoint(te) and len(tr) + len(te) == 100
    folds = stratified_folds(y, 10, rng)
    for f in range(10):
        assert (y[folds == f] > 0).sum() == 4


def test_report_shape_and_balance(data):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        r = run_protocol(data, ProtocolConfig(**FAST))
    rep = r.report
    assert [m["mask"] for m in rep["masks"]] == ["A", "AB", "ABC", "ABCD"]
    assert rep["subset_size"] == 2 * rep["n_suspicious"] == 120
    for run in r.runs:
        assert (data.y[run.rows] > 0).sum() == (data.y[run.rows] < 0).sum()
        assert set(run.train).isdisjoint(run.test)
    for m in rep["masks"]:
        assert len(m["runs"]) == 3 and all(len(x["cv_accuracy"]) == 3 for x in m["runs"])
        assert 0.0 <= m["accuracy"]["mean"] <= 1.0
    pct = rep["pooled_confusion"]["percent"]
    assert all(abs(sum(row) - 100.0) <= 0.1 for row in pct)
    assert rep["masks"][-1]["accuracy"]["mean"] >= rep["masks"][0]["accuracy"]["mean"]


def test_negative_subsets_differ(data):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        r = run_protocol(data, ProtocolConfig(**{**FAST, "cv_folds": 0}))
    assert not np.array_equal(r.runs[0].rows, r.runs[1].rows)


def test_seeded_rerun_is_byte_identical(data):
    cfg = ProtocolConfig(**FAST, seed=11)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        a = run_protocol(data, cfg)
        b = run_protocol(data, cfg)
    assert a.report_json() == b.report_json()
    assert a.ablation_csv() == b.ablation_csv() and a.roc_csv("ABCD") == b.roc_csv("ABCD")


def test_parallel_matches_serial(data):
    cfg = ProtocolConfig(**{**FAST, "cv_folds": 0})
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        a = run_protocol(data, cfg)
        b = run_protocol(data, ProtocolConfig(**{**FAST, "cv_folds": 0, "jobs": 2}))
    assert a.report_json() == b.report_json()


def test_protocol_errors(data):
    flipped = LabeledData(data.ids, data.X, data.flags, -data.y, data.mask)
    with pytest.raises(ProtocolError):
        run_protocol(flipped, ProtocolConfig(**FAST))
    one = LabeledData(data.ids, data.X, data.flags, np.ones_like(data.y), data.mask)
    with pytest.raises(ProtocolError):
        run_protocol(one, ProtocolConfig(**FAST))
    with pytest.raises(ValueError):
        ProtocolConfig(cv_folds=1)


def test_noise_feature_unimportant_and_full_shuffle_near_chance(data):
    rng = np.random.default_rng(0)
    noisy = LabeledData(data.ids, data.X.copy(), data.flags, data.y, data.mask)
    j = 3  # social_reputation replaced by pure noise
    noisy.X[:, j] = rng.normal(size=data.y.size)
    cfg = ProtocolConfig(**{**FAST, "cv_folds": 0, "schedule": ("ABCD",)})
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        result = run_protocol(noisy, cfg)
        ranking = feature_importance(noisy, cfg, result)
    by_name = {r["feature"]: r["importance"] for r in ranking}
    assert abs(by_name["social_reputation"]) <= 0.03
    assert [r["rank"] for r in ranking] == list(range(1, 19))

    from shadowmarket.detection.protocol import _capped, permuted_accuracy
    accs = []
    for run in result.runs:
        model = result.final_model("ABCD", run.index)
        X = _capped(noisy, run.test, model.ratio_cap)
        accs.append(permuted_accuracy(model, X, noisy.y[run.test], range(18),
                                      np.random.default_rng(run.index)))
    assert abs(np.mean(accs) - 0.5) <= 0.15

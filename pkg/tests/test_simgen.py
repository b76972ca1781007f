import filecmp
import json

import numpy as np
import pytest

from shadowmarket import metrics
from shadowmarket.model import LEGITIMATE, daily_unfollow_counts, parse_dataset
from shadowmarket.simgen import (InfeasibleConfigError, SimConfig, build_market, generate_market,
                                 perturb_labels)

from small_market import small_config


def _trees_equal(a, b):
    cmp = filecmp.dircmp(a, b)
    if cmp.left_only or cmp.right_only or cmp.funny_files:
        return False
    _, mismatch, errors = filecmp.cmpfiles(a, b, cmp.common_files, shallow=False)
    return not mismatch and not errors and all(
        _trees_equal(a / d, b / d) for d in cmp.common_dirs)


def test_same_seed_byte_identical_trees(tmp_path):
    generate_market(small_config(seed=5), tmp_path / "a")
    generate_market(small_config(seed=5), tmp_path / "b")
    assert _trees_equal(tmp_path / "a", tmp_path / "b")
    generate_market(small_config(seed=6), tmp_path / "c")
    assert not _trees_equal(tmp_path / "a", tmp_path / "c")


def test_generated_dataset_parses_clean(tmp_path):
    truth = generate_market(small_config(seed=1), tmp_path)
    ds = parse_dataset(tmp_path)
    assert ds.errors == ()
    assert truth["planted_signal"] == "unfollow_entropy"
    cadence = 4 * 3600
    for sid, s in ds.series.items():
        if sid.startswith("d_"):
            continue  # retention accounts are sampled hourly
        gaps = np.diff([t.timestamp() for t in s.timestamps])
        assert np.all(gaps == cadence)
    assert len(ds.series[truth["retention_accounts"][0]].snapshots) == 168


def test_zero_phony_gives_only_legitimate():
    ds, _ = build_market(small_config(phony={"count": 0}))
    assert set(ds.labels.values()) == {LEGITIMATE}


def test_one_day_window_with_phony_is_infeasible():
    with pytest.raises(InfeasibleConfigError):
        small_config(window_days=1)
    small_config(window_days=1, phony={"count": 0})


@pytest.mark.parametrize("bad", [
    {"phony": {"count": -1}},
    {"snapshot_cadence_hours": 5},
    {"customers": {"above_average_fraction": 1.5}},
    {"merchants": {"leaders": 20}},
    {"phony": {"ratio_alpha": 0.9}},
])
def test_invalid_configs_rejected(bad):
    with pytest.raises(InfeasibleConfigError):
        small_config(**bad)


def test_partial_edit_keeps_other_sections_stable():
    a, _ = build_market(small_config(seed=2))
    b, _ = build_market(small_config(seed=2, customers={"bio_fraction": 0.1}))
    phony = [k for k, v in a.labels.items() if v != LEGITIMATE]
    assert all(a.accounts[k] == b.accounts[k] for k in phony)


def test_perturb_labels():
    ds, _ = build_market(small_config(seed=0, phony={"count": 40}, legitimate={"count": 60}))
    same, none = perturb_labels(ds, 0.0, 1)
    assert none == [] and same.labels == ds.labels
    flipped_ds, flipped = perturb_labels(ds, 0.1, 1)
    assert len(flipped) == 10
    assert sum(flipped_ds.labels[k] != ds.labels[k] for k in ds.labels) == 10
    with pytest.raises(ValueError):
        perturb_labels(ds, 0.6, 1)


def test_preset_loads_and_has_calibration_block():
    cfg = SimConfig.preset()
    assert cfg["phony"]["count"] == 600 and "calibration" in cfg.data
    assert cfg.digest() == SimConfig.preset().digest()


def test_small_market_phony_signal_direction():
    ds, _ = build_market(small_config(seed=4))
    ent = {k: metrics.unfollow_entropy(daily_unfollow_counts(ds.series[k])) for k in ds.labels}
    phony = [ent[k] for k, v in ds.labels.items() if v != LEGITIMATE]
    legit = [ent[k] for k, v in ds.labels.items() if v == LEGITIMATE]
    assert np.mean(phony) > np.mean(legit) + 0.3

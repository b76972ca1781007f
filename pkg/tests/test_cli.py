import json
from pathlib import Path

import pytest

from shadowmarket.cli import main
from shadowmarket.model import Merchant, Promise, Dataset, write_dataset

from small_market import SMALL

FAST = ["--subsets", "2", "--folds", "3", "--gamma", "0.05"]


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "small.json"
    cfg.write_text(json.dumps(SMALL))
    assert main(["simulate", "--config", str(cfg), "--seed", "7", "--out", str(root / "d")]) == 0
    return root


def _err(capsys):
    line = capsys.readouterr().err.strip().splitlines()[-1]
    return json.loads(line)


def test_simulate_then_validate(dataset, capsys):
    assert main(["validate", str(dataset / "d")]) == 0
    assert (dataset / "d" / "run_manifest.json").exists()
    assert (dataset / "d" / "ground_truth.json").exists()


def test_validate_reports_bad_snapshot(tmp_path, capsys):
    (tmp_path / "snapshots").mkdir()
    (tmp_path / "snapshots" / "x.jsonl").write_text(
        '{"ts":"2014-07-18T02:00:00Z","follower_ids":[]}\n'
        '{"ts":"2014-07-18T01:00:00Z","follower_ids":[]}\n')
    assert main(["validate", str(tmp_path)]) == 3
    err = _err(capsys)
    assert err["exit"] == 3 and "x.jsonl:2" in err["reason"]


def test_usage_errors(capsys, tmp_path):
    assert main(["frobnicate"]) == 2
    assert main(["qos", "--data", str(tmp_path), "--out", str(tmp_path), "--bogus"]) == 2
    assert _err(capsys)["kind"] == "usage"
    assert main(["qos", "--data", str(tmp_path)]) == 2
    assert main(["train", "--data", str(tmp_path), "--out", str(tmp_path), "--sets", "Q"]) == 2


def test_missing_dataset_is_validation_error(tmp_path, capsys):
    assert main(["qos", "--data", str(tmp_path / "nope"), "--out", str(tmp_path / "o")]) == 3


def test_computation_error_exit_4(tmp_path, capsys):
    write_dataset(Dataset(merchants={"m": Merchant("m", frozenset({"premium"}),
                                                   (Promise("p", 1.0),))}), tmp_path / "d")
    assert main(["qos", "--data", str(tmp_path / "d"), "--out", str(tmp_path / "o")]) == 4
    assert _err(capsys)["kind"] == "computation"


def test_qos_all_promises_met(tmp_path):
    ms = {f"m{i}": Merchant(f"m{i}", frozenset({"premium"}),
                            (Promise("a", 10.0 * (i + 1)), Promise("b", 3.0)),
                            (("a", 10.0 * (i + 1)), ("b", 3.0)), traffic_rank=i + 1)
          for i in range(4)}
    write_dataset(Dataset(merchants=ms), tmp_path / "d")
    assert main(["qos", "--data", str(tmp_path / "d"), "--out", str(tmp_path / "o")]) == 0
    rows = (tmp_path / "o" / "qos.csv").read_text().splitlines()[1:]
    assert len(rows) == 4 and all(r.endswith(",1.0") for r in rows)


def test_market_commands(dataset):
    d, o = str(dataset / "d"), dataset / "m"
    for cmd in ("qos", "popularity", "retention", "customers", "metrics", "features"):
        assert main([cmd, "--data", d, "--out", str(o)]) == 0, cmd
    leaders = json.loads((o / "leaders.json").read_text())
    truth = json.loads((dataset / "d" / "ground_truth.json").read_text())
    assert sorted(leaders["leaders"]) == truth["leaders"]
    assert (o / "features_ABCD.csv").read_text().count("\n") == 181
    manifest = json.loads((o / "run_manifest.json").read_text())
    assert manifest["command"] == "features" and manifest["inputs"]
    assert "features_ABCD.csv" in manifest["outputs"]


def test_json_format(dataset):
    out = dataset / "j"
    assert main(["qos", "--data", str(dataset / "d"), "--out", str(out), "--format", "json"]) == 0
    rows = json.loads((out / "qos.json").read_text())
    assert {"merchant_id", "qos"} <= set(rows[0])


def test_train_twice_identical_then_evaluate(dataset):
    d = str(dataset / "d")
    for name in ("t1", "t2"):
        assert main(["train", "--data", d, "--seed", "7", "--out", str(dataset / name)] + FAST) == 0
    for f in ("protocol_report.json", "ablation.csv", "model.json", "roc_ABCD.csv"):
        assert (dataset / "t1" / f).read_bytes() == (dataset / "t2" / f).read_bytes()
    assert main(["evaluate", "--data", d, "--model", str(dataset / "t1" / "model.json"),
                 "--out", str(dataset / "e")]) == 0
    ev = json.loads((dataset / "e" / "evaluation.json").read_text())
    assert ev["accuracy"] > 0.8 and ev["set_mask"] == "ABCD"


def test_importance_and_report(dataset):
    d = str(dataset / "d")
    assert main(["importance", "--data", d, "--out", str(dataset / "i")] + FAST) == 0
    top = (dataset / "i" / "importance.csv").read_text().splitlines()[1]
    assert top.startswith("1,")
    assert main(["report", "--data", d, "--out", str(dataset / "r")] + FAST) == 0
    names = {p.name for p in (dataset / "r").iterdir()}
    assert {"qos.csv", "leaders.json", "customers.json", "protocol_report.json",
            "importance.csv", "model.json", "run_manifest.json"} <= names


def test_help_lists_subcommands(capsys):
    with pytest.raises(SystemExit):
        main(["--help"])
    out = capsys.readouterr().out
    for cmd in ("validate", "simulate", "qos", "popularity", "retention", "customers",
                "metrics", "features", "train", "evaluate", "importance", "report"):
        assert cmd in out

import json

import pytest

from ibcaan.cli import main

SMALL_SPEC = {"n_train": 200, "n_val": 100, "n_test_seen": 100, "n_test_unseen": 100}


@pytest.fixture
def data(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps(SMALL_SPEC))
    out = tmp_path / "data.tsv"
    assert main(["gen-data", "--spec", str(spec), "--out", str(out)]) == 0
    return out


@pytest.fixture
def small_config(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"epochs": 2, "topk": 1, "hidden": 8, "z_dim": 4}))
    return cfg


def test_train_twice_is_byte_identical(data, small_config, tmp_path, capsys):
    for d in ("r1", "r2"):
        assert main(["train", "--data", str(data), "--config", str(small_config), "--seed", "7",
                     "--out-dir", str(tmp_path / d)]) == 0
    a = (tmp_path / "r1" / "report.json").read_bytes()
    assert a == (tmp_path / "r2" / "report.json").read_bytes()
    assert json.loads(a)["config"]["seed"] == 7
    assert "test_unseen" in capsys.readouterr().out


def test_env_seed_overrides_config(data, small_config, tmp_path, monkeypatch):
    monkeypatch.setenv("IBCAAN_SEED", "11")
    assert main(["train", "--data", str(data), "--config", str(small_config), "--out-dir", str(tmp_path / "r")]) == 0
    assert json.loads((tmp_path / "r" / "report.json").read_text())["config"]["seed"] == 11


def test_eval_scores_perfect_separation(tmp_path, capsys):
    p = tmp_path / "s.tsv"
    p.write_text("t1\t0.9\tbonafide\nt2\t0.8\tbonafide\nt3\t0.1\tspoof\nt4\t0.2\tspoof\n")
    assert main(["eval", "--scores", str(p)]) == 0
    assert "EER 0.00%" in capsys.readouterr().out


def test_eval_checkpoint_and_report(data, small_config, tmp_path, capsys):
    out = tmp_path / "r"
    main(["train", "--data", str(data), "--config", str(small_config), "--out-dir", str(out)])
    capsys.readouterr()
    assert main(["eval", "--checkpoint", str(out / "averaged.json"), "--data", str(data), "--split", "val"]) == 0
    assert "val" in capsys.readouterr().out
    assert main(["report", str(out / "report.json")]) == 0
    text = capsys.readouterr().out
    assert "averaged epochs" in text and "val EER" in text


def test_ablate_table_rows(data, tmp_path, capsys):
    assert main(["ablate", "--data", str(data), "--seeds", "0", "--epochs", "1",
                 "--out-dir", str(tmp_path / "grid")]) == 0
    text = capsys.readouterr().out
    for label in ("IB-CAAN", "w/o IB", "w/o CAAN", "IB-DANN", "ERM", "AVG"):
        assert label in text
    assert main(["report", str(tmp_path / "grid" / "ablation.json")]) == 0
    assert "IB-DANN" in capsys.readouterr().out


def test_exit_codes(tmp_path, capsys):
    assert main(["train", "--bogus"]) == 1
    assert main([]) == 1
    assert main(["eval"]) == 1
    assert main(["eval", "--scores", str(tmp_path / "missing.tsv")]) == 2
    bad = tmp_path / "bad.tsv"
    bad.write_text("x\t0.1\n")
    assert main(["eval", "--scores", str(bad)]) == 2
    assert main(["report", str(bad)]) == 2

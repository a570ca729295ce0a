import json

import pytest

from intervalrp import harness
from intervalrp.cli import main


def _err(capsys):
    lines = capsys.readouterr().err.strip().splitlines()
    assert len(lines) == 1
    return json.loads(lines[0])


def test_simulate_count(tmp_path, capsys):
    out = tmp_path / "d.csv"
    assert main(["simulate", "--dgp", "1", "--rhos", "-0.9,0.9", "--per-class", "10", "--length", "50",
                 "--out", str(out)]) == 0
    ds, ids = harness.read_interval_csv(out)
    assert len(ds) == 20 and len(set(ids)) == 20
    man = json.loads((tmp_path / "d.csv.manifest.json").read_text())
    assert man["seed"] == 0 and man["config"]["simulate"]["rhos"] == [-0.9, 0.9]


def test_image_and_multivariate(tmp_path, capsys):
    csv = tmp_path / "mv.csv"
    assert main(["simulate", "--dgp", "c2", "--rhos", "0.0,0.5", "--per-class", "2", "--length", "12",
                 "--out", str(csv)]) == 0
    assert main(["image", "--in", str(csv), "--nu", "10", "--eps", "q:0.3", "--m", "2", "--kappa", "1",
                 "--out", str(tmp_path / "img")]) == 0
    index = json.loads((tmp_path / "img" / "index.json").read_text())
    assert len(index) == 4 and index[0]["size"] == 11
    assert harness.read_pgm(tmp_path / "img" / index[0]["file"]).shape == (11, 11)
    assert (tmp_path / "img" / "manifest.json").exists()


def test_errors_are_one_json_line(tmp_path, capsys):
    assert main(["simulate", "--dgp", "9", "--out", "x"]) == 2
    assert _err(capsys)["error"] == "UsageError"
    assert main(["image", "--in", str(tmp_path / "missing.csv"), "--out", str(tmp_path)]) == 1
    assert _err(capsys)["error"] == "IoError"
    bad = tmp_path / "bad.csv"
    bad.write_text("sample_id,t,dim,lower,upper,label\na,0,0,2,1,0\n")
    assert main(["image", "--in", str(bad), "--out", str(tmp_path / "o")]) == 1
    e = _err(capsys)
    assert e["error"] == "MalformedRow" and "row 2" in e["message"]
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"data": {"csv": "d.csv"}, "bogus": 1}))
    assert main(["train", "--config", str(cfg)]) == 1
    assert _err(capsys)["error"] == "ConfigError"


def _train(tmp_path, name, seed=1):
    cfg = tmp_path / f"{name}.json"
    cfg.write_text(json.dumps({
        "data": {"simulate": {"dgp": "1", "rhos": [-0.9, 0.9], "per_class": 10, "length": 20}},
        "admm": {"rho": 0.1, "alpha_lr": 5.0, "outer_iters": 2, "inner_theta_epochs": 2},
        "output": str(tmp_path / name), "seed": seed}))
    assert main(["train", "--config", str(cfg)]) == 0
    return cfg


def test_train_eval_reproducible(tmp_path, capsys):
    cfg = _train(tmp_path, "a")
    _train(tmp_path, "b")
    for f in ("train.csv", "eval.csv", "model.ckpt", "beta.json", "metrics.json", "history.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f
    rep = tmp_path / "rep.json"
    assert main(["eval", "--model", str(tmp_path / "a" / "model.ckpt"), "--alpha", str(tmp_path / "a" / "beta.json"),
                 "--in", str(tmp_path / "a" / "eval.csv"), "--report", str(rep), "--config", str(cfg)]) == 0
    text = rep.read_text()
    m = json.loads(text)
    assert list(m) == sorted(m) and m["n_eval"] == 4 and m["K"] == 2
    assert text == (tmp_path / "a" / "metrics.json").read_text()
    assert (tmp_path / "rep.json.manifest.json").exists()
    assert main(["eval", "--model", str(tmp_path / "a" / "model.ckpt"), "--alpha", str(tmp_path / "a" / "beta.json"),
                 "--in", str(tmp_path / "a" / "eval.csv"), "--report", str(rep), "--m", "2"]) == 1
    capsys.readouterr()


def test_gradcheck_command(tmp_path, capsys):
    assert main(["gradcheck", "--seed", "3", "--trials", "4", "--manifest", str(tmp_path / "g.json")]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["passed"] and out["worst"] < 1e-4 and out["trials"] == 4

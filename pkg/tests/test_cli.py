"""End-to-end CLI flow and exit-code contract."""

import json
import math
import os

import pytest

from svlab.cli import (
    EXIT_CONFIG,
    EXIT_DIVERGENCE,
    EXIT_GRADCHECK,
    EXIT_IO,
    EXIT_OK,
    EXIT_USAGE,
    main,
)
from svlab.config import save_config
from svlab.tensor import Tensor, save_tensor


@pytest.fixture(scope="module")
def cli_config(tiny_exp, tmp_path_factory):
    cfg = tiny_exp.replace("gen", n_train_utts=3, n_eval_utts=3,
                           n_target_trials=15, n_nontarget_trials=20)
    path = str(tmp_path_factory.mktemp("cfg") / "tiny.json")
    save_config(cfg, path)
    return path


@pytest.fixture(scope="module")
def data_dir(cli_config, tmp_path_factory):
    out = str(tmp_path_factory.mktemp("data"))
    assert main(["gen", "--config", cli_config, "--out", out]) == EXIT_OK
    return out


@pytest.fixture(scope="module")
def run_dir(cli_config, data_dir, tmp_path_factory):
    out = str(tmp_path_factory.mktemp("run"))
    assert main(["train", "--config", cli_config, "--data", data_dir, "--out", out]) == EXIT_OK
    return out


def test_gen_outputs(data_dir):
    for rel in ("train/manifest.txt", "eval/manifest.txt", "trials.txt", "config.json"):
        assert os.path.exists(os.path.join(data_dir, rel)), rel
    lines = open(os.path.join(data_dir, "trials.txt")).read().splitlines()
    assert len(lines) == 35
    assert all(l.split()[0] in ("0", "1") for l in lines)


def test_gen_deterministic(cli_config, data_dir, tmp_path):
    out = str(tmp_path / "again")
    assert main(["gen", "--config", cli_config, "--out", out]) == EXIT_OK
    assert open(os.path.join(out, "trials.txt")).read() == open(
        os.path.join(data_dir, "trials.txt")
    ).read()
    a = open(os.path.join(out, "train", "manifest.txt")).read()
    b = open(os.path.join(data_dir, "train", "manifest.txt")).read()
    assert a == b


def test_train_outputs(run_dir):
    for name in ("checkpoint.svck", "record.json", "drift.csv", "timing.txt"):
        assert os.path.exists(os.path.join(run_dir, name)), name
    record = json.load(open(os.path.join(run_dir, "record.json")))
    assert record["status"] == "ok"
    assert len(record["losses"]) == 2


def test_eval_flow(run_dir, data_dir, tmp_path):
    report_path = str(tmp_path / "report.json")
    rc = main([
        "eval", os.path.join(run_dir, "checkpoint.svck"),
        os.path.join(data_dir, "trials.txt"),
        "--data", os.path.join(data_dir, "eval"),
        "--out", report_path,
    ])
    assert rc == EXIT_OK
    report = json.load(open(report_path))
    assert 0.0 <= report["eer"] <= 1.0
    scores = open(str(tmp_path / "report.scores")).read().splitlines()
    assert len(scores) == report["n_target"] + report["n_nontarget"]


def test_weights_csv(run_dir, tiny_exp, tmp_path):
    out = str(tmp_path / "w.csv")
    rc = main(["weights", os.path.join(run_dir, "checkpoint.svck"), "--out", out])
    assert rc == EXIT_OK
    rows = open(out).read().splitlines()
    assert rows[0] == "layer,key_weight,value_weight"  # default backend is mhfa
    assert len(rows) == 1 + tiny_exp.encoder.n_layers + 1  # header + L+1 layers
    kws = [float(r.split(",")[1]) for r in rows[1:]]
    assert math.isclose(sum(kws), 1.0, rel_tol=1e-12)


def test_sweep_csv_and_unknown_axis(cli_config, data_dir, tmp_path, capsys):
    out = str(tmp_path / "sw")
    rc = main(["sweep", "--config", cli_config, "--data", data_dir,
               "--out", out, "--axis", "lambda", "--values", "0.0,0.01"])
    assert rc == EXIT_OK
    rows = open(os.path.join(out, "sweep_lambda.csv")).read().splitlines()
    assert rows[0] == "value,eer,dcf1,dcf5,drift_total,status"
    assert len(rows) == 3
    rc = main(["sweep", "--config", cli_config, "--data", data_dir,
               "--out", out, "--axis", "bogus", "--values", "1"])
    assert rc == EXIT_USAGE
    assert "valid axes" in capsys.readouterr().err


def test_gradcheck_pass_and_injected_fault(capsys):
    assert main(["gradcheck"]) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 6
    assert all("[pass]" in l for l in lines)
    assert main(["gradcheck", "--inject-fault"]) == EXIT_GRADCHECK
    assert "[FAIL]" in capsys.readouterr().out


def test_usage_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["train"])  # missing required --data/--out
    assert exc.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == EXIT_USAGE
    capsys.readouterr()


def test_config_errors_exit_3(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"train": {"speakers_count": 4}}))
    assert main(["gen", "--config", str(bad), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "speakers_count" in capsys.readouterr().err
    notjson = tmp_path / "nope.json"
    notjson.write_text("{broken")
    assert main(["gen", "--config", str(notjson), "--out", str(tmp_path / "o2")]) == EXIT_CONFIG
    capsys.readouterr()


def test_io_errors_exit_4(cli_config, data_dir, tmp_path, capsys):
    rc = main(["train", "--config", cli_config,
               "--data", str(tmp_path / "missing"), "--out", str(tmp_path / "o")])
    assert rc == EXIT_IO
    rc = main(["eval", str(tmp_path / "no.svck"), os.path.join(data_dir, "trials.txt"),
               "--data", os.path.join(data_dir, "eval"), "--out", str(tmp_path / "r.json")])
    assert rc == EXIT_IO
    capsys.readouterr()


def test_malformed_trial_line_names_line(run_dir, data_dir, tmp_path, capsys):
    trials = tmp_path / "trials.txt"
    good = open(os.path.join(data_dir, "trials.txt")).read().splitlines()
    trials.write_text(good[0] + "\nnot a trial\n")
    rc = main(["eval", os.path.join(run_dir, "checkpoint.svck"), str(trials),
               "--data", os.path.join(data_dir, "eval"),
               "--out", str(tmp_path / "r.json")])
    assert rc == EXIT_IO
    assert ":2:" in capsys.readouterr().err


def test_divergent_data_exits_5(cli_config, data_dir, tmp_path, capsys):
    # copy the corpus and blow up one training utterance
    import shutil

    bad_data = str(tmp_path / "bad")
    shutil.copytree(data_dir, bad_data)
    manifest = open(os.path.join(bad_data, "train", "manifest.txt")).read().splitlines()
    victim = manifest[0].split()[0]
    path = os.path.join(bad_data, "train", victim)
    from svlab.tensor import load_tensor

    t = load_tensor(path)
    save_tensor(path, Tensor(t.shape, [math.inf] * t.size))
    rc = main(["train", "--config", cli_config, "--data", bad_data,
               "--out", str(tmp_path / "o")])
    assert rc == EXIT_DIVERGENCE
    assert "diverged" in capsys.readouterr().err

import json

import pytest

from tgib.cli import EXIT_DIVERGED, EXIT_MISSING, EXIT_OK, EXIT_USAGE, resolve_config, run, UsageError

SMALL_SYNTH = ["--num-nodes", "60", "--num-hubs", "6", "--num-targets", "60",
               "--num-background-events", "30", "--window", "20000"]
SMALL_MODEL = ["--d", "4", "--d-time", "4", "--neighbors", "3", "--epochs", "1", "--val-max-events", "20"]


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    assert run(["gen-synth", "--out", str(out), "--seed", "1", *SMALL_SYNTH]) == EXIT_OK
    return out / "synth.csv"


@pytest.fixture(scope="module")
def trained(dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert run(["train", "--data", str(dataset), "--out", str(out), *SMALL_MODEL]) == EXIT_OK
    return out


def test_gen_synth_outputs(dataset):
    assert dataset.exists() and dataset.with_name("synth_truth.jsonl").exists()
    manifest = json.loads(dataset.with_name("gen-synth.manifest.json").read_text())
    assert manifest["synth"]["num_nodes"] == 60 and manifest["synth"]["seed"] == 1


def test_train_outputs(trained):
    for name in ("checkpoint.tgib", "train_log.jsonl", "split.jsonl", "train.manifest.json"):
        assert (trained / name).exists()
    manifest = json.loads((trained / "train.manifest.json").read_text())
    assert manifest["config"]["d"] == 4 and manifest["config"]["epochs"] == 1
    assert manifest["config"]["preset"] == "desk" and manifest["config"]["seed"] == 0


def test_pipeline_after_training(dataset, trained, capsys):
    ckpt = str(trained / "checkpoint.tgib")
    common = ["--data", str(dataset), "--checkpoint", ckpt, "--out", str(trained)]
    assert run(["eval-link", *common, "--seeds", "0,1"]) == EXIT_OK
    assert run(["explain", *common, "--max-events", "5"]) == EXIT_OK
    assert run(["sweep", *common, "--max-events", "5"]) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert [line.split(":")[0] for line in lines] == ["eval-link", "explain", "sweep"]

    ap = json.loads((trained / "eval-link.metrics.jsonl").read_text().splitlines()[0])
    assert ap["metric"] == "ap_transductive" and ap["seeds"] == [0, 1] and len(ap["per_seed"]) == 2
    explain = [json.loads(x) for x in (trained / "explain.metrics.jsonl").read_text().splitlines()]
    assert {row["metric"] for row in explain} == {"prediction_match", "explanation_recall"}
    curve = (trained / "curve.csv").read_text().splitlines()
    assert len(curve) == 152 and curve[1].startswith("0.000,")
    assert len((trained / "curve_random.csv").read_text().splitlines()) == 152
    sweep_manifest = json.loads((trained / "sweep.manifest.json").read_text())
    assert sweep_manifest["config"]["d"] == 4      # taken from the checkpoint


def test_same_seed_gives_identical_checkpoints(dataset, tmp_path):
    digests = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert run(["train", "--data", str(dataset), "--out", str(out), "--seed", "7", *SMALL_MODEL]) == EXIT_OK
        digests.append(((out / "checkpoint.tgib").read_bytes(), (out / "train_log.jsonl").read_bytes()))
    assert digests[0] == digests[1]


def test_usage_errors_exit_2(dataset, tmp_path, capsys):
    assert run(["train", "--no-such-flag"]) == EXIT_USAGE
    assert run(["frobnicate"]) == EXIT_USAGE
    assert run(["train", "--out", str(tmp_path)]) == EXIT_USAGE          # no --data
    assert run(["eval-link", "--data", str(dataset), "--checkpoint", "x", "--seeds", ",",
                "--out", str(tmp_path)]) == EXIT_USAGE
    assert "usage" in capsys.readouterr().err


def test_missing_files_exit_3(dataset, tmp_path):
    assert run(["train", "--data", str(tmp_path / "nope.csv"), "--out", str(tmp_path)]) == EXIT_MISSING
    assert run(["sweep", "--data", str(dataset), "--checkpoint", str(tmp_path / "nope.tgib"),
                "--out", str(tmp_path)]) == EXIT_MISSING
    assert run(["train", "--config", str(tmp_path / "nope.json"), "--data", str(dataset)]) == EXIT_MISSING


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_exits_4(dataset, tmp_path, capsys):
    code = run(["train", "--data", str(dataset), "--out", str(tmp_path), *SMALL_MODEL, "--beta", "inf"])
    assert code == EXIT_DIVERGED
    assert "step" in capsys.readouterr().err


def test_output_directory_from_environment(dataset, tmp_path, monkeypatch):
    monkeypatch.setenv("TGIB_OUTPUT_DIR", str(tmp_path / "env-out"))
    assert run(["gen-synth", *SMALL_SYNTH]) == EXIT_OK
    assert (tmp_path / "env-out" / "synth.csv").exists()


def test_settings_precedence(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"preset": "paper", "epochs": 3, "beta": 0.5}))
    cfg = resolve_config(None, path, {"epochs": 2})
    assert cfg["preset"] == "paper" and cfg["d"] == 32 and cfg["learning_rate"] == 1e-5
    assert cfg["epochs"] == 2 and cfg["beta"] == 0.5
    assert resolve_config("desk", path)["d"] == 16
    assert resolve_config()["preset"] == "desk"
    path.write_text(json.dumps({"epoch": 3}))
    with pytest.raises(UsageError, match="epoch"):
        resolve_config(None, path)
    with pytest.raises(UsageError):
        resolve_config(overrides={"seeds": []})

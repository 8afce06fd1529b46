import json

import numpy as np
import pytest

from fairexperts.checkpoint import load_checkpoint, save_checkpoint
from fairexperts.cli import main
from fairexperts.metrics import GroupMetrics
from fairexperts.selection import select_ip
from fairexperts.training import train_erm

from helpers import tiny_dataset, tiny_hp

CONFIG = """
version = 1
seeds = 5
metric = accuracy
strategies = greedy, ip
lambda_sel = 0.1

data.kind = synthetic
data.seed = 99
data.d = 3
data.classes = 2
data.groups = 2
data.mean.g0.c0 = -2, 0, 0
data.mean.g0.c1 = 2, 0, 0
data.mean.g1.c0 = 0, -2, 1.5
data.mean.g1.c1 = 0, 2, 1.5
data.count.train.g0 = 120
data.count.train.g1 = 60
data.count.val.g0 = 60
data.count.val.g1 = 30
data.count.test.g0 = 60
data.count.test.g1 = 30

hyper.epochs = 3
hyper.batch_size = 32
hyper.hidden_dim = 16
hyper.repr_dim = 4
"""


@pytest.fixture()
def config_path(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text(CONFIG)
    return str(path)


def test_missing_subcommand_is_usage_error(capsys):
    assert main([]) == 1
    assert "usage error" in capsys.readouterr().err


def test_unknown_flag_is_usage_error():
    assert main(["run", "--config", "x", "--frobnicate"]) == 1


def test_missing_config_is_data_error(capsys):
    assert main(["run", "--config", "/nope.cfg", "--out-dir", "/tmp/x"]) == 2
    assert "error" in capsys.readouterr().err


def test_run_without_out_dir_is_usage_error(config_path):
    assert main(["run", "--config", config_path]) == 1


def test_divergence_exit_code(tmp_path, config_path):
    diverging = tmp_path / "diverge.cfg"
    diverging.write_text(CONFIG + "\nhyper.lr0 = 100000000.0\n")
    with np.errstate(all="ignore"):
        code = main(["run", "--config", str(diverging), "--out-dir", str(tmp_path / "out")])
    assert code == 3


def test_evaluate_missing_checkpoint_is_data_error(config_path, capsys):
    assert (
        main(["evaluate", "--checkpoint", "/no/such.json", "--config", config_path]) == 2
    )
    assert "does not exist" in capsys.readouterr().err


def test_run_writes_bundle(tmp_path, config_path):
    out_dir = tmp_path / "bundle"
    assert main(["run", "--config", config_path, "--out-dir", str(out_dir)]) == 0
    assert (out_dir / "report_5.json").exists()
    assert (out_dir / "aggregate.json").exists()


def test_train_then_evaluate_round_trip(tmp_path, config_path, capsys):
    out_dir = tmp_path / "models"
    assert main(["train", "--config", config_path, "--out-dir", str(out_dir)]) == 0
    capsys.readouterr()
    report_path = tmp_path / "erm_eval.json"
    assert (
        main(
            [
                "evaluate",
                "--checkpoint", str(out_dir / "erm_5.json"),
                "--config", config_path,
                "--split", "val",
                "--out", str(report_path),
            ]
        )
        == 0
    )
    payload = json.loads(report_path.read_text())
    assert payload["metric_kind"] == "accuracy"
    assert len(payload["per_group"]) == 2


def test_gen_data_then_train_matches_in_process_pipeline(tmp_path, config_path):
    csv_path = tmp_path / "data.csv"
    assert main(["gen-data", "--config", config_path, "--out", str(csv_path)]) == 0

    synthetic_dir = tmp_path / "from_synthetic"
    csv_dir = tmp_path / "from_csv"
    assert main(["train", "--config", config_path, "--out-dir", str(synthetic_dir)]) == 0
    assert (
        main(
            [
                "train",
                "--config", config_path,
                "--data-csv", str(csv_path),
                "--out-dir", str(csv_dir),
            ]
        )
        == 0
    )
    for name in ("erm_5.json", "decoupled_5.json", "experts_5.json"):
        assert (synthetic_dir / name).read_bytes() == (csv_dir / name).read_bytes()


def test_select_wrapper_matches_in_process_call(tmp_path, capsys):
    expert = GroupMetrics("accuracy", np.array([0.85, 0.80]), np.array([0.5, 0.5]), "val")
    erm = GroupMetrics("accuracy", np.array([0.80, 0.80]), np.array([0.5, 0.5]), "val")
    expert_path = tmp_path / "expert.json"
    erm_path = tmp_path / "erm.json"
    expert_path.write_text(json.dumps(expert.to_dict()))
    erm_path.write_text(json.dumps(erm.to_dict()))
    out_path = tmp_path / "decision.json"
    code = main(
        [
            "select",
            "--strategy", "ip",
            "--lambda", "0.1",
            "--expert", str(expert_path),
            "--erm", str(erm_path),
            "--out", str(out_path),
        ]
    )
    assert code == 0
    payload = json.loads(out_path.read_text())
    expected = select_ip(expert, erm, 0.1)
    assert payload == expected.to_dict()


def test_select_accepts_metrics_report_payloads(tmp_path):
    report = {
        "metric_kind": "accuracy",
        "split": "val",
        "per_group": [0.9, 0.8],
        "proportions": [0.5, 0.5],
    }
    erm = dict(report, per_group=[0.85, 0.82])
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    a.write_text(json.dumps(report))
    b.write_text(json.dumps(erm))
    assert main(["select", "--strategy", "greedy", "--expert", str(a), "--erm", str(b)]) == 0


def test_export_repr_writes_csv(tmp_path, config_path):
    out_dir = tmp_path / "models"
    main(["train", "--config", config_path, "--out-dir", str(out_dir)])
    reps_path = tmp_path / "reps.csv"
    code = main(
        [
            "export-repr",
            "--checkpoint", str(out_dir / "experts_5.json"),
            "--config", config_path,
            "--split", "val",
            "--out", str(reps_path),
        ]
    )
    assert code == 0
    lines = reps_path.read_text().splitlines()
    assert lines[0] == "z0,z1,z2,z3,label,group"
    assert len(lines) == 1 + 90


def test_checkpoint_round_trip_preserves_parameters(tmp_path):
    ds = tiny_dataset()
    model = train_erm(ds, tiny_hp())
    path = str(tmp_path / "erm.json")
    save_checkpoint(model, path)
    loaded = load_checkpoint(path)
    for a, b in zip(model.backbone.params(), loaded.backbone.params()):
        assert np.array_equal(a, b)
    assert loaded.seed == model.seed
    x = ds.features[:5]
    assert np.array_equal(model.predict_proba(x), loaded.predict_proba(x))


def test_run_uses_config_output_dir(tmp_path):
    out_dir = tmp_path / "configured"
    path = tmp_path / "exp.cfg"
    path.write_text(CONFIG + f"\noutput_dir = {out_dir}\n")
    assert main(["run", "--config", str(path)]) == 0
    assert (out_dir / "report_5.json").exists()

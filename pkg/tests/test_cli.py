import json
import os

import numpy as np
import pytest

from almeta import cli
from almeta.checkpoint import load_checkpoint

TASK_INLINE = (
    "kind=classification,n_classes=3,support_per_class=2,"
    "eval_per_class=1,label_budget=3,feature_dim=4"
)


def write_train_config(tmp_path, **overrides):
    conf = {
        "task.kind": "classification",
        "task.n_classes": 3,
        "task.support_per_class": 2,
        "task.eval_per_class": 1,
        "task.label_budget": 3,
        "task.feature_dim": 4,
        "model.embed_dim": 4,
        "model.hidden_dim": 4,
        "model.match_hidden": 4,
        "model.match_steps": 2,
        "train.batch_size": 1,
        "train.max_updates": 1,
        "train.checkpoint_every": 10,
        "train.seed": 0,
        "out.metrics": "metrics.jsonl",
        "out.checkpoint": "model.ckpt",
    }
    conf.update(overrides)
    path = tmp_path / "train.conf"
    path.write_text("".join(f"{k} = {v}\n" for k, v in conf.items()))
    return str(path)


@pytest.fixture
def data_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("ALMETA_DATA_DIR", str(tmp_path))
    return tmp_path


class TestTrainCommand:
    def test_trains_and_writes_artifacts(self, tmp_path, data_dir):
        rc = cli.main(["train", "--config", write_train_config(tmp_path)])
        assert rc == 0
        assert (data_dir / "model.ckpt").exists()
        lines = (data_dir / "metrics.jsonl").read_text().splitlines()
        assert len(lines) == 1
        rec = json.loads(lines[0])
        assert rec["update"] == 0 and np.isfinite(rec["loss"])

    def test_zero_updates_writes_initial_checkpoint(self, tmp_path, data_dir):
        rc = cli.main(["train", "--config", write_train_config(tmp_path, **{"train.max_updates": 0})])
        assert rc == 0
        store, mcfg, adam, _ = load_checkpoint(str(data_dir / "model.ckpt"))
        assert mcfg.n_classes == 3 and adam.t == 0
        assert (data_dir / "metrics.jsonl").read_text() == ""

    def test_imitation_steps_run(self, tmp_path, data_dir):
        cfg = write_train_config(tmp_path, **{"train.max_updates": 0, "train.imitation_steps": 2})
        assert cli.main(["train", "--config", cfg]) == 0

    def test_missing_config_is_config_error(self, tmp_path):
        assert cli.main(["train", "--config", str(tmp_path / "absent.conf")]) == cli.EXIT_CONFIG

    def test_unknown_field_is_config_error(self, tmp_path):
        path = tmp_path / "bad.conf"
        path.write_text("task.n_claases = 3\n")
        assert cli.main(["train", "--config", str(path)]) == cli.EXIT_CONFIG


class TestEvalCommand:
    @pytest.fixture
    def ckpt(self, tmp_path, data_dir):
        cli.main(["train", "--config", write_train_config(tmp_path, **{"train.max_updates": 0})])
        return str(data_dir / "model.ckpt")

    def test_prints_per_step_curve(self, ckpt, capsys):
        rc = cli.main(["eval", "--ckpt", ckpt, "--task", TASK_INLINE, "--episodes", "2"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "t=1: accuracy=" in out and "t=3: accuracy=" in out
        assert "+/-" in out

    def test_report_file_and_policies(self, ckpt, tmp_path):
        report_path = tmp_path / "report.json"
        rc = cli.main([
            "eval", "--ckpt", ckpt, "--task", TASK_INLINE, "--episodes", "2",
            "--policy", "random", "--seeds", "0,1", "--out", str(report_path),
        ])
        assert rc == 0
        report = json.loads(report_path.read_text())
        assert report["policy"] == "random" and report["seeds"] == [0, 1]
        assert len(report["slow_mean"]) == 3

    def test_unknown_policy_rejected(self, ckpt):
        rc = cli.main(["eval", "--ckpt", ckpt, "--task", TASK_INLINE, "--policy", "oracle"])
        assert rc == cli.EXIT_CONFIG

    def test_task_mismatch_rejected(self, ckpt):
        bad_task = TASK_INLINE.replace("n_classes=3", "n_classes=5")
        rc = cli.main(["eval", "--ckpt", ckpt, "--task", bad_task, "--episodes", "1"])
        assert rc == cli.EXIT_CONFIG

    def test_task_from_file(self, ckpt, tmp_path):
        task_file = tmp_path / "task.conf"
        task_file.write_text(
            "task.kind = classification\ntask.n_classes = 3\ntask.support_per_class = 2\n"
            "task.eval_per_class = 1\ntask.label_budget = 3\ntask.feature_dim = 4\n"
        )
        assert cli.main(["eval", "--ckpt", ckpt, "--task", str(task_file), "--episodes", "1"]) == 0


class TestAblateCommand:
    def test_reports_delta(self, tmp_path, data_dir, capsys):
        cli.main(["train", "--config", write_train_config(tmp_path, **{"train.max_updates": 0})])
        ckpt = str(data_dir / "model.ckpt")
        out_path = tmp_path / "ablate.json"
        rc = cli.main([
            "ablate", "--ckpt", ckpt, "--task", TASK_INLINE, "--component", "gamma",
            "--episodes", "2", "--out", str(out_path),
        ])
        assert rc == 0
        assert "component=gamma" in capsys.readouterr().out
        rep = json.loads(out_path.read_text())
        assert {"component", "baseline", "ablated"} <= set(rep)

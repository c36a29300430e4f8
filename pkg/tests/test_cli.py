"""CLI surface: every subcommand runs end to end on tiny inputs and writes
the documented artifacts."""

import json
import os

import numpy as np
import pytest

from waverl.cli import main
from waverl.config import desk_config
from waverl.csvio import COEFFS_SCHEMA, SERIES_SCHEMA, read_csv, write_csv


@pytest.fixture
def tiny_config(tmp_path):
    cfg = desk_config(env="veltrack", epochs=1, steps_per_epoch=100, episode_len=50,
                      window=16, repr_steps=2, policy_steps=2, initial_transitions=20,
                      eval_trajectories=1, seed=5, out_dir=str(tmp_path / "run"),
                      checkpoint_every=1)
    path = tmp_path / "cfg.json"
    cfg.to_json(path)
    return str(path), cfg


class TestTrainCommand:
    def test_train_writes_artifacts(self, tiny_config, capsys):
        path, cfg = tiny_config
        assert main(["train", "--config", path]) == 0
        out = capsys.readouterr().out
        assert "finished" in out
        assert os.path.exists(os.path.join(cfg.out_dir, "metrics.csv"))
        assert os.path.exists(os.path.join(cfg.out_dir, "summary.json"))
        assert os.path.exists(os.path.join(cfg.out_dir, "checkpoint", "manifest.json"))
        assert os.path.exists(os.path.join(cfg.out_dir, "config.json"))

    def test_seed_and_ablation_overrides(self, tiny_config, tmp_path):
        path, _ = tiny_config
        out = str(tmp_path / "plain")
        assert main(["train", "--config", path, "--seed", "9",
                     "--ablation", "plain_sac", "--out", out]) == 0
        with open(os.path.join(out, "config.json")) as fh:
            snap = json.load(fh)
        assert snap["seed"] == 9 and snap["ablation"] == "plain_sac"

    def test_resume_from_checkpoint(self, tiny_config, tmp_path):
        path, cfg = tiny_config
        main(["train", "--config", path])
        out2 = str(tmp_path / "resumed")
        assert main(["train", "--config", path, "--out", out2,
                     "--resume", os.path.join(cfg.out_dir, "checkpoint")]) == 0


class TestEvalCommand:
    def test_eval_reports_returns(self, tiny_config, capsys, tmp_path):
        path, cfg = tiny_config
        main(["train", "--config", path])
        capsys.readouterr()
        assert main(["eval", "--checkpoint", os.path.join(cfg.out_dir, "checkpoint"),
                     "--config", path, "--seeds", "1,2"]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["seeds"] == [1, 2]
        assert len(report["returns"]) == 2

    def test_eval_dumps_transition_log(self, tiny_config, capsys, tmp_path):
        path, cfg = tiny_config
        main(["train", "--config", path])
        out = str(tmp_path / "dump")
        os.makedirs(out)
        main(["eval", "--checkpoint", os.path.join(cfg.out_dir, "checkpoint"),
              "--config", path, "--seeds", "3", "--dump-transitions", "--out", out])
        schema, header, rows = read_csv(os.path.join(out, "transitions_seed3.csv"))
        assert schema == SERIES_SCHEMA
        assert header[:2] == ["step", "s0"]
        assert "segment" in header and any(h.startswith("omega") for h in header)
        assert len(rows) == 50


class TestDecomposeCommand:
    def test_decompose_writes_per_level_csvs(self, tmp_path, capsys):
        signal = np.column_stack([np.sin(np.arange(64) / 5.0),
                                  np.cos(np.arange(64) / 9.0)])
        src = tmp_path / "signal.csv"
        write_csv(src, SERIES_SCHEMA, ["step", "c0", "c1"],
                  [[i, *row] for i, row in enumerate(signal)])
        out = str(tmp_path / "coeffs")
        assert main(["decompose", "--input", str(src), "--levels", "3",
                     "--haar-fixed", "--out", out]) == 0
        for m in (1, 2, 3):
            schema, header, rows = read_csv(os.path.join(out, f"coeffs_level{m}.csv"),
                                            expected_schema=COEFFS_SCHEMA)
            assert header == ["index", "c0", "c1"]
            assert len(rows) == 64 // 2**m
        _, _, approx = read_csv(os.path.join(out, "approx.csv"))
        assert len(approx) == 8

    def test_decompose_plain_csv_input(self, tmp_path):
        src = tmp_path / "raw.csv"
        np.savetxt(src, np.random.default_rng(0).normal(size=(32, 1)), delimiter=",")
        out = str(tmp_path / "coeffs2")
        assert main(["decompose", "--input", str(src), "--levels", "2",
                     "--out", out]) == 0
        assert os.path.exists(os.path.join(out, "coeffs_level2.csv"))


class TestDemoCommands:
    def test_motivating_example(self, tmp_path, capsys):
        out = str(tmp_path / "motiv")
        assert main(["motivating-example", "--out", out, "--seed", "0"]) == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["gain"] > 0.0
        assert os.path.exists(os.path.join(out, "signal.csv"))
        assert os.path.exists(os.path.join(out, "approx.csv"))
        with open(os.path.join(out, "summary.json")) as fh:
            assert json.load(fh)["gain"] == summary["gain"]

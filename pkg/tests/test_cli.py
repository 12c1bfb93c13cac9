"""End-to-end command tests over a small synthetic dataset."""

import csv
import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from pavegraph.cli import main
from pavegraph.config import ConfigError, build_section, read_config_file
from pavegraph.dataset import FEATURE_NAMES, read_observation_file
from pavegraph.graph import read_edge_file

SYNTH_ARGS = ["--nodes", "50", "--arcs", "100", "--seed", "3"]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cliws")
    data = root / "data"
    assert main(["synth", "--out", str(data), *SYNTH_ARGS]) == 0
    run = root / "run"
    assert (
        main(
            [
                "train", "--data", str(data), "--variant", "full", "--out", str(run),
                "--seed", "3", "--gat-hidden", "4", "--gru-hidden", "8",
                "--max-epochs", "30",
            ]
        )
        == 0
    )
    return root


class TestSynth:
    def test_outputs_conform_to_schemas(self, workspace):
        data = workspace / "data"
        records = read_observation_file(data / "observations.csv")
        assert len(records) == 50 * 4
        edges = read_edge_file(data / "edges.csv")
        assert len(edges) == 100  # directed records
        assert (data / "provenance.txt").exists()
        manifest = json.loads((data / "run_manifest.json").read_text())
        assert manifest["command"] == "synth"
        assert manifest["seed"] == 3

    def test_idempotent_given_seed(self, workspace, tmp_path):
        again = tmp_path / "data2"
        assert main(["synth", "--out", str(again), *SYNTH_ARGS]) == 0
        base = (workspace / "data" / "observations.csv").read_bytes()
        assert (again / "observations.csv").read_bytes() == base
        m1 = json.loads((workspace / "data" / "run_manifest.json").read_text())
        m2 = json.loads((again / "run_manifest.json").read_text())
        m1.pop("created_at")
        m2.pop("created_at")
        assert m1 == m2


class TestTrain:
    def test_artifacts_exist(self, workspace):
        run = workspace / "run"
        assert (run / "checkpoint.npz").exists()
        report = json.loads((run / "train_report.json").read_text())
        assert report["epochs_run"] <= 30
        assert report["best_val_loss"] == min(report["val_losses"])
        manifest = json.loads((run / "run_manifest.json").read_text())
        assert set(manifest["outputs"]) == {"checkpoint.npz", "train_report.json"}

    def test_unknown_variant_usage_error(self, workspace):
        with pytest.raises(SystemExit) as exc:
            main(["train", "--data", str(workspace / "data"), "--variant", "gnn",
                  "--out", str(workspace / "x")])
        assert exc.value.code == 2

    def test_missing_data_runtime_error(self, tmp_path):
        code = main(["train", "--data", str(tmp_path / "nope"), "--out", str(tmp_path / "o")])
        assert code == 1


class TestEval:
    def test_metrics_files(self, workspace, tmp_path):
        out = tmp_path / "eval"
        assert (
            main(
                ["eval", "--data", str(workspace / "data"), "--checkpoint",
                 str(workspace / "run" / "checkpoint.npz"), "--split", "test",
                 "--out", str(out)]
            )
            == 0
        )
        with open(out / "metrics.csv") as fh:
            rows = {r["metric"]: float(r["value"]) for r in csv.DictReader(fh)}
        assert set(rows) == {"mse", "rmse", "mae", "r2"}
        assert rows["rmse"] == pytest.approx(np.sqrt(rows["mse"]), rel=1e-9)
        with open(out / "rec_curve.csv") as fh:
            rec = list(csv.DictReader(fh))
        coverage = [float(r["coverage"]) for r in rec]
        assert all(b >= a for a, b in zip(coverage, coverage[1:]))
        with open(out / "taylor.csv") as fh:
            taylor = list(csv.DictReader(fh))
        assert {r["series"] for r in taylor} == {"prediction", "reference"}
        with open(out / "predictions.csv") as fh:
            preds = list(csv.DictReader(fh))
        assert len(preds) == 50

    def test_mlp_checkpoint_ignores_edge_shuffle(self, workspace, tmp_path):
        data = workspace / "data"
        run = tmp_path / "mlprun"
        assert (
            main(["train", "--data", str(data), "--variant", "mlp", "--out", str(run),
                  "--seed", "3", "--max-epochs", "20"])
            == 0
        )
        shuffled = tmp_path / "shuffled"
        shuffled.mkdir()
        shutil.copy(data / "observations.csv", shuffled / "observations.csv")
        lines = (data / "edges.csv").read_text().splitlines()
        header, body = lines[0], lines[1:]
        (shuffled / "edges.csv").write_text("\n".join([header] + list(reversed(body))) + "\n")

        out1, out2 = tmp_path / "e1", tmp_path / "e2"
        ckpt = run / "checkpoint.npz"
        assert main(["eval", "--data", str(data), "--checkpoint", str(ckpt), "--out", str(out1)]) == 0
        assert main(["eval", "--data", str(shuffled), "--checkpoint", str(ckpt), "--out", str(out2)]) == 0
        assert (out1 / "predictions.csv").read_bytes() == (out2 / "predictions.csv").read_bytes()


class TestPrioritize:
    def test_profile_schema_and_ranks(self, workspace, tmp_path):
        out = tmp_path / "prio"
        assert (
            main(["prioritize", "--data", str(workspace / "data"), "--checkpoint",
                  str(workspace / "run" / "checkpoint.npz"), "--year", "2024",
                  "--k", "5", "--out", str(out)])
            == 0
        )
        with open(out / "profile.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 50
        ranks = [int(r["priority_rank"]) for r in rows]
        assert ranks == list(range(1, 51))
        pcis = [float(r["predicted_pci"]) for r in rows]
        assert pcis == sorted(pcis)
        with open(out / "top_segments.csv") as fh:
            top = list(csv.DictReader(fh))
        assert len(top) == 5
        assert [r["segment_id"] for r in top] == [r["segment_id"] for r in rows[:5]]
        with open(out / "safety_report.csv") as fh:
            quantities = {r["quantity"]: float(r["value"]) for r in csv.DictReader(fh)}
        assert quantities["adjacent_match"] + quantities["critical_misclassification"] == pytest.approx(1.0)
        confusion_total = sum(v for k, v in quantities.items() if k.startswith("confusion["))
        assert confusion_total == 50

    def test_unavailable_year_is_usage_error(self, workspace, tmp_path):
        code = main(["prioritize", "--data", str(workspace / "data"), "--checkpoint",
                     str(workspace / "run" / "checkpoint.npz"), "--year", "2030",
                     "--out", str(tmp_path / "x")])
        assert code == 2


class TestExplainCli:
    def test_global_importance(self, workspace, tmp_path):
        out = tmp_path / "exp"
        assert (
            main(["explain", "--data", str(workspace / "data"), "--checkpoint",
                  str(workspace / "run" / "checkpoint.npz"), "--global",
                  "--repeats", "2", "--out", str(out), "--seed", "1"])
            == 0
        )
        with open(out / "global_importance.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert {r["feature"] for r in rows} == set(FEATURE_NAMES)
        scores = [float(r["score"]) for r in rows]
        assert scores == sorted(scores, reverse=True)
        assert sum(scores) == pytest.approx(1.0, abs=1e-9) or sum(scores) == 0.0

    def test_local_importance(self, workspace, tmp_path):
        out = tmp_path / "expl"
        assert (
            main(["explain", "--data", str(workspace / "data"), "--checkpoint",
                  str(workspace / "run" / "checkpoint.npz"), "--node", "S00",
                  "--steps", "15", "--out", str(out), "--seed", "1"])
            == 0
        )
        with open(out / "local_importance_S00.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == len(FEATURE_NAMES)

    def test_node_and_global_mutually_exclusive(self, workspace, tmp_path):
        code = main(["explain", "--data", str(workspace / "data"), "--checkpoint",
                     str(workspace / "run" / "checkpoint.npz"),
                     "--out", str(tmp_path / "y")])
        assert code == 2


class TestAblate:
    def test_grid_rows(self, workspace, tmp_path):
        out = tmp_path / "abl"
        assert (
            main(["ablate", "--data", str(workspace / "data"),
                  "--axis", "variant=mlp,vanilla", "--axis", "t0=1,2",
                  "--max-epochs", "10", "--seed", "3", "--out", str(out)])
            == 0
        )
        with open(out / "ablation.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 4
        assert {(r["axis"], r["setting"]) for r in rows} == {
            ("variant", "mlp"), ("variant", "vanilla"), ("t0", "1"), ("t0", "2"),
        }
        for r in rows:
            assert float(r["rmse"]) == pytest.approx(np.sqrt(float(r["mse"])), rel=1e-9)

    def test_unknown_axis_usage_error(self, workspace, tmp_path):
        code = main(["ablate", "--data", str(workspace / "data"),
                     "--axis", "bogus=1", "--out", str(tmp_path / "z")])
        assert code == 2

    def test_unknown_axis_value_usage_error(self, workspace, tmp_path):
        code = main(["ablate", "--data", str(workspace / "data"),
                     "--axis", "heads=3", "--out", str(tmp_path / "z2")])
        assert code == 2

    def test_feature_drop_axis(self, workspace, tmp_path):
        out = tmp_path / "ablf"
        assert (
            main(["ablate", "--data", str(workspace / "data"),
                  "--axis", "features=all,no_traffic", "--variant", "mlp",
                  "--max-epochs", "8", "--seed", "3", "--out", str(out)])
            == 0
        )
        with open(out / "ablation.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 2


class TestConfigFile:
    def test_file_values_and_cli_override(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            "# comment\ntrain.lr = 0.005\nmodel.heads = 2\nsynth.gamma = 0.25\n"
        )
        values = read_config_file(cfg)
        assert values["train.learning_rate"] == "0.005"
        tc = build_section("train", values)
        assert tc.learning_rate == 0.005
        tc2 = build_section("train", values, learning_rate=0.1)
        assert tc2.learning_rate == 0.1
        mc = build_section("model", values)
        assert mc.heads == 2
        sc = build_section("synth", values)
        assert sc.gamma == 0.25

    def test_unknown_key_rejected(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("train.bogus = 1\n")
        with pytest.raises(ConfigError, match="unknown config key"):
            build_section("train", read_config_file(cfg))

    def test_unknown_section_rejected(self, tmp_path):
        cfg = tmp_path / "bad2.cfg"
        cfg.write_text("foo.bar = 1\n")
        with pytest.raises(ConfigError, match="unknown section"):
            read_config_file(cfg)

    def test_train_uses_config_file(self, workspace, tmp_path):
        cfg = tmp_path / "t.cfg"
        cfg.write_text("train.max_epochs = 3\nmodel.gru_hidden = 8\nmodel.d_head = 4\n")
        out = tmp_path / "cfgrun"
        assert (
            main(["train", "--data", str(workspace / "data"), "--config", str(cfg),
                  "--out", str(out), "--seed", "1"])
            == 0
        )
        report = json.loads((out / "train_report.json").read_text())
        assert report["epochs_run"] == 3

import csv

import pytest

from askdefer.cli import build_parser, main

TINY_RUN = ["run", "--task", "synth", "--n", "400", "--epochs", "8",
            "--methods", "ltd", "lta_joint", "--seeds", "1", "2",
            "--delta", "0.0", "--beta-grid", "0.0", "0.5", "1.0"]


class TestGenerate:
    def test_writes_dataset_and_manifest(self, tmp_path, capsys):
        rc = main(["generate", "--task", "synth", "--seed", "1",
                   "--n", "64", "--out", str(tmp_path)])
        assert rc == 0
        assert (tmp_path / "synth_seed1.csv").exists()
        assert (tmp_path / "synth_seed1.manifest.txt").exists()
        assert "synth_seed1.csv" in capsys.readouterr().out

    def test_same_invocation_gives_identical_bytes(self, tmp_path):
        args = ["generate", "--task", "consensus", "--seed", "2", "--n", "50"]
        main(args + ["--out", str(tmp_path / "a")])
        main(args + ["--out", str(tmp_path / "b")])
        assert (tmp_path / "a" / "consensus_seed2.csv").read_bytes() == \
            (tmp_path / "b" / "consensus_seed2.csv").read_bytes()

    def test_invalid_task_exits_2_naming_the_field(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["generate", "--task", "cifar"])
        assert exc.value.code == 2
        assert "--task" in capsys.readouterr().err


class TestRun:
    def test_writes_csv_manifest_figure_and_summary(self, tmp_path, capsys):
        rc = main(TINY_RUN + ["--out", str(tmp_path)])
        assert rc == 0
        assert (tmp_path / "results.csv").exists()
        assert (tmp_path / "manifest.txt").exists()
        assert (tmp_path / "accuracy_vs_coverage_delta0.png").exists()
        out = capsys.readouterr().out
        assert "method" in out and "lta_joint" in out
        with (tmp_path / "results.csv").open() as fh:
            rows = list(csv.reader(fh))
        # 2 methods x 2 seeds x 3 budgets
        assert len(rows) - 1 == 12

    def test_save_bundles_enables_reeval(self, tmp_path, capsys):
        rc = main(TINY_RUN + ["--out", str(tmp_path), "--save-bundles"])
        assert rc == 0
        bundle = tmp_path / "bundle_lta_joint_seed1_delta0.txt"
        assert bundle.exists()
        rc = main(["eval", "--bundle", str(bundle), "--task", "synth",
                   "--n", "400", "--seed", "1",
                   "--beta-grid", "0.0", "0.5", "1.0",
                   "--out", str(tmp_path / "reeval")])
        assert rc == 0
        assert (tmp_path / "reeval" / "eval_results.csv").exists()
        assert (tmp_path / "reeval" / "eval_accuracy_vs_coverage.png").exists()

    def test_delta_sweep_writes_per_method_figures(self, tmp_path):
        rc = main(["run", "--task", "synth", "--n", "400", "--epochs", "6",
                   "--methods", "lta_seq", "--seeds", "1",
                   "--delta", "0.0", "0.5", "--beta-grid", "0.0", "1.0",
                   "--out", str(tmp_path)])
        assert rc == 0
        assert (tmp_path / "delta_effect_lta_seq.png").exists()

    def test_incompatible_feedback_fails_with_exit_3(self, tmp_path, capsys):
        rc = main(["run", "--task", "consensus", "--n", "200", "--epochs", "4",
                   "--feedback", "feature", "--methods", "lta_seq",
                   "--seeds", "1", "--beta-grid", "0.0", "1.0",
                   "--out", str(tmp_path)])
        assert rc == 3
        assert "FAILED" in capsys.readouterr().err


class TestConfigFile:
    def test_config_supplies_defaults_and_flags_override(self, tmp_path,
                                                         capsys):
        cfg = tmp_path / "exp.ini"
        cfg.write_text("[experiment]\n"
                       "task = synth\n"
                       "n = 400\n"
                       "epochs = 6\n"
                       "methods = ltd\n"
                       "seeds = 1\n"
                       "beta-grid = 0.0 1.0\n")
        out1 = tmp_path / "from_config"
        rc = main(["run", "--config", str(cfg), "--out", str(out1)])
        assert rc == 0
        manifest = (out1 / "manifest.txt").read_text()
        assert "task = synth" in manifest and "epochs = 6" in manifest

        out2 = tmp_path / "flag_wins"
        rc = main(["run", "--config", str(cfg), "--epochs", "4",
                   "--out", str(out2)])
        assert rc == 0
        assert "epochs = 4" in (out2 / "manifest.txt").read_text()

    def test_missing_config_file_exits_2(self, capsys):
        rc = main(["run", "--config", "/nonexistent.ini"])
        assert rc == 2


class TestOracleDemo:
    def test_prints_table_and_writes_outputs(self, tmp_path, capsys):
        rc = main(["oracle-demo", "--seeds", "1", "2", "--n", "800",
                   "--out", str(tmp_path)])
        assert rc == 0
        out = capsys.readouterr().out
        assert "toy_table" in out and "LtD*" in out and "LtA*" in out
        assert (tmp_path / "oracle_demo.csv").exists()
        assert (tmp_path / "oracle_demo.png").exists()


class TestHelp:
    def test_every_pinned_flag_is_documented(self, capsys):
        parser = build_parser()
        with pytest.raises(SystemExit):
            parser.parse_args(["run", "--help"])
        text = capsys.readouterr().out
        for flag in ("--task", "--feedback", "--methods", "--seeds",
                     "--delta", "--beta-grid", "--epochs", "--lr", "--out",
                     "--config"):
            assert flag in text

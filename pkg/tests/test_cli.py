import os

import pytest

from ofcl.cli import main
from ofcl.config import RunConfig, parse_config_file, resolve_config
from ofcl.errors import ParseError, UsageError

SMALL_CONFIG = """
# a fast synthetic stream for CLI tests
input_dim = 6
base_classes = 3
base_samples_per_class = 10
tasks = 2
n_way = 2
k_shot = 5
test_per_class = 5
separation = 3.0
spread = 0.4
embedding_dim = 6
tokens_per_task = 6
token_length = 2
top_k = 2
epochs = 4
batch_size = 10
seed = 13
"""


@pytest.fixture()
def small_config(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(SMALL_CONFIG)
    return str(path)


class TestConfig:
    def test_defaults(self):
        cfg = resolve_config()
        assert cfg == RunConfig()

    def test_file_values_override_defaults(self, small_config):
        cfg = resolve_config(small_config)
        assert cfg.base_classes == 3
        assert cfg.epochs == 4
        assert cfg.gamma == RunConfig().gamma

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("mystery = 1\n")
        with pytest.raises(ParseError):
            parse_config_file(path)

    def test_duplicate_key_rejected(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("seed = 1\nseed = 2\n")
        with pytest.raises(ParseError):
            parse_config_file(path)

    def test_bad_value_type(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("epochs = lots\n")
        with pytest.raises(UsageError):
            resolve_config(path)

    def test_seed_precedence(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("seed = 1\n")
        env = {"OFCL_SEED": "2"}
        assert resolve_config(path, env={}).seed == 1
        assert resolve_config(path, env=env).seed == 2
        assert resolve_config(path, overrides={"seed": 3}, env=env).seed == 3

    def test_none_override_is_ignored(self):
        assert resolve_config(overrides={"seed": None}).seed == RunConfig().seed


class TestHelpAndErrors:
    def test_top_level_help_exits_zero(self, capsys):
        with pytest.raises(SystemExit) as err:
            main(["--help"])
        assert err.value.code == 0
        assert "generate" in capsys.readouterr().out

    @pytest.mark.parametrize("sub", ["generate", "run", "eval", "inspect"])
    def test_subcommand_help_exits_zero(self, sub):
        with pytest.raises(SystemExit) as err:
            main([sub, "--help"])
        assert err.value.code == 0

    def test_unknown_flag_exits_nonzero(self):
        with pytest.raises(SystemExit) as err:
            main(["generate", "--frobnicate"])
        assert err.value.code != 0

    def test_bad_generation_reports_error(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("input_dim = 2\nbase_classes = 80\nseparation = 9.0\n")
        code = main(["generate", "--config", str(cfg), "--out", str(tmp_path / "eps")])
        assert code != 0
        assert "error:" in capsys.readouterr().err


class TestGenerate:
    def test_writes_manifest_and_episodes(self, small_config, tmp_path, capsys):
        out = tmp_path / "episodes"
        assert main(["generate", "--config", small_config, "--out", str(out)]) == 0
        names = sorted(os.listdir(out))
        assert "manifest.txt" in names
        assert sum(n.startswith("episode_task_") for n in names) == 3

    def test_rerun_is_byte_identical(self, small_config, tmp_path):
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        main(["generate", "--config", small_config, "--out", str(out_a)])
        main(["generate", "--config", small_config, "--out", str(out_b)])
        for name in sorted(os.listdir(out_a)):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()


class TestRunAndEval:
    def test_run_then_eval_matches(self, small_config, tmp_path, capsys):
        out = tmp_path / "run"
        assert main(["run", "--config", small_config, "--out", str(out)]) == 0
        capsys.readouterr()
        report_text = (out / "report.txt").read_text()

        assert main(["eval", str(out)]) == 0
        assert capsys.readouterr().out == report_text

    def test_report_parses(self, small_config, tmp_path):
        import json

        out = tmp_path / "run"
        main(["run", "--config", small_config, "--out", str(out)])
        for line in (out / "report.txt").read_text().splitlines():
            key, value = line.split(" = ", 1)
            json.loads(value)
            assert key

    def test_open_world_flag_switches_mode(self, small_config, tmp_path, capsys):
        out = tmp_path / "run"
        main(["run", "--config", small_config, "--out", str(out)])
        capsys.readouterr()
        main(["eval", str(out), "--open-world"])
        text = capsys.readouterr().out
        assert 'mode = "open-world"' in text

    def test_eval_single_records_file(self, small_config, tmp_path, capsys):
        out = tmp_path / "run"
        main(["run", "--config", small_config, "--out", str(out)])
        capsys.readouterr()
        assert main(["eval", str(out / "records_task_000.csv")]) == 0
        text = capsys.readouterr().out
        assert "ACC_N" in text
        # a lone CSV only carries its own predicted column
        assert 'mode = "open-world"' in text

    def test_eval_malformed_csv(self, tmp_path, capsys):
        bad = tmp_path / "records.csv"
        bad.write_text("task,true,predicted,score\n0,1\n")
        assert main(["eval", str(bad)]) != 0
        assert "error:" in capsys.readouterr().err

    def test_run_from_episode_manifest(self, small_config, tmp_path, capsys):
        episodes = tmp_path / "episodes"
        main(["generate", "--config", small_config, "--out", str(episodes)])
        out = tmp_path / "run"
        code = main(
            [
                "run",
                "--config",
                small_config,
                "--episodes",
                str(episodes / "manifest.txt"),
                "--out",
                str(out),
            ]
        )
        assert code == 0
        assert (out / "report.txt").exists()

    def test_run_artifacts_exist(self, small_config, tmp_path):
        out = tmp_path / "run"
        main(["run", "--config", small_config, "--out", str(out)])
        names = set(os.listdir(out))
        for required in (
            "losses.csv",
            "report.txt",
            "knowledge_final.txt",
            "tokens_final.txt",
            "projection_2d.csv",
            "diagnostics.txt",
        ):
            assert required in names
        assert any(n.startswith("records_task_") for n in names)
        assert any(n.startswith("records_closed_task_") for n in names)
        assert any(n.startswith("knowledge_task_") for n in names)
        assert any(n.startswith("tokens_task_") for n in names)

    def test_loss_log_one_line_per_epoch(self, small_config, tmp_path):
        out = tmp_path / "run"
        main(["run", "--config", small_config, "--out", str(out)])
        lines = (out / "losses.csv").read_text().splitlines()
        assert lines[0] == "task,epoch,margin_loss,aug_loss,total"
        assert len(lines) == 1 + 3 * 4  # three tasks, four epochs each


class TestInspect:
    def test_row_per_sphere_with_provenance(self, tmp_path, capsys):
        import numpy as np

        from ofcl.boundaries import Hypersphere
        from ofcl.knowledge import KnowledgeSpace, dump_knowledge

        space = KnowledgeSpace()
        space.spheres.append(Hypersphere(0, np.zeros(2), 0.5, 0, "known"))
        space.spheres.append(Hypersphere(1, np.ones(2), 0.5, 0, "known"))
        space.spheres.append(Hypersphere(-1, 3 * np.ones(2), 0.5, 1, "pseudo"))
        space.next_pseudo_id = 2
        path = tmp_path / "dump.txt"
        dump_knowledge(space, path)

        assert main(["inspect", str(path)]) == 0
        lines = capsys.readouterr().out.splitlines()
        rows = [l for l in lines if l.startswith(("known", "pseudo"))]
        assert len(rows) == 3
        assert sum(r.startswith("pseudo") for r in rows) == 1
        assert "open-1" in rows[2]

    def test_knowledge_dump_table(self, small_config, tmp_path, capsys):
        out = tmp_path / "run"
        main(["run", "--config", small_config, "--out", str(out)])
        capsys.readouterr()
        assert main(["inspect", str(out / "knowledge_final.txt")]) == 0
        text = capsys.readouterr().out
        assert "provenance" in text
        assert "promotions" in text

    def test_token_dump_table(self, small_config, tmp_path, capsys):
        out = tmp_path / "run"
        main(["run", "--config", small_config, "--out", str(out)])
        capsys.readouterr()
        assert main(["inspect", str(out / "tokens_final.txt")]) == 0
        assert "frequency" in capsys.readouterr().out

    def test_corrupt_dump(self, tmp_path, capsys):
        bad = tmp_path / "dump.txt"
        bad.write_text("garbage\n")
        assert main(["inspect", str(bad)]) != 0
        assert "error:" in capsys.readouterr().err

    def test_missing_file_reports_error(self, tmp_path, capsys):
        assert main(["inspect", str(tmp_path / "nope.txt")]) != 0
        assert "error:" in capsys.readouterr().err
        assert main(["eval", str(tmp_path / "nope.csv")]) != 0
        assert "error:" in capsys.readouterr().err

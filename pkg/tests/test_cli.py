import json
from pathlib import Path

import pytest

from ekmanfv import cli
from ekmanfv.errors import ConfigError
from ekmanfv.harness import CSV_SCHEMA

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def write_config(tmp_path, body):
    path = tmp_path / "run.cfg"
    path.write_text(body)
    return str(path)


class TestConfigParsing:
    def test_shipped_configs_parse(self):
        for name in ("neutral", "stable", "unstable"):
            cfg = cli.load_config(CONFIG_DIR / f"{name}.cfg")
            assert cfg["run"]["case"] == name

    def test_unknown_key_is_rejected(self, tmp_path):
        path = write_config(tmp_path, "[physics]\nf = 1e-4\ncoriolis = 2e-4\n")
        with pytest.raises(ConfigError, match="physics.coriolis"):
            cli.load_config(path)

    def test_unknown_section_is_rejected(self, tmp_path):
        path = write_config(tmp_path, "[forcing]\nf = 1e-4\n")
        with pytest.raises(ConfigError, match=r"\[forcing\]"):
            cli.load_config(path)

    def test_bad_value_reports_key(self, tmp_path):
        path = write_config(tmp_path, "[run]\ndt = fast\n")
        with pytest.raises(ConfigError, match="run.dt"):
            cli.load_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            cli.load_config(tmp_path / "absent.cfg")


class TestSubcommands:
    def test_simulate_happy_path(self, tmp_path):
        out = tmp_path / "out"
        rc = cli.main(["simulate", "--config", str(CONFIG_DIR / "neutral.cfg"),
                       "--duration", "300", "--out", str(out)])
        assert rc == 0
        ustar = out / "neutral_fvfree_sim_ustar.csv"
        profile = out / "neutral_fvfree_sim_profile.csv"
        assert ustar.exists() and profile.exists()
        assert ustar.read_text().splitlines()[0] == f"# {CSV_SCHEMA}"

    def test_experiment_selected_schemes(self, tmp_path):
        out = tmp_path / "exp"
        rc = cli.main(["experiment", "--case", "stable",
                       "--schemes", "fvfree,fv1", "--duration", "300",
                       "--out", str(out)])
        assert rc == 0
        names = {p.name for p in out.iterdir()}
        assert names == {"stable_fv1_profile.csv", "stable_fv1_ustar.csv",
                         "stable_fvfree_profile.csv", "stable_fvfree_ustar.csv",
                         "summary.json"}

    def test_diagnose_k0(self, tmp_path):
        out = tmp_path / "k0"
        rc = cli.main(["diagnose-k0", "--duration", "1800", "--out", str(out)])
        assert rc == 0
        payload = json.loads((out / "k0_report.json").read_text())
        assert payload["magnitude_ratio"] > 10.0
        assert payload["term_ratio"] > 1e3

    def test_convergence(self, tmp_path, capsys):
        out = tmp_path / "conv"
        rc = cli.main(["convergence", "--out", str(out)])
        assert rc == 0
        assert (out / "convergence.csv").exists()
        printed = capsys.readouterr().out
        assert "fourth_order" in printed

    def test_config_error_exit_code(self, tmp_path):
        bad = write_config(tmp_path, "[run]\nspeed = 11\n")
        rc = cli.main(["simulate", "--config", bad, "--out", str(tmp_path / "o")])
        assert rc == 2

    def test_simulate_rerun_bytes_identical(self, tmp_path):
        outs = []
        for sub in ("r1", "r2"):
            out = tmp_path / sub
            cli.main(["simulate", "--case", "stable", "--duration", "300",
                      "--out", str(out)])
            outs.append((out / "stable_fvfree_sim_profile.csv").read_bytes())
        assert outs[0] == outs[1]

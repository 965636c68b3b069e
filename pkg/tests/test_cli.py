import csv
import json
import subprocess
import sys

import pytest

from vflshot.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, REPORT_DIR_ENV, bundled_config, main
from vflshot.config import ConfigError, load_config
from vflshot.metrics import read_report

FAST = ["n=400", "overlap_size=32", "test_size=100", "client_epochs=1", "server_epochs=3", "rounds=5"]


def _run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out.strip(), err


class TestGenData:
    def test_rows_and_manifest(self, tmp_path, capsys):
        out = tmp_path / "xor.csv"
        code, printed, _ = _run(["gen-data", "--task", "xor_cross", "--n", "2000", "--out", str(out)], capsys)
        assert code == EXIT_OK and printed == str(out)
        with open(out) as fh:
            assert sum(1 for _ in csv.reader(fh)) == 2001
        manifest = json.loads((tmp_path / "xor.manifest.json").read_text())
        assert manifest["params"]["seed"] == 0
        assert manifest["generation_check"]["joint_best"] >= 0.95

    def test_same_seed_same_bytes(self, tmp_path, capsys):
        for name in ("a.csv", "b.csv"):
            _run(["gen-data", "--n", "200", "--seed", "3", "--skip-check", "--out", str(tmp_path / name)], capsys)
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_invalid_spec(self, tmp_path, capsys):
        code, _, err = _run(["gen-data", "--n", "3", "--out", str(tmp_path / "x.csv")], capsys)
        assert code == EXIT_RUNTIME and "n >=" in err


class TestRun:
    def test_oneshot_preset(self, tmp_path, capsys):
        code, printed, _ = _run(["run", "--preset", "synthetic_xor", *FAST, "--report-dir", str(tmp_path)], capsys)
        assert code == EXIT_OK
        report = read_report(printed)
        assert report.method == "oneshot" and report.comm["comm_times"] == {"client0": 3, "client1": 3}
        assert (tmp_path / f"{report.run_id}.ledger.csv").is_file()

    def test_fedbcd_q5_env_dir(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv(REPORT_DIR_ENV, str(tmp_path))
        code, printed, _ = _run(["run", "--preset", "synthetic_xor", *FAST, "method=fedbcd"], capsys)
        report = read_report(printed)
        assert code == EXIT_OK and printed.startswith(str(tmp_path))
        assert report.config["q"] == 5 and report.comm_times == 10

    def test_config_file_and_override(self, tmp_path, capsys):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text("method = vanilla  # baseline\n" + "\n".join(a.replace("=", " = ") for a in FAST) + "\n")
        code, printed, _ = _run(["run", str(cfg), "rounds=7", "--report-dir", str(tmp_path)], capsys)
        assert code == EXIT_OK and read_report(printed).comm_times == 14

    def test_malformed_config(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("method = teleport\nrounds = many\nnot a pair\n")
        code, _, err = _run(["run", str(cfg), "--report-dir", str(tmp_path / "out")], capsys)
        assert code == EXIT_CONFIG
        assert "rounds" in err and "method" in err and "bad.cfg:3" in err
        assert not (tmp_path / "out").exists()

    def test_runtime_error(self, tmp_path, capsys):
        code, _, err = _run(["run", "source=csv", f"csv_path={tmp_path / 'missing.csv'}",
                             "--report-dir", str(tmp_path)], capsys)
        assert code == EXIT_RUNTIME and "missing.csv" in err

    def test_bundled_configs_load(self):
        assert load_config(bundled_config("synthetic_xor")).overlap_size == 64
        credit = load_config(bundled_config("credit"))
        assert credit.first_client_columns == 10 and credit.overlap_size == 1000
        with pytest.raises(ConfigError):
            bundled_config("imagenet")


class TestCompare:
    def test_table(self, tmp_path, capsys):
        paths = []
        for method in ("oneshot", "fewshot", "vanilla", "fedbcd", "fewshot_finetune"):
            _, printed, _ = _run(["run", "--preset", "synthetic_xor", *FAST, "finetune_rounds=2",
                                  f"method={method}", "--report-dir", str(tmp_path)], capsys)
            paths.append(printed)
        table = tmp_path / "table.csv"
        code, printed, _ = _run(["compare", *paths, "--out", str(table)], capsys)
        rows = list(csv.DictReader(open(table)))
        assert code == EXIT_OK and len(rows) == 5
        assert list(rows[0]) == ["run_id", "method", "accuracy", "auc", "comm_times", "comm_mb"]
        assert [r["comm_times"] for r in rows] == ["3", "5", "10", "10", "9"]

    def test_missing_file(self, tmp_path, capsys):
        (tmp_path / "a.json").write_text("{}")
        code, _, err = _run(["compare", str(tmp_path / "a.json"), str(tmp_path / "gone.json")], capsys)
        assert code == EXIT_RUNTIME and "gone.json" in err

    def test_needs_two(self, tmp_path, capsys):
        code, _, _ = _run(["compare", str(tmp_path / "a.json")], capsys)
        assert code == EXIT_CONFIG


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "vflshot", "run", "--preset", "synthetic_xor", *FAST,
                          "--report-dir", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 0 and read_report(res.stdout.strip()).comm_times == 3

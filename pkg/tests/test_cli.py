"""End-to-end command-line runs on desk-scale scenarios."""

import csv
import shutil
import subprocess
import sys

import numpy as np
import pytest
import yaml

from deaoc import archive, config
from deaoc.cli import EXIT_INPUT, EXIT_OK, EXIT_VERIFY, main


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def optimized(tmp_path_factory):
    out = tmp_path_factory.mktemp("opt")
    assert run("optimize", "--config", "cantilever", "--out-dir", out) == EXIT_OK
    return out


@pytest.fixture(scope="module")
def damped(tmp_path_factory):
    out = tmp_path_factory.mktemp("damped")
    assert run("simulate", "--config", "cantilever_damped", "--out-dir", out) == EXIT_OK
    return out


class TestSimulate:
    def test_zero_charges_stay_straight(self, tmp_path):
        assert run("simulate", "--config", "cantilever", "--out-dir", tmp_path) == EXIT_OK
        traj, summary = archive.read(tmp_path)
        np.testing.assert_allclose(traj.q - traj.q[0], 0.0, atol=1e-12)
        assert summary["energy"]["max_abs_drift"] <= 1e-12

    def test_damped_run_verifies(self, damped, capsys):
        assert run("verify", "--config", "cantilever_damped", "--out-dir", damped) == EXIT_OK
        out = capsys.readouterr().out
        assert "FAIL" not in out and "energy" in out

    def test_missing_field_exit_2(self, tmp_path, capsys):
        doc = config.load(config.bundled_configs()["cantilever"])
        del doc["material"]["E"]
        p = tmp_path / "bad.yaml"
        p.write_text(yaml.safe_dump(doc))
        assert run("simulate", "--config", p, "--out-dir", tmp_path / "o") == EXIT_INPUT
        assert "material.E" in capsys.readouterr().err

    def test_unknown_config(self, tmp_path):
        assert run("simulate", "--config", "no-such-scenario", "--out-dir", tmp_path) == EXIT_INPUT

    def test_bad_arguments(self):
        assert run("simulate") == EXIT_INPUT


class TestOptimize:
    def test_report(self, optimized):
        _, summary = archive.read(optimized)
        assert summary["status"] == "optimal"
        assert summary["solver"]["max_eq_violation"] <= 1e-6
        assert (optimized / archive.SNAPSHOT_FILE).is_file()

    def test_fresh_archive_verifies(self, optimized, capsys):
        assert run("verify", "--config", "cantilever", "--out-dir", optimized) == EXIT_OK
        assert "FAIL" not in capsys.readouterr().out

    def test_warm_start_converges_at_once(self, optimized, tmp_path):
        snap = optimized / archive.SNAPSHOT_FILE
        assert run("optimize", "--config", "cantilever", "--out-dir", tmp_path, "--warm-start", snap) == EXIT_OK
        _, summary = archive.read(tmp_path)
        assert summary["solver"]["iterations"] <= 3

    def test_iteration_cap_exit_4(self, tmp_path):
        assert run("optimize", "--config", "cantilever", "--out-dir", tmp_path, "--max-iter", 1) == 4
        _, summary = archive.read(tmp_path)
        assert summary["status"] == "max-iter"

    def test_rest_to_rest_zero_objective(self, tmp_path):
        assert run("optimize", "--config", "rest_to_rest", "--out-dir", tmp_path) == EXIT_OK
        _, summary = archive.read(tmp_path)
        assert summary["objective"] == pytest.approx(0.0, abs=1e-12)


class TestReplay:
    def test_reproduces_optimized_states(self, optimized, tmp_path):
        assert run("replay", "--config", "cantilever", "--out-dir", tmp_path, "--source", optimized) == EXIT_OK
        a, _ = archive.read(optimized)
        b, _ = archive.read(tmp_path)
        assert np.max(np.abs(a.q - b.q)) <= 1e-6

    def test_needs_source(self, tmp_path):
        assert run("replay", "--config", "cantilever", "--out-dir", tmp_path) == EXIT_INPUT


class TestVerify:
    def test_corrupted_q_column_exit_5(self, optimized, tmp_path, capsys):
        bad = tmp_path / "bad"
        shutil.copytree(optimized, bad)
        path = bad / archive.TRAJECTORY_FILE
        with open(path) as fh:
            rows = list(csv.reader(fh))
        col = rows[0].index("node11.d1_x")
        for r in rows[2:]:
            r[col] = repr(float(r[col]) + 0.5)
        with open(path, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(rows)
        assert run("verify", "--config", "cantilever", "--out-dir", bad) == EXIT_VERIFY
        failed = [ln for ln in capsys.readouterr().out.splitlines() if ln.startswith("FAIL")]
        assert any("constraint" in ln for ln in failed)

    def test_missing_archive_exit_2(self, tmp_path):
        assert run("verify", "--config", "cantilever", "--out-dir", tmp_path / "none") == EXIT_INPUT


class TestExport:
    def test_node_series_rows(self, optimized, tmp_path):
        assert run("export", "--config", "cantilever", "--out-dir", optimized,
                   "--export-dir", tmp_path, "--series", "node:11:phi_x") == EXIT_OK
        with open(tmp_path / "node_11_phi_x.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["time", "node:11:phi_x"]
        assert len(rows) - 1 == 6

    def test_empty_selection(self, optimized, tmp_path):
        assert run("export", "--config", "cantilever", "--out-dir", optimized, "--export-dir", tmp_path / "e") == EXIT_OK
        assert not (tmp_path / "e").exists()

    def test_unknown_series(self, optimized, tmp_path):
        assert run("export", "--config", "cantilever", "--out-dir", optimized, "--export-dir", tmp_path,
                   "--series", "node:99:phi_x") == EXIT_INPUT

    def test_contact_columns_per_pair(self, tmp_path):
        out = tmp_path / "g"
        assert run("simulate", "--config", "grasper", "--out-dir", out) == EXIT_OK
        assert run("export", "--config", "grasper", "--out-dir", out, "--export-dir", tmp_path / "e",
                   "--series", "contact:lambda:all") == EXIT_OK
        with open(tmp_path / "e" / "contact_lambda_all.csv") as fh:
            header = next(csv.reader(fh))
        assert len(header) == 1 + 18


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "deaoc.cli", "simulate", "--config", "cantilever",
                          "--out-dir", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr

"""Trajectory archives and decision-vector snapshots."""

import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from deaoc import archive, config, integrator, runs


@pytest.fixture(scope="module")
def grasper_run():
    doc = config.load(config.bundled_configs()["grasper"])
    system = runs.system_from(doc)
    charges = np.full(system.layout.n_charge, 2e-4)
    traj = integrator.simulate(system, system.reference_q, 3, 0.04, charges=charges)
    return system, traj


def _assert_same(a, b):
    for f in ("q", "lam_ext", "lam_c", "Q", "p", "energy", "newton_iters"):
        np.testing.assert_array_equal(getattr(a, f), getattr(b, f), err_msg=f)
    assert a.dt == b.dt


class TestRoundTrip:
    def test_bit_exact(self, grasper_run, tmp_path):
        system, traj = grasper_run
        archive.write(tmp_path, system.layout, traj, {"mode": "simulate"})
        back, summary = archive.read(tmp_path, system.layout)
        _assert_same(traj, back)
        assert summary["N"] == traj.N
        assert summary["census"] == system.layout.census()

    def test_rewrite_is_byte_identical(self, grasper_run, tmp_path):
        system, traj = grasper_run
        archive.write(tmp_path / "a", system.layout, traj, {"mode": "simulate"})
        back, summary = archive.read(tmp_path / "a")
        archive.write(tmp_path / "b", system.layout, back, summary)
        for name in (archive.TRAJECTORY_FILE, archive.MOMENTA_FILE, archive.SUMMARY_FILE):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    @settings(max_examples=30, deadline=None)
    @given(arrays(np.float64, (3, 2), elements=st.floats(allow_nan=False, allow_infinity=False, width=64)))
    def test_table_values_survive(self, vals):
        import tempfile
        from pathlib import Path
        with tempfile.TemporaryDirectory() as d:
            p = Path(d) / "t.csv"
            with open(p, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["a", "b"])
                for r in vals:
                    w.writerow([archive._fmt(v) for v in r])
            _, back = archive.read_table(p)
        np.testing.assert_array_equal(back, vals)


class TestContract:
    def test_header_and_widths(self, grasper_run, tmp_path):
        system, traj = grasper_run
        L = system.layout
        archive.write(tmp_path, L, traj, {})
        with open(tmp_path / archive.TRAJECTORY_FILE) as fh:
            rows = list(csv.reader(fh))
        header = rows[0]
        assert header[:2] == ["step", "time"]
        assert header[2:2 + L.n_q] == L.q_names()
        assert header[-2:] == ["energy", "newton_iters"]
        assert len(header) == 2 + L.n_q + L.n_ext + L.n_contact + L.n_charge + 2
        assert {len(r) for r in rows} == {len(header)}
        assert len(rows) == traj.N + 2
        assert sum(h.startswith("lamc:") for h in header) == 18

    def test_summary_is_json(self, grasper_run, tmp_path):
        system, traj = grasper_run
        archive.write(tmp_path, system.layout, traj, {"value": np.float64(1.5), "arr": np.arange(2)})
        doc = json.loads((tmp_path / archive.SUMMARY_FILE).read_text())
        assert doc["value"] == 1.5 and doc["arr"] == [0, 1]

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            archive.read(tmp_path)

    def test_layout_mismatch(self, grasper_run, tmp_path):
        system, traj = grasper_run
        archive.write(tmp_path, system.layout, traj, {})
        other = runs.system_from(config.load(config.bundled_configs()["cantilever"]))
        with pytest.raises(archive.ArchiveError):
            archive.read(tmp_path, other.layout)

    def test_ragged_rows(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("a,b\n1,2\n3\n")
        with pytest.raises(archive.ArchiveError):
            archive.read_table(p)


class TestSnapshot:
    def test_roundtrip(self, tmp_path):
        x = np.random.default_rng(0).normal(size=50) * 10.0 ** np.arange(-25, 25)
        archive.write_snapshot(tmp_path / "s.json", x, {"config": "demo"})
        np.testing.assert_array_equal(archive.read_snapshot(tmp_path / "s.json"), x)

    def test_wrong_format(self, tmp_path):
        (tmp_path / "s.json").write_text(json.dumps({"format": "other", "n": 0, "x": []}))
        with pytest.raises(archive.ArchiveError):
            archive.read_snapshot(tmp_path / "s.json")

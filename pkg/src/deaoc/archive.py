"""Trajectory archives: a per-step CSV, a momentum CSV and a JSON summary.

Column contract of ``trajectory.csv``::

    step, time, <q names>, lam:<constraint>:<k>, lamc:<contact>, Q:<q name>, energy, newton_iters

``q`` names follow :meth:`SystemLayout.q_names`.  Row ``n`` holds ``q_n`` and
the multipliers and charges of interval ``n``; the last row carries ``nan``
for interval quantities.  ``momenta.csv`` holds ``step`` and the momenta
``p_n`` (row 0 is the initial momentum).  All numbers use 17 significant
digits so that reading an archive reproduces it bit for bit.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .integrator import Trajectory
from .multibody import SystemLayout

TRAJECTORY_FILE = "trajectory.csv"
MOMENTA_FILE = "momenta.csv"
SUMMARY_FILE = "summary.json"
SNAPSHOT_FILE = "snapshot.json"


class ArchiveError(ValueError):
    pass


def lambda_names(layout: SystemLayout) -> list:
    return [f"lam:{name}:{k}" for name, size in zip(layout.ext_names, layout.ext_sizes) for k in range(size)]


def columns(layout: SystemLayout) -> list:
    qn = layout.q_names()
    charge = [f"Q:{qn[i]}" for i in layout.charge_idx]
    return (["step", "time"] + qn + lambda_names(layout) + [f"lamc:{c}" for c in layout.contact_names]
            + charge + ["energy", "newton_iters"])


def _fmt(v: float) -> str:
    return "%.17g" % v


def write(out_dir, layout: SystemLayout, traj: Trajectory, summary: dict) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    N = traj.N
    nan_c = np.full(layout.n_contact, np.nan)
    nan_q = np.full(layout.n_charge, np.nan)
    iters = traj.newton_iters if traj.newton_iters is not None else np.full(N, -1)
    with open(out / TRAJECTORY_FILE, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns(layout))
        for n in range(N + 1):
            last = n == N
            row = np.concatenate([
                [traj.dt * n], traj.q[n], traj.lam_ext[n],
                nan_c if last else traj.lam_c[n], nan_q if last else traj.Q[n],
                [np.nan if last else traj.energy[n]],
            ])
            w.writerow([str(n)] + [_fmt(v) for v in row] + ["-1" if last else str(int(iters[n]))])
    with open(out / MOMENTA_FILE, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step"] + [f"p:{c}" for c in layout.q_names()])
        for n in range(N + 1):
            w.writerow([str(n)] + [_fmt(v) for v in traj.p[n]])
    summary = dict(summary)
    summary.setdefault("dt", traj.dt)
    summary["N"] = N
    summary["census"] = layout.census()
    summary["n_columns"] = len(columns(layout))
    (out / SUMMARY_FILE).write_text(json.dumps(summary, indent=2, sort_keys=True, default=_json_default) + "\n")
    return out


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not serializable: {type(obj)}")


def read_table(path) -> tuple[list, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ArchiveError(f"{path}: empty file")
    header = rows[0]
    widths = {len(r) for r in rows[1:]}
    if widths and widths != {len(header)}:
        raise ArchiveError(f"{path}: inconsistent column count")
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(len(rows) - 1, len(header))
    return header, data


def read(out_dir, layout: SystemLayout | None = None) -> tuple[Trajectory, dict]:
    """Load an archive; with ``layout`` the column contract is checked."""
    out = Path(out_dir)
    for name in (TRAJECTORY_FILE, MOMENTA_FILE, SUMMARY_FILE):
        if not (out / name).is_file():
            raise FileNotFoundError(f"archive file missing: {out / name}")
    summary = json.loads((out / SUMMARY_FILE).read_text())
    header, data = read_table(out / TRAJECTORY_FILE)
    c = summary["census"]
    n_q, n_ext, n_c, n_ch = c["n_q"], c["n_ext"], c["n_contact"], c["n_charge"]
    if layout is not None and header != columns(layout):
        raise ArchiveError("trajectory header does not match the scenario layout")
    if len(header) != 2 + n_q + n_ext + n_c + n_ch + 2:
        raise ArchiveError("trajectory column count does not match the census")
    N = len(data) - 1
    o = 2
    q = data[:, o:o + n_q]
    o += n_q
    lam = data[:, o:o + n_ext]
    o += n_ext
    lamc = data[:N, o:o + n_c]
    o += n_c
    Q = data[:N, o:o + n_ch]
    o += n_ch
    energy = data[:N, o]
    iters = data[:N, o + 1].astype(int)
    _, pdata = read_table(out / MOMENTA_FILE)
    traj = Trajectory(q.copy(), lam.copy(), lamc.copy(), Q.copy(), pdata[:, 1:].copy(), energy.copy(),
                      float(summary["dt"]), iters)
    return traj, summary


def write_snapshot(path, x, meta: dict | None = None):
    """Decision-vector snapshot for warm starts (JSON floats round-trip exactly)."""
    doc = {"format": "deaoc-snapshot-1", "n": int(len(x)), "x": [float(v) for v in x]}
    if meta:
        doc["meta"] = meta
    Path(path).write_text(json.dumps(doc, default=_json_default) + "\n")


def read_snapshot(path) -> np.ndarray:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != "deaoc-snapshot-1":
        raise ArchiveError(f"{path}: not a decision-vector snapshot")
    x = np.array(doc["x"], dtype=float)
    if len(x) != doc["n"]:
        raise ArchiveError(f"{path}: length mismatch")
    return x

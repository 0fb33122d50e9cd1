"""Plot-ready series extracted from trajectory archives.

Series names::

    node:<K>:<field>            global beam node K (1-based), field from q names
    node:<beam>:<K>:<field>     node K (1-based) of a named beam
    body:<name>:<field>         rigid body coordinate
    potential:<K>               phi_o, alpha, beta of global node K
    contact:lambda:all          contact multipliers, one column per pair
    contact:gap:all             contact gaps, one column per pair
    charge:all                  charges of every interval
    energy                      interval energy
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .integrator import Trajectory
from .multibody import NODE_FIELDS, System


class SeriesError(ValueError):
    pass


def _node_index(system, parts):
    L = system.layout
    if len(parts) == 2:
        k = int(parts[0])
        if not 1 <= k <= L.n_beam_nodes:
            raise SeriesError(f"node {k} outside 1..{L.n_beam_nodes}")
        return k - 1, parts[1]
    if len(parts) == 3:
        beam, k, field = parts
        if beam not in L.beam_names:
            raise SeriesError(f"unknown beam {beam!r}")
        bi = L.beam_names.index(beam)
        k = int(k)
        if not 1 <= k <= L.beam_node_count[bi]:
            raise SeriesError(f"node {k} outside beam {beam!r}")
        return L.beam_node_start[bi] + k - 1, field
    raise SeriesError("node series needs node:<K>:<field> or node:<beam>:<K>:<field>")


def series(system: System, traj: Trajectory, name: str):
    """``(header, rows)`` for one series."""
    L = system.layout
    parts = name.split(":")
    t = traj.times
    try:
        if parts[0] == "node":
            i, field = _node_index(system, parts[1:])
            if field not in NODE_FIELDS:
                raise SeriesError(f"unknown field {field!r}")
            col = 15 * i + NODE_FIELDS.index(field)
            return ["time", name], np.column_stack([t, traj.q[:, col]])
        if parts[0] == "body" and len(parts) == 3:
            if parts[1] not in L.rigid_names:
                raise SeriesError(f"unknown rigid body {parts[1]!r}")
            if parts[2] not in NODE_FIELDS[:12]:
                raise SeriesError(f"unknown field {parts[2]!r}")
            col = L.body_slice(L.rigid_names.index(parts[1])).start + NODE_FIELDS.index(parts[2])
            return ["time", name], np.column_stack([t, traj.q[:, col]])
        if parts[0] == "potential" and len(parts) == 2:
            i, _ = _node_index(system, [parts[1], "phi_o"])
            return (["time", "phi_o", "alpha", "beta"], np.column_stack([t, traj.q[:, 15 * i + 12:15 * i + 15]]))
        if parts[:2] == ["contact", "lambda"] and len(parts) == 3:
            cols = _contact_cols(L, parts[2])
            return ["time"] + [L.contact_names[c] for c in cols], np.column_stack([t[1:], traj.lam_c[:, cols]])
        if parts[:2] == ["contact", "gap"] and len(parts) == 3:
            cols = _contact_cols(L, parts[2])
            g = np.array([system.contact_gaps(q) for q in traj.q])
            return ["time"] + [L.contact_names[c] for c in cols], np.column_stack([t, g[:, cols]])
        if parts == ["charge", "all"]:
            qn = L.q_names()
            return ["time"] + [qn[i] for i in L.charge_idx], np.column_stack([t[:-1], traj.Q])
        if parts == ["energy"]:
            return ["time", "energy"], np.column_stack([t[:-1] + 0.5 * traj.dt, traj.energy])
    except (ValueError, IndexError) as exc:
        if isinstance(exc, SeriesError):
            raise
        raise SeriesError(f"bad series {name!r}: {exc}") from exc
    raise SeriesError(f"unknown series {name!r}")


def _contact_cols(L, which):
    if which == "all":
        return list(range(L.n_contact))
    if which not in L.contact_names:
        raise SeriesError(f"unknown contact {which!r}")
    return [L.contact_names.index(which)]


def file_name(name: str) -> str:
    return name.replace(":", "_") + ".csv"


def export(system: System, traj: Trajectory, names, out_dir) -> list:
    """Write one CSV per series; returns the written paths."""
    tables = [(n, *series(system, traj, n)) for n in names]
    out = Path(out_dir)
    paths = []
    for name, header, rows in tables:
        out.mkdir(parents=True, exist_ok=True)
        p = out / file_name(name)
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow(["%.17g" % v for v in r])
        paths.append(p)
    return paths

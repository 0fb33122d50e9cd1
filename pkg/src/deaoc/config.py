"""Scenario configuration: YAML documents validated against a JSON schema."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import numpy as np
import yaml
from jsonschema import Draft202012Validator

from .cosserat import Material
from .multibody import BeamSpec, ContactPair, Joint, RigidBody, Scenario


class ConfigError(ValueError):
    """Raised for unreadable or invalid configuration documents."""


def schema() -> dict:
    with resources.files("deaoc").joinpath("schema/scenario.schema.json").open("r") as fh:
        return json.load(fh)


def bundled_configs() -> dict:
    """Bundled scenario files by stem name."""
    root = resources.files("deaoc").joinpath("scenarios")
    return {p.name[:-5]: Path(str(p)) for p in root.iterdir() if p.name.endswith(".yaml")}


def _path_of(error) -> str:
    parts = [str(p) for p in error.absolute_path]
    if error.validator == "required":
        missing = error.message.split("'")[1]
        parts.append(missing)
    return ".".join(parts) or "<root>"


def validate(doc) -> dict:
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a mapping")
    errors = sorted(Draft202012Validator(schema()).iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        lines = []
        for e in errors:
            if e.validator == "required":
                lines.append(f"{_path_of(e)}: required field missing")
            elif e.validator == "additionalProperties":
                lines.append(f"{_path_of(e)}: {e.message}")
            else:
                lines.append(f"{_path_of(e)}: {e.message}")
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(lines))
    _check_references(doc)
    return doc


def _check_references(doc):
    patterns = doc.get("patterns", {})
    used = []
    sim = doc.get("simulate", {})
    if "initial_pattern" in sim:
        used.append(("simulate.initial_pattern", sim["initial_pattern"]))
    for k, ph in enumerate(sim.get("phases", [])):
        if ph["control"] == "potentials":
            if "pattern" not in ph:
                raise ConfigError(f"simulate.phases.{k}.pattern: required field missing")
            used.append((f"simulate.phases.{k}.pattern", ph["pattern"]))
    if "final_pose" in doc.get("boundary", {}):
        used.append(("boundary.final_pose.pattern", doc["boundary"]["final_pose"]["pattern"]))
    init = doc.get("initialization", {})
    if "pattern" in init:
        used.append(("initialization.pattern", init["pattern"]))
    if "target" in init:
        used.append(("initialization.target.pattern", init["target"]["pattern"]))
    for where, name in used:
        if name not in patterns:
            raise ConfigError(f"{where}: unknown pattern {name!r}")


def load(path) -> dict:
    """Read and validate a configuration file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: YAML parse error: {exc}") from exc
    return validate(doc)


def dump(doc: dict) -> str:
    """Serialize a configuration; floats keep 17 significant digits."""
    return yaml.safe_dump(_round_trip_floats(doc), sort_keys=False)


def _round_trip_floats(obj):
    if isinstance(obj, float):
        return float(f"{obj:.17g}")
    if isinstance(obj, dict):
        return {k: _round_trip_floats(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_round_trip_floats(v) for v in obj]
    return obj


def material(doc: dict) -> Material:
    m = doc["material"]
    return Material(rho=m["rho"], E=m["E"], G=m["G"], c1=m["c1"], c2=m["c2"], eta=m.get("eta", 0.0))


def scenario(doc: dict) -> Scenario:
    """Build the mechanical scenario described by a validated document."""
    mat = material(doc)
    beams = [
        BeamSpec(b["name"], b["length"], b["width"], b["cells"], b.get("elements_per_cell", 1),
                 tuple(b.get("origin", (0.0, 0.0, 0.0))), None if "triad" not in b else np.array(b["triad"], float),
                 b.get("clamped", False))
        for b in doc["beams"]
    ]
    bodies = [
        RigidBody(r["name"], r["kind"], np.array(r["center"], float), r["mass"], r["size"],
                  None if "triad" not in r else np.array(r["triad"], float),
                  None if "inertia" not in r else np.array(r["inertia"], float), r.get("height", 2.0))
        for r in doc.get("rigid_bodies", [])
    ]
    joints = [Joint(j["body"], j["beam"], j["node"], tuple(j.get("axis", (0.0, 1.0, 0.0))),
                    None if "anchor" not in j else tuple(j["anchor"]), j.get("type", "revolute"))
              for j in doc.get("joints", [])]
    contacts = []
    by_name = {b.name: b for b in beams}
    for c in doc.get("contacts", []):
        if c["kind"] == "cube-ground":
            contacts.append(ContactPair("cube-ground", body=c["body"], height=c.get("height")))
            continue
        if "beam" not in c:
            raise ConfigError("contacts: node-cylinder contact requires 'beam'")
        if c["beam"] not in by_name:
            raise ConfigError(f"contacts: unknown beam {c['beam']!r}")
        nodes = c.get("nodes", "all")
        if nodes == "all":
            nodes = list(range(by_name[c["beam"]].n_nodes))
        contacts += [ContactPair("node-cylinder", beam=c["beam"], node=n, body=c["body"], radius=c.get("radius"))
                     for n in nodes]
    try:
        return Scenario(beams=beams, material=mat, rigid_bodies=bodies, joints=joints, contacts=contacts,
                        friction_bodies=list(doc.get("friction_bodies", [])),
                        locked_bodies=list(doc.get("locked_bodies", [])),
                        ground_potential=doc.get("ground_potential", True), quad_order=doc.get("quad_order", 1))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

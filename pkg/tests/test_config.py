"""Scenario documents: schema validation, references, serialization."""

import copy

import numpy as np
import pytest
import yaml
from hypothesis import given, settings
from hypothesis import strategies as st

from deaoc import config, runs
from deaoc.cosserat import TABLE1


@pytest.fixture(scope="module")
def bundled():
    return {name: config.load(path) for name, path in config.bundled_configs().items()}


class TestBundled:
    def test_expected_scenarios_ship(self, bundled):
        assert {"cantilever", "worm_contraction", "worm_bending", "grasper", "rest_to_rest"} <= set(bundled)

    def test_material_is_table_values(self, bundled):
        m = config.material(bundled["cantilever"])
        for f in ("rho", "E", "G", "c1", "c2"):
            assert getattr(m, f) == getattr(TABLE1, f)

    @pytest.mark.parametrize("name, n_q", [("cantilever", 165), ("worm_contraction", 129), ("grasper", 282)])
    def test_census(self, bundled, name, n_q):
        assert runs.system_from(bundled[name]).layout.n_q == n_q

    def test_layout_is_deterministic(self, bundled):
        a = runs.system_from(bundled["grasper"]).layout.census()
        b = runs.system_from(copy.deepcopy(bundled["grasper"])).layout.census()
        assert a == b


class TestValidation:
    def _broken(self, bundled, edit):
        doc = copy.deepcopy(bundled["cantilever"])
        edit(doc)
        with pytest.raises(config.ConfigError) as err:
            config.validate(doc)
        return str(err.value)

    def test_missing_field_is_named(self, bundled):
        msg = self._broken(bundled, lambda d: d["material"].pop("E"))
        assert "material.E" in msg

    def test_unknown_key_rejected(self, bundled):
        msg = self._broken(bundled, lambda d: d.update(colour="red"))
        assert "colour" in msg

    def test_unknown_pattern_reference(self, bundled):
        msg = self._broken(bundled, lambda d: d["initialization"].update(pattern="nope"))
        assert "initialization.pattern" in msg

    def test_wrong_type(self, bundled):
        msg = self._broken(bundled, lambda d: d["horizon"].update(N="five"))
        assert "horizon.N" in msg

    def test_non_mapping(self):
        with pytest.raises(config.ConfigError):
            config.validate([1, 2])

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(config.ConfigError):
            config.load(tmp_path / "absent.yaml")

    def test_yaml_syntax_error(self, tmp_path):
        p = tmp_path / "bad.yaml"
        p.write_text("material: {rho: [\n")
        with pytest.raises(config.ConfigError, match="YAML"):
            config.load(p)


class TestSerialization:
    def test_dump_load_roundtrip(self, bundled, tmp_path):
        for name, doc in bundled.items():
            p = tmp_path / f"{name}.yaml"
            p.write_text(config.dump(doc))
            assert config.load(p) == doc

    @settings(max_examples=200, deadline=None)
    @given(st.floats(allow_nan=False, allow_infinity=False))
    def test_float_roundtrip_is_exact(self, v):
        back = yaml.safe_load(config.dump({"v": v}))["v"]
        assert float(back) == v

    def test_scenario_geometry(self, bundled):
        sc = config.scenario(bundled["grasper"])
        assert [b.name for b in sc.beams] == ["long", "short"]
        assert len(sc.contacts) == 18
        np.testing.assert_array_equal(sc.rigid_bodies[0].center, [5.0, 3.1, 0.0])

"""System assembly, external constraints, contact gaps and friction."""

from __future__ import annotations

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from deaoc import config, fem, runs
from deaoc import multibody as mb
from oracles import central_jacobian, perturbed_system_state, random_triad, rel_error


def bundled(name):
    return runs.system_from(config.load(config.bundled_configs()[name]))


@pytest.fixture(scope="module")
def systems():
    return {n: bundled(n) for n in ("cantilever", "worm_contraction", "grasper")}


class TestCensus:
    @pytest.mark.parametrize("name,n_q", [("cantilever", 165), ("worm_contraction", 129), ("grasper", 282)])
    def test_coordinate_count(self, systems, name, n_q):
        assert systems[name].layout.n_q == n_q

    def test_closed_form_counts(self, systems):
        for s in systems.values():
            L = s.layout
            assert L.n_q == 15 * L.n_beam_nodes + 12 * L.n_rigid
            assert L.n_int == 6 * (L.n_beam_nodes + L.n_rigid)
            assert L.n_red == 9 * L.n_beam_nodes + 6 * L.n_rigid
            assert s.null_space(s.reference_q).shape == (L.n_q, L.n_red)

    def test_index_maps_partition(self, systems):
        for s in systems.values():
            L = s.layout
            idx = np.sort(np.concatenate([L.mech_idx, L.elec_idx]))
            np.testing.assert_array_equal(idx, np.arange(L.n_q))
            assert set(L.charge_idx) <= set(L.elec_idx)

    def test_deterministic_layout(self):
        assert bundled("grasper").layout.census() == bundled("grasper").layout.census()


class TestExternalConstraints:
    @pytest.mark.parametrize("name", ["cantilever", "worm_contraction", "grasper"])
    def test_reference_is_consistent(self, systems, name):
        s = systems[name]
        assert np.max(np.abs(s.constraints(s.reference_q))) <= 1e-14

    def test_joint_anchor_offset(self, systems):
        s = systems["worm_contraction"]
        q = s.reference_q.copy()
        q[s.layout.body_slice(0).start + 1] += 0.1
        joint = next(b for b in s.ext_blocks if b.name.startswith("joint:cubeL"))
        np.testing.assert_allclose(joint.residual(q), [0, 0.1, 0, 0, 0], atol=1e-15)

    def test_joint_allows_rotation_about_axis(self, systems):
        s = systems["worm_contraction"]
        q = s.reference_q.copy()
        o = s.layout.body_slice(0).start
        c, sn = np.cos(0.3), np.sin(0.3)
        Ry = np.array([[c, 0, sn], [0, 1, 0], [-sn, 0, c]])
        # rotate the cube about its joint anchor, which sits at the first beam node
        anchor = q[0:3]
        D = q[o + 3:o + 12].reshape(3, 3)
        q[o + 3:o + 12] = (D @ Ry.T).ravel()
        q[o:o + 3] = anchor + Ry @ (q[o:o + 3] - anchor)
        joint = next(b for b in s.ext_blocks if b.name.startswith("joint:cubeL"))
        assert np.max(np.abs(joint.residual(q))) <= 1e-14
        assert np.max(np.abs(s.internal_constraints(q))) <= 1e-14

    @pytest.mark.parametrize("name", ["cantilever", "worm_contraction", "grasper"])
    def test_jacobians_match_fd(self, systems, name):
        s = systems[name]
        rng = np.random.default_rng(0)
        for _ in range(20):
            q = perturbed_system_state(s, rng)
            cols = rng.choice(s.layout.n_q, 12, replace=False)
            for f, J in ((s.internal_constraints, s.internal_jacobian),
                         (s.external_constraints, s.external_jacobian),
                         (s.contact_gaps, s.contact_jacobian)):
                A = J(q).toarray()
                if A.shape[0] == 0:
                    continue
                fd = central_jacobian(f, q, cols=cols)
                assert rel_error(A[:, cols], fd, floor=1.0) <= 1e-6

    def test_constraint_hessians_match_fd(self, systems):
        s = systems["grasper"]
        rng = np.random.default_rng(1)
        q = perturbed_system_state(s, rng)
        lam_e = rng.normal(size=s.layout.n_ext)
        lam_c = rng.normal(size=s.layout.n_contact)
        cols = rng.choice(s.layout.n_q, 15, replace=False)
        He = s.external_hessian(q, lam_e).toarray()
        Hc = s.contact_hessian(q, lam_c).toarray()
        fde = central_jacobian(lambda x: s.external_jacobian(x).T @ lam_e, q, cols=cols)
        fdc = central_jacobian(lambda x: s.contact_jacobian(x).T @ lam_c, q, cols=cols)
        assert rel_error(He[:, cols], fde, floor=1.0) <= 1e-6
        assert rel_error(Hc[:, cols], fdc, floor=1.0) <= 1e-6


class TestNullSpaceAnnihilation:
    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_system_level(self, seed):
        s = bundled_worm()
        rng = np.random.default_rng(seed)
        q = perturbed_system_state(s, rng, rot=3.0)
        GP = s.internal_jacobian(q) @ s.null_space(q)
        assert abs(GP).max() <= 1e-12

    def test_rigid_body_block(self):
        rng = np.random.default_rng(2)
        node = np.concatenate([rng.normal(size=3), random_triad(rng).ravel()])
        P = fem.internal_null_space(node, electric=False)
        assert np.max(np.abs(fem.director_constraint_gradient(node) @ P)) <= 1e-12


_WORM = {}


def bundled_worm():
    if "s" not in _WORM:
        _WORM["s"] = bundled("worm_contraction")
    return _WORM["s"]


class TestGap:
    def test_touching_cylinder(self):
        assert mb.gap_value((5.0, 5.1), (5.0, 3.1), 2.0) == pytest.approx(0.0, abs=1e-15)

    def test_three_four_five(self):
        assert mb.gap_value((0.0, 0.0), (3.0, 4.0), 2.0) == pytest.approx(3.0)

    def test_z_ignored(self):
        c = mb.NodeCylinderGap("g", 0, 15, 2.0)
        q = np.zeros(27)
        q[0:3] = (0.0, 0.0, 7.0)
        q[15:18] = (3.0, 4.0, -1.0)
        assert c.residual(q)[0] == pytest.approx(3.0)

    def test_coincident_points_rejected(self):
        with pytest.raises(mb.SingularGapError):
            mb.gap_value((1.0, 1.0), (1.0, 1.0), 2.0)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-5, 5), min_size=4, max_size=4))
    def test_gradient_matches_fd(self, xy):
        x = np.array(xy)
        if np.hypot(x[0] - x[2], x[1] - x[3]) < 0.1:
            return
        c = mb.NodeCylinderGap("g", 0, 2, 2.0)
        J = c.local_jacobian(x)
        fd = central_jacobian(lambda y: c.local(y), x)
        np.testing.assert_allclose(J, fd.reshape(J.shape), rtol=1e-6, atol=1e-8)

    def test_grasper_initial_gaps_positive(self, systems):
        s = systems["grasper"]
        assert np.all(s.contact_gaps(s.reference_q) > 0)


class TestFriction:
    def test_zero_velocity(self):
        assert mb.friction_force(0.0) == 500.0

    def test_backward_velocity(self):
        with mpmath.workdps(40):
            ref = float(1000 / (1 + mpmath.e ** mpmath.mpf(-20)) + 20)
        assert mb.friction_force(-1.0) == pytest.approx(ref, rel=1e-15)

    def test_overflow_asymptotes(self):
        assert mb.friction_force(100.0) == pytest.approx(-2000.0)
        assert mb.friction_force(-100.0) == pytest.approx(1000.0 + 2000.0)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(-50, 50), st.floats(1e-6, 10))
    def test_strictly_decreasing(self, v, dv):
        assert mb.friction_force(v + dv) < mb.friction_force(v)

    def test_slope_matches_fd(self):
        v = np.linspace(-0.5, 0.5, 21)
        fd = (mb.friction_force(v + 1e-7) - mb.friction_force(v - 1e-7)) / 2e-7
        np.testing.assert_allclose(mb.friction_slope(v), fd, rtol=1e-6)


class TestScenarioValidation:
    def test_joint_to_missing_node(self):
        sc = mb.Scenario(
            beams=[mb.BeamSpec("b", 4.0, 2.0, 2)],
            rigid_bodies=[mb.RigidBody("c", "cube", (0, 0, 0), 1.0, 2.0)],
            joints=[mb.Joint("c", "b", 7)],
        )
        with pytest.raises(ValueError, match="node 7"):
            mb.build_system(sc)

    def test_unknown_body(self):
        sc = mb.Scenario(beams=[mb.BeamSpec("b", 4.0, 2.0, 2)], joints=[mb.Joint("x", "b", 0)])
        with pytest.raises(ValueError, match="unknown rigid body"):
            mb.build_system(sc)

    def test_non_unit_axis(self):
        sc = mb.Scenario(
            beams=[mb.BeamSpec("b", 4.0, 2.0, 2)],
            rigid_bodies=[mb.RigidBody("c", "cube", (0, 0, 0), 1.0, 2.0)],
            joints=[mb.Joint("c", "b", 0, axis=(0, 2.0, 0))],
        )
        with pytest.raises(ValueError, match="unit"):
            mb.build_system(sc)

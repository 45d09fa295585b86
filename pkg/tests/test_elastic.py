"""Material, fluxes, interior RHS, traction, discrete energy."""

import math

import numpy as np
import pytest

from faultwave import elastic, mesh
from faultwave.operators import build_traditional

MPA = 1e-3  # GPa


def dipping_block(n=8):
    mapping = mesh.DipShearMap(side="left", width=4.0, dip_deg=60.0,
                               depth=4.0, z0=-4.0, z1=4.0)
    return mesh.build_block(mapping, (n, n, n))


def cube_material(shape, rho=2.7, cp=5.716, cs=3.3):
    return elastic.MaterialField.uniform(shape, rho=rho, cp=cp, cs=cs)


class TestMaterial:
    def test_wave_speeds_round_trip(self):
        mat = cube_material((3, 3, 3))
        assert np.allclose(mat.cp, 5.716)
        assert np.allclose(mat.cs, 3.3)

    def test_admissibility(self):
        with pytest.raises(ValueError):
            elastic.MaterialField(rho=np.array(0.0), lam=np.array(1.0),
                                  mu=np.array(1.0))
        with pytest.raises(ValueError):
            elastic.MaterialField(rho=np.array(1.0), lam=np.array(-1.1),
                                  mu=np.array(1.0))

    def test_weak_ellipticity_warns(self):
        with pytest.warns(RuntimeWarning):
            elastic.MaterialField(rho=np.array(1.0), lam=np.array(-0.6),
                                  mu=np.array(1.0))

    def test_compliance_inverts_stiffness(self):
        mat = cube_material((2, 2, 2))
        C = mat.stiffness()
        S = mat.compliance()
        assert np.abs(S @ C - np.eye(6)).max() < 1e-12
        eigs = np.linalg.eigvalsh(C)
        assert eigs.min() > 0

    def test_strain_energy_matches_compliance_form(self):
        mat = cube_material((2, 2, 2))
        rng = np.random.default_rng(0)
        sigma = rng.standard_normal((6, 2, 2, 2))
        S = mat.compliance()
        expected = 0.5 * np.einsum("a...,ab,b...->...", sigma, S, sigma)
        got = mat.strain_energy_density(sigma)
        assert np.abs(got - expected).max() < 1e-13


class TestFluxes:
    def test_zero_state(self):
        block = dipping_block(4)
        q = np.zeros((9, 5, 5, 5))
        assert np.abs(elastic.flux_F(q, block, 0)).max() == 0.0
        assert np.abs(elastic.flux_B(q[:3], block, 0)).max() == 0.0

    def test_cartesian_normal_load(self):
        block = mesh.build_block(mesh.identity_map(), (4, 4, 4))
        q = np.zeros((9, 5, 5, 5))
        q[3] = 1.0  # sxx
        F = elastic.flux_F(q, block, 0)
        assert np.allclose(F[0], 1.0)
        assert np.abs(F[1:]).max() == 0.0

    def test_cartesian_velocity_gradient(self):
        block = mesh.build_block(mesh.identity_map(), (4, 4, 4))
        dv = np.zeros((3, 5, 5, 5))
        dv[0] = 1.0  # d v_x / d q
        B = elastic.flux_B(dv, block, 0)
        assert np.allclose(B[3], 1.0)       # sxx row
        assert np.abs(B[4:6]).max() == 0.0
        assert np.abs(B[6:]).max() == 0.0   # q_y = q_z = 0

    def test_contraction_identity_on_dipping_block(self):
        # Q^T F_q = J |grad q| v^T T with T the frame traction
        block = dipping_block(6)
        frame = mesh.face_frame(block, "q1")
        rng = np.random.default_rng(1)
        q = rng.standard_normal((9, 7, 7, 7))
        F = elastic.flux_F(q, block, 0)
        lhs = (q * F).sum(axis=0)
        g = block.metrics[0]
        norm = np.sqrt(g[0] ** 2 + g[1] ** 2 + g[2] ** 2)
        n = g / norm
        T = elastic.traction(q[3:], n)
        rhs = block.jac * norm * (q[:3] * T).sum(axis=0)
        assert np.abs(lhs - rhs).max() < 1e-12 * max(1.0, np.abs(lhs).max())

    def test_pointwise_skew_symmetry(self):
        block = dipping_block(6)
        rng = np.random.default_rng(2)
        q = rng.standard_normal((9, 7, 7, 7))
        dq = rng.standard_normal((9, 7, 7, 7))
        for axis in range(3):
            res = elastic.skew_pair_contraction(q, dq, block, axis)
            assert np.abs(res).max() < 1e-12 * np.abs(q).max() ** 2 * 100


class TestRhsInterior:
    def test_constant_state_is_stationary(self):
        block = dipping_block(8)
        mat = cube_material(block.shape)
        state = elastic.ElasticState.zeros(block.shape)
        state.q[0] = 1.3
        state.q[5] = -0.4
        ops = [build_traditional(4, n) for n in block.dims]
        out = elastic.rhs_interior(state, block, mat, ops)
        assert np.abs(out).max() < 1e-12

    def test_plane_p_wave_interior_accuracy(self):
        # rhs matches the analytic time derivative at the interior order
        rho, cp, cs = 2.0, 2.0, 1.0
        kvec = 2 * math.pi
        errs, hs = [], []
        for n in (16, 32, 64):
            block = mesh.build_block(mesh.identity_map(), (n, n, n))
            mat = cube_material(block.shape, rho=rho, cp=cp, cs=cs)
            lam_2mu = rho * cp ** 2
            lam = float(mat.lam.flat[0])
            state = elastic.ElasticState.zeros(block.shape)
            phase = np.sin(kvec * block.x)
            state.q[0] = phase                     # v_x
            state.q[3] = -rho * cp * phase         # sxx, right-going wave
            state.q[4] = state.q[3] * lam / lam_2mu
            state.q[5] = state.q[3] * lam / lam_2mu
            ops = [build_traditional(4, n)] * 3
            out = elastic.rhs_interior(state, block, mat, ops)
            dphase = kvec * np.cos(kvec * block.x)
            expected = np.zeros_like(state.q)
            expected[0] = -cp * dphase           # right-going: dv/dt = -cp dv/dx
            expected[3] = rho * cp ** 2 * dphase
            expected[4] = expected[3] * lam / lam_2mu
            expected[5] = expected[3] * lam / lam_2mu
            L = ops[0].closure_depth
            sl = (slice(None), slice(L, -L), slice(L, -L), slice(L, -L))
            errs.append(np.abs(out - expected)[sl].max())
            hs.append(1.0 / n)
        slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
        assert slope >= 4 - 0.3

    def test_weighted_skew_symmetry_identity(self):
        # sum_xi [ (D+ Q)^T H F_xi(Q) - Q^T H B_xi(grad_D+ Q) ] = 0
        block = dipping_block(8)
        ops = [build_traditional(4, n) for n in block.dims]
        rng = np.random.default_rng(3)
        q = rng.standard_normal((9,) + block.shape)
        w = elastic.quadrature_weights(ops)
        total = 0.0
        for axis in range(3):
            dq = np.stack([elastic.apply_axis(ops[axis], "plus", axis, q[c])
                           for c in range(9)])
            F = elastic.flux_F(q, block, axis)
            B = elastic.flux_B(dq[:3], block, axis)
            total += float((w * ((dq * F).sum(axis=0) - (q * B).sum(axis=0))).sum())
        assert abs(total) < 1e-11 * float((q ** 2).sum())


class TestTraction:
    def test_zero_stress(self):
        block = dipping_block(4)
        frame = mesh.face_frame(block, "q1")
        state = elastic.ElasticState.zeros(block.shape)
        _, _, sl = mesh.face_slicer("q1")
        out = elastic.traction_on_face(state, frame, sl)
        assert np.abs(out["physical"]).max() == 0.0

    def test_hydrostatic_load(self):
        block = dipping_block(4)
        frame = mesh.face_frame(block, "q1")
        state = elastic.ElasticState.zeros(block.shape)
        p = 0.37
        state.q[3] = state.q[4] = state.q[5] = -p
        _, _, sl = mesh.face_slicer("q1")
        out = elastic.traction_on_face(state, frame, sl)
        assert np.allclose(out["normal"], -p, atol=1e-14)
        assert np.abs(out["dip"]).max() < 1e-14
        assert np.abs(out["strike"]).max() < 1e-14

    def test_benchmark_initial_normal_traction(self):
        # depth-scaled compressive load: -7.387 MPa per km down dip
        ytilde = 12.0
        t0n = -7.387 * ytilde * MPA
        assert t0n == pytest.approx(-88.644 * MPA)


class TestDiscreteEnergy:
    def test_zero_state(self):
        block = mesh.build_block(mesh.identity_map(), (8, 8, 8))
        mat = cube_material(block.shape)
        state = elastic.ElasticState.zeros(block.shape)
        ops = [build_traditional(4, 8)] * 3
        assert elastic.discrete_energy([(state, block, mat, ops)]) == 0.0

    def test_uniform_translation_unit_cube(self):
        # E = rho/2 * |v|^2 * volume with the H weights summing to 1 per axis
        block = mesh.build_block(mesh.identity_map(), (16, 16, 16))
        mat = cube_material(block.shape, rho=2.0, cp=2.0, cs=1.0)
        state = elastic.ElasticState.zeros(block.shape)
        state.q[0] = 1.0
        ops = [build_traditional(4, 16)] * 3
        assert elastic.discrete_energy([(state, block, mat, ops)]) == \
            pytest.approx(1.0, abs=1e-13)

    def test_matches_dense_brute_force(self):
        block = dipping_block(8)
        mat = cube_material(block.shape)
        rng = np.random.default_rng(4)
        state = elastic.ElasticState(q=rng.standard_normal((9,) + block.shape))
        ops = [build_traditional(4, n) for n in block.dims]
        got = elastic.discrete_energy([(state, block, mat, ops)])

        # independent dense sum: 0.5 rho |v|^2 + 0.5 sigma^T S sigma, J- and
        # H-weighted, with S from an explicit 6x6 inverse
        S = np.linalg.inv(mat.stiffness())
        total = 0.0
        wq, wr, ws = (o.H for o in ops)
        for i in range(block.shape[0]):
            for j in range(block.shape[1]):
                for k in range(block.shape[2]):
                    v = state.q[:3, i, j, k]
                    sig = state.q[3:, i, j, k]
                    dens = 0.5 * mat.rho[i, j, k] * v @ v + 0.5 * sig @ S @ sig
                    total += dens * block.jac[i, j, k] * wq[i] * wr[j] * ws[k]
        assert got == pytest.approx(total, rel=1e-12)

    def test_positivity(self):
        block = dipping_block(8)
        mat = cube_material(block.shape)
        ops = [build_traditional(4, n) for n in block.dims]
        rng = np.random.default_rng(5)
        for _ in range(20):
            state = elastic.ElasticState(q=rng.standard_normal((9,) + block.shape))
            assert elastic.discrete_energy([(state, block, mat, ops)]) > 0

    def test_pre_penalty_energy_rate_equals_face_terms(self):
        # one rhs evaluation: dE/dt equals the sum of all six face cubatures
        block = dipping_block(10)
        mat = cube_material(block.shape)
        ops = [build_traditional(4, n) for n in block.dims]
        rng = np.random.default_rng(6)
        state = elastic.ElasticState(q=rng.standard_normal((9,) + block.shape))
        dq = elastic.rhs_interior(state, block, mat, ops)

        w3 = elastic.quadrature_weights(ops)
        S = np.linalg.inv(mat.stiffness())
        vdot = (mat.rho * (state.q[:3] * dq[:3]).sum(axis=0))
        sdot = np.einsum("a...,ab,b...->...", state.q[3:], S, dq[3:])
        dE = float(((vdot + sdot) * block.jac * w3).sum())

        faces = 0.0
        for face in ("q0", "q1", "r0", "r1", "s0", "s1"):
            axis, end, sl = mesh.face_slicer(face)
            m0 = (0, 1, 0) if face[0] != "r" else (1, 0, 0)
            frame = mesh.face_frame(block, face, m0=m0)
            T = elastic.traction(state.q[3:][(slice(None),) + sl], frame.normal)
            vt = (state.q[:3][(slice(None),) + sl] * T).sum(axis=0)
            wts = [o.H for o in ops]
            tr = [a for a in range(3) if a != axis]
            w2 = np.multiply.outer(wts[tr[0]], wts[tr[1]])
            term = float((vt * frame.area_scale * w2).sum())
            faces += term if end == 1 else -term
        assert dE == pytest.approx(faces, rel=1e-10)

"""Blocks, metric terms, Jacobians, face frames, rotations."""

import math

import numpy as np
import pytest

from faultwave import mesh
from faultwave.operators import build_traditional


class TestBuildBlock:
    def test_identity_map(self):
        block = mesh.build_block(mesh.identity_map(), (8, 8, 8))
        assert np.allclose(block.jac, 1.0)
        assert np.allclose(block.metrics[0, 0], 1.0)
        assert np.allclose(block.metrics[1, 1], 1.0)
        assert np.allclose(block.metrics[2, 2], 1.0)
        off_diag = [block.metrics[i, j] for i in range(3) for j in range(3) if i != j]
        assert max(np.abs(v).max() for v in off_diag) == 0.0

    def test_affine_shear_unit_block(self):
        # x = q + r / tan(60 deg), y = r, z = s: constant metrics, J = 1
        cot = 1.0 / math.tan(math.radians(60.0))
        mapping = mesh.AffineMap(matrix=((1, cot, 0), (0, 1, 0), (0, 0, 1)))
        block = mesh.build_block(mapping, (6, 6, 6))
        assert np.allclose(block.jac, 1.0, atol=1e-14)
        for i in range(3):
            for j in range(3):
                assert np.ptp(block.metrics[i, j]) < 1e-14

    def test_analytic_and_discrete_agree_on_affine(self):
        mapping = mesh.AffineMap(matrix=((2.0, 0.3, 0.0), (0.0, 1.5, 0.1),
                                         (0.0, 0.0, 2.5)), offset=(1, 2, 3))
        a = mesh.build_block(mapping, (16, 16, 16), metric_mode="analytic")
        d = mesh.build_block(mapping, (16, 16, 16), metric_mode="discrete")
        assert np.abs(a.jac - d.jac).max() < 1e-12 * np.abs(a.jac).max()
        assert np.abs(a.metrics - d.metrics).max() < 1e-12

    def test_discrete_metrics_converge_at_interior_order(self):
        mapping = mesh.SinePerturbMap(ax=0.05)
        errs, hs = [], []
        for n in (24, 48, 96):
            a = mesh.build_block(mapping, (n, n, n), metric_mode="analytic")
            d = mesh.build_block(mapping, (n, n, n), metric_mode="discrete")
            L = 6  # closure depth of the order-6 operator used to difference
            sl = (slice(L, -L),) * 3
            errs.append(np.abs(a.metrics - d.metrics)[(slice(None),) * 2 + sl].max())
            hs.append(1.0 / n)
        slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
        assert slope >= 5.5

    def test_folded_mesh_detected(self):
        mapping = mesh.AffineMap(matrix=((-1, 0, 0), (0, 1, 0), (0, 0, 1)))
        with pytest.raises(mesh.FoldedMeshError):
            mesh.build_block(mapping, (4, 4, 4))

    def test_inverse_metrics_invert_forward_jacobian(self):
        mapping = mesh.SinePerturbMap(ax=0.04, ay=0.03, az=0.02)
        block = mesh.build_block(mapping, (10, 10, 10))
        q, r, s = np.meshgrid(*[np.linspace(0, 1, 11)] * 3, indexing="ij")
        fwd = mapping.jacobian(q, r, s)
        prod = np.einsum("ik...,kj...->ij...", block.metrics, fwd)
        eye = np.eye(3).reshape(3, 3, 1, 1, 1)
        assert np.abs(prod - eye).max() < 1e-12

    def test_csv_dump(self, tmp_path):
        block = mesh.build_block(mesh.identity_map(), (2, 2, 2))
        path = tmp_path / "mesh.csv"
        mesh.dump_csv(block, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "i,j,k,x,y,z,J"
        assert len(lines) == 1 + 27


class TestFaceFrame:
    def test_cartesian_frame(self):
        block = mesh.build_block(mesh.identity_map(), (4, 4, 4))
        frame = mesh.face_frame(block, "q1", m0=(0, 1, 0))
        assert np.allclose(frame.normal[0], 1.0)
        assert np.allclose(frame.tangent_m[1], 1.0)
        assert np.allclose(frame.tangent_l[2], 1.0)
        assert np.allclose(frame.area_scale, 1.0)

    def test_dipping_plane_normal(self):
        dip = 60.0
        mapping = mesh.DipShearMap(side="left", width=4.0, dip_deg=dip,
                                   depth=4.0, z0=-4.0, z1=4.0)
        block = mesh.build_block(mapping, (4, 4, 4))
        frame = mesh.face_frame(block, "q1", m0=(0, 1, 0))
        expected = np.array([math.sin(math.radians(dip)),
                             -math.cos(math.radians(dip)), 0.0])
        for c in range(3):
            assert np.allclose(frame.normal[c], expected[c], atol=1e-14)

    def test_both_sides_share_the_fault_normal(self):
        kw = dict(width=4.0, dip_deg=60.0, depth=4.0, z0=-4.0, z1=4.0)
        left = mesh.build_block(mesh.DipShearMap(side="left", **kw), (4, 4, 4))
        right = mesh.build_block(mesh.DipShearMap(side="right", **kw), (4, 4, 4))
        fl = mesh.face_frame(left, "q1")
        fr = mesh.face_frame(right, "q0")
        assert np.abs(fl.normal - fr.normal).max() < 1e-14
        assert np.abs(fl.area_scale - fr.area_scale).max() < 1e-14

    def test_rotation_orthonormal_on_random_smooth_maps(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            amp = rng.uniform(0.01, 0.08, size=3)
            mapping = mesh.SinePerturbMap(ax=amp[0], ay=amp[1], az=amp[2])
            block = mesh.build_block(mapping, (6, 6, 6))
            for face in ("q0", "q1", "r0", "r1", "s0", "s1"):
                m0 = (0, 1, 0) if face[0] != "r" else (1, 0, 0)
                frame = mesh.face_frame(block, face, m0=m0)
                RtR = np.einsum("ab...,cb...->ac...", frame.rotation,
                                frame.rotation)
                eye = np.eye(3).reshape(3, 3, 1, 1)
                assert np.abs(RtR - eye).max() < 1e-13

    def test_degenerate_reference_vector(self):
        block = mesh.build_block(mesh.identity_map(), (4, 4, 4))
        with pytest.raises(mesh.DegenerateBasisError):
            mesh.face_frame(block, "q1", m0=(1, 0, 0))

    def test_area_scale_matches_dipping_plane_element(self):
        # fault area element: down-dip stretch (depth / sin dip) x strike width
        dip = math.radians(60.0)
        mapping = mesh.DipShearMap(side="left", width=4.0, dip_deg=60.0,
                                   depth=4.0, z0=-4.0, z1=4.0)
        block = mesh.build_block(mapping, (4, 4, 4))
        frame = mesh.face_frame(block, "q1")
        expected = (4.0 / math.sin(dip)) * 8.0
        assert np.allclose(frame.area_scale, expected, rtol=1e-13)


class TestRotate:
    def test_identity_frame_round_trip(self):
        block = mesh.build_block(mesh.identity_map(), (4, 4, 4))
        frame = mesh.face_frame(block, "q1")
        v = np.zeros((3,) + frame.shape)
        v[0] = 1.0
        local = mesh.rotate(v, frame.rotation)
        assert np.allclose(local[0], 1.0)
        assert np.abs(local[1:]).max() == 0.0

    def test_random_round_trip(self):
        rng = np.random.default_rng(9)
        mapping = mesh.SinePerturbMap(ax=0.06, ay=0.02, az=0.04)
        block = mesh.build_block(mapping, (6, 6, 6))
        frame = mesh.face_frame(block, "q1")
        v = rng.standard_normal((3,) + frame.shape)
        back = mesh.rotate_back(mesh.rotate(v, frame.rotation), frame.rotation)
        assert np.abs(back - v).max() < 1e-14

    def test_pure_normal_load_rotates_cleanly(self):
        # sigma = T n n^T gives local traction (T, 0, 0) in any aligned frame
        mapping = mesh.DipShearMap(side="left", width=4.0, dip_deg=60.0,
                                   depth=4.0, z0=-4.0, z1=4.0)
        block = mesh.build_block(mapping, (4, 4, 4))
        frame = mesh.face_frame(block, "q1")
        tn = 2.5
        n = frame.normal
        sigma = tn * np.einsum("a...,b...->ab...", n, n)
        traction = np.einsum("ab...,b...->a...", sigma, n)
        local = mesh.rotate(traction, frame.rotation)
        assert np.allclose(local[0], tn, atol=1e-13)
        assert np.abs(local[1:]).max() < 1e-13

    def test_free_stream_residual_affine_is_zero(self):
        mapping = mesh.AffineMap(matrix=((2.0, 0.5, 0), (0, 1.0, 0), (0, 0, 1.0)))
        block = mesh.build_block(mapping, (16, 16, 16))
        ops = [build_traditional(4, 16)] * 3
        assert mesh.free_stream_residual(block, ops) < 1e-12

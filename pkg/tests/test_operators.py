"""Operator construction: SBP identity, definiteness, accuracy, duality."""

import numpy as np
import pytest

from faultwave import operators as op

ALL_SETS = [
    ("traditional", 2), ("traditional", 4), ("traditional", 6),
    ("dp_upwind", 4), ("dp_upwind", 5), ("dp_upwind", 6), ("dp_upwind", 7),
    ("drp", 4), ("drp", 5), ("drp", 6), ("drp", 7),
]


def build(family, order, n, alpha=0.05):
    if family == "traditional":
        return op.build_traditional(order, n)
    if family == "dp_upwind":
        return op.build_dp_upwind(order, n)
    return op.build_drp(order, alpha, n)


def sbp_residual(ops, n_pairs=100, seed=7):
    rng = np.random.default_rng(seed)
    H = ops.H
    worst = 0.0
    for _ in range(n_pairs):
        f = rng.standard_normal(ops.n + 1)
        g = rng.standard_normal(ops.n + 1)
        lhs = (ops.dplus @ f) @ (H * g) + f @ (H * (ops.dminus @ g))
        rhs = f[-1] * g[-1] - f[0] * g[0]
        worst = max(worst, abs(lhs - rhs) / (np.abs(f).max() * np.abs(g).max()))
    return worst


def s_matrices(ops):
    B = np.zeros((ops.n + 1, ops.n + 1))
    B[0, 0], B[-1, -1] = -1.0, 1.0
    qp = np.diag(ops.H) @ ops.dplus - B / 2
    qm = np.diag(ops.H) @ ops.dminus - B / 2
    return qp + qp.T, qm + qm.T


class TestDefiningProperties:
    @pytest.mark.parametrize("family,order", ALL_SETS)
    @pytest.mark.parametrize("n", [16, 32, 64])
    def test_sbp_identity(self, family, order, n):
        ops = build(family, order, n)
        assert sbp_residual(ops) < 1e-11

    @pytest.mark.parametrize("family,order", ALL_SETS)
    def test_semidefiniteness(self, family, order):
        ops = build(family, order, 48)
        sp, sm = s_matrices(ops)
        assert np.linalg.eigvalsh(sp).max() <= 1e-10
        assert np.linalg.eigvalsh(sm).min() >= -1e-10

    @pytest.mark.parametrize("family,order", ALL_SETS)
    def test_accuracy_conditions(self, family, order):
        ops = build(family, order, 48)
        xs = ops.nodes
        L = ops.closure_depth
        for D in (ops.dminus, ops.dplus):
            for i in range(ops.interior_order + 1):
                exact = i * xs ** (i - 1) if i else np.zeros_like(xs)
                res = np.abs(D @ xs ** i - exact)
                if i > ops.boundary_order:
                    res = res[L:-L]
                assert res.max() < 1e-10

    @pytest.mark.parametrize("family,order", ALL_SETS)
    def test_reflection_duality(self, family, order):
        # reversing the grid maps D+ to -D-
        ops = build(family, order, 32)
        reversed_plus = -ops.dplus[::-1, ::-1]
        assert np.abs(reversed_plus - ops.dminus).max() * ops.h < 1e-13

    @pytest.mark.parametrize("family,order", ALL_SETS)
    def test_norm_is_a_quadrature(self, family, order):
        ops = build(family, order, 32)
        assert ops.weights.min() > 0
        assert ops.H.sum() == pytest.approx(1.0, abs=1e-13)

    @pytest.mark.parametrize("family,order", ALL_SETS)
    def test_construction_is_deterministic(self, family, order):
        a, b = build(family, order, 24), build(family, order, 24)
        assert np.array_equal(a.dplus, b.dplus)
        assert np.array_equal(a.weights, b.weights)


class TestTraditional:
    def test_second_order_closure(self):
        ops = op.build_traditional(2, 16)
        j = 8
        row = ops.dminus[j] * ops.h
        assert row[j - 1] == pytest.approx(-0.5)
        assert row[j + 1] == pytest.approx(0.5)
        assert ops.H[0] == pytest.approx(ops.h / 2)
        assert ops.H[1] == pytest.approx(ops.h)
        assert sbp_residual(ops) < 1e-13

    def test_plus_equals_minus(self):
        for order in (2, 4, 6):
            ops = op.build_traditional(order, 24)
            assert np.abs(ops.dplus - ops.dminus).max() == 0.0
            sp, _ = s_matrices(ops)
            assert np.abs(sp).max() < 1e-13

    def test_order4_differentiates_x_squared(self):
        ops = op.build_traditional(4, 32)
        xs = ops.nodes
        out = ops.dminus @ xs ** 2
        L = ops.closure_depth
        assert np.abs(out[L:-L] - 2 * xs[L:-L]).max() < 1e-12

    def test_order6_orders(self):
        ops = op.build_traditional(6, 64)
        assert (ops.boundary_order, ops.interior_order) == (3, 6)


class TestDpUpwind:
    def test_boundary_order_of_fifth(self):
        ops = op.build_dp_upwind(5, 32)
        assert ops.boundary_order == 2

    def test_order_pattern(self):
        for order, gamma in [(4, 2), (5, 2), (6, 3), (7, 3)]:
            assert build("dp_upwind", order, 32).boundary_order == gamma

    def test_first_order_pair_is_exact(self):
        ops = op.build_dp_upwind(1, 16)
        j = 8
        rp = ops.dplus[j] * ops.h
        rm = ops.dminus[j] * ops.h
        assert rp[j] == pytest.approx(-1.0) and rp[j + 1] == pytest.approx(1.0)
        assert rm[j - 1] == pytest.approx(-1.0) and rm[j] == pytest.approx(1.0)
        assert sbp_residual(ops) < 1e-13
        sp, sm = s_matrices(ops)
        assert np.linalg.eigvalsh(sp).max() <= 1e-13
        assert np.linalg.eigvalsh(sm).min() >= -1e-13

    def test_minimal_biased_interior(self):
        offs, c = op.build_dp_upwind(5, 32).interior_stencil("plus")
        np.testing.assert_allclose(offs, np.arange(-2, 4))
        np.testing.assert_allclose(c * 60, [3, -30, -20, 60, -15, 2], atol=1e-11)

    def test_eigenvalue_bounds_at_48(self):
        for order in (4, 5, 6, 7):
            sp, sm = s_matrices(op.build_dp_upwind(order, 48))
            assert np.linalg.eigvalsh(sp).max() <= 1e-10
            assert np.linalg.eigvalsh(sm).min() >= -1e-10


class TestDrp:
    def test_tolerance_is_met(self):
        from faultwave.dispersion import dispersion_errors
        ops = op.build_drp(4, 0.05, 48)
        assert dispersion_errors(ops)["max_relative"] <= 0.05

    def test_degenerate_tolerance_accepted(self):
        ops = op.build_drp(4, 1.0, 48)
        assert ops.alpha_tol == 1.0
        assert sbp_residual(ops) < 1e-11

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            op.build_drp(4, 0.0, 48)
        with pytest.raises(ValueError):
            op.build_drp(3, 0.05, 48)

    def test_unreachable_tolerance_reports_achieved(self):
        with pytest.raises(op.DispersionToleranceError) as err:
            op.build_drp(7, 1e-4, 48)
        assert err.value.achieved > 1e-4


class TestApplyAxis:
    def setup_method(self):
        self.ops = op.build_traditional(4, 16)
        rng = np.random.default_rng(3)
        self.f = rng.standard_normal((17, 17, 17))

    def test_constant_maps_to_zero(self):
        out = op.apply_axis(self.ops, "minus", "q", np.ones((17, 17, 17)))
        assert np.abs(out).max() < 1e-13

    def test_transverse_coordinate_maps_to_zero(self):
        q, r, s = np.meshgrid(*[self.ops.nodes] * 3, indexing="ij")
        out = op.apply_axis(self.ops, "plus", "q", r)
        assert np.abs(out).max() < 1e-12

    def test_quadratic_interior(self):
        q, r, s = np.meshgrid(*[self.ops.nodes] * 3, indexing="ij")
        out = op.apply_axis(self.ops, "minus", "q", q ** 2)
        L = self.ops.closure_depth
        assert np.abs(out - 2 * q)[L:-L].max() < 1e-12

    @pytest.mark.parametrize("axis", [0, 1, 2])
    @pytest.mark.parametrize("which", ["minus", "plus"])
    def test_matches_dense_tensor_product(self, axis, which):
        # oracle: explicit kron(D, I, I) on a 5x6x7 grid
        ns = [4, 5, 6]
        opsets = [op.build_dp_upwind(1, n) for n in ns]
        rng = np.random.default_rng(11)
        f = rng.standard_normal([n + 1 for n in ns])
        D = opsets[axis].matrix(which)
        eyes = [np.eye(n + 1) for n in ns]
        mats = list(eyes)
        mats[axis] = D
        dense = np.kron(np.kron(mats[0], mats[1]), mats[2])
        expected = (dense @ f.ravel()).reshape(f.shape)
        out = op.apply_axis(opsets[axis], which, axis, f)
        assert np.abs(out - expected).max() < 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            op.apply_axis(self.ops, "minus", "q", np.zeros((5, 17, 17)))

    def test_too_small_grid_rejected(self):
        with pytest.raises(op.OperatorSizeError):
            op.build_traditional(6, 5)


class TestVerification:
    def test_verified_set(self):
        rep = op.verify_operator(op.build_traditional(4, 32))
        assert rep.invariants_ok and rep.verified
        assert rep.sbp_residual < 1e-11

    def test_zero_norm_entry_flagged_before_checks(self):
        ops = op.build_traditional(4, 32)
        bad = op.SbpOperatorSet(
            family=ops.family, interior_order=4, boundary_order=2, n=ops.n,
            weights=np.where(np.arange(ops.n + 1) == 0, 0.0, ops.weights),
            dminus=ops.dminus, dplus=ops.dplus, closure_depth=ops.closure_depth,
        )
        rep = op.verify_operator(bad)
        assert not rep.invariants_ok and not rep.verified
        assert rep.sbp_residual == np.inf

    def test_perturbed_boundary_coefficient_detected(self):
        ops = op.build_traditional(4, 32)
        dplus = ops.dplus.copy()
        dplus[0, 1] += 1e-3
        bad = op.SbpOperatorSet(
            family=ops.family, interior_order=4, boundary_order=2, n=ops.n,
            weights=ops.weights, dminus=ops.dminus, dplus=dplus,
            closure_depth=ops.closure_depth,
        )
        rep = op.verify_operator(bad)
        assert not rep.verified
        # residual tracks the perturbation through the bilinear identity,
        # scaled by the boundary norm weight it is multiplied with
        scale = ops.H[0]
        assert 0.1 * 1e-3 * scale < rep.sbp_residual < 10 * 1e-3


class TestSerialization:
    @pytest.mark.parametrize("family,order", [("traditional", 4), ("dp_upwind", 5),
                                              ("drp", 6)])
    def test_round_trip(self, tmp_path, family, order):
        ops = build(family, order, 24)
        path = tmp_path / "ops.txt"
        op.save_text(ops, path)
        back = op.load_text(path)
        assert back.family == ops.family
        assert back.alpha_tol == ops.alpha_tol
        np.testing.assert_array_equal(back.weights, ops.weights)
        np.testing.assert_array_equal(back.dminus, ops.dminus)
        np.testing.assert_array_equal(back.dplus, ops.dplus)

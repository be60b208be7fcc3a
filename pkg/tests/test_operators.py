import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from runkm.errors import DimensionMismatch, NonFiniteOutput
from runkm.operators import (Averaged, AveragedMap, Contraction, InexactAveragedMap,
                             InexactOracle, NonExpansive, compose_averaged, composed_alpha,
                             convex_combination_identity, empirical_lipschitz, identity_tolerance)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def reflection(x):
    return -x


def rotation(theta):
    R = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    return lambda x: R @ x


class TestOperatorClasses:
    def test_lipschitz_constants(self):
        assert NonExpansive().lipschitz == 1.0
        assert Contraction(0.3).lipschitz == 0.3
        assert Averaged(0.4).lipschitz == 1.0

    @pytest.mark.parametrize("L", [-0.1, 1.0, 1.5])
    def test_contraction_modulus_range(self, L):
        with pytest.raises(ValueError):
            Contraction(L)

    @pytest.mark.parametrize("alpha", [0.0, 1.0, -0.2, 1.3])
    def test_alpha_range(self, alpha):
        with pytest.raises(ValueError):
            AveragedMap(alpha, reflection)


class TestAveragedMap:
    def test_half_averaged_reflection_is_zero_map(self):
        F = AveragedMap(0.5, reflection)
        assert np.array_equal(F(np.array([3.0, -2.0])), np.zeros(2))

    def test_hand_example(self):
        # F = 0.25 I + 0.75 (-I) = -0.5 I
        F = AveragedMap(0.75, reflection)
        assert np.allclose(F(np.array([2.0])), [-1.0])
        assert F.residual(np.array([2.0])) == pytest.approx(3.0)
        assert F.base_residual(np.array([2.0])) == pytest.approx(4.0)

    def test_direct_and_base_routes_agree(self, rng):
        T = rotation(0.7)
        a = 0.3
        F_base = AveragedMap(a, T)
        F_direct = AveragedMap(a, direct=lambda x: (1 - a) * x + a * T(x))
        for _ in range(20):
            x = rng.standard_normal(2)
            assert np.allclose(F_base(x), F_direct(x), atol=1e-14)
            assert np.allclose(F_direct.base_at(x), T(x), atol=1e-13)

    def test_dimension_checked(self):
        F = AveragedMap(0.5, reflection, dim=3)
        with pytest.raises(DimensionMismatch):
            F(np.zeros(2))
        with pytest.raises(DimensionMismatch):
            F(np.zeros((2, 2)))

    def test_wrong_output_shape(self):
        F = AveragedMap(0.5, lambda x: np.zeros(x.size + 1))
        with pytest.raises(DimensionMismatch):
            F(np.zeros(2))

    def test_nan_output(self):
        F = AveragedMap(0.5, lambda x: x * np.nan)
        with pytest.raises(NonFiniteOutput):
            F(np.ones(2))

    def test_needs_some_evaluation(self):
        with pytest.raises(ValueError):
            AveragedMap(0.5)

    @settings(max_examples=60, deadline=None)
    @given(arrays(float, 2, elements=finite), arrays(float, 2, elements=finite),
           st.floats(0.05, 0.95), st.floats(-3, 3))
    def test_averaged_inequality(self, x, y, alpha, theta):
        # ||Fx - Fy||^2 + (1 - a)/a ||(I-F)x - (I-F)y||^2 <= ||x - y||^2
        F = AveragedMap(alpha, rotation(theta))
        fx, fy = F(x), F(y)
        lhs = np.sum((fx - fy) ** 2) + (1 - alpha) / alpha * np.sum(((x - fx) - (y - fy)) ** 2)
        assert lhs <= np.sum((x - y) ** 2) * (1 + 1e-9) + 1e-9


class TestInexact:
    def test_oracle_deviation_and_certify(self, rng):
        shift = np.array([0.03, -0.04])
        orc = InexactOracle(lambda x: -x + shift, 0.05, exact=reflection)
        pts = rng.standard_normal((10, 2))
        assert orc.certify(pts) == pytest.approx(0.05)

    def test_certify_detects_understated_bound(self):
        orc = InexactOracle(lambda x: -x + 0.1, 0.05, exact=reflection)
        with pytest.raises(AssertionError):
            orc.certify([np.zeros(1)])

    @pytest.mark.parametrize("bad", [-1.0, np.inf, np.nan])
    def test_error_bound_validated(self, bad):
        with pytest.raises(ValueError):
            InexactOracle(reflection, bad)

    def test_inexact_map_builds_exact_map(self):
        orc = InexactOracle(lambda x: -x + 0.1, 0.1, exact=reflection)
        Fh = InexactAveragedMap(0.5, orc)
        x = np.array([1.0])
        assert np.allclose(Fh(x), [0.05])
        assert np.allclose(Fh.exact(x), [0.0])
        assert Fh.error_bound == 0.1

    def test_zero_error_degenerates_to_exact(self, rng):
        T = rotation(1.1)
        Fh = InexactAveragedMap(0.4, InexactOracle(T, 0.0, exact=T))
        for _ in range(10):
            x = rng.standard_normal(2)
            assert np.array_equal(Fh(x), Fh.exact(x))


class TestComposition:
    def test_two_halves_give_two_thirds(self):
        assert composed_alpha(0.5, 0.5) == pytest.approx(2 / 3, abs=1e-15)

    def test_prox_gradient_alpha(self):
        for nu, K in [(0.1, 2.0), (0.5, 3.0), (0.9, 2.0)]:
            assert composed_alpha(0.5, nu * K / 2) == pytest.approx(1 / (2 - nu * K / 2), rel=1e-14)

    def test_composition_evaluates_in_order(self):
        F1 = AveragedMap(0.5, lambda x: x + 2.0)        # x + 1
        F2 = AveragedMap(0.5, lambda x: 2.0 * x)        # 1.5 x (not non-expansive, order check only)
        G = compose_averaged(F1, F2)
        assert np.allclose(G(np.array([2.0])), [4.0])

    @settings(max_examples=40, deadline=None)
    @given(st.floats(0.05, 0.95), st.floats(0.05, 0.95), st.floats(-3, 3), st.floats(-3, 3))
    def test_composition_is_averaged_with_composed_alpha(self, a1, a2, t1, t2):
        G = compose_averaged(AveragedMap(a1, rotation(t1)), AveragedMap(a2, rotation(t2)))
        a = G.alpha
        rng = np.random.default_rng(0)
        for _ in range(5):
            x, y = rng.standard_normal(2), rng.standard_normal(2)
            gx, gy = G(x), G(y)
            lhs = np.sum((gx - gy) ** 2) + (1 - a) / a * np.sum(((x - gx) - (y - gy)) ** 2)
            assert lhs <= np.sum((x - y) ** 2) * (1 + 1e-9)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            compose_averaged(AveragedMap(0.5, reflection, dim=2), AveragedMap(0.5, reflection, dim=3))


class TestIdentity:
    @settings(max_examples=200, deadline=None)
    @given(arrays(float, 3, elements=finite), arrays(float, 3, elements=finite), st.floats(0, 1))
    def test_identity_holds(self, x, y, theta):
        lhs, rhs = convex_combination_identity(x, y, theta)
        assert abs(lhs - rhs) <= identity_tolerance(x, y)

    def test_endpoints(self):
        x, y = np.array([1.0, 2.0]), np.array([-3.0, 0.5])
        assert convex_combination_identity(x, y, 0.0) == pytest.approx((5.0, 5.0))
        assert convex_combination_identity(x, y, 1.0) == pytest.approx((9.25, 9.25))

    def test_theta_range(self):
        with pytest.raises(ValueError):
            convex_combination_identity(np.zeros(1), np.zeros(1), 1.5)


class TestEmpiricalLipschitz:
    def test_rotation_is_isometry(self, rng):
        pairs = [(rng.standard_normal(2), rng.standard_normal(2)) for _ in range(20)]
        assert empirical_lipschitz(rotation(0.3), pairs) == pytest.approx(1.0)

    def test_coincident_pairs(self):
        with pytest.raises(ValueError):
            empirical_lipschitz(reflection, [(np.zeros(2), np.zeros(2))])

import math
from fractions import Fraction

import numpy as np
import pytest

from lipjet.calculus import (
    BilinearMap,
    bilinear_image,
    cartesian_product,
    compose,
    composition_constant,
    embed,
    embed_constant,
    localization_factor,
    localize_vanishing,
    postcompose_linear,
    precompose_linear,
    product_certificate,
    smooth_lip_bound,
    sym_group_identity_check,
    vanishing_bound_factor,
)
from lipjet.errors import InputError
from lipjet.expressions import SmoothMap
from lipjet.jet import certify, jet_of_polynomial, lip_grade
from lipjet.tensor import LinearMap, NormFamily, Permutation, SymTensor, apply_permutation, tensor_product

LINF = NormFamily.linf()
L1 = NormFamily.l1()

GENERAL_CAP = lambda gp: 2.0**gp * math.e * (1 + math.exp(0.5))


def cubic_grid_jet(gamma=2.0, n_pts=101):
    grid = np.linspace(-1, 1, n_pts).reshape(-1, 1)
    return jet_of_polynomial(SmoothMap.from_strings(["x0**3"], 1), grid, lip_grade(gamma))


class TestEmbedConstant:
    def test_general_cap(self):
        c = embed_constant(2.0, 1.0, "general")
        assert 1.0 <= c.value <= GENERAL_CAP(1.0)
        assert c.value == pytest.approx(5.0, rel=1e-6)  # attained near delta = 2

    def test_general_below_half_delta_evaluation(self):
        # the searched infimum never exceeds the delta = 1/2 evaluation
        for gamma, gp in [(2.0, 1.0), (3.5, 1.2), (5.5, 4.5), (1.5, 0.5)]:
            c = embed_constant(gamma, gp, "general")
            assert c.value <= GENERAL_CAP(gp) * (1 + 1e-12)

    def test_convex_cap(self):
        for gamma, gp in [(2.0, 1.5), (3.0, 0.5), (6.0, 5.9)]:
            c = embed_constant(gamma, gp, "convex")
            assert c.value <= 4.0 * (1 + 1e-12)

    def test_convex_integer_target_is_one(self):
        assert embed_constant(3.0, 2.0, "convex").value == pytest.approx(1.0)

    def test_bounded_zero_diameter(self):
        assert embed_constant(2.0, 1.5, "bounded", L=0.0).value == 1.0

    def test_bounded_formula_hand_value(self):
        # gamma=2, gamma'=1, L=1: max(1, 1/1! + 1) = 2
        assert embed_constant(2.0, 1.0, "bounded", L=1.0).value == pytest.approx(2.0)

    def test_rejects_bad_order(self):
        with pytest.raises(InputError):
            embed_constant(1.0, 2.0)


class TestLocalizationFactor:
    def test_general_hand_value(self):
        # gamma=1 (n=0), delta=1: max(1, (1/delta)(1 + 1)) = 2
        assert localization_factor(1.0, 1.0) == pytest.approx(2.0)

    def test_general_cap(self):
        for gamma in (0.5, 1.0, 2.5, 4.0):
            for delta in (0.1, 1.0, 3.0):
                cap = (1 + math.exp(delta)) * max(1.0, delta**-gamma)
                assert localization_factor(gamma, delta) <= cap * (1 + 1e-12)

    def test_convex_variant(self):
        # gamma=1.5, delta=4: 2/4^0.5 = 1 -> factor 1
        assert localization_factor(1.5, 4.0, "convex") == pytest.approx(1.0)
        assert localization_factor(1.5, 1.0, "convex") == pytest.approx(2.0)

    def test_rejects_nonpositive_delta(self):
        with pytest.raises(InputError):
            localization_factor(2.0, 0.0)


class TestEmbed:
    def test_cubic_contract(self):
        jet = cubic_grid_jet()
        base = certify(jet, LINF)
        trunc, cert = embed(jet, 1.0, LINF)
        assert trunc.grade.n == 0
        # k=0 ratio |x^3-y^3|/|x-y| <= 3 on [-1,1]
        assert cert.M <= 3.0 * (1 + 1e-12)
        assert cert.M <= embed_constant(2.0, 1.0).value * base.M

    def test_linear_jet_fractional_target(self):
        pts = np.linspace(0, 1, 21).reshape(-1, 1)
        jet = jet_of_polynomial(SmoothMap.from_strings(["x0"], 1), pts, lip_grade(2.0))
        base = certify(jet, LINF)
        trunc, cert = embed(jet, 1.5, LINF)
        assert cert.M <= embed_constant(2.0, 1.5).value * base.M

    def test_constant_jet_certificate_unchanged(self):
        pts = np.linspace(0, 1, 5).reshape(-1, 1)
        jet = jet_of_polynomial(SmoothMap.from_strings(["2 + 0*x0"], 1), pts, lip_grade(2.0))
        _, cert = embed(jet, 1.0, LINF)
        assert cert.M == pytest.approx(2.0)

    def test_rejects_higher_target(self):
        with pytest.raises(InputError):
            embed(cubic_grid_jet(), 2.5, LINF)


class TestCartesianProduct:
    def setup_method(self):
        self.pts = np.linspace(-1, 1, 11).reshape(-1, 1)
        self.f = jet_of_polynomial(SmoothMap.from_strings(["x0**2"], 1), self.pts, lip_grade(2.0))
        self.zero = jet_of_polynomial(SmoothMap.from_strings(["0*x0"], 1), self.pts, lip_grade(2.0))

    def test_zero_partner_linf(self):
        h = cartesian_product(self.f, self.zero, "linf")
        assert product_certificate(h, LINF, "linf").M == pytest.approx(certify(self.f, LINF).M)

    def test_same_factor_l1_doubles(self):
        h = cartesian_product(self.f, self.f, "l1")
        Mf = certify(self.f, LINF).M
        assert product_certificate(h, LINF, "l1").M <= 2 * Mf * (1 + 1e-12)

    def test_projection_back(self):
        h = cartesian_product(self.f, self.zero, "linf")
        proj = postcompose_linear(LinearMap(np.array([[1.0, 0.0]])), h)
        assert certify(proj, LINF).M <= product_certificate(h, LINF, "linf").M * (1 + 1e-12)

    def test_mismatched_clouds_rejected(self):
        other = jet_of_polynomial(
            SmoothMap.from_strings(["x0"], 1), self.pts + 5.0, lip_grade(2.0)
        )
        with pytest.raises(InputError):
            cartesian_product(self.f, other)


class TestLinearComposition:
    def setup_method(self):
        self.jet = cubic_grid_jet(n_pts=41)

    def test_post_identity(self):
        out = postcompose_linear(LinearMap.identity(1), self.jet)
        assert certify(out, LINF).M == pytest.approx(certify(self.jet, LINF).M)

    def test_post_zero(self):
        out = postcompose_linear(LinearMap(np.zeros((1, 1))), self.jet)
        assert certify(out, LINF).M == 0.0

    def test_post_doubling_scales_exactly(self):
        out = postcompose_linear(LinearMap(2.0 * np.eye(1)), self.jet)
        assert certify(out, LINF).M == pytest.approx(2.0 * certify(self.jet, LINF).M)

    def test_post_scale_equivariance(self):
        u = LinearMap(np.array([[0.7]]))
        lam = -3.0
        a = certify(postcompose_linear(LinearMap(lam * u.entries), self.jet), LINF).M
        b = certify(postcompose_linear(u, self.jet), LINF).M
        assert a == pytest.approx(abs(lam) * b)

    def test_post_dimension_mismatch(self):
        with pytest.raises(InputError):
            postcompose_linear(LinearMap(np.eye(2)), self.jet)

    def test_pre_identity(self):
        out = precompose_linear(self.jet, LinearMap.identity(1), self.jet.points, L1, L1)
        for k in range(2):
            assert np.allclose(out.levels[k], self.jet.levels[k])

    def test_pre_contraction_keeps_certificate(self):
        # u = lambda * id with lambda <= 1: certificate <= M
        lam = 0.5
        pts = self.jet.points / lam
        out = precompose_linear(self.jet, LinearMap(lam * np.eye(1)), pts, L1, L1)
        assert certify(out, L1).M <= certify(self.jet, L1).M * (1 + 1e-12)

    def test_pre_dilation_bounded_by_power(self):
        # f(t) = t^2, u(z) = 2z: g(z) = 4z^2, g' = 8z; ratio <= 2^gamma
        pts = np.linspace(-1, 1, 21).reshape(-1, 1)
        jet = jet_of_polynomial(SmoothMap.from_strings(["x0**2"], 1), pts, lip_grade(2.0))
        out = precompose_linear(jet, LinearMap(2.0 * np.eye(1)), pts / 2.0, L1, L1)
        assert np.allclose(out.levels[0][:, 0], 4.0 * (pts[:, 0] / 2.0) ** 2 * 0 + pts[:, 0] ** 2)
        assert np.allclose(out.levels[1][:, 0, 0], 2.0 * jet.levels[1][:, 0, 0])
        ratio = certify(out, L1).M / certify(jet, L1).M
        assert ratio <= 2.0**2 * (1 + 1e-12)

    def test_pre_requires_one_compatible(self):
        with pytest.raises(InputError):
            precompose_linear(self.jet, LinearMap.identity(1), self.jet.points, LINF, LINF)

    def test_pre_unmapped_point_rejected(self):
        with pytest.raises(InputError):
            precompose_linear(self.jet, LinearMap.identity(1), [[7.0]], L1, L1)


class TestBilinearImage:
    def test_product_rule_identity(self):
        pts = np.linspace(0, 1, 9).reshape(-1, 1)
        grade = lip_grade(3.0)
        f = jet_of_polynomial(SmoothMap.from_strings(["x0"], 1), pts, grade)
        g = jet_of_polynomial(SmoothMap.from_strings(["x0"], 1), pts, grade)
        B = BilinearMap.scalar_multiplication()
        h = bilinear_image(B, f, g, LINF)
        assert np.allclose(h.levels[0][:, 0], pts[:, 0] ** 2)
        assert np.allclose(h.levels[1][:, 0, 0], 2 * pts[:, 0])
        assert np.allclose(h.levels[2][:, 0, 0, 0], 2.0)

    def test_level_one_is_leibniz_for_random_jets(self):
        rng = np.random.default_rng(8)
        pts = np.linspace(-1, 1, 7).reshape(-1, 1)
        grade = lip_grade(2.0)
        f = jet_of_polynomial(SmoothMap.from_strings(["x0**3 - x0"], 1), pts, grade)
        g = jet_of_polynomial(SmoothMap.from_strings(["2*x0**2 + 1"], 1), pts, grade)
        h = bilinear_image(BilinearMap.scalar_multiplication(), f, g, LINF)
        leibniz = (
            f.levels[1][:, 0, 0] * g.levels[0][:, 0]
            + f.levels[0][:, 0] * g.levels[1][:, 0, 0]
        )
        assert np.allclose(h.levels[1][:, 0, 0], leibniz)

    def test_constant_partner_reduces_to_scaling(self):
        pts = np.linspace(0, 1, 6).reshape(-1, 1)
        grade = lip_grade(2.0)
        f = jet_of_polynomial(SmoothMap.from_strings(["x0**2 - x0"], 1), pts, grade)
        one = jet_of_polynomial(SmoothMap.from_strings(["1 + 0*x0"], 1), pts, grade)
        h = bilinear_image(BilinearMap.scalar_multiplication(), f, one, LINF)
        for k in range(2):
            assert np.allclose(h.levels[k], f.levels[k])

    def test_fourth_power_second_derivative(self):
        # f = g = t^2: level 2 of the product equals d^2 t^4 = 12 t^2
        pts = np.linspace(0.2, 1.0, 5).reshape(-1, 1)
        grade = lip_grade(3.0)
        f = jet_of_polynomial(SmoothMap.from_strings(["x0**2"], 1), pts, grade)
        h = bilinear_image(BilinearMap.scalar_multiplication(), f, f, LINF)
        assert np.allclose(h.levels[2][:, 0, 0, 0], 12 * pts[:, 0] ** 2)

    def test_requires_projective_and_symmetric(self):
        pts = np.linspace(0, 1, 4).reshape(-1, 1)
        grade = lip_grade(2.0)
        f = jet_of_polynomial(SmoothMap.from_strings(["x0"], 1), pts, grade)
        plain = NormFamily("ellinf", declared=("projective",))
        with pytest.raises(InputError):
            bilinear_image(BilinearMap.scalar_multiplication(), f, f, plain)

    def test_norm_estimate_l1_exact(self):
        B = BilinearMap(np.array([[[2.0, 0.0], [0.0, -3.0]]]))
        assert B.norm_estimate(L1, L1, L1) == pytest.approx(3.0)


class TestSymGroupIdentity:
    def test_two_vectors(self):
        res = sym_group_identity_check(
            [[Fraction(1), Fraction(0)], [Fraction(0), Fraction(1)]], 1
        )
        assert res.equal
        expected = np.array(
            [[Fraction(0), Fraction(1)], [Fraction(1), Fraction(0)]], dtype=object
        )
        assert np.array_equal(res.lhs.coeffs, expected)

    def test_full_block_reduces_to_symmetric_sum(self):
        vs = [[Fraction(1, 2), Fraction(3)], [Fraction(2), Fraction(1, 3)]]
        res = sym_group_identity_check(vs, 2)
        assert res.equal
        t = tensor_product(
            SymTensor(2, np.array(vs[0], dtype=object)),
            SymTensor(2, np.array(vs[1], dtype=object)),
        )
        direct = None
        for sig in Permutation.all(2):
            term = apply_permutation(sig, t)
            direct = term if direct is None else direct + term
        direct = direct * Fraction(math.factorial(2))
        assert np.array_equal(res.lhs.coeffs, direct.coeffs)

    def test_random_rational_triples(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            vs = [
                [Fraction(int(rng.integers(-6, 7)), int(rng.integers(1, 4))) for _ in range(3)]
                for _ in range(3)
            ]
            assert sym_group_identity_check(vs, 1).equal
            assert sym_group_identity_check(vs, 2).equal

    def test_rejects_out_of_range(self):
        with pytest.raises(InputError):
            sym_group_identity_check([[Fraction(1)]], 2)


class TestCompose:
    def test_identity_outer(self):
        pts = np.linspace(-1, 0.45, 9).reshape(-1, 1)  # injective range of x^2 - x
        grade = lip_grade(2.0)
        f = jet_of_polynomial(SmoothMap.from_strings(["x0**2 - x0"], 1), pts, grade)
        ident = jet_of_polynomial(SmoothMap.identity(1), f.values(), grade)
        h = compose(ident, f, LINF, LINF)
        for k in range(2):
            assert np.allclose(h.levels[k], f.levels[k])

    def test_shifted_square_symbolic_oracle(self):
        # f(x) = x+1, g(y) = y^2 at gamma=4: derivatives of (x+1)^2
        pts = np.linspace(-0.5, 0.5, 11).reshape(-1, 1)
        grade = lip_grade(4.0)
        f = jet_of_polynomial(SmoothMap.from_strings(["x0 + 1"], 1), pts, grade)
        g = jet_of_polynomial(SmoothMap.from_strings(["x0**2"], 1), f.values(), grade)
        h = compose(g, f, LINF, LINF)
        t = pts[:, 0]
        assert np.allclose(h.levels[0][:, 0], (t + 1) ** 2)
        assert np.allclose(h.levels[1][:, 0, 0], 2 * (t + 1))
        assert np.allclose(h.levels[2][:, 0, 0, 0], 2.0)
        assert np.allclose(h.levels[3][:, 0, 0, 0, 0], 0.0)

    def test_fourth_power_all_orders(self):
        pts = np.linspace(0.3, 1.2, 11).reshape(-1, 1)
        grade = lip_grade(4.0)
        f = jet_of_polynomial(SmoothMap.from_strings(["x0**2"], 1), pts, grade)
        g = jet_of_polynomial(SmoothMap.from_strings(["x0**2"], 1), f.values(), grade)
        h = compose(g, f, LINF, LINF)
        t = pts[:, 0]
        for k, expected in enumerate([t**4, 4 * t**3, 12 * t**2, 24 * t]):
            got = h.levels[k].reshape(len(t))
            assert np.allclose(got, expected, atol=1e-10)

    def test_multivariate_against_symbolic(self):
        grade = lip_grade(3.0)
        f_map = SmoothMap.from_strings(["x0*x1", "x0 + x1**2"], 2)
        g_map = SmoothMap.from_strings(["x0**2 - x1", "x1*x0"], 2)
        rng = np.random.default_rng(5)
        pts = rng.uniform(-0.7, 0.7, size=(9, 2))
        f = jet_of_polynomial(f_map, pts, grade)
        g = jet_of_polynomial(g_map, f.values(), grade)
        h = compose(g, f, LINF, LINF)
        oracle = jet_of_polynomial(f_map.then(g_map), pts, grade)
        for k in range(3):
            scale = max(1.0, np.max(np.abs(oracle.levels[k])))
            assert np.max(np.abs(h.levels[k] - oracle.levels[k])) <= 1e-10 * scale

    def test_misaligned_cloud_reports_point(self):
        pts = np.linspace(0, 1, 5).reshape(-1, 1)
        grade = lip_grade(2.0)
        f = jet_of_polynomial(SmoothMap.from_strings(["x0 + 10"], 1), pts, grade)
        g = jet_of_polynomial(SmoothMap.from_strings(["x0"], 1), pts, grade)
        with pytest.raises(InputError, match="missing from the outer jet"):
            compose(g, f, LINF, LINF)

    def test_grade_mismatch_rejected(self):
        pts = np.linspace(0, 1, 5).reshape(-1, 1)
        f = jet_of_polynomial(SmoothMap.from_strings(["x0"], 1), pts, lip_grade(2.0))
        g = jet_of_polynomial(SmoothMap.from_strings(["x0"], 1), pts, lip_grade(3.0))
        with pytest.raises(InputError):
            compose(g, f, LINF, LINF)

    def test_realized_constant_finite(self):
        pts = np.linspace(0.3, 1.2, 11).reshape(-1, 1)
        grade = lip_grade(3.0)
        f = jet_of_polynomial(SmoothMap.from_strings(["x0**2"], 1), pts, grade)
        g = jet_of_polynomial(SmoothMap.from_strings(["x0**2"], 1), f.values(), grade)
        h = compose(g, f, LINF, LINF)
        c = composition_constant(certify(h, LINF), certify(g, LINF), certify(f, LINF))
        assert 0 < c < math.inf


class TestLocalizeVanishing:
    def test_zero_jet(self):
        pts = np.linspace(-1, 1, 11).reshape(-1, 1)
        jet = jet_of_polynomial(SmoothMap.from_strings(["0*x0"], 1), pts, lip_grade(2.0))
        rep = localize_vanishing(jet, [0.0], 1.0, 0.5, LINF)
        assert rep.bound == 0.0
        assert rep.local_certificate == 0.0

    def test_cubic_bound_and_halving(self):
        jet = cubic_grid_jet(n_pts=161)
        M = certify(jet, LINF).M
        values = []
        for delta in (0.5, 0.25, 0.125):
            rep = localize_vanishing(jet, [0.0], 1.0, delta, LINF)
            assert rep.passed
            assert rep.bound == pytest.approx(M * 3.0 * delta)  # linear regime
            values.append(rep.bound)
        assert values[1] / values[0] == pytest.approx(0.5, abs=1e-12)
        assert values[2] / values[1] == pytest.approx(0.5, abs=1e-12)

    def test_formula_factor_hand_value(self):
        # gamma=2, gamma'=1, delta small: max(d^2, d^2, d(2^0/1! + 2)) = 3d
        assert vanishing_bound_factor(2.0, 1.0, 0.1) == pytest.approx(0.3)

    def test_nonvanishing_rejected(self):
        pts = np.linspace(-1, 1, 11).reshape(-1, 1)
        jet = jet_of_polynomial(SmoothMap.from_strings(["x0**2 + 1"], 1), pts, lip_grade(2.0))
        with pytest.raises(InputError):
            localize_vanishing(jet, [0.0], 1.0, 0.5, LINF)


class TestSmoothLipBound:
    def test_equal_sups_cap(self):
        for gamma in (1.0, 1.5, 2.0, 3.7):
            n = lip_grade(gamma).n
            sups = [2.5] * (n + 2)
            assert smooth_lip_bound(sups, gamma) <= 4 * 2.5 * (1 + 1e-9)

    def test_integer_gamma_returns_max(self):
        assert smooth_lip_bound([1.0, 3.0, 2.0], 2.0) == pytest.approx(3.0)

    def test_zero_top_derivative(self):
        assert smooth_lip_bound([2.0, 3.0, 1.0, 0.0], 2.5) == pytest.approx(3.0)

    def test_wrong_length_rejected(self):
        with pytest.raises(InputError):
            smooth_lip_bound([1.0, 1.0], 2.5)

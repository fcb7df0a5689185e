import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from lipjet.errors import InputError
from lipjet.tensor import (
    LinearMap,
    NormFamily,
    Permutation,
    SymTensor,
    apply_permutation,
    lift_linear_map,
    subordinate_matrix_norm,
    symmetrize,
    tensor_norm,
    tensor_product,
    verify_norm_properties,
)


def e(dim, *idx):
    return SymTensor.basis(dim, idx)


class TestTensorProduct:
    def test_basis_product(self):
        t = tensor_product(e(2, 0), e(2, 1))
        expected = np.zeros((2, 2))
        expected[0, 1] = 1.0
        assert np.array_equal(t.coeffs, expected)

    def test_scalar_unit_law(self):
        v = SymTensor.from_vector([1.0, -2.0, 0.5])
        s = SymTensor.scalar(3.0, dim=3)
        assert np.allclose(tensor_product(s, v).coeffs, 3.0 * v.coeffs)

    def test_bilinear_expansion(self):
        a = SymTensor.from_vector([1.0, 1.0])
        b = SymTensor.from_vector([1.0, -1.0])
        t = tensor_product(a, b)
        assert np.array_equal(t.coeffs, np.array([[1.0, -1.0], [1.0, -1.0]]))

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(InputError):
            tensor_product(SymTensor.from_vector([1.0]), SymTensor.from_vector([1.0, 2.0]))

    def test_order_cap(self):
        v = SymTensor.from_vector([1.0, 2.0])
        t = v
        for _ in range(5):
            t = tensor_product(t, v)
        with pytest.raises(InputError):
            tensor_product(t, v)

    def test_mode_mixing_rejected(self):
        a = SymTensor.from_vector([1.0, 2.0])
        b = SymTensor(2, np.array([Fraction(1), Fraction(2)], dtype=object))
        with pytest.raises(InputError):
            tensor_product(a, b)


class TestSymmetrize:
    def test_order_two_definition(self):
        s = symmetrize(tensor_product(e(2, 0), e(2, 1)))
        assert np.array_equal(s.coeffs, np.array([[0.0, 0.5], [0.5, 0.0]]))

    def test_idempotent_on_symmetric(self):
        t = SymTensor(2, np.array([[1.0, 2.0], [2.0, 5.0]]))
        assert symmetrize(t).allclose(t)
        assert symmetrize(symmetrize(t)).allclose(symmetrize(t))

    def test_order_three_enumeration(self):
        t = tensor_product(tensor_product(e(2, 0), e(2, 0)), e(2, 1))
        s = symmetrize(t)
        expected = np.zeros((2, 2, 2))
        for idx in [(0, 0, 1), (0, 1, 0), (1, 0, 0)]:
            expected[idx] = 1.0 / 3.0
        assert np.allclose(s.coeffs, expected)
        assert s.is_symmetric()

    def test_exact_in_rational_mode(self):
        rng = np.random.default_rng(7)
        coeffs = np.array(
            [Fraction(int(v), 3) for v in rng.integers(-9, 10, size=8)], dtype=object
        ).reshape(2, 2, 2)
        s = symmetrize(SymTensor(2, coeffs))
        assert s.is_symmetric()


class TestPermutationAction:
    def test_identity(self):
        t = SymTensor(2, np.arange(8.0).reshape(2, 2, 2))
        assert apply_permutation(Permutation.identity(3), t) == t

    def test_transposition_on_elementary(self):
        t = tensor_product(e(2, 0), e(2, 1))
        swapped = apply_permutation(Permutation((2, 1)), t)
        assert np.array_equal(swapped.coeffs, tensor_product(e(2, 1), e(2, 0)).coeffs)

    def test_action_composition_enumerated(self):
        # sigma(tau(x)) = (tau o sigma)(x): the slot action composes reversed
        rng = np.random.default_rng(3)
        t = SymTensor(2, rng.standard_normal((2, 2, 2)))
        for simg in itertools.permutations((1, 2, 3)):
            for timg in itertools.permutations((1, 2, 3)):
                sigma, tau = Permutation(simg), Permutation(timg)
                lhs = apply_permutation(sigma, apply_permutation(tau, t))
                rhs = apply_permutation(tau.compose(sigma), t)
                assert np.array_equal(lhs.coeffs, rhs.coeffs)

    def test_size_mismatch_rejected(self):
        with pytest.raises(InputError):
            apply_permutation(Permutation((1, 2)), SymTensor.from_vector([1.0, 2.0]))

    def test_invalid_permutation(self):
        with pytest.raises(InputError):
            Permutation((1, 1, 3))

    def test_norm_invariance_exact_rational(self):
        rng = np.random.default_rng(11)
        coeffs = np.array(
            [Fraction(int(v), 7) for v in rng.integers(-20, 20, size=16)], dtype=object
        ).reshape(2, 2, 2, 2)
        t = SymTensor(2, coeffs)
        for fam in (NormFamily.l1(), NormFamily.linf()):
            base = tensor_norm(t, fam)
            for img in itertools.permutations((1, 2, 3, 4)):
                assert tensor_norm(apply_permutation(Permutation(img), t), fam) == base


class TestTensorNorm:
    def setup_method(self):
        swap = apply_permutation(Permutation((2, 1)), tensor_product(e(2, 0), e(2, 1)))
        self.t = tensor_product(e(2, 0), e(2, 1)) + 2.0 * swap

    def test_linf_is_max_coeff(self):
        assert tensor_norm(self.t, NormFamily.linf()) == 2.0

    def test_l1_is_coeff_sum(self):
        assert tensor_norm(self.t, NormFamily.l1()) == 3.0

    def test_homogeneous_and_triangle(self):
        rng = np.random.default_rng(5)
        fam = NormFamily.lp(3.0)
        a = SymTensor(3, rng.standard_normal((3, 3)))
        b = SymTensor(3, rng.standard_normal((3, 3)))
        assert tensor_norm(2.5 * a, fam) == pytest.approx(2.5 * tensor_norm(a, fam))
        assert tensor_norm(a + b, fam) <= tensor_norm(a, fam) + tensor_norm(b, fam) + 1e-12

    def test_geometric_scales_preserve_projectivity(self):
        # families alpha^k s_k inherit the projective property
        rng = np.random.default_rng(9)
        alpha = 1.7
        fam = NormFamily("ell1", scales=tuple(alpha**k for k in range(7)),
                         declared=("projective",))
        for _ in range(50):
            p = int(rng.integers(1, 3))
            q = int(rng.integers(1, 3))
            a = SymTensor(2, rng.standard_normal((2,) * p))
            b = SymTensor(2, rng.standard_normal((2,) * q))
            prod_norm = tensor_norm(tensor_product(a, b), fam)
            assert prod_norm <= tensor_norm(a, fam) * tensor_norm(b, fam) * (1 + 1e-12)

    def test_scale_defined_for_order(self):
        fam = NormFamily("ellinf", scales=(1.0, 1.0))
        with pytest.raises(InputError):
            tensor_norm(SymTensor(2, np.zeros((2, 2))), fam)


class TestLinearMaps:
    def test_subordinate_closed_forms(self):
        u = LinearMap(np.array([[1.0, -2.0], [3.0, 0.5]]))
        assert u.subordinate_norm(NormFamily.l1()) == 4.0  # max column sum
        assert u.subordinate_norm(NormFamily.linf()) == 3.5  # max row sum

    def test_lp_power_iteration_against_l2(self):
        rng = np.random.default_rng(2)
        mat = rng.standard_normal((4, 4))
        est = subordinate_matrix_norm(mat, "ellp", 2.0)
        exact = float(np.linalg.svd(mat, compute_uv=False)[0])
        assert est == pytest.approx(exact, rel=1e-6)

    def test_lift_identity(self):
        u = LinearMap.identity(3)
        t = SymTensor(3, np.random.default_rng(0).standard_normal((3, 3)))
        assert lift_linear_map(u, 2)(t).allclose(t)

    def test_lift_homothety(self):
        lam = 0.7
        u = LinearMap(lam * np.eye(2))
        rng = np.random.default_rng(1)
        t = SymTensor(2, rng.standard_normal((2, 2, 2)))
        assert lift_linear_map(u, 3)(t).allclose(lam**3 * t)

    def test_lift_functoriality(self):
        rng = np.random.default_rng(4)
        u = LinearMap(rng.standard_normal((3, 3)))
        v = LinearMap(rng.standard_normal((3, 3)))
        t = SymTensor(3, rng.standard_normal((3, 3)))
        uv = u.compose(v)
        lhs = lift_linear_map(uv, 2)(t)
        rhs = lift_linear_map(u, 2)(lift_linear_map(v, 2)(t))
        assert lhs.allclose(rhs, tol=1e-12)

    def test_linf_compatibility_measured(self):
        # measured ||u^(x)k|| stays below p^k ||u||^k
        rng = np.random.default_rng(6)
        fam = NormFamily.linf()
        p = 3
        for _ in range(5):
            u = LinearMap(rng.uniform(-1, 1, size=(p, p)))
            nu = u.subordinate_norm(fam)
            for k in (1, 2, 3):
                measured = lift_linear_map(u, k).norm_estimate(fam, samples=16, seed=0)
                assert measured <= p**k * nu**k * (1 + 1e-9)


class TestVerifyNormProperties:
    def test_l1_projective_passes(self):
        report = verify_norm_properties(NormFamily.l1(), dim=3, k_max=3, sample_count=100)
        assert report.check("projective").passed

    def test_linf_symmetric_passes(self):
        report = verify_norm_properties(NormFamily.linf(), dim=3, k_max=4, sample_count=100)
        assert report.check("symmetric").passed

    def test_corrupted_scale_fails_with_witness(self):
        bad = NormFamily("ellinf", scales=(1.0, 1.0, 10.0), declared=("projective",))
        report = verify_norm_properties(bad, dim=2, k_max=2, sample_count=50)
        check = report.check("projective")
        assert not check.passed
        assert check.max_ratio >= 10.0 - 1e-9
        assert check.witness is not None

    def test_rescaled_families_keep_projectivity(self):
        # closure under alpha^k and beta >= 1 rescales, same sample seed
        for scales in (tuple(2.0**k for k in range(5)), tuple(3.0 for _ in range(5))):
            fam = NormFamily("ell1", scales=scales, declared=("projective",))
            report = verify_norm_properties(fam, dim=2, k_max=3, sample_count=200, seed=12)
            assert report.check("projective").passed

    def test_compatible_declaration_audited(self):
        fam = NormFamily.l1()
        report = verify_norm_properties(fam, dim=2, k_max=2, sample_count=20)
        assert report.check("compatible(1)").passed


class TestSerialization:
    def test_tensor_round_trip(self):
        t = SymTensor(2, np.array([[1.5, -2.0], [0.0, 3.25]]))
        assert SymTensor.from_dict(t.to_dict()) == t

    def test_rational_round_trip(self):
        t = SymTensor(2, np.array([Fraction(1, 3), Fraction(-2, 7)], dtype=object))
        back = SymTensor.from_dict(t.to_dict(), mode="rational")
        assert back == t

    def test_family_round_trip(self):
        fam = NormFamily("ellp", q=2.5, scales=(1.0, 2.0), declared=("projective", ("compatible", 2.0)))
        assert NormFamily.from_dict(fam.to_dict()) == fam

    def test_malformed_tensor_rejected(self):
        with pytest.raises(InputError):
            SymTensor.from_dict({"dim": 2, "order": 2, "coeffs": [1.0, 2.0, 3.0]})

import math

import numpy as np
import pytest

from lipjet.errors import InputError
from lipjet.expressions import SmoothMap
from lipjet.jet import (
    LipJet,
    certify,
    holder_characterization_check,
    jet_of_polynomial,
    lip_grade,
    remainders,
    taylor_expand,
)
from lipjet.tensor import NormFamily

LINF = NormFamily.linf()


def brute_force_certificate(points, levels, gamma):
    """Independent oracle: plain double loops, scalar 1-D jets only."""
    n = int(math.ceil(gamma)) - 1
    pts = [float(p[0]) for p in points]
    sup = max(abs(levels[k][i]) for k in range(n + 1) for i in range(len(pts)))
    worst = sup
    for xi, x in enumerate(pts):
        for yi, y in enumerate(pts):
            if xi == yi:
                continue
            for k in range(n + 1):
                pred = sum(
                    levels[j][yi] * (x - y) ** (j - k) / math.factorial(j - k)
                    for j in range(k, n + 1)
                )
                ratio = abs(levels[k][xi] - pred) / abs(x - y) ** (gamma - k)
                worst = max(worst, ratio)
    return worst


class TestLipGrade:
    def test_fractional(self):
        g = lip_grade(2.5)
        assert (g.n, g.eps) == (2, 0.5)

    def test_integer_convention(self):
        g = lip_grade(2.0)
        assert (g.n, g.eps) == (1, 1.0)

    def test_boundary(self):
        g = lip_grade(1.0)
        assert (g.n, g.eps) == (0, 1.0)

    def test_rejects_nonpositive(self):
        with pytest.raises(InputError):
            lip_grade(0.0)


class TestConstruction:
    def test_coincident_points_rejected(self):
        p = SmoothMap.from_strings(["x0"], 1)
        with pytest.raises(InputError):
            jet_of_polynomial(p, [[0.0], [0.0]], lip_grade(1.0))

    def test_asymmetric_level_rejected(self):
        bad = np.array([[[0.0, 1.0], [0.0, 0.0]]])  # not symmetric in slots
        with pytest.raises(InputError):
            LipJet(
                lip_grade(3.0),
                [[0.0, 0.0]],
                [np.zeros((1, 1)), np.zeros((1, 1, 2)), bad.reshape(1, 1, 2, 2)],
            )

    def test_round_trip(self):
        p = SmoothMap.from_strings(["x0**2 + x1", "x0*x1"], 2)
        jet = jet_of_polynomial(p, [[0.0, 0.0], [0.5, -1.0]], lip_grade(2.5))
        back = LipJet.from_dict(jet.to_dict())
        for k in range(3):
            assert np.allclose(back.levels[k], jet.levels[k])


class TestTaylorExpand:
    def test_zero_displacement(self):
        p = SmoothMap.from_strings(["x0**2"], 1)
        jet = jet_of_polynomial(p, [[0.3], [0.8]], lip_grade(2.0))
        assert taylor_expand(jet, [0.3], [0.3], 1)[0, 0] == pytest.approx(0.6)

    def test_square_prediction_from_origin(self):
        # f(t) = t^2 on {0, 1}: prediction of f(1) from 0 is 0, so R_0 = 1
        p = SmoothMap.from_strings(["x0**2"], 1)
        jet = jet_of_polynomial(p, [[0.0], [1.0]], lip_grade(2.0))
        assert taylor_expand(jet, [0.0], [1.0], 0)[0] == pytest.approx(0.0)
        tab = remainders(jet, LINF)
        assert tab.tensor(0, 1, 0)[0] == pytest.approx(1.0)

    def test_linear_map_reproduced_exactly(self):
        A = SmoothMap.from_strings(["2*x0 - x1", "x0 + 3*x1"], 2)
        pts = [[0.0, 0.0], [1.0, 2.0], [-1.0, 0.5]]
        jet = jet_of_polynomial(A, pts, lip_grade(2.0))
        tab = remainders(jet, LINF)
        assert tab.max_ratio() == pytest.approx(0.0, abs=1e-12)

    def test_unknown_point_rejected(self):
        p = SmoothMap.from_strings(["x0"], 1)
        jet = jet_of_polynomial(p, [[0.0], [1.0]], lip_grade(1.0))
        with pytest.raises(InputError):
            taylor_expand(jet, [0.0], [0.5], 0)

    def test_level_above_n_rejected(self):
        p = SmoothMap.from_strings(["x0"], 1)
        jet = jet_of_polynomial(p, [[0.0], [1.0]], lip_grade(1.0))
        with pytest.raises(InputError):
            taylor_expand(jet, [0.0], [1.0], 1)


class TestRemainders:
    def test_polynomial_ratios_vanish(self):
        p = SmoothMap.from_strings(["x0**3 - 2*x0"], 1)
        grid = np.linspace(-1, 1, 9).reshape(-1, 1)
        jet = jet_of_polynomial(p, grid, lip_grade(4.0))
        assert remainders(jet, LINF).max_ratio() <= 1e-10

    def test_sqrt_cusp_hand_values(self):
        # f(t) = |t|^1.5 on {-1, 1}, gamma = 1.5: hand-computed remainders
        pts = np.array([[-1.0], [1.0]])
        levels = [
            np.array([[1.0], [1.0]]),
            np.array([[[-1.5]], [[1.5]]]),
        ]
        jet = LipJet(lip_grade(1.5), pts, levels)
        tab = remainders(jet, LINF)
        # R_0(1, -1) = 1 - (1 + (-1.5)*2) = 3, ratio 3 / 2^1.5
        assert tab.tensor(0, 1, 0)[0] == pytest.approx(3.0)
        assert tab.ratio(0, 1, 0) == pytest.approx(3.0 / 2**1.5)
        # R_1(1, -1) = 1.5 - (-1.5) = 3, ratio 3 / 2^0.5
        assert tab.ratio(1, 1, 0) == pytest.approx(3.0 / 2**0.5)
        cert = certify(jet, LINF)
        assert cert.M == pytest.approx(3.0 / 2**0.5)

    def test_wrong_derivative_diverges_on_refinement(self):
        # f' deliberately +1 off: ratios blow up like spacing^-1 at gamma=2
        def bad_jet(h):
            pts = np.array([[0.0], [h], [2 * h]])
            vals = pts[:, :1] ** 2
            ders = 2 * pts[:, :1] + 1.0
            return LipJet(lip_grade(2.0), pts, [vals, ders[:, :, None]])

        m_coarse = certify(bad_jet(0.01), LINF).M
        m_fine = certify(bad_jet(0.001), LINF).M
        assert m_coarse >= 90.0
        assert m_fine / m_coarse >= 9.0

    def test_needs_two_points(self):
        p = SmoothMap.from_strings(["x0"], 1)
        jet = jet_of_polynomial(p, [[0.0]], lip_grade(1.0))
        with pytest.raises(InputError):
            remainders(jet, LINF)


class TestCertify:
    def test_constant_jet(self):
        pts = np.linspace(0, 1, 5).reshape(-1, 1)
        jet = jet_of_polynomial(SmoothMap.from_strings(["3 + 0*x0"], 1), pts, lip_grade(2.0))
        cert = certify(jet, LINF)
        assert cert.M == pytest.approx(3.0)
        assert cert.witness["kind"] == "level"

    def test_identity_on_unit_interval(self):
        pts = np.linspace(0, 1, 11).reshape(-1, 1)
        jet = jet_of_polynomial(SmoothMap.from_strings(["x0"], 1), pts, lip_grade(2.0))
        cert = certify(jet, LINF)
        assert cert.M == pytest.approx(1.0)
        assert cert.sup_ratios == pytest.approx(0.0, abs=1e-12)

    def test_cubic_against_brute_force(self):
        grid = np.linspace(-1, 1, 101).reshape(-1, 1)
        jet = jet_of_polynomial(SmoothMap.from_strings(["x0**3"], 1), grid, lip_grade(2.0))
        cert = certify(jet, LINF)
        oracle = brute_force_certificate(
            grid, [jet.levels[0][:, 0], jet.levels[1][:, 0, 0]], 2.0
        )
        assert cert.M == pytest.approx(oracle, rel=1e-12)
        assert cert.sup_levels == pytest.approx(3.0)

    def test_zero_iff_zero_jet(self):
        pts = np.linspace(0, 1, 4).reshape(-1, 1)
        zero = jet_of_polynomial(SmoothMap.from_strings(["0*x0"], 1), pts, lip_grade(2.0))
        assert certify(zero, LINF).M == 0.0
        assert zero.is_zero()

    def test_certificate_minimality_via_witness(self):
        # any M' below the certificate violates the witness inequality
        grid = np.linspace(-1, 1, 21).reshape(-1, 1)
        jet = jet_of_polynomial(SmoothMap.from_strings(["x0**3"], 1), grid, lip_grade(2.0))
        cert = certify(jet, LINF)
        w = cert.witness
        assert w["kind"] == "ratio"
        tab = remainders(jet, LINF)
        achieved = tab.ratio(w["level"], w["pair"][0], w["pair"][1])
        assert achieved == pytest.approx(cert.M, rel=1e-12)
        assert achieved > 0.999 * cert.M  # lowering M by any margin breaks it

    def test_multi_output_levels(self):
        p = SmoothMap.from_strings(["x0**2", "sin(x0)"], 1)
        pts = np.linspace(-0.5, 0.5, 7).reshape(-1, 1)
        jet = jet_of_polynomial(p, pts, lip_grade(2.0))
        cert = certify(jet, LINF)
        assert 0 < cert.M < 10

    def test_square_on_unit_interval_frozen(self):
        # p(t) = t^2 at gamma=3: levels (t^2, 2t, 2), remainders 0, M = 2
        pts = np.linspace(0, 1, 21).reshape(-1, 1)
        jet = jet_of_polynomial(SmoothMap.from_strings(["x0**2"], 1), pts, lip_grade(3.0))
        cert = certify(jet, LINF)
        assert cert.M == pytest.approx(2.0)
        assert cert.sup_ratios <= 1e-10


class TestJetOfPolynomial:
    def test_constant(self):
        jet = jet_of_polynomial(
            SmoothMap.from_strings(["5 + 0*x0"], 1), [[0.0], [1.0]], lip_grade(3.0)
        )
        assert np.allclose(jet.levels[0], 5.0)
        assert np.allclose(jet.levels[1], 0.0)
        assert np.allclose(jet.levels[2], 0.0)

    def test_bilinear_monomial_levels(self):
        jet = jet_of_polynomial(
            SmoothMap.from_strings(["x0*x1"], 2), [[2.0, 5.0]], lip_grade(3.0)
        )
        assert np.allclose(jet.levels[1][0, 0], [5.0, 2.0])
        assert np.allclose(jet.levels[2][0, 0], [[0.0, 1.0], [1.0, 0.0]])

    def test_schwarz_symmetry_enforced(self):
        jet = jet_of_polynomial(
            SmoothMap.from_strings(["x0**2*x1 + x1**3"], 2),
            [[0.3, -0.4], [1.0, 1.0]],
            lip_grade(3.0),
        )
        L2 = jet.levels[2]
        assert np.allclose(L2, np.swapaxes(L2, 2, 3))


class TestHolderCharacterization:
    def test_bounds_hold_with_certificate(self):
        grid = np.linspace(-1, 1, 41).reshape(-1, 1)
        jet = jet_of_polynomial(SmoothMap.from_strings(["x0**3"], 1), grid, lip_grade(2.0))
        rep = holder_characterization_check(jet, LINF)
        assert rep.passed
        assert rep.max_violation == pytest.approx(0.0, abs=1e-12)

    def test_linear_jet_zero_holder(self):
        grid = np.linspace(0, 1, 9).reshape(-1, 1)
        jet = jet_of_polynomial(SmoothMap.from_strings(["2*x0"], 1), grid, lip_grade(2.0))
        rep = holder_characterization_check(jet, LINF)
        assert rep.max_holder_ratio == pytest.approx(0.0, abs=1e-12)

    def test_cubic_holder_ratio_closed_form(self):
        # |f'(x)-f'(y)|/|x-y| = 3|x+y| <= 6 on [-1,1]; grid max is 3(2-h)
        grid = np.linspace(-1, 1, 41).reshape(-1, 1)
        jet = jet_of_polynomial(SmoothMap.from_strings(["x0**3"], 1), grid, lip_grade(2.0))
        rep = holder_characterization_check(jet, LINF)
        h = 2.0 / 40.0
        assert rep.max_holder_ratio == pytest.approx(3 * (2 - h))
        assert rep.max_holder_ratio <= 6.0

"""Oscillator Green's function: closed form vs spectral oracle, expansions, poles."""

import math

import numpy as np
import pytest

from trapimp.errors import DomainError, EvaluationError, PoleError
from trapimp.green import (
    CoincidenceExpansion,
    green_expansion,
    green_ho,
    green_point_batch,
    green_pole_energies,
    green_reg_diag,
    green_reg_diag_oracle,
    green_spectral_oracle,
    lambda_factor,
    prolate_coords,
    spectral_truncation_estimate,
)

from _quadtools import cylindrical_integral


class TestProlateCoords:
    def test_coincident_points(self):
        pc = prolate_coords((0, 0, 1.0), (0, 0, 1.0))
        assert pc.xi == pytest.approx(1.0) and pc.eta == pytest.approx(1.0)
        assert pc.sign_factor == 1.0

    def test_antipodal_points(self):
        pc = prolate_coords((0, 0, 1.0), (0, 0, -1.0))
        assert pc.xi == pytest.approx(1.0) and pc.eta == pytest.approx(1.0)
        assert pc.sign_factor == -1.0

    def test_collinear_max_min_of_squares(self):
        pc = prolate_coords((0, 0, 2.0), (0, 0, 0.5))
        assert pc.xi == pytest.approx(4.0)
        assert pc.eta == pytest.approx(0.25)

    def test_orthogonal_points_have_zero_sign_and_eta(self):
        pc = prolate_coords((1.0, 0, 0), (0, 0, 0.7))
        assert pc.sign_factor == 0.0
        assert pc.eta == pytest.approx(0.0, abs=1e-15)


class TestLambdaFactor:
    def test_half(self):
        # Gamma(1/2) = sqrt(pi): Lambda = -1/(2 pi)
        assert lambda_factor(1, 0.5) == pytest.approx(-1.0 / (2.0 * math.pi), rel=1e-13)

    def test_pole_at_three_halves(self):
        with pytest.raises(PoleError):
            lambda_factor(1, 1.5)

    def test_negative_half(self):
        ref = -0.5 * math.pi ** -1.5 * math.gamma(1.0)
        assert lambda_factor(1, -0.5) == pytest.approx(ref, rel=1e-13)

    def test_only_n_equal_one(self):
        with pytest.raises(DomainError):
            lambda_factor(2, 0.5)


class TestGreenVsOracle:
    def test_spec_anchor_point(self):
        g = green_ho((0, 0, 0.7), (0, 0, -0.4), 0.9)
        o = green_spectral_oracle((0, 0, 0.7), (0, 0, -0.4), 0.9, n_max=46, tail=True)
        assert g.value == pytest.approx(o, rel=1e-6)

    def test_assorted_geometries(self):
        cases = [
            ((0.3, 0.2, 0.7), (-0.1, 0.5, -0.4), 1.7),
            ((0, 0, 1.1), (0, 0, 0.6), -2.3),
            ((1.2, 0, 0), (0, 0.4, 0.9), 3.1),
        ]
        for r, rp, E in cases:
            g = green_ho(r, rp, E)
            o = green_spectral_oracle(r, rp, E, n_max=46, tail=True)
            assert g.value == pytest.approx(o, rel=1e-8), (r, rp, E)

    def test_symmetry_under_argument_swap(self):
        r, rp, E = (0.4, -0.3, 0.8), (-0.6, 0.2, 0.1), 1.9
        assert green_ho(r, rp, E).value == green_ho(rp, r, E).value

    def test_rotational_invariance(self):
        rng = np.random.default_rng(5)
        r = np.array([0.5, -0.2, 0.9])
        rp = np.array([-0.3, 0.4, -0.6])
        E = 2.2
        base = green_ho(r, rp, E).value
        for _ in range(5):
            q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
            if np.linalg.det(q) < 0:
                q[:, 0] = -q[:, 0]
            val = green_ho(q @ r, q @ rp, E).value
            assert val == pytest.approx(base, rel=1e-10)

    def test_pole_residue_matches_shell_sum(self):
        # (E - E_n) G -> sum over the degenerate shell of phi(r') phi(r)
        from trapimp.green import _shell_kernels
        r, rp = (0, 0, 0.6), (0.2, 0, -0.3)
        h1 = _shell_kernels(r, rp, 2)[1]  # level E = 2.5
        for eps in (1e-5, 1e-6):
            val = (green_ho(r, rp, 2.5 + eps).value) * eps
            assert val == pytest.approx(h1, rel=1e-4)

    def test_raises_at_energy_pole(self):
        with pytest.raises(PoleError):
            green_ho((0, 0, 0.5), (0, 0, -0.2), 1.5)

    def test_raises_at_coincident_points(self):
        with pytest.raises(PoleError):
            green_ho((0, 0, 0.5), (0, 0, 0.5), 0.9)


class TestCoincidenceExpansion:
    def test_pole_coefficient_is_universal(self):
        # Wronskian identity: g1 = -(1+sign)/(4 pi) for every R, E
        for R in (0.3, 1.0, 2.5, 5.0):
            for E in (-3.3, 0.9, 4.2):
                ce = green_expansion(R, E, 1.0)
                assert ce.g1 == pytest.approx(-1.0 / (2.0 * math.pi), abs=1e-12)
                assert green_expansion(R, E, -1.0).g1 == pytest.approx(0.0, abs=1e-12)
                assert green_expansion(R, E, 0.0).g1 == pytest.approx(
                    -1.0 / (4.0 * math.pi), abs=1e-12)

    def test_two_point_fit_recovers_g0_and_g1(self):
        r0 = np.array([0.3, -0.2, 1.1])
        E = 1.23
        n = r0 / np.linalg.norm(r0)
        perp = np.array([n[1], -n[0], 0.0])
        perp /= np.linalg.norm(perp)
        samples = {}
        for dl in (1e-3, 1e-4, 1e-5):
            samples[dl] = green_ho(r0, r0 + dl * perp, E).value
        ce = green_expansion(float(np.linalg.norm(r0)), E, 1.0)
        # solve c0 + g1/dr through two samples; the constant needs smaller
        # radii for the O(dr) remainder to drop below 1e-4
        g1_fit = (samples[1e-3] - samples[1e-4]) / (1e3 - 1e4)
        assert g1_fit == pytest.approx(ce.g1, rel=1e-4)
        g1_fine = (samples[1e-4] - samples[1e-5]) / (1e4 - 1e5)
        c0_fit = samples[1e-4] - g1_fine * 1e4
        assert c0_fit == pytest.approx(ce.g0, rel=1e-4)

    def test_close_agreement_at_small_separation(self):
        r0 = np.array([0.3, -0.2, 1.1])
        E = 1.23
        perp = np.array([-0.2, -0.3, 0.0])
        perp /= np.linalg.norm(perp)
        dl = 1e-4
        rp = r0 + dl * perp
        mid_R = float(np.linalg.norm((r0 + rp) / 2.0))
        ce = green_expansion(mid_R, E, 1.0)
        g = green_ho(r0, rp, E)
        assert g.value == pytest.approx(ce.g0 + ce.g1 / dl, rel=1e-6)

    def test_linear_remainder_scaling(self):
        # |G - (g0 + g1/dr)| = O(dr)
        r0 = np.array([0.0, 0.0, 0.9])
        E = 0.7
        errs = []
        for dl in (1e-3, 1e-4, 1e-5):
            rp = r0 + dl * np.array([1.0, 0, 0])
            mid_R = float(np.linalg.norm((r0 + rp) / 2.0))
            ce = green_expansion(mid_R, E, 1.0)
            errs.append(abs(green_ho(r0, rp, E).value - (ce.g0 + ce.g1 / dl)))
        # remainder shrinks linearly: one decade in dr, one decade in error
        assert errs[1] < 0.2 * errs[0]
        assert errs[2] < 0.2 * errs[1]

    def test_direction_independence_of_pole_fit(self):
        r0 = np.array([0.0, 0.0, 1.4])
        E = -0.4
        fits = []
        for direction in (np.array([1.0, 0, 0]), np.array([0, 1.0, 0]),
                          np.array([0.6, 0.64, 0.48])):
            direction = direction / np.linalg.norm(direction)
            ys = [green_ho(r0, r0 + dl * direction, E).value for dl in (1e-3, 1e-4)]
            fits.append((ys[0] - ys[1]) / (1e3 - 1e4))
        assert np.ptp(fits) < 1e-6 * abs(fits[0])

    def test_branch_labels(self):
        assert green_ho((0, 0, 1.0), (0, 0, -1.0), 0.9).branch == "antipodal_limit"
        assert green_ho((0, 0, 1.0), (0, 0, 0.4), 0.9).branch == "full_formula"
        near = green_ho((0, 0, 1.0), (0, 0, 1.0 + 1e-8), 0.9)
        assert near.branch == "coincidence_expansion"

    def test_antipodal_limit_continuity(self):
        E = 0.9
        target = green_ho((0, 0, 1.0), (0, 0, -1.0), E).value
        vals = [green_ho((0, 0, 1.0), (0, 0, -1.0 + s), E).value
                for s in (1e-2, 1e-3, 1e-4)]
        # linear convergence toward the limit value
        diffs = [abs(v - target) for v in vals]
        assert diffs[1] < 0.2 * diffs[0]
        assert diffs[2] < 0.2 * diffs[1]
        # Richardson extrapolation lands on the limit
        extrap = vals[2] + (vals[2] - vals[1]) / 9.0
        assert extrap == pytest.approx(target, rel=1e-5)


class TestRegularizedDiagonal:
    def test_center_zeros_at_unitary_spectrum(self):
        for E in (0.5, 2.5, 4.5):
            assert green_reg_diag((0, 0, 0), E) == pytest.approx(0.0, abs=1e-12)

    def test_center_against_spectral_route(self):
        for E in (0.2, 0.9, 2.0, 3.0):
            closed = green_reg_diag((0, 0, 0), E)
            oracle = green_reg_diag_oracle((0, 0, 0), E)
            assert closed == pytest.approx(oracle, abs=1e-10)

    def test_single_impurity_root_matches_oracle_route(self):
        # gamma G_r = 1 at a = 1: root from the closed form vs spectral route
        from scipy import optimize
        invg = 1.0 / (2.0 * math.pi)
        closed_root = optimize.brentq(
            lambda E: green_reg_diag((0, 0, 0), E) - invg, -2.0, 1.49, xtol=1e-12)
        oracle_root = optimize.brentq(
            lambda E: green_reg_diag_oracle((0, 0, 0), E) - invg, -2.0, 1.49, xtol=1e-12)
        assert closed_root == pytest.approx(oracle_root, abs=1e-8)

    def test_large_offset_agreement(self):
        closed = green_reg_diag((0, 0, 6.0), 1.4)
        oracle = green_reg_diag_oracle((0, 0, 6.0), 1.4)
        assert closed == pytest.approx(oracle, rel=1e-6)

    def test_equals_expansion_g0(self):
        d = (0, 0, 1.7)
        assert green_reg_diag(d, 0.8) == green_expansion(1.7, 0.8, 1.0).g0


class TestSpectralOracle:
    def test_symmetric_kernel(self):
        r, rp, E = (0.4, 0, 0.3), (0, 0.2, -0.5), 1.1
        assert green_spectral_oracle(r, rp, E, 30) == pytest.approx(
            green_spectral_oracle(rp, r, E, 30), rel=1e-13)

    def test_parity_of_shells(self):
        # oracle(r, -r): odd shells enter with flipped sign
        from trapimp.green import _shell_kernels
        r = np.array([0.2, 0.1, 0.7])
        h_same = _shell_kernels(r, r, 5)
        h_flip = _shell_kernels(r, -r, 5)
        for n in range(6):
            sign = 1.0 if n % 2 == 0 else -1.0
            assert h_flip[n] == pytest.approx(sign * h_same[n], rel=1e-10)

    def test_truncation_error_decreases(self):
        r, rp, E = (0, 0, 0.8), (0, 0, -0.5), 0.9
        est = [spectral_truncation_estimate(r, rp, E, n) for n in (16, 32, 64)]
        assert est[1] < est[0]
        assert est[2] < est[1]

    def test_tail_resummation_beats_truncation(self):
        r, rp, E = (0, 0, 0.8), (0.3, 0, -0.5), 0.9
        exact = green_ho(r, rp, E).value
        bare = green_spectral_oracle(r, rp, E, 40)
        resummed = green_spectral_oracle(r, rp, E, 40, tail=True)
        assert abs(resummed - exact) < 1e-8
        assert abs(resummed - exact) < abs(bare - exact)

    def test_rejects_energy_on_included_level(self):
        with pytest.raises(PoleError):
            green_spectral_oracle((0, 0, 0.5), (0, 0, -0.5), 2.5, 20)


class TestEnergyDerivativeIdentity:
    def test_bilinear_identity_for_one_pair(self):
        # int G_E(d1, r) G_E(d2, r) d3r = -d/dE G_E(d1, d2)
        d1 = np.array([0.0, 0.0, 1.2])
        d2 = np.array([0.0, 0.0, -1.2])
        E = 0.8
        h = 1e-4
        lhs_fn = lambda rho, z: (
            green_point_batch(d1, np.column_stack([rho, np.zeros_like(rho), z]), E)
            * green_point_batch(d2, np.column_stack([rho, np.zeros_like(rho), z]), E))
        lhs = cylindrical_integral(lhs_fn, [1.2, -1.2])
        rhs = -(green_ho(d1, d2, E + h).value - green_ho(d1, d2, E - h).value) / (2 * h)
        assert lhs == pytest.approx(rhs, rel=1e-4)


class TestPoleBookkeeping:
    def test_pole_sets(self):
        assert list(green_pole_energies(0.0, 6.0, "even")) == [1.5, 3.5, 5.5]
        assert list(green_pole_energies(0.0, 6.0, "odd")) == [2.5, 4.5]
        assert list(green_pole_energies(0.0, 4.0, "both")) == [1.5, 2.5, 3.5]

    def test_batch_matches_scalar(self):
        d = np.array([0.0, 0.0, 1.3])
        E = 0.85
        pts = np.array([[0.2, 0.0, 0.4], [0.0, 0.1, -1.6], [0.0, 0.0, 2.2]])
        batch = green_point_batch(d, pts, E)
        for i, p in enumerate(pts):
            ref = green_ho(d, p, E).value
            assert batch[i] == pytest.approx(ref, rel=1e-9, abs=1e-11)

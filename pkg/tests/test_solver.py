"""Impurity-matrix assembly, root scans, states, wave functions, normalization."""

import dataclasses
import math

import numpy as np
import pytest

from trapimp.errors import ConfigurationError, PoleError, SolverError
from trapimp.green import green_ho, green_reg_diag
from trapimp.solver import (
    RootScanOptions,
    SystemSpec,
    build_dmatrix,
    det_d,
    find_roots,
    normalize,
    solve_state,
    unaffected_levels,
    wavefunction,
    wavefunction_samples,
)

from _quadtools import norm_quadrature

SYM_04 = SystemSpec(positions=((0.0, 0.0, 3.0), (0.0, 0.0, -3.0)),
                    scattering_lengths=(0.4, 0.4))


class TestSystemSpec:
    def test_rejects_empty(self):
        with pytest.raises(ConfigurationError):
            SystemSpec(positions=(), scattering_lengths=())

    def test_rejects_length_mismatch(self):
        with pytest.raises(ConfigurationError):
            SystemSpec(positions=((0, 0, 1.0),), scattering_lengths=(0.4, 0.4))

    def test_rejects_zero_scattering_length(self):
        with pytest.raises(ConfigurationError):
            SystemSpec(positions=((0, 0, 1.0),), scattering_lengths=(0.0,))

    def test_rejects_overlapping_impurities(self):
        with pytest.raises(ConfigurationError, match="closer"):
            SystemSpec(positions=((0, 0, 1.0), (0, 0, 1.0005)),
                       scattering_lengths=(0.4, 0.4))

    def test_unitarity_encoded_as_infinite_a(self):
        spec = SystemSpec(positions=((0, 0, 0.0),), scattering_lengths=(math.inf,))
        assert spec.inv_gammas[0] == 0.0

    def test_symmetry_detection(self):
        assert SYM_04.reflection_symmetric()
        assert SYM_04.symmetric_pair_half_separation() == 3.0
        asym = SystemSpec(positions=((0, 0, 3.02), (0, 0, -3.0)),
                          scattering_lengths=(0.4, 0.4))
        assert not asym.reflection_symmetric()


class TestDMatrix:
    def test_single_center_entry_and_busch_root(self):
        spec = SystemSpec(positions=((0, 0, 0.0),), scattering_lengths=(1.0,))
        E = 0.3
        m = build_dmatrix(spec, E)
        gamma = 2.0 * math.pi
        assert m.entries.shape == (1, 1)
        assert m.entries[0, 0] == pytest.approx(
            gamma * green_reg_diag((0, 0, 0), E) - 1.0, rel=1e-12)

    def test_symmetric_pair_matrix_is_symmetric(self):
        m = build_dmatrix(SYM_04, 0.9).entries
        assert m[0, 1] == pytest.approx(m[1, 0], rel=1e-13)

    def test_zero_coupling_limit(self):
        spec = SystemSpec(positions=((0, 0, 1.0), (0, 0, -1.0)),
                          scattering_lengths=(1e-14, 1e-14))
        assert det_d(spec, 0.77) == pytest.approx(1.0, abs=1e-10)

    def test_unitarity_requires_scaled_path(self):
        spec = SystemSpec(positions=((0, 0, 0.0),), scattering_lengths=(math.inf,))
        with pytest.raises(ConfigurationError):
            build_dmatrix(spec, 0.3)
        assert math.isfinite(det_d(spec, 0.3))

    def test_det_parity_factorization(self):
        gamma = 2.0 * math.pi * 0.4
        for E in (0.37, 1.21, 2.9):
            gr = green_reg_diag((0, 0, 3.0), E)
            go = green_ho((0, 0, 3.0), (0, 0, -3.0), E).value
            product = (gamma * (gr + go) - 1.0) * (gamma * (gr - go) - 1.0)
            assert det_d(SYM_04, E) == pytest.approx(product, rel=1e-12)

    def test_roots_invariant_under_relabeling(self):
        swapped = SystemSpec(positions=(SYM_04.positions[1], SYM_04.positions[0]),
                             scattering_lengths=(0.4, 0.4))
        for E in (0.37, 1.21):
            assert det_d(SYM_04, E) == pytest.approx(det_d(swapped, E), rel=1e-12)


class TestFindRoots:
    def test_unitary_center_spectrum(self):
        spec = SystemSpec(positions=((0, 0, 0.0),), scattering_lengths=(math.inf,))
        roots = find_roots(spec, 0.0, 5.6)
        energies = [s.energy for s in roots]
        assert energies == pytest.approx([0.5, 2.5, 4.5], abs=1e-10)
        assert all(s.parity == "even" for s in roots)

    def test_far_separation_recovers_oscillator_levels(self):
        spec = SystemSpec(positions=((0, 0, 6.0), (0, 0, -6.0)),
                          scattering_lengths=(0.4, 0.4))
        roots = find_roots(spec, 0.6, 3.2)
        assert roots[0].parity == "even"
        assert roots[0].energy == pytest.approx(1.5, abs=1e-6)
        assert roots[1].parity == "odd"
        assert roots[1].energy == pytest.approx(2.5, abs=1e-6)
        assert "near_pole" in roots[0].flags

    def test_negative_even_root_for_small_negative_a(self):
        # free space: a < 0 binds only for 2d < |a|; weak trap correction
        spec = SystemSpec(positions=((0, 0, 0.15), (0, 0, -0.15)),
                          scattering_lengths=(-0.4, -0.4))
        roots = find_roots(spec, -2.0, 0.0)
        assert len(roots) == 1
        assert roots[0].parity == "even"
        assert roots[0].energy < 0.0

    def test_doublet_splitting_decays_exponentially(self):
        # a = 1: splitting ~ exp(-2 kappa d), measurable down to ~1e-8
        prev = None
        for two_d in (6.0, 8.0, 10.0):
            d = two_d / 2.0
            center = -0.5 + d * d / 2.0
            spec = SystemSpec(positions=((0, 0, d), (0, 0, -d)),
                              scattering_lengths=(1.0, 1.0))
            roots = find_roots(spec, center - 0.8, center + 0.8)
            pair = [s for s in roots if
                    min(abs(s.energy - p) for p in np.arange(60) + 1.5) > 0.05]
            assert len(pair) == 2
            assert {pair[0].parity, pair[1].parity} == {"even", "odd"}
            assert pair[0].parity == "even"  # even lies below
            split = pair[1].energy - pair[0].energy
            assert split > 0
            if prev is not None:
                # each step of 2d by 2 shrinks the splitting by ~e^-2
                assert split < 0.4 * prev
            prev = split

    def test_root_residuals(self):
        roots = find_roots(SYM_04, 0.6, 2.6)
        scale = abs(det_d(SYM_04, 1.0)) + abs(det_d(SYM_04, 2.0))
        for s in roots:
            if "near_pole" in s.flags:
                continue
            assert abs(det_d(SYM_04, s.energy)) < 1e-8 * scale
            st = solve_state(SYM_04, s.energy)
            gt = np.array([[0.0, 0.0], [0.0, 0.0]])
            from trapimp.solver import _gmatrix_tilde
            gt = _gmatrix_tilde(SYM_04, s.energy)[:, :, 0]
            assert np.linalg.norm(gt @ st.k) < 1e-8 * np.linalg.norm(gt)

    def test_interlacing_at_crossing(self):
        # between the two even levels at the avoided crossing sits one odd level
        spec = SystemSpec(positions=((0, 0, 3.04), (0, 0, -3.04)),
                          scattering_lengths=(0.4, 0.4))
        roots = find_roots(spec, 0.9, 2.2)
        evens = [s.energy for s in roots if s.parity == "even"]
        odds = [s.energy for s in roots if s.parity == "odd"]
        assert len(evens) >= 2
        between = [o for o in odds if evens[0] < o < evens[1]]
        assert len(between) == 1

    def test_degenerate_pair_flag_at_large_separation(self):
        spec = SystemSpec(positions=((0, 0, 5.0), (0, 0, -5.0)),
                          scattering_lengths=(0.4, 0.4))
        center = -3.125 + 12.5
        roots = find_roots(spec, center - 0.7, center + 0.7)
        doublet = [s for s in roots if
                   min(abs(s.energy - p) for p in np.arange(60) + 1.5) > 0.05]
        assert len(doublet) == 2
        assert abs(doublet[0].energy - doublet[1].energy) < 1e-8
        assert all("degenerate_pair" in s.flags for s in doublet)

    def test_translation_breaks_invariance(self):
        centered = SystemSpec(positions=((0, 0, 1.5), (0, 0, -1.5)),
                              scattering_lengths=(1.0, 1.0))
        shifted = SystemSpec(positions=((0, 0, 2.5), (0, 0, 0.5)),
                             scattering_lengths=(1.0, 1.0))
        r0 = find_roots(centered, -1.5, 1.0)
        r1 = find_roots(shifted, -1.5, 1.0)
        assert abs(r0[0].energy - r1[0].energy) > 1e-3

    def test_single_impurity_limit_of_weak_second_coupling(self):
        single = SystemSpec(positions=((0, 0, 1.0),), scattering_lengths=(1.0,))
        nearly = SystemSpec(positions=((0, 0, 1.0), (0, 0, -1.0)),
                            scattering_lengths=(1.0, 1e-6))
        r_single = find_roots(single, -1.0, 1.2)
        r_nearly = find_roots(nearly, -1.0, 1.2)
        assert r_single[0].energy == pytest.approx(r_nearly[0].energy, abs=1e-4)


class TestSolveState:
    def test_even_amplitude_pattern(self):
        roots = find_roots(SYM_04, 0.9, 2.2)
        even = next(s for s in roots if s.parity == "even")
        st = solve_state(SYM_04, even.energy)
        assert st.parity == "even"
        assert st.k[0] == pytest.approx(st.k[1], rel=1e-8)

    def test_odd_amplitude_pattern(self):
        roots = find_roots(SYM_04, 0.9, 2.2)
        odd = next(s for s in roots if s.parity == "odd")
        st = solve_state(SYM_04, odd.energy)
        assert st.parity == "odd"
        assert st.k[0] == pytest.approx(-st.k[1], rel=1e-8)

    def test_asymmetric_has_no_parity(self):
        spec = SystemSpec(positions=((0, 0, 3.025), (0, 0, -3.0)),
                          scattering_lengths=(0.4, 0.4))
        roots = find_roots(spec, 1.0, 1.45)
        st = solve_state(spec, roots[0].energy)
        assert st.parity == "none"
        assert abs(st.k[0]) > 1e-6 and abs(st.k[1]) > 1e-6


class TestWavefunction:
    @pytest.fixture(scope="class")
    def dimer_state(self):
        spec = SystemSpec(positions=((0, 0, 2.5), (0, 0, -2.5)),
                          scattering_lengths=(1.0, 1.0))
        roots = find_roots(spec, 2.0, 3.3)
        even = next(s for s in roots if s.parity == "even")
        return spec, normalize(solve_state(spec, even.energy), spec)

    def test_contact_condition_fit(self, dimer_state):
        spec, st = dimer_state
        d1 = np.array([0.0, 0.0, 2.5])
        xhat = np.array([1.0, 0.0, 0.0])
        rows, rhs = [], []
        for delta in (1e-2, 1e-3):
            val = wavefunction_samples(st, spec, np.array([d1 + delta * xhat]),
                                       pole_guard=1e-5)[0]
            rows.append([1.0 / delta, -1.0])
            rhs.append(val)
        c, c_over_a = np.linalg.solve(np.array(rows), np.array(rhs))
        assert c / c_over_a == pytest.approx(1.0, rel=1e-2)

    def test_even_state_is_even_in_z(self, dimer_state):
        spec, st = dimer_state
        z = np.array([0.3, 0.9, 1.7, 3.4])
        up = wavefunction_samples(st, spec, np.column_stack([0 * z, 0 * z, z]))
        dn = wavefunction_samples(st, spec, np.column_stack([0 * z, 0 * z, -z]))
        assert np.allclose(up, dn, rtol=1e-10)

    def test_far_field_gaussian_envelope(self, dimer_state):
        # log |Psi|^2 vs r^2 slope approaches -1 (Gaussian envelope)
        spec, st = dimer_state
        x = np.linspace(2.8, 4.0, 7)
        vals = wavefunction_samples(st, spec, np.column_stack([x, 0 * x, 0 * x]))
        slope = np.polyfit(x * x, np.log(vals ** 2), 1)[0]
        assert -1.35 < slope < -0.75

    def test_refuses_samples_at_impurity(self, dimer_state):
        spec, st = dimer_state
        with pytest.raises(PoleError):
            wavefunction(st, spec, (0, 0, 2.5 + 1e-9))


class TestNormalize:
    def test_unit_norm_by_quadrature(self):
        roots = find_roots(SYM_04, 0.9, 2.2)
        st = normalize(solve_state(SYM_04, roots[0].energy), SYM_04)
        assert norm_quadrature(st, SYM_04) == pytest.approx(1.0, abs=1e-4)
        assert st.norm == 1.0

    def test_projective_invariance(self):
        roots = find_roots(SYM_04, 0.9, 2.2)
        st = solve_state(SYM_04, roots[0].energy)
        doubled = dataclasses.replace(st, k=tuple(2.0 * v for v in st.k))
        k1 = normalize(st, SYM_04).k
        k2 = normalize(doubled, SYM_04).k
        assert np.allclose(k1, k2, rtol=1e-12)

    def test_requires_amplitudes(self):
        roots = find_roots(SYM_04, 0.9, 2.2)
        with pytest.raises(SolverError):
            normalize(roots[0], SYM_04)

    def test_deep_dimer_norm(self):
        spec = SystemSpec(positions=((0, 0, 1.0), (0, 0, -1.0)),
                          scattering_lengths=(0.4, 0.4))
        roots = find_roots(spec, -4.0, -2.0)
        st = normalize(solve_state(spec, roots[0].energy), spec)
        assert norm_quadrature(st, spec) == pytest.approx(1.0, abs=1e-4)


class TestUnaffectedLevels:
    def test_pair_on_axis(self):
        levels = unaffected_levels(SYM_04, 0.0, 4.0)
        # level N=1 (E=2.5): degeneracy 3, one m=0 state -> 2 unaffected
        # level N=2 (E=3.5): degeneracy 6, two m=0 states -> 4 unaffected
        assert levels == [(2.5, 2), (3.5, 4)]

    def test_single_center(self):
        spec = SystemSpec(positions=((0, 0, 0.0),), scattering_lengths=(1.0,))
        levels = unaffected_levels(spec, 0.0, 4.0)
        # only l = 0 states feel the center: N=1 keeps 3, N=2 keeps 5
        assert levels == [(2.5, 3), (3.5, 5)]

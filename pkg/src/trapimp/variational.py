"""Two- and three-state variational models for the trapped pair problem.

The trial space is spanned by the free-space bound orbital at each impurity,
psi(r) = exp(-r/a)/(sqrt(2 pi a) r), optionally extended by the oscillator
ground state phi0 = pi^(-3/4) exp(-r^2/2).  The generalized eigenproblem
(H - E S) v = 0 is assembled from closed forms:

* own-orbital kinetic + contact energy is absorbed exactly into
  E_b = -1/(2 a^2) (the orbital is the zero-range bound eigenstate);
* cross contact terms use regularized evaluation [d/dr (r psi)] at the
  impurity, which is -1/(a sqrt(2 pi a)) at the orbital's own center and
  plain evaluation elsewhere;
* trap matrix elements reduce to elementary integrals (prolate coordinates
  for orbital pairs, erfc forms against the Gaussian).

All closed forms are cross-checked against quadrature in the test suite.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy import special as sc

from .errors import BasisConditionError, ConditioningWarning, ConfigurationError
from .solver import SystemSpec

_MIN_OVERLAP_EIG = 1e-8


@dataclass(frozen=True)
class BoundOrbital:
    """Normalized zero-range bound orbital exp(-s/a)/(sqrt(2 pi a) s) at a center."""

    center: tuple[float, float, float]
    a: float


@dataclass(frozen=True)
class TrapGround:
    """Normalized oscillator ground state, energy 3/2."""


@dataclass(frozen=True)
class VariationalBasis:
    orbitals: tuple

    def __post_init__(self):
        if not 2 <= len(self.orbitals) <= 3:
            raise ConfigurationError("variational basis supports 2 or 3 states")
        n_ground = sum(isinstance(o, TrapGround) for o in self.orbitals)
        if n_ground > 1:
            raise ConfigurationError("at most one trap-ground orbital")
        for o in self.orbitals:
            if isinstance(o, BoundOrbital) and o.a <= 0:
                raise ConfigurationError("bound orbitals require a > 0")

    @property
    def size(self) -> int:
        return len(self.orbitals)


@dataclass(frozen=True)
class VariationalSolution:
    energies: tuple[float, ...]
    amplitudes: np.ndarray  # columns are v-vectors, ascending energies
    overlap: np.ndarray
    hamiltonian: np.ndarray
    parities: tuple[str, ...]


def two_state_basis(spec: SystemSpec) -> VariationalBasis:
    """Bound orbitals at both impurity positions."""
    if spec.n_impurities != 2:
        raise ConfigurationError("two-state basis needs exactly two impurities")
    a = spec.scattering_lengths[0]
    if a != spec.scattering_lengths[1] or not a > 0:
        raise ConfigurationError("equal positive scattering lengths required")
    return VariationalBasis(orbitals=(
        BoundOrbital(center=spec.positions[0], a=a),
        BoundOrbital(center=spec.positions[1], a=a)))


def three_state_basis(spec: SystemSpec) -> VariationalBasis:
    """Two bound orbitals plus the extended trap ground state."""
    base = two_state_basis(spec)
    return VariationalBasis(orbitals=base.orbitals + (TrapGround(),))


def _orbital_value(orb: BoundOrbital, point) -> float:
    s = float(np.linalg.norm(np.asarray(point) - np.asarray(orb.center)))
    return math.exp(-s / orb.a) / (math.sqrt(2.0 * math.pi * orb.a) * s)


def _orbital_reg_value(orb: BoundOrbital, point) -> float:
    """[d/ds (s psi)] at the point: plain value except at the own center."""
    s = float(np.linalg.norm(np.asarray(point) - np.asarray(orb.center)))
    if s < 1e-12:
        return -1.0 / (orb.a * math.sqrt(2.0 * math.pi * orb.a))
    return _orbital_value(orb, point)


def _ground_value(point) -> float:
    r2 = float(np.asarray(point) @ np.asarray(point))
    return math.pi ** -0.75 * math.exp(-0.5 * r2)


def _gauss_tail(p: float) -> float:
    """int_0^inf exp(-x^2/2 - p x) dx = sqrt(pi/2) e^(p^2/2) erfc(p/sqrt(2))."""
    return math.sqrt(math.pi / 2.0) * math.exp(0.5 * p * p) * sc.erfc(p / math.sqrt(2.0))


def _overlap_bound_bound(o1: BoundOrbital, o2: BoundOrbital) -> float:
    sep = float(np.linalg.norm(np.asarray(o1.center) - np.asarray(o2.center)))
    return math.exp(-sep / o1.a)


def _overlap_bound_ground(o: BoundOrbital) -> float:
    d = float(np.linalg.norm(np.asarray(o.center)))
    a = o.a
    pref = math.pi ** -0.75 / math.sqrt(2.0 * math.pi * a)
    if d < 1e-12:
        # 4 pi int exp(-u^2/2 - u/a) u du, limit of the sinh form
        val = 4.0 * math.pi * (1.0 - (1.0 / a) * _gauss_tail(1.0 / a))
        return pref * val
    body = _gauss_tail(1.0 / a - d) - _gauss_tail(1.0 / a + d)
    return pref * (2.0 * math.pi / d) * math.exp(-0.5 * d * d) * body


def overlap_matrix(basis: VariationalBasis) -> np.ndarray:
    """S_ij = <psi_i|psi_j>; unit diagonal by normalization."""
    n = basis.size
    s = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            oi, oj = basis.orbitals[i], basis.orbitals[j]
            if isinstance(oi, BoundOrbital) and isinstance(oj, BoundOrbital):
                s[i, j] = _overlap_bound_bound(oi, oj)
            elif isinstance(oi, BoundOrbital):
                s[i, j] = _overlap_bound_ground(oi)
            else:
                s[i, j] = _overlap_bound_ground(oj)
            s[j, i] = s[i, j]
    evals = np.linalg.eigvalsh(s)
    if evals.min() < 100.0 * _MIN_OVERLAP_EIG:
        warnings.warn(
            f"variational overlap nearly singular (min eig {evals.min():.2e}); "
            "the ansatz degrades when the separation is comparable to a",
            ConditioningWarning)
    return s


def _trap_bound_bound(o1: BoundOrbital, o2: BoundOrbital) -> float:
    """<psi_1| r^2/2 |psi_2> by prolate-coordinate closed form."""
    a = o1.a
    c1 = np.asarray(o1.center, dtype=float)
    c2 = np.asarray(o2.center, dtype=float)
    sep = float(np.linalg.norm(c1 - c2))
    if sep < 1e-12:
        return 0.5 * (a * a / 2.0 + float(c1 @ c1))
    mid2 = float(((c1 + c2) / 2.0) @ ((c1 + c2) / 2.0))
    s12 = math.exp(-sep / a)
    return s12 * (sep * sep / 24.0 + a * sep / 4.0 + a * a / 4.0) + 0.5 * mid2 * s12


def hamiltonian_matrix(basis: VariationalBasis, spec: SystemSpec) -> np.ndarray:
    """H_ij = <psi_i|H|psi_j> for the trapped-pair Hamiltonian.

    Bound-orbital kets contribute E_b plus the trap term plus the other
    impurities' contact terms; the trap-ground ket contributes 3/2 plus all
    contact terms.  Regularized evaluation keeps everything finite and (as
    verified in the tests) symmetric.
    """
    for o in basis.orbitals:
        if isinstance(o, BoundOrbital):
            if not any(math.isclose(o.a, sl) for sl in spec.scattering_lengths):
                raise ConfigurationError(
                    "bound-orbital scattering length must match the configuration")
    n = basis.size
    gam = spec.gammas
    pos = spec.positions_array
    h = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            bra, ket = basis.orbitals[i], basis.orbitals[j]
            if isinstance(bra, BoundOrbital) and isinstance(ket, BoundOrbital):
                e_b = -1.0 / (2.0 * ket.a * ket.a)
                val = e_b * _overlap_bound_bound(bra, ket) + _trap_bound_bound(bra, ket)
                # contact terms of every impurity except the ket's own, with
                # the bra regularized where it is singular
                for m in range(spec.n_impurities):
                    if np.linalg.norm(pos[m] - np.asarray(ket.center)) < 1e-12:
                        continue
                    val += gam[m] * _orbital_reg_value(bra, pos[m]) \
                        * _orbital_value(ket, pos[m])
            elif isinstance(bra, BoundOrbital) or isinstance(ket, BoundOrbital):
                # one trap-ground state: with phi0 as the ket, H phi0 =
                # 3/2 phi0 + all contact terms (Hermiticity of the pair
                # kinetic + own-contact makes both orderings equal)
                orb = bra if isinstance(bra, BoundOrbital) else ket
                val = 1.5 * _overlap_bound_ground(orb)
                for m in range(spec.n_impurities):
                    val += gam[m] * _orbital_reg_value(orb, pos[m]) * _ground_value(pos[m])
            else:
                val = 1.5
                for m in range(spec.n_impurities):
                    val += gam[m] * _ground_value(pos[m]) ** 2
            h[i, j] = val
            h[j, i] = val
    return h


def solve_variational(basis: VariationalBasis, spec: SystemSpec) -> VariationalSolution:
    """Solve (H - E S) v = 0; energies ascending, parity tags when symmetric."""
    s = overlap_matrix(basis)
    evals_s = np.linalg.eigvalsh(s)
    if evals_s.min() < _MIN_OVERLAP_EIG:
        raise BasisConditionError(
            f"overlap matrix indefinite/singular within tolerance "
            f"(min eig {evals_s.min():.2e})")
    h = hamiltonian_matrix(basis, spec)
    energies, vecs = linalg.eigh(h, s)
    parities = []
    symmetric = spec.reflection_symmetric() and basis.size >= 2
    for col in range(vecs.shape[1]):
        v = vecs[:, col]
        if symmetric:
            scale = max(abs(v[0]), abs(v[1]), 1e-300)
            if abs(v[0] - v[1]) / scale < 1e-6:
                parities.append("even")
            elif abs(v[0] + v[1]) / scale < 1e-6:
                parities.append("odd")
            else:
                parities.append("none")
        else:
            parities.append("none")
    return VariationalSolution(
        energies=tuple(float(e) for e in energies),
        amplitudes=vecs,
        overlap=s,
        hamiltonian=h,
        parities=tuple(parities))

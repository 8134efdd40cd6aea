"""Free-space (trap-removed) bound states of the zero-range impurity problem.

With the trap switched off the Green's function at E = -kappa^2/2 < 0 is the
Yukawa kernel G(r, r') = -exp(-kappa dr)/(2 pi dr), normalized so its
coincidence pole matches the trapped kernel (-1/(2 pi dr)); the coupling
gamma = 2 pi a is then shared between both determinants.  For a symmetric
pair the determinant factorizes into the parity conditions

    kappa = 1/a + exp(-2 kappa d)/(2 d)   (even)
    kappa = 1/a - exp(-2 kappa d)/(2 d)   (odd)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .errors import DomainError, SolverError
from .solver import SystemSpec

_KAPPA_MAX_FACTOR = 4.0


@dataclass(frozen=True)
class BoundBranch:
    """A negative-energy branch kappa(d), E(d) = -kappa^2/2 of fixed parity."""

    parity: str
    samples: tuple[tuple[float, float, float], ...]  # (d, E, kappa)

    def energies(self) -> np.ndarray:
        return np.asarray([s[1] for s in self.samples])

    def separations(self) -> np.ndarray:
        return np.asarray([s[0] for s in self.samples])


def green_free(r, r_prime, E: float) -> float:
    """Free-space kernel -exp(-kappa dr)/(2 pi dr), kappa = sqrt(-2E)."""
    if E >= 0:
        raise DomainError("free-space Green's function defined for E < 0 only")
    r = np.asarray(r, dtype=float)
    rp = np.asarray(r_prime, dtype=float)
    dr = float(np.linalg.norm(r - rp))
    if dr == 0.0:
        raise DomainError("free kernel diverges at coincident points")
    kappa = math.sqrt(-2.0 * E)
    return -math.exp(-kappa * dr) / (2.0 * math.pi * dr)


def free_reg_diag(E: float) -> float:
    """Regularized diagonal of the free kernel: kappa/(2 pi)."""
    if E >= 0:
        raise DomainError("free-space Green's function defined for E < 0 only")
    return math.sqrt(-2.0 * E) / (2.0 * math.pi)


def parity_condition(kappa: float, d: float, a: float, parity: str) -> float:
    """Residual of the closed parity condition; its zero is the bound state."""
    if parity == "even":
        return kappa - 1.0 / a - math.exp(-2.0 * kappa * d) / (2.0 * d)
    if parity == "odd":
        return kappa - 1.0 / a + math.exp(-2.0 * kappa * d) / (2.0 * d)
    raise ValueError(f"parity must be 'even' or 'odd', got {parity!r}")


def _det_tilde_free(spec: SystemSpec, E: float) -> float:
    """Generic det(G_free - diag(1/gamma)); shares roots with the closed
    parity conditions for symmetric pairs."""
    n = spec.n_impurities
    pos = spec.positions_array
    m = np.empty((n, n))
    for i in range(n):
        m[i, i] = free_reg_diag(E) - spec.inv_gammas[i]
        for j in range(i + 1, n):
            v = green_free(pos[i], pos[j], E)
            m[i, j] = v
            m[j, i] = v
    return float(np.linalg.det(m))


def bound_state_kappa(d: float, a: float, parity: str) -> float | None:
    """kappa > 0 solving the parity condition at half-separation d, or None.

    Both conditions are strictly increasing in kappa, so existence reduces
    to a sign check at kappa = 0+.
    """
    if d <= 0:
        raise DomainError("half-separation d must be positive")
    f0 = parity_condition(0.0, d, a, parity)
    if f0 >= 0.0:
        return None  # branch absent (or exactly at threshold)
    hi = max(2.0 / abs(a), 1.0 / d, 1.0) * _KAPPA_MAX_FACTOR
    while parity_condition(hi, d, a, parity) <= 0.0:
        hi *= 2.0
        if hi > 1e8:
            raise SolverError("no upper bracket for the bound-state condition")
    return float(optimize.brentq(lambda k: parity_condition(k, d, a, parity),
                                 1e-300, hi, xtol=1e-13, rtol=8.9e-16))


def bound_states_at(d: float, a: float) -> dict[str, float | None]:
    """kappa per parity at a single geometry (None where the branch is absent)."""
    return {p: bound_state_kappa(d, a, p) for p in ("even", "odd")}


def bound_branches(a: float, d_values) -> list[BoundBranch]:
    """Parity-resolved branches sampled over half-separations d_values.

    Branches terminate cleanly where kappa -> 0 (threshold); absent samples
    are simply omitted, so an empty branch is a legitimate result.
    """
    branches = []
    for parity in ("even", "odd"):
        samples = []
        for d in d_values:
            kappa = bound_state_kappa(float(d), a, parity)
            if kappa is not None and kappa > 0.0:
                samples.append((float(d), -0.5 * kappa * kappa, kappa))
        branches.append(BoundBranch(parity=parity, samples=tuple(samples)))
    return branches


def bound_states_free(spec: SystemSpec, d_values=None) -> list[BoundBranch]:
    """Free-space branches for a symmetric pair configuration.

    With ``d_values`` omitted, the branches hold the single sample at the
    configuration's own separation.
    """
    d = spec.symmetric_pair_half_separation()
    if d is None:
        raise DomainError("free-space branches implemented for symmetric pairs")
    a = spec.scattering_lengths[0]
    if d_values is None:
        d_values = [d]
    return bound_branches(a, d_values)


def bound_states_generic(spec: SystemSpec, e_min: float, e_max: float = -1e-8,
                         n_grid: int = 2000) -> list[float]:
    """E < 0 roots of the generic free-space determinant (any geometry)."""
    if e_max >= 0:
        e_max = -1e-8
    grid = np.linspace(e_min, e_max, n_grid)
    vals = np.array([_det_tilde_free(spec, e) for e in grid])
    roots = []
    for i in range(len(grid) - 1):
        if vals[i] == 0.0:
            roots.append(float(grid[i]))
        elif vals[i] * vals[i + 1] < 0.0:
            roots.append(float(optimize.brentq(
                lambda e: _det_tilde_free(spec, e), grid[i], grid[i + 1],
                xtol=1e-13, rtol=8.9e-16)))
    return roots


def even_threshold_separation(a: float, tol: float = 1e-10) -> float:
    """Half-separation where the even branch crosses E = 0 (negative a only).

    Located numerically from the kappa -> 0 limit of the even condition;
    analytically d* = |a|/2, i.e. the branch exists only for 2d < |a|.
    """
    if a >= 0:
        raise DomainError("the even branch terminates at threshold only for a < 0")

    def f(d):
        return parity_condition(0.0, d, a, "even")

    lo, hi = 1e-6, 100.0
    return float(optimize.brentq(f, lo, hi, xtol=tol, rtol=8.9e-16))

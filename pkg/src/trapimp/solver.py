"""Eigenenergies and wave functions of a trapped atom with zero-range impurities.

The interacting energies are the roots of det D_N(E), where D_N carries the
regularized Green's-function diagonal and plain off-diagonal couplings.
Root scans work on the scaled symmetric matrix Dt = G - diag(1/gamma)
(same null space and roots, well defined at infinite scattering length);
reflection-symmetric two-impurity configurations factorize into even/odd
scalar conditions which are scanned separately.

Scanning strategy: each pole-free energy interval is sampled at Chebyshev
nodes (the determinant is analytic there), endpoint poles are removed by
polynomial factors, and roots come from the Chebyshev companion matrix with
a Newton correction on the true function.  This resolves near-degenerate
avoided-crossing pairs without ad-hoc grid refinement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.polynomial import chebyshev as nc

from .errors import ConfigurationError, DegenerateStateError, PoleError, SolverError
from .green import (
    DEFAULT_ACCURACY,
    _offdiag_values,
    _reg_diag_value,
    green_point_batch,
    green_pole_energies,
    parity_diag_combination,
)

MIN_SEPARATION = 1e-3  # below this the two-center zero-range model is invalid
_NEAR_POLE_FLAG_DIST = 1e-9
_DEGENERATE_PAIR_TOL = 1e-8


@dataclass(frozen=True)
class SystemSpec:
    """A trapped-atom configuration: impurity positions and scattering lengths.

    Oscillator units: positions in l0, scattering lengths in l0, energies in
    hbar*omega.  The dimensionless couplings are gamma_i = 2 pi a_i;
    ``a = math.inf`` encodes the unitary limit 1/gamma = 0.
    """

    positions: tuple[tuple[float, float, float], ...]
    scattering_lengths: tuple[float, ...]

    def __post_init__(self):
        pos = tuple(tuple(float(c) for c in p) for p in self.positions)
        a = tuple(float(v) for v in self.scattering_lengths)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "scattering_lengths", a)
        if len(pos) == 0:
            raise ConfigurationError("at least one impurity required")
        if len(pos) != len(a):
            raise ConfigurationError("positions and scattering_lengths must have equal length")
        for v in a:
            if math.isnan(v) or v == 0.0:
                raise ConfigurationError(f"invalid scattering length {v}")
        arr = np.asarray(pos)
        for i in range(len(pos)):
            for j in range(i + 1, len(pos)):
                if np.linalg.norm(arr[i] - arr[j]) < MIN_SEPARATION:
                    raise ConfigurationError(
                        f"impurities {i} and {j} closer than {MIN_SEPARATION} l0: "
                        "the two-center zero-range model breaks down")

    @property
    def n_impurities(self) -> int:
        return len(self.positions)

    @property
    def positions_array(self) -> np.ndarray:
        return np.asarray(self.positions, dtype=float)

    @property
    def inv_gammas(self) -> np.ndarray:
        """1/gamma_i = 1/(2 pi a_i); zero at unitarity (a = inf)."""
        out = np.empty(self.n_impurities)
        for i, v in enumerate(self.scattering_lengths):
            out[i] = 0.0 if math.isinf(v) else 1.0 / (2.0 * math.pi * v)
        return out

    @property
    def gammas(self) -> np.ndarray:
        return np.asarray([2.0 * math.pi * v for v in self.scattering_lengths])

    def is_on_axis(self) -> bool:
        return bool(np.all(np.abs(self.positions_array[:, :2]) < 1e-12))

    def reflection_symmetric(self) -> bool:
        """Invariant under z -> -z with matching couplings."""
        pos = self.positions_array
        mirrored = pos * np.array([1.0, 1.0, -1.0])
        used = [False] * len(pos)
        for i, m in enumerate(mirrored):
            hit = None
            for j, p in enumerate(pos):
                if not used[j] and np.linalg.norm(m - p) < 1e-12 \
                        and self.scattering_lengths[i] == self.scattering_lengths[j]:
                    hit = j
                    break
            if hit is None:
                return False
            used[hit] = True
        return True

    def symmetric_pair_half_separation(self):
        """d for an on-axis antipodal pair (0,0,+-d); None otherwise."""
        if self.n_impurities != 2 or not self.is_on_axis():
            return None
        z1, z2 = self.positions_array[:, 2]
        if abs(z1 + z2) < 1e-12 and self.scattering_lengths[0] == self.scattering_lengths[1]:
            return abs(z1)
        return None


@dataclass(frozen=True)
class SpectralState:
    """One stationary state.

    ``k`` holds the null direction of the scaled matrix Dt = G - diag(1/gamma),
    i.e. the channel amplitudes of Psi(r) = sum_i k_i G(d_i, r).  These equal
    gamma_i times the regularized contact amplitudes, so for equal couplings
    the ratios (and the even/odd sign patterns) coincide with the contact
    amplitudes themselves; they stay finite in the unitary limit.
    """

    energy: float
    k: tuple[float, ...] | None
    parity: str  # 'even' | 'odd' | 'none'
    norm: float = math.nan
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class DMatrix:
    """The impurity matrix with entries gamma_j G(d_j, d_i) - delta_ij."""

    entries: np.ndarray
    energy: float


@dataclass(frozen=True)
class RootScanOptions:
    grid_per_unit: int = 400      # sampling density; mapped to Chebyshev degree
    refine_tol: float = 1e-10     # target |dE| of reported roots
    pole_margin: float = 1e-9     # roots closer than this to a pole are flagged
    max_degree: int = 192
    accuracy: object = DEFAULT_ACCURACY


def _gmatrix_tilde(spec: SystemSpec, E_arr) -> np.ndarray:
    """Dt(E) = G(E) - diag(1/gamma), vectorized over E: shape (N, N, nE)."""
    E_arr = np.atleast_1d(np.asarray(E_arr, dtype=float))
    n = spec.n_impurities
    pos = spec.positions_array
    invg = spec.inv_gammas
    out = np.empty((n, n, E_arr.size))
    for i in range(n):
        out[i, i] = _reg_diag_value(float(np.linalg.norm(pos[i])), E_arr,
                                    DEFAULT_ACCURACY) - invg[i]
        for j in range(i + 1, n):
            vals, _ = _offdiag_values(pos[i], pos[j], E_arr, DEFAULT_ACCURACY)
            out[i, j] = vals
            out[j, i] = vals
    return out


def build_dmatrix(spec: SystemSpec, E: float) -> DMatrix:
    """D_N(E) with entries gamma_j G(d_j, d_i) - delta_ij (finite couplings)."""
    if np.any(np.isinf(spec.gammas)):
        raise ConfigurationError(
            "build_dmatrix needs finite couplings; use the scaled determinant "
            "path (det_d / find_roots) at unitarity")
    gt = _gmatrix_tilde(spec, E)[:, :, 0]
    # gt = G - diag(1/gamma); restore G, then D = G diag(gamma) - I
    g = gt + np.diag(spec.inv_gammas)
    d = g * spec.gammas[np.newaxis, :] - np.eye(spec.n_impurities)
    return DMatrix(entries=d, energy=float(E))


def det_d(spec: SystemSpec, E: float) -> float:
    """det D_N(E); at unitarity the scaled det(Dt) (same roots) is returned."""
    if np.any(np.isinf(spec.gammas)):
        return float(np.linalg.det(_gmatrix_tilde(spec, E)[:, :, 0]))
    return float(np.linalg.det(build_dmatrix(spec, E).entries))


def _det_tilde_grid(spec: SystemSpec, E_arr) -> np.ndarray:
    gt = _gmatrix_tilde(spec, E_arr)
    return np.linalg.det(np.moveaxis(gt, 2, 0))


def _cheb_interval_roots(fn_grid, lo, hi, order_lo, order_hi, degree, options):
    """Roots of a scalar function on (lo, hi) via Chebyshev interpolation.

    ``fn_grid`` maps an energy array to function values.  Endpoint poles are
    removed by multiplying with (E-p)^order, where the order must match the
    function's actual pole order (excess factors plant artificial roots at
    the endpoints).  Returns (roots, derivative estimates).
    """
    k = np.arange(degree + 1)
    t = np.cos(np.pi * k / degree)  # Lobatto nodes in [-1, 1]
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    # keep a hair away from the pole endpoints
    shrink = 1.0 - 1e-12
    e_nodes = mid + half * shrink * t
    vals = fn_grid(e_nodes)
    g = np.asarray(vals, dtype=float)
    if order_lo:
        g = g * (e_nodes - lo) ** order_lo
    if order_hi:
        g = g * (e_nodes - hi) ** order_hi
    if not np.all(np.isfinite(g)):
        raise SolverError(f"non-finite determinant samples in ({lo}, {hi})")
    scale = np.max(np.abs(g))
    if scale == 0.0:
        return [], []
    coef = nc.chebfit(t * shrink, g / scale, degree)
    # drop numerically irrelevant trailing coefficients for stable companion
    keep = np.nonzero(np.abs(coef) > 1e-14)[0]
    if keep.size == 0:
        return [], []
    coef = coef[: keep[-1] + 1]
    if coef.size < 2:
        return [], []
    rts = nc.chebroots(coef)
    rts = rts[np.abs(rts.imag) < 1e-7]
    rts = np.unique(rts.real)
    rts = rts[(rts > -shrink) & (rts < shrink)]
    e_roots = mid + half * rts
    margin = options.pole_margin
    out = []
    dcoef = nc.chebder(coef)
    for e in e_roots:
        tloc = (e - mid) / half
        gp = nc.chebval(tloc, dcoef) * scale / half
        p_fac = 1.0
        if order_lo:
            p_fac *= (e - lo) ** order_lo
        if order_hi:
            p_fac *= (e - hi) ** order_hi
        if p_fac == 0.0:
            continue
        fprime = gp / p_fac  # g' ~ f' * P at a root of f (f P' term vanishes)
        near_pole = (order_lo and e - lo < margin) or (order_hi and hi - e < margin)
        if not near_pole and abs(fprime) > 0.0:
            # one Newton correction on the true function
            f_val = float(fn_grid(np.asarray([e]))[0])
            step = f_val / fprime
            if abs(step) < 0.05 * (hi - lo):
                e = e - step
        out.append((float(e), float(fprime)))
    return [r for r, _ in out], [d for _, d in out]


def _intervals(e_min, e_max, poles):
    """Pole-free subintervals of (e_min, e_max) with endpoint-pole markers."""
    pts = [p for p in poles if e_min < p < e_max]
    edges = [e_min] + pts + [e_max]
    pole_set = set(pts)
    out = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi - lo > 1e-9:
            out.append((lo, hi, lo in pole_set, hi in pole_set))
    return out


def _degree_for(length, options):
    deg = int(options.grid_per_unit * length / 4.0) + 24
    return max(48, min(options.max_degree, deg))


def _near_pole_probe(fn_grid, p, side, h1=1e-8, h2=4e-8):
    """Root adjacent to a simple pole from a two-point A/(E-p) + C fit.

    Returns the offset of the root from the pole, or None.  Handles level
    shifts far below what interval sampling can resolve (large-separation
    limits, where shifts decay like exp(-d^2)).
    """
    e1, e2 = p + side * h1, p + side * h2
    f1, f2 = (float(v) for v in fn_grid(np.asarray([e1, e2])))
    a_res = (f1 - f2) / (1.0 / (side * h1) - 1.0 / (side * h2))
    c_reg = f1 - a_res / (side * h1)
    if c_reg == 0.0:
        return None
    offset = -a_res / c_reg
    if offset * side > 0 or offset == 0.0:
        # the adjacent root sits on this side only if the offset points here
        return offset if abs(offset) < h1 else None
    return None


def _scan_function(fn_grid, e_min, e_max, pole_orders, options):
    """Roots of fn on (e_min, e_max); ``pole_orders`` maps pole energy -> order."""
    poles = sorted(pole_orders)
    roots = []
    for lo, hi, plo, phi in _intervals(e_min, e_max, poles):
        deg = _degree_for(hi - lo, options)
        rts, _ = _cheb_interval_roots(fn_grid, lo, hi,
                                      pole_orders.get(lo, 0) if plo else 0,
                                      pole_orders.get(hi, 0) if phi else 0,
                                      deg, options)
        for r in rts:
            flags = []
            dist = min(abs(r - p) for p in poles) if len(poles) else math.inf
            if dist < _NEAR_POLE_FLAG_DIST * max(1.0, abs(r)):
                flags.append("near_pole")
            roots.append((r, tuple(flags)))
    # levels shifted by less than the interval resolution collapse onto the
    # pole itself; recover them by the local pole/regular decomposition
    # (valid at simple poles)
    for p in poles:
        if pole_orders.get(p) == 1 and e_min < p < e_max \
                and not any(abs(r - p) < 1e-7 for r, _ in roots):
            for side in (-1.0, 1.0):
                off = _near_pole_probe(fn_grid, p, side)
                if off is not None:
                    roots.append((p + off, ("near_pole",)))
                    break
    return roots


def find_roots(spec: SystemSpec, e_min: float, e_max: float,
               options: RootScanOptions = RootScanOptions()) -> list[SpectralState]:
    """All eigenenergies (roots of det D_N) in [e_min, e_max], sorted.

    Reflection-symmetric pair configurations are scanned per parity factor;
    each factor sees only its own parity's Green poles, which keeps the
    dimer doublet resolvable even when its splitting is below resolution
    (the two members live in different factors).  Roots closer than 1e-8 are
    flagged as a degenerate pair.
    """
    if e_max <= e_min:
        raise SolverError("empty energy window")
    # window edges sitting on a pole would leave an unremovable divergence
    # at an interval endpoint; nudge them inward
    for p in green_pole_energies(e_min - 1.0, e_max + 1.0, "both"):
        if abs(e_min - p) < 1e-9:
            e_min = p + 1e-9
        if abs(e_max - p) < 1e-9:
            e_max = p - 1e-9
    states: list[SpectralState] = []
    d_half = spec.symmetric_pair_half_separation()
    acc = options.accuracy
    if d_half is not None or (spec.n_impurities == 1 and
                              np.linalg.norm(spec.positions_array[0]) < 1e-12):
        if spec.n_impurities == 1:
            invg = spec.inv_gammas[0]

            def fn_even(E_arr):
                return parity_diag_combination("even", 0.0, E_arr, acc) / 2.0 - invg

            parity_fns = [("even", fn_even)]
        else:
            invg = spec.inv_gammas[0]

            def fn_even(E_arr):
                return parity_diag_combination("even", d_half, E_arr, acc) - invg

            def fn_odd(E_arr):
                return parity_diag_combination("odd", d_half, E_arr, acc) - invg

            parity_fns = [("even", fn_even), ("odd", fn_odd)]
        for parity, fn in parity_fns:
            orders = {p: 1 for p in green_pole_energies(e_min, e_max, parity)}
            for r, flags in _scan_function(fn, e_min, e_max, orders, options):
                states.append(SpectralState(energy=r, k=None, parity=parity, flags=flags))
    elif spec.reflection_symmetric() and spec.n_impurities == 2:
        # mirror pair off the z-axis: factorization holds, but parity parts
        # don't reduce to a single closed combination; use generic entries
        pos = spec.positions_array
        invg = spec.inv_gammas[0]
        R = float(np.linalg.norm(pos[0]))

        def make_fn(sign):
            def fn(E_arr):
                diag = _reg_diag_value(R, E_arr, acc)
                off, _ = _offdiag_values(pos[0], pos[1], E_arr, acc)
                return diag + sign * off - invg
            return fn

        orders = {p: 1 for p in green_pole_energies(e_min, e_max, "both")}
        for parity, sign in (("even", 1.0), ("odd", -1.0)):
            for r, flags in _scan_function(make_fn(sign), e_min, e_max, orders, options):
                states.append(SpectralState(energy=r, k=None, parity=parity, flags=flags))
    else:
        # det pole order at a level = rank of the shell residue matrix:
        # for on-axis impurities that is the number of m = 0 states
        orders = {}
        for p in green_pole_energies(e_min, e_max, "both"):
            level = int(round(p - 1.5))
            rank = level // 2 + 1 if spec.is_on_axis() else (level + 1) * (level + 2) // 2
            orders[p] = min(spec.n_impurities, rank)

        def fn(E_arr):
            return _det_tilde_grid(spec, E_arr)

        for r, flags in _scan_function(fn, e_min, e_max, orders, options):
            states.append(SpectralState(energy=r, k=None, parity="none", flags=flags))

    states.sort(key=lambda s: s.energy)
    # flag near-coincident roots (dimer doublets beyond resolution, etc.)
    out = []
    for i, s in enumerate(states):
        close = any(abs(s.energy - states[j].energy) < _DEGENERATE_PAIR_TOL
                    for j in (i - 1, i + 1) if 0 <= j < len(states))
        out.append(replace(s, flags=s.flags + ("degenerate_pair",)) if close else s)
    return out


def solve_state(spec: SystemSpec, e_root: float,
                options: RootScanOptions = RootScanOptions()) -> SpectralState:
    """Channel amplitudes and parity tag for a validated root energy."""
    gt = _gmatrix_tilde(spec, e_root)[:, :, 0]
    n = spec.n_impurities
    if n == 1:
        k = np.array([1.0])
    elif n == 2:
        # ratio rule on the scaled matrix: rows are linearly dependent
        if abs(gt[0, 0]) >= abs(gt[1, 0]):
            k = np.array([-gt[0, 1], gt[0, 0]])
        else:
            k = np.array([gt[1, 1], -gt[1, 0]])
        evals = np.linalg.eigvalsh(gt)
        if np.partition(np.abs(evals), 1)[1] < 1e-8 * max(1.0, np.max(np.abs(evals))):
            w, v = np.linalg.eigh(gt)
            idx = np.argsort(np.abs(w))
            raise DegenerateStateError(
                f"two-dimensional null space at E={e_root}",
                directions=(tuple(v[:, idx[0]]), tuple(v[:, idx[1]])))
    else:
        w, v = np.linalg.eigh(gt)
        idx = np.argsort(np.abs(w))
        if np.abs(w[idx[1]]) < 1e-8 * max(1.0, np.max(np.abs(w))):
            raise DegenerateStateError(
                f"two-dimensional null space at E={e_root}",
                directions=(tuple(v[:, idx[0]]), tuple(v[:, idx[1]])))
        k = v[:, idx[0]]
    k = k / np.linalg.norm(k)
    if k[int(np.argmax(np.abs(k)))] < 0:
        k = -k
    residual = float(np.linalg.norm(gt @ k))
    flags = () if residual < 1e-6 * max(1.0, float(np.max(np.abs(gt)))) else ("large_residual",)
    parity = "none"
    if spec.reflection_symmetric():
        if n == 1:
            parity = "even"
        elif abs(k[0] - k[1]) < 1e-6:
            parity = "even"
        elif abs(k[0] + k[1]) < 1e-6:
            parity = "odd"
    return SpectralState(energy=float(e_root), k=tuple(float(v) for v in k),
                         parity=parity, flags=flags)


def _gmatrix_for_norm(spec: SystemSpec, E: float) -> np.ndarray:
    return _gmatrix_tilde(spec, E)[:, :, 0] + np.diag(spec.inv_gammas)


def normalize(state: SpectralState, spec: SystemSpec, e_step: float = 1e-4) -> SpectralState:
    """Scale the amplitudes so that the wave function has unit norm.

    Uses the bilinear identity int G_E(d_i, r) G_E(d_j, r) d3r =
    -d/dE G_E(d_i, d_j) (spectral representation), with the E-derivative by
    central difference; the step shrinks automatically near Green poles.
    """
    if state.k is None:
        raise SolverError("solve_state must fill the amplitudes before normalize")
    E = state.energy
    poles = green_pole_energies(E - 3.0, E + 3.0, "both")
    if poles.size:
        dist = float(np.min(np.abs(poles - E)))
        if dist < 4.0 * e_step:
            e_step = max(dist / 4.0, 1e-9)
    gp = _gmatrix_for_norm(spec, E + e_step)
    gm = _gmatrix_for_norm(spec, E - e_step)
    b = -(gp - gm) / (2.0 * e_step)
    k = np.asarray(state.k)
    norm2 = float(k @ b @ k)
    if not norm2 > 0.0:
        raise SolverError(
            f"normalization bilinear form non-positive ({norm2}) at E={E}; "
            "the energy step may straddle a pole")
    k_scaled = k / math.sqrt(norm2)
    return replace(state, k=tuple(float(v) for v in k_scaled), norm=1.0)


def wavefunction(state: SpectralState, spec: SystemSpec, r) -> float:
    """Psi(r) = sum_i k_i G(d_i, r) at the state's energy."""
    vals = wavefunction_samples(state, spec, np.asarray(r, dtype=float)[np.newaxis, :])
    return float(vals[0])


def wavefunction_samples(state: SpectralState, spec: SystemSpec, points: np.ndarray,
                         pole_guard: float = 1e-6) -> np.ndarray:
    """Psi on an array of points, shape (m, 3); raises within pole_guard of
    an impurity."""
    if state.k is None:
        raise SolverError("state has no amplitudes; run solve_state first")
    pos = spec.positions_array
    pts = np.asarray(points, dtype=float)
    out = np.zeros(len(pts))
    for i in range(spec.n_impurities):
        dist = np.linalg.norm(pts - pos[i], axis=1)
        if np.any(dist < pole_guard):
            raise PoleError(
                f"wave function diverges at impurity {i}; nearest sample at {dist.min()}",
                where=float(state.energy))
        out += state.k[i] * green_point_batch(pos[i], pts, state.energy)
    return out


def unaffected_levels(spec: SystemSpec, e_min: float, e_max: float):
    """Oscillator levels holding states that vanish at every impurity.

    For impurities on the z-axis these are the m != 0 multiplets (all levels
    N >= 1); for a single impurity at the center every l >= 1 state is
    unaffected as well.  Returns (energy, multiplicity) pairs.
    """
    if not spec.is_on_axis():
        return []
    single_center = (spec.n_impurities == 1
                     and np.linalg.norm(spec.positions_array[0]) < 1e-12)
    out = []
    n_lo = max(0, int(math.ceil(e_min - 1.5)))
    n_hi = int(math.floor(e_max - 1.5))
    for n in range(n_lo, n_hi + 1):
        deg = (n + 1) * (n + 2) // 2
        if single_center:
            mult = deg - (1 if n % 2 == 0 else 0)
        else:
            mult = deg - (n // 2 + 1)  # remove the m = 0 tower
        if mult > 0:
            out.append((n + 1.5, mult))
    return out

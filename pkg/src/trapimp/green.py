"""Green's function of the isotropic 3D harmonic oscillator at energy E.

Oscillator units throughout: lengths in l0 = sqrt(hbar/(m omega)), energies
in hbar*omega.  The closed form lives in prolate-type coordinates (xi, eta)
and confluent hypergeometric functions; a coincidence expansion g0 + g1/dr
covers r' -> r, and a finite limit formula covers the degenerate line
xi = eta (r' close to -r, where the would-be pole cancels exactly).

A truncated spectral sum over oscillator eigenfunctions (with an optional
exactly resummed tail based on the imaginary-time kernel) serves as the
independent test oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy import special as sc

from .errors import DomainError, EvaluationError, PoleError
from .specfn import DEFAULT_ACCURACY, SpecFnAccuracy, kummer_m, tricomi_u

# |xi - eta| below this (relative) threshold switches to the degenerate-line
# evaluation; at the threshold both branches carry ~1e-10 relative error.
_DEGENERACY_THRESHOLD = 1e-6
_POLE_MARGIN = 1e-9
_SQRT_PI = math.sqrt(math.pi)
_PI15 = math.pi ** 1.5


@dataclass(frozen=True)
class ProlateCoords:
    """Symmetric two-point coordinates: xi >= eta >= 0, sign of r.r'."""

    xi: float
    eta: float
    sign_factor: float


@dataclass(frozen=True)
class GreenEval:
    """A Green's-function value plus the evaluation path that produced it."""

    value: float
    branch: str  # full_formula | coincidence_expansion | antipodal_limit
    energy: float


@dataclass(frozen=True)
class CoincidenceExpansion:
    """Leading behavior G -> g0(R) + g1(R)/dr as the two points merge at R."""

    g0: float
    g1: float
    center_R: float


def prolate_coords(r, r_prime) -> ProlateCoords:
    """Coordinates xi, eta and sign(r.r') for the two-point Green's function."""
    r = np.asarray(r, dtype=float)
    rp = np.asarray(r_prime, dtype=float)
    r2 = float(r @ r)
    rp2 = float(rp @ rp)
    dminus = float(np.linalg.norm(r - rp))
    dplus = float(np.linalg.norm(r + rp))
    xi = 0.5 * (r2 + rp2 + dminus * dplus)
    eta = 0.5 * (r2 + rp2 - dminus * dplus)
    dot = float(r @ rp)
    sign = 0.0 if dot == 0.0 else math.copysign(1.0, dot)
    return ProlateCoords(xi=xi, eta=max(eta, 0.0), sign_factor=sign)


def oscillator_levels(e_min: float, e_max: float) -> np.ndarray:
    """Oscillator eigenvalues N + 3/2 inside [e_min, e_max]."""
    n_lo = max(0, int(math.ceil(e_min - 1.5)))
    n_hi = int(math.floor(e_max - 1.5))
    if n_hi < n_lo:
        return np.empty(0)
    return np.arange(n_lo, n_hi + 1) + 1.5


def green_pole_energies(e_min: float, e_max: float, parity: str = "both") -> np.ndarray:
    """Pole energies of the Green's function terms inside a window.

    The even-in-z part carries poles at 3/2 + 2k, the odd part at 5/2 + 2k;
    together these are all oscillator levels.
    """
    levels = oscillator_levels(e_min, e_max)
    if parity == "both":
        return levels
    if parity == "even":
        return levels[np.isclose(np.mod(levels - 1.5, 2.0), 0.0)]
    if parity == "odd":
        return levels[np.isclose(np.mod(levels - 2.5, 2.0), 0.0)]
    raise ValueError(f"parity must be 'even', 'odd' or 'both', got {parity!r}")


def _check_not_pole(E: float, parity: str = "both"):
    poles = green_pole_energies(E - 1.0, E + 1.0, parity)
    if poles.size and np.min(np.abs(poles - E)) < _POLE_MARGIN * max(1.0, abs(E)):
        raise PoleError(f"E={E} is at an oscillator Green's-function pole",
                        where=float(poles[np.argmin(np.abs(poles - E))]))


def lambda_factor(n: int, E) -> float:
    """-(1/2) pi^(-3/2) Gamma(3/4 - E/2); only n = 1 is defined."""
    if n != 1:
        raise DomainError(f"lambda_factor defined for n=1 only, got n={n}")
    arg = 0.75 - np.asarray(E, dtype=float) / 2.0
    if np.any(np.abs(arg - np.round(arg)) < 1e-12) and np.any(np.round(arg) <= 0):
        bad = np.round(arg)
        raise PoleError(f"Gamma pole in lambda_factor at E={E}", where=float(np.atleast_1d(E)[0]))
    out = -0.5 * _PI15 ** -1 * sc.gammasgn(arg) * np.exp(sc.gammaln(arg))
    return out.item() if np.ndim(E) == 0 else out


def _lam_even(E):
    arg = 0.75 - E / 2.0
    return -0.5 / _PI15 * sc.gammasgn(arg) * np.exp(sc.gammaln(arg))


def _lam_even_shift(E):
    # Lambda(1,E) * a1 with a1 = 3/4 - E/2, regrouped through Gamma(a1 + 1)
    arg = 1.75 - E / 2.0
    return -0.5 / _PI15 * sc.gammasgn(arg) * np.exp(sc.gammaln(arg))


def _lam_odd_shift(E):
    # Lambda(1,E+1) * a1' with a1' = 1/4 - E/2; the product is regular at
    # E = 1/2 + 2k where the two factors have cancelling pole/zero.
    arg = 1.25 - E / 2.0
    return -0.5 / _PI15 * sc.gammasgn(arg) * np.exp(sc.gammaln(arg))


def _useq(a1, x, acc):
    """U at the ladder (a1, 3/2), (a1+1, 5/2), (a1+2, 7/2)."""
    return (tricomi_u(a1, 1.5, x, acc),
            tricomi_u(a1 + 1.0, 2.5, x, acc),
            tricomi_u(a1 + 2.0, 3.5, x, acc))


def _mseq(a1, x, acc):
    return (kummer_m(a1, 1.5, x, acc),
            kummer_m(a1 + 1.0, 2.5, x, acc),
            kummer_m(a1 + 2.0, 3.5, x, acc))


def _even_part(E, x, acc):
    """z-even component of the degenerate-line finite part (before e^-x)."""
    a1 = 0.75 - E / 2.0
    u1, u2, u3 = _useq(a1, x, acc)
    m1, m2, m3 = _mseq(a1, x, acc)
    bracket_e = ((4.0 * a1 / 3.0) * u2 * m2 + (a1 + 1.0) * u3 * m1
                 + (4.0 / 15.0) * (a1 + 1.0) * u1 * m3)
    return _lam_even(E) * u1 * m1 - x * x * _lam_even_shift(E) * bracket_e


def _odd_part(E, x, acc):
    """z-odd component of the degenerate-line finite part (before e^-x)."""
    a1p = 0.25 - E / 2.0
    v1, v2, v3 = _useq(a1p, x, acc)
    n1, n2, n3 = _mseq(a1p, x, acc)
    lam_os = _lam_odd_shift(E)
    bracket_o = ((4.0 * a1p / 3.0) * v2 * n2 + (a1p + 1.0) * v3 * n1
                 + (4.0 / 15.0) * (a1p + 1.0) * v1 * n3)
    return x * (lam_os * (v2 * n1 - (2.0 / 3.0) * v1 * n2) - x * lam_os * bracket_o)


def _finite_part(E, x, sign, acc):
    """Finite part of e^(xi+eta)/2 G on the degenerate line xi = eta = x.

    With sign = +1 this is the coincidence-expansion g0 (times e^x); with
    sign = -1 it is the full antipodal value (the 1/(xi-eta) pole cancels).
    Vectorized over E at scalar x > 0.
    """
    return _even_part(E, x, acc) + sign * _odd_part(E, x, acc)


def _g1_factor(E, x, sign, acc):
    """Pole coefficient g1 of the coincidence expansion, from U*M products.

    Analytically equal to -(1 + sign)/(4 pi) by the M/U Wronskian; computed
    from the products so it doubles as a consistency check of the special
    functions.
    """
    a1 = 0.75 - E / 2.0
    a1p = 0.25 - E / 2.0
    u1, u2, _ = _useq(a1, x, acc)
    m1, m2, _ = _mseq(a1, x, acc)
    v1, v2, _ = _useq(a1p, x, acc)
    n1, n2, _ = _mseq(a1p, x, acc)
    x32 = x ** 1.5
    even = _lam_even_shift(E) * x32 * ((2.0 / 3.0) * u1 * m2 + u2 * m1)
    odd = _lam_odd_shift(E) * x32 * ((2.0 / 3.0) * v1 * n2 + v2 * n1)
    return np.exp(-x) * (even + sign * odd)


def _center_reg_diag(E):
    """Regular part of G at coincidence in the trap center: closed Gamma form."""
    return (sc.gammasgn(0.75 - E / 2.0) * np.exp(sc.gammaln(0.75 - E / 2.0))
            * sc.rgamma(0.25 - E / 2.0) / math.pi)


def green_expansion(R: float, E, sign_factor: float = 1.0,
                    acc: SpecFnAccuracy = DEFAULT_ACCURACY) -> CoincidenceExpansion:
    """Coincidence expansion coefficients g0, g1 at mean position R.

    For the diagonal of the impurity matrix use sign_factor = +1 (two merging
    points away from the origin have r.r' > 0).
    """
    if R < 0:
        raise DomainError("R must be nonnegative")
    Ef = float(E)
    _check_not_pole(Ef)
    if R == 0.0:
        g0 = float(_center_reg_diag(np.asarray(Ef)))
        g1 = -(1.0 + sign_factor) / (4.0 * math.pi)
        return CoincidenceExpansion(g0=g0, g1=g1, center_R=0.0)
    x = R * R
    g0 = float(math.exp(-x) * _finite_part(np.asarray(Ef), x, sign_factor, acc))
    g1 = float(_g1_factor(np.asarray(Ef), x, sign_factor, acc))
    return CoincidenceExpansion(g0=g0, g1=g1, center_R=R)


def green_reg_diag(d, E, acc: SpecFnAccuracy = DEFAULT_ACCURACY) -> float:
    """Regularized diagonal G_r(d, d; E): the finite part of G at coincidence."""
    d = np.asarray(d, dtype=float)
    Ef = float(E)
    R = float(np.linalg.norm(d))
    # at the trap center only the s-wave (even) levels are poles
    _check_not_pole(Ef, "even" if R < 1e-12 else "both")
    return _reg_diag_value(R, np.asarray(Ef), acc)


def _reg_diag_value(R, E_arr, acc):
    """Vector-over-E regularized diagonal at radius R (pole-free E assumed)."""
    if R < 1e-12:
        out = _center_reg_diag(E_arr)
    else:
        x = R * R
        out = np.exp(-x) * _finite_part(E_arr, x, 1.0, acc)
    return out.item() if np.ndim(out) == 0 else out


def _offdiag_values(r, rp, E_arr, acc):
    """Vector-over-E G(r, r'; E) for fixed distinct points (pole-free E)."""
    pc = prolate_coords(r, rp)
    xi, eta, s = pc.xi, pc.eta, pc.sign_factor
    eps = xi - eta
    if eps <= _DEGENERACY_THRESHOLD * max(xi, 1.0):
        xbar = 0.5 * (xi + eta)
        if s > -0.5:  # sign 0 or +1 on the degenerate line: not handled here
            raise EvaluationError(
                f"degenerate xi=eta evaluation with sign={s} at xi={xi}: "
                "points coincide or sit at the origin")
        branch = "antipodal_limit"
        vals = np.exp(-xbar) * _finite_part(E_arr, xbar, -1.0, acc)
        return vals, branch
    branch = "full_formula"
    a1 = 0.75 - E_arr / 2.0
    a1p = 0.25 - E_arr / 2.0
    u1 = tricomi_u(a1, 1.5, xi, acc)
    u2 = tricomi_u(a1 + 1.0, 2.5, xi, acc)
    m1 = kummer_m(a1, 1.5, eta, acc)
    m2 = kummer_m(a1 + 1.0, 2.5, eta, acc)
    even = (_lam_even(E_arr) * u1 * m1
            + (2.0 * xi * eta / eps) * _lam_even_shift(E_arr)
            * ((2.0 / 3.0) * u1 * m2 + u2 * m1))
    total = even
    if s != 0.0 and eta > 0.0:
        v1 = tricomi_u(a1p, 1.5, xi, acc)
        v2 = tricomi_u(a1p + 1.0, 2.5, xi, acc)
        n1 = kummer_m(a1p, 1.5, eta, acc)
        n2 = kummer_m(a1p + 1.0, 2.5, eta, acc)
        odd = ((2.0 * math.sqrt(xi * eta) / eps) * _lam_odd_shift(E_arr)
               * ((2.0 / 3.0) * eta * v1 * n2 + xi * v2 * n1))
        total = even + s * odd
    return np.exp(-0.5 * (xi + eta)) * total, branch


def green_ho(r, r_prime, E, acc: SpecFnAccuracy = DEFAULT_ACCURACY) -> GreenEval:
    """G(r, r'; E) of the isotropic trap, with automatic branch selection.

    Near coincidence the value is assembled from the pole term plus the
    finite part (error O(|r - r'|)); exactly coincident points raise.
    On the antipodal line the even/odd parts cancel analytically; the
    computed value carries absolute error ~1e-12 * (xi/e)^o(1), so its
    relative accuracy degrades once G itself is exponentially small
    (harmless where it enters: additively against O(1) diagonal terms).
    """
    Ef = float(E)
    pc = prolate_coords(r, r_prime)
    _check_not_pole(Ef, "even")
    if pc.sign_factor != 0.0 and pc.eta > 0.0:
        _check_not_pole(Ef, "odd")
    eps = pc.xi - pc.eta
    if eps <= _DEGENERACY_THRESHOLD * max(pc.xi, 1.0) and pc.sign_factor > 0.0:
        if eps == 0.0:
            raise PoleError("G diverges at coincident points", where=Ef)
        xbar = 0.5 * (pc.xi + pc.eta)
        pole = -2.0 * math.sqrt(xbar) / (math.pi * eps)
        fin = float(math.exp(-xbar) * _finite_part(np.asarray(Ef), xbar, 1.0, acc))
        return GreenEval(value=pole + fin, branch="coincidence_expansion", energy=Ef)
    vals, branch = _offdiag_values(np.asarray(r, dtype=float),
                                   np.asarray(r_prime, dtype=float),
                                   np.asarray(Ef), acc)
    return GreenEval(value=float(np.asarray(vals).reshape(())), branch=branch, energy=Ef)


# ----------------------------------------------------------------------------
# Spectral-sum oracle


def _radial_norms(n, l):
    # sqrt(2 n! / Gamma(n + l + 3/2))
    return np.exp(0.5 * (math.log(2.0) + sc.gammaln(n + 1.0) - sc.gammaln(n + l + 1.5)))


def _shell_kernels(r, rp, n_max):
    """h_N(r, r') = sum over the degenerate oscillator shell N of phi* phi.

    Uses the radial * Legendre decomposition; returns an array over
    N = 0..n_max.
    """
    r = np.asarray(r, dtype=float)
    rp = np.asarray(rp, dtype=float)
    ra = float(np.linalg.norm(r))
    rb = float(np.linalg.norm(rp))
    if ra > 0 and rb > 0:
        cos_t = float(r @ rp) / (ra * rb)
        cos_t = min(1.0, max(-1.0, cos_t))
    else:
        cos_t = 1.0
    out = np.zeros(n_max + 1)
    for l in range(0, n_max + 1):
        n_r_max = (n_max - l) // 2
        n = np.arange(n_r_max + 1)
        norms = _radial_norms(n, l)
        la = sc.eval_genlaguerre(n, l + 0.5, ra * ra)
        lb = sc.eval_genlaguerre(n, l + 0.5, rb * rb)
        rad = (norms ** 2) * (ra ** l) * (rb ** l) * math.exp(-0.5 * (ra * ra + rb * rb)) * la * lb
        ang = (2 * l + 1) / (4.0 * math.pi) * sc.eval_legendre(l, cos_t)
        out[l + 2 * n] += rad * ang
    return out


def _mehler_kernel(t, r, rp):
    """Imaginary-time oscillator kernel <r|e^-Ht|r'>."""
    r = np.asarray(r, dtype=float)
    rp = np.asarray(rp, dtype=float)
    sh = math.sinh(t)
    ch = math.cosh(t)
    q = (float(r @ r + rp @ rp) * ch - 2.0 * float(r @ rp)) / (2.0 * sh)
    return (2.0 * math.pi * sh) ** -1.5 * math.exp(-q)


def green_spectral_oracle(r, r_prime, E: float, n_max: int = 60, tail: bool = False) -> float:
    """Truncated eigenbasis sum for G(r, r'; E); test oracle only.

    With ``tail=True`` the N > n_max remainder is added exactly through the
    imaginary-time kernel (valid for E < n_max + 5/2), removing the slow
    algebraic truncation error.  Convergence of the bare sum is algebraic
    and oscillatory; use ``spectral_truncation_estimate`` for a bound.
    """
    E = float(E)
    levels = np.arange(n_max + 1) + 1.5
    if np.min(np.abs(levels - E)) < 1e-9:
        raise PoleError("E coincides with an included oscillator level", where=E)
    h = _shell_kernels(r, r_prime, n_max)
    total = float(np.sum(h / (E - levels)))
    if not tail:
        return total
    if E >= n_max + 2.0:
        raise DomainError("tail resummation requires E < n_max + 2")
    # Beyond t_max the integrand is below 1e-16 of its scale (it decays like
    # exp(-(n_max + 5/2 - E) t)); stopping there also keeps the subtraction
    # form free of exponential roundoff amplification.
    t_max = 37.0 / (n_max + 2.5 - E)

    def integrand(t):
        if t < 1e-300:
            return -float(np.sum(h))
        partial = float(np.sum(h * np.exp(-levels * t)))
        return math.exp(E * t) * (_mehler_kernel(t, r, r_prime) - partial)

    tail_val, _ = integrate.quad(integrand, 0.0, t_max, epsabs=1e-11, epsrel=1e-11, limit=300)
    return total - tail_val


def spectral_truncation_estimate(r, r_prime, E: float, n_max: int) -> float:
    """Richardson-style truncation estimate |S(n_max) - S(n_max/2)|."""
    full = green_spectral_oracle(r, r_prime, E, n_max)
    half = green_spectral_oracle(r, r_prime, E, max(2, n_max // 2))
    return abs(full - half)


def green_reg_diag_oracle(d, E: float, n_max: int = 48) -> float:
    """Spectral-route regularized diagonal with explicit pole subtraction.

    The coincidence pole -1/(2 pi dr) is exactly the imaginary-time integral
    of the free kernel (2 pi t)^(-3/2); subtracting it inside the integral
    leaves the regular part g0 without any small-dr extrapolation.
    """
    d = np.asarray(d, dtype=float)
    E = float(E)
    if E >= n_max + 2.0:
        raise DomainError("regularized-diagonal oracle requires E < n_max + 2")
    levels = np.arange(n_max + 1) + 1.5
    h = _shell_kernels(d, d, n_max)
    total = float(np.sum(h / (E - levels)))
    t_max = 37.0 / (n_max + 2.5 - E)

    dd = float(d @ d)

    def integrand(tau):
        # substitution t = tau^2 flattens the t^(-1/2) endpoint behavior
        t = tau * tau
        if t < 1e-300:
            return 0.0
        partial = float(np.sum(h * np.exp(-levels * t)))
        free = (2.0 * math.pi * t) ** -1.5
        if t < 0.5:
            # stable form: e^Et K - free = free * expm1(E t + log(K/free))
            log_ratio = -1.5 * math.log1p((math.sinh(t) - t) / t) - dd * math.tanh(0.5 * t)
            val = free * math.expm1(E * t + log_ratio) - math.exp(E * t) * partial
        else:
            val = math.exp(E * t) * (_mehler_kernel(t, d, d) - partial) - free
        return 2.0 * tau * val

    tail_val, _ = integrate.quad(integrand, 0.0, math.sqrt(t_max),
                                 epsabs=1e-11, epsrel=3e-11, limit=300)
    # analytic remainder of the subtracted free kernel beyond t_max
    free_tail = (2.0 * math.pi) ** -1.5 * 2.0 / math.sqrt(t_max)
    return total - tail_val + free_tail


def parity_diag_combination(parity: str, R: float, E_arr,
                            acc: SpecFnAccuracy = DEFAULT_ACCURACY):
    """G_r(d, d; E) + p G(d, -d; E) for an on-axis antipodal pair at |z| = R.

    For such pairs the regularized diagonal and the antipodal off-diagonal
    share their even/odd building blocks, so the parity combination
    (p = +1 even, p = -1 odd) reduces to twice a single part: this is exact
    and free of the even/odd cancellation, with poles only at the matching
    parity's oscillator levels.  Vectorized over E.
    """
    E_arr = np.asarray(E_arr, dtype=float)
    x = R * R
    if parity == "even":
        if R < 1e-12:
            out = 2.0 * _center_reg_diag(E_arr)
        else:
            out = 2.0 * np.exp(-x) * _even_part(E_arr, x, acc)
    elif parity == "odd":
        if R < 1e-12:
            raise DomainError("odd parity combination undefined at the trap center")
        out = 2.0 * np.exp(-x) * _odd_part(E_arr, x, acc)
    else:
        raise ValueError(f"parity must be 'even' or 'odd', got {parity!r}")
    return out


def green_point_batch(center, points, E: float,
                      acc: SpecFnAccuracy = DEFAULT_ACCURACY) -> np.ndarray:
    """G(center, p; E) for an array of points p, shape (m, 3).

    Vector path for wave-function sampling: the hypergeometric parameters are
    fixed by E, so all points evaluate in a handful of array calls.  Points
    exactly coincident with ``center`` produce inf.
    """
    c = np.asarray(center, dtype=float)
    pts = np.asarray(points, dtype=float)
    E = float(E)
    _check_not_pole(E)
    r2 = float(c @ c)
    p2 = np.einsum("ij,ij->i", pts, pts)
    dminus = np.linalg.norm(pts - c, axis=1)
    dplus = np.linalg.norm(pts + c, axis=1)
    xi = 0.5 * (r2 + p2 + dminus * dplus)
    eta = np.maximum(0.5 * (r2 + p2 - dminus * dplus), 0.0)
    dots = pts @ c
    sgn = np.sign(dots)
    eps = xi - eta
    out = np.empty(len(pts))
    deg = eps <= _DEGENERACY_THRESHOLD * np.maximum(xi, 1.0)
    e_arr = np.asarray(E)
    a1 = 0.75 - E / 2.0
    a1p = 0.25 - E / 2.0
    if np.any(deg):
        xbar = 0.5 * (xi[deg] + eta[deg])
        fin_even = _even_part(e_arr, xbar, acc)
        fin_odd = _odd_part(e_arr, xbar, acc)
        with np.errstate(divide="ignore"):
            pole = -(1.0 + sgn[deg]) * np.sqrt(xbar) / (math.pi * eps[deg])
        out[deg] = pole + np.exp(-xbar) * (fin_even + sgn[deg] * fin_odd)
    full = ~deg
    if np.any(full):
        xif, etaf, sf, epsf = xi[full], eta[full], sgn[full], eps[full]
        u1 = tricomi_u(a1, 1.5, xif, acc)
        u2 = tricomi_u(a1 + 1.0, 2.5, xif, acc)
        m1 = kummer_m(a1, 1.5, etaf, acc)
        m2 = kummer_m(a1 + 1.0, 2.5, etaf, acc)
        even = (_lam_even(e_arr) * u1 * m1
                + (2.0 * xif * etaf / epsf) * _lam_even_shift(e_arr)
                * ((2.0 / 3.0) * u1 * m2 + u2 * m1))
        total = even
        odd_mask = (sf != 0.0) & (etaf > 0.0)
        if np.any(odd_mask):
            v1 = tricomi_u(a1p, 1.5, xif, acc)
            v2 = tricomi_u(a1p + 1.0, 2.5, xif, acc)
            n1 = kummer_m(a1p, 1.5, etaf, acc)
            n2 = kummer_m(a1p + 1.0, 2.5, etaf, acc)
            odd = ((2.0 * np.sqrt(xif * etaf) / epsf) * _lam_odd_shift(e_arr)
                   * ((2.0 / 3.0) * etaf * v1 * n2 + xif * v2 * n1))
            total = even + np.where(odd_mask, sf * odd, 0.0)
        out[full] = np.exp(-0.5 * (xif + etaf)) * total
    return out

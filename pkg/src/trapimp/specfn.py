"""Confluent hypergeometric functions M (Kummer) and U (Tricomi), signed log-gamma.

Tuned for the parameter ranges the oscillator Green's function needs:
half-integer second parameter b (3/2, 5/2, 7/2 internally), real first
parameter a, argument x >= 0.  All evaluators broadcast over ``a`` and ``x``
(``b`` stays scalar); scalars in give floats out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special as sc

from .errors import DomainError, EvaluationError, PoleError

_INT_TOL = 1e-12
# Below this argument the two-term connection formula for U keeps >= 11
# significant digits in double precision (cancellation grows like e^x).
_U_CONNECTION_MAX = 12.0
# Double-exponential nodes for the U integral representation.
_DE_HALF_RANGE = 5.3
_DE_POINTS = 201


@dataclass(frozen=True)
class SpecFnAccuracy:
    """Accuracy knobs for the series/asymptotic evaluators."""

    rel_tol: float = 1e-10
    max_terms: int = 10_000
    large_x_switch: float = 30.0

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.max_terms < 1:
            raise ValueError("max_terms must be >= 1")
        if not self.large_x_switch > 0:
            raise ValueError("large_x_switch must be positive")


DEFAULT_ACCURACY = SpecFnAccuracy()


def _is_nonpositive_integer(x) -> bool:
    return x <= 0.5 and abs(x - round(x)) < _INT_TOL


def log_gamma(x: float) -> tuple[float, float]:
    """Return (log|Gamma(x)|, sign of Gamma(x)).

    Raises PoleError at nonpositive integers instead of returning inf, so
    downstream root scans can bracket around the pole.
    """
    if _is_nonpositive_integer(x):
        raise PoleError(f"Gamma pole at x={x}", where=float(round(x)))
    return math.lgamma(x), float(sc.gammasgn(x))


def gamma(x: float) -> float:
    """Gamma(x) via exponentiated log_gamma with sign tracking."""
    lg, sign = log_gamma(x)
    return sign * math.exp(lg)


def _as_batch(a, x):
    a_arr = np.asarray(a, dtype=float)
    x_arr = np.asarray(x, dtype=float)
    scalar = a_arr.ndim == 0 and x_arr.ndim == 0
    a_b, x_b = np.broadcast_arrays(a_arr, x_arr)
    return a_b.astype(float), x_b.astype(float), scalar


def _m_series(a, b, x, acc: SpecFnAccuracy):
    """Ascending Kummer series with compensated (Kahan) summation.

    Safe for x >= 0 in the ranges used here: once k exceeds |a| the terms
    are single-signed and dominate any early alternating part, so there is
    no catastrophic cancellation.
    """
    term = np.ones_like(a)
    total = np.ones_like(a)
    comp = np.zeros_like(a)
    xmax = float(np.max(x, initial=0.0))
    for k in range(1, acc.max_terms + 1):
        term = term * ((a + (k - 1)) / (b + (k - 1))) * (x / k)
        y = term - comp
        t = total + y
        comp = (t - total) - y
        total = t
        if k > xmax + 4:
            scale = np.maximum(np.abs(total), 1e-300)
            if np.all(np.abs(term) <= 0.1 * acc.rel_tol * scale):
                return total
    raise EvaluationError(
        f"Kummer series did not converge within {acc.max_terms} terms "
        f"(b={b}, max x={xmax})"
    )


def _asym_2f0(p, q, x, acc: SpecFnAccuracy):
    """Asymptotic sum_s (p)_s (q)_s / (s! (-x)^s), truncated at its smallest term."""
    term = np.ones_like(p)
    total = np.ones_like(p)
    best = np.abs(term)
    active = np.ones(term.shape, dtype=bool)
    nmax = max(12, int(2.5 * float(np.max(np.abs(x), initial=1.0))) + 10)
    for s in range(nmax):
        term = term * (p + s) * (q + s) / (-(x) * (s + 1))
        mag = np.abs(term)
        # stop adding once terms start growing (divergent tail)
        active = active & (mag <= best)
        total = np.where(active, total + term, total)
        best = np.where(active, np.minimum(best, mag), best)
        scale = np.maximum(np.abs(total), 1e-300)
        if not np.any(active) or np.all(~active | (mag <= 0.05 * acc.rel_tol * scale)):
            break
    return total


def _m_asym_threshold(a, b, acc: SpecFnAccuracy):
    """Smallest x where the large-x expansion of M reaches rel_tol.

    The optimal truncation floor behaves like e^-x * x^(|b-a|+|1-a|); solve
    x - s*log(x) = tol_digits by fixed-point iteration (conservative).
    """
    s = np.abs(b - a) + np.abs(1.0 - a)
    goal = -math.log(0.02 * acc.rel_tol)
    x = np.full_like(np.asarray(a, dtype=float), max(30.0, goal))
    for _ in range(6):
        x = goal + s * np.log(np.maximum(x, 3.0))
    return np.maximum(x, acc.large_x_switch)


def _m_asymptotic(a, b, x, acc: SpecFnAccuracy):
    """Large-x Kummer function via the e^x-dominant expansion.

    Keeps the algebraically small companion term (with the real-axis
    cos(pi a) weight) so parameters near the Gamma poles of the dominant
    prefactor stay accurate.
    """
    s1 = _asym_2f0(b - a, 1.0 - a, -x, acc)  # terms in +1/x
    e1 = np.exp(x + (a - b) * np.log(x)) * sc.rgamma(a) * s1
    s2 = _asym_2f0(a, a - b + 1.0, x, acc)
    e2 = np.cos(np.pi * a) * np.exp(-a * np.log(x)) * sc.rgamma(b - a) * s2
    return math.gamma(b) * (e1 + e2)


def kummer_m(a, b, x, acc: SpecFnAccuracy = DEFAULT_ACCURACY):
    """Kummer's confluent hypergeometric function M(a, b, x) for x >= 0."""
    if _is_nonpositive_integer(b):
        raise PoleError(f"M undefined for nonpositive integer b={b}", where=b)
    a_b, x_b, scalar = _as_batch(a, x)
    if np.any(x_b < 0):
        raise DomainError("kummer_m requires x >= 0")
    out = np.empty_like(a_b)
    lo = x_b <= _m_asym_threshold(a_b, b, acc)
    if np.any(lo):
        out[lo] = _m_series(a_b[lo], b, x_b[lo], acc)
    if np.any(~lo):
        out[~lo] = _m_asymptotic(a_b[~lo], b, x_b[~lo], acc)
    return out.item() if scalar else out


def _u_connection(a, b, x, acc: SpecFnAccuracy):
    """U from the Gamma-prefactored two-M connection formula (non-integer b)."""
    c1 = math.gamma(1.0 - b) * sc.rgamma(a - b + 1.0)
    c2 = math.gamma(b - 1.0) * sc.rgamma(a)
    m1 = _m_series(a, b, x, acc)
    m2 = _m_series(a - b + 1.0, 2.0 - b, x, acc)
    return c1 * m1 + c2 * np.exp((1.0 - b) * np.log(x)) * m2


def _de_nodes(points, half_range):
    u = np.linspace(-half_range, half_range, points)
    h = u[1] - u[0]
    s = np.exp(0.5 * np.pi * np.sinh(u))
    logw = np.log(0.5 * np.pi * h * np.cosh(u)) + np.log(s)
    return s, logw


_DE_S, _DE_LOGW = _de_nodes(_DE_POINTS, _DE_HALF_RANGE)
_DE_S_FINE, _DE_LOGW_FINE = _de_nodes(501, 5.6)


def _u_integral(a, b, x):
    """U(a,b,x) = Gamma(a)^-1 x^-a int_0^inf e^-s s^(a-1) (1+s/x)^(b-a-1) ds.

    Requires a > 0.  The integrand is positive, so the double-exponential
    sum has no cancellation; accuracy is set by the node density alone.
    The integrand bump near s = a narrows relative to the node spacing for
    large a, hence the finer rule beyond a = 11.
    """
    nodes, logw = (_DE_S, _DE_LOGW) if float(np.max(a)) <= 11.0 else (_DE_S_FINE, _DE_LOGW_FINE)
    a_col = a[..., None]
    x_col = x[..., None]
    logf = -nodes + (a_col - 1.0) * np.log(nodes) + (b - a_col - 1.0) * np.log1p(nodes / x_col)
    total = np.exp(logf + logw).sum(axis=-1)
    return total * np.exp(-a * np.log(x) - sc.gammaln(a))


def _u_recurrence_down(a, b, x, acc: SpecFnAccuracy):
    """U for small or negative a outside the connection-formula window.

    Evaluate the integral representation at raised parameters a+K, a+K+1
    (K chosen so both exceed 1) and recur downward in a, the stable
    direction for U.
    """
    amin = float(np.min(a))
    k_steps = max(0, int(math.ceil(1.25 - amin)))
    ah = a + k_steps
    u_hi = _u_integral(ah + 1.0, b, x)
    u_lo = _u_integral(ah, b, x)
    for _ in range(k_steps):
        u_hi, u_lo = u_lo, (2.0 * ah - b + x) * u_lo - ah * (ah - b + 1.0) * u_hi
        ah = ah - 1.0
    return u_lo


def tricomi_u(a, b, x, acc: SpecFnAccuracy = DEFAULT_ACCURACY):
    """Tricomi's confluent hypergeometric function U(a, b, x) for x > 0.

    Uses the two-M connection formula at small x (safe for half-integer b)
    and the Laplace integral representation with downward a-recurrence
    beyond, where the connection formula would cancel catastrophically.
    """
    if abs(b - round(b)) < _INT_TOL:
        raise EvaluationError(f"integer b={b} not supported (connection formula degenerates)")
    a_b, x_b, scalar = _as_batch(a, x)
    if np.any(x_b <= 0):
        raise DomainError("tricomi_u requires x > 0 (U is singular at the origin for b > 1)")
    out = np.empty_like(a_b)
    direct = a_b >= 0.25  # integrand tail controlled for all x
    conn = ~direct & (x_b < _U_CONNECTION_MAX)
    rec = ~(direct | conn)
    if np.any(direct):
        out[direct] = _u_integral(a_b[direct], b, x_b[direct])
    if np.any(conn):
        out[conn] = _u_connection(a_b[conn], b, x_b[conn], acc)
    if np.any(rec):
        out[rec] = _u_recurrence_down(a_b[rec], b, x_b[rec], acc)
    return out.item() if scalar else out


def f_shorthand(kind: str, n: int, E, x, acc: SpecFnAccuracy = DEFAULT_ACCURACY):
    """F((4n-1)/4 - E/2, (2n+1)/2, x) with F = U or M, n in {1, 2, 3}."""
    if n not in (1, 2, 3):
        raise DomainError(f"n must be 1, 2 or 3, got {n}")
    a = (4 * n - 1) / 4.0 - np.asarray(E, dtype=float) / 2.0
    b = (2 * n + 1) / 2.0
    if kind == "M":
        return kummer_m(a, b, x, acc)
    if kind == "U":
        return tricomi_u(a, b, x, acc)
    raise DomainError(f"kind must be 'U' or 'M', got {kind!r}")

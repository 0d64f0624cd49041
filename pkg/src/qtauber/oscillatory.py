"""Fourier coefficients of piecewise polynomials and boundary-function quadrature.

For a piecewise polynomial ``f`` the integral of ``f(theta) e^{i n theta}``
is a finite sum over breakpoints: integrating each piece by parts until the
polynomial is exhausted and collecting endpoint terms gives

    -sum_b e^{i n b} sum_j (-1)^j [f^(j)](b) / (i n)^(j+1)

where ``[f^(j)](b)`` is the jump of the j-th derivative at ``b``.  The jumps
are exact rationals; only the exponentials are evaluated in floating point
(80-bit long double).
"""

from __future__ import annotations

import csv
import heapq
import io
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import gmpy2
import numpy as np

from . import piecewise_poly as pp
from .mollifier import Mollifier
from .piecewise_poly import PiecewisePolynomial, Rational, as_rational

LD = np.longdouble
CLD = np.clongdouble
PI_LD = LD("3.14159265358979323846264338327950288")
TWO_PI_LD = 2 * PI_LD


class InvalidEpsilon(ValueError):
    pass


def to_longdouble(q) -> np.longdouble:
    """Round an exact rational to long double (via a 24-digit decimal)."""
    digits, exp, _ = gmpy2.digits(gmpy2.mpfr(as_rational(q), 96), 10, 24)
    if digits.startswith("-"):
        return -LD(f"0.{digits[1:]}e{exp}")
    return LD(f"0.{digits}e{exp}")


# i^-(j+1) for j mod 4
_I_POW = (-1j, -1.0 + 0j, 1j, 1.0 + 0j)


@dataclass(frozen=True)
class _BreakpointTerms:
    points: np.ndarray  # long double breakpoints
    coeffs: np.ndarray  # complex long double, shape (points, J)
    mass: Rational


def _terms(f: PiecewisePolynomial) -> _BreakpointTerms:
    jumps = pp.jump_jets(f)
    width = max((len(j) for _, j in jumps), default=0)
    coeffs = np.zeros((len(jumps), width), dtype=CLD)
    for r, (_, jump) in enumerate(jumps):
        for j, d in enumerate(pp.taylor_to_derivatives(jump)):
            if d == 0:
                continue
            a = -(-1) ** j * d
            coeffs[r, j] = CLD(_I_POW[j % 4]) * to_longdouble(a)
    pts = np.array([to_longdouble(b) for b, _ in jumps], dtype=LD)
    return _BreakpointTerms(pts, coeffs, pp.integral(f))


def _clip(f: PiecewisePolynomial, lo, hi) -> PiecewisePolynomial:
    if lo is None and hi is None:
        return f
    if f.is_zero:
        return f
    a, b = f.hull
    lo = a if lo is None else as_rational(lo)
    hi = b if hi is None else as_rational(hi)
    if lo <= a and hi >= b:
        return f
    return pp.restrict(f, lo, hi)


#: below this value of |n| * (piece width) a piece is integrated by its Taylor series
TAYLOR_SWITCH = 2.0
_TAYLOR_TERMS = 36


@dataclass(frozen=True)
class _PieceTables:
    left: np.ndarray  # long double left endpoints
    width: np.ndarray  # long double widths
    scaled_moments: np.ndarray  # int_0^w p(s) s^k ds / w^k, shape (pieces, K)
    ends: np.ndarray  # complex coefficients of the by-parts sum at both ends, shape (pieces, 2, J)


def _pieces(f: PiecewisePolynomial) -> _PieceTables:
    P = len(f.pieces)
    J = f.degree + 1
    mom = np.zeros((P, _TAYLOR_TERMS), dtype=LD)
    ends = np.zeros((P, 2, J), dtype=CLD)
    for i, c in enumerate(f.pieces):
        w = f.width(i)
        for k in range(_TAYLOR_TERMS):
            mk = sum((a * w ** (d + 1) / (d + k + 1) for d, a in enumerate(c)), as_rational(0))
            mom[i, k] = to_longdouble(mk)
        for e, at in enumerate((as_rational(0), w)):
            jet = pp.taylor_shift(c, at) if at else tuple(c)
            for j, d in enumerate(pp.taylor_to_derivatives(jet)):
                if d:
                    # sign (-1)^j, the factor i^-(j+1), and the endpoint sign
                    ends[i, e, j] = CLD(_I_POW[j % 4]) * to_longdouble((-1) ** j * d * (1 if e else -1))
    left = np.array([to_longdouble(b) for b in f.breakpoints[:-1]], dtype=LD)
    width = np.array([to_longdouble(f.width(i)) for i in range(P)], dtype=LD)
    return _PieceTables(left, width, mom, ends)


def _per_piece(t: _PieceTables, n_ld: np.ndarray) -> np.ndarray:
    """Sum of piece integrals: Taylor series on narrow pieces, by parts on wide ones."""
    acc = np.zeros(n_ld.shape, dtype=CLD)
    u = 1 / n_ld
    fact = np.array([math.factorial(k) for k in range(_TAYLOR_TERMS)], dtype=LD)
    for i in range(t.left.size):
        w = t.width[i]
        x = n_ld * w
        narrow = np.abs(x) < TAYLOR_SWITCH
        val = np.zeros(n_ld.shape, dtype=CLD)
        if np.any(narrow):
            ix = (1j * x[narrow]).astype(CLD)
            s = np.zeros(ix.shape, dtype=CLD)
            for k in range(_TAYLOR_TERMS - 1, -1, -1):
                s = s * ix + t.scaled_moments[i, k] / fact[k]
            val[narrow] = s
        wide = ~narrow
        if np.any(wide):
            uw = u[wide]
            for e, off in enumerate((LD(0), w)):
                c = t.ends[i, e]
                s = np.zeros(uw.shape, dtype=CLD)
                for j in range(c.size - 1, -1, -1):
                    s = (s + c[j]) * uw
                ph = n_ld[wide] * off
                val[wide] += (np.cos(ph) + 1j * np.sin(ph)).astype(CLD) * s
        ph = n_ld * t.left[i]
        acc += (np.cos(ph) + 1j * np.sin(ph)).astype(CLD) * val
    return acc


def oscillatory_integrals(f: PiecewisePolynomial, ns: Iterable[int], lo=None, hi=None) -> np.ndarray:
    """``int_lo^hi f(theta) e^{i n theta} dtheta`` for every ``n`` (long double complex).

    Frequencies with ``|n| * w`` below :data:`TAYLOR_SWITCH` for the narrowest
    piece width ``w`` are summed piece by piece, because the jump expansion
    cancels catastrophically there; all others use the jump expansion.
    """
    g = _clip(f, lo, hi)
    ns = np.asarray(list(ns), dtype=np.int64)
    out = np.zeros(ns.shape, dtype=CLD)
    if g.is_zero or ns.size == 0:
        return out
    zero = ns == 0
    w_min = min(g.width(i) for i in range(len(g.pieces)))
    low = ~zero & (np.abs(ns) * float(w_min) < TAYLOR_SWITCH)
    high = ~zero & ~low
    if np.any(zero):
        out[zero] = CLD(to_longdouble(pp.integral(g)))
    if np.any(low):
        out[low] = _per_piece(_pieces(g), ns[low].astype(LD))
    if not np.any(high):
        return out
    t = _terms(g)
    nz = ns[high]
    n_ld = nz.astype(LD)
    u = 1 / n_ld
    acc = np.zeros(nz.shape, dtype=CLD)
    for r in range(t.points.size):
        c = t.coeffs[r]
        s = np.zeros(nz.shape, dtype=CLD)
        for j in range(c.size - 1, -1, -1):
            s = (s + c[j]) * u
        phase = n_ld * t.points[r]
        acc += (np.cos(phase) + 1j * np.sin(phase)).astype(CLD) * s
    out[high] = acc
    return out


def oscillatory_integral(f: PiecewisePolynomial, n: int, lo=None, hi=None) -> complex:
    return complex(oscillatory_integrals(f, [n], lo, hi)[0])


# --------------------------------------------------------------------------
# smoothing coefficients


def _check_eps(eps) -> Rational:
    q = as_rational(eps)
    if not (0 < q and float(q) <= math.pi / 2):
        raise InvalidEpsilon(f"eps must lie in (0, pi/2], got {float(q)}")
    return q


def scaled_cutoff(m: Mollifier, eps) -> PiecewisePolynomial:
    """``theta -> phi(theta / eps)`` (exact)."""
    return pp.affine(m.phi, _check_eps(eps))


def _derivative_support_measure(m: Mollifier, r: int) -> Rational:
    g = pp.derivative_power(m.phi, r)
    return sum((g.width(i) for i, p in enumerate(g.pieces) if p), as_rational(0))


def tail_constant(m: Mollifier, eps, order: int) -> float:
    """``K`` with ``|z_n| <= K / |n|^order`` (integration by parts ``order`` times).

    ``K = eps^(1-order) int |phi^(order)| / 2 pi``, with the integral bounded by
    the certified sup norm times the measure of the derivative's support.
    """
    eps = _check_eps(eps)
    if not 1 <= order <= m.ell + m.k0 + 1:
        raise ValueError(f"order must lie in [1, {m.ell + m.k0 + 1}]")
    l1 = m.norm(order).upper * _derivative_support_measure(m, order)
    return float(l1 * eps ** (1 - order)) / (2 * math.pi)


def tail_bound(m: Mollifier, eps, n_max: int, order: int | str = 2) -> float:
    """Bound on ``sum_{|n| > n_max} |z_n|``.

    ``order="best"`` takes the minimum over every admissible order.
    """
    if n_max < 1:
        raise ValueError("n_max must be positive")
    orders = range(2, m.ell + m.k0 + 2) if order == "best" else [int(order)]
    best = math.inf
    for r in orders:
        k = tail_constant(m, eps, r)
        best = min(best, 2 * k / ((r - 1) * float(n_max) ** (r - 1)))
    return best


def truncation_radius(m: Mollifier, eps, target: float, n_cap: int = 10**7) -> int:
    """Smallest ``N`` whose best tail bound is at most ``target``."""
    best = None
    for r in range(2, m.ell + m.k0 + 2):
        k = tail_constant(m, eps, r)
        n = math.ceil((2 * k / ((r - 1) * target)) ** (1 / (r - 1)))
        n = max(n, 1)
        best = n if best is None else min(best, n)
    if best > n_cap:
        raise TruncationInfeasible(best, n_cap)
    # guard against rounding in the closed form
    while tail_bound(m, eps, best, "best") > target:
        best += 1
    return best


class TruncationInfeasible(RuntimeError):
    def __init__(self, needed: int, cap: int):
        super().__init__(f"truncation radius {needed} exceeds cap {cap}")
        self.needed = needed
        self.cap = cap


@dataclass(frozen=True)
class CoefficientSequence:
    """``z_n`` (or ``y_n``) for ``|n| <= n_max``; ``values[n + n_max]`` holds index ``n``."""

    kind: str
    eps: Rational
    ell: int
    k0: int
    n_max: int
    values: np.ndarray
    tail_bound: float

    @property
    def ns(self) -> np.ndarray:
        return np.arange(-self.n_max, self.n_max + 1)

    def __getitem__(self, n: int) -> float:
        if abs(n) > self.n_max:
            raise IndexError(n)
        return float(self.values[n + self.n_max])

    def l1_sum(self) -> float:
        return float(np.sum(np.abs(self.values)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(
            f"# kind={self.kind},eps={_g(float(self.eps))},ell={self.ell},"
            f"k0={self.k0},tail_bound={_g(self.tail_bound)}\n"
        )
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", f"{self.kind}_n", "l1_running"])
        running = LD(0)
        for n in range(0, self.n_max + 1):
            v = self.values[n + self.n_max]
            running += abs(v) if n == 0 else 2 * abs(v)
            w.writerow([n, _g(float(v)), _g(float(running))])
        return buf.getvalue()


def _g(x: float) -> str:
    return format(x, ".17g")


def z_coefficients(m: Mollifier, eps, n_max: int, order: int | str = 2) -> CoefficientSequence:
    """``z_n = (2 pi)^-1 int_{-pi}^{pi} e^{i n theta} phi(theta / eps) dtheta``."""
    eps = _check_eps(eps)
    g = pp.affine(m.phi, eps)
    pos = oscillatory_integrals(g, range(0, n_max + 1)).real / TWO_PI_LD
    vals = np.concatenate([pos[:0:-1], pos]).astype(LD)
    return CoefficientSequence("z", eps, m.ell, m.k0, n_max, vals, tail_bound(m, eps, max(n_max, 1), order))


def y_coefficients(m: Mollifier, eps, n_max: int, order: int | str = 2) -> CoefficientSequence:
    """``y_n = [n = 0] - z_n``."""
    z = z_coefficients(m, eps, n_max, order)
    return y_from_z(z)


def y_from_z(z: CoefficientSequence) -> CoefficientSequence:
    vals = -z.values.copy()
    vals[z.n_max] += 1
    return CoefficientSequence("y", z.eps, z.ell, z.k0, z.n_max, vals, z.tail_bound)


@dataclass(frozen=True)
class DifferenceBounds:
    eps: float
    sup_abs: float
    sup_abs_over_eps2: float
    sup_n2: float
    argmax_n2: int


def difference_bounds(seq: CoefficientSequence) -> DifferenceBounds:
    """``d_n = z_n - z_{n-1}``: report ``sup |d_n| / eps^2`` and ``sup_{n != 0} n^2 |d_n|``."""
    v = seq.values.astype(LD)
    d = v[1:] - v[:-1]
    ns = np.arange(-seq.n_max + 1, seq.n_max + 1)
    absd = np.abs(d)
    eps = float(seq.eps)
    weighted = np.where(ns != 0, ns.astype(LD) ** 2 * absd, 0)
    k = int(np.argmax(weighted))
    return DifferenceBounds(
        eps=eps,
        sup_abs=float(absd.max()),
        sup_abs_over_eps2=float(absd.max()) / eps**2,
        sup_n2=float(weighted[k]),
        argmax_n2=int(ns[k]),
    )


# --------------------------------------------------------------------------
# adaptive quadrature


@dataclass(frozen=True)
class QuadratureResult:
    value: np.ndarray | complex
    error: float
    converged: bool
    panels: int


_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)


def _panel(func, a: float, b: float):
    x = 0.5 * (b - a) * _GL_X + 0.5 * (a + b)
    fx = func(x)
    w = (0.5 * (b - a) * _GL_W).reshape((-1,) + (1,) * (fx.ndim - 1))
    return np.sum(w * fx, axis=0)


def adaptive_quadrature(
    func: Callable[[np.ndarray], np.ndarray],
    seeds: Sequence[float],
    rtol: float = 1e-10,
    atol: float = 1e-15,
    max_panels: int = 20_000,
) -> QuadratureResult:
    """Globally adaptive 20-point Gauss-Legendre with bisection.

    ``seeds`` are the initial panel edges (kinks of the integrand).  Each
    panel is estimated on its two halves; the difference from the whole-panel
    rule is its error estimate.  The worst panel is split until the summed
    error meets ``max(atol, rtol * |total|)``.
    """
    edges = sorted(set(float(s) for s in seeds))
    heap = []
    total = None
    err_total = 0.0
    counter = 0

    def estimate(a, b):
        whole = _panel(func, a, b)
        m = 0.5 * (a + b)
        halves = _panel(func, a, m) + _panel(func, m, b)
        return halves, float(np.max(np.abs(halves - whole)))

    for a, b in zip(edges, edges[1:]):
        val, err = estimate(a, b)
        heapq.heappush(heap, (-err, counter, a, b, val))
        counter += 1
        total = val if total is None else total + val
        err_total += err
    if total is None:
        raise ValueError("need at least two distinct seeds")

    while True:
        scale = float(np.max(np.abs(total)))
        if err_total <= max(atol, rtol * scale):
            return QuadratureResult(total, err_total, True, len(heap))
        if len(heap) >= max_panels:
            return QuadratureResult(total, err_total, False, len(heap))
        neg, _, a, b, val = heapq.heappop(heap)
        total = total - val
        err_total += neg
        m = 0.5 * (a + b)
        for lo, hi in ((a, m), (m, b)):
            v, e = estimate(lo, hi)
            heapq.heappush(heap, (-e, counter, lo, hi, v))
            counter += 1
            total = total + v
            err_total += e


def boundary_integral(F, m: Mollifier, eps, n: int, rtol: float = 1e-11) -> QuadratureResult:
    """``(2 pi)^-1 int e^{i(n+1) theta} F(e^{i theta}) psi(theta / eps) dtheta``.

    ``F`` is any object with ``evaluate(theta_array)`` returning an array whose
    first axis runs over ``theta``.  The integrand vanishes on ``|theta| < eps``
    so only ``eps <= |theta| <= pi`` is integrated.
    """
    eps_q = _check_eps(eps)
    eps_f = float(eps_q)
    if n < 0:
        raise ValueError("n must be non-negative")
    phi = m.phi

    def integrand(theta: np.ndarray) -> np.ndarray:
        vals = np.asarray(F.evaluate(theta), dtype=complex)
        psi = 1.0 - phi.evaluate_array(theta / eps_f)
        weight = np.exp(1j * (n + 1) * theta) * psi / (2 * math.pi)
        return weight.reshape((-1,) + (1,) * (vals.ndim - 1)) * vals

    kinks = [float(b) * eps_f for b in phi.breakpoints if 1 <= b <= 2]
    # a few extra edges per oscillation period keep the initial panels resolved
    periods = max(4, int((n + 1) * (math.pi - eps_f) / math.pi))
    far = list(np.linspace(2 * eps_f, math.pi, periods + 1))
    right = sorted(set([eps_f] + kinks + far))
    neg = adaptive_quadrature(integrand, [-x for x in right], rtol=rtol)
    pos = adaptive_quadrature(integrand, right, rtol=rtol)
    return QuadratureResult(
        neg.value + pos.value, neg.error + pos.error, neg.converged and pos.converged, neg.panels + pos.panels
    )

"""Smooth cutoffs built by repeated box-kernel convolution.

``phi_ell = chi[-3/2, 3/2] * H[1/4] * H[1/8] * ... * H[1/2^(k0+2)] * H[h]^(*ell)``
with ``h = 1 / (2^(k0+2) ell)`` and ``H[a]`` the unit-mass box on ``[-a, a]``.
The result equals 1 on ``[-1, 1]``, vanishes outside ``[-2, 2]`` and lies in
``C^(ell + k0)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from . import piecewise_poly as pp
from .piecewise_poly import PiecewisePolynomial, Rational, SupNorm, as_rational

DEFAULT_MAX_PIECES = 100_000

#: rational stand-in for pi (the double nearest to pi, converted exactly)
PI = as_rational(math.pi)
#: rational upper bound for pi, used where a cutoff must cover [-pi, pi]
PI_UPPER = as_rational("355/113")


class ConstructionTooLarge(RuntimeError):
    def __init__(self, estimated_pieces: int, limit: int):
        super().__init__(f"estimated {estimated_pieces} pieces exceeds limit {limit}")
        self.estimated_pieces = estimated_pieces
        self.limit = limit


class InvalidDelta(ValueError):
    pass


@dataclass(frozen=True)
class Mollifier:
    ell: int
    k0: int
    phi: PiecewisePolynomial
    #: certified brackets for ||phi^(j)||_inf, j = 0 .. ell + k0
    derivative_norms: tuple[SupNorm, ...] = ()

    @property
    def small_width(self) -> Rational:
        """Half-width ``1 / (2^(k0+2) ell)`` of the repeated small box."""
        return as_rational(1) / (2 ** (self.k0 + 2) * self.ell)

    @property
    def growth_base(self) -> int:
        return 2 ** (self.k0 + 2) * self.ell

    def norm(self, j: int) -> SupNorm:
        if j < len(self.derivative_norms):
            return self.derivative_norms[j]
        return pp.sup_norm(pp.derivative_power(self.phi, j), -2, 2)

    def __call__(self, theta) -> Rational:
        return pp.evaluate(self.phi, theta)

    def to_dict(self) -> dict:
        return {
            "ell": self.ell,
            "k0": self.k0,
            "phi": self.phi.to_dict(),
            "derivative_norms": [
                {"j": j, "lower": pp._fmt(b.lower), "upper": pp._fmt(b.upper)}
                for j, b in enumerate(self.derivative_norms)
            ],
        }


def estimated_pieces(ell: int, k0: int) -> int:
    # breakpoints sit on the lattice of spacing h inside [-2, 2]
    return 2 ** (k0 + 4) * ell


def build_mollifier(
    ell: int,
    k0: int = 1,
    *,
    max_pieces: int = DEFAULT_MAX_PIECES,
    certify: bool = True,
    rtol: float = 1e-6,
) -> Mollifier:
    if ell < 1 or k0 < 1:
        raise pp.InvalidParameter(f"need ell >= 1 and k0 >= 1, got ell={ell}, k0={k0}")
    est = estimated_pieces(ell, k0)
    if est > max_pieces:
        raise ConstructionTooLarge(est, max_pieces)
    phi = pp.make_indicator(as_rational("-3/2"), as_rational("3/2"))
    for j in range(2, k0 + 3):
        phi = pp.convolve_box(phi, as_rational(1) / 2**j)
    h = as_rational(1) / (2 ** (k0 + 2) * ell)
    for _ in range(ell):
        phi = pp.convolve_box(phi, h)
    norms: tuple[SupNorm, ...] = ()
    if certify:
        norms = certify_norms(phi, ell + k0, rtol=rtol)
    return Mollifier(ell, k0, phi, norms)


def certify_norms(phi: PiecewisePolynomial, j_max: int, rtol: float = 1e-6) -> tuple[SupNorm, ...]:
    out = []
    g = phi
    for _ in range(j_max + 1):
        out.append(pp.sup_norm(g, -2, 2, rtol=rtol))
        g = pp.differentiate(g)
    return tuple(out)


# --------------------------------------------------------------------------
# property report


@dataclass
class PropertyCheck:
    id: str
    description: str
    passed: bool
    value: object = None

    def to_dict(self) -> dict:
        v = self.value
        if isinstance(v, SupNorm):
            v = {"lower": float(v.lower), "upper": float(v.upper)}
        elif isinstance(v, dict):
            v = {str(k): (float(b.upper) if isinstance(b, SupNorm) else b) for k, b in v.items()}
        return {"id": self.id, "description": self.description, "passed": self.passed, "value": v}


@dataclass
class PropertyReport:
    ell: int
    k0: int
    checks: list[PropertyCheck] = field(default_factory=list)
    #: max_{1 <= j <= k0+1} ||phi^(j)||
    low_order_max: SupNorm | None = None
    #: j -> ||phi^(j)|| / (2^(k0+2) ell)^(j - k0 - 1), upper ends of the brackets
    growth_ratios: dict[int, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, key: str) -> PropertyCheck:
        for c in self.checks:
            if c.id == key:
                return c
        raise KeyError(key)

    def to_dict(self) -> dict:
        return {
            "ell": self.ell,
            "k0": self.k0,
            "passed": self.passed,
            "checks": [c.to_dict() for c in self.checks],
        }


def _constant_one_on(phi: PiecewisePolynomial, lo: Rational, hi: Rational) -> bool:
    i = phi.piece_index(lo)
    if i is None:
        return False
    # canonical form: a constant plateau is one piece
    return phi.pieces[i] == (1,) and phi.breakpoints[i] <= lo and phi.breakpoints[i + 1] >= hi


def strictly_between_zero_and_one(phi: PiecewisePolynomial, lo: Rational, hi: Rational) -> bool:
    """Certify ``0 < phi < 1`` on the open interval ``(lo, hi)``.

    Interior breakpoint values are checked exactly; on each open piece both
    ``phi`` and ``1 - phi`` are shown root-free by Descartes' rule and then
    positive at one interior point.
    """
    bps = phi.breakpoints
    for b in bps:
        if lo < b < hi and not 0 < pp.evaluate(phi, b) < 1:
            return False
    for i, p in enumerate(phi.pieces):
        u, v = max(lo, bps[i]), min(hi, bps[i + 1])
        if u >= v:
            continue
        local = pp.taylor_shift(p, u - bps[i])
        w = v - u
        one_minus = tuple(pp._poly_sub((as_rational(1),), local))
        for q in (local, one_minus):
            if not pp.has_no_root_open(q, w):
                return False
            if pp._horner(q, w / 2) <= 0:
                return False
    # gaps inside (lo, hi) not covered by the hull would mean phi = 0 there
    hull = phi.hull
    return hull is not None and hull[0] <= lo and hull[1] >= hi


def verify_properties(m: Mollifier) -> PropertyReport:
    phi = m.phi
    one = as_rational(1)
    two = as_rational(2)
    rep = PropertyReport(m.ell, m.k0)

    rep.checks.append(
        PropertyCheck("i", "phi = 1 on [-1, 1]", _constant_one_on(phi, -one, one))
    )
    hull = phi.hull
    rep.checks.append(
        PropertyCheck("ii", "phi = 0 for |theta| >= 2", hull is not None and hull[0] >= -two and hull[1] <= two)
    )
    rep.checks.append(
        PropertyCheck(
            "iii",
            "0 < phi < 1 on 1 < |theta| < 2",
            strictly_between_zero_and_one(phi, one, two) and strictly_between_zero_and_one(phi, -two, -one),
        )
    )

    low = [m.norm(j) for j in range(1, m.k0 + 2)]
    best = max(low, key=lambda b: b.upper)
    rep.low_order_max = best
    rep.checks.append(
        PropertyCheck("iv", "max_{1<=j<=k0+1} ||phi^(j)|| (certified)", math.isfinite(float(best.upper)), best)
    )

    base = m.growth_base
    for j in range(m.k0 + 2, m.ell + m.k0 + 1):
        rep.growth_ratios[j] = float(m.norm(j).upper / as_rational(base) ** (j - m.k0 - 1))
    finite = all(math.isfinite(r) for r in rep.growth_ratios.values())
    rep.checks.append(
        PropertyCheck("v", "||phi^(j)|| / (2^(k0+2) ell)^(j-k0-1), k0+1 < j <= ell+k0", finite, dict(rep.growth_ratios))
    )
    return rep


def complement_on_pi(m: Mollifier) -> PiecewisePolynomial:
    """``psi = 1 - phi`` on ``[-pi, pi]``.

    The outer breakpoints are ``+-355/113``, a rational just above pi; values
    between pi and that bound carry no meaning.
    """
    return pp.constant(1, -PI_UPPER, PI_UPPER) - m.phi


# --------------------------------------------------------------------------
# periodic multi-point cutoffs


def _circular_gap(angles: Sequence[Rational]) -> Rational:
    if len(angles) < 2:
        return 2 * PI
    s = sorted(angles)
    gaps = [b - a for a, b in zip(s, s[1:])]
    gaps.append(s[0] + 2 * PI - s[-1])
    return min(gaps)


@dataclass(frozen=True)
class PeriodicMollifier:
    """``theta -> sum_p sum_k phi((theta - theta_p - 2 k pi) / delta)`` on ``[-pi, pi]``.

    ``pi`` here is :data:`PI`, the exact rational value of the double nearest
    to pi, so every breakpoint is rational.
    """

    base: Mollifier
    angles: tuple[Rational, ...]
    delta: Rational
    representation: PiecewisePolynomial

    def __call__(self, theta) -> Rational:
        """Evaluate via the defining sum (exact for rational input)."""
        theta = as_rational(theta)
        total = as_rational(0)
        for a in self.angles:
            for k in (-1, 0, 1):
                total += pp.evaluate(self.base.phi, (theta - a - 2 * k * PI) / self.delta)
        return total

    def scaled_norm(self, j: int) -> float:
        """``||d^j/dtheta^j||_inf`` upper bound: ``delta^-j ||phi^(j)||``."""
        return float(self.base.norm(j).upper / self.delta**j)


def build_periodic_multi(ell: int, k0: int, angles, delta, **kwargs) -> PeriodicMollifier:
    delta = as_rational(delta)
    if delta <= 0:
        raise InvalidDelta("delta must be positive")
    angs = tuple(sorted({as_rational(a) for a in angles}))
    if not angs:
        raise InvalidDelta("need at least one angle")
    if any(not (-PI < a <= PI) for a in angs):
        raise InvalidDelta("angles must lie in (-pi, pi]")
    if not 4 * delta < _circular_gap(angs):
        raise InvalidDelta(f"4*delta = {float(4 * delta)} must be below the minimal angle gap")
    if 4 * delta >= 2 * PI:
        raise InvalidDelta("scaled support wider than the circle")
    base = build_mollifier(ell, k0, **kwargs)
    total = PiecewisePolynomial.zero()
    for a in angs:
        for k in (-1, 0, 1):
            g = pp.affine(base.phi, delta, a + 2 * k * PI)
            lo, hi = g.hull
            if hi <= -PI or lo >= PI:
                continue
            total = total + g
    rep = pp.restrict(total, -PI, PI) if not total.is_zero else total
    return PeriodicMollifier(base, angs, delta, rep)

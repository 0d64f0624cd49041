"""Exact compactly supported piecewise polynomials over rational breakpoints.

Every piece is stored in *local* form: the coefficients of piece ``i`` are
taken in powers of ``(theta - breakpoints[i])``, ascending degree.  Local
coefficients keep the rationals small (the pieces of a mollifier are narrow)
and make float evaluation well conditioned.

Values are exactly zero outside ``[breakpoints[0], breakpoints[-1]]``.  At a
breakpoint the right-limit is used, except at the last breakpoint where the
left-limit is used.
"""

from __future__ import annotations

import heapq
import json
import sys
from bisect import bisect_right
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from math import factorial
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from gmpy2 import mpq

#: exact rational scalar used for every breakpoint and coefficient
Rational = mpq

#: returned by :func:`smoothness_class` for the zero function
INFINITE_SMOOTHNESS = sys.maxsize

_ZERO = mpq(0)


class InvalidInterval(ValueError):
    pass


class InvalidParameter(ValueError):
    pass


def as_rational(x) -> Rational:
    """Convert ints, floats (exactly), strings ``"p/q"`` and Fractions."""
    if isinstance(x, str):
        return mpq(x.strip())
    if isinstance(x, Fraction):
        return mpq(x.numerator, x.denominator)
    return mpq(x)


# --------------------------------------------------------------------------
# dense polynomial helpers (ascending coefficient tuples of Rationals)


def _trim(coeffs: Sequence[Rational]) -> tuple[Rational, ...]:
    n = len(coeffs)
    while n and coeffs[n - 1] == 0:
        n -= 1
    return tuple(coeffs[:n])


def _horner(coeffs: Sequence[Rational], s: Rational) -> Rational:
    acc = _ZERO
    for c in reversed(coeffs):
        acc = acc * s + c
    return acc


def taylor_shift(coeffs: Sequence[Rational], c: Rational) -> tuple[Rational, ...]:
    """Coefficients of ``s -> p(s + c)``."""
    q = list(coeffs)
    n = len(q)
    if c == 0 or n < 2:
        return tuple(q)
    for i in range(n - 1):
        for j in range(n - 2, i - 1, -1):
            q[j] += c * q[j + 1]
    return tuple(q)


def _poly_sub(p: Sequence[Rational], q: Sequence[Rational]) -> list[Rational]:
    n = max(len(p), len(q))
    return [(p[k] if k < len(p) else _ZERO) - (q[k] if k < len(q) else _ZERO) for k in range(n)]


def _poly_add(p: Sequence[Rational], q: Sequence[Rational]) -> list[Rational]:
    n = max(len(p), len(q))
    return [(p[k] if k < len(p) else _ZERO) + (q[k] if k < len(q) else _ZERO) for k in range(n)]


def _poly_derivative(p: Sequence[Rational]) -> tuple[Rational, ...]:
    return tuple(k * p[k] for k in range(1, len(p)))


def _poly_antiderivative(p: Sequence[Rational], const: Rational = _ZERO) -> tuple[Rational, ...]:
    return (const,) + tuple(p[k] / (k + 1) for k in range(len(p)))


# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PiecewisePolynomial:
    """Immutable piecewise polynomial in canonical form.

    Build instances with :meth:`from_pieces` (which canonicalizes) or with the
    module-level constructors; the raw constructor trusts its input.
    """

    breakpoints: tuple[Rational, ...]
    pieces: tuple[tuple[Rational, ...], ...]

    @classmethod
    def from_pieces(cls, breakpoints: Iterable, pieces: Iterable[Iterable]) -> "PiecewisePolynomial":
        bps = [as_rational(b) for b in breakpoints]
        pcs = [tuple(as_rational(c) for c in p) for p in pieces]
        if bps and len(pcs) != len(bps) - 1:
            raise ValueError("need exactly one piece per pair of consecutive breakpoints")
        if any(not b < c for b, c in zip(bps, bps[1:])):
            raise InvalidInterval("breakpoints must be strictly increasing")
        return _canonical(bps, pcs)

    @classmethod
    def zero(cls) -> "PiecewisePolynomial":
        return cls((), ())

    # -- basic queries -----------------------------------------------------

    @property
    def is_zero(self) -> bool:
        return not self.pieces

    @property
    def hull(self) -> tuple[Rational, Rational] | None:
        if not self.breakpoints:
            return None
        return self.breakpoints[0], self.breakpoints[-1]

    @property
    def degree(self) -> int:
        return max((len(p) - 1 for p in self.pieces), default=-1)

    def __len__(self) -> int:
        return len(self.pieces)

    def __call__(self, theta) -> Rational:
        return evaluate(self, theta)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PiecewisePolynomial):
            return NotImplemented
        return self.breakpoints == other.breakpoints and self.pieces == other.pieces

    def __hash__(self) -> int:
        return hash((self.breakpoints, self.pieces))

    def __repr__(self) -> str:
        if self.is_zero:
            return "PiecewisePolynomial(0)"
        lo, hi = self.hull
        return f"PiecewisePolynomial({len(self)} pieces on [{lo}, {hi}], degree {self.degree})"

    def __add__(self, other: "PiecewisePolynomial") -> "PiecewisePolynomial":
        return _combine(self, other, _poly_add)

    def __sub__(self, other: "PiecewisePolynomial") -> "PiecewisePolynomial":
        return _combine(self, other, _poly_sub)

    def __neg__(self) -> "PiecewisePolynomial":
        return self * -1

    def __mul__(self, scalar) -> "PiecewisePolynomial":
        c = as_rational(scalar)
        return _canonical(list(self.breakpoints), [tuple(c * x for x in p) for p in self.pieces])

    __rmul__ = __mul__

    # -- local representation helpers --------------------------------------

    def piece_index(self, theta: Rational) -> int | None:
        """Index of the piece used to evaluate at ``theta`` (None outside)."""
        bps = self.breakpoints
        if not bps or theta < bps[0] or theta > bps[-1]:
            return None
        if theta == bps[-1]:
            return len(self.pieces) - 1
        return bisect_right(bps, theta) - 1

    def width(self, i: int) -> Rational:
        return self.breakpoints[i + 1] - self.breakpoints[i]

    def right_jet(self, i: int) -> tuple[Rational, ...]:
        """Local coefficients of piece ``i`` re-expanded at its right end."""
        return taylor_shift(self.pieces[i], self.width(i))

    # -- float views -------------------------------------------------------

    @cached_property
    def _float_tables(self) -> tuple[np.ndarray, np.ndarray]:
        deg = max(self.degree, 0)
        coef = np.zeros((len(self.pieces), deg + 1))
        for i, p in enumerate(self.pieces):
            coef[i, : len(p)] = [float(c) for c in p]
        return np.array([float(b) for b in self.breakpoints]), coef

    def evaluate_array(self, x) -> np.ndarray:
        """Vectorized float evaluation (same breakpoint convention)."""
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        if self.is_zero:
            return out
        bps, coef = self._float_tables
        idx = np.searchsorted(bps, x, side="right") - 1
        idx = np.where(x == bps[-1], len(self.pieces) - 1, idx)
        inside = (x >= bps[0]) & (x <= bps[-1])
        idx = np.clip(idx, 0, len(self.pieces) - 1)
        s = x - bps[idx]
        acc = np.zeros_like(x)
        for k in range(coef.shape[1] - 1, -1, -1):
            acc = acc * s + coef[idx, k]
        out[inside] = acc[inside]
        return out

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "basis": "local",
            "breakpoints": [_fmt(b) for b in self.breakpoints],
            "pieces": [[_fmt(c) for c in p] for p in self.pieces],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PiecewisePolynomial":
        if data.get("basis", "local") != "local":
            raise ValueError(f"unsupported basis {data['basis']!r}")
        return cls.from_pieces(data["breakpoints"], data["pieces"])

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_json(cls, text: str) -> "PiecewisePolynomial":
        return cls.from_dict(json.loads(text))


def _fmt(x: Rational) -> str:
    return f"{x.numerator}/{x.denominator}"


def _canonical(bps: list[Rational], pcs: list[tuple[Rational, ...]]) -> PiecewisePolynomial:
    pcs = [_trim(p) for p in pcs]
    # drop zero pieces at both ends
    lo, hi = 0, len(pcs)
    while lo < hi and not pcs[lo]:
        lo += 1
    while hi > lo and not pcs[hi - 1]:
        hi -= 1
    if lo == hi:
        return PiecewisePolynomial((), ())
    bps = bps[lo : hi + 1]
    pcs = pcs[lo:hi]
    out_b = [bps[0]]
    out_p = [pcs[0]]
    for i in range(1, len(pcs)):
        prev = out_p[-1]
        # same polynomial iff the previous piece re-expanded here matches
        if len(prev) == len(pcs[i]) and _trim(taylor_shift(prev, bps[i] - out_b[-1])) == pcs[i]:
            continue
        out_b.append(bps[i])
        out_p.append(pcs[i])
    out_b.append(bps[-1])
    return PiecewisePolynomial(tuple(out_b), tuple(out_p))


def _on_grid(f: PiecewisePolynomial, grid: Sequence[Rational]) -> list[tuple[Rational, ...]]:
    """Local coefficients of ``f`` on every interval of ``grid``.

    ``grid`` must contain every breakpoint of ``f`` lying inside it.
    """
    out = []
    bps = f.breakpoints
    for c, d in zip(grid, grid[1:]):
        if not bps or d <= bps[0] or c >= bps[-1]:
            out.append(())
            continue
        j = bisect_right(bps, c) - 1
        out.append(taylor_shift(f.pieces[j], c - bps[j]))
    return out


def _combine(f: PiecewisePolynomial, g: PiecewisePolynomial, op) -> PiecewisePolynomial:
    grid = sorted(set(f.breakpoints) | set(g.breakpoints))
    if len(grid) < 2:
        return PiecewisePolynomial.zero()
    a = _on_grid(f, grid)
    b = _on_grid(g, grid)
    return _canonical(grid, [tuple(op(p, q)) for p, q in zip(a, b)])


# --------------------------------------------------------------------------
# constructors


def make_indicator(a, b) -> PiecewisePolynomial:
    """Characteristic function of ``[a, b]``."""
    a, b = as_rational(a), as_rational(b)
    if not a < b:
        raise InvalidInterval(f"need a < b, got [{a}, {b}]")
    return PiecewisePolynomial((a, b), ((mpq(1),),))


def make_box_kernel(a) -> PiecewisePolynomial:
    """Unit-mass box ``(2a)^-1 * indicator[-a, a]``."""
    a = as_rational(a)
    if a <= 0:
        raise InvalidParameter(f"box half-width must be positive, got {a}")
    return PiecewisePolynomial((-a, a), ((1 / (2 * a),),))


def constant(value, lo, hi) -> PiecewisePolynomial:
    return make_indicator(lo, hi) * value


def affine(f: PiecewisePolynomial, scale, shift=0) -> PiecewisePolynomial:
    """``theta -> f((theta - shift) / scale)`` for ``scale > 0``."""
    scale, shift = as_rational(scale), as_rational(shift)
    if scale <= 0:
        raise InvalidParameter("scale must be positive")
    bps = [shift + scale * b for b in f.breakpoints]
    pcs = [tuple(c / scale**k for k, c in enumerate(p)) for p in f.pieces]
    return PiecewisePolynomial(tuple(bps), tuple(pcs))


def restrict(f: PiecewisePolynomial, lo, hi) -> PiecewisePolynomial:
    """``f`` on ``[lo, hi]``, zero elsewhere."""
    lo, hi = as_rational(lo), as_rational(hi)
    if not lo < hi:
        raise InvalidInterval(f"need lo < hi, got [{lo}, {hi}]")
    grid = [lo] + [b for b in f.breakpoints if lo < b < hi] + [hi]
    return _canonical(grid, _on_grid(f, grid))


# --------------------------------------------------------------------------
# calculus


def evaluate(f: PiecewisePolynomial, theta) -> Rational:
    theta = as_rational(theta)
    i = f.piece_index(theta)
    if i is None:
        return _ZERO
    return _horner(f.pieces[i], theta - f.breakpoints[i])


def differentiate(f: PiecewisePolynomial) -> PiecewisePolynomial:
    """Piecewise derivative; kinks at breakpoints are ignored."""
    return _canonical(list(f.breakpoints), [_poly_derivative(p) for p in f.pieces])


def antiderivative(f: PiecewisePolynomial) -> PiecewisePolynomial:
    """Antiderivative vanishing left of the support hull.

    The result is represented on the hull of ``f`` only; right of the hull
    the true antiderivative equals :func:`integral` ``(f)``.
    """
    acc = _ZERO
    pcs = []
    for i, p in enumerate(f.pieces):
        q = _poly_antiderivative(p, acc)
        pcs.append(q)
        acc = _horner(q, f.width(i))
    return _canonical(list(f.breakpoints), pcs)


def integral(f: PiecewisePolynomial) -> Rational:
    total = _ZERO
    for i, p in enumerate(f.pieces):
        w = f.width(i)
        total += sum((c * w ** (k + 1) / (k + 1) for k, c in enumerate(p)), _ZERO)
    return total


def convolve_box(f: PiecewisePolynomial, a) -> PiecewisePolynomial:
    """Exact ``f * H[-a, a]`` via ``(F(theta + a) - F(theta - a)) / 2a``."""
    a = as_rational(a)
    if a <= 0:
        raise InvalidParameter(f"box half-width must be positive, got {a}")
    if f.is_zero:
        return f
    big_f = antiderivative(f)
    mass = integral(f)
    bps = f.breakpoints
    fb = big_f.breakpoints
    grid = sorted({b - a for b in bps} | {b + a for b in bps})

    def at(c: Rational) -> tuple[Rational, ...]:
        # antiderivative on [c, next grid point], expanded at c
        if c < fb[0]:
            return ()
        if c >= fb[-1]:
            return (mass,)
        j = bisect_right(fb, c) - 1
        return taylor_shift(big_f.pieces[j], c - fb[j])

    inv = 1 / (2 * a)
    pcs = []
    for c in grid[:-1]:
        diff = _poly_sub(at(c + a), at(c - a))
        pcs.append(tuple(inv * x for x in diff))
    return _canonical(grid, pcs)


# --------------------------------------------------------------------------
# jets, smoothness, symmetry


def jump_jets(f: PiecewisePolynomial) -> list[tuple[Rational, tuple[Rational, ...]]]:
    """Taylor-coefficient jumps (right minus left) at every breakpoint.

    Entry ``k`` of each jump is ``[f^(k)](b) / k!``.  Breakpoints where the
    function is smooth do not occur in canonical form, so every returned jump
    has a nonzero entry.
    """
    out = []
    n = len(f.pieces)
    for i, b in enumerate(f.breakpoints):
        right = f.pieces[i] if i < n else ()
        left = f.right_jet(i - 1) if i > 0 else ()
        out.append((b, tuple(_poly_sub(right, left))))
    return out


def smoothness_class(f: PiecewisePolynomial) -> int:
    """Largest ``m`` with ``f, ..., f^(m)`` continuous everywhere (-1 if none)."""
    if f.is_zero:
        return INFINITE_SMOOTHNESS
    worst = INFINITE_SMOOTHNESS
    for _, jump in jump_jets(f):
        first = next((k for k, c in enumerate(jump) if c != 0), None)
        if first is not None:
            worst = min(worst, first - 1)
    return worst


def mirror(f: PiecewisePolynomial) -> PiecewisePolynomial:
    """``theta -> f(-theta)``."""
    bps = tuple(-b for b in reversed(f.breakpoints))
    pcs = []
    for i in range(len(f.pieces) - 1, -1, -1):
        q = f.right_jet(i)
        pcs.append(tuple(c if k % 2 == 0 else -c for k, c in enumerate(q)))
    return PiecewisePolynomial(bps, tuple(_trim(p) for p in pcs))


def is_even(f: PiecewisePolynomial) -> bool:
    return mirror(f) == f


# --------------------------------------------------------------------------
# certified sup norm


class SupNorm(NamedTuple):
    """Certified bracket ``lower <= sup |f| <= upper``."""

    lower: Rational
    upper: Rational

    def __float__(self) -> float:
        return float(self.upper)

    @property
    def gap(self) -> Rational:
        return self.upper - self.lower


def _abs_bound(centered: Sequence[Rational], r: Rational) -> Rational:
    total = _ZERO
    rk = mpq(1)
    for c in centered:
        total += abs(c) * rk
        rk *= r
    return total


def sup_norm(
    f: PiecewisePolynomial,
    lo,
    hi,
    rtol: float = 1e-6,
    max_boxes: int = 200_000,
) -> SupNorm:
    """Branch-and-bound bracket for ``sup |f|`` over ``[lo, hi]``.

    Each box is re-expanded about its midpoint and bounded by the sum of the
    absolute coefficients times powers of the half-width.  Boxes whose bound
    cannot beat the best witnessed value are discarded.
    """
    lo, hi = as_rational(lo), as_rational(hi)
    if not lo < hi:
        raise InvalidInterval(f"need lo < hi, got [{lo}, {hi}]")
    rtol = as_rational(rtol)
    best = _ZERO
    heap: list[tuple[Rational, int, Rational, tuple[Rational, ...]]] = []
    counter = 0
    bps = f.breakpoints
    for i, p in enumerate(f.pieces):
        u = max(lo, bps[i])
        v = min(hi, bps[i + 1])
        if u >= v:
            continue
        if len(p) <= 1:
            best = max(best, abs(p[0]) if p else _ZERO)
            continue
        r = (v - u) / 2
        centered = taylor_shift(p, u + r - bps[i])
        best = max(best, abs(centered[0]), abs(_horner(p, u - bps[i])), abs(_horner(p, v - bps[i])))
        heapq.heappush(heap, (-_abs_bound(centered, r), counter, r, centered))
        counter += 1

    boxes = 0
    # largest bound among discarded boxes; they still count toward the upper end
    pruned = _ZERO
    while heap:
        neg_ub, _, r, centered = heap[0]
        ub = -neg_ub
        if ub <= best * (1 + rtol):
            break
        if boxes >= max_boxes:
            break
        heapq.heappop(heap)
        boxes += 1
        h = r / 2
        for off in (-h, h):
            child = taylor_shift(centered, off)
            best = max(best, abs(child[0]))
            cb = _abs_bound(child, h)
            if cb > best * (1 + rtol):
                heapq.heappush(heap, (-cb, counter, h, child))
                counter += 1
            else:
                pruned = max(pruned, cb)

    upper = max(best, pruned, -heap[0][0] if heap else _ZERO)
    return SupNorm(best, upper)


# --------------------------------------------------------------------------
# root exclusion (Descartes rule on Moebius-transformed pieces)


def _sign_variations(coeffs: Sequence[Rational]) -> int:
    signs = [c > 0 for c in coeffs if c != 0]
    return sum(1 for a, b in zip(signs, signs[1:]) if a != b)


def has_no_root_open(coeffs: Sequence[Rational], w: Rational, depth: int = 40) -> bool:
    """True if the polynomial (in local variable) has no zero in ``(0, w)``.

    Certified with Descartes' rule of signs after mapping ``(0, w)`` onto
    ``(0, inf)``; bisects when the variation count is inconclusive.  A False
    result means a root was found or the depth limit was reached.
    """
    p = list(_trim(coeffs))
    if not p:
        return False
    # scale to (0, 1)
    p = [c * w**k for k, c in enumerate(p)]
    # drop factors of s (roots at the left endpoint are not in the open interval)
    while p and p[0] == 0:
        p.pop(0)
    if len(p) <= 1:
        return True
    rev = list(reversed(p))
    var = _sign_variations(taylor_shift(rev, mpq(1)))
    if var == 0:
        return True
    if var == 1 or depth == 0:
        return False
    half = w / 2
    q = list(_trim(coeffs))
    if _horner(q, half) == 0:
        return False
    return has_no_root_open(q, half, depth - 1) and has_no_root_open(
        taylor_shift(q, half), half, depth - 1
    )


def derivative_power(f: PiecewisePolynomial, j: int) -> PiecewisePolynomial:
    """``f^(j)``."""
    g = f
    for _ in range(j):
        g = differentiate(g)
    return g


def taylor_to_derivatives(jet: Sequence[Rational]) -> tuple[Rational, ...]:
    """Convert Taylor coefficients ``c_k`` to derivative values ``k! c_k``."""
    return tuple(factorial(k) * c for k, c in enumerate(jet))

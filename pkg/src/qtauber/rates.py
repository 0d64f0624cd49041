"""Resolvent-growth rate functions, their transforms and inverses, and decay fits.

For a non-increasing ``m`` on ``(0, d]``::

    m_k(eps)   = m(eps) * (m(eps) / eps) ** (1 / k)
    m_log(eps) = m(eps) * log(1 + m(eps) / eps)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .operators import DecaySequence

#: smallest domain point used by the generalized inverse
EPS_FLOOR = 1e-300
VALIDATION_POINTS = 10_000


class InvalidRate(ValueError):
    pass


class OutOfDomain(ValueError):
    pass


class InsufficientData(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class RateFunction:
    """A positive, continuous, non-increasing function on ``(0, domain]``.

    Use the constructors :meth:`power_law`, :meth:`constant` and
    :meth:`tabulated`; each validates monotonicity on a dense grid.
    """

    kind: str
    params: dict
    domain: float = math.pi
    _eval: Callable[[np.ndarray], np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if not 0 < self.domain <= math.pi:
            raise InvalidRate(f"domain endpoint must lie in (0, pi], got {self.domain}")
        grid = np.geomspace(self.domain * 1e-8, self.domain, VALIDATION_POINTS)
        for name, g in (("m", self.values), ("m_log", lambda e: m_log_value(self, e)),
                        ("m_1", lambda e: m_k_value(self, 1, e))):
            v = np.asarray(g(grid), dtype=float)
            if not np.all(np.isfinite(v)) or np.any(v <= 0):
                raise InvalidRate(f"{name} must be finite and positive on the domain")
            if np.any(np.diff(v) > 1e-12 * np.abs(v[:-1])):
                raise InvalidRate(f"{name} must be non-increasing")

    @classmethod
    def power_law(cls, C: float, alpha: float, domain: float = math.pi) -> "RateFunction":
        """``m(eps) = C eps^-alpha``."""
        C, alpha = float(C), float(alpha)
        if C <= 0 or alpha < 0:
            raise InvalidRate("power law needs C > 0 and alpha >= 0")
        return cls("power_law", {"C": C, "alpha": alpha}, float(domain), lambda e: C * np.power(e, -alpha))

    @classmethod
    def constant(cls, M: float, domain: float = math.pi) -> "RateFunction":
        M = float(M)
        if M <= 0:
            raise InvalidRate("constant rate needs M > 0")
        return cls("constant", {"M": M}, float(domain), lambda e: np.full(np.shape(e), M, dtype=float))

    @classmethod
    def tabulated(cls, eps, values, domain: float | None = None) -> "RateFunction":
        """Piecewise-linear interpolation of a sample table.

        Below the first sample the function is extended as ``v0 * eps0 / eps``
        so it stays continuous and non-increasing down to 0; above the last
        sample it is held constant.
        """
        x = np.asarray(eps, dtype=float)
        y = np.asarray(values, dtype=float)
        if x.ndim != 1 or x.shape != y.shape or x.size < 2:
            raise InvalidRate("table needs two matching 1-D arrays with at least two samples")
        order = np.argsort(x)
        x, y = x[order], y[order]
        if np.any(np.diff(x) <= 0) or x[0] <= 0:
            raise InvalidRate("sample points must be positive and distinct")
        if np.any(np.diff(y) > 0):
            raise InvalidRate("tabulated values must be non-increasing")
        d = float(x[-1] if domain is None else domain)
        x0, y0 = x[0], y[0]

        def ev(e):
            e = np.asarray(e, dtype=float)
            return np.where(e < x0, y0 * x0 / np.maximum(e, EPS_FLOOR), np.interp(e, x, y))

        return cls("tabulated", {"eps": x.tolist(), "values": y.tolist()}, d, ev)

    @classmethod
    def from_spec(cls, spec: dict) -> "RateFunction":
        kind = spec.get("kind")
        dom = spec.get("domain", math.pi)
        if kind == "power_law":
            return cls.power_law(spec["C"], spec["alpha"], dom)
        if kind == "constant":
            return cls.constant(spec["M"], dom)
        if kind == "tabulated":
            return cls.tabulated(spec["eps"], spec["values"], spec.get("domain"))
        raise InvalidRate(f"unknown rate kind {kind!r}")

    def to_spec(self) -> dict:
        return {"kind": self.kind, **self.params, "domain": self.domain}

    def values(self, eps) -> np.ndarray:
        with np.errstate(over="ignore", divide="ignore"):
            return self._eval(np.asarray(eps, dtype=float))

    def _checked(self, eps) -> np.ndarray:
        e = np.asarray(eps, dtype=float)
        if np.any(e <= 0) or np.any(e > self.domain * (1 + 1e-15)):
            raise OutOfDomain(f"eps outside (0, {self.domain}]")
        return e

    def __call__(self, eps):
        return m_value(self, eps)


def _out(v):
    return float(v) if np.ndim(v) == 0 else v


def m_value(m: RateFunction, eps):
    return _out(m.values(m._checked(eps)))


def m_k_value(m: RateFunction, k: int, eps):
    if k < 1:
        raise ValueError("k must be at least 1")
    e = m._checked(eps)
    v = m.values(e)
    with np.errstate(over="ignore"):
        return _out(v * (v / e) ** (1.0 / k))


def m_log_value(m: RateFunction, eps):
    e = m._checked(eps)
    v = m.values(e)
    with np.errstate(over="ignore"):
        return _out(v * np.log1p(v / e))


# --------------------------------------------------------------------------
# generalized inverse


class InverseResult(NamedTuple):
    value: float
    #: True when y < g(domain) and the right endpoint was returned
    clamped: bool


def inverse(g: Callable[[float], float], y: float, domain: float, rtol: float = 1e-12,
            floor: float = EPS_FLOOR) -> InverseResult:
    """``inf {eps in (0, domain] : g(eps) <= y}`` for non-increasing ``g``.

    Bisection runs on ``log eps`` until the bracket is within ``rtol``.
    """
    if not y > 0:
        raise ValueError("y must be positive")
    if g(domain) > y:
        return InverseResult(float(domain), True)
    if g(floor) <= y:
        return InverseResult(float(floor), False)
    lo, hi = math.log(floor), math.log(domain)
    # invariant: g(e^lo) > y >= g(e^hi)
    while hi - lo > rtol / 4:
        mid = 0.5 * (lo + hi)
        if g(math.exp(mid)) <= y:
            hi = mid
        else:
            lo = mid
    return InverseResult(math.exp(hi), False)


def m_log_inverse(m: RateFunction, y: float, rtol: float = 1e-12) -> InverseResult:
    return inverse(lambda e: m_log_value(m, e), y, m.domain, rtol)


# --------------------------------------------------------------------------
# fitting measured decay


def envelope_constant(data: DecaySequence, env: Callable[[np.ndarray], np.ndarray], n_min: int) -> float:
    """Least ``C`` with ``data(n) <= C env(n)`` for grid points ``n >= n_min``."""
    mask = data.n >= n_min
    if not np.any(mask):
        raise InsufficientData(f"no grid points at or above n_min={n_min}")
    ns = data.n[mask]
    e = np.asarray(env(ns), dtype=float)
    if np.any(e <= 0):
        raise ValueError("envelope must be positive on the grid")
    return float(np.max(data.values[mask] / e))


def envelope_columns(data: DecaySequence, env: Callable[[np.ndarray], np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    e = np.asarray(env(data.n), dtype=float)
    return e, data.values / e


def decay_exponent(data: DecaySequence, n_lo: float, n_hi: float) -> float:
    """Least-squares slope of ``log value`` against ``log n`` on ``[n_lo, n_hi]``."""
    mask = (data.n >= n_lo) & (data.n <= n_hi) & (data.values > 0)
    if np.count_nonzero(mask) < 5:
        raise InsufficientData("need at least 5 positive grid values in the window")
    x = np.log(data.n[mask].astype(float))
    y = np.log(data.values[mask])
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


def fit_power_law(theta, values, safety: float = 1.1, domain: float = math.pi) -> RateFunction:
    """Power law ``C theta^-alpha`` dominating the samples.

    ``alpha`` is the negated log-log least-squares slope; ``C`` is ``safety``
    times the largest ``value * theta^alpha``.
    """
    th = np.asarray(theta, dtype=float)
    v = np.asarray(values, dtype=float)
    slope, _ = np.polyfit(np.log(th), np.log(v), 1)
    alpha = max(0.0, -float(slope))
    C = safety * float(np.max(v * th**alpha))
    return RateFunction.power_law(C, alpha, domain)

"""Smoothing of operator sequences and the decay experiments built on it.

The smoothed sequence is ``x^eps_n = sum_{|j| <= N} y_j x_{n-j}`` with ``x``
extended by zero to negative indices and ``y`` the coefficients of
``psi(theta / eps)``.  For ``x_n = T^n W`` it satisfies the recurrence
``S_n = T S_{n-1} + y_n`` (``-N <= n <= N``), ``S_n = T S_{n-1}`` beyond, with
``x^eps_n = S_n W``.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import operators as ops
from . import oscillatory as osc
from . import rates
from .mollifier import Mollifier
from .operators import DecaySequence, Diagonal, OperatorModel, PowerSequence
from .piecewise_poly import Rational, as_rational
from .rates import RateFunction

DEFAULT_FRACTION = 0.01
DEFAULT_C = 0.9
GRID_CAP = 10**5


def default_grid(n_max: int = GRID_CAP, n_min: int = 1, per_decade: int = 8) -> np.ndarray:
    """``{ceil(10^(j / per_decade))}`` inside ``[n_min, n_max]``."""
    out = set()
    j = 0
    while True:
        n = math.ceil(10 ** (j / per_decade))
        if n > n_max:
            break
        if n >= n_min:
            out.add(n)
        j += 1
    return np.array(sorted(out), dtype=np.int64)


def as_eps(eps) -> Rational:
    """Exact rational for ``eps``; floats go through their shortest repr (0.2 -> 1/5)."""
    if isinstance(eps, float):
        return as_rational(repr(eps))
    return as_rational(eps)


def _pmap(fn, items, threads: int | None):
    items = list(items)
    if threads is None or threads <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# --------------------------------------------------------------------------
# smoothing


@dataclass
class SmoothingResult:
    eps: float
    ell: int
    k0: int
    n: np.ndarray
    #: smoothed terms on the grid, stacked like ``PowerSequence.terms``
    terms: np.ndarray
    norms: np.ndarray
    n_trunc: int
    #: tail bound on sum_{|j| > N} |y_j| times sup_n ||x_n||
    truncation_error: float
    target: float


def _grid(n_grid) -> np.ndarray:
    g = np.asarray(sorted(set(int(n) for n in n_grid)), dtype=np.int64)
    if g.size == 0 or g[0] < 0:
        raise ValueError("grid must be nonempty with n >= 0")
    return g


def _truncation(m: Mollifier, eps: Rational, sup_x: float, target: float, n_cap: int) -> tuple[int, float]:
    if sup_x == 0:
        return 1, 0.0
    n_trunc = osc.truncation_radius(m, eps, target / sup_x, n_cap=n_cap)
    return n_trunc, osc.tail_bound(m, eps, n_trunc, "best") * sup_x


def _smooth_power(seq: PowerSequence, y: np.ndarray, N: int, grid: np.ndarray) -> np.ndarray:
    T = seq.T
    w = seq.weight()
    yv = np.asarray(y, dtype=float)
    want = {int(n): i for i, n in enumerate(grid)}
    rest = grid > N
    if isinstance(T, Diagonal):
        lam = T.eigenvalues
        s = np.zeros_like(lam)
        out = np.empty((grid.size, lam.size), dtype=complex)
        for n in range(-N, N + 1):
            s = lam * s + yv[n + N]
            if n in want:
                out[want[n]] = s * w
        if np.any(rest):
            with np.errstate(invalid="ignore"):
                pw = lam[None, :] ** (grid[rest] - N)[:, None]
            out[rest] = pw * (s * w)[None, :]
        return out
    a = T.matrix
    eye = np.eye(a.shape[0], dtype=complex)
    s = np.zeros_like(eye)
    out = np.empty((grid.size,) + w.shape, dtype=complex)
    for n in range(-N, N + 1):
        s = a @ s + yv[n + N] * eye
        if n in want:
            out[want[n]] = s @ w
    for i in np.flatnonzero(rest):
        out[i] = np.linalg.matrix_power(a, int(grid[i] - N)) @ s @ w
    return out


def _smooth_array(x: np.ndarray, y: np.ndarray, N: int, grid: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    need = int(grid[-1]) + N + 1
    if x.shape[0] < need:
        raise ValueError(f"need terms for k = 0 .. {need - 1}")
    yv = np.asarray(y, dtype=float)
    out = np.zeros((grid.size,) + x.shape[1:], dtype=np.result_type(x, float))
    for i, n in enumerate(grid):
        lo = max(0, n - N)
        ks = np.arange(lo, n + N + 1)
        coeff = yv[n - ks + N].reshape((-1,) + (1,) * (x.ndim - 1))
        out[i] = np.sum(coeff * x[ks], axis=0)
    return out


def smooth_sequence(
    x,
    m: Mollifier,
    eps,
    n_grid,
    *,
    fraction: float = DEFAULT_FRACTION,
    target: float | None = None,
    n_cap: int = 10**7,
) -> SmoothingResult:
    """Smooth ``x`` with the ``psi(theta / eps)`` coefficients.

    ``x`` is a :class:`PowerSequence` or an array of terms indexed from 0.  The
    truncation radius is the least ``N`` whose certified tail bound times
    ``sup ||x_n||`` is at most ``target`` (default ``fraction * eps``).
    """
    eps_q = as_eps(eps)
    grid = _grid(n_grid)
    if isinstance(x, PowerSequence):
        sup_x = x.sup_norm()
    else:
        sup_x = float(np.max(ops.term_norms(np.asarray(x)), initial=0.0))
    tgt = fraction * float(eps_q) if target is None else float(target)
    N, err = _truncation(m, eps_q, sup_x, tgt, n_cap)
    y = osc.y_coefficients(m, eps_q, N, "best").values.astype(float)
    if isinstance(x, PowerSequence):
        terms = _smooth_power(x, y, N, grid)
    else:
        terms = _smooth_array(x, y, N, grid)
    return SmoothingResult(
        float(eps_q), m.ell, m.k0, grid, terms, ops.term_norms(terms), N, err, tgt
    )


@dataclass(frozen=True)
class Defect:
    eps: float
    sup: float
    ratio: float
    argmax: int


def approximation_defect(x, sm: SmoothingResult) -> Defect:
    """``sup_n ||x_n - x^eps_n||`` over the smoothing grid, and its ratio to ``eps``."""
    if isinstance(x, PowerSequence):
        orig = x.terms(sm.n)
    else:
        orig = np.asarray(x)[sm.n]
    d = ops.term_norms(orig - sm.terms)
    k = int(np.argmax(d))
    return Defect(sm.eps, float(d[k]), float(d[k]) / sm.eps, int(sm.n[k]))


# --------------------------------------------------------------------------
# parameter choice


@dataclass(frozen=True)
class Parameters:
    eps: float
    k_ell: int
    clamped: bool


def choose_parameters(m: RateFunction, n: int, c: float) -> Parameters:
    if not 0 < c < 1:
        raise ValueError("c must lie in (0, 1)")
    if n < 1:
        raise ValueError("n must be at least 1")
    inv = rates.m_log_inverse(m, c * n)
    k = max(1, math.floor(c * n / rates.m_value(m, inv.value)))
    return Parameters(inv.value, k, inv.clamped)


# --------------------------------------------------------------------------
# reports


@dataclass
class Verdict:
    name: str
    value: object
    threshold: str
    passed: bool

    def to_dict(self) -> dict:
        v = self.value
        if isinstance(v, (np.floating, np.integer)):
            v = v.item()
        return {"name": self.name, "value": v, "threshold": self.threshold, "passed": bool(self.passed)}


@dataclass
class DecayReport:
    label: str
    operator: str
    n: np.ndarray
    norms: np.ndarray
    exponent: float | None
    exponent_window: tuple[float, float]
    envelope_constants: dict = field(default_factory=dict)
    verdicts: list[Verdict] = field(default_factory=list)
    preconditions: dict = field(default_factory=dict)
    envelope: np.ndarray | None = None
    smoothed: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def verdict(self, name: str) -> Verdict:
        for v in self.verdicts:
            if v.name == name:
                return v
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "operator": self.operator,
            "grid": [int(n) for n in self.n],
            "exponent": self.exponent,
            "exponent_window": list(self.exponent_window),
            "envelope_constants": {str(k): v for k, v in self.envelope_constants.items()},
            "preconditions": self.preconditions,
            "verdicts": [v.to_dict() for v in self.verdicts],
            "passed": self.passed,
            "extra": self.extra,
        }

    def to_csv(self) -> str:
        cols = ["n", "norm"]
        if self.envelope is not None:
            cols += ["envelope", "ratio"]
        if self.smoothed:
            cols.append("smoothed_norm")
        lines = [",".join(cols)]
        for i, n in enumerate(self.n):
            row = [str(int(n)), _g(self.norms[i])]
            if self.envelope is not None:
                e = self.envelope[i]
                row += [_g(e), _g(self.norms[i] / e)]
            if self.smoothed:
                s = self.smoothed.get(int(n))
                row.append("" if s is None else _g(s))
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"


def _g(x) -> str:
    return format(float(x), ".17g")


def _exponent(seq: DecaySequence, window: tuple[float, float]) -> float | None:
    try:
        return rates.decay_exponent(seq, *window)
    except rates.InsufficientData:
        return None


def _exponent_verdict(exponent: float | None, seq: DecaySequence, window, band) -> Verdict:
    lo, hi = band
    thr = f"exponent on n in [{window[0]:g}, {window[1]:g}] within [{lo:g}, {hi:g}]"
    if exponent is None:
        mask = (seq.n >= window[0]) & (seq.n <= window[1])
        vanishes = bool(np.any(mask)) and not np.any(seq.values[mask] > 0)
        # an identically vanishing tail decays faster than any power
        return Verdict("decay_exponent", None, thr + " (or sequence vanishes)", vanishes)
    return Verdict("decay_exponent", exponent, thr, lo <= exponent <= hi)


def _trend_verdict(seq: DecaySequence, window) -> tuple[Verdict, Verdict, float]:
    mask = (seq.n >= window[0]) & (seq.n <= window[1])
    ns = seq.n[mask].astype(float)
    scaled = ns * seq.values[mask]
    sup = float(np.max(scaled, initial=0.0))
    finite = Verdict("sup_n_norm_finite", sup, "sup n*norm < inf", math.isfinite(sup))
    if ns.size == 0:
        return finite, Verdict("no_upward_trend", None, "last-decade max <= 2 x first-decade max", False), sup
    first = scaled[ns < ns[0] * 10]
    last = scaled[ns > ns[-1] / 10]
    a, b = float(first.max()), float(last.max())
    ok = b <= 2 * a if a > 0 else b == 0
    trend = Verdict("no_upward_trend", {"first_decade_max": a, "last_decade_max": b},
                    "last-decade max <= 2 x first-decade max", ok)
    return finite, trend, sup


def profile_grid(T: OperatorModel, n_points: int = 400, hi: float = math.pi) -> np.ndarray:
    """Angles in ``(0, hi]`` for resolvent sampling, geometric toward 0.

    The lower end sits at twice the smallest nonzero eigenvalue angle (for
    models whose spectrum approaches the circle along a discrete set of
    angles) or at ``1e-4``.
    """
    lam = T.eigenvalues_estimate()
    ang = np.abs(np.angle(lam))
    ang = ang[(ang > 1e-12) & (np.abs(lam) > 0)]
    lo = max(1e-4, 2 * float(ang.min())) if ang.size else 1e-4
    lo = min(lo, hi / 10)
    return np.geomspace(lo, hi, n_points)


def fit_rate(T: OperatorModel, fit_hi: float = 0.1, safety: float = 1.1) -> tuple[RateFunction, ops.ResolventProfile]:
    """Power law fitted to the resolvent profile near ``theta = 0+``.

    The exponent is the least-squares log-log slope on angles up to
    ``fit_hi``; the constant is ``safety`` times the largest
    ``profile * theta^alpha`` over the whole sampling grid.
    """
    th = profile_grid(T)
    prof = ops.resolvent_profile(T, th)
    near = th <= max(fit_hi, th[4])
    slope, _ = np.polyfit(np.log(th[near]), np.log(prof.norms[near]), 1)
    alpha = max(0.0, -float(slope))
    C = safety * float(np.max(prof.norms * th**alpha))
    return RateFunction.power_law(C, alpha), prof


def _validation_grid(T: OperatorModel, domain: float) -> np.ndarray:
    base = np.geomspace(1e-4, domain, 2000)
    lam = T.eigenvalues_estimate()
    ang = np.abs(np.angle(lam))
    ang = ang[(ang > 1e-12) & (ang <= domain)]
    return np.unique(np.concatenate([base, ang]))


def _envelope_fn(m: RateFunction, c: float):
    def env(ns):
        return np.array([rates.m_log_inverse(m, c * float(n)).value for n in np.atleast_1d(ns)])
    return env


def kt_experiment(
    T: OperatorModel,
    m: RateFunction | None = None,
    c: float | Sequence[float] = DEFAULT_C,
    n_grid=None,
    *,
    window: tuple[float, float] | None = None,
    exponent_band: tuple[float, float] | None = None,
    n_min: int = 100,
    power_n_max: int = 1000,
) -> DecayReport:
    """``||T^n (I - T)||`` against the envelope ``n -> m_log^-1(c n)``.

    Without ``m`` a power law is fitted to the resolvent profile (see
    :func:`fit_rate`) and the report is labelled as fitted.
    """
    grid = default_grid() if n_grid is None else _grid(n_grid)
    cs = [c] if isinstance(c, (int, float)) else list(c)
    for cc in cs:
        if not 0 < cc < 1:
            raise ValueError("c must lie in (0, 1)")
    fitted = m is None
    if fitted:
        m, _ = fit_rate(T)
    vgrid = _validation_grid(T, m.domain)
    prof = ops.resolvent_profile(T, vgrid)
    violations = int(np.count_nonzero(prof.norms > rates.m_value(m, vgrid)))
    lam = T.eigenvalues_estimate()
    off_one = (np.abs(np.abs(lam) - 1) <= ops.SPECTRAL_TOL) & (np.abs(lam - 1) > ops.SPECTRAL_TOL)
    pre = {
        "power_bound": ops.check_power_bounded(T, power_n_max),
        "unimodular_spectrum_off_1": int(np.count_nonzero(off_one)),
        "resolvent_envelope_violations": violations,
        "rate": m.to_spec(),
        "rate_fitted": fitted,
    }
    seq = ops.kt_sequence(T, grid)
    win = window or (float(n_min), float(grid[-1]))
    exponent = _exponent(seq, win)
    verdicts = [
        Verdict("resolvent_envelope", violations, "violations of ||R(e^{i theta})|| <= m(|theta|) == 0", violations == 0),
        Verdict("peripheral_spectrum", pre["unimodular_spectrum_off_1"], "unimodular eigenvalues other than 1 == 0",
                pre["unimodular_spectrum_off_1"] == 0),
        Verdict("power_bounded", pre["power_bound"], "sup ||T^n|| < inf", math.isfinite(pre["power_bound"])),
    ]
    env_consts = {}
    envelope = None
    clamped = {}
    for cc in cs:
        env = _envelope_fn(m, cc)
        clamped[str(cc)] = int(sum(rates.m_log_inverse(m, cc * float(n)).clamped for n in grid))
        C = rates.envelope_constant(seq, env, n_min)
        env_consts[cc] = C
        if envelope is None:
            envelope = env(grid)
        verdicts.append(Verdict(f"envelope_constant[c={cc:g}]", C, "finite", math.isfinite(C)))
    if exponent_band is not None:
        verdicts.append(_exponent_verdict(exponent, seq, win, exponent_band))
    if not verdicts[0].passed:
        warnings.warn(f"resolvent exceeds the rate function at {violations} sample angles", stacklevel=2)
    return DecayReport(
        label="kt (fitted rate)" if fitted else "kt",
        operator=repr(T),
        n=seq.n,
        norms=seq.values,
        exponent=exponent,
        exponent_window=win,
        envelope_constants=env_consts,
        verdicts=verdicts,
        preconditions=pre,
        envelope=envelope,
        extra={"envelope_clamped_points": clamped, "n_min": n_min},
    )


def kt_dimension_trend(
    alpha: float,
    sizes: Sequence[int] = (500, 1000, 2000),
    m: RateFunction | None = None,
    c: float = DEFAULT_C,
    n_grid=None,
    n_min: int = 100,
) -> dict[int, float]:
    """Envelope constant of :func:`kt_experiment` on ``kt_alpha_diag(alpha, K)`` for each ``K``.

    Without ``m`` every size gets its own fitted rate.  Whether the constants
    settle as ``K`` grows is an empirical question; this only tabulates them.
    """
    out = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for K in sizes:
            rep = kt_experiment(ops.kt_alpha_diag(alpha, int(K)), m, c, n_grid, n_min=n_min)
            out[int(K)] = rep.envelope_constants[c]
    return out


RITT_BAND = (-1.1, -0.9)


def _ritt_like(
    T: OperatorModel,
    E,
    n_grid,
    window,
    band,
    label: str,
    smoothing_ell: int,
    smoothing_n_max: int,
    threads: int | None,
) -> tuple[DecayReport, DecaySequence]:
    grid = default_grid() if n_grid is None else _grid(n_grid)
    seq = ops.e_kt_sequence(T, E, grid)
    win = window or (100.0, float(grid[-1]))
    exponent = _exponent(seq, win)
    finite, trend, sup = _trend_verdict(seq, win)
    verdicts = [_exponent_verdict(exponent, seq, win, band), finite, trend]
    rep = DecayReport(label, repr(T), seq.n, seq.values, exponent, win, verdicts=verdicts)
    rep.extra["sup_n_norm"] = sup
    return rep, seq


def smoothed_rate_check(
    T: OperatorModel,
    E=(1,),
    ns: Sequence[int] = (10, 30, 100, 300, 1000),
    ell: int = 3,
    k0: int = 1,
    threads: int | None = None,
) -> dict[int, float]:
    """``n^2 eps ||x^{eps}_n||`` at ``eps = 1 / n``.

    A bounded result is the predicted ``1 / (n^2 eps)`` shape of the smoothed
    sequence.
    """
    from .mollifier import build_mollifier

    m = build_mollifier(ell, k0)
    seq = PowerSequence(T, E)
    ns = [int(n) for n in ns if 1 / n <= math.pi / 2]

    def one(n):
        sm = smooth_sequence(seq, m, as_rational(1) / n, [n])
        return n, float(sm.norms[0]) * n  # n^2 * (1/n) * ||.||

    return dict(_pmap(one, ns, threads))


def ritt_experiment(
    T: OperatorModel,
    n_grid=None,
    *,
    window: tuple[float, float] | None = None,
    band: tuple[float, float] = RITT_BAND,
    smoothing_ns: Sequence[int] | None = None,
    smoothing_ell: int = 3,
    threads: int | None = None,
) -> DecayReport:
    """``||T^n (I - T)||`` against ``1/n``: exponent band, ``sup n ||.||`` and trend."""
    rep, seq = _ritt_like(T, (1,), n_grid, window, band, "ritt", smoothing_ell, 1000, threads)
    c_ritt = ops.check_ritt(T)
    rep.preconditions = {"ritt_constant": c_ritt, "power_bound": ops.check_power_bounded(T, 1000)}
    rep.verdicts.insert(0, Verdict("ritt_constant", c_ritt, "sup ||R(lambda)|| |lambda - 1| < inf", math.isfinite(c_ritt)))
    ns = smoothing_ns if smoothing_ns is not None else [int(n) for n in seq.n if 10 <= n <= 1000][::4]
    if ns:
        shape = smoothed_rate_check(T, (1,), ns, smoothing_ell, threads=threads)
        rep.extra["smoothed_n2_eps"] = {str(k): v for k, v in shape.items()}
        rep.smoothed = {k: v / k for k, v in shape.items()}
        top = max(shape.values())
        rep.verdicts.append(Verdict("smoothed_shape", top, "sup n^2 eps ||x^eps_n|| at eps = 1/n < inf", math.isfinite(top)))
    return rep


def e_ritt_experiment(
    T: OperatorModel,
    E,
    n_grid=None,
    *,
    window: tuple[float, float] | None = None,
    band: tuple[float, float] = RITT_BAND,
    partial_sum_n_max: int | None = None,
    threads: int | None = None,
) -> DecayReport:
    """``||T^n prod (xi - T)||`` against ``1/n`` plus rotated partial sums at every ``arg xi``."""
    pts = ops._unimodular(E)
    rep, seq = _ritt_like(T, pts, n_grid, window, band, "e_ritt", 3, 1000, threads)
    c_e = ops.check_e_ritt(T, pts)
    rep.preconditions = {"e_ritt_constant": c_e, "power_bound": ops.check_power_bounded(T, 1000), "E": [str(p) for p in pts]}
    rep.verdicts.insert(0, Verdict("e_ritt_constant", c_e, "sup ||R(lambda)|| min |lambda - xi| < inf", math.isfinite(c_e)))
    n_ps = int(partial_sum_n_max or seq.n[-1])
    ps = PowerSequence(T, pts)
    thetas = [math.atan2(p.imag, p.real) for p in pts]
    sums = dict(zip(thetas, _pmap(lambda t: ops.rotated_partial_sums(ps, t, n_ps), thetas, threads)))
    rep.extra["rotated_partial_sums"] = {f"{t:.17g}": v for t, v in sums.items()}
    rep.extra["partial_sum_n_max"] = n_ps
    top = max(sums.values())
    rep.verdicts.append(Verdict("rotated_partial_sums", top, "sup_p sup_n ||sum e^{-ik theta_p} x_k|| < inf", math.isfinite(top)))
    return rep


# --------------------------------------------------------------------------
# the boundary-integral identity


@dataclass
class CrosscheckReport:
    eps: float
    ell: int
    n: list[int]
    smoothed: list[np.ndarray]
    integral: list[np.ndarray]
    discrepancy: list[float]
    quadrature_error: list[float]
    n_trunc: int
    truncation_error: float

    @property
    def max_discrepancy(self) -> float:
        return max(self.discrepancy)

    def to_dict(self) -> dict:
        return {
            "eps": self.eps,
            "ell": self.ell,
            "n": self.n,
            "discrepancy": self.discrepancy,
            "quadrature_error": self.quadrature_error,
            "max_discrepancy": self.max_discrepancy,
            "n_trunc": self.n_trunc,
            "truncation_error": self.truncation_error,
        }


def identity_crosscheck(
    T: OperatorModel,
    m: Mollifier,
    eps,
    n_list: Sequence[int],
    *,
    target: float = 1e-12,
    rtol: float = 1e-11,
    threads: int | None = None,
) -> CrosscheckReport:
    """Compare the truncated convolution with the boundary integral of ``(I - T) R``.

    The discrepancy at each ``n`` is ``max |a - b| / max |b|`` over entries.
    """
    F = ops.kt_boundary_function(T)
    seq = PowerSequence(T, (1,))
    ns = sorted(set(int(n) for n in n_list))
    sm = smooth_sequence(seq, m, eps, ns, target=target)
    eps_q = as_eps(eps)

    def one(n):
        res = osc.boundary_integral(F, m, eps_q, n, rtol=rtol)
        if not res.converged:
            raise RuntimeError(f"boundary quadrature did not converge at n={n}")
        val = np.asarray(res.value)
        if isinstance(T, Diagonal):
            val = val.reshape(-1)
        return val, res.error

    results = _pmap(one, ns, threads)
    disc, ints, errs = [], [], []
    for i, (val, err) in enumerate(results):
        a = sm.terms[i]
        scale = float(np.max(np.abs(val)))
        disc.append(float(np.max(np.abs(a - val))) / scale if scale > 0 else float(np.max(np.abs(a))))
        ints.append(val)
        errs.append(float(err))
    return CrosscheckReport(float(eps_q), m.ell, ns, list(sm.terms), ints, disc, errs, sm.n_trunc, sm.truncation_error)

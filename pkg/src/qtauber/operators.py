"""Finite-dimensional operator models and the sequences they generate.

Two model kinds are supported.  :class:`Diagonal` stores eigenvalues only and
stands in for a normal operator on a Hilbert space (every norm is a max over
eigenvalues).  :class:`Dense` stores an arbitrary square matrix and uses
spectral norms.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

SPECTRAL_TOL = 1e-10


class InvalidModel(ValueError):
    pass


class SpectrumHit(ArithmeticError):
    """Raised when a resolvent is requested at (numerically) a point of the spectrum."""


class UnknownGallery(KeyError):
    pass


def spectral_norm(a: np.ndarray) -> float:
    if a.size == 0:
        return 0.0
    return float(np.linalg.norm(a, 2))


# --------------------------------------------------------------------------
# models


class OperatorModel:
    dimension: int

    def eigenvalues_estimate(self) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Diagonal(OperatorModel):
    eigenvalues: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=complex).ravel()
        if np.any(np.abs(lam) > 1 + 1e-12):
            raise InvalidModel("diagonal model needs every |lambda| <= 1")
        object.__setattr__(self, "eigenvalues", lam)

    @property
    def dimension(self) -> int:
        return self.eigenvalues.size

    def eigenvalues_estimate(self) -> np.ndarray:
        return self.eigenvalues

    def to_dense(self, unitary: np.ndarray | None = None) -> "Dense":
        u = dft_unitary(self.dimension) if unitary is None else unitary
        return Dense(u @ np.diag(self.eigenvalues) @ u.conj().T)

    def __repr__(self) -> str:
        return f"Diagonal(dimension={self.dimension})"


@dataclass(frozen=True, eq=False)
class Dense(OperatorModel):
    matrix: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.matrix, dtype=complex)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise InvalidModel("dense model needs a square matrix")
        rho = float(np.max(np.abs(np.linalg.eigvals(a)))) if a.size else 0.0
        if rho > 1 + SPECTRAL_TOL:
            raise InvalidModel(f"spectral radius {rho} exceeds 1")
        object.__setattr__(self, "matrix", a)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def eigenvalues_estimate(self) -> np.ndarray:
        return np.linalg.eigvals(self.matrix)

    def power(self, n: int) -> np.ndarray:
        return np.linalg.matrix_power(self.matrix, n)

    def __repr__(self) -> str:
        return f"Dense(dimension={self.dimension})"


def dft_unitary(d: int) -> np.ndarray:
    """Normalized DFT matrix, the fixed unitary used by ``dense_embed``."""
    j = np.arange(d)
    return np.exp(-2j * np.pi * np.outer(j, j) / d) / np.sqrt(d)


def _unimodular(points) -> tuple[complex, ...]:
    pts = tuple(complex(p) for p in points)
    if not pts:
        raise ValueError("E must be nonempty")
    if any(abs(abs(p) - 1) > 1e-12 for p in pts):
        raise ValueError("every point of E must be unimodular")
    return pts


# --------------------------------------------------------------------------
# sequences


@dataclass
class DecaySequence:
    label: str
    n: np.ndarray
    values: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.n = np.asarray(self.n, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=float)
        if self.n.shape != self.values.shape:
            raise ValueError("grid and values must have the same length")
        if np.any(np.diff(self.n) <= 0):
            raise ValueError("grid must be strictly increasing")
        if np.any(self.values < 0):
            raise ValueError("norms must be non-negative")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "norm"])
        for n, v in zip(self.n, self.values):
            w.writerow([int(n), format(float(v), ".17g")])
        return buf.getvalue()


@dataclass(frozen=True, eq=False)
class PowerSequence:
    """``x_n = T^n prod_{xi in E} (xi - T)``; ``E = (1,)`` gives ``T^n (I - T)``."""

    T: OperatorModel
    E: tuple[complex, ...] = (1 + 0j,)

    def __post_init__(self):
        object.__setattr__(self, "E", _unimodular(self.E))

    @property
    def is_diagonal(self) -> bool:
        return isinstance(self.T, Diagonal)

    def weight(self) -> np.ndarray:
        if isinstance(self.T, Diagonal):
            lam = self.T.eigenvalues
            w = np.ones_like(lam)
            for xi in self.E:
                w = w * (xi - lam)
            return w
        a = self.T.matrix
        eye = np.eye(a.shape[0], dtype=complex)
        w = eye
        for xi in self.E:
            w = w @ (xi * eye - a)
        return w

    def terms(self, ms: Iterable[int]) -> np.ndarray:
        """Stacked ``x_m``: shape ``(len(ms), K)`` (diagonal) or ``(len(ms), d, d)``."""
        ms = np.asarray(list(ms), dtype=np.int64)
        w = self.weight()
        if isinstance(self.T, Diagonal):
            lam = self.T.eigenvalues
            return _diag_powers(lam, ms) * w
        out = np.empty((ms.size,) + w.shape, dtype=complex)
        for i, m in enumerate(ms):
            out[i] = self.T.power(int(m)) @ w
        return out

    def term_norms(self, arr: np.ndarray) -> np.ndarray:
        return term_norms(arr)

    def sup_norm(self) -> float:
        """``sup_n ||x_n||`` (exact for diagonal models, sampled otherwise)."""
        if isinstance(self.T, Diagonal):
            return float(np.max(np.abs(self.weight()), initial=0.0))
        return float(np.max(self.term_norms(self.terms(range(0, 200)))))


def _diag_powers(lam: np.ndarray, ms: np.ndarray) -> np.ndarray:
    # lambda^m with 0^0 = 1
    with np.errstate(invalid="ignore"):
        out = lam[None, :] ** ms[:, None]
    return np.where(ms[:, None] == 0, 1.0 + 0j, out)


def term_norms(arr: np.ndarray) -> np.ndarray:
    """Operator norm of every term; 2-D input is read as stacked diagonals."""
    arr = np.asarray(arr)
    if arr.ndim == 1:
        return np.abs(arr)
    if arr.ndim == 2:
        return np.max(np.abs(arr), axis=1, initial=0.0)
    return np.array([spectral_norm(a) for a in arr])


def power_norm(T: OperatorModel, n: int) -> float:
    if n < 0:
        raise ValueError("n must be non-negative")
    if isinstance(T, Diagonal):
        if n == 0:
            return 1.0 if T.dimension else 0.0
        return float(np.max(np.abs(T.eigenvalues) ** n, initial=0.0))
    return spectral_norm(T.power(n))


def _sequence(T: OperatorModel, E, n_grid, label: str) -> DecaySequence:
    grid = np.asarray(sorted(set(int(n) for n in n_grid)), dtype=np.int64)
    if grid.size == 0:
        raise ValueError("n_grid must be nonempty")
    seq = PowerSequence(T, E)
    if isinstance(T, Diagonal):
        lam_abs = np.abs(T.eigenvalues)
        w_abs = np.abs(seq.weight())
        vals = np.array(
            [np.max(np.where(n == 0, 1.0, lam_abs ** float(n)) * w_abs, initial=0.0) for n in grid]
        )
    else:
        w = seq.weight()
        vals = np.array([spectral_norm(T.power(int(n)) @ w) for n in grid])
    return DecaySequence(label, grid, vals, {"operator": repr(T), "E": [str(x) for x in seq.E]})


def kt_sequence(T: OperatorModel, n_grid) -> DecaySequence:
    """``||T^n (I - T)||`` on the grid."""
    return _sequence(T, (1,), n_grid, "kt")


def e_kt_sequence(T: OperatorModel, E, n_grid) -> DecaySequence:
    """``||T^n prod_{xi in E} (xi - T)||`` on the grid."""
    return _sequence(T, E, n_grid, "e_kt")


# --------------------------------------------------------------------------
# resolvents


def resolvent(T: OperatorModel, lam: complex) -> np.ndarray:
    """``R(lam, T)`` (diagonal entries for a diagonal model)."""
    if isinstance(T, Diagonal):
        d = lam - T.eigenvalues
        if np.any(np.abs(d) < 1e-300):
            raise SpectrumHit(f"{lam} is an eigenvalue")
        return 1 / d
    a = lam * np.eye(T.dimension) - T.matrix
    s = np.linalg.svd(a, compute_uv=False)
    if s[-1] <= 1e-14 * max(1.0, s[0]):
        raise SpectrumHit(f"lambda I - T is singular at {lam}")
    return np.linalg.inv(a)


def resolvent_norm(T: OperatorModel, lam: complex) -> float:
    if isinstance(T, Diagonal):
        d = np.abs(lam - T.eigenvalues)
        if np.any(d < 1e-300):
            raise SpectrumHit(f"{lam} is an eigenvalue")
        return float(np.max(1 / d, initial=0.0))
    a = lam * np.eye(T.dimension) - T.matrix
    s = np.linalg.svd(a, compute_uv=False)
    if s[-1] <= 1e-14 * max(1.0, s[0]):
        raise SpectrumHit(f"lambda I - T is singular at {lam}")
    return float(1 / s[-1])


@dataclass(frozen=True)
class ResolventProfile:
    theta: np.ndarray
    norms: np.ndarray

    def slope(self, lo: float, hi: float) -> float:
        """Least-squares log-log slope of the samples with ``lo <= |theta| <= hi``."""
        mask = (np.abs(self.theta) >= lo) & (np.abs(self.theta) <= hi)
        x = np.log(np.abs(self.theta[mask]))
        y = np.log(self.norms[mask])
        return float(np.polyfit(x, y, 1)[0])


def resolvent_profile(T: OperatorModel, theta_grid) -> ResolventProfile:
    """``theta -> ||R(e^{i theta}, T)||`` on the grid."""
    th = np.asarray(theta_grid, dtype=float)
    vals = np.array([resolvent_norm(T, complex(np.exp(1j * t))) for t in th])
    return ResolventProfile(th, vals)


# --------------------------------------------------------------------------
# partial sums and hypothesis checks


def rotated_partial_sums(x, theta_p: float, n_max: int) -> float:
    """``sup_{n <= n_max} || sum_{k <= n} e^{-i k theta_p} x_k ||`` by direct summation.

    ``x`` is either a :class:`PowerSequence` or an array of terms whose first
    axis is ``k`` (2-D arrays are stacked diagonals, 3-D arrays matrices).
    """
    rot = complex(np.exp(-1j * theta_p))
    if isinstance(x, PowerSequence):
        if x.is_diagonal:
            lam = x.T.eigenvalues
            w = x.weight()
            term = w.astype(complex)
            s = term.copy()
            best = float(np.max(np.abs(s), initial=0.0))
            step = rot * lam
            for _ in range(n_max):
                term = term * step
                s += term
                best = max(best, float(np.max(np.abs(s), initial=0.0)))
            return best
        a = x.T.matrix
        term = x.weight().astype(complex)
        s = term.copy()
        best = spectral_norm(s)
        for _ in range(n_max):
            term = rot * (a @ term)
            s += term
            best = max(best, spectral_norm(s))
        return best
    arr = np.asarray(x)[: n_max + 1]
    if arr.shape[0] < n_max + 1:
        raise ValueError("need terms for k = 0 .. n_max")
    k = np.arange(n_max + 1)
    phase = np.exp(-1j * k * theta_p).reshape((-1,) + (1,) * (arr.ndim - 1))
    sums = np.cumsum(phase * arr, axis=0)
    return float(np.max(term_norms(sums), initial=0.0))


def check_power_bounded(T: OperatorModel, n_max: int) -> float:
    """``sup_{n <= n_max} ||T^n||``."""
    if isinstance(T, Diagonal):
        return 1.0 if T.dimension else 0.0
    best = 1.0
    p = np.eye(T.dimension, dtype=complex)
    for _ in range(n_max):
        p = p @ T.matrix
        best = max(best, spectral_norm(p))
    return best


def exterior_samples(n_radii: int = 24, n_angles: int = 181, r_min: float = 1e-5, r_max: float = 1.0) -> np.ndarray:
    """Points ``(1 + r) e^{i theta}`` with geometric ``r`` and ``theta`` in ``[-pi, pi]``."""
    radii = 1 + np.geomspace(r_min, r_max, n_radii)
    # angles cluster near 0 and pi where the gallery spectra touch the circle
    lin = np.linspace(-np.pi, np.pi, n_angles)
    near = np.geomspace(1e-6, 0.5, 40)
    angles = np.unique(np.concatenate([lin, near, -near, np.pi - near, -np.pi + near]))
    return (radii[:, None] * np.exp(1j * angles)[None, :]).ravel()


def check_ritt(T: OperatorModel, lam_samples=None) -> float:
    """``sup ||R(lambda, T)|| |lambda - 1|`` over exterior samples."""
    lam = exterior_samples() if lam_samples is None else np.asarray(lam_samples, dtype=complex)
    if np.any(np.abs(lam) <= 1):
        raise ValueError("samples must lie outside the closed unit disc")
    return max(resolvent_norm(T, complex(z)) * abs(z - 1) for z in lam)


def check_e_ritt(T: OperatorModel, E, lam_samples=None) -> float:
    """``sup ||R(lambda, T)|| / max_xi |lambda - xi|^-1`` over exterior samples."""
    pts = _unimodular(E)
    lam = exterior_samples() if lam_samples is None else np.asarray(lam_samples, dtype=complex)
    if np.any(np.abs(lam) <= 1):
        raise ValueError("samples must lie outside the closed unit disc")
    return max(resolvent_norm(T, complex(z)) * min(abs(z - xi) for xi in pts) for z in lam)


# --------------------------------------------------------------------------
# boundary functions


@dataclass(frozen=True, eq=False)
class BoundaryFunction:
    """``theta -> F(e^{i theta})`` away from the exclusion set.

    ``evaluate`` maps an array of angles to stacked values; ``derivative``
    returns theta-derivatives of order 1 or 2.
    """

    T: OperatorModel
    exclusion: tuple[complex, ...]

    def _check(self, theta: np.ndarray) -> None:
        z = np.exp(1j * theta)
        for xi in self.exclusion:
            if np.any(np.abs(z - xi) < 1e-300):
                raise SpectrumHit("boundary function evaluated on the exclusion set")

    def _pieces(self, theta: np.ndarray):
        # yields (lambda, R(lambda)) per angle
        for t in theta:
            lam = complex(np.exp(1j * t))
            yield lam, resolvent(self.T, lam)

    def evaluate(self, theta) -> np.ndarray:
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        self._check(th)
        if isinstance(self.T, Diagonal):
            lam = np.exp(1j * th)[:, None]
            return 1 + (1 - lam) / (lam - self.T.eigenvalues[None, :])
        eye = np.eye(self.T.dimension)
        return np.array([eye + (1 - lam) * r for lam, r in self._pieces(th)])

    def derivative(self, theta, order: int) -> np.ndarray:
        """``d^order/dtheta^order F(e^{i theta})`` for order 1 or 2."""
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        self._check(th)
        if order not in (1, 2):
            raise ValueError("order must be 1 or 2")
        out = []
        for lam, r in self._pieces(th):
            r2 = r * r if isinstance(self.T, Diagonal) else r @ r
            r3 = r2 * r if isinstance(self.T, Diagonal) else r2 @ r
            # derivatives in lambda, from dR/dlambda = -R^2
            d1 = -r - (1 - lam) * r2
            if order == 1:
                out.append(1j * lam * d1)
                continue
            d2 = 2 * r2 + 2 * (1 - lam) * r3
            out.append(-lam * d1 - lam**2 * d2)
        return np.array(out)


def kt_boundary_function(T: OperatorModel) -> BoundaryFunction:
    """Continuous extension of ``G_x(lambda) = I + (1 - lambda) R(lambda, T)`` to the circle."""
    lam = T.eigenvalues_estimate()
    on_circle = np.abs(np.abs(lam) - 1) <= SPECTRAL_TOL
    if np.any(on_circle & (np.abs(lam - 1) > SPECTRAL_TOL)):
        raise InvalidModel("spectrum touches the unit circle away from 1")
    return BoundaryFunction(T, (1 + 0j,))


# --------------------------------------------------------------------------
# gallery and specification documents


def ritt_diag(K: int) -> Diagonal:
    k = np.arange(1, K + 1, dtype=float)
    return Diagonal(1 - 1 / k)


def kt_alpha_diag(alpha: float, K: int) -> Diagonal:
    """``(1 - theta_k^alpha) e^{i theta_k}``, ``theta_k = pi / k``; indices with ``theta_k^alpha > 1`` are skipped."""
    k = np.arange(1, K + 1, dtype=float)
    th = np.pi / k
    keep = th**alpha <= 1
    th = th[keep]
    return Diagonal((1 - th**alpha) * np.exp(1j * th))


def e_ritt_diag(E, K: int) -> Diagonal:
    pts = _unimodular(E)
    base = ritt_diag(K).eigenvalues
    return Diagonal(np.concatenate([xi * base for xi in pts]))


def dense_embed(base: OperatorModel) -> Dense:
    if not isinstance(base, Diagonal):
        raise InvalidModel("dense_embed needs a diagonal base model")
    return base.to_dense()


GALLERY = {
    "ritt_diag": ritt_diag,
    "kt_alpha_diag": kt_alpha_diag,
    "e_ritt_diag": e_ritt_diag,
    "dense_embed": dense_embed,
}


def gallery(name: str, **params) -> OperatorModel:
    try:
        factory = GALLERY[name]
    except KeyError:
        raise UnknownGallery(f"unknown gallery model {name!r}; choose from {sorted(GALLERY)}") from None
    if name == "dense_embed" and isinstance(params.get("base"), dict):
        params = dict(params, base=operator_from_spec(params["base"]))
    return factory(**params)


def _pair(z: complex) -> list[float]:
    return [float(z.real), float(z.imag)]


def operator_to_spec(T: OperatorModel) -> dict:
    if isinstance(T, Diagonal):
        return {"kind": "diagonal", "eigenvalues": [_pair(z) for z in T.eigenvalues]}
    return {"kind": "dense", "matrix": [[_pair(z) for z in row] for row in T.matrix]}


def _complex(v) -> complex:
    if isinstance(v, (list, tuple)):
        return complex(v[0], v[1])
    return complex(v)


def operator_from_spec(spec: dict) -> OperatorModel:
    """Build a model from ``{"kind": ...}`` or ``{"gallery": name, "params": {...}}``."""
    if "gallery" in spec:
        params = dict(spec.get("params", {}))
        if "E" in params:
            params["E"] = [_complex(v) for v in params["E"]]
        return gallery(spec["gallery"], **params)
    kind = spec.get("kind")
    if kind == "diagonal":
        return Diagonal(np.array([_complex(v) for v in spec["eigenvalues"]], dtype=complex))
    if kind == "dense":
        return Dense(np.array([[_complex(v) for v in row] for row in spec["matrix"]], dtype=complex))
    raise InvalidModel(f"unknown operator kind {kind!r}")


def unit_points(angles: Sequence[float]) -> tuple[complex, ...]:
    return tuple(complex(math.cos(a), math.sin(a)) for a in angles)

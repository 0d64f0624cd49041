"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (the summary section lists
every criterion) or ``python3 tests/test_acceptance.py``.
"""

import math
import random
import time
from fractions import Fraction

import numpy as np
import pytest

from qtauber import operators as ops
from qtauber import oscillatory as osc
from qtauber import piecewise_poly as pp
from qtauber import rates, tauber
from qtauber.mollifier import build_mollifier

pytestmark = pytest.mark.acceptance

ELLS = range(1, 11)
K0S = (1, 2)


def _rational_points(rng, lo, hi, count, den=997):
    """``count`` distinct rationals in the open interval ``(lo, hi)``."""
    out = set()
    while len(out) < count:
        out.add(Fraction(rng.randrange(1, den), den) * (hi - lo) + lo)
    return sorted(out)


@pytest.fixture(scope="module")
def mollifiers():
    return {(ell, k0): build_mollifier(ell, k0) for k0 in K0S for ell in ELLS}


def test_criterion_1_mollifier_exactness(record_criterion):
    t0 = time.perf_counter()
    rng = random.Random(1)
    inner = _rational_points(rng, Fraction(-1), Fraction(1), 48) + [Fraction(-1), Fraction(1)]
    outer = [s * p for s in (1, -1) for p in _rational_points(rng, Fraction(2), Fraction(7), 24)]
    outer += [Fraction(2), Fraction(-2)]
    ramp = [s * p for s in (1, -1) for p in _rational_points(rng, Fraction(1), Fraction(2), 25)]
    failures = []
    for k0 in K0S:
        for ell in ELLS:
            phi = build_mollifier(ell, k0, certify=False).phi
            if any(pp.evaluate(phi, t) != 1 for t in inner):
                failures.append((ell, k0, "plateau"))
            if any(pp.evaluate(phi, t) != 0 for t in outer):
                failures.append((ell, k0, "outside"))
            if any(not 0 < pp.evaluate(phi, t) < 1 for t in ramp):
                failures.append((ell, k0, "ramp"))
    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < 120
    record_criterion(1, ok, f"{len(inner)}+{len(outer)}+{len(ramp)} exact points x 20 cutoffs, "
                            f"failures={failures}, {elapsed:.1f}s (< 120s)")
    assert ok


def test_criterion_2_smoothness(record_criterion, mollifiers):
    classes = {key: pp.smoothness_class(m.phi) for key, m in mollifiers.items()}
    bad = {k: c for k, c in classes.items() if c < k[0] + k[1]}
    record_criterion(2, not bad, f"smoothness_class >= ell + k0 for all 20 cutoffs; violations={bad}")
    assert not bad


def test_criterion_3_derivative_bounds(record_criterion):
    t0 = time.perf_counter()
    detail = []
    ok = True
    for k0 in K0S:
        ms = [build_mollifier(ell, k0) for ell in ELLS]
        for j in range(0, k0 + 2):
            vals = [float(m.norm(j).upper) for m in ms]
            spread = max(vals) / min(vals)
            ok &= spread < 2
            detail.append(f"k0={k0} j={j} spread={spread:.3f}")
        ratios = {}
        for m in ms:
            base = m.growth_base
            for j in range(k0 + 2, m.ell + k0 + 1):
                ratios.setdefault(j, []).append(float(m.norm(j).upper) / base ** (j - k0 - 1))
        all_r = [r for rs in ratios.values() for r in rs]
        if all_r:
            hi, lo = max(all_r), min(all_r)
            ok &= math.isfinite(hi)
            detail.append(f"k0={k0} growth ratios max={hi:.4g} min={lo:.4g}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 300
    record_criterion(3, ok, "; ".join(detail) + f"; {elapsed:.1f}s (< 300s)")
    assert ok


def test_criterion_4_coefficient_identities(record_criterion):
    t0 = time.perf_counter()
    m = build_mollifier(3, 1)
    detail, ok = [], True
    for eps in ("2/5", "1/5", "1/10"):
        e = pp.as_rational(eps)
        z = osc.z_coefficients(m, e, 2000)
        z0_err = abs(z[0] - 3 * float(e) / (2 * math.pi))
        sym = bool(np.all(z.values == z.values[::-1]))
        inv = abs(float(np.sum(z.values)) - 1)
        d1 = osc.difference_bounds(z).sup_n2
        d2 = osc.difference_bounds(osc.z_coefficients(m, e, 4000)).sup_n2
        stable = abs(d2 / d1 - 1) <= 0.5
        ok &= z0_err <= 1e-12 and sym and inv <= z.tail_bound and math.isfinite(d1) and stable
        detail.append(f"eps={eps}: |z0 err|={z0_err:.1e} sym={sym} |sum-1|={inv:.1e}<=tail={z.tail_bound:.1e} "
                      f"n2|d| {d1:.4g}->{d2:.4g}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 60
    record_criterion(4, ok, "; ".join(detail) + f"; {elapsed:.1f}s (< 60s)")
    assert ok


def test_criterion_5_defect_bound(record_criterion):
    t0 = time.perf_counter()
    x = ops.PowerSequence(ops.ritt_diag(2000))
    grid = tauber.default_grid()
    detail, ok = [], True
    for ell in (1, 3):
        m = build_mollifier(ell, 1)
        ratios = []
        for eps in (0.4, 0.2, 0.1, 0.05):
            sm = tauber.smooth_sequence(x, m, eps, grid)
            ok &= sm.truncation_error <= 0.01 * eps
            ratios.append(tauber.approximation_defect(x, sm).ratio)
        spread = max(ratios) / min(ratios)
        ok &= spread <= 4
        detail.append(f"ell={ell} defect/eps={[round(r, 4) for r in ratios]} spread={spread:.3f}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 180
    record_criterion(5, ok, "; ".join(detail) + f"; {elapsed:.1f}s (< 180s)")
    assert ok


def test_criterion_6_central_identity(record_criterion):
    t0 = time.perf_counter()
    T = ops.kt_alpha_diag(2, 53)
    assert T.dimension == 50
    rep = tauber.identity_crosscheck(T, build_mollifier(3, 1), "1/5", [0, 5, 50])
    elapsed = time.perf_counter() - t0
    ok = rep.max_discrepancy < 1e-6 and elapsed < 60
    record_criterion(6, ok, f"discrepancies={[f'{d:.2e}' for d in rep.discrepancy]} (< 1e-6), {elapsed:.1f}s (< 60s)")
    assert ok


def _decade_trend(seq):
    scaled = seq.n * seq.values
    first = scaled[seq.n < seq.n[0] * 10].max()
    last = scaled[seq.n > seq.n[-1] / 10].max()
    return first, last


def test_criterion_7_ritt_rate(record_criterion):
    t0 = time.perf_counter()
    T = ops.ritt_diag(2000)
    grid = tauber.default_grid(10**5, 100)
    seq = ops.kt_sequence(T, grid)
    k = np.arange(1, 2001, dtype=float)
    lam = 1 - 1 / k
    brute = np.array([max(lam[i] ** n * (1 - lam[i]) for i in range(lam.size)) for n in grid])
    oracle_err = float(np.max(np.abs(brute - seq.values) / np.maximum(brute, 1e-300)))
    exponent = rates.decay_exponent(seq, 100, 10**5)
    first, last = _decade_trend(seq)
    elapsed = time.perf_counter() - t0
    ok_exp = -1.1 <= exponent <= -0.9
    ok = ok_exp and last <= 2 * first and oracle_err <= 1e-12 and elapsed < 60
    record_criterion(
        7, ok,
        f"exponent on [1e2, 1e5]={exponent:.4f} in [-1.1,-0.9]: {ok_exp}; n*norm first/last decade max="
        f"{first:.4g}/{last:.4g}; brute-force rel err={oracle_err:.1e}; {elapsed:.1f}s (< 60s)",
    )
    assert ok


def test_criterion_8_quantified_kt(record_criterion):
    t0 = time.perf_counter()
    T = ops.kt_alpha_diag(2, 2000)
    rep = tauber.kt_experiment(T, c=0.5)
    fine = tauber.kt_experiment(T, c=0.5, n_grid=tauber.default_grid(per_decade=16))
    c1, c2 = rep.envelope_constants[0.5], fine.envelope_constants[0.5]
    stable = abs(c2 / c1 - 1) <= 0.3
    elapsed = time.perf_counter() - t0
    ok = (
        rep.exponent is not None and -0.65 <= rep.exponent <= -0.45 and math.isfinite(c1) and stable
        and rep.preconditions["resolvent_envelope_violations"] == 0 and elapsed < 120
    )
    record_criterion(
        8, ok,
        f"exponent={rep.exponent:.4f} in [-0.65,-0.45]; envelope C={c1:.4g} refined {c2:.4g}; "
        f"fitted rate {rep.preconditions['rate']}; {elapsed:.1f}s (< 120s)",
    )
    assert ok


def test_criterion_9_e_ritt(record_criterion):
    t0 = time.perf_counter()
    E = (1, -1)
    T = ops.e_ritt_diag(E, 2000)
    grid = tauber.default_grid(10**5, 100)
    seq = ops.e_kt_sequence(T, E, grid)
    exponent = rates.decay_exponent(seq, 100, 10**5)
    ps = ops.PowerSequence(T, E)
    sums = {th: ops.rotated_partial_sums(ps, th, 10**5) for th in (0.0, math.pi)}
    # each rotated family telescopes to (1 - mu^(n+1)) times the remaining factor, so |.| <= 2 * 2
    bounded = all(math.isfinite(v) and v <= 2 * 2 for v in sums.values())
    elapsed = time.perf_counter() - t0
    ok_exp = -1.1 <= exponent <= -0.9
    ok = ok_exp and bounded and elapsed < 120
    record_criterion(
        9, ok,
        f"exponent on [1e2, 1e5]={exponent:.4f} in [-1.1,-0.9]: {ok_exp}; rotated partial sums "
        f"{ {round(k, 4): round(v, 4) for k, v in sums.items()} }; {elapsed:.1f}s (< 120s)",
    )
    assert ok


def test_criterion_10_telescoping(record_criterion):
    t0 = time.perf_counter()
    worst = 0.0
    for base in (ops.ritt_diag(40), ops.kt_alpha_diag(2, 43), ops.e_ritt_diag((1, -1), 20)):
        T = ops.dense_embed(base)
        a = T.matrix
        eye = np.eye(a.shape[0])
        step = eye - a
        total = np.zeros_like(a)
        power = eye.astype(complex)
        for k in range(0, 1001):
            total += power @ step
            power = power @ a
            if k in (10, 100, 1000):
                # power now holds T^(k+1)
                worst = max(worst, float(np.max(np.abs(total - (eye - power)))))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and elapsed < 30
    record_criterion(10, ok, f"max |sum - (I - T^(n+1))| = {worst:.2e} (<= 1e-10), {elapsed:.1f}s (< 30s)")
    assert ok


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-rN"]))

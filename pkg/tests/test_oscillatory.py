import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from qtauber import operators as ops
from qtauber import oscillatory as osc
from qtauber import piecewise_poly as pp
from qtauber.mollifier import build_mollifier
from qtauber.oscillatory import LD, TWO_PI_LD, to_longdouble
from qtauber.piecewise_poly import PiecewisePolynomial, as_rational


def Q(p, q=1):
    return as_rational(p) / q


_MOLLIFIERS = {}


def mollifier(ell, k0=1):
    if (ell, k0) not in _MOLLIFIERS:
        _MOLLIFIERS[ell, k0] = build_mollifier(ell, k0)
    return _MOLLIFIERS[ell, k0]


def sinc_product(m, eps, ns):
    """Independent oracle: the box-convolution structure makes the Fourier
    transform of the cutoff a product of sinc factors."""
    e = to_longdouble(as_rational(eps))
    w = np.asarray(ns, dtype=LD) * e
    with np.errstate(invalid="ignore", divide="ignore"):
        def sinc(x):
            return np.where(x == 0, LD(1), np.sin(x) / x)

        v = 3 * sinc(LD(1.5) * w)
        for j in range(2, m.k0 + 3):
            v *= sinc(w / LD(2**j))
        v *= sinc(to_longdouble(m.small_width) * w) ** m.ell
    return v * e / TWO_PI_LD


def quad_z(m, eps, n):
    e = float(eps)
    cuts = sorted({float(b) * e for b in m.phi.breakpoints})
    val, _ = integrate.quad(lambda t: float(m.phi.evaluate_array(np.array([t / e]))[0]) * math.cos(n * t),
                            -2 * e, 2 * e, points=cuts, limit=500, epsabs=1e-14, epsrel=1e-13)
    return val / (2 * math.pi)


class TestOscillatoryIntegral:
    def test_indicator_low_frequencies(self):
        f = pp.make_indicator(-1, 1)
        assert osc.oscillatory_integral(f, 0) == pytest.approx(2, abs=1e-15)
        assert osc.oscillatory_integral(f, 1) == pytest.approx(2 * math.sin(1), abs=1e-15)

    def test_triangle_matches_quadrature(self):
        tri = PiecewisePolynomial.from_pieces([-1, 0, 1], [[0, 1], [1, -1]])
        got = osc.oscillatory_integral(tri, 2)
        re, _ = integrate.quad(lambda t: (1 - abs(t)) * math.cos(2 * t), -1, 1, points=[0], epsabs=1e-14)
        im, _ = integrate.quad(lambda t: (1 - abs(t)) * math.sin(2 * t), -1, 1, points=[0], epsabs=1e-14)
        assert abs(got - complex(re, im)) < 1e-10

    def test_interval_clipping(self):
        f = pp.make_indicator(-1, 1)
        got = osc.oscillatory_integral(f, 3, 0, 5)
        want = (np.exp(3j) - 1) / 3j
        assert abs(got - want) < 1e-15

    @settings(max_examples=40, deadline=None)
    @given(st.integers(-60, 60), st.integers(1, 15).map(lambda k: Q(k, 16)))
    def test_conjugation_and_additive_split(self, n, cut):
        f = PiecewisePolynomial.from_pieces([-1, Q(1, 3), 1], [[Q(1, 2), 2, -1], [1, 0, Q(-3, 4)]])
        whole = osc.oscillatory_integral(f, n)
        assert abs(osc.oscillatory_integral(f, -n) - whole.conjugate()) < 1e-14
        parts = osc.oscillatory_integral(f, n, -1, cut) + osc.oscillatory_integral(f, n, cut, 1)
        assert abs(parts - whole) < 1e-13

    @settings(max_examples=40, deadline=None)
    @given(st.integers(-40, 40))
    def test_linear_in_f(self, n):
        f = pp.make_indicator(-1, Q(1, 2))
        g = PiecewisePolynomial.from_pieces([0, 2], [[0, 1, 1]])
        lhs = osc.oscillatory_integral(f + g, n)
        rhs = osc.oscillatory_integral(f, n) + osc.oscillatory_integral(g, n)
        assert abs(lhs - rhs) < 1e-13


class TestCoefficients:
    def test_z0_and_symmetry(self):
        z = osc.z_coefficients(mollifier(2), Q(1, 5), 50)
        assert z[0] == pytest.approx(3 * 0.2 / (2 * math.pi), abs=1e-16)
        assert np.all(z.values == z.values[::-1])
        assert z.values.dtype == LD

    def test_z5_matches_quadrature(self):
        z = osc.z_coefficients(mollifier(2), Q(1, 5), 10)
        assert abs(z[5] - quad_z(mollifier(2), 0.2, 5)) < 1e-10

    @pytest.mark.parametrize("ell", [1, 2, 5, 10])
    @pytest.mark.parametrize("eps", ["1/300", "1/20", "2/5", "3/2"])
    def test_matches_sinc_product(self, ell, eps):
        m = mollifier(ell)
        z = osc.z_coefficients(m, Q(eps), 3000)
        want = sinc_product(m, eps, np.arange(-3000, 3001))
        assert float(np.max(np.abs(z.values - want))) < 1e-16

    def test_y_coefficients(self):
        m = mollifier(3)
        y = osc.y_coefficients(m, Q(1, 10), 20)
        z = osc.z_coefficients(m, Q(1, 10), 20)
        assert y[0] == pytest.approx(1 - 3 * 0.1 / (2 * math.pi), abs=1e-15)
        assert all(y[n] == -z[n] for n in range(1, 21))

    @pytest.mark.parametrize("eps", ["1/10", "1/5", "2/5"])
    def test_fourier_inversion_within_tail(self, eps):
        z = osc.z_coefficients(mollifier(3), Q(eps), 1000)
        assert abs(float(np.sum(z.values)) - 1) <= z.tail_bound

    def test_tail_bound_decreases(self):
        m = mollifier(3)
        tails = [osc.tail_bound(m, Q(1, 5), n) for n in (10, 100, 1000)]
        assert tails[0] > tails[1] > tails[2] >= 0
        assert osc.tail_bound(m, Q(1, 5), 100, "best") <= tails[1]

    def test_tail_bound_dominates_actual_tail(self):
        m = mollifier(2)
        z = osc.z_coefficients(m, Q(1, 5), 20000)
        for n_max in (50, 500):
            actual = 2 * float(np.sum(np.abs(z.values[z.n_max + n_max + 1:])))
            assert actual <= osc.tail_bound(m, Q(1, 5), n_max, "best")

    def test_truncation_radius_is_minimal(self):
        m = mollifier(3)
        n = osc.truncation_radius(m, Q(1, 5), 1e-6)
        assert osc.tail_bound(m, Q(1, 5), n, "best") <= 1e-6
        assert osc.tail_bound(m, Q(1, 5), n - 1, "best") > 1e-6
        with pytest.raises(osc.TruncationInfeasible):
            osc.truncation_radius(m, Q(1, 5), 1e-300, n_cap=1000)

    def test_l1_stable_under_doubling(self):
        m = mollifier(3)
        a = osc.z_coefficients(m, Q(1, 5), 1000)
        b = osc.z_coefficients(m, Q(1, 5), 2000)
        sa, sb = a.l1_sum() + a.tail_bound, b.l1_sum() + b.tail_bound
        assert math.isfinite(sa) and abs(sb / sa - 1) <= 0.01

    def test_rejects_bad_eps(self):
        with pytest.raises(osc.InvalidEpsilon):
            osc.z_coefficients(mollifier(1), 0, 5)
        with pytest.raises(osc.InvalidEpsilon):
            osc.z_coefficients(mollifier(1), 2, 5)

    def test_csv_layout(self):
        z = osc.z_coefficients(mollifier(2), Q(1, 5), 4)
        text = z.to_csv()
        head, body = text.split("\n", 1)
        assert head.startswith("# kind=z,eps=0.20000000000000001,ell=2,k0=1")
        rows = list(csv.reader(io.StringIO(body)))
        assert rows[0] == ["n", "z_n", "l1_running"]
        assert [int(r[0]) for r in rows[1:]] == list(range(5))
        assert float(rows[1][1]) == pytest.approx(3 * 0.2 / (2 * math.pi))
        assert z.to_csv() == text


class TestDifferences:
    def test_scale_invariance_across_eps(self):
        m = mollifier(3)
        vals = [osc.difference_bounds(osc.z_coefficients(m, e, 2000)).sup_abs_over_eps2
                for e in (Q(2, 5), Q(1, 5), Q(1, 10))]
        assert max(vals) / min(vals) < 4

    def test_n2_weighted_bounded(self):
        m = mollifier(3)
        d = osc.difference_bounds(osc.z_coefficients(m, Q(1, 5), 10**4))
        ibp = 2 * osc.tail_constant(m, Q(1, 5), 2)
        # |d_n| <= int |(1 - e^{-i theta}) phi(theta/eps)''| / (2 pi n^2) stays finite and below 2K
        assert math.isfinite(d.sup_n2) and d.sup_n2 <= 2 * ibp

    def test_d0_two_ways(self):
        m = mollifier(3)
        eps = Q(1, 5)
        z = osc.z_coefficients(m, eps, 5)
        stored = z[0] - z[-1]
        g = pp.affine(m.phi, eps)
        # z_{-1} = (2 pi)^-1 int e^{-i theta} phi
        direct = (osc.oscillatory_integral(g, 0) - osc.oscillatory_integral(g, -1)) / (2 * math.pi)
        assert abs(stored - direct.real) < 1e-12 and abs(direct.imag) < 1e-12


class TestBoundaryIntegral:
    def test_zero_function(self):
        class Zero:
            def evaluate(self, theta):
                return np.zeros((np.size(theta), 3))

        res = osc.boundary_integral(Zero(), mollifier(2), Q(1, 5), 4)
        assert res.converged and np.all(res.value == 0)

    @pytest.mark.parametrize("n", [0, 1, 5, 20])
    def test_zero_operator_reduces_to_y(self, n):
        m = mollifier(2)
        F = ops.kt_boundary_function(ops.Diagonal(np.array([0j])))
        res = osc.boundary_integral(F, m, Q(1, 5), n)
        y = osc.y_coefficients(m, Q(1, 5), 25)
        assert abs(complex(res.value[0]) - y[n]) < 1e-9

    def test_adaptive_quadrature_polynomial(self):
        res = osc.adaptive_quadrature(lambda x: x**3 - x, [0, 0.5, 2])
        assert res.converged and abs(res.value - 2.0) < 1e-13
        with pytest.raises(ValueError):
            osc.adaptive_quadrature(lambda x: x, [1.0])

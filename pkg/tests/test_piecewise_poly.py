from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from qtauber import piecewise_poly as pp
from qtauber.piecewise_poly import PiecewisePolynomial, as_rational


def Q(p, q=1):
    return as_rational(p) / q


def _rationals(lo=-4, hi=4, den=64):
    return st.integers(lo * den, hi * den).map(lambda k: Q(k) / den)


@st.composite
def piecewise(draw, max_pieces=4, max_degree=3):
    cuts = sorted(draw(st.sets(_rationals(-3, 3, 16), min_size=2, max_size=max_pieces + 1)))
    pieces = []
    for _ in range(len(cuts) - 1):
        deg = draw(st.integers(0, max_degree))
        pieces.append([draw(_rationals(-2, 2, 8)) for _ in range(deg + 1)])
    return PiecewisePolynomial.from_pieces(cuts, pieces)


def test_indicator_values_and_convention():
    f = pp.make_indicator(-1, 1)
    assert pp.evaluate(f, 0) == 1
    assert pp.evaluate(f, -1) == 1  # right limit
    assert pp.evaluate(f, 1) == 1  # left limit at the last breakpoint
    assert pp.evaluate(f, Q(3, 2)) == 0
    assert pp.integral(f) == 2


def test_invalid_interval_rejected():
    with pytest.raises(pp.InvalidInterval):
        pp.make_indicator(1, 1)
    with pytest.raises(pp.InvalidParameter):
        pp.make_box_kernel(0)


def test_box_kernel_has_unit_mass():
    assert pp.integral(pp.make_box_kernel(Q(1, 8))) == 1


def test_convolving_indicator_with_box_gives_trapezoid():
    f = pp.convolve_box(pp.make_indicator(-1, 1), Q(1, 2))
    assert f.breakpoints == (Q(-3, 2), Q(-1, 2), Q(1, 2), Q(3, 2))
    assert pp.evaluate(f, -1) == Q(1, 2)
    assert pp.evaluate(f, 0) == 1
    assert pp.integral(f) == 2


@pytest.mark.parametrize("a", ["1/3", "1/2", "5/4"])
def test_convolve_box_matches_quadrature(a):
    a = Q(a)
    f = PiecewisePolynomial.from_pieces([-1, 0, 2], [[1, 2, -1], [1, Q(1, 3)]])
    g = pp.convolve_box(f, a)
    af = float(a)
    for t in np.linspace(-2.5, 3.5, 23):
        val, _ = integrate.quad(lambda s: float(pp.evaluate(f, Q(s))), t - af, t + af,
                                points=[-1, 0, 2], limit=200)
        assert abs(float(pp.evaluate(g, Q(t))) - val / (2 * af)) < 1e-12


def test_smoothness_class_of_repeated_box_convolutions():
    f = pp.make_indicator(-1, 1)
    assert pp.smoothness_class(f) == -1
    for k in range(1, 4):
        f = pp.convolve_box(f, Q(1, 2**k))
        assert pp.smoothness_class(f) == k - 1
    assert pp.smoothness_class(PiecewisePolynomial.zero()) == pp.INFINITE_SMOOTHNESS


def test_jump_jets_of_indicator():
    jets = pp.jump_jets(pp.make_indicator(0, 1))
    assert jets == [(0, (1,)), (1, (-1,))]


def test_affine_rescaling():
    f = pp.make_indicator(-1, 1)
    g = pp.affine(f, Q(1, 5), Q(1))
    assert g.hull == (Q(4, 5), Q(6, 5))
    assert pp.integral(g) == Q(2, 5)


def test_restrict_and_mirror():
    f = PiecewisePolynomial.from_pieces([0, 2], [[0, 1]])
    r = pp.restrict(f, 1, 3)
    assert r.hull == (1, 2)
    assert pp.evaluate(r, Q(3, 2)) == Q(3, 2)
    m = pp.mirror(f)
    assert pp.evaluate(m, -1) == 1
    assert not pp.is_even(f)
    assert pp.is_even(pp.make_indicator(-2, 2))


def test_sup_norm_brackets_known_maximum():
    # 1 - theta^2 on [-1, 1] peaks at 1
    f = PiecewisePolynomial.from_pieces([-1, 1], [[0, 2, -1]])
    b = pp.sup_norm(f, -1, 1, rtol=1e-9)
    assert b.lower <= 1 <= b.upper
    assert float(b.gap) <= 1e-9


def test_sup_norm_of_cubic_against_calculus():
    f = PiecewisePolynomial.from_pieces([0, 1, 3], [[0, 3, 0, -4], [Q(-1), 1, 2, -1]])
    b = pp.sup_norm(f, 0, 3, rtol=1e-8)
    # second piece -1 + s + 2 s^2 - s^3 peaks at s = (2 + sqrt 7) / 3
    s = (2 + 7**0.5) / 3
    peak = -1 + s + 2 * s**2 - s**3
    assert float(b.lower) <= peak * (1 + 1e-14)
    assert peak <= float(b.upper) * (1 + 1e-14)
    assert float(b.gap) <= 1e-8 * peak


def test_has_no_root_open_detects_roots():
    # (x - 1/2)(x - 1) on (0, 2) has roots
    assert not pp.has_no_root_open((Q(1, 2), Q(-3, 2), 1), Q(2))
    # x^2 + 1 has none
    assert pp.has_no_root_open((1, 0, 1), Q(5))


def test_serialization_round_trip():
    f = pp.convolve_box(pp.make_indicator(Q(-3, 2), Q(3, 2)), Q(1, 4))
    g = PiecewisePolynomial.from_json(f.to_json())
    assert g == f
    d = f.to_dict()
    assert d["basis"] == "local"
    assert all("/" in s or s.lstrip("-").isdigit() for s in d["breakpoints"])


def test_from_pieces_rejects_unsorted():
    with pytest.raises(pp.InvalidInterval):
        PiecewisePolynomial.from_pieces([1, 0], [[1]])


def test_as_rational_inputs():
    assert as_rational("3/4") == Fraction(3, 4)
    assert as_rational(Fraction(1, 3)) == Fraction(1, 3)
    assert as_rational(0.5) == Fraction(1, 2)


@settings(max_examples=60, deadline=None)
@given(piecewise(), piecewise())
def test_addition_is_pointwise(f, g):
    h = f + g
    for t in [Q(k, 7) for k in range(-28, 29)]:
        assert pp.evaluate(h, t) == pp.evaluate(f, t) + pp.evaluate(g, t) or t in set(f.breakpoints) | set(g.breakpoints)


@settings(max_examples=60, deadline=None)
@given(piecewise())
def test_derivative_of_antiderivative_is_identity(f):
    assert pp.differentiate(pp.antiderivative(f)) == f


@settings(max_examples=60, deadline=None)
@given(piecewise(), _rationals(0, 1, 32).filter(lambda a: a > 0))
def test_box_convolution_preserves_mass(f, a):
    assert pp.integral(pp.convolve_box(f, a)) == pp.integral(f)


@settings(max_examples=60, deadline=None)
@given(piecewise())
def test_integral_matches_quadrature(f):
    total = 0.0
    for i, p in enumerate(f.pieces):
        lo, hi = float(f.breakpoints[i]), float(f.breakpoints[i + 1])
        val, _ = integrate.quad(lambda s: sum(float(c) * (s - lo) ** k for k, c in enumerate(p)), lo, hi)
        total += val
    assert abs(float(pp.integral(f)) - total) < 1e-10


@settings(max_examples=60, deadline=None)
@given(piecewise())
def test_json_round_trip_property(f):
    assert PiecewisePolynomial.from_json(f.to_json()) == f


@settings(max_examples=40, deadline=None)
@given(piecewise())
def test_float_evaluation_agrees_with_exact(f):
    xs = [Q(k, 5) for k in range(-20, 21)]
    exact = np.array([float(pp.evaluate(f, x)) for x in xs])
    approx = f.evaluate_array(np.array([float(x) for x in xs]))
    on_break = np.array([x in set(f.breakpoints) for x in xs])
    assert np.allclose(exact[~on_break], approx[~on_break], rtol=1e-12, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(piecewise())
def test_sup_norm_bracket_contains_sampled_max(f):
    if f.is_zero:
        return
    lo, hi = f.hull
    b = pp.sup_norm(f, lo, hi, rtol=1e-6)
    xs = np.linspace(float(lo), float(hi), 2001)[1:-1]
    sampled = float(np.max(np.abs(f.evaluate_array(xs))))
    assert sampled <= float(b.upper) * (1 + 1e-12) + 1e-15
    assert b.lower <= b.upper

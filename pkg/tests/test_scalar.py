from __future__ import annotations

import random
from fractions import Fraction

import pytest
from gmpy2 import mpq
from hypothesis import given, settings
from hypothesis import strategies as st

from exactber.scalar import (
    BackendMismatchError,
    NumericBackend,
    Poly,
    RatFn,
    RationalBackend,
    Series,
    SeriesBackend,
    SeriesPoleError,
    eval_at_p,
    format_rational,
    is_zero,
    make_backend,
    parse_rational,
    poly_gcd,
    poly_mul,
    ratfn_reduce,
    series_from_ratfn,
)

P = Poly([0, 1])
M1_NUM = Poly([0, 0, 14, -23, 16, 2, -16, 8])
M1_DEN_A = Poly([1, 0, 3, -2])
M1_DEN_B = Poly([2, -1, 4, -4])

small_ints = st.integers(min_value=-20, max_value=20)
polys = st.lists(small_ints, min_size=0, max_size=5).map(Poly)
nonzero_polys = polys.filter(lambda a: not a.is_zero())
units = st.lists(small_ints, min_size=1, max_size=5).filter(lambda c: c[0] != 0).map(Poly)


# --- polynomials ---------------------------------------------------------

def test_poly_mul_identity():
    assert poly_mul(Poly([1]), M1_DEN_A) == M1_DEN_A


def test_poly_mul_denominator_product():
    assert poly_mul(M1_DEN_A, M1_DEN_B) == Poly([2, -1, 10, -11, 14, -20, 8])


def test_poly_mul_p_times_p():
    assert poly_mul(P, P) == Poly([0, 0, 1])


def test_poly_trimming():
    assert Poly([1, 2, 0, 0]) == Poly([1, 2])
    assert Poly([0, 0]).is_zero()
    assert Poly([0, 0]).degree == -1


def test_poly_divmod_and_gcd():
    a = poly_mul(Poly([1, 1]), Poly([2, 0, 1]))
    b = poly_mul(Poly([1, 1]), Poly([3, 1]))
    assert poly_gcd(a, b) == Poly([1, 1])
    q, r = a.divmod(Poly([1, 1]))
    assert r.is_zero() and q == Poly([2, 0, 1])


@given(polys, polys, polys)
def test_poly_ring_axioms(a, b, c):
    assert (a + b) * c == a * c + b * c
    assert a * b == b * a
    assert (a - a).is_zero()


@given(polys, nonzero_polys)
def test_poly_division_identity(a, b):
    q, r = a.divmod(b)
    assert q * b + r == a
    assert r.degree < b.degree


# --- rational functions ----------------------------------------------------

def test_reduce_common_factor():
    r = RatFn(Poly([0, 0, 2, 2]), Poly([2, 2]))
    assert r.num == Poly([0, 0, 1]) and r.den == Poly([1])


def test_reduce_zero():
    r = RatFn(Poly(), Poly([1, 1]))
    assert r.is_zero() and r.den == Poly([1])
    assert is_zero(r)


def test_zero_denominator_rejected():
    with pytest.raises(ZeroDivisionError, match="division by zero polynomial"):
        RatFn(Poly([1]), Poly())


def test_integer_form_sign_and_content():
    r = RatFn(Poly([mpq(1, 2)]), Poly([mpq(-1, 3), 1]))
    num, den = r.integer_form()
    assert den[-1] > 0
    assert Fraction(num[0], 1) / Fraction(den[0], 1) == Fraction(-3, 2)


@given(polys, units)
def test_reduce_idempotent(n, d):
    r = RatFn(n, d)
    again = ratfn_reduce(r)
    assert again.num == r.num and again.den == r.den
    assert poly_gcd(r.num, r.den).degree <= 0 or r.num.is_zero()


@given(polys, units, polys, units)
def test_ratfn_field_ops(n1, d1, n2, d2):
    a, b = RatFn(n1, d1), RatFn(n2, d2)
    assert (a + b) - b == a
    if not b.is_zero():
        assert (a / b) * b == a


def test_ratfn_json_roundtrip():
    r = RatFn(M1_NUM, poly_mul(M1_DEN_A, M1_DEN_B))
    obj = r.to_json()
    assert all(s[0] in "+-" and "/" in s for s in obj["num"] + obj["den"])
    assert RatFn.from_json(obj) == r


def test_rational_format_and_parse():
    assert format_rational(mpq(-3, 4)) == "-3/4"
    assert format_rational(5) == "+5/1"
    assert parse_rational("-3/4") == mpq(-3, 4)
    assert parse_rational("+7/1") == 7


# --- series --------------------------------------------------------------------

def test_series_geometric():
    s = series_from_ratfn(RatFn(Poly([1]), Poly([1, -1])), 2)
    assert s == Series([1, 1, 1], 2)


def test_series_of_example_one_closed_form():
    r = RatFn(M1_NUM, poly_mul(M1_DEN_A, M1_DEN_B))
    s = series_from_ratfn(r, 5)
    assert [s.coeffs[k] for k in range(6)] == [0, 0, 7, -8, -31, 64]


def test_series_pole():
    with pytest.raises(SeriesPoleError, match="series pole at p=0"):
        series_from_ratfn(RatFn(Poly([1]), Poly([0, 1])), 3)


def test_series_nonunit_division():
    with pytest.raises(ZeroDivisionError, match="non-unit"):
        Series([1], 3) / Series([0, 1], 3)


def test_series_order_mismatch():
    with pytest.raises(BackendMismatchError):
        Series([1], 3) + Series([1], 4)


def test_backend_mismatch_ratfn_series():
    with pytest.raises(BackendMismatchError):
        RatFn(Poly([1])) + Series([1], 3)


@given(units, st.integers(min_value=1, max_value=8))
def test_series_inverse(u, order):
    s = Series(u.coeffs, order)
    assert s * s.inverse() == Series([1], order)


@given(polys, units)
@settings(max_examples=60)
def test_series_matches_ratfn_product(n, d):
    r = RatFn(n, d)
    s = series_from_ratfn(r, 6)
    assert s * Series(d.coeffs, 6) == Series(n.coeffs, 6)


def test_series_resummation_small_p():
    r = RatFn(M1_NUM, poly_mul(M1_DEN_A, M1_DEN_B))
    s = series_from_ratfn(r, 8)
    nxt = series_from_ratfn(r, 9).coeffs[9]
    for p in (1e-3, 5e-4, 1e-4):
        err = abs(float(eval_at_p(s, p)) - float(eval_at_p(r, p)))
        assert err <= 10 * abs(float(nxt)) * p ** 9 + 1e-18


def test_series_json():
    s = Series([0, 1, mpq(-1, 2)], 4)
    assert Series.from_json(s.to_json()) == s
    assert str(s).endswith("O(p^5)")


# --- evaluation and backends -------------------------------------------------

def test_eval_at_zero():
    r = RatFn(M1_NUM, poly_mul(M1_DEN_A, M1_DEN_B))
    assert eval_at_p(r, 0) == 0


def test_eval_matches_printed_formula():
    r = RatFn(M1_NUM, poly_mul(M1_DEN_A, M1_DEN_B))
    p = 0.01
    direct = (14 * p**2 - 23 * p**3 + 16 * p**4 + 2 * p**5 - 16 * p**6 + 8 * p**7) / (
        (1 + 3 * p**2 - 2 * p**3) * (2 - p + 4 * p**2 - 4 * p**3)
    )
    assert float(eval_at_p(r, p)) == pytest.approx(direct, rel=1e-12)


def test_eval_exact_rational():
    r = RatFn(Poly([1, 2]), Poly([3, 0, 1]))
    assert eval_at_p(r, mpq(1, 2)) == mpq(8, 13)


def test_make_backend():
    assert isinstance(make_backend("exact"), RationalBackend)
    assert make_backend("series", order=7).order == 7
    assert make_backend("numeric", p=0.1).p == 0.1
    with pytest.raises(ValueError):
        make_backend("bogus")


def test_numeric_backend_from_poly():
    assert NumericBackend(0.1).from_poly(Poly([1, 1])) == pytest.approx(1.1)


def test_backend_pivot_rules():
    sb = SeriesBackend(4)
    assert sb.pivot_rank(Series([1, 1], 4)) is not None
    assert sb.pivot_rank(Series([0, 1], 4)) is None
    assert RationalBackend().pivot_rank(RatFn(Poly())) is None
    assert NumericBackend(0.1).pivot_rank(0.0) is None


def test_exact_vs_numeric_over_random_points():
    """Ring operations commute with evaluation at 1000 random rational points."""
    rng = random.Random(12345)
    exact = RationalBackend()
    a = exact.from_poly(M1_NUM)
    b = exact.from_poly(poly_mul(M1_DEN_A, M1_DEN_B))
    combos = {"add": a + b, "sub": a - b, "mul": a * b, "div": a / b}
    for _ in range(1000):
        p = mpq(rng.randint(1, 9999), 20000)
        num = NumericBackend(float(p))
        fa, fb = num.from_poly(M1_NUM), num.from_poly(poly_mul(M1_DEN_A, M1_DEN_B))
        floats = {"add": fa + fb, "sub": fa - fb, "mul": fa * fb, "div": fa / fb}
        for key, val in combos.items():
            ev = float(eval_at_p(val, p))
            assert ev == pytest.approx(floats[key], rel=1e-10, abs=1e-300)

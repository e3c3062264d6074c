from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.integrate import quad

from exactber.channel import (
    Quantizer,
    QuantizerError,
    awgn_dmc,
    bsc,
    bsc_tuple_prob,
    cutoff_rate,
    design_quantizer,
    gaussian_tail,
    hamming_metric,
    integer_metrics,
    noise_sigma,
    uniform_thresholds,
)
from exactber.scalar import NumericBackend, Poly, RationalBackend


def test_bsc_tuple_all_zero_polynomial():
    probs = bsc().tuple_probs_poly(3)
    assert probs[0] == Poly([1, -3, 3, -1])


@pytest.mark.parametrize("c", [2, 3])
def test_bsc_tuple_probs_sum_to_one(c):
    total = Poly()
    for poly in bsc().tuple_probs_poly(c):
        total = total + poly
    assert total == Poly([1])
    assert bsc(0.13).tuple_probs_numeric(c).sum() == pytest.approx(1.0, abs=1e-15)


def test_bsc_tuple_prob_by_weight():
    be = RationalBackend()
    assert bsc_tuple_prob(0b101, 3, be) == be.from_poly(Poly([0, 0, 1, -1]))
    assert bsc_tuple_prob((0, 1, 0), 3, NumericBackend(0.1)) == pytest.approx(0.1 * 0.81)


def test_hamming_metric_examples():
    assert hamming_metric((0, 1, 1), (0, 1, 1)) == 3
    assert hamming_metric((0, 1, 1), (1, 0, 0)) == 0
    assert hamming_metric((1, 1, 0), (1, 0, 0)) == 2
    d = bsc()
    assert d.branch_metric((1, 1, 0), (1, 0, 0)) == 2


def test_bsc_rejects_bad_p():
    with pytest.raises(ValueError):
        bsc(0.7)


def test_two_level_quantizer_is_a_bsc():
    q = design_quantizer(2, 3.0, 0.5)
    d = awgn_dmc(q, scale=None)
    p = float(gaussian_tail(1.0 / q.sigma))
    # symbols run from most negative to most positive; bit 0 is sent as +1
    assert d.prob0 == pytest.approx([p, 1 - p], abs=1e-15)


def test_quantized_symmetry():
    q = design_quantizer(8, 1.0, 0.5)
    d = awgn_dmc(q)
    np.testing.assert_allclose(d.prob0, d.prob1[::-1], atol=1e-15)
    assert d.metric0 == d.metric1[::-1]


def test_eight_level_bins_against_quadrature():
    q = design_quantizer(8, 0.0, 0.5)
    d = awgn_dmc(q, scale=None)
    s = q.sigma
    pdf = lambda y: math.exp(-((y - 1.0) ** 2) / (2 * s * s)) / (s * math.sqrt(2 * math.pi))  # noqa: E731
    edges = [-np.inf, *q.thresholds, np.inf]
    for j in range(8):
        val, _ = quad(pdf, edges[j], edges[j + 1], epsabs=1e-13, epsrel=1e-12)
        assert d.prob0[j] == pytest.approx(val, abs=1e-10)


def test_cutoff_rate_limits():
    assert cutoff_rate((np.array([1.0, 0.0]), np.array([0.0, 1.0]))) == pytest.approx(1.0)
    assert cutoff_rate(bsc(0.5)) == pytest.approx(0.0, abs=1e-15)


def test_soft_quantization_beats_hard():
    hard = design_quantizer(2, 2.0, 0.5)
    soft = design_quantizer(8, 2.0, 0.5)
    assert soft.r0 > hard.r0


def test_massey_at_least_uniform():
    for levels in (4, 7, 8):
        uni = design_quantizer(levels, 2.0, 0.5, "uniform")
        mas = design_quantizer(levels, 2.0, 0.5, "massey")
        assert mas.r0 >= uni.r0 - 1e-12


def test_massey_two_level_threshold_zero():
    assert design_quantizer(2, 2.0, 0.5, "massey").thresholds.tolist() == [0.0]


def test_uniform_threshold_patterns():
    np.testing.assert_allclose(uniform_thresholds(8, 0.5), [-1.5, -1, -0.5, 0, 0.5, 1, 1.5])
    np.testing.assert_allclose(uniform_thresholds(7, 0.5), [-1.25, -0.75, -0.25, 0.25, 0.75, 1.25])


def test_quantizer_validation():
    with pytest.raises(QuantizerError):
        design_quantizer(1, 2.0, 0.5)
    with pytest.raises(QuantizerError):
        design_quantizer(4, 2.0, 0.5, "lloyd")
    with pytest.raises(QuantizerError):
        Quantizer(3, np.array([-0.5, 0.7]), "uniform", 2.0, 0.5)
    with pytest.raises(QuantizerError):
        Quantizer(3, np.array([0.5, -0.5]), "uniform", 2.0, 0.5)


def test_quantizer_json_roundtrip():
    q = design_quantizer(7, 2.0, 0.5)
    back = Quantizer.from_json(q.to_json())
    np.testing.assert_array_equal(back.thresholds, q.thresholds)
    assert back.dumps() == q.dumps()


def test_quantize_bins():
    q = Quantizer(4, np.array([-1.0, 0.0, 1.0]), "uniform", 2.0, 0.5)
    assert q.quantize(np.array([-2.0, -0.5, 0.5, 2.0])).tolist() == [0, 1, 2, 3]


def test_noise_sigma():
    assert noise_sigma(0.0, 0.5) == pytest.approx(1.0)


def test_integer_metrics_shape():
    q = design_quantizer(7, 2.0, 0.5)
    d = awgn_dmc(q, scale=4.0)
    m0, m1 = np.array(d.metric0), np.array(d.metric1)
    assert (np.maximum(m0, m1) == 0).all()
    assert (np.diff(m0) >= 0).all()  # larger symbols favour bit 0
    assert d.metric0 == (-30, -18, -9, 0, 0, 0, 0)


def test_integer_metrics_scale_too_small():
    q = design_quantizer(4, 2.0, 0.5)
    with pytest.raises(ValueError, match="scale too small"):
        integer_metrics(awgn_dmc(q, scale=None), 1e-6)
    with pytest.raises(ValueError):
        integer_metrics(awgn_dmc(q, scale=None), 0.0)

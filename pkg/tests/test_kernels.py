import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from photoformer.kernels import (
    GELU_FORMS_SUP_DIFF,
    GELU_SIGMOID_ARGMIN,
    QuantConfig,
    Quantized,
    attention_reassociated,
    attention_reference,
    bpd_accumulate,
    dequantize,
    gelu_sigmoid,
    gelu_tanh,
    noisy_dot,
    quantize_split,
    quantize_vector,
    quantized_error_rate,
    shift_divide,
    softmax_lse,
    softmax_rows_naive,
    split_arms,
)

MATH = settings(max_examples=1000, deadline=None)
finite = st.floats(-1e3, 1e3, allow_nan=False)


def _hand_softmax(row):
    e = [math.exp(v) for v in row]
    return [v / sum(e) for v in e]


def test_attention_two_by_two_by_hand():
    x = np.eye(2)
    w = np.eye(2)
    # scores = X X^T = I, so each row is softmax([1, 0]) or softmax([0, 1])
    p = _hand_softmax([1.0, 0.0])
    expected = np.array([[p[0], p[1]], [p[1], p[0]]])
    assert np.allclose(attention_reference(x, w, w, w, 1), expected, atol=1e-15)
    assert np.allclose(attention_reassociated(x, w, w, w, 1), expected, atol=1e-15)


def test_single_row_is_convex_combination():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((1, 6))
    wq, wk, wv = (rng.standard_normal((6, 4)) for _ in range(3))
    out = attention_reference(x, wq, wk, wv, 4)
    assert np.allclose(out, x @ wv)


def test_uniform_scores_give_column_means():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((5, 3))
    zero = np.zeros((3, 2))
    wv = rng.standard_normal((3, 2))
    v = x @ wv
    for fn in (attention_reference, attention_reassociated):
        out = fn(x, zero, zero, wv, 2)
        assert np.allclose(out, np.tile(v.mean(axis=0), (5, 1)), atol=1e-14)


def test_identity_key_weight_scores():
    rng = np.random.default_rng(3)
    d = 16  # sqrt(d) = 4 scales exactly, so both association orders round alike
    x = rng.standard_normal((4, d))
    wq = rng.standard_normal((d, d))
    ident = np.eye(d)
    scores_ref = (x @ wq) @ (x @ ident).T / math.sqrt(d)
    scores_re = ((x @ wq) @ (ident.T / math.sqrt(d))) @ x.T
    assert np.array_equal(scores_ref, scores_re)
    a = attention_reference(x, wq, ident, ident, d)
    assert np.array_equal(a, softmax_rows_naive(scores_ref) @ x)


def test_random_8x8_dk64():
    rng = np.random.default_rng(4)
    x, wq, wk, wv = (rng.standard_normal((8, 8)) for _ in range(4))
    diff = np.abs(attention_reassociated(x, wq, wk, wv, 64) - attention_reference(x, wq, wk, wv, 64))
    assert diff.max() < 1e-10


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 64), st.integers(1, 64), st.integers(1, 64), st.integers(1, 64), st.integers(0, 2**32 - 1))
def test_reassociation_equivalence(seq, d, dk, dv, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((seq, d))
    wq, wk = rng.standard_normal((d, dk)) / math.sqrt(d), rng.standard_normal((d, dk)) / math.sqrt(d)
    wv = rng.standard_normal((d, dv))
    a = attention_reference(x, wq, wk, wv, dk)
    b = attention_reassociated(x, wq, wk, wv, dk)
    assert np.max(np.abs(a - b)) < 1e-10


def test_attention_shape_errors():
    x = np.ones((3, 4))
    with pytest.raises(ValueError):
        attention_reference(x, np.ones((5, 2)), np.ones((4, 2)), np.ones((4, 2)), 2)
    with pytest.raises(ValueError):
        attention_reassociated(x, np.ones((4, 2)), np.ones((4, 3)), np.ones((4, 2)), 2)
    with pytest.raises(ValueError):
        attention_reference(x, np.ones((4, 2)), np.ones((4, 2)), np.ones((4, 2)), 0)
    with pytest.raises(ValueError):
        attention_reference(np.ones(4), np.ones((4, 2)), np.ones((4, 2)), np.ones((4, 2)), 2)


def test_shift_division():
    rng = np.random.default_rng(5)
    v = rng.standard_normal(1000) * 1e3
    assert np.array_equal(shift_divide(v, 64), v / math.sqrt(64))
    assert np.array_equal(shift_divide(v, 16), v / 4.0)
    for bad in (8, 12, 36):
        with pytest.raises(ValueError):
            shift_divide(v, bad)


def test_softmax_examples():
    assert np.array_equal(softmax_lse([0.0, 0.0]), [0.5, 0.5])
    assert np.allclose(softmax_lse([1.0, 2.0, 3.0]), [0.090031, 0.244728, 0.665241], atol=1e-6)
    with np.errstate(over="ignore", invalid="ignore"):
        naive = softmax_rows_naive(np.array([1e4, 1e4]))
    assert not np.all(np.isfinite(naive))
    assert np.array_equal(softmax_lse([1e4, 1e4]), [0.5, 0.5])
    with pytest.raises(ValueError):
        softmax_lse([])
    with pytest.raises(ValueError):
        softmax_lse([1.0, math.inf])


@MATH
@given(arrays(float, st.integers(1, 32), elements=st.floats(-50, 50)))
def test_softmax_matches_naive(chi):
    assert np.max(np.abs(softmax_lse(chi) - softmax_rows_naive(chi))) < 1e-12


@MATH
@given(arrays(float, st.integers(1, 32), elements=st.floats(-1e4, 1e4, allow_nan=False)))
def test_softmax_large_inputs_normalised(chi):
    out = softmax_lse(chi)
    assert np.all(np.isfinite(out)) and np.all(out >= 0)
    assert abs(out.sum() - 1.0) < 1e-12
    assert out[np.argmax(chi)] > 0


@MATH
@given(arrays(float, st.tuples(st.integers(1, 6), st.integers(1, 8)), elements=st.floats(-100, 100)))
def test_softmax_rows(m):
    out = softmax_lse(m)
    assert np.allclose(out.sum(axis=1), 1.0, atol=1e-12)


def test_gelu_examples():
    assert gelu_sigmoid(0.0) == 0.0 and gelu_tanh(0.0) == 0.0
    assert gelu_sigmoid(1.0) == pytest.approx(0.845795, abs=1e-6)
    assert gelu_sigmoid(-1.0) == pytest.approx(-0.154205, abs=1e-6)
    assert gelu_sigmoid(1.0) - gelu_sigmoid(-1.0) == pytest.approx(1.0, abs=1e-15)
    for x in (30.0, 100.0, 1e4):
        assert gelu_sigmoid(x) == pytest.approx(x, rel=1e-12)
        assert gelu_tanh(x) == pytest.approx(x, rel=1e-12)
    assert gelu_sigmoid(-1e4) == 0.0 or abs(gelu_sigmoid(-1e4)) < 1e-300


def test_gelu_sup_difference_frozen():
    grid = np.linspace(-6.0, 6.0, 1_200_001)
    diff = np.abs(gelu_tanh(grid) - gelu_sigmoid(grid))
    sup = diff.max()
    assert sup <= 0.021
    assert sup == pytest.approx(GELU_FORMS_SUP_DIFF, abs=5e-6)
    assert grid[diff.argmax()] == pytest.approx(-2.2888, abs=1e-3)


def test_gelu_sigmoid_minimum_location():
    grid = np.linspace(-3.0, 3.0, 600_001)
    assert grid[np.argmin(gelu_sigmoid(grid))] == pytest.approx(GELU_SIGMOID_ARGMIN, abs=1e-4)


@MATH
@given(st.floats(-50, 50), st.floats(-50, 50))
def test_gelu_odd_part_identity(x, _):
    assert gelu_sigmoid(x) - gelu_sigmoid(-x) == pytest.approx(x, abs=1e-12)
    assert gelu_tanh(x) - gelu_tanh(-x) == pytest.approx(x, abs=1e-12)


@MATH
@given(st.floats(GELU_SIGMOID_ARGMIN, 50), st.floats(GELU_SIGMOID_ARGMIN, 50))
def test_gelu_sigmoid_monotone_right_of_minimum(x, y):
    lo, hi = sorted((x, y))
    assert gelu_sigmoid(hi) >= gelu_sigmoid(lo)


@MATH
@given(st.floats(-6, 6))
def test_gelu_forms_agree(x):
    assert abs(gelu_tanh(x) - gelu_sigmoid(x)) <= GELU_FORMS_SUP_DIFF


def test_gelu_vectorised():
    xs = np.array([-1.0, 0.0, 1.0])
    assert np.allclose(gelu_sigmoid(xs), [gelu_sigmoid(float(v)) for v in xs])


def test_quant_config_levels():
    assert QuantConfig().n_levels == 128
    assert QuantConfig(8, signed_split=False).n_levels == 256
    assert QuantConfig(4).n_levels == 8
    with pytest.raises(ValueError):
        QuantConfig(1)


def test_quantize_examples():
    cfg = QuantConfig()
    zero = quantize_split(0.0, cfg, 1.0)
    assert zero.level == 0 and not zero.saturated
    assert quantize_split(1.0, cfg, 1.0) == Quantized(127, 1, False)
    assert quantize_split(-1.0, cfg, 1.0) == Quantized(127, -1, False)
    sat = quantize_split(2.5, cfg, 1.0)
    assert sat.saturated and sat.level == 127
    with pytest.raises(ValueError):
        quantize_split(0.1, cfg, 0.0)
    with pytest.raises(ValueError):
        quantize_split(0.0, cfg, 5e-324)
    levels, arms = quantize_vector([0.0, 5e-324], cfg)
    assert list(levels) == [0, 0] and list(arms) == [1, 1]


@MATH
@given(st.floats(-1, 1), st.floats(1e-6, 1e6))
def test_quantizer_error_bound(u, v_max):
    cfg = QuantConfig()
    v = u * v_max
    err = abs(dequantize(quantize_split(v, cfg, v_max), cfg, v_max) - v)
    assert err <= v_max / 254 * (1 + 1e-12)


@MATH
@given(st.floats(-1, 1), st.floats(1e-6, 1e6), st.integers(2, 12), st.booleans())
def test_quantizer_idempotent(u, v_max, bits, split):
    cfg = QuantConfig(bits, split)
    q = quantize_split(u * v_max, cfg, v_max)
    again = quantize_split(dequantize(q, cfg, v_max), cfg, v_max)
    assert again == q


@MATH
@given(arrays(float, st.integers(1, 40), elements=st.floats(-1e3, 1e3, allow_subnormal=False)))
def test_quantize_vector_matches_scalar(v):
    cfg = QuantConfig()
    levels, arms = quantize_vector(v, cfg)
    v_max = float(np.max(np.abs(v))) or 1.0
    for x, lv, arm in zip(v, levels, arms):
        q = quantize_split(float(x), cfg, v_max)
        assert (q.level, q.arm) == (lv, arm)


def test_bpd_examples():
    assert bpd_accumulate([1, 2, 3], [0, 0, 1]) == 5
    assert bpd_accumulate([4, 5], [4, 5]) == 0
    with pytest.raises(ValueError):
        bpd_accumulate([1, 2], [1])


@MATH
@given(arrays(float, 8, elements=finite), arrays(float, 8, elements=finite))
def test_bpd_antisymmetric(pos, neg):
    assert bpd_accumulate(pos, neg) == -bpd_accumulate(neg, pos)


@MATH
@given(arrays(np.int64, st.integers(1, 32), elements=st.integers(-1000, 1000)),
       st.data())
def test_split_arms_reproduce_dot_exactly(a, data):
    w = data.draw(arrays(np.int64, a.shape, elements=st.integers(-1000, 1000)))
    # integer-valued products keep the float sums exact
    products = (a * w).astype(float)
    pos, neg = split_arms(products)
    assert np.all(pos >= 0) and np.all(neg >= 0)
    assert bpd_accumulate(pos, neg) == float(np.dot(a, w))


def test_noisy_dot_contract():
    rng = np.random.default_rng(6)
    a, w = rng.uniform(-1, 1, 17), rng.uniform(-1, 1, 17)
    exact = bpd_accumulate(*split_arms(a * w))
    assert noisy_dot(a, w, math.inf, 0) == exact
    assert noisy_dot(a, w, 24.3, 7) == noisy_dot(a, w, 24.3, 7)
    assert noisy_dot(a, w, 24.3, 7) != noisy_dot(a, w, 24.3, 8)
    assert abs(noisy_dot(a, w, 120.0, 1) - exact) < 1e-5
    with pytest.raises(ValueError):
        noisy_dot(a, w[:3], 20.0, 0)


def test_noisy_dot_noise_power_calibrated():
    rng = np.random.default_rng(9)
    a = np.ones(1)
    samples = np.array([noisy_dot(a, a, 20.0, rng) for _ in range(20000)])
    assert np.var(samples) == pytest.approx(0.01, rel=0.05)


def test_quantized_error_rate_frozen():
    # measured once with seed 0, 1000 length-17 dot products, 8-bit signed arms
    assert quantized_error_rate(24.3) == 0.447
    assert quantized_error_rate(math.inf) == 0.0
    rates = [quantized_error_rate(s) for s in (20.0, 24.3, 30.0, 40.0)]
    assert rates == sorted(rates, reverse=True)

"""
Numeric reference kernels for the accelerator's algebraic tricks.

Reassociated attention scores, log-sum-exp softmax, the two GELU
approximations, signed-arm quantisation, balanced-photodetector
accumulation and a noisy dot product calibrated to an SNR.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def _as_matrix(a, name: str) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def _check_attention_shapes(x, wq, wk, wv, d_k):
    if d_k < 1:
        raise ValueError(f"d_k must be >= 1, got {d_k}")
    if not (x.shape[1] == wq.shape[0] == wk.shape[0] == wv.shape[0]):
        raise ValueError(f"weights {wq.shape}, {wk.shape}, {wv.shape} do not match input {x.shape}")
    if wq.shape[1] != wk.shape[1]:
        raise ValueError(f"query/key widths differ: {wq.shape[1]} vs {wk.shape[1]}")


def softmax_rows_naive(scores: np.ndarray) -> np.ndarray:
    e = np.exp(scores)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_lse(chi) -> np.ndarray:
    """
    Softmax via max-shift and log-sum-exp, with no division.

    Works row-wise on 2-D input. Every exponent before the last one has a
    non-positive argument, so nothing can overflow.
    """
    chi = np.asarray(chi, dtype=float)
    if chi.size == 0 or chi.shape[-1] == 0:
        raise ValueError("softmax of an empty vector")
    if not np.all(np.isfinite(chi)):
        raise ValueError("softmax input must be finite")
    chi_max = chi.max(axis=-1, keepdims=True)
    shifted = chi - chi_max
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    return np.exp(shifted - lse)


def attention_reference(x, wq, wk, wv, d_k: int) -> np.ndarray:
    """``softmax(Q K^T / sqrt(d_k)) V`` with Q, K, V projected from ``x``."""
    x, wq, wk, wv = (_as_matrix(a, n) for a, n in ((x, "x"), (wq, "wq"), (wk, "wk"), (wv, "wv")))
    _check_attention_shapes(x, wq, wk, wv, d_k)
    q, k, v = x @ wq, x @ wk, x @ wv
    return softmax_rows_naive(q @ k.T / math.sqrt(d_k)) @ v


def attention_reassociated(x, wq, wk, wv, d_k: int) -> np.ndarray:
    """
    Same attention with scores computed as ``(X W_Q)(W_K^T / sqrt(d_k)) X^T``.

    The key matrix is never formed; the scale lives in the stored key
    weights.
    """
    x, wq, wk, wv = (_as_matrix(a, n) for a, n in ((x, "x"), (wq, "wq"), (wk, "wk"), (wv, "wv")))
    _check_attention_shapes(x, wq, wk, wv, d_k)
    wk_t_scaled = wk.T / math.sqrt(d_k)
    scores = ((x @ wq) @ wk_t_scaled) @ x.T
    return softmax_lse(scores) @ (x @ wv)


def shift_divide(values, d_k: int) -> np.ndarray:
    """
    Divide by ``sqrt(d_k)`` as a binary shift; only exact when ``d_k`` is
    a power of 4 (``sqrt(64) = 8`` is a 3-bit shift).
    """
    root = math.isqrt(d_k)
    if root * root != d_k or root & (root - 1):
        raise ValueError(f"sqrt(d_k) = sqrt({d_k}) is not a power of two")
    shift = root.bit_length() - 1
    return np.ldexp(np.asarray(values, dtype=float), -shift)


def gelu_sigmoid(x):
    """``x * sigmoid(1.702 x)``."""
    x = np.asarray(x, dtype=float)
    # logistic written via exp of a non-positive argument on both branches
    z = 1.702 * x
    out = np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))
    res = x * out
    return float(res) if res.ndim == 0 else res


def gelu_tanh(x):
    """``0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))``."""
    x = np.asarray(x, dtype=float)
    res = 0.5 * x * (1.0 + np.tanh(math.sqrt(2.0 / math.pi) * (x + 0.044715 * x**3)))
    return float(res) if res.ndim == 0 else res


# sup |gelu_tanh - gelu_sigmoid| over the reals, reached near x = -2.29
GELU_FORMS_SUP_DIFF = 0.02066

# gelu_sigmoid has its minimum here and is increasing to the right of it
GELU_SIGMOID_ARGMIN = -0.75115


# smaller full scales make the level step underflow
_TINY = float(np.finfo(float).tiny)


@dataclass(frozen=True)
class QuantConfig:
    bits: int = 8
    signed_split: bool = True

    def __post_init__(self) -> None:
        if self.bits < 1 or (self.signed_split and self.bits < 2):
            raise ValueError(f"too few bits: {self.bits}")

    @property
    def n_levels(self) -> int:
        return 2 ** (self.bits - 1) if self.signed_split else 2**self.bits


@dataclass(frozen=True)
class Quantized:
    level: int
    arm: int  # +1 positive arm, -1 negative arm
    saturated: bool = False


def quantize_split(v: float, cfg: QuantConfig, v_max: float) -> Quantized:
    """
    Route the sign of ``v`` to an arm and its magnitude to the nearest of
    ``n_levels`` uniform levels on ``[0, v_max]``. Out-of-range values
    saturate and are flagged.
    """
    if not v_max >= _TINY:
        raise ValueError(f"v_max must be a positive normal float, got {v_max}")
    arm = -1 if v < 0 else 1
    mag = abs(v)
    saturated = mag > v_max
    mag = min(mag, v_max)
    step = v_max / (cfg.n_levels - 1)
    level = int(np.rint(mag / step))
    if level == 0:
        arm = 1  # zero has no sign; fixing the arm keeps re-quantisation idempotent
    return Quantized(level, arm, saturated)


def dequantize(q: Quantized, cfg: QuantConfig, v_max: float) -> float:
    # level ratio first so the top level maps back to exactly v_max
    return q.arm * v_max * (q.level / (cfg.n_levels - 1))


def quantize_vector(v, cfg: QuantConfig, v_max: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`quantize_split`; ``v_max`` defaults to per-tensor max-abs."""
    v = np.asarray(v, dtype=float)
    if v_max is None:
        v_max = float(np.max(np.abs(v)))
        if v_max < _TINY:
            v_max = 1.0  # all-zero (or subnormal) tensor quantises to level 0
    elif not v_max >= _TINY:
        raise ValueError(f"v_max must be a positive normal float, got {v_max}")
    step = v_max / (cfg.n_levels - 1)
    levels = np.rint(np.minimum(np.abs(v), v_max) / step).astype(np.int64)
    arms = np.where((v < 0) & (levels > 0), -1, 1)
    return levels, arms


def bpd_accumulate(pos, neg) -> float:
    """Balanced photodetector: positive-arm sum minus negative-arm sum."""
    pos = np.asarray(pos, dtype=float)
    neg = np.asarray(neg, dtype=float)
    if pos.shape != neg.shape:
        raise ValueError(f"arm lengths differ: {pos.shape} vs {neg.shape}")
    return float(pos.sum() - neg.sum())


def split_arms(products) -> tuple[np.ndarray, np.ndarray]:
    products = np.asarray(products, dtype=float)
    return np.where(products > 0, products, 0.0), np.where(products < 0, -products, 0.0)


def noisy_dot(a, w, snr_db: float, seed: int | np.random.Generator) -> float:
    """
    Dot product with per-product multiplicative Gaussian noise whose power
    is ``10^(-snr/10)`` of the signal power, accumulated on a BPD.
    """
    a = np.asarray(a, dtype=float)
    w = np.asarray(w, dtype=float)
    if a.shape != w.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {w.shape}")
    products = a * w
    if math.isinf(snr_db) and snr_db > 0:
        return bpd_accumulate(*split_arms(products))
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    sigma = math.sqrt(10.0 ** (-snr_db / 10.0))
    noisy = products * (1.0 + sigma * rng.standard_normal(products.shape))
    return bpd_accumulate(*split_arms(noisy))


def quantized_error_rate(snr_db: float, bits: int = 8, trials: int = 1000, length: int = 17,
                         seed: int = 0) -> float:
    """
    Fraction of random dot products whose quantised noisy result differs
    from the quantised noiseless one. Operands are uniform on [-1, 1] and
    quantised to ``bits`` with signed arms; results are quantised against
    the full-scale output ``length``.
    """
    rng = np.random.default_rng(seed)
    cfg = QuantConfig(bits=bits)
    full_scale = float(length)
    step = full_scale / (cfg.n_levels - 1)
    flips = 0
    for _ in range(trials):
        a = rng.uniform(-1, 1, length)
        w = rng.uniform(-1, 1, length)
        la, sa = quantize_vector(a, cfg, 1.0)
        lw, sw = quantize_vector(w, cfg, 1.0)
        aq = sa * la / (cfg.n_levels - 1)
        wq = sw * lw / (cfg.n_levels - 1)
        clean = float(np.dot(aq, wq))
        noisy = noisy_dot(aq, wq, snr_db, rng)
        if np.rint(clean / step) != np.rint(noisy / step):
            flips += 1
    return flips / trials

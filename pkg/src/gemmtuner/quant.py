"""Quantized GEMM lowering: correction-term folding and requantization.

The operator computed is C = A x B + D on int8 inputs with asymmetric
input quantization (zero point zp_a), symmetric weight quantization
(no weight zero point), an int32 bias D, and an affine output
quantization (zero point zp_c, scale ratio s_d/s_c).

Two evaluation routes are provided:

* reference_qgemm - subtracts the input zero point before the multiply
  and requantizes afterwards.  This is the ground-truth oracle; it
  never touches the accelerator model.
* folded_qgemm - the form the accelerator actually executes: a raw
  int8 GEMM plus a precomputed corrected bias, with the scale ratio
  applied once on the way out.  The input-zero-point correction and the
  output zero point are folded into the bias, so no extra tensor ops
  remain outside the matrix multiply.

Folding the output zero point requires dividing it by the scale ratio
(it is added *before* the ratio is applied), which rounds to an integer
bias; the two routes therefore agree within +/-1 everywhere and exactly
whenever zp_c * s_c/s_d is integral.

Rounding is half-up (ties toward +infinity, floor(x + 1/2)) and outputs
saturate to int8.  Half-up is the one tie rule under which adding an
integer offset commutes with rounding, which the exact-fold guarantee
above requires; ties-away-from-zero would flip negative-side ties after
the offset is folded in.  All scale arithmetic is exact rational
arithmetic (fractions.Fraction).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

INT8_MIN, INT8_MAX = -128, 127


class ShapeMismatchError(ValueError):
    pass


def _as_fraction(x) -> Fraction:
    # floats convert exactly (they are dyadic rationals)
    return x if isinstance(x, Fraction) else Fraction(x)


def round_half_up(x: Fraction | int) -> int:
    """Round to nearest integer, ties toward +infinity: floor(x + 1/2)."""
    x = _as_fraction(x)
    n, d = x.numerator, x.denominator
    return (2 * n + d) // (2 * d)


def scale_round(values: np.ndarray, scale: Fraction) -> np.ndarray:
    """Elementwise round_half_up(scale * values) as int64.

    Uses int64 arithmetic when the magnitudes allow it, falling back to
    exact Python integers otherwise, so the result is always exact.
    """
    num, den = scale.numerator, scale.denominator
    v = np.asarray(values, dtype=np.int64)
    max_abs = int(np.abs(v).max(initial=0))
    # 2*|v*num| + den must fit in int64
    if max_abs and (2 * max_abs * abs(num) + den) < 2**63:
        return (2 * v * num + den) // (2 * den)
    if max_abs == 0:
        return np.zeros_like(v)
    flat = [round_half_up(Fraction(int(x) * num, den)) for x in v.ravel()]
    return np.array(flat, dtype=np.int64).reshape(v.shape)


def saturate_int8(values: np.ndarray) -> np.ndarray:
    return np.clip(values, INT8_MIN, INT8_MAX).astype(np.int8)


@dataclass(frozen=True)
class QuantizedGemmProblem:
    """One quantized GEMM instance: matrices, zero points, scales.

    q_a: int8 [M, K] input; q_b: int8 [K, N] weights; q_d: int32 [M, N]
    bias.  Weights are symmetrically quantized, so there is no weight
    zero point.  s_d and s_c are positive scales whose ratio s_d/s_c is
    the requantization multiplier.
    """

    q_a: np.ndarray
    q_b: np.ndarray
    q_d: np.ndarray
    zp_a: int
    zp_c: int
    s_d: Fraction
    s_c: Fraction

    def __post_init__(self):
        object.__setattr__(self, "q_a", np.asarray(self.q_a, dtype=np.int8))
        object.__setattr__(self, "q_b", np.asarray(self.q_b, dtype=np.int8))
        object.__setattr__(self, "q_d", np.asarray(self.q_d, dtype=np.int32))
        object.__setattr__(self, "s_d", _as_fraction(self.s_d))
        object.__setattr__(self, "s_c", _as_fraction(self.s_c))
        if self.s_d <= 0 or self.s_c <= 0:
            raise ValueError("scales must be positive")
        m, k = self.q_a.shape
        k2, n = self.q_b.shape
        if k != k2 or self.q_d.shape != (m, n):
            raise ShapeMismatchError(
                f"A {self.q_a.shape}, B {self.q_b.shape}, D {self.q_d.shape}")

    @property
    def shape(self) -> tuple[int, int, int]:
        """(M, N, K) of the GEMM."""
        return self.q_a.shape[0], self.q_b.shape[1], self.q_a.shape[1]

    @property
    def scale_ratio(self) -> Fraction:
        return self.s_d / self.s_c


def reference_qgemm(q: QuantizedGemmProblem) -> np.ndarray:
    """Ground-truth int8 output, evaluated the direct way.

    Subtracts zp_a from A, multiplies, adds the bias, requantizes:
    C = sat(round(zp_c + (s_d/s_c) * (sum_k (A - zp_a) * B + D))).
    """
    a = q.q_a.astype(np.int64) - q.zp_a
    acc = a @ q.q_b.astype(np.int64) + q.q_d.astype(np.int64)
    scaled = scale_round(acc, q.scale_ratio) + q.zp_c
    return saturate_int8(scaled)


def fold_corrected_bias(q: QuantizedGemmProblem) -> np.ndarray:
    """Fold the zero-point corrections into the bias.

    Returns int32 D' with
        D'[m, n] = D[m, n] - zp_a * colsum(B)[n] + round(zp_c * s_c/s_d)
    The middle term removes the input-zero-point contribution of the raw
    GEMM; the last term pre-loads the output zero point, divided by the
    scale ratio because the ratio is applied after the bias is added.
    The correction depends only on B, so it is computable once per
    weight matrix.
    """
    correction = q.zp_a * q.q_b.astype(np.int64).sum(axis=0)  # [N]
    zp_term = round_half_up(q.zp_c / q.scale_ratio)
    folded = q.q_d.astype(np.int64) - correction[np.newaxis, :] + zp_term
    return folded.astype(np.int32)


def folded_qgemm(q: QuantizedGemmProblem) -> np.ndarray:
    """Int8 output via the folded form the accelerator executes.

    C = sat(round((s_d/s_c) * (sum_k A * B + D'))) with D' from
    fold_corrected_bias.  The raw GEMM never sees the zero points; the
    scale ratio is applied once at the end (on the accelerator this
    happens in the move-out path).
    """
    acc = q.q_a.astype(np.int64) @ q.q_b.astype(np.int64) \
        + fold_corrected_bias(q).astype(np.int64)
    return saturate_int8(scale_round(acc, q.scale_ratio))


def make_random_problem(m: int, n: int, k: int,
                        rng: np.random.Generator) -> QuantizedGemmProblem:
    """Random but well-scaled problem for tests and tuner measurements.

    Zero points stay in int8 range and the scale ratio is drawn from
    small rationals in (0, 2]; real requantization shrinks values
    (ratio <= 1), and the folded-bias rounding error stays within one
    output step for ratios up to 2.
    """
    q_a = rng.integers(INT8_MIN, INT8_MAX + 1, size=(m, k), dtype=np.int64)
    q_b = rng.integers(INT8_MIN, INT8_MAX + 1, size=(k, n), dtype=np.int64)
    q_d = rng.integers(-(1 << 16), 1 << 16, size=(m, n), dtype=np.int64)
    zp_a = int(rng.integers(INT8_MIN, INT8_MAX + 1))
    zp_c = int(rng.integers(INT8_MIN, INT8_MAX + 1))
    num = int(rng.integers(1, 17))
    den = int(rng.integers(1, 17))
    if Fraction(num, den) > 2:
        num, den = den, num
    return QuantizedGemmProblem(
        q_a=q_a.astype(np.int8), q_b=q_b.astype(np.int8),
        q_d=q_d.astype(np.int32), zp_a=zp_a, zp_c=zp_c,
        s_d=Fraction(num), s_c=Fraction(den))

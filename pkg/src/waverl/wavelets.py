"""Discrete wavelet transform machinery: filter banks, multi-level
decomposition, recency-preserving detail selection, and an inverse transform
used as a testing oracle.

One decomposition level filters the signal with a low-pass / high-pass pair
and keeps every second output, halving the length (ceil for odd inputs, which
are implicitly left-padded with a zero first). Each output coefficient reads a
contiguous, non-overlapping block of past samples, so the transform is causal
at the granularity of its coefficient supports and, with the orthonormal Haar
pair, perfectly invertible and energy preserving.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DecompositionError, DimensionError, ParameterError, ReconstructionError

INV_SQRT2 = 1.0 / math.sqrt(2.0)


@dataclass
class FilterBank:
    """Low-pass / high-pass convolution kernel pair (y0, y1), length K.

    The first tap multiplies the most recent sample. Fixed banks must be
    orthonormal; trainable banks start from Haar values and may drift.
    """

    y0: Tensor
    y1: Tensor
    trainable: bool = False

    def __post_init__(self):
        k = self.y0.shape[0]
        if self.y1.shape[0] != k:
            raise DimensionError(f"filter pair lengths differ: {self.y0.shape} vs {self.y1.shape}")
        if k < 2 or k % 2 != 0:
            raise ParameterError(f"filter length must be even and >= 2, got {k}")
        if not self.trainable:
            n0 = float(np.dot(self.y0.data, self.y0.data))
            n1 = float(np.dot(self.y1.data, self.y1.data))
            dot = float(np.dot(self.y0.data, self.y1.data))
            if abs(n0 - 1.0) > 1e-12 or abs(n1 - 1.0) > 1e-12 or abs(dot) > 1e-12:
                raise ParameterError("fixed filter bank must be orthonormal")

    @property
    def length(self):
        return self.y0.shape[0]

    @classmethod
    def haar(cls, trainable=False, length=2):
        """Haar pair: y0 averages adjacent samples, y1 takes their difference.

        ``length`` > 2 zero-pads the kernels (older taps), useful only for
        trainable banks that want extra capacity around the Haar start.
        """
        if length < 2 or length % 2 != 0:
            raise ParameterError(f"filter length must be even and >= 2, got {length}")
        if length > 2 and not trainable:
            raise ParameterError("fixed banks longer than 2 are not orthonormal zero-padded Haar")
        y0 = np.zeros(length)
        y1 = np.zeros(length)
        y0[0] = y0[1] = INV_SQRT2
        y1[0] = INV_SQRT2
        y1[1] = -INV_SQRT2
        return cls(
            y0=Tensor(y0, requires_grad=trainable),
            y1=Tensor(y1, requires_grad=trainable),
            trainable=trainable,
        )

    def params(self):
        return {"y0": self.y0, "y1": self.y1} if self.trainable else {}


@dataclass
class WaveletStack:
    """Coefficients of a full decomposition: details g_1..g_M plus the final
    approximation u_M, with the original signal length for bookkeeping."""

    approximation: Tensor
    details: list = field(default_factory=list)
    levels: int = 1
    original_length: int = 0

    def __post_init__(self):
        lengths = level_lengths(self.original_length, self.levels)
        for m, g in enumerate(self.details, start=1):
            if g.shape[0] != lengths[m]:
                raise DimensionError(
                    f"detail level {m} has {g.shape[0]} coefficients, expected {lengths[m]}"
                )
        if self.approximation.shape[0] != lengths[self.levels]:
            raise DimensionError(
                f"approximation has {self.approximation.shape[0]} coefficients, "
                f"expected {lengths[self.levels]}"
            )

    @property
    def channels(self):
        return self.approximation.shape[1]


def level_lengths(t, levels):
    """Per-level sequence lengths [T, ceil(T/2), ..., ceil(T/2^M)]."""
    out = [t]
    for _ in range(levels):
        out.append(-(-out[-1] // 2))
    return out


def dwt_level(u_prev, bank):
    """One analysis level: (approximation, detail) at half length.

    Coefficient n covers the input pair (x[2n-1], x[2n]) after an implicit
    left zero pad that aligns the last coefficient with the last sample, so
    trailing coefficients always reflect the most recent inputs.
    """
    u_prev = u_prev if isinstance(u_prev, Tensor) else Tensor(u_prev)
    t = u_prev.shape[0]
    if t < 2:
        raise DecompositionError(f"sequence too short to decompose: {t} < 2")
    # One extra zero row shifts the stride-2 anchors onto pair boundaries;
    # odd inputs get a second zero so every sample lands in exactly one pair.
    shifted = ad.prepend_zero_rows(u_prev, 1 + (t % 2))
    u_full = ad.conv1d_depthwise(shifted, bank.y0, stride=2)
    g_full = ad.conv1d_depthwise(shifted, bank.y1, stride=2)
    n_out = u_full.shape[0]
    return ad.slice_rows(u_full, 1, n_out), ad.slice_rows(g_full, 1, n_out)


def dwt_full(z, bank, levels):
    """Iterate ``dwt_level`` on the approximation branch ``levels`` times."""
    z = z if isinstance(z, Tensor) else Tensor(z)
    if levels < 1:
        raise ParameterError(f"levels must be >= 1, got {levels}")
    t = z.shape[0]
    if t < 2**levels:
        raise DecompositionError(f"sequence of length {t} cannot support {levels} levels")
    details = []
    u = z
    for _ in range(levels):
        u, g = dwt_level(u, bank)
        details.append(g)
    return WaveletStack(approximation=u, details=details, levels=levels, original_length=t)


def idwt_full(stack, bank):
    """Invert a Haar-pair decomposition exactly. Testing oracle only.

    Requires a fixed orthonormal length-2 bank and a stack produced by
    ``dwt_full`` with the same bank and no coefficients dropped. Operates on
    raw values; no gradients.
    """
    if bank.length != 2:
        raise ReconstructionError("inverse transform supports length-2 orthonormal banks only")
    if bank.trainable:
        raise ReconstructionError("inverse transform is defined for fixed orthonormal banks")
    lengths = level_lengths(stack.original_length, stack.levels)
    if len(stack.details) != stack.levels:
        raise ReconstructionError(
            f"stack has {len(stack.details)} detail levels, expected {stack.levels}"
        )
    y0 = bank.y0.data
    y1 = bank.y1.data
    u = stack.approximation.data.copy()
    for m in range(stack.levels, 0, -1):
        g = stack.details[m - 1].data
        if g.shape != u.shape:
            raise ReconstructionError(
                f"level {m} shapes diverge: detail {g.shape} vs approximation {u.shape}"
            )
        t_prev = lengths[m - 1]
        padded_len = 2 * u.shape[0]
        prev = np.empty((padded_len, u.shape[1]))
        # Orthonormal 2x2 synthesis: each pair (older, newer) comes back from
        # the transposed analysis matrix.
        prev[1::2] = y0[0] * u + y1[0] * g  # newer sample of each pair
        prev[0::2] = y0[1] * u + y1[1] * g  # older sample of each pair
        u = prev[padded_len - t_prev :]
    return Tensor(u)


def select_details(stack, keep_fraction):
    """Keep only the most recent ceil(rho * len) detail coefficients per level.

    Discarded leading positions are zero-filled so every shape is preserved;
    the approximation branch is untouched.
    """
    if not (0.0 < keep_fraction <= 1.0):
        raise ParameterError(f"keep_fraction must be in (0, 1], got {keep_fraction}")
    if keep_fraction == 1.0:
        return stack
    filtered = []
    for g in stack.details:
        n = g.shape[0]
        keep = math.ceil(keep_fraction * n)
        if keep >= n:
            filtered.append(g)
            continue
        mask = np.zeros((n, 1))
        mask[n - keep :] = 1.0
        filtered.append(ad.mul(g, Tensor(np.broadcast_to(mask, g.shape).copy())))
    return WaveletStack(
        approximation=stack.approximation,
        details=filtered,
        levels=stack.levels,
        original_length=stack.original_length,
    )


def flatten_stack(stack):
    """Concatenate [g_1; g_2; ...; g_M; u_M] along time into one matrix."""
    return ad.concat_rows(list(stack.details) + [stack.approximation])


def coefficient_supports(t, levels):
    """(start, end) input-index support of every flattened coefficient row.

    Only defined for power-of-two lengths (no internal padding), where level-m
    coefficient n covers input samples [2^m * n, 2^m * (n + 1) - 1].
    """
    if t & (t - 1) or t <= 0:
        raise ParameterError(f"coefficient supports need a power-of-two length, got {t}")
    supports = []
    for m in range(1, levels + 1):
        step = 2**m
        supports.extend((step * n, step * (n + 1) - 1) for n in range(t // step))
    step = 2**levels
    supports.extend((step * n, step * (n + 1) - 1) for n in range(t // step))
    return supports


def analysis_matrix(t, levels):
    """Forward transform as an explicit [T, T] matrix over flattened coefficients.

    Column j is the flattened Haar decomposition of the j-th standard basis
    vector, so ``coeffs = A @ x`` per channel.
    """
    bank = FilterBank.haar()
    with ad.no_grad():
        stack = dwt_full(Tensor(np.eye(t)), bank, levels)
        return flatten_stack(stack).data.copy()

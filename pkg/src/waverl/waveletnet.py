"""Wavelet representation network and its training objectives.

The network decomposes a latent task sequence with a trainable Haar-initialized
filter pair, keeps only the most recent detail coefficients per level, and maps
the flattened coefficients back to the time domain through a masked linear
layer initialized to the exact inverse transform. A companion network built on
the low-pass branch (the W network) is trained with a TD-style bootstrap
against a slowly updated target copy; an autoregressive one-step prediction
loss complements it.

The TD update operator F W(z_t) = z_t + gamma * W(z_{t+1}) is a gamma
contraction in the sup norm over any dataset, which ``contraction_check``
verifies literally.
"""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from . import wavelets as wv
from .autodiff import Tensor
from .errors import DecompositionError, DimensionError, ParameterError


def _block_causal_mask(length, levels):
    """[T, T] 0/1 mask: output row t may read coefficient c iff c's input
    support starts at or before t (block-lower-triangular in time)."""
    supports = wv.coefficient_supports(length, levels)
    mask = np.zeros((length, length))
    for c, (start, _end) in enumerate(supports):
        mask[start:, c] = 1.0
    return mask


def _head_causal_mask(length, levels):
    """[T, T/2^M] mask for the approximation-path projection head."""
    step = 2**levels
    mask = np.zeros((length, length // step))
    for n in range(length // step):
        mask[step * n :, n] = 1.0
    return mask


class WaveletReprNet:
    """Trainable analysis + masked linear synthesis back to the time domain.

    Works on [L, C] inputs for any channel count C (channels are independent),
    so a batch of sequences can ride along as extra channels.
    """

    def __init__(self, length, levels=2, keep_fraction=0.5, filter_length=2, rng=None):
        if length < 2**levels:
            raise ParameterError(f"window length {length} cannot support {levels} levels")
        if length & (length - 1):
            raise ParameterError(f"window length must be a power of two, got {length}")
        if not (0.0 < keep_fraction <= 1.0):
            raise ParameterError(f"keep_fraction must be in (0, 1], got {keep_fraction}")
        self.length = length
        self.levels = levels
        self.keep_fraction = keep_fraction
        self.bank = wv.FilterBank.haar(trainable=True, length=filter_length)
        self._mask = _block_causal_mask(length, levels)
        # Exact inverse of the Haar analysis map; its support lies inside the
        # causal mask, so the untrained net reproduces its input when no
        # coefficients are dropped.
        self.recon = Tensor(wv.analysis_matrix(length, levels).T * self._mask,
                            requires_grad=True)

    def forward(self, z):
        """Returns (zhat, stack): the restored sequence and the coefficients."""
        z = z if isinstance(z, Tensor) else Tensor(z)
        if z.shape[0] != self.length:
            raise DecompositionError(f"expected sequences of length {self.length}, got {z.shape[0]}")
        stack = wv.dwt_full(z, self.bank, self.levels)
        filtered = wv.select_details(stack, self.keep_fraction)
        coeffs = wv.flatten_stack(filtered)
        recon_eff = ad.mul(self.recon, Tensor(self._mask))
        zhat = ad.matmul(recon_eff, coeffs)
        return zhat, filtered

    def params(self):
        out = {"recon": self.recon}
        out.update(self.bank.params())
        return out


class WNetwork:
    """Low-pass branch + projection head, with a softly updated target copy.

    The low-pass taps may be shared with a ``WaveletReprNet`` (pass its bank),
    in which case the analysis and TD objectives shape the same filter. The
    target parameters are plain constants, never touched by the optimizer,
    moved only by ``soft_update``.
    """

    def __init__(self, length, levels=2, bank=None, rng=None, init="shared"):
        if length & (length - 1):
            raise ParameterError(f"window length must be a power of two, got {length}")
        self.length = length
        self.levels = levels
        if bank is not None:
            self.bank = bank
        elif init == "random":
            rng = rng if rng is not None else np.random.default_rng(0)
            self.bank = wv.FilterBank(
                y0=Tensor(rng.normal(0.0, 1.0, size=2), requires_grad=True),
                y1=Tensor(rng.normal(0.0, 1.0, size=2), requires_grad=True),
                trainable=True,
            )
        else:
            self.bank = wv.FilterBank.haar(trainable=True)
        self._head_mask = _head_causal_mask(length, levels)
        step = 2**levels
        if init == "random":
            head = rng.normal(0.0, 1.0 / math.sqrt(length // step), size=(length, length // step))
        else:
            # start from the approximation part of the inverse transform, so
            # W(z) begins as the low-pass reconstruction of z
            head = wv.analysis_matrix(length, levels).T[:, length - length // step :]
        self.head = Tensor(head * self._head_mask, requires_grad=True)
        self.target_y0 = Tensor(self.bank.y0.data.copy())
        self.target_head = Tensor(self.head.data.copy())

    def _lowpass(self, z, y0):
        u = z
        for _ in range(self.levels):
            if u.shape[0] < 2:
                raise DecompositionError("sequence too short for the low-pass branch")
            shifted = ad.prepend_zero_rows(u, 1 + (u.shape[0] % 2))
            u_full = ad.conv1d_depthwise(shifted, y0, stride=2)
            u = ad.slice_rows(u_full, 1, u_full.shape[0])
        return u

    def forward(self, z, use_target=False):
        z = z if isinstance(z, Tensor) else Tensor(z)
        if z.shape[0] != self.length:
            raise DimensionError(f"expected sequences of length {self.length}, got {z.shape[0]}")
        if use_target:
            y0, head = self.target_y0, self.target_head
        else:
            y0, head = self.bank.y0, ad.mul(self.head, Tensor(self._head_mask))
        u = self._lowpass(z, y0)
        return ad.matmul(head, u)

    def soft_update(self, tau):
        self.target_y0.data = tau * self.bank.y0.data + (1.0 - tau) * self.target_y0.data
        self.target_head.data = tau * self.head.data + (1.0 - tau) * self.target_head.data

    def params(self):
        return {"head": self.head}

    def target_params(self):
        return {"target_y0": self.target_y0, "target_head": self.target_head}


def wavelet_td_loss(w_net, z_t, z_t1, gamma):
    """0.5 * mean || W(z_t) - (z_t + gamma * W_target(z_t1)) ||^2.

    The bootstrap target is fully detached: no gradient reaches the target
    network or the latent sequences through the target side.
    """
    if not (0.0 <= gamma < 1.0):
        raise ParameterError(f"gamma must be in [0, 1), got {gamma}")
    z_t = z_t if isinstance(z_t, Tensor) else Tensor(z_t)
    z_t1 = z_t1 if isinstance(z_t1, Tensor) else Tensor(z_t1)
    with ad.no_grad():
        target = z_t.data + gamma * w_net.forward(z_t1.detach(), use_target=True).data
    pred = w_net.forward(z_t)
    diff = ad.sub(pred, Tensor(target))
    return ad.scale(ad.tmean(ad.square(diff)), 0.5)


def ar_loss(zhat, target_z):
    """One-step-ahead Gaussian NLL with unit variance, up to constants:
    0.5 * mean over t in [1, L) of ||zhat_t - target_t||^2.

    The caller supplies ``target_z`` already shifted one step ahead of the
    network's input window and detached from the graph.
    """
    zhat = zhat if isinstance(zhat, Tensor) else Tensor(zhat)
    target = target_z.data if isinstance(target_z, Tensor) else np.asarray(target_z, dtype=np.float64)
    if zhat.shape != target.shape:
        raise DimensionError(f"shapes {zhat.shape} and {target.shape} do not match")
    diff = ad.sub(ad.slice_rows(zhat, 1, zhat.shape[0]), Tensor(target[1:]))
    return ad.scale(ad.tmean(ad.square(diff)), 0.5)


def joint_loss(td, ar, alpha_y):
    """alpha_y * td + ar; both terms are minimized."""
    if alpha_y < 0:
        raise ParameterError(f"alpha_y must be >= 0, got {alpha_y}")
    return ad.add(ad.scale(td, alpha_y), ar)


def _sup_norm_rows(diff):
    """max over sequence positions of the Euclidean norm across channels."""
    return float(np.sqrt((diff * diff).sum(axis=1)).max())


def contraction_check(w1, w2, z_pairs, gamma):
    """Empirical contraction ratio of the TD operator over a finite dataset.

    For every (z_t, z_t1) pair, F W(z_t) = z_t + gamma * W(z_t1). Returns
    (ratio, pass) where ratio is sup ||F W1 - F W2|| / sup ||W1 - W2|| with
    the sup taken over all pairs and sequence positions (denominator over
    every sequence in the dataset).
    """
    if not (0.0 <= gamma < 1.0):
        raise ParameterError(f"gamma must be in [0, 1), got {gamma}")
    num = 0.0
    den = 0.0
    with ad.no_grad():
        for z_t, z_t1 in z_pairs:
            d1 = w1.forward(z_t1).data - w2.forward(z_t1).data
            num = max(num, gamma * _sup_norm_rows(d1))
            den = max(den, _sup_norm_rows(d1))
            d0 = w1.forward(z_t).data - w2.forward(z_t).data
            den = max(den, _sup_norm_rows(d0))
    if den == 0.0:
        return 0.0, True
    ratio = num / den
    return ratio, ratio <= gamma + 1e-9

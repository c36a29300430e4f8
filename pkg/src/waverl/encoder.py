"""Context encoder: per-transition Gaussian posteriors over task latents.

A plain MLP maps each transition (s, a, s', r) independently to the mean and
log-std of a diagonal Gaussian over a latent task vector z; there is no
recurrence, so encoding a window is just encoding its rows. The KL divergence
against a standard-normal prior acts as an information bottleneck during
training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import MLP, Tensor
from .errors import DimensionError

LOG_STD_MIN = -10.0
LOG_STD_MAX = 2.0


@dataclass
class ContextWindow:
    """A contiguous run of transitions from one episode stream."""

    states: np.ndarray       # [L, ds]
    actions: np.ndarray      # [L, da]
    next_states: np.ndarray  # [L, ds]
    rewards: np.ndarray      # [L]
    start_step: int = 0

    def __post_init__(self):
        l = self.states.shape[0]
        if not (self.actions.shape[0] == self.next_states.shape[0] == self.rewards.shape[0] == l):
            raise DimensionError("window fields disagree on length")
        if l & (l - 1):
            raise DimensionError(f"window length must be a power of two, got {l}")

    @property
    def length(self):
        return self.states.shape[0]

    def as_rows(self):
        """Encoder featurization: [s, a, s' - s, r].

        The next state enters as a delta so the dynamics-relevant part of the
        transition sits at its own scale instead of hiding inside s'; the
        delta block is a linear bijection of s' given s, so no information
        changes, only conditioning.
        """
        return np.concatenate(
            [self.states, self.actions, self.next_states - self.states,
             self.rewards.reshape(-1, 1)], axis=1
        )


@dataclass
class LatentSequence:
    """Posterior statistics and a reparameterized sample, one row per transition."""

    mean: Tensor
    log_std: Tensor
    sample: Tensor
    latent_dim: int


class ContextEncoder:
    """MLP over transition rows -> (mean, log_std) of the task posterior."""

    def __init__(self, state_dim, action_dim, latent_dim=5, hidden=(200, 200, 200), rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.latent_dim = latent_dim
        self.input_dim = 2 * state_dim + action_dim + 1
        self.net = MLP((self.input_dim, *hidden, 2 * latent_dim), rng)

    def encode_rows(self, rows, noise, frozen=False):
        """Encode an [N, input_dim] matrix of transition rows.

        ``noise`` is an [N, latent_dim] array of standard-normal draws (zeros
        give the posterior mean). Rows are independent, so any batching or
        window structure is the caller's concern.
        """
        rows = rows if isinstance(rows, Tensor) else Tensor(rows)
        if rows.shape[1] != self.input_dim:
            raise DimensionError(f"expected rows of width {self.input_dim}, got {rows.shape}")
        if np.asarray(noise).shape != (rows.shape[0], self.latent_dim):
            raise DimensionError(
                f"noise must be [{rows.shape[0]}, {self.latent_dim}], got {np.asarray(noise).shape}"
            )
        out = self.net(rows, frozen=frozen)
        mean = ad.slice_cols(out, 0, self.latent_dim)
        log_std = ad.clamp(ad.slice_cols(out, self.latent_dim, 2 * self.latent_dim),
                           LOG_STD_MIN, LOG_STD_MAX)
        sample = ad.gaussian_rsample(mean, log_std, Tensor(noise))
        return LatentSequence(mean=mean, log_std=log_std, sample=sample,
                              latent_dim=self.latent_dim)

    def encode(self, window, noise, frozen=False):
        """Encode a ContextWindow into a LatentSequence of the same length."""
        return self.encode_rows(window.as_rows(), noise, frozen=frozen)

    def params(self):
        return self.net.params()


def kl_loss(latent):
    """Mean over steps of KL(N(mean, diag exp(2 log_std)) || N(0, I)).

    Closed form per step: 0.5 * sum_d (mean^2 + sigma^2 - 1 - 2 log sigma).
    """
    mean, log_std = latent.mean, latent.log_std
    var = ad.exp(ad.scale(log_std, 2.0))
    per_entry = ad.sub(ad.sub(ad.add(ad.square(mean), var), 1.0), ad.scale(log_std, 2.0))
    per_step = ad.tsum(per_entry, axis=1)
    return ad.scale(ad.tmean(per_step), 0.5)


class TransitionDecoder:
    """Predicts whitened (state delta, reward) rows from (state, action, task latent).

    The likelihood side of the encoder's bottleneck: reconstructing the
    transition through z forces z to carry whatever the current dynamics and
    reward depend on. Targets are pre-whitened by the caller so every output
    dimension contributes comparably, which keeps the task-dependent residual
    visible in the gradient.
    """

    def __init__(self, state_dim, action_dim, latent_dim, hidden=(128, 128), rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.state_dim = state_dim
        self.net = MLP((state_dim + action_dim + latent_dim, *hidden, state_dim + 1), rng)

    def loss(self, states, actions, z, targets):
        """0.5 * mean squared error against whitened [delta s, r] rows."""
        x = ad.concat_cols([Tensor(states), Tensor(actions), z])
        pred = self.net(x)
        return ad.scale(ad.tmean(ad.square(ad.sub(pred, Tensor(targets)))), 0.5)

    def params(self):
        return self.net.params()

"""Soft actor-critic conditioned on a task representation vector.

Twin critics with softly updated target copies, a tanh-squashed Gaussian
policy, and automatic temperature tuning against a fixed entropy target. The
task representation enters the policy and both critics as an extra input
block and is always treated as a constant there: representation learning
happens elsewhere.
"""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import MLP, Tensor
from .errors import DimensionError, ParameterError

LOG_STD_MIN = -10.0
LOG_STD_MAX = 2.0
_LOG_2PI = math.log(2.0 * math.pi)
_TANH_EPS = 1e-6


class ContextualPolicy:
    """tanh-squashed Gaussian policy over (state, task representation)."""

    def __init__(self, state_dim, action_dim, latent_dim, hidden=(300, 300, 300), rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.latent_dim = latent_dim
        self.trunk = MLP((state_dim + latent_dim, *hidden), rng)
        last = hidden[-1]
        self.mean_head = ad.Linear(last, action_dim, rng)
        self.log_std_head = ad.Linear(last, action_dim, rng)

    def _features(self, s, zhat, frozen=False):
        s = s if isinstance(s, Tensor) else Tensor(s)
        zhat = zhat if isinstance(zhat, Tensor) else Tensor(zhat)
        if s.shape[0] != zhat.shape[0]:
            raise DimensionError(f"batch sizes differ: {s.shape} vs {zhat.shape}")
        x = ad.concat_cols([s, zhat])
        return ad.relu(self.trunk(x, frozen=frozen))

    def distribution(self, s, zhat, frozen=False):
        h = self._features(s, zhat, frozen=frozen)
        mean = self.mean_head(h, frozen=frozen)
        log_std = ad.clamp(self.log_std_head(h, frozen=frozen), LOG_STD_MIN, LOG_STD_MAX)
        return mean, log_std

    def sample(self, s, zhat, noise, frozen=False):
        """Reparameterized action draw with its log-probability.

        Returns (action, log_prob) where the log-prob includes the tanh
        change-of-variables correction, summed over action dimensions.
        """
        mean, log_std = self.distribution(s, zhat, frozen=frozen)
        noise = np.asarray(noise, dtype=np.float64)
        if noise.shape != mean.shape:
            raise DimensionError(f"noise shape {noise.shape} must match {mean.shape}")
        u = ad.gaussian_rsample(mean, log_std, Tensor(noise))
        action = ad.tanh(u)
        # base Gaussian log-density at the sampled point: the standardized
        # residual is exactly the injected noise
        base = ad.scale(
            ad.tsum(ad.add(log_std, Tensor(0.5 * noise * noise + 0.5 * _LOG_2PI)), axis=1), -1.0
        )
        correction = ad.tsum(
            ad.log(ad.sub(Tensor(np.full(action.shape, 1.0 + _TANH_EPS)), ad.square(action))),
            axis=1,
        )
        log_prob = ad.sub(base, correction)
        return action, log_prob

    def act(self, s_row, zhat_row, mode="stochastic", noise=None):
        """Single-step action for rollouts; returns a plain numpy vector."""
        if mode not in ("stochastic", "deterministic"):
            raise ParameterError(f"unknown mode '{mode}'")
        with ad.no_grad():
            mean, log_std = self.distribution(
                Tensor(np.atleast_2d(s_row)), Tensor(np.atleast_2d(zhat_row))
            )
            if mode == "deterministic":
                return np.tanh(mean.data[0])
            if noise is None:
                raise ParameterError("stochastic act needs a noise vector")
            u = mean.data[0] + np.exp(log_std.data[0]) * np.asarray(noise)
            return np.tanh(u)

    def params(self):
        out = {f"trunk.{k}": v for k, v in self.trunk.params().items()}
        out.update({f"mean.{k}": v for k, v in self.mean_head.params().items()})
        out.update({f"log_std.{k}": v for k, v in self.log_std_head.params().items()})
        return out


class _QNet:
    def __init__(self, in_dim, hidden, rng):
        self.net = MLP((in_dim, *hidden, 1), rng)

    def __call__(self, x, frozen=False):
        return self.net(x, frozen=frozen)

    def params(self):
        return self.net.params()


class ContextualCritic:
    """Twin Q networks over (state, action, task representation) plus target copies."""

    def __init__(self, state_dim, action_dim, latent_dim, hidden=(300, 300, 300), rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        in_dim = state_dim + action_dim + latent_dim
        self.q1 = _QNet(in_dim, hidden, rng)
        self.q2 = _QNet(in_dim, hidden, rng)
        self.t1 = _QNet(in_dim, hidden, rng)
        self.t2 = _QNet(in_dim, hidden, rng)
        self._sync_targets()
        for p in list(self.t1.params().values()) + list(self.t2.params().values()):
            p.requires_grad = False

    def _sync_targets(self):
        for live, targ in ((self.q1, self.t1), (self.q2, self.t2)):
            for k, v in live.params().items():
                targ.params()[k].data = v.data.copy()

    def _join(self, s, a, zhat):
        parts = [t if isinstance(t, Tensor) else Tensor(t) for t in (s, a, zhat)]
        return ad.concat_cols(parts)

    def q_values(self, s, a, zhat, frozen=False):
        x = self._join(s, a, zhat)
        return self.q1(x, frozen=frozen), self.q2(x, frozen=frozen)

    def target_min(self, s, a, zhat):
        """min over the two target critics; plain numpy values."""
        with ad.no_grad():
            x = self._join(s, a, zhat)
            return np.minimum(self.t1(x).data, self.t2(x).data)

    def soft_update(self, tau):
        for live, targ in ((self.q1, self.t1), (self.q2, self.t2)):
            lp, tp = live.params(), targ.params()
            for k in lp:
                tp[k].data = tau * lp[k].data + (1.0 - tau) * tp[k].data

    def params(self):
        out = {f"q1.{k}": v for k, v in self.q1.params().items()}
        out.update({f"q2.{k}": v for k, v in self.q2.params().items()})
        return out

    def target_params(self):
        out = {f"t1.{k}": v for k, v in self.t1.params().items()}
        out.update({f"t2.{k}": v for k, v in self.t2.params().items()})
        return out


class TemperatureState:
    """Learnable log-temperature with a fixed entropy target."""

    def __init__(self, action_dim, target_entropy_factor=1.0, init_log_alpha=0.0):
        self.log_alpha = Tensor(np.array(init_log_alpha), requires_grad=True)
        self.target_entropy = -float(action_dim) * target_entropy_factor

    @property
    def alpha(self):
        return float(np.exp(self.log_alpha.data))

    def params(self):
        return {"log_alpha": self.log_alpha}


def critic_loss(batch, policy, critics, temperature, zhat_t, zhat_t1, gamma, noise):
    """Sum over both critics of 0.5 * mean squared Bellman residual.

    The bootstrap target r + gamma * (1 - done) * (min target Q - alpha log pi)
    is computed without gradients; terminal transitions bootstrap nothing.
    """
    s, a, r, s_next, done = batch["s"], batch["a"], batch["r"], batch["s_next"], batch["done"]
    with ad.no_grad():
        mean, log_std = policy.distribution(Tensor(s_next), Tensor(zhat_t1))
        u = mean.data + np.exp(log_std.data) * noise
        a_next = np.tanh(u)
        logp = (
            -(log_std.data + 0.5 * noise * noise + 0.5 * _LOG_2PI).sum(axis=1)
            - np.log(1.0 + _TANH_EPS - a_next * a_next).sum(axis=1)
        )
        q_next = critics.target_min(s_next, a_next, zhat_t1).reshape(-1)
        target = r + gamma * (1.0 - done) * (q_next - temperature.alpha * logp)
    q1, q2 = critics.q_values(Tensor(s), Tensor(a), Tensor(zhat_t))
    t = Tensor(target.reshape(-1, 1))
    l1 = ad.scale(ad.tmean(ad.square(ad.sub(q1, t))), 0.5)
    l2 = ad.scale(ad.tmean(ad.square(ad.sub(q2, t))), 0.5)
    return ad.add(l1, l2)


def actor_loss(batch, policy, critics, temperature, zhat_t, noise):
    """mean(alpha * log pi(a|s, zhat) - min_l Q_l(s, a, zhat)) with critics frozen.

    Actions are re-sampled with reparameterization so the gradient reaches the
    policy parameters through both terms; the critics contribute no gradient
    of their own.
    """
    s = batch["s"]
    action, log_prob = policy.sample(Tensor(s), Tensor(zhat_t), noise)
    q1, q2 = critics.q_values(Tensor(s), action, Tensor(zhat_t), frozen=True)
    q_min = ad.minimum(q1, q2)
    ent_term = ad.scale(log_prob, temperature.alpha)
    return ad.tmean(ad.sub(ent_term, ad.reshape(q_min, (-1,)))), log_prob


def temperature_loss(temperature, log_probs, target_entropy=None):
    """mean(-exp(log_alpha) * (log_probs + target_entropy)).

    ``log_probs`` must be detached values; the only gradient is to log_alpha.
    At log_probs == -target_entropy the loss and its gradient are both zero.
    """
    h = temperature.target_entropy if target_entropy is None else target_entropy
    lp = log_probs.data if isinstance(log_probs, Tensor) else np.asarray(log_probs, dtype=np.float64)
    alpha = ad.exp(temperature.log_alpha)
    drive = float(np.mean(lp + h))
    return ad.scale(alpha, -drive)

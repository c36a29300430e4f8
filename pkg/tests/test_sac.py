"""Contextual SAC: squashed-Gaussian policy (with a quadrature oracle for the
log-density), twin critics with frozen targets, the Bellman target, and the
temperature controller's equilibrium."""

import numpy as np
import pytest

import waverl.autodiff as ad
import waverl.sac as sac
from waverl.autodiff import Adam, Tensor, backward
from waverl.errors import ParameterError
from waverl.sac import ContextualCritic, ContextualPolicy, TemperatureState


def make_policy(rng, ds=2, da=1, dz=3, hidden=(32, 32)):
    return ContextualPolicy(ds, da, dz, hidden=hidden, rng=rng)


def make_critics(rng, ds=2, da=1, dz=3, hidden=(32, 32)):
    return ContextualCritic(ds, da, dz, hidden=hidden, rng=rng)


def make_batch(rng, n=8, ds=2, da=1):
    return {
        "s": rng.normal(size=(n, ds)),
        "a": rng.uniform(-1, 1, size=(n, da)),
        "r": rng.normal(size=n),
        "s_next": rng.normal(size=(n, ds)),
        "done": np.zeros(n),
    }


class TestPolicy:
    def test_deterministic_zero_mean_gives_zero_action(self):
        rng = np.random.default_rng(0)
        pol = make_policy(rng)
        for layer in (pol.mean_head,):
            layer.w.data[:] = 0.0
            layer.b.data[:] = 0.0
        a = pol.act(np.zeros(2), np.zeros(3), mode="deterministic")
        np.testing.assert_array_equal(a, np.zeros(1))

    def test_actions_bounded(self):
        rng = np.random.default_rng(1)
        pol = make_policy(rng)
        for _ in range(100):
            a = pol.act(rng.normal(size=2) * 5, rng.normal(size=3) * 5,
                        mode="stochastic", noise=rng.standard_normal(1) * 3)
            assert np.all(np.abs(a) <= 1.0)

    def test_unknown_mode_rejected(self):
        pol = make_policy(np.random.default_rng(2))
        with pytest.raises(ParameterError):
            pol.act(np.zeros(2), np.zeros(3), mode="greedy")

    def test_log_prob_matches_cdf_derivative(self):
        # oracle: differentiate the exact squashed-Gaussian CDF numerically
        rng = np.random.default_rng(3)
        pol = make_policy(rng, da=1)
        s = rng.normal(size=(1, 2))
        zhat = rng.normal(size=(1, 3))
        noise = rng.standard_normal((1, 1))
        action, log_prob = pol.sample(Tensor(s), Tensor(zhat), noise)
        with ad.no_grad():
            mean, log_std = pol.distribution(Tensor(s), Tensor(zhat))
        mu, sigma = mean.data[0, 0], np.exp(log_std.data[0, 0])
        a = action.data[0, 0]

        from math import erf, sqrt
        def cdf(x):  # P(tanh(u) <= x)
            return 0.5 * (1.0 + erf((np.arctanh(x) - mu) / (sigma * sqrt(2.0))))

        h = 1e-6
        density = (cdf(a + h) - cdf(a - h)) / (2 * h)
        assert np.exp(log_prob.data[0]) == pytest.approx(density, rel=1e-3)

    def test_log_prob_integrates_to_one(self):
        rng = np.random.default_rng(4)
        pol = make_policy(rng, da=1)
        s = rng.normal(size=(1, 2))
        zhat = rng.normal(size=(1, 3))
        with ad.no_grad():
            mean, log_std = pol.distribution(Tensor(s), Tensor(zhat))
        mu, sigma = mean.data[0, 0], np.exp(log_std.data[0, 0])
        grid = np.linspace(-0.999, 0.999, 20001)
        u = np.arctanh(grid)
        log_density = (-0.5 * ((u - mu) / sigma) ** 2 - np.log(sigma)
                       - 0.5 * np.log(2 * np.pi) - np.log(1 - grid**2))
        trapezoid = getattr(np, "trapezoid", np.trapz)
        total = trapezoid(np.exp(log_density), grid)
        assert total == pytest.approx(1.0, abs=2e-3)

    def test_sample_matches_act(self):
        rng = np.random.default_rng(5)
        pol = make_policy(rng)
        s = rng.normal(size=2)
        zhat = rng.normal(size=3)
        noise = rng.standard_normal(1)
        a1 = pol.act(s, zhat, mode="stochastic", noise=noise)
        a2, _ = pol.sample(Tensor(s.reshape(1, -1)), Tensor(zhat.reshape(1, -1)),
                           noise.reshape(1, -1))
        np.testing.assert_allclose(a1, a2.data[0])


class TestCriticLoss:
    def test_terminal_target_is_reward(self):
        rng = np.random.default_rng(6)
        pol, cri = make_policy(rng), make_critics(rng)
        temp = TemperatureState(1)
        batch = make_batch(rng)
        batch["done"] = np.ones(8)
        zh = rng.normal(size=(8, 3))
        noise = rng.standard_normal((8, 1))
        loss1 = sac.critic_loss(batch, pol, cri, temp, zh, zh, 0.99, noise)
        batch2 = dict(batch)
        batch2["s_next"] = batch["s_next"] + 100.0  # next state must not matter
        loss2 = sac.critic_loss(batch2, pol, cri, temp, zh, zh, 0.99, noise)
        assert loss1.item() == pytest.approx(loss2.item())

    def test_gamma_zero_target_is_reward(self):
        rng = np.random.default_rng(7)
        pol, cri = make_policy(rng), make_critics(rng)
        temp = TemperatureState(1)
        batch = make_batch(rng)
        zh = rng.normal(size=(8, 3))
        noise = rng.standard_normal((8, 1))
        loss_g0 = sac.critic_loss(batch, pol, cri, temp, zh, zh, 0.0, noise)
        done_batch = dict(batch)
        done_batch["done"] = np.ones(8)
        loss_done = sac.critic_loss(done_batch, pol, cri, temp, zh, zh, 0.99, noise)
        assert loss_g0.item() == pytest.approx(loss_done.item())

    def test_twin_symmetry(self):
        rng = np.random.default_rng(8)
        pol, cri = make_policy(rng), make_critics(rng)
        temp = TemperatureState(1)
        batch = make_batch(rng)
        zh = rng.normal(size=(8, 3))
        noise = rng.standard_normal((8, 1))
        base = sac.critic_loss(batch, pol, cri, temp, zh, zh, 0.9, noise).item()
        cri.q1, cri.q2 = cri.q2, cri.q1
        cri.t1, cri.t2 = cri.t2, cri.t1
        swapped = sac.critic_loss(batch, pol, cri, temp, zh, zh, 0.9, noise).item()
        assert swapped == pytest.approx(base)

    def test_target_critics_never_get_grads(self):
        rng = np.random.default_rng(9)
        pol, cri = make_policy(rng), make_critics(rng)
        temp = TemperatureState(1)
        batch = make_batch(rng)
        zh = rng.normal(size=(8, 3))
        backward(sac.critic_loss(batch, pol, cri, temp, zh, zh, 0.9,
                                 rng.standard_normal((8, 1))))
        for p in list(cri.t1.params().values()) + list(cri.t2.params().values()):
            assert p.grad is None

    def test_single_transition_overfit(self):
        rng = np.random.default_rng(10)
        pol, cri = make_policy(rng), make_critics(rng)
        temp = TemperatureState(1)
        batch = {k: v[:1] for k, v in make_batch(rng).items()}
        batch["done"] = np.ones(1)
        zh = rng.normal(size=(1, 3))
        opt = Adam(list(cri.params().values()), lr=3e-3)
        for _ in range(200):
            opt.zero_grad()
            loss = sac.critic_loss(batch, pol, cri, temp, zh, zh, 0.99,
                                   rng.standard_normal((1, 1)))
            backward(loss)
            opt.step()
        assert loss.item() < 1e-3


class TestActorLoss:
    def test_critic_grads_zero_after_actor_backward(self):
        rng = np.random.default_rng(11)
        pol, cri = make_policy(rng), make_critics(rng)
        temp = TemperatureState(1)
        batch = make_batch(rng)
        zh = rng.normal(size=(8, 3))
        loss, _ = sac.actor_loss(batch, pol, cri, temp, zh, rng.standard_normal((8, 1)))
        backward(loss)
        for p in list(cri.q1.params().values()) + list(cri.q2.params().values()):
            assert p.grad is None
        assert pol.trunk.layers[0].w.grad is not None

    def test_alpha_zero_is_pure_q_maximization(self):
        rng = np.random.default_rng(12)
        pol, cri = make_policy(rng), make_critics(rng)
        temp = TemperatureState(1, init_log_alpha=-60.0)  # alpha ~ 0
        batch = make_batch(rng)
        zh = rng.normal(size=(8, 3))
        noise = rng.standard_normal((8, 1))
        loss, _ = sac.actor_loss(batch, pol, cri, temp, zh, noise)
        action, _ = pol.sample(Tensor(batch["s"]), Tensor(zh), noise)
        q1, q2 = cri.q_values(Tensor(batch["s"]), action, Tensor(zh), frozen=True)
        qmin = np.minimum(q1.data, q2.data).mean()
        assert loss.item() == pytest.approx(-qmin, rel=1e-9)

    def test_policy_moves_toward_known_argmax(self):
        # hand-built quadratic Q peaking at a known action: the policy mean
        # should move toward it within a few hundred steps
        rng = np.random.default_rng(13)
        pol = make_policy(rng, ds=1, da=1, dz=1)
        target_action = 0.62

        class FixedQ:
            def q_values(self, s, a, zhat, frozen=False):
                neg = ad.scale(ad.square(ad.sub(a, Tensor(np.full(a.shape, target_action)))), -1.0)
                return neg, neg

        temp = TemperatureState(1, init_log_alpha=-3.0)
        opt = Adam(list(pol.params().values()), lr=3e-3)
        s = np.zeros((16, 1))
        zh = np.zeros((16, 1))
        batch = {"s": s}
        for _ in range(500):
            opt.zero_grad()
            loss, _ = sac.actor_loss(batch, pol, FixedQ(), temp, zh,
                                     rng.standard_normal((16, 1)))
            backward(loss)
            opt.step()
        a_det = pol.act(np.zeros(1), np.zeros(1), mode="deterministic")
        assert abs(a_det[0] - target_action) < 0.1


class TestTemperature:
    def test_equilibrium_zero_loss_zero_grad(self):
        temp = TemperatureState(2, target_entropy_factor=1.0)
        # log_probs == -target_entropy exactly
        loss = sac.temperature_loss(temp, np.full(16, -temp.target_entropy))
        backward(loss)
        assert loss.item() == pytest.approx(0.0)
        assert temp.log_alpha.grad is not None
        assert temp.log_alpha.grad == pytest.approx(0.0)

    def test_too_deterministic_raises_alpha(self):
        temp = TemperatureState(1)
        temp.log_alpha.zero_grad()
        log_probs = np.full(8, -temp.target_entropy + 1.0)  # higher than -H*
        backward(sac.temperature_loss(temp, log_probs))
        opt = Adam([temp.log_alpha], lr=1e-2)
        before = temp.alpha
        opt.step()
        assert temp.alpha > before

    def test_alpha_always_positive(self):
        temp = TemperatureState(1, init_log_alpha=-30.0)
        assert temp.alpha > 0.0
        temp.log_alpha.data = np.array(-300.0)
        assert temp.alpha >= 0.0  # underflows to zero at the extreme, never negative

    def test_target_entropy_value(self):
        assert TemperatureState(3, target_entropy_factor=1.0).target_entropy == -3.0


class TestSoftUpdates:
    def test_critic_soft_update_algebra(self):
        rng = np.random.default_rng(14)
        cri = make_critics(rng)
        live = {k: v.data.copy() for k, v in cri.q1.params().items()}
        # desynchronize targets first
        for v in cri.t1.params().values():
            v.data += 1.0
        old = {k: v.data.copy() for k, v in cri.t1.params().items()}
        cri.soft_update(5e-3)
        for k, v in cri.t1.params().items():
            expected = 5e-3 * live[k] + (1 - 5e-3) * old[k]
            assert np.abs(v.data - expected).max() == 0.0

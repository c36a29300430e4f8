"""The full training loop: data collection, phase-ordered optimization
(context encoder + wavelet nets first, then the policy), evaluation,
metrics, and checkpointing.

Every epoch: collect whole episodes with the stochastic policy, train the
representation on sampled windows, train the actor-critic on sampled
transitions with frozen representations, then evaluate deterministically on
fresh schedules. One master seed fans out into independent streams for the
environment, network initialization, sampling, and exploration noise, so a
(config, seed) pair pins the entire run.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from . import csvio
from . import sac as sac_mod
from .autodiff import Adam, Tensor, backward
from .buffer import SequenceReplayBuffer
from .checkpoint import load_checkpoint, save_checkpoint
from .encoder import ContextEncoder, TransitionDecoder, kl_loss
from .envs import Transition, make_env, nonstationarity_degree
from .sac import ContextualCritic, ContextualPolicy, TemperatureState
from .waveletnet import WaveletReprNet, WNetwork, ar_loss, joint_loss, wavelet_td_loss

METRICS_HEADER = (
    "epoch", "env_steps", "mean_eval_return", "std_eval_return", "encoder_kl",
    "wavelet_td", "ar_loss", "critic_loss", "actor_loss", "alpha",
    "nonstationarity_degree",
)


@dataclass
class MetricsRecord:
    epoch: int
    env_steps: int
    mean_eval_return: float
    std_eval_return: float
    encoder_kl: float
    wavelet_td: float
    ar_loss: float
    critic_loss: float
    actor_loss: float
    alpha: float
    nonstationarity_degree: float

    def row(self):
        return [getattr(self, name) for name in METRICS_HEADER]


class RunningNorm:
    """Welford running mean/std over scalars or fixed-shape vectors."""

    def __init__(self, dim=None):
        self.count = 0
        self.mean = 0.0 if dim is None else np.zeros(dim)
        self.m2 = 0.0 if dim is None else np.zeros(dim)

    def update(self, x):
        self.count += 1
        delta = x - self.mean
        self.mean = self.mean + delta / self.count
        self.m2 = self.m2 + delta * (x - self.mean)

    @property
    def std(self):
        if self.count < 2:
            return 1.0 if np.isscalar(self.mean) else np.ones_like(self.mean)
        if np.isscalar(self.mean):
            return math.sqrt(self.m2 / (self.count - 1))
        return np.sqrt(self.m2 / (self.count - 1))

    def normalize(self, x):
        return (x - self.mean) / (self.std + 1e-8)

    def state(self):
        return {"count": self.count,
                "mean": self.mean if np.isscalar(self.mean) else self.mean.tolist(),
                "m2": self.m2 if np.isscalar(self.m2) else self.m2.tolist()}

    def restore(self, state):
        self.count = state["count"]
        if np.isscalar(self.mean):
            self.mean = state["mean"]
            self.m2 = state["m2"]
        else:
            self.mean = np.asarray(state["mean"], dtype=np.float64)
            self.m2 = np.asarray(state["m2"], dtype=np.float64)


class RollingContext:
    """Most recent window of encoder rows and their latents during a rollout."""

    def __init__(self, window, input_dim, latent_dim):
        self.window = window
        self.rows = np.zeros((window, input_dim))
        self.z = np.zeros((window, latent_dim))

    def reset(self):
        self.rows[:] = 0.0
        self.z[:] = 0.0

    def push(self, row, z_row):
        self.rows[:-1] = self.rows[1:]
        self.rows[-1] = row
        self.z[:-1] = self.z[1:]
        self.z[-1] = z_row


def _continuous_to_dose(a):
    return int(np.clip(round((float(a) + 1.0) / 2.0 * 5.0), 0, 5))


class Trainer:
    """Owns every component of one experiment run."""

    def __init__(self, config):
        config.validate()
        self.cfg = config
        self.epoch = 0
        self.env_steps = 0

        ss = np.random.SeedSequence(config.seed)
        env_seed, init_seed, noise_seed, sample_seed = ss.spawn(4)
        self.init_rng = np.random.default_rng(init_seed)
        self.noise_rng = np.random.default_rng(noise_seed)
        self.sample_rng = np.random.default_rng(sample_seed)
        self._env_seed_root = int(env_seed.generate_state(1)[0] % (2**31))

        self.env = self._build_env(self._env_seed_root)
        self.state_dim = self.env.observation_dim
        self.action_dim = self.env.action_dim
        self.discrete = self.env.discrete_actions

        d = config.latent_dim
        self.encoder = ContextEncoder(self.state_dim, self.action_dim, d,
                                      hidden=config.encoder_hidden, rng=self.init_rng)
        self.decoder = TransitionDecoder(self.state_dim, self.action_dim, d,
                                         hidden=config.decoder_hidden, rng=self.init_rng)
        self.ynet = WaveletReprNet(config.window, config.levels, config.keep_fraction,
                                   filter_length=config.filter_length)
        # the low-pass branch of the TD network shares its taps with the
        # analysis bank, so both objectives shape one filter pair
        self.wnet = WNetwork(config.window, config.levels, bank=self.ynet.bank)
        self.policy = ContextualPolicy(self.state_dim, self.action_dim, d,
                                       hidden=config.rl_hidden, rng=self.init_rng)
        self.critics = ContextualCritic(self.state_dim, self.action_dim, d,
                                        hidden=config.rl_hidden, rng=self.init_rng)
        self.temperature = TemperatureState(self.action_dim, config.target_entropy_factor)

        repr_params = list(self.encoder.params().values())
        repr_params += list(self.decoder.params().values())
        repr_params += list(self.ynet.params().values())
        repr_params += list(self.wnet.params().values())
        self.repr_opt = Adam(repr_params, lr=config.lr)
        self.policy_opt = Adam(list(self.policy.params().values()), lr=config.lr)
        self.critic_opt = Adam(list(self.critics.params().values()), lr=config.lr)
        self.alpha_opt = Adam(list(self.temperature.params().values()), lr=config.lr)

        # the "no_td" ablation trains the representation on the AR term alone
        self.alpha_y = 0.0 if config.ablation == "no_td" else config.alpha_y

        self.buffer = SequenceReplayBuffer(config.buffer_capacity)
        self.reward_norm = RunningNorm()
        self.delta_norm = RunningNorm(dim=self.state_dim)  # whitens decoder targets
        self.input_norm = RunningNorm(dim=self.encoder.input_dim)  # whitens encoder rows
        self.context = RollingContext(config.window, self.encoder.input_dim, d)
        self._last_eval_degree = 0.0

    # -- construction helpers ------------------------------------------------

    def _build_env(self, seed):
        cfg = self.cfg
        return make_env(cfg.env, seed=seed, episode_len=cfg.resolved_episode_len(),
                        mean_period=cfg.mean_period, period_std=cfg.period_std,
                        min_period=cfg.min_period, env_params=cfg.env_params,
                        obs_noise_sigma=cfg.obs_noise_sigma)

    def _encode_row(self, row, noise_row):
        with ad.no_grad():
            latent = self.encoder.encode_rows(row.reshape(1, -1), noise_row.reshape(1, -1))
            return latent.sample.data[0]

    def _zhat_from_context(self):
        cfg = self.cfg
        if cfg.ablation == "plain_sac":
            return np.zeros(cfg.latent_dim)
        if cfg.ablation == "no_y":
            return self.context.z[-1].copy()
        with ad.no_grad():
            zhat, _ = self.ynet.forward(Tensor(self.context.z))
            return zhat.data[-1].copy()

    def _policy_action(self, obs, zhat_row, mode):
        if mode == "random":
            return self.noise_rng.uniform(-1.0, 1.0, size=self.action_dim)
        noise = self.noise_rng.standard_normal(self.action_dim) if mode == "stochastic" else None
        return self.policy.act(obs, zhat_row, mode=mode, noise=noise)

    def _env_action(self, a):
        if self.discrete:
            return _continuous_to_dose(a[0])
        return a

    # -- data collection -----------------------------------------------------

    def collect(self, n_steps, random_actions=False, action_source=None):
        """Roll whole episodes until at least ``n_steps`` transitions landed
        in the buffer (0 collects nothing). Episode-aligned so checkpoints at
        epoch boundaries never cut an episode in half.

        ``action_source(rng, episode_step)`` overrides the policy with a
        scripted excitation signal (probing demos, system identification)."""
        collected = 0
        mode = "random" if random_actions else "stochastic"
        while collected < n_steps:
            obs = self.env.reset()
            self.context.reset()
            done = False
            episode_step = 0
            while not done:
                zhat_row = self._zhat_from_context()
                if action_source is not None:
                    a = np.clip(np.atleast_1d(action_source(self.noise_rng, episode_step)),
                                -1.0, 1.0)
                else:
                    a = self._policy_action(obs, zhat_row, mode)
                obs2, r, done, info = self.env.step(self._env_action(a))
                episode_step += 1
                self.reward_norm.update(r)
                self.delta_norm.update(obs2 - obs)
                self.input_norm.update(self._raw_row(obs, np.atleast_1d(a), obs2, r))
                tr = Transition(
                    s=obs.copy(), a=np.atleast_1d(a).astype(np.float64), s_next=obs2.copy(),
                    r=float(r), done=bool(info["terminal"]),
                    omega_hidden=info["true_omega"], step_index=self.env_steps,
                    segment_index=info["segment"],
                )
                self.buffer.append(tr)
                row = self._encoder_row(tr)
                if self.cfg.ablation != "plain_sac":
                    z_row = self._encode_row(
                        row, self.noise_rng.standard_normal(self.cfg.latent_dim))
                else:
                    z_row = np.zeros(self.cfg.latent_dim)
                self.context.push(row, z_row)
                self.env_steps += 1
                collected += 1
                obs = obs2
            self.buffer.end_episode()
            self.context.reset()
        return collected

    def _raw_row(self, s, a, s_next, r):
        """Unnormalized encoder featurization: [s, a, s' - s, r]."""
        rn = self.reward_norm.normalize(r) if self.cfg.reward_norm else r
        return np.concatenate([s, a, s_next - s, [rn]])

    def _encoder_row(self, tr):
        return self.input_norm.normalize(self._raw_row(tr.s, tr.a, tr.s_next, tr.r))

    def _batch_rows(self, batch):
        """Encoder input rows for a [B, T, ...] run batch -> [B*T, input_dim]."""
        b, t = batch["s"].shape[:2]
        r = batch["r"]
        if self.cfg.reward_norm:
            r = (r - self.reward_norm.mean) / (self.reward_norm.std + 1e-8)
        rows = np.concatenate(
            [batch["s"], batch["a"], batch["s_next"] - batch["s"], r[..., None]], axis=2
        )
        return self.input_norm.normalize(rows.reshape(b * t, -1))

    # -- training phases -------------------------------------------------------

    def representation_phase(self, steps):
        """Sampled-window training of encoder + wavelet nets; soft-updates the
        TD target each step. Skipped (with a warning count) on an empty buffer."""
        cfg = self.cfg
        stats = {"encoder_kl": 0.0, "wavelet_td": 0.0, "ar_loss": 0.0}
        if steps == 0 or cfg.ablation == "plain_sac":
            return stats
        run_len = cfg.window + 1
        if self.buffer.num_runs(run_len) == 0:
            return stats
        b, l, d = cfg.batch_repr, cfg.window, cfg.latent_dim
        for _ in range(steps):
            batch = self.buffer.sample_runs(b, run_len, self.sample_rng)
            rows = self._batch_rows(batch)
            noise = self.noise_rng.standard_normal((rows.shape[0], d))
            latent = self.encoder.encode_rows(rows, noise)
            loss = ad.scale(kl_loss(latent), cfg.kl_weight)
            kl_val = loss.item() / cfg.kl_weight if cfg.kl_weight else 0.0
            if cfg.recon_weight > 0.0:
                ds = self.state_dim
                s_flat = batch["s"].reshape(-1, ds)
                deltas = self.delta_norm.normalize(batch["s_next"].reshape(-1, ds) - s_flat)
                r_target = self.reward_norm.normalize(batch["r"].reshape(-1, 1))
                targets = np.concatenate([deltas, r_target], axis=1)
                # the decoder reads the posterior mean: a noiseless information
                # channel converges much faster than the sampled latent
                recon = self.decoder.loss(
                    s_flat, batch["a"].reshape(-1, self.action_dim), latent.mean, targets)
                loss = ad.add(loss, ad.scale(recon, cfg.recon_weight))
            z_src = latent.sample if cfg.encoder_grads == "all" else latent.sample.detach()
            z_tm = ad.time_major(z_src, b, run_len)
            z_t = ad.slice_rows(z_tm, 0, l)
            z_t1 = ad.slice_rows(z_tm, 1, l + 1)
            if cfg.ablation == "no_y":
                td_val, ar_val = 0.0, 0.0
            else:
                td = wavelet_td_loss(self.wnet, z_t, z_t1, cfg.gamma)
                zhat, _ = self.ynet.forward(z_t)
                ar = ar_loss(zhat, z_t1.detach())
                loss = ad.add(loss, joint_loss(td, ar, self.alpha_y))
                td_val, ar_val = td.item(), ar.item()
            self.repr_opt.zero_grad()
            backward(loss)
            self.repr_opt.step()
            self.wnet.soft_update(cfg.soft_tau)
            stats["encoder_kl"] += kl_val
            stats["wavelet_td"] += td_val
            stats["ar_loss"] += ar_val
        return {k: v / steps for k, v in stats.items()}

    def _batch_zhat(self, batch):
        """Frozen task representations for a policy batch.

        For each sampled run of window+1 transitions, the trained transition
        is the second-to-last one; its representation comes from the window
        ending there, and the next-step representation from the window shifted
        forward by one.
        """
        cfg = self.cfg
        b, run_len = batch["s"].shape[:2]
        l, d = cfg.window, cfg.latent_dim
        if cfg.ablation == "plain_sac":
            z = np.zeros((b, d))
            return z, z.copy()
        with ad.no_grad():
            rows = self._batch_rows(batch)
            noise = self.noise_rng.standard_normal((rows.shape[0], d))
            z = self.encoder.encode_rows(rows, noise).sample.data.reshape(b, run_len, d)
            if cfg.ablation == "no_y":
                return z[:, l - 1].copy(), z[:, l].copy()
            z_a = np.ascontiguousarray(z[:, :l].transpose(1, 0, 2).reshape(l, b * d))
            z_b = np.ascontiguousarray(z[:, 1:].transpose(1, 0, 2).reshape(l, b * d))
            zhat_a = self.ynet.forward(Tensor(z_a))[0].data[-1].reshape(b, d)
            zhat_b = self.ynet.forward(Tensor(z_b))[0].data[-1].reshape(b, d)
            return zhat_a.copy(), zhat_b.copy()

    def policy_phase(self, steps):
        """Actor-critic updates on frozen representations (no gradient from
        any RL loss reaches the encoder or the wavelet nets)."""
        cfg = self.cfg
        stats = {"critic_loss": 0.0, "actor_loss": 0.0}
        run_len = cfg.window + 1
        if steps == 0 or self.buffer.num_runs(run_len) == 0:
            return stats
        b = cfg.batch_policy
        idx = cfg.window - 1
        for _ in range(steps):
            runs = self.buffer.sample_runs(b, run_len, self.sample_rng)
            zhat_t, zhat_t1 = self._batch_zhat(runs)
            batch = {
                "s": runs["s"][:, idx], "a": runs["a"][:, idx], "r": runs["r"][:, idx],
                "s_next": runs["s_next"][:, idx], "done": runs["done"][:, idx],
            }
            a_loss, log_prob = sac_mod.actor_loss(
                batch, self.policy, self.critics, self.temperature, zhat_t,
                self.noise_rng.standard_normal((b, self.action_dim)))
            self.policy_opt.zero_grad()
            backward(a_loss)
            self.policy_opt.step()

            c_loss = sac_mod.critic_loss(
                batch, self.policy, self.critics, self.temperature, zhat_t, zhat_t1,
                cfg.gamma, self.noise_rng.standard_normal((b, self.action_dim)))
            self.critic_opt.zero_grad()
            backward(c_loss)
            self.critic_opt.step()

            t_loss = sac_mod.temperature_loss(self.temperature, log_prob.detach())
            self.alpha_opt.zero_grad()
            backward(t_loss)
            self.alpha_opt.step()

            self.critics.soft_update(cfg.soft_tau)
            stats["critic_loss"] += c_loss.item()
            stats["actor_loss"] += a_loss.item()
        return {k: v / steps for k, v in stats.items()}

    # -- evaluation ------------------------------------------------------------

    def evaluate(self, n_trajectories=None, epoch=None):
        """Deterministic rollouts on fresh schedules with held-out seeds.

        Never touches the replay buffer or any RNG used for training.
        Returns (mean return, std return, mean non-stationarity degree).
        """
        cfg = self.cfg
        n = n_trajectories or cfg.eval_trajectories
        epoch = self.epoch if epoch is None else epoch
        returns, degrees = [], []
        for k in range(n):
            seed = int(np.random.SeedSequence((cfg.seed, 7_000_003 + epoch, k))
                       .generate_state(1)[0] % (2**31))
            returns.append(self.rollout_return(seed))
            degrees.append(self._last_eval_degree)
        mean = float(np.mean(returns))
        std = float(np.std(returns))
        return mean, std, float(np.mean(degrees))

    def rollout_return(self, env_seed, record=None):
        env = self._build_env(env_seed)
        context = RollingContext(self.cfg.window, self.encoder.input_dim, self.cfg.latent_dim)
        obs = env.reset()
        total = 0.0
        done = False
        while not done:
            if self.cfg.ablation == "plain_sac":
                zhat_row = np.zeros(self.cfg.latent_dim)
            elif self.cfg.ablation == "no_y":
                zhat_row = context.z[-1].copy()
            else:
                with ad.no_grad():
                    zhat_row = self.ynet.forward(Tensor(context.z))[0].data[-1].copy()
            a = self.policy.act(obs, zhat_row, mode="deterministic")
            obs2, r, done, info = env.step(self._env_action(a))
            tr = Transition(obs.copy(), np.atleast_1d(a), obs2.copy(), float(r),
                            bool(info["terminal"]), info["true_omega"], 0, info["segment"])
            row = self._encoder_row(tr)
            z_row = (np.zeros(self.cfg.latent_dim) if self.cfg.ablation == "plain_sac"
                     else self._encode_row(row, np.zeros(self.cfg.latent_dim)))
            context.push(row, z_row)
            if record is not None:
                record.append((tr, info))
            total += r
            obs = obs2
        self._last_eval_degree = nonstationarity_degree(env.stream.realized_schedule())
        return total

    # -- top-level loop ----------------------------------------------------------

    def run(self):
        cfg = self.cfg
        os.makedirs(cfg.out_dir, exist_ok=True)
        cfg.to_json(os.path.join(cfg.out_dir, "config.json"))
        metrics_path = os.path.join(cfg.out_dir, "metrics.csv")
        metrics = csvio.CsvAppender(metrics_path, csvio.METRICS_SCHEMA, METRICS_HEADER,
                                    resume=self.epoch > 0)
        if self.epoch == 0:
            self.collect(cfg.initial_transitions, random_actions=True)
        t0 = time.time()
        records = []
        while self.epoch < cfg.epochs:
            record = self.run_epoch()
            records.append(record)
            metrics.append(record.row())
            if cfg.checkpoint_every and (self.epoch % cfg.checkpoint_every == 0
                                         or self.epoch == cfg.epochs):
                self.save(os.path.join(cfg.out_dir, "checkpoint"))
        summary = {
            "env": cfg.env,
            "ablation": cfg.ablation,
            "seed": cfg.seed,
            "epochs": self.epoch,
            "env_steps": self.env_steps,
            "final_mean_eval_return": records[-1].mean_eval_return if records else None,
            "wall_time_s": round(time.time() - t0, 3),
        }
        with open(os.path.join(cfg.out_dir, "summary.json"), "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
        return records

    def run_epoch(self):
        cfg = self.cfg
        self.collect(cfg.steps_per_epoch)
        rep_stats = self.representation_phase(cfg.repr_steps)
        pol_stats = self.policy_phase(cfg.policy_steps)
        mean, std, degree = self.evaluate()
        self.epoch += 1
        return MetricsRecord(
            epoch=self.epoch, env_steps=self.env_steps,
            mean_eval_return=mean, std_eval_return=std,
            encoder_kl=rep_stats["encoder_kl"], wavelet_td=rep_stats["wavelet_td"],
            ar_loss=rep_stats["ar_loss"], critic_loss=pol_stats["critic_loss"],
            actor_loss=pol_stats["actor_loss"], alpha=self.temperature.alpha,
            nonstationarity_degree=degree,
        )

    # -- persistence ----------------------------------------------------------

    def named_params(self):
        out = {}
        for prefix, obj in (("encoder", self.encoder), ("decoder", self.decoder),
                            ("ynet", self.ynet),
                            ("wnet", self.wnet), ("policy", self.policy),
                            ("critics", self.critics), ("temperature", self.temperature)):
            for k, v in obj.params().items():
                out[f"{prefix}.{k}"] = v
        for prefix, obj in (("wnet", self.wnet), ("critics", self.critics)):
            for k, v in obj.target_params().items():
                out[f"{prefix}.{k}"] = v
        return out

    def save(self, directory):
        arrays = {name: p.data for name, p in self.named_params().items()}
        for opt_name, opt in (("repr", self.repr_opt), ("policy", self.policy_opt),
                              ("critic", self.critic_opt), ("alpha", self.alpha_opt)):
            for i, st in enumerate(opt.state):
                arrays[f"opt.{opt_name}.{i}.m"] = st["m"]
                arrays[f"opt.{opt_name}.{i}.v"] = st["v"]
        arrays.update(self.buffer.state_arrays())
        meta = {
            "epoch": self.epoch,
            "env_steps": self.env_steps,
            "config": asdict(self.cfg),
            "n_episodes": len(self.buffer.episodes),
            "env_state": self.env.state(),
            "rng": {
                "noise": self.noise_rng.bit_generator.state,
                "sample": self.sample_rng.bit_generator.state,
            },
            "reward_norm": self.reward_norm.state(),
            "delta_norm": self.delta_norm.state(),
            "input_norm": self.input_norm.state(),
            "opt_t": {
                opt_name: [st["t"] for st in opt.state]
                for opt_name, opt in (("repr", self.repr_opt), ("policy", self.policy_opt),
                                      ("critic", self.critic_opt), ("alpha", self.alpha_opt))
            },
        }
        save_checkpoint(directory, arrays, meta)

    def restore(self, directory):
        arrays, meta = load_checkpoint(directory)
        for name, p in self.named_params().items():
            p.data = arrays[name].reshape(p.data.shape)
        for opt_name, opt in (("repr", self.repr_opt), ("policy", self.policy_opt),
                              ("critic", self.critic_opt), ("alpha", self.alpha_opt)):
            for i, st in enumerate(opt.state):
                st["m"] = arrays[f"opt.{opt_name}.{i}.m"].reshape(st["m"].shape)
                st["v"] = arrays[f"opt.{opt_name}.{i}.v"].reshape(st["v"].shape)
                st["t"] = meta["opt_t"][opt_name][i]
        self.buffer.restore_arrays(arrays, meta["n_episodes"])
        self.env.restore(meta["env_state"])
        self.noise_rng.bit_generator.state = meta["rng"]["noise"]
        self.sample_rng.bit_generator.state = meta["rng"]["sample"]
        self.reward_norm.restore(meta["reward_norm"])
        self.delta_norm.restore(meta["delta_norm"])
        self.input_norm.restore(meta["input_norm"])
        self.epoch = meta["epoch"]
        self.env_steps = meta["env_steps"]
        return self

    @classmethod
    def from_checkpoint(cls, config, directory):
        return cls(config).restore(directory)


def run_experiment(config):
    """Build a trainer, run it to completion, return the metric records."""
    return Trainer(config).run()

"""Synthetic piecewise-stationary environments.

Each environment runs a hidden task parameter that is re-drawn at stochastic
intervals (segment durations ~ round(Normal(mean, std)), clamped below), so
dynamics or rewards drift within an episode while the agent only sees raw
observations. The true parameter is carried through ``info`` for evaluation
code and must never reach the agent.

Three environments:

* ``VelTrackEnv``   - 1-D point mass chasing a hidden target velocity
                      (reward changes per segment).
* ``OscDampEnv``    - damped oscillator whose damping coefficient jumps
                      between segments (dynamics change).
* ``GlucoSimEnv``   - toy blood-glucose regulation with discrete insulin
                      doses; meal sizes change per segment, with the exact
                      piecewise zone reward (-20 terminal / -1 / +50 / 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError

DEFAULT_MEAN_PERIOD = 60.0
DEFAULT_PERIOD_STD = 20.0
DEFAULT_MIN_PERIOD = 10


@dataclass(frozen=True)
class Segment:
    omega: np.ndarray
    duration: int


@dataclass
class TaskSchedule:
    """Realized sequence of (task parameter, duration) segments."""

    segments: list
    mean_period: float = DEFAULT_MEAN_PERIOD
    period_std: float = DEFAULT_PERIOD_STD
    seed: int = 0
    min_period: int = DEFAULT_MIN_PERIOD

    def __post_init__(self):
        if not self.segments:
            raise ParameterError("schedule must contain at least one segment")
        for seg in self.segments:
            if seg.duration < 1:
                raise ParameterError("segment durations must be positive")
        bounds = np.cumsum([seg.duration for seg in self.segments])
        self._bounds = bounds

    @property
    def total_steps(self):
        return int(self._bounds[-1])

    def segment_index(self, step):
        if step < 0 or step >= self.total_steps:
            raise ParameterError(f"step {step} outside schedule of {self.total_steps} steps")
        return int(np.searchsorted(self._bounds, step, side="right"))

    def omega_at(self, step):
        return self.segments[self.segment_index(step)].omega


def sample_duration(rng, mean_period, period_std, min_period=DEFAULT_MIN_PERIOD):
    d = int(round(rng.normal(mean_period, period_std)))
    return max(d, min_period)


def make_schedule(total_steps, mean_period, period_std, omega_sampler, seed,
                  min_period=DEFAULT_MIN_PERIOD):
    """Materialize segments covering at least ``total_steps``.

    ``omega_sampler(rng, history)`` draws the next task parameter and may
    condition on the list of previous ones, so history-dependent evolution
    processes are expressible. Deterministic given ``seed``.
    """
    if mean_period <= 0:
        raise ParameterError(f"mean_period must be positive, got {mean_period}")
    if period_std < 0 or period_std >= mean_period:
        raise ParameterError("need mean_period > period_std >= 0")
    if total_steps < 1:
        raise ParameterError(f"total_steps must be >= 1, got {total_steps}")
    rng = np.random.default_rng(seed)
    segments = []
    history = []
    covered = 0
    while covered < total_steps:
        omega = np.atleast_1d(np.asarray(omega_sampler(rng, history), dtype=np.float64))
        duration = sample_duration(rng, mean_period, period_std, min_period)
        segments.append(Segment(omega=omega, duration=duration))
        history.append(omega)
        covered += duration
    return TaskSchedule(segments=segments, mean_period=mean_period,
                        period_std=period_std, seed=seed, min_period=min_period)


def nonstationarity_degree(schedule):
    """(T - mean segment duration) / T over the realized schedule; 0 for a
    single segment, approaching 1 as segments multiply."""
    durations = [seg.duration for seg in schedule.segments]
    if not durations:
        raise ParameterError("schedule has no segments")
    total = float(sum(durations))
    return (total - total / len(durations)) / total


class ScheduleStream:
    """Endless segment source: pulls new (omega, duration) pairs on demand so
    the task keeps evolving across episode resets without inter-episode jumps."""

    def __init__(self, omega_sampler, seed, mean_period=DEFAULT_MEAN_PERIOD,
                 period_std=DEFAULT_PERIOD_STD, min_period=DEFAULT_MIN_PERIOD):
        if mean_period <= 0:
            raise ParameterError(f"mean_period must be positive, got {mean_period}")
        if period_std < 0 or period_std >= mean_period:
            raise ParameterError("need mean_period > period_std >= 0")
        self.omega_sampler = omega_sampler
        self.mean_period = mean_period
        self.period_std = period_std
        self.min_period = min_period
        self.rng = np.random.default_rng(seed)
        self.history = []
        self.segments = []
        self._current = -1
        self._remaining = 0

    @classmethod
    def scripted(cls, segments):
        """Fixed segment list (wraps around if exhausted); for case studies."""
        stream = cls(omega_sampler=lambda rng, hist: segments[0].omega, seed=0)
        stream._script = [Segment(np.atleast_1d(np.asarray(s.omega, dtype=np.float64)), s.duration)
                          for s in segments]
        return stream

    def advance(self):
        """Consume one step; returns (omega, segment_index)."""
        if self._remaining == 0:
            script = getattr(self, "_script", None)
            if script is not None:
                seg = script[(self._current + 1) % len(script)]
            else:
                omega = np.atleast_1d(np.asarray(
                    self.omega_sampler(self.rng, self.history), dtype=np.float64))
                duration = sample_duration(self.rng, self.mean_period,
                                           self.period_std, self.min_period)
                seg = Segment(omega=omega, duration=duration)
            self.segments.append(seg)
            self.history.append(seg.omega)
            self._current += 1
            self._remaining = seg.duration
        self._remaining -= 1
        return self.segments[self._current].omega, self._current

    def realized_schedule(self):
        if not self.segments:
            raise ParameterError("no segments realized yet")
        return TaskSchedule(segments=list(self.segments), mean_period=self.mean_period,
                            period_std=self.period_std, min_period=self.min_period)

    def state(self):
        return {
            "rng": self.rng.bit_generator.state,
            "segments": [(seg.omega.tolist(), seg.duration) for seg in self.segments],
            "current": self._current,
            "remaining": self._remaining,
        }

    def restore(self, state):
        self.rng.bit_generator.state = state["rng"]
        self.segments = [Segment(np.asarray(o, dtype=np.float64), d) for o, d in state["segments"]]
        self.history = [seg.omega for seg in self.segments]
        self._current = state["current"]
        self._remaining = state["remaining"]


@dataclass
class EnvState:
    observation: np.ndarray
    step_index: int
    current_segment: int
    true_omega: np.ndarray


@dataclass
class Transition:
    s: np.ndarray
    a: np.ndarray
    s_next: np.ndarray
    r: float
    done: bool
    omega_hidden: np.ndarray
    step_index: int
    segment_index: int


class PiecewiseEnv:
    """Base class wiring a schedule stream through episodic dynamics."""

    observation_dim = 1
    action_dim = 1
    discrete_actions = None  # continuous by default

    def __init__(self, stream, episode_len, seed):
        self.stream = stream
        self.episode_len = episode_len
        self.rng = np.random.default_rng(seed)
        self.clamp_warnings = 0
        self._global_step = 0
        self._episode_step = 0
        self._obs = None

    # subclasses implement these three
    def _reset_state(self):
        raise NotImplementedError

    def _dynamics(self, action, omega):
        """Advance internal state; return (observation, reward, terminal)."""
        raise NotImplementedError

    def _clamp_action(self, action):
        a = float(np.asarray(action).reshape(-1)[0])
        if a < -1.0 or a > 1.0:
            self.clamp_warnings += 1
            a = min(max(a, -1.0), 1.0)
        return a

    def reset(self):
        self._episode_step = 0
        self._reset_state()
        self._obs = self._observe()
        return self._obs.copy()

    def _observe(self):
        raise NotImplementedError

    def step(self, action):
        if self._obs is None:
            raise ParameterError("call reset() before step()")
        omega, segment = self.stream.advance()
        s = self._obs
        obs, reward, terminal = self._dynamics(action, omega)
        self._episode_step += 1
        self._global_step += 1
        done = terminal or self._episode_step >= self.episode_len
        transition = Transition(
            s=s.copy(),
            a=np.atleast_1d(np.asarray(action, dtype=np.float64)),
            s_next=obs.copy(),
            r=float(reward),
            done=bool(terminal),  # time limits are not terminal for bootstrapping
            omega_hidden=omega.copy(),
            step_index=self._global_step - 1,
            segment_index=segment,
        )
        self._obs = obs
        return obs.copy(), float(reward), bool(done), {
            "transition": transition,
            "true_omega": omega.copy(),
            "segment": segment,
            "terminal": bool(terminal),
        }

    def state(self):
        return {"rng": self.rng.bit_generator.state, "stream": self.stream.state(),
                "global_step": self._global_step, "clamp_warnings": self.clamp_warnings}

    def restore(self, state):
        self.rng.bit_generator.state = state["rng"]
        self.stream.restore(state["stream"])
        self._global_step = state["global_step"]
        self.clamp_warnings = state["clamp_warnings"]


def velocity_omega_sampler(rng, history):
    return rng.uniform(0.5, 3.0, size=1)


class VelTrackEnv(PiecewiseEnv):
    """1-D point mass: v <- clamp(v + 0.2 a, -5, 5); reward -|v - target|."""

    observation_dim = 1
    action_dim = 1

    def _reset_state(self):
        self.v = 0.0

    def _observe(self):
        return np.array([self.v])

    def _dynamics(self, action, omega):
        a = self._clamp_action(action)
        self.v = min(max(self.v + 0.2 * a, -5.0), 5.0)
        reward = -abs(self.v - float(omega[0]))
        return self._observe(), reward, False


DAMPING_CHOICES = (0.85, 0.9, 0.95, 1.0)


def damping_omega_sampler(rng, history):
    return np.array([DAMPING_CHOICES[rng.integers(len(DAMPING_CHOICES))]])


class OscDampEnv(PiecewiseEnv):
    """Forced damped oscillator, semi-implicit Euler with dt = 0.05.

    x'' = -x - omega * x' + action; observation [x, x'];
    reward -(x^2 + 0.1 action^2).
    """

    observation_dim = 2
    action_dim = 1
    dt = 0.05

    def _reset_state(self):
        self.x = float(self.rng.uniform(-1.0, 1.0))
        self.xdot = float(self.rng.uniform(-1.0, 1.0))

    def _observe(self):
        return np.array([self.x, self.xdot])

    def _dynamics(self, action, omega):
        a = self._clamp_action(action)
        self.xdot = self.xdot + self.dt * (-self.x - float(omega[0]) * self.xdot + a)
        self.x = self.x + self.dt * self.xdot
        reward = -(self.x * self.x + 0.1 * a * a)
        return self._observe(), reward, False


MEAL_RANGES = {"adolescent": (50.0, 80.0), "adult": (60.0, 80.0)}


def glucose_omega_sampler(patient="adolescent", meals=2):
    lo, hi = MEAL_RANGES[patient]

    def sampler(rng, history):
        lunch = rng.uniform(lo, hi)
        dinner = rng.uniform(lo, hi) if meals == 2 else 80.0
        return np.array([lunch, dinner])

    return sampler


def glucose_reward(g, delta_g):
    """Exact piecewise zone reward; returns (reward, terminal)."""
    if g < 70.0 or g > 200.0:
        return -20.0, True
    if 100.0 <= g <= 150.0:
        return 50.0, False
    if g < 100.0 and delta_g < 0.5:
        return -1.0, False
    if g > 150.0 and delta_g > 0.5:
        return -1.0, False
    return 0.0, False


class GlucoSimEnv(PiecewiseEnv):
    """Toy linear glucose model with per-segment meal sizes and discrete doses.

    Within an episode (one compressed day of ``episode_len`` steps) meals hit
    at fixed times; lunch and, in the 2-meal variant, dinner sizes come from
    the hidden task parameter. Insulin dose in {0..5} pulls glucose down; the
    reward is the exact piecewise zone function on (G, delta G).
    """

    observation_dim = 1
    action_dim = 1
    discrete_actions = 6
    meal_absorption = 8  # steps over which a meal enters the bloodstream
    # calibrated so zero dosing stays sub-hyperglycemic, full dosing can
    # drive below the hypoglycemic cliff, and random dosing usually survives
    k_meal = 0.85
    k_ins = 1.0
    k_decay = 0.08
    g_base = 120.0

    def __init__(self, stream, episode_len, seed):
        super().__init__(stream, episode_len, seed)
        # daily plan scaled to episode length (7:00, 12:00, 16:00, 18:00, 23:00)
        frac = np.array([7.0, 12.0, 16.0, 18.0, 23.0]) / 24.0
        self._meal_steps = np.floor(frac * episode_len).astype(int)

    def _reset_state(self):
        self.g = float(self.rng.uniform(110.0, 140.0))
        self.prev_g = self.g

    def _observe(self):
        return np.array([self.g])

    def _meal_rate(self, omega):
        sizes = np.array([45.0, float(omega[0]), 15.0, float(omega[1]), 10.0])
        t = self._episode_step
        rate = 0.0
        for when, size in zip(self._meal_steps, sizes):
            if when <= t < when + self.meal_absorption:
                rate += size / self.meal_absorption
        return rate

    def _dynamics(self, action, omega):
        dose = int(np.asarray(action).reshape(-1)[0])
        if dose < 0 or dose > 5:
            raise ParameterError(f"dose must be in 0..5, got {dose}")
        self.prev_g = self.g
        drift = self.k_decay * (self.g_base - self.g)
        self.g = self.g + self.k_meal * self._meal_rate(omega) - self.k_ins * dose + drift
        reward, terminal = glucose_reward(self.g, self.g - self.prev_g)
        return self._observe(), reward, terminal


class NoisyObservationEnv:
    """Wrapper adding i.i.d. N(0, sigma^2) noise to observations only.

    Rewards, termination, and the hidden task parameter pass through
    untouched; sigma = 0 leaves observations bit-identical.
    """

    def __init__(self, env, sigma, seed):
        if sigma < 0:
            raise ParameterError(f"sigma must be >= 0, got {sigma}")
        self.env = env
        self.sigma = float(sigma)
        self.noise_rng = np.random.default_rng(seed)
        self._last_noisy = None

    def __getattr__(self, name):
        return getattr(self.env, name)

    def _noisify(self, obs):
        if self.sigma == 0.0:
            return obs
        return obs + self.noise_rng.normal(0.0, self.sigma, size=obs.shape)

    def reset(self):
        self._last_noisy = self._noisify(self.env.reset())
        return self._last_noisy.copy()

    def step(self, action):
        obs, reward, done, info = self.env.step(action)
        noisy = self._noisify(obs)
        tr = info["transition"]
        # keep the agent-facing stream consistent: s of the next transition
        # equals s_next of this one, both noisy
        tr.s = self._last_noisy.copy()
        tr.s_next = noisy.copy()
        self._last_noisy = noisy
        return noisy.copy(), reward, done, info

    def state(self):
        return {"env": self.env.state(), "noise_rng": self.noise_rng.bit_generator.state}

    def restore(self, state):
        self.env.restore(state["env"])
        self.noise_rng.bit_generator.state = state["noise_rng"]


def add_observation_noise(env, sigma, seed=0):
    return NoisyObservationEnv(env, sigma, seed)


ENV_SPECS = {
    "veltrack": dict(cls=VelTrackEnv, episode_len=800, sampler=lambda params: velocity_omega_sampler),
    "oscdamp": dict(cls=OscDampEnv, episode_len=800, sampler=lambda params: damping_omega_sampler),
    "glucosim": dict(
        cls=GlucoSimEnv,
        episode_len=200,
        sampler=lambda params: glucose_omega_sampler(
            params.get("patient", "adolescent"), params.get("meals", 2)
        ),
    ),
}


def make_env(name, seed, episode_len=None, mean_period=DEFAULT_MEAN_PERIOD,
             period_std=DEFAULT_PERIOD_STD, min_period=DEFAULT_MIN_PERIOD,
             env_params=None, obs_noise_sigma=0.0, stream=None):
    """Build a named environment with its own seeded schedule stream."""
    if name not in ENV_SPECS:
        raise ParameterError(f"unknown environment '{name}'; choose from {sorted(ENV_SPECS)}")
    spec = ENV_SPECS[name]
    env_params = env_params or {}
    if stream is None:
        stream = ScheduleStream(
            spec["sampler"](env_params), seed=seed, mean_period=mean_period,
            period_std=period_std, min_period=min_period,
        )
    env = spec["cls"](stream, episode_len or spec["episode_len"], seed=seed + 1)
    if obs_noise_sigma > 0.0:
        env = add_observation_noise(env, obs_noise_sigma, seed=seed + 2)
    return env

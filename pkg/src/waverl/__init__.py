"""Wavelet-domain task representations for non-stationary reinforcement
learning: a self-contained autodiff engine, a trainable discrete wavelet
transform, a context encoder, a contextual soft actor-critic, and synthetic
piecewise-stationary environments, wired together by an experiment CLI."""

from .autodiff import Adam, ComputationTape, Tensor, backward, no_grad
from .config import ExperimentConfig, desk_config
from .encoder import ContextEncoder, ContextWindow, LatentSequence, kl_loss
from .envs import (
    GlucoSimEnv,
    OscDampEnv,
    ScheduleStream,
    TaskSchedule,
    Transition,
    VelTrackEnv,
    add_observation_noise,
    make_env,
    make_schedule,
    nonstationarity_degree,
)
from .sac import ContextualCritic, ContextualPolicy, TemperatureState
from .training import MetricsRecord, Trainer, run_experiment
from .waveletnet import (
    WaveletReprNet,
    WNetwork,
    ar_loss,
    contraction_check,
    joint_loss,
    wavelet_td_loss,
)
from .wavelets import FilterBank, WaveletStack, dwt_full, dwt_level, idwt_full, select_details

__version__ = "0.1.0"

__all__ = [
    "Adam", "ComputationTape", "Tensor", "backward", "no_grad",
    "ExperimentConfig", "desk_config",
    "ContextEncoder", "ContextWindow", "LatentSequence", "kl_loss",
    "GlucoSimEnv", "OscDampEnv", "ScheduleStream", "TaskSchedule", "Transition",
    "VelTrackEnv", "add_observation_noise", "make_env", "make_schedule",
    "nonstationarity_degree",
    "ContextualCritic", "ContextualPolicy", "TemperatureState",
    "MetricsRecord", "Trainer", "run_experiment",
    "WaveletReprNet", "WNetwork", "ar_loss", "contraction_check", "joint_loss",
    "wavelet_td_loss",
    "FilterBank", "WaveletStack", "dwt_full", "dwt_level", "idwt_full",
    "select_details",
]

"""Multi-agent trainers: off-policy value decomposition and on-policy actor-critic."""

from .buffer import Episode, EpisodeBuffer
from .common import epsilon_schedule
from .mixing import MixingNet
from .value import ValueTrainer, ValueTrainerConfig
from .actor_critic import ActorCriticTrainer, A2CConfig

VALUE_ALGOS = ("iql", "vdn", "qmix")
AC_ALGOS = ("ia2c", "maa2c")
ALL_ALGOS = VALUE_ALGOS + AC_ALGOS

__all__ = [
    "A2CConfig",
    "ActorCriticTrainer",
    "Episode",
    "EpisodeBuffer",
    "MixingNet",
    "ValueTrainer",
    "ValueTrainerConfig",
    "epsilon_schedule",
    "VALUE_ALGOS",
    "AC_ALGOS",
    "ALL_ALGOS",
]

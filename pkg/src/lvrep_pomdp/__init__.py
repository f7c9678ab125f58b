"""Latent-variable representations for decodable POMDPs: models, linear values, exploration."""

from . import pomdp
from .agent import AgentConfig, EpisodeLog, plan, run_offline, run_online
from .errors import (BudgetExceeded, ConfigError, EmptyDataset, LvRepError, MissingEndAction,
                     NotDecodable, NotPositiveDefinite, SingularSystem, ZeroProbabilityObservation)
from .exploration import BonusConfig, CovarianceAccumulator, ScheduleConfig, accumulate, bonus, schedule
from .latent import FitConfig, LatentModel, TransitionDataset, fit_mle
from .linear_value import LRollout, WeightVector, lspe_solve, lstep_targets, q_value

__version__ = "0.1.0"

"""Robust student DQN: a DQN whose deployed policy is an online-distilled
student hardened by adversarial or interval-bound training.

Subpackages are plain modules; the most used names are re-exported here.
"""

from .agents import AgentNet, Architecture, epsilon_greedy, greedy_action, q_values
from .attacks import AttackSpec, fgsm, perturb_for_agent, pgd
from .envs import Catch, Crossing, make_env
from .errors import CheckpointError, ConfigError, DimensionError, RSDQNError, StateError
from .interval import certify_action, epsilon_max, propagate
from .replay import PrioritizedBuffer
from .training import TrainConfig, run_training

__version__ = "0.1.0"

__all__ = [
    "AgentNet", "Architecture", "AttackSpec", "Catch", "CheckpointError", "ConfigError",
    "Crossing", "DimensionError", "PrioritizedBuffer", "RSDQNError", "StateError",
    "TrainConfig", "certify_action", "epsilon_greedy", "epsilon_max", "fgsm", "greedy_action",
    "make_env", "perturb_for_agent", "pgd", "propagate", "q_values", "run_training",
]

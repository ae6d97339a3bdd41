"""Successor-representation reinforcement learning with Kalman filters.

Reward weights are learned by a multiple-model bank of Kalman filters, the
successor features by Kalman temporal difference, and the RBF features by
restricted gradient descent.
"""
from akfsr.agent import Agent, AgentConfig, EpisodeLog, TrainLog, Transition, run_episode, train
from akfsr.envs import InvertedPendulum, MountainCar, make_env
from akfsr.errors import ConfigError, InvalidParameterError, NumericError
from akfsr.harness import ExperimentConfig, aggregate_runs, run_experiment

__all__ = [
    "Agent", "AgentConfig", "EpisodeLog", "TrainLog", "Transition", "run_episode", "train",
    "InvertedPendulum", "MountainCar", "make_env",
    "ConfigError", "InvalidParameterError", "NumericError",
    "ExperimentConfig", "aggregate_runs", "run_experiment",
]
__version__ = "0.1.0"

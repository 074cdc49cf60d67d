"""Reward-function benchmark for DQN control of a signalised junction with pedestrians."""

__version__ = "0.1.0"

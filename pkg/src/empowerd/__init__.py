"""Empowerment-driven exploration: MINE intrinsic reward for double DQN, checked against Blahut-Arimoto."""

__version__ = "0.1.0"

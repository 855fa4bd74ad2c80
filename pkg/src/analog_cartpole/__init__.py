"""Cart-pole balancing on an emulated analog computer with a Q-learning agent."""

__version__ = "0.1.0"

"""Q-learning agent, brain persistence and the random-search baseline."""

from .baseline import random_search_baseline
from .persist import load_brain, save_brain
from .qlearning import Brain, Hyperparams, run_episode, train

__all__ = ["Brain", "Hyperparams", "load_brain", "random_search_baseline",
           "run_episode", "save_brain", "train"]

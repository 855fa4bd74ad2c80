"""Random search for a linear bang-bang controller.

The controller pushes one way when ``theta . s > 0`` and the other way
otherwise.  Sampling a few thousand ``theta`` from ``[-1, 1]^4`` and keeping
the one that balances longest is a strong baseline for the Q-learner.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..dynamics import PlantParams
from .qlearning import Hyperparams, run_episode


def linear_policy(theta):
    theta = np.asarray(theta, dtype=float)

    def act(s) -> int:
        return 1 if float(theta @ np.asarray(s, dtype=float)) > 0 else 0

    return act


def evaluate_theta(client, theta, bounds: PlantParams, max_steps: int = 1000,
                   impulse_ms: int = 20) -> int:
    """Length of one exploit episode under the linear controller."""
    hyper = Hyperparams(max_steps=max_steps, impulse_ms=impulse_ms)
    return run_episode(client, None, hyper, bounds, learn=False, eps=0.0,
                       policy=linear_policy(theta)).steps


def random_search_baseline(client, tries: int, seed: int | None, bounds: PlantParams,
                           max_steps: int = 1000, impulse_ms: int = 20
                           ) -> tuple[np.ndarray, int]:
    """Best of ``tries`` random controllers; returns ``(theta, episode_length)``.

    Ties keep the earliest candidate.
    """
    if tries < 1:
        raise ValueError("tries must be >= 1")
    rng = np.random.default_rng(seed)
    best_theta, best_len = None, -1
    for _ in range(tries):
        theta = rng.uniform(-1.0, 1.0, size=4)
        length = evaluate_theta(client, theta, bounds, max_steps, impulse_ms)
        if length > best_len:
            best_theta, best_len = theta, length
    return best_theta, best_len


def save_theta(theta, steps: int, path) -> None:
    Path(path).write_text(json.dumps({"format": "analog-cartpole-theta",
                                      "theta": [float(v) for v in theta],
                                      "steps": int(steps)}) + "\n")


def load_theta(path) -> np.ndarray:
    try:
        doc = json.loads(Path(path).read_text())
        theta = np.array(doc["theta"], dtype=float)
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"{path}: not a baseline controller file: {exc}") from exc
    if doc.get("format") != "analog-cartpole-theta" or theta.shape != (4,):
        raise ValueError(f"{path}: not a baseline controller file")
    return theta

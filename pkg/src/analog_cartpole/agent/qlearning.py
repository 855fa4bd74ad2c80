"""Q-learning with one online linear regressor per action over RBF features."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable

import numpy as np

from ..dynamics import PlantParams, is_terminal
from .features import FeatureMap, build_feature_map
from .regressor import OnlineRegressor

log = logging.getLogger(__name__)

ACTIONS = (0, 1)
EPSILON_FORMS = ("power", "inverse")
FORMAT_VERSION = 1


@dataclass
class Hyperparams:
    gamma: float = 0.999
    alpha: float = 0.6
    alpha_decay: float = 0.1
    epsilon: float = 0.5
    epsilon_decay_t: float = 0.1
    epsilon_decay_m: float = 10.0
    rbf_exemplars: int = 250
    rbf_gamma_count: int = 10
    rbf_gamma_min: float = 0.05
    rbf_gamma_max: float = 4.0
    impulse_ms: int = 20
    probe: int = 100
    reward_per_step: float = 1.0
    normalized_step: bool = True
    max_steps: int = 1000
    epsilon_form: str = "power"

    def __post_init__(self) -> None:
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if not 0 <= self.epsilon <= 1:
            raise ValueError("epsilon must lie in [0, 1]")
        if self.rbf_gamma_min > self.rbf_gamma_max:
            raise ValueError("rbf_gamma_min must not exceed rbf_gamma_max")
        for name in ("rbf_exemplars", "rbf_gamma_count", "impulse_ms", "probe", "max_steps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.epsilon_decay_m <= 0 or self.epsilon_decay_t < 0 or self.alpha_decay < 0:
            raise ValueError("decay parameters must be non-negative (epsilon_decay_m > 0)")
        if self.epsilon_form not in EPSILON_FORMS:
            raise ValueError(f"epsilon_form must be one of {EPSILON_FORMS}")

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @property
    def feature_count(self) -> int:
        return self.rbf_exemplars * self.rbf_gamma_count


@dataclass(eq=False)
class Brain:
    """The learned action-value function plus everything needed to reuse it."""

    features: FeatureMap
    regressors: list[OnlineRegressor]
    hyper: Hyperparams = field(default_factory=Hyperparams)
    episodes_trained: int = 0
    format_version: int = FORMAT_VERSION

    def __post_init__(self) -> None:
        if len(self.regressors) != len(ACTIONS):
            raise ValueError(f"need one regressor per action, got {len(self.regressors)}")

    @classmethod
    def fresh(cls, hyper: Hyperparams | None = None, seed=None) -> "Brain":
        hyper = hyper or Hyperparams()
        fmap = build_feature_map(hyper.rbf_exemplars, hyper.rbf_gamma_count,
                                 hyper.rbf_gamma_min, hyper.rbf_gamma_max, seed)
        regs = [OnlineRegressor(fmap.dim, hyper.alpha, hyper.alpha_decay,
                                normalized=hyper.normalized_step) for _ in ACTIONS]
        return cls(fmap, regs, hyper)

    def q_values(self, f: np.ndarray) -> tuple[float, float]:
        return tuple(r.predict(f) for r in self.regressors)

    @property
    def step_size(self) -> float:
        """Step size of the most-updated regressor's next fit."""
        return min(r.step_size() for r in self.regressors)


def predict_q(brain: Brain, s, a: int) -> float:
    return brain.regressors[a].predict(brain.features.transform(s))


def greedy(q: tuple[float, float]) -> int:
    # ties go to action 0
    return 1 if q[1] > q[0] else 0


def q_update(brain: Brain, s, a: int, r: float, s_next, terminal: bool,
             f_s: np.ndarray | None = None, f_next: np.ndarray | None = None) -> float:
    """Fit ``Q(s, a)`` toward ``r + gamma * max_a' Q(s', a')``; returns the target.

    A terminal ``s_next`` contributes no future value.  Feature vectors may be
    passed in when the caller already has them.
    """
    if terminal:
        target = r
    else:
        if f_next is None:
            f_next = brain.features.transform(s_next)
        target = r + brain.hyper.gamma * max(brain.q_values(f_next))
    if f_s is None:
        f_s = brain.features.transform(s)
    brain.regressors[a].partial_fit(f_s, target)
    return target


def choose_action(brain: Brain, s, eps: float, rng: np.random.Generator,
                  f_s: np.ndarray | None = None) -> int:
    """Epsilon-greedy: uniform random with probability ``eps``, else greedy."""
    if eps > 0 and rng.random() < eps:
        return int(rng.integers(len(ACTIONS)))
    if f_s is None:
        f_s = brain.features.transform(s)
    return greedy(brain.q_values(f_s))


def epsilon_schedule(hyper: Hyperparams, k: int) -> float:
    """Exploration probability for episode ``k`` (0-based).

    ``power``: eps * (1 + k/m)^(-t).  ``inverse``: eps / (1 + k*t/m).
    """
    if k < 0:
        raise ValueError("episode index must be >= 0")
    ratio = k / hyper.epsilon_decay_m
    if hyper.epsilon_form == "inverse":
        return hyper.epsilon / (1.0 + ratio * hyper.epsilon_decay_t)
    return hyper.epsilon * (1.0 + ratio) ** -hyper.epsilon_decay_t


# -- episodes ----------------------------------------------------------------


@dataclass
class EpisodeResult:
    steps: int
    reward: float
    terminal: bool
    events: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class DisturbancePlan:
    """Shove the cart with ``magnitude`` for ``ms`` once ``at_s`` seconds have passed."""

    magnitude: float
    ms: int
    at_s: float

    @classmethod
    def parse(cls, text: str) -> "DisturbancePlan":
        """Parse ``<magnitude>:<ms>@<seconds>``, e.g. ``5.0:100@2.0``."""
        try:
            head, at = text.split("@")
            mag, ms = head.split(":")
            plan = cls(float(mag), int(ms), float(at))
        except ValueError:
            raise ValueError(f"disturbance must look like MAG:MS@SECONDS, got {text!r}") \
                from None
        if not (math.isfinite(plan.magnitude) and math.isfinite(plan.at_s)) \
                or plan.ms < 0 or plan.at_s < 0:
            raise ValueError(f"invalid disturbance {text!r}")
        return plan


def run_episode(client, brain: Brain | None, hyper: Hyperparams, bounds: PlantParams,
                learn: bool, eps: float,
                rng: np.random.Generator | None = None,
                policy: Callable | None = None,
                disturbance: DisturbancePlan | None = None,
                on_update: Callable | None = None) -> EpisodeResult:
    """Balance from a fresh initial condition until the pole falls or the cap.

    ``steps`` counts surviving transitions; each earns ``reward_per_step`` and
    the transition into a terminal state earns nothing.  In learn mode every
    transition, terminal or not, is followed by one Q update.  ``policy``
    (state -> action) replaces the epsilon-greedy choice, e.g. for the linear
    baseline controller.
    """
    rng = rng if rng is not None else np.random.default_rng()
    result = EpisodeResult(0, 0.0, False)
    client.initial_condition()
    client.operate()
    try:
        s = client.get_sim_state()
        if is_terminal(s, bounds):
            result.terminal = True
            return result
        f_s = brain.features.transform(s) if brain is not None and policy is None else None
        elapsed_ms = 0
        while result.steps < hyper.max_steps:
            if disturbance is not None and elapsed_ms >= disturbance.at_s * 1000.0:
                client.disturb(disturbance.magnitude, disturbance.ms)
                result.events.append(f"disturbance {disturbance.magnitude}:{disturbance.ms}"
                                     f" at step {result.steps} (t={elapsed_ms / 1000:.3f}s)")
                disturbance = None
            if policy is not None:
                a = policy(s)
            else:
                a = choose_action(brain, s, eps, rng, f_s)
            client.influence_sim(a, hyper.impulse_ms)
            elapsed_ms += hyper.impulse_ms
            s_next = client.get_sim_state()
            terminal = is_terminal(s_next, bounds)
            r = 0.0 if terminal else hyper.reward_per_step
            f_next = None
            if policy is None and not terminal:
                f_next = brain.features.transform(s_next)
            if learn:
                q_update(brain, s, a, r, s_next, terminal, f_s=f_s, f_next=f_next)
                if on_update is not None:
                    on_update()
            if terminal:
                result.terminal = True
                break
            result.steps += 1
            result.reward += r
            s, f_s = s_next, f_next
    finally:
        client.halt()
    return result


# -- training ----------------------------------------------------------------


@dataclass(frozen=True)
class EpisodeMetrics:
    episode: int
    steps: int
    reward: float
    epsilon: float
    eta: float

    HEADER = "episode,steps,reward,epsilon,eta"

    def csv_row(self) -> str:
        return f"{self.episode},{self.steps},{self.reward!r},{self.epsilon!r},{self.eta!r}"


class TrainingError(RuntimeError):
    """Training stopped early; ``metrics`` holds the episodes completed so far."""

    def __init__(self, message: str, metrics: list[EpisodeMetrics]) -> None:
        super().__init__(message)
        self.metrics = metrics


def snapshot_path(brain_path: Path, episode: int) -> Path:
    brain_path = Path(brain_path)
    return brain_path.with_name(f"{brain_path.stem}-{episode:05d}{brain_path.suffix}")


def train(client, hyper: Hyperparams, episodes: int, seed: int | None,
          bounds: PlantParams, brain_path: Path | None = None,
          brain: Brain | None = None,
          on_episode: Callable[[EpisodeMetrics], None] | None = None
          ) -> tuple[Brain, list[EpisodeMetrics]]:
    """Run ``episodes`` learning episodes, snapshotting the brain every ``probe``.

    Snapshots go to ``<stem>-<episode><suffix>`` next to ``brain_path``; the
    final brain is written to ``brain_path`` itself.  Passing ``brain``
    continues training it.
    """
    from .persist import save_brain

    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    feature_seq, explore_seq = np.random.SeedSequence(seed).spawn(2)
    if brain is None:
        brain = Brain.fresh(hyper, np.random.default_rng(feature_seq))
        brain.features.seed = seed
    rng = np.random.default_rng(explore_seq)
    metrics: list[EpisodeMetrics] = []
    start = brain.episodes_trained
    for i in range(episodes):
        k = start + i
        eps = epsilon_schedule(brain.hyper, k)
        try:
            res = run_episode(client, brain, brain.hyper, bounds, learn=True, eps=eps,
                              rng=rng)
        except Exception as exc:
            raise TrainingError(f"episode {k + 1} failed: {exc}", metrics) from exc
        brain.episodes_trained = k + 1
        m = EpisodeMetrics(k + 1, res.steps, res.reward, eps, brain.step_size)
        metrics.append(m)
        if on_episode is not None:
            on_episode(m)
        log.debug("episode %d: %d steps", m.episode, m.steps)
        if brain_path is not None and (i + 1) % brain.hyper.probe == 0 and i + 1 < episodes:
            try:
                save_brain(brain, snapshot_path(brain_path, k + 1))
            except OSError as exc:
                raise TrainingError(f"cannot write snapshot: {exc}", metrics) from exc
    if brain_path is not None:
        try:
            save_brain(brain, brain_path)
        except OSError as exc:
            raise TrainingError(f"cannot write brain: {exc}", metrics) from exc
    return brain, metrics

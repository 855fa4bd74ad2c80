"""Linear regression trained one sample at a time."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(eq=False)
class OnlineRegressor:
    """``y = intercept + weights . f`` fitted by stochastic gradient steps.

    The step size decays as ``alpha * t**-alpha_decay`` with ``t`` the number
    of fits so far (counting the current one).  With ``normalized`` the step
    is divided by ``1 + |f|^2`` (``|f|^2`` without an intercept), so a single
    fit moves the prediction at ``f`` by exactly that fraction of the error.
    """

    dim: int
    alpha: float = 0.6
    alpha_decay: float = 0.1
    normalized: bool = False
    fit_intercept: bool = True
    weights: np.ndarray = field(default=None)
    intercept: float = 0.0
    t: int = 0

    def __post_init__(self) -> None:
        if self.weights is None:
            self.weights = np.zeros(self.dim)
        else:
            self.weights = np.asarray(self.weights, dtype=float)
            if self.weights.shape != (self.dim,):
                raise ValueError(f"weights must have shape ({self.dim},)")

    def step_size(self, t: int | None = None) -> float:
        """Step size used for fit number ``t`` (default: the next fit)."""
        t = self.t + 1 if t is None else t
        return self.alpha * t ** -self.alpha_decay

    def predict(self, f: np.ndarray) -> float:
        return self.intercept + float(self.weights @ f)

    def partial_fit(self, f: np.ndarray, y: float) -> None:
        self.t += 1
        g = self.step_size(self.t) * (self.predict(f) - y)
        if self.normalized:
            norm = float(f @ f) + (1.0 if self.fit_intercept else 0.0)
            if norm == 0.0:
                return
            g /= norm
        if self.fit_intercept:
            self.intercept -= g
        self.weights -= g * f

    def __eq__(self, other) -> bool:
        if not isinstance(other, OnlineRegressor):
            return NotImplemented
        return (self.dim == other.dim and self.alpha == other.alpha
                and self.alpha_decay == other.alpha_decay
                and self.normalized == other.normalized
                and self.fit_intercept == other.fit_intercept
                and self.intercept == other.intercept and self.t == other.t
                and np.array_equal(self.weights, other.weights))

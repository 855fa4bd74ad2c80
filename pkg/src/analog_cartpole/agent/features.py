"""Random Fourier feature map approximating a bank of Gaussian RBF kernels.

For each kernel width ``w`` a block of ``n`` features

    z(s) = sqrt(2/n) * cos(W s + b),   W_ij ~ N(0, 2w),  b_i ~ U[0, 2pi)

satisfies ``E[z(x) . z(y)] = exp(-w * |x - y|^2)``.  Blocks for all widths
are concatenated into one feature vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..dynamics import DomainError

STATE_DIM = 4


@dataclass(eq=False)
class FeatureMap:
    widths: np.ndarray        # (k,)
    weights: np.ndarray       # (k*n, STATE_DIM)
    offsets: np.ndarray       # (k*n,)
    per_width: int
    seed: int | None = None

    @property
    def dim(self) -> int:
        return len(self.offsets)

    @property
    def scale(self) -> float:
        return math.sqrt(2.0 / self.per_width)

    def block(self, j: int) -> slice:
        return slice(j * self.per_width, (j + 1) * self.per_width)

    def transform(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if s.shape != (STATE_DIM,):
            raise ValueError(f"state must have {STATE_DIM} components, got shape {s.shape}")
        if not np.all(np.isfinite(s)):
            raise DomainError(f"non-finite state {s}")
        return self.scale * np.cos(self.weights @ s + self.offsets)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FeatureMap):
            return NotImplemented
        return (self.per_width == other.per_width and self.seed == other.seed
                and np.array_equal(self.widths, other.widths)
                and np.array_equal(self.weights, other.weights)
                and np.array_equal(self.offsets, other.offsets))


def kernel_widths(count: int, lo: float, hi: float) -> np.ndarray:
    """``count`` widths spaced linearly from ``lo`` to ``hi`` (just ``lo`` if count is 1)."""
    return np.linspace(lo, hi, count)


def build_feature_map(per_width: int = 250, count: int = 10, width_min: float = 0.05,
                      width_max: float = 4.0, seed: int | np.random.Generator | None = None
                      ) -> FeatureMap:
    if per_width < 1 or count < 1:
        raise ValueError("feature counts must be >= 1")
    if width_min > width_max:
        raise ValueError("width_min must not exceed width_max")
    recorded = seed if isinstance(seed, (int, np.integer)) else None
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    widths = kernel_widths(count, width_min, width_max)
    blocks = [rng.normal(0.0, math.sqrt(2.0 * w), size=(per_width, STATE_DIM))
              for w in widths]
    offsets = rng.uniform(0.0, 2.0 * math.pi, size=per_width * count)
    return FeatureMap(widths=widths, weights=np.concatenate(blocks), offsets=offsets,
                      per_width=per_width, seed=None if recorded is None else int(recorded))


def transform(fmap: FeatureMap, s) -> np.ndarray:
    return fmap.transform(s)

"""Equations of motion for the inverted pendulum on a cart.

Angles are measured from upright (phi = 0 is the unstable equilibrium) and the
pendulum bob sits at horizontal position ``x - l*sin(phi)``.  Two plant modes
exist:

* ``simplified``: the bob mass is neglected, so the cart obeys ``M*x_dd = F``
  and the control input ``u`` is the cart acceleration itself.
* ``full``: the coupled Euler-Lagrange pair, with ``u`` being the force ``F``.

The hot integration path works on plain float tuples; :class:`SimState` is the
public value type.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

SIMPLIFIED = "simplified"
FULL = "full"

DEFAULT_DT = 1e-3
DEFAULT_PHI0_MAX = 0.05


class DomainError(ValueError):
    """Raised for non-finite inputs to the equations of motion."""


@dataclass(frozen=True)
class SimState:
    x: float = 0.0
    x_dot: float = 0.0
    phi: float = 0.0
    phi_dot: float = 0.0
    t: float = 0.0

    def as_tuple(self) -> tuple[float, float, float, float]:
        """The four observable components ``(x, x_dot, phi, phi_dot)``."""
        return (self.x, self.x_dot, self.phi, self.phi_dot)


@dataclass(frozen=True)
class PlantParams:
    g: float = 9.81
    l: float = 1.0
    M: float = 1.0
    m: float = 0.1
    mode: str = SIMPLIFIED
    beta_x: float = 0.0
    beta_phi: float = 0.0
    x_max: float = 1.0
    phi_max: float = 0.5

    def __post_init__(self) -> None:
        if self.mode not in (SIMPLIFIED, FULL):
            raise ValueError(f"unknown plant mode {self.mode!r}")
        if not (self.g > 0 and self.l > 0 and self.M > 0 and self.m >= 0):
            raise ValueError("plant constants must satisfy g, l, M > 0 and m >= 0")
        if not self.x_max > 0:
            raise ValueError("x_max must be positive")
        if not 0 < self.phi_max < math.pi / 2:
            raise ValueError("phi_max must lie in (0, pi/2)")


class DerivVector(NamedTuple):
    dx: float
    dx_dot: float
    dphi: float
    dphi_dot: float


def _check_finite(values) -> None:
    for v in values:
        if not math.isfinite(v):
            raise DomainError(f"non-finite value in dynamics input: {v!r}")


def _deriv(x_dot: float, phi: float, phi_dot: float, u: float, p: PlantParams):
    sin_phi = math.sin(phi)
    cos_phi = math.cos(phi)
    if p.mode == SIMPLIFIED:
        x_dd = u
    else:
        m = p.m
        x_dd = (u - m * p.l * phi_dot * phi_dot * sin_phi
                + m * p.g * sin_phi * cos_phi) / (p.M + m * sin_phi * sin_phi)
    x_dd -= p.beta_x * x_dot
    phi_dd = (x_dd * cos_phi + p.g * sin_phi) / p.l - p.beta_phi * phi_dot
    return x_dot, x_dd, phi_dot, phi_dd


def derivatives(state: SimState, u: float, params: PlantParams) -> DerivVector:
    """Time derivatives of ``(x, x_dot, phi, phi_dot)`` under input ``u``.

    In simplified mode ``u`` is the cart acceleration (force already divided
    by ``M``); in full mode it is the force on the cart.
    """
    _check_finite((state.x, state.x_dot, state.phi, state.phi_dot, u))
    return DerivVector(*_deriv(state.x_dot, state.phi, state.phi_dot, u, params))


def rk4_advance(y: tuple[float, float, float, float], u: float, dt: float,
                params: PlantParams, n: int = 1) -> tuple[float, float, float, float]:
    """Advance a raw state tuple by ``n`` classical RK4 steps with ``u`` held."""
    x, xd, ph, phd = y
    h2 = 0.5 * dt
    h6 = dt / 6.0
    for _ in range(n):
        k1 = _deriv(xd, ph, phd, u, params)
        k2 = _deriv(xd + h2 * k1[1], ph + h2 * k1[2], phd + h2 * k1[3], u, params)
        k3 = _deriv(xd + h2 * k2[1], ph + h2 * k2[2], phd + h2 * k2[3], u, params)
        k4 = _deriv(xd + dt * k3[1], ph + dt * k3[2], phd + dt * k3[3], u, params)
        x += h6 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        xd += h6 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        ph += h6 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
        phd += h6 * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3])
    return x, xd, ph, phd


def step(state: SimState, u: float, dt: float, params: PlantParams) -> SimState:
    """One fixed RK4 step of length ``dt``; ``t`` advances by ``dt``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    _check_finite((state.x, state.x_dot, state.phi, state.phi_dot, u, dt))
    y = rk4_advance(state.as_tuple(), u, dt, params)
    _check_finite(y)
    return SimState(*y, t=state.t + dt)


def is_terminal(state, params: PlantParams) -> bool:
    """True once the cart left ``[-x_max, x_max]`` or the pole passed ``phi_max``.

    Accepts a :class:`SimState` or any ``(x, x_dot, phi, phi_dot)`` sequence.
    """
    if isinstance(state, SimState):
        x, phi = state.x, state.phi
    else:
        x, phi = state[0], state[2]
    return abs(x) > params.x_max or abs(phi) > params.phi_max


def total_energy(state: SimState, params: PlantParams) -> float:
    """Kinetic plus potential energy of cart and bob.

    Simplified mode uses a unit bob mass, since ``m`` is otherwise ignored.
    Only meaningful as a check: it is conserved for ``u = 0`` without damping
    (in simplified mode additionally only while the cart is at rest).
    """
    m = 1.0 if params.mode == SIMPLIFIED else params.m
    l = params.l
    xd, ph, phd = state.x_dot, state.phi, state.phi_dot
    v_bob_sq = (xd - l * phd * math.cos(ph)) ** 2 + (l * phd * math.sin(ph)) ** 2
    kinetic = 0.5 * params.M * xd * xd + 0.5 * m * v_bob_sq
    potential = m * params.g * l * math.cos(ph)
    return kinetic + potential


def initial_state(params: PlantParams, rng: np.random.Generator | int | None = None,
                  phi0_max: float = DEFAULT_PHI0_MAX) -> SimState:
    """Cart at rest with the pole tilted uniformly within ``+-phi0_max``."""
    if phi0_max == 0:
        return SimState()
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    return SimState(phi=float(rng.uniform(-phi0_max, phi0_max)))

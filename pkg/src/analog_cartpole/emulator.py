"""Software stand-in for the analog computer running the pendulum program.

The machine has three modes (initial condition, operate, halt), two digital
outputs driving the cart impulse, and a handful of addressable computing
elements whose values are read back with limited precision.

Two clocks are supported.  With the virtual clock time only moves through
:meth:`AnalogEmulator.advance_time`, which makes runs reproducible.  With the
realtime clock the plant is integrated lazily up to the current wall-clock
instant before every command is applied, so commands remain linearizable.
"""

from __future__ import annotations

import enum
import math
import threading
import time
from dataclasses import dataclass, field, replace
from decimal import ROUND_HALF_UP, Decimal

import numpy as np

from .dynamics import (DEFAULT_DT, DEFAULT_PHI0_MAX, PlantParams, SimState,
                       initial_state, rk4_advance)

VIRTUAL = "virtual"
REALTIME = "realtime"

QUANTITIES = ("x", "x_dot", "phi", "phi_dot")

DEFAULT_ADDRESSES = {
    "0223": "x",
    "0222": "x_dot",
    "0161": "phi",
    "0160": "phi_dot",
}


class EmulatorError(Exception):
    """Base class for errors raised by the emulator."""

    code = "error"


class AddressError(EmulatorError):
    code = "address"


class ChannelError(EmulatorError):
    code = "channel"


class NoReadoutGroup(EmulatorError):
    code = "nogroup"


class UsageError(EmulatorError):
    code = "usage"


class MachineMode(enum.Enum):
    IC = "ic"
    OP = "op"
    HALT = "halt"


@dataclass
class DigitalOutputs:
    d0: bool = False
    d1: bool = False


@dataclass
class EmulatorConfig:
    clock: str = VIRTUAL
    speed: float = 1.0
    dt: float = DEFAULT_DT
    accel_amplitude: float = 10.0
    quantize_decimals: int = 4
    noise_sigma: float = 0.0
    seed: int | None = None
    plant: PlantParams = field(default_factory=PlantParams)
    phi0_max: float = DEFAULT_PHI0_MAX
    jitter_ms: float = 0.0
    machine_units: bool = False
    addresses: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_ADDRESSES))
    # potentiometer gain between each quantity and its readout element
    readout_scale: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.clock not in (VIRTUAL, REALTIME):
            raise ValueError(f"unknown clock {self.clock!r}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.accel_amplitude < 0:
            raise ValueError("accel_amplitude must be >= 0")
        if self.quantize_decimals < 0:
            raise ValueError("quantize_decimals must be >= 0")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if not self.speed > 0:
            raise ValueError("speed must be positive")
        known = set(QUANTITIES)
        for addr, quantity in self.addresses.items():
            if quantity not in known:
                raise ValueError(f"address {addr} maps to unknown quantity {quantity!r}")
        for quantity, gain in self.readout_scale.items():
            if quantity not in known:
                raise ValueError(f"readout_scale names unknown quantity {quantity!r}")
            if not (math.isfinite(gain) and gain > 0):
                raise ValueError(f"readout_scale for {quantity} must be positive")

    def gain(self, quantity: str) -> float:
        return float(self.readout_scale.get(quantity, 1.0))

    def readout_bounds(self) -> PlantParams:
        """Plant bounds expressed in readout units."""
        p = self.plant
        return replace(p, x_max=p.x_max * self.gain("x"),
                       phi_max=p.phi_max * self.gain("phi"))


def quantize(value: float, decimals: int) -> float:
    """Round half away from zero to ``decimals`` places."""
    q = Decimal(1).scaleb(-decimals)
    return float(Decimal(repr(value)).quantize(q, rounding=ROUND_HALF_UP))


def steps_for(duration: float, dt: float) -> int:
    """Whole integration steps covering ``duration`` (rounded up)."""
    # the small slack keeps e.g. 0.007/0.001 = 7.000000000000001 at 7 steps
    return max(0, math.ceil(duration / dt - 1e-9))


class AnalogEmulator:
    """The pendulum program on a simulated analog computer."""

    def __init__(self, config: EmulatorConfig | None = None) -> None:
        self.config = config or EmulatorConfig()
        self._lock = threading.RLock()
        self._seed(self.config.seed)
        self._group: list[str] | None = None
        self.outputs = DigitalOutputs()
        self._disturb_accel = 0.0
        self._disturb_steps = 0
        # integral of the applied plant input over time, for diagnostics
        self.input_integral = 0.0
        self.steps_taken = 0
        self._wall_anchor: float | None = None
        self.mode = MachineMode.IC
        self._y = initial_state(self.config.plant, self._ic_rng,
                                self.config.phi0_max).as_tuple()
        self._t = 0.0

    def _seed(self, seed: int | None) -> None:
        ic_seq, noise_seq, jitter_seq = np.random.SeedSequence(seed).spawn(3)
        self._ic_rng = np.random.default_rng(ic_seq)
        self._noise_rng = np.random.default_rng(noise_seq)
        self._jitter_rng = np.random.default_rng(jitter_seq)

    def reseed(self, seed: int) -> None:
        """Restart all random streams from ``seed``."""
        with self._lock:
            self._seed(seed)

    # -- state -------------------------------------------------------------

    @property
    def state(self) -> SimState:
        with self._lock:
            self._catch_up()
            return SimState(*self._y, t=self._t)

    def set_state(self, state: SimState) -> None:
        """Overwrite the plant state (test hook; the real machine has none)."""
        with self._lock:
            self._y = state.as_tuple()
            self._t = state.t

    @property
    def readout_group(self) -> list[str] | None:
        return None if self._group is None else list(self._group)

    # -- machine control ---------------------------------------------------

    def set_mode(self, mode: MachineMode) -> None:
        with self._lock:
            self._catch_up()
            if mode is MachineMode.IC:
                self._y = initial_state(self.config.plant, self._ic_rng,
                                        self.config.phi0_max).as_tuple()
                self._t = 0.0
                self._disturb_steps = 0
            self.mode = mode
            self._wall_anchor = time.monotonic() if mode is MachineMode.OP else None

    def reset(self) -> None:
        with self._lock:
            self._group = None
            self.outputs = DigitalOutputs()
            self.set_mode(MachineMode.IC)

    def set_digital_output(self, channel: int, level: bool) -> None:
        with self._lock:
            self._catch_up()
            if channel == 0:
                self.outputs.d0 = bool(level)
            elif channel == 1:
                self.outputs.d1 = bool(level)
            else:
                raise ChannelError(f"no digital output {channel}")

    def applied_input(self) -> float:
        """Plant input currently produced by the digital outputs alone."""
        if self.mode is not MachineMode.OP or not self.outputs.d1:
            return 0.0
        a = self.config.accel_amplitude
        return a if self.outputs.d0 else -a

    # -- readout -----------------------------------------------------------

    def _quantity(self, address: str) -> int:
        try:
            name = self.config.addresses[address]
        except KeyError:
            raise AddressError(f"unknown element address {address!r}") from None
        return QUANTITIES.index(name)

    def _measure(self, true_value: float, idx: int) -> float:
        cfg = self.config
        v = true_value * cfg.gain(QUANTITIES[idx])
        if cfg.noise_sigma > 0:
            v += float(self._noise_rng.normal(0.0, cfg.noise_sigma))
        if cfg.machine_units:
            v = min(1.0, max(-1.0, v))
        return quantize(v, cfg.quantize_decimals)

    def _sample_point(self) -> None:
        # realtime jitter: the sample lands a little after the request
        if self.config.clock == REALTIME and self.config.jitter_ms > 0:
            extra = float(self._jitter_rng.uniform(0.0, self.config.jitter_ms)) / 1000.0
            self._integrate(steps_for(extra, self.config.dt))

    def read_element(self, address: str) -> float:
        with self._lock:
            idx = self._quantity(address)
            self._catch_up()
            self._sample_point()
            return self._measure(self._y[idx], idx)

    def define_readout_group(self, addresses) -> None:
        addresses = list(addresses)
        with self._lock:
            for a in addresses:
                self._quantity(a)
            self._group = addresses

    def fetch_readout_group(self) -> list[float]:
        with self._lock:
            if self._group is None:
                raise NoReadoutGroup("no readout group defined")
            self._catch_up()
            self._sample_point()
            snapshot = self._y
            idxs = [self._quantity(a) for a in self._group]
            return [self._measure(snapshot[i], i) for i in idxs]

    # -- time --------------------------------------------------------------

    def _integrate(self, n: int) -> None:
        if self.mode is not MachineMode.OP or n <= 0:
            return
        cfg = self.config
        dt = cfg.dt
        base = self.applied_input()
        y = self._y
        done = 0
        while done < n:
            if self._disturb_steps > 0:
                chunk = min(n - done, self._disturb_steps)
                u = base + self._disturb_accel
                self._disturb_steps -= chunk
            else:
                chunk = n - done
                u = base
            y = rk4_advance(y, u, dt, cfg.plant, chunk)
            self.input_integral += u * dt * chunk
            done += chunk
        self._y = y
        self._t += n * dt
        self.steps_taken += n

    def _catch_up(self) -> None:
        if self.config.clock != REALTIME or self._wall_anchor is None:
            return
        now = time.monotonic()
        n = int((now - self._wall_anchor) * self.config.speed / self.config.dt)
        if n > 0:
            self._integrate(n)
            self._wall_anchor += n * self.config.dt / self.config.speed

    def advance_time(self, duration: float) -> int:
        """Integrate ``duration`` seconds of virtual time; returns the step count.

        Outside operate mode the state does not change.
        """
        if self.config.clock != VIRTUAL:
            raise UsageError("advance_time needs the virtual clock")
        if duration < 0 or not math.isfinite(duration):
            raise UsageError("duration must be finite and >= 0")
        with self._lock:
            if self.mode is not MachineMode.OP:
                return 0
            n = steps_for(duration, self.config.dt)
            self._integrate(n)
            return n

    def inject_disturbance(self, magnitude: float, duration: float) -> None:
        """Superpose ``magnitude`` on the plant input for ``duration`` seconds."""
        if not (math.isfinite(magnitude) and math.isfinite(duration)) or duration < 0:
            raise UsageError("disturbance needs finite magnitude and duration >= 0")
        with self._lock:
            self._catch_up()
            if self.mode is not MachineMode.OP:
                raise UsageError("disturbances can only be injected while operating")
            self._disturb_accel = float(magnitude)
            self._disturb_steps = steps_for(duration, self.config.dt)

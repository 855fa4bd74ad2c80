"""Client side of the Hybrid Controller protocol, as used by the agent."""

from __future__ import annotations

import socket
import time

from . import codec
from .codec import (Bulk, BulkDefine, BulkFetch, DigitalOut, Disturb, Error,
                    GetValue, Halt, Ic, Op, Reset, Value, Wait)

HC_TIMEOUT = 2.0
IMPULSE_MS = 20

HC_SIM_X_POS = "0223"
HC_SIM_X_VEL = "0222"
HC_SIM_ANGLE = "0161"
HC_SIM_ANGLE_VEL = "0160"
STATE_GROUP = (HC_SIM_X_POS, HC_SIM_X_VEL, HC_SIM_ANGLE, HC_SIM_ANGLE_VEL)


class ClientError(Exception):
    """Protocol or transport failure seen by the client."""


class ArityError(ClientError):
    pass


class RemoteError(ClientError):
    def __init__(self, error: Error) -> None:
        super().__init__(f"{error.code}: {error.message}" if error.message else error.code)
        self.error = error


class TcpTransport:
    def __init__(self, host: str, port: int, timeout: float = HC_TIMEOUT) -> None:
        try:
            self.sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise ClientError(f"cannot connect to {host}:{port}: {exc}") from exc
        self.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._buf = bytearray()

    def send(self, data: bytes) -> None:
        try:
            self.sock.sendall(data)
        except OSError as exc:
            raise ClientError(f"send failed: {exc}") from exc

    def readline(self) -> bytes:
        while True:
            nl = self._buf.find(b"\n")
            if nl != -1:
                line = bytes(self._buf[:nl + 1])
                del self._buf[:nl + 1]
                return line
            try:
                data = self.sock.recv(4096)
            except socket.timeout as exc:
                raise ClientError("timed out waiting for a response") from exc
            except OSError as exc:
                raise ClientError(f"receive failed: {exc}") from exc
            if not data:
                raise ClientError("connection closed by the server")
            self._buf += data

    def close(self) -> None:
        self.sock.close()


class InProcessTransport:
    """Feeds bytes straight into a server :class:`Session`, no sockets involved."""

    def __init__(self, session) -> None:
        self.session = session
        self._buf = bytearray()

    def send(self, data: bytes) -> None:
        self._buf += self.session.handle(data)

    def readline(self) -> bytes:
        nl = self._buf.find(b"\n")
        if nl == -1:
            raise ClientError("no response pending")
        line = bytes(self._buf[:nl + 1])
        del self._buf[:nl + 1]
        return line

    def close(self) -> None:
        self._buf += self.session.close()


class HybridClient:
    """Talks to a (real or emulated) Hybrid Controller.

    In the ``extension`` dialect impulse timing is delegated to the machine
    with a wait command, which keeps virtual-time runs deterministic; in the
    ``strict`` dialect the client sleeps on the wall clock like the original.
    """

    def __init__(self, transport, dialect: str = codec.EXTENSION,
                 impulse_ms: int = IMPULSE_MS) -> None:
        self.transport = transport
        self.dialect = dialect
        self.impulse_ms = impulse_ms

    def send(self, cmd: codec.Command) -> None:
        self.transport.send(codec.serialize_command(cmd))

    def receive(self) -> codec.Response:
        return codec.parse_response(self.transport.readline())

    def _expect(self, kind):
        resp = self.receive()
        if isinstance(resp, Error):
            raise RemoteError(resp)
        if not isinstance(resp, kind):
            raise ClientError(f"unexpected response {resp!r}")
        return resp

    def reset(self) -> None:
        self.send(Reset())

    def initial_condition(self) -> None:
        self.send(Ic())

    def operate(self) -> None:
        self.send(Op())

    def halt(self) -> None:
        self.send(Halt())

    def get_value(self, address: str) -> float:
        self.send(GetValue(address))
        resp = self._expect(Value)
        if resp.id != address:
            raise ClientError(f"asked for {address}, got {resp.id}")
        return resp.value

    def define_readout_group(self, addresses=STATE_GROUP) -> None:
        self.send(BulkDefine(tuple(addresses)))

    def fetch(self) -> tuple[float, ...]:
        self.send(BulkFetch())
        return self._expect(Bulk).values

    def get_sim_state(self) -> tuple[float, float, float, float]:
        """``(x, x_dot, phi, phi_dot)`` via one bulk fetch."""
        values = self.fetch()
        if len(values) != 4:
            raise ArityError(f"expected 4 state values, got {len(values)}")
        return values

    def wait(self, ms: int) -> None:
        if self.dialect == codec.EXTENSION:
            self.send(Wait(ms))
            self._expect(Value)
        else:
            time.sleep(ms / 1000.0)

    def disturb(self, magnitude: float, ms: int) -> None:
        self.send(Disturb(magnitude, ms))
        self._expect(Value)

    def influence_sim(self, action: int, impulse_ms: int | None = None) -> None:
        """Push the cart one way (action 1) or the other (action 0)."""
        if action not in (0, 1):
            raise ValueError(f"action must be 0 or 1, got {action!r}")
        self.send(DigitalOut(0, action == 1))
        self.send(DigitalOut(1, True))
        self.wait(self.impulse_ms if impulse_ms is None else impulse_ms)
        self.send(DigitalOut(1, False))

    def close(self) -> None:
        self.transport.close()

"""Serving the emulator over the Hybrid Controller protocol."""

from __future__ import annotations

import logging
import os
import select
import socket
import sys
import threading
import time
from typing import BinaryIO, Callable, TextIO

from ..emulator import REALTIME, AnalogEmulator, EmulatorError, MachineMode
from . import codec
from .codec import (BulkDefine, BulkFetch, DigitalOut, Disturb, Error, GetValue,
                    Halt, Ic, Malformed, Op, Reset, Seed, Wait)

log = logging.getLogger(__name__)

LISTEN_ENV = "HC_LISTEN"
DEFAULT_LISTEN = "127.0.0.1:7230"


class Transcript:
    """Plain-text log of every frame, ``>`` for commands and ``<`` for responses."""

    def __init__(self, stream: TextIO) -> None:
        self.stream = stream

    def command(self, raw: bytes) -> None:
        self.stream.write("> " + raw.decode("ascii", "replace") + "\n")

    def response(self, raw: bytes) -> None:
        self.stream.write("< " + raw.decode("ascii", "replace").rstrip("\n") + "\n")


class Session:
    """One client's conversation with the machine.

    ``handle`` takes raw bytes as they arrive and returns the bytes to send
    back.  Commands are applied strictly in arrival order.
    """

    def __init__(self, emulator: AnalogEmulator, dialect: str = codec.STRICT,
                 transcript: Transcript | None = None) -> None:
        self.emulator = emulator
        self.dialect = dialect
        self.parser = codec.CommandParser(dialect)
        self.transcript = transcript
        self.applied: list[codec.Command] = []

    @property
    def decimals(self) -> int:
        return self.emulator.config.quantize_decimals

    def handle(self, data: bytes) -> bytes:
        out = bytearray()
        for item in self.parser.feed(data):
            out += self._respond(item)
        return bytes(out)

    def close(self) -> bytes:
        """End of input: report a dangling partial command, halt the machine."""
        out = bytearray()
        for item in self.parser.close():
            out += self._respond(item)
        self.emulator.set_mode(MachineMode.HALT)
        return bytes(out)

    def _respond(self, item) -> bytes:
        if self.transcript:
            raw = item.raw if isinstance(item, Malformed) else codec.serialize_command(item)
            self.transcript.command(raw)
        resp = self.execute(item)
        if resp is None:
            return b""
        wire = codec.serialize_response(resp, self.decimals)
        if self.transcript:
            self.transcript.response(wire)
        return wire

    def execute(self, cmd) -> codec.Response | None:
        if isinstance(cmd, Malformed):
            return Error(cmd.code, cmd.message)
        emu = self.emulator
        self.applied.append(cmd)
        try:
            if isinstance(cmd, Reset):
                emu.reset()
            elif isinstance(cmd, Ic):
                emu.set_mode(MachineMode.IC)
            elif isinstance(cmd, Op):
                emu.set_mode(MachineMode.OP)
            elif isinstance(cmd, Halt):
                emu.set_mode(MachineMode.HALT)
            elif isinstance(cmd, DigitalOut):
                emu.set_digital_output(cmd.channel, cmd.level)
            elif isinstance(cmd, GetValue):
                return codec.Value(emu.read_element(cmd.address), cmd.address)
            elif isinstance(cmd, BulkDefine):
                emu.define_readout_group(cmd.addresses)
            elif isinstance(cmd, BulkFetch):
                return codec.Bulk(tuple(emu.fetch_readout_group()))
            elif isinstance(cmd, Wait):
                if emu.config.clock == REALTIME:
                    time.sleep(cmd.ms / 1000.0)
                else:
                    emu.advance_time(cmd.ms / 1000.0)
                return codec.Value(float(cmd.ms), "wait")
            elif isinstance(cmd, Disturb):
                emu.inject_disturbance(cmd.magnitude, cmd.ms / 1000.0)
                return codec.Value(float(cmd.ms), "disturb")
            elif isinstance(cmd, Seed):
                emu.reseed(cmd.n)
                return codec.Value(float(cmd.n), "seed")
        except EmulatorError as exc:
            return Error(exc.code, str(exc))
        return None


def serve_stream(session: Session, reader: BinaryIO, writer: BinaryIO,
                 chunk: int = 4096) -> None:
    """Run a session over a pair of binary streams until EOF."""
    read = getattr(reader, "read1", reader.read)
    while True:
        data = read(chunk)
        if not data:
            break
        out = session.handle(data)
        if out:
            writer.write(out)
            writer.flush()
    tail = session.close()
    if tail:
        writer.write(tail)
        writer.flush()


def serve_stdio(emulator: AnalogEmulator, dialect: str = codec.STRICT,
                transcript: Transcript | None = None) -> None:
    session = Session(emulator, dialect, transcript)
    serve_stream(session, sys.stdin.buffer, sys.stdout.buffer)


def _serve_socket(session: Session, conn: socket.socket) -> None:
    try:
        while True:
            data = conn.recv(4096)
            if not data:
                break
            out = session.handle(data)
            if out:
                conn.sendall(out)
        tail = session.close()
        if tail:
            conn.sendall(tail)
    except OSError as exc:
        log.info("session ended by transport error: %s", exc)
        session.emulator.set_mode(MachineMode.HALT)
    finally:
        conn.close()


def parse_address(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep:
        raise ValueError(f"listen address must be host:port, got {text!r}")
    return host or "127.0.0.1", int(port)


def default_listen() -> str:
    return os.environ.get(LISTEN_ENV, DEFAULT_LISTEN)


class TcpServer:
    """Serves one session at a time; extra connections get ``? busy``.

    With ``max_sessions`` set, the server stops after that many sessions.
    """

    def __init__(self, emulator: AnalogEmulator, host: str = "127.0.0.1", port: int = 0,
                 dialect: str = codec.STRICT, transcript: Transcript | None = None,
                 max_sessions: int | None = 1) -> None:
        self.emulator = emulator
        self.dialect = dialect
        self.transcript = transcript
        self.max_sessions = max_sessions
        self.sock = socket.create_server((host, port))
        self.address = self.sock.getsockname()[:2]
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        self.sessions_served = 0

    @property
    def port(self) -> int:
        return self.address[1]

    def serve_forever(self, on_session: Callable[[], None] | None = None) -> None:
        active: threading.Thread | None = None
        try:
            while not self._stop.is_set():
                if (active is not None and not active.is_alive()):
                    active = None
                    if self.max_sessions is not None and \
                            self.sessions_served >= self.max_sessions:
                        break
                ready, _, _ = select.select([self.sock], [], [], 0.05)
                if not ready:
                    continue
                conn, peer = self.sock.accept()
                if active is not None:
                    log.info("refusing second connection from %s", peer)
                    try:
                        conn.sendall(codec.serialize_response(Error("busy")))
                    finally:
                        conn.close()
                    continue
                self.sessions_served += 1
                session = Session(self.emulator, self.dialect, self.transcript)
                active = threading.Thread(target=_serve_socket, args=(session, conn),
                                          daemon=True)
                active.start()
                if on_session:
                    on_session()
            if active is not None:
                active.join()
        finally:
            self.sock.close()

    def start(self) -> "TcpServer":
        """Serve from a background thread."""
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5)

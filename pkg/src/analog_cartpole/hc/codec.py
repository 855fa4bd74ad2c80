"""Hybrid Controller wire format: command parsing/serialization and responses.

Commands are ASCII and unframed; the grammar is prefix-free, so a parser
never needs to look past the end of the current command::

    x | i | o | h | f                 reset, initial condition, operate, halt, fetch
    g NNNN                            read one element (4-digit address)
    G [NNNN (; NNNN)*] .              define the bulk readout group
    D n | d n                         digital output n on / off
    ! w <ms> .                        wait (extension dialect only)
    ! d <accel> , <ms> .              disturb the cart (extension dialect only)
    ! s <seed> .                      reseed the machine (extension dialect only)

Whitespace between commands is ignored.  Responses are newline-terminated
lines: ``<value> <id>`` for single reads, ``v1;v2;...`` for bulk fetches and
``? <code> [message]`` for errors.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

STRICT = "strict"
EXTENSION = "extension"

ADDRESS_LEN = 4
MAX_GROUP = 64
MAX_EXT_LEN = 64
WHITESPACE = b" \t\r\n"

_NUMBER = re.compile(r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?\Z")
_INTEGER = re.compile(r"\d+\Z")


@dataclass(frozen=True)
class Reset:
    pass


@dataclass(frozen=True)
class Ic:
    pass


@dataclass(frozen=True)
class Op:
    pass


@dataclass(frozen=True)
class Halt:
    pass


@dataclass(frozen=True)
class BulkFetch:
    pass


@dataclass(frozen=True)
class GetValue:
    address: str


@dataclass(frozen=True)
class BulkDefine:
    addresses: tuple[str, ...]


@dataclass(frozen=True)
class DigitalOut:
    channel: int
    level: bool


@dataclass(frozen=True)
class Wait:
    ms: int


@dataclass(frozen=True)
class Disturb:
    magnitude: float
    ms: int


@dataclass(frozen=True)
class Seed:
    n: int


Command = Union[Reset, Ic, Op, Halt, BulkFetch, GetValue, BulkDefine,
                DigitalOut, Wait, Disturb, Seed]
EXT_COMMANDS = (Wait, Disturb, Seed)


@dataclass(frozen=True)
class Malformed:
    """A stretch of input that is not a valid command."""

    code: str
    message: str
    raw: bytes = b""


_SINGLE = {ord("x"): Reset(), ord("i"): Ic(), ord("o"): Op(), ord("h"): Halt(),
           ord("f"): BulkFetch()}
_SINGLE_OUT = {Reset: b"x", Ic: b"i", Op: b"o", Halt: b"h", BulkFetch: b"f"}


def valid_address(address: str) -> bool:
    return len(address) == ADDRESS_LEN and address.isascii() and address.isdigit()


def _is_digit(b: int) -> bool:
    return 48 <= b <= 57


class CommandParser:
    """Incremental parser; feed it bytes, collect commands as they complete."""

    def __init__(self, dialect: str = STRICT) -> None:
        if dialect not in (STRICT, EXTENSION):
            raise ValueError(f"unknown dialect {dialect!r}")
        self.dialect = dialect
        self._buf = bytearray()

    @property
    def pending(self) -> bytes:
        """Bytes of an incomplete command still waiting for more input."""
        return bytes(self._buf)

    def feed(self, data: bytes) -> list[Command | Malformed]:
        self._buf.extend(data)
        out: list[Command | Malformed] = []
        while self._buf:
            item, used = self._parse_one(self._buf)
            if used == 0:
                break
            del self._buf[:used]
            if item is not None:
                out.append(item)
        return out

    def close(self) -> list[Malformed]:
        """Flush an unterminated trailing command as an error."""
        if not self._buf:
            return []
        raw = bytes(self._buf)
        self._buf.clear()
        return [Malformed("truncated", "incomplete command at end of input", raw)]

    # Each branch returns (item, consumed).  consumed == 0 means "need more".
    def _parse_one(self, buf: bytearray):
        lead = buf[0]
        if lead in WHITESPACE:
            return None, 1
        if lead in _SINGLE:
            return _SINGLE[lead], 1
        if lead == ord("g"):
            return self._parse_get(buf)
        if lead == ord("G"):
            return self._parse_group(buf)
        if lead in (ord("D"), ord("d")):
            if len(buf) < 2:
                return None, 0
            if not _is_digit(buf[1]):
                return Malformed("channel", "digital output needs a channel digit",
                                 bytes(buf[:1])), 1
            return DigitalOut(buf[1] - 48, lead == ord("D")), 2
        if lead == ord("!") and self.dialect == EXTENSION:
            return self._parse_ext(buf)
        return Malformed("unknown", f"unknown command byte {bytes([lead])!r}",
                         bytes([lead])), 1

    def _parse_get(self, buf: bytearray):
        for i in range(1, ADDRESS_LEN + 1):
            if i >= len(buf):
                return None, 0
            if not _is_digit(buf[i]):
                return Malformed("address", "address must be 4 decimal digits",
                                 bytes(buf[:i])), i
        return GetValue(buf[1:ADDRESS_LEN + 1].decode("ascii")), ADDRESS_LEN + 1

    def _parse_group(self, buf: bytearray):
        addresses: list[str] = []
        i = 1
        if i >= len(buf):
            return None, 0
        if buf[i] == ord("."):
            return BulkDefine(()), 2
        while True:
            for k in range(ADDRESS_LEN):
                if i + k >= len(buf):
                    return None, 0
                if not _is_digit(buf[i + k]):
                    return Malformed("address", "malformed address in group definition",
                                     bytes(buf[:i + k])), i + k
            addresses.append(buf[i:i + ADDRESS_LEN].decode("ascii"))
            i += ADDRESS_LEN
            if len(addresses) > MAX_GROUP:
                return Malformed("overflow", f"group longer than {MAX_GROUP} addresses",
                                 bytes(buf[:i])), i
            if i >= len(buf):
                return None, 0
            if buf[i] == ord("."):
                return BulkDefine(tuple(addresses)), i + 1
            if buf[i] != ord(";"):
                return Malformed("syntax", "expected ';' or '.' in group definition",
                                 bytes(buf[:i])), i
            i += 1

    def _parse_ext(self, buf: bytearray):
        # scan until the terminating '.', stopping at the first byte that
        # cannot belong to the command so the parser resynchronizes there
        if len(buf) < 2:
            return None, 0
        kind = buf[1]
        if kind not in b"wsd":
            return Malformed("syntax", "unknown extension command", bytes(buf[:1])), 1
        in_magnitude = kind == ord("d")
        i = 2
        while True:
            if i > MAX_EXT_LEN:
                return Malformed("overflow", "unterminated extension command",
                                 bytes(buf[:i])), i
            if i >= len(buf):
                return None, 0
            b = buf[i]
            if in_magnitude:
                if b == ord(","):
                    in_magnitude = False
                elif not (_is_digit(b) or b in b"+-.eE"):
                    break
            elif b == ord("."):
                item = _decode_ext(bytes(buf[1:i]))
                if item is None:
                    return Malformed("syntax", "bad extension command",
                                     bytes(buf[:i + 1])), i + 1
                return item, i + 1
            elif not _is_digit(b):
                break
            i += 1
        return Malformed("syntax", "bad extension command", bytes(buf[:i])), i


def _decode_ext(body: bytes):
    try:
        text = body.decode("ascii")
    except UnicodeDecodeError:
        return None
    if not text:
        return None
    kind, arg = text[0], text[1:]
    if kind == "w" and _INTEGER.match(arg):
        return Wait(int(arg))
    if kind == "s" and _INTEGER.match(arg):
        return Seed(int(arg))
    if kind == "d" and arg.count(",") == 1:
        mag, ms = arg.split(",")
        if _NUMBER.match(mag) and _INTEGER.match(ms):
            value = float(mag)
            if math.isfinite(value):
                return Disturb(value, int(ms))
    return None


def parse_command(data: bytes, dialect: str = STRICT) -> Command | Malformed:
    """Parse exactly one command from ``data``."""
    parser = CommandParser(dialect)
    items = parser.feed(data) + parser.close()
    if len(items) != 1:
        return Malformed("framing", f"expected one command, got {len(items)}", data)
    return items[0]


def serialize_command(cmd: Command) -> bytes:
    single = _SINGLE_OUT.get(type(cmd))
    if single is not None:
        return single
    if isinstance(cmd, GetValue):
        return b"g" + cmd.address.encode("ascii")
    if isinstance(cmd, BulkDefine):
        return b"G" + ";".join(cmd.addresses).encode("ascii") + b"."
    if isinstance(cmd, DigitalOut):
        return (b"D" if cmd.level else b"d") + str(cmd.channel).encode("ascii")
    if isinstance(cmd, Wait):
        return b"!w%d." % cmd.ms
    if isinstance(cmd, Disturb):
        return b"!d" + repr(float(cmd.magnitude)).encode("ascii") + b",%d." % cmd.ms
    if isinstance(cmd, Seed):
        return b"!s%d." % cmd.n
    raise TypeError(f"not a command: {cmd!r}")


# -- responses -------------------------------------------------------------


@dataclass(frozen=True)
class Value:
    value: float
    id: str


@dataclass(frozen=True)
class Bulk:
    values: tuple[float, ...]


@dataclass(frozen=True)
class Error:
    code: str
    message: str = ""


Response = Union[Value, Bulk, Error]


def _parse_float(token: str) -> float | None:
    if not _NUMBER.match(token):
        return None
    return float(token)


def parse_response(line: bytes) -> Response:
    """Decode one response line; anything unparseable comes back as ``Error``."""
    try:
        text = line.decode("ascii")
    except UnicodeDecodeError:
        return Error("parse", "response is not ASCII")
    if text.endswith("\n"):
        text = text[:-1]
    if text.endswith("\r"):
        text = text[:-1]
    if "\n" in text:
        return Error("parse", "more than one line")
    if text.startswith("?"):
        code, _, message = text[1:].strip().partition(" ")
        return Error(code or "unknown", message)
    if " " in text:
        fields = text.split(" ")
        if len(fields) != 2 or not fields[1]:
            return Error("parse", f"malformed value response {text!r}")
        value = _parse_float(fields[0])
        if value is None:
            return Error("parse", f"non-numeric value {fields[0]!r}")
        return Value(value, fields[1])
    if text == "":
        return Bulk(())
    values = []
    for token in text.split(";"):
        value = _parse_float(token)
        if value is None:
            return Error("parse", f"non-numeric bulk value {token!r}")
        values.append(value)
    return Bulk(tuple(values))


def format_value(value: float, decimals: int) -> str:
    return f"{value:.{decimals}f}"


def serialize_response(resp: Response, decimals: int = 4) -> bytes:
    if isinstance(resp, Value):
        return f"{format_value(resp.value, decimals)} {resp.id}\n".encode("ascii")
    if isinstance(resp, Bulk):
        return (";".join(format_value(v, decimals) for v in resp.values)
                + "\n").encode("ascii")
    if isinstance(resp, Error):
        tail = f" {resp.message}" if resp.message else ""
        return f"? {resp.code}{tail}\n".encode("ascii", "replace")
    raise TypeError(f"not a response: {resp!r}")

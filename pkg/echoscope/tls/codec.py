"""
Big-endian byte reader and length-prefixed vector helpers shared by the
record, handshake, extension and ECHConfig codecs.
"""

import struct
from typing import Callable, Type

from echoscope.exception.exception import EchoscopeError, MalformedHandshake


class Reader:
    """Cursor over a byte string. Every read is bounds-checked."""

    def __init__(
        self,
        data: bytes,
        error: Type[EchoscopeError] = MalformedHandshake,
        base_offset: int = 0
    ):
        self.data = bytes(data)
        self.pos = 0
        self.error = error
        self.base_offset = base_offset

    @property
    def remaining(self) -> int:
        return len(self.data) - self.pos

    def at_end(self) -> bool:
        return self.pos == len(self.data)

    def fail(self, message: str) -> EchoscopeError:
        return self.error(message, offset=self.base_offset + self.pos)

    def _take(self, n: int, what: str) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise self.fail(f"{what}: need {n} bytes, {self.remaining} left")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u8(self, what: str = "u8") -> int:
        return self._take(1, what)[0]

    def u16(self, what: str = "u16") -> int:
        return struct.unpack("!H", self._take(2, what))[0]

    def u24(self, what: str = "u24") -> int:
        hi, lo = struct.unpack("!BH", self._take(3, what))
        return (hi << 16) | lo

    def raw(self, n: int, what: str = "bytes") -> bytes:
        return self._take(n, what)

    def vec8(self, what: str = "vector<1>") -> bytes:
        return self._take(self.u8(what), what)

    def vec16(self, what: str = "vector<2>") -> bytes:
        return self._take(self.u16(what), what)

    def rest(self) -> bytes:
        return self._take(self.remaining, "rest")

    def expect_end(self, what: str) -> None:
        if not self.at_end():
            raise self.fail(f"{what}: {self.remaining} trailing bytes")


def u8(value: int) -> bytes:
    return struct.pack("!B", value)


def u16(value: int) -> bytes:
    return struct.pack("!H", value)


def u24(value: int) -> bytes:
    return struct.pack("!BH", (value >> 16) & 0xFF, value & 0xFFFF)


def vec8(data: bytes) -> bytes:
    if len(data) > 0xFF:
        raise ValueError(f"vector<1> too long: {len(data)}")
    return u8(len(data)) + data


def vec16(data: bytes) -> bytes:
    if len(data) > 0xFFFF:
        raise ValueError(f"vector<2> too long: {len(data)}")
    return u16(len(data)) + data


def u16_list(values) -> bytes:
    return b"".join(u16(v) for v in values)


def read_u16_list(data: bytes, error: Type[EchoscopeError], what: str) -> tuple:
    if len(data) % 2:
        raise error(f"{what}: odd length {len(data)}")
    return tuple(struct.unpack(f"!{len(data) // 2}H", data))


def read_items(data: bytes, parse_one: Callable[[Reader], object], error: Type[EchoscopeError]) -> tuple:
    """Parse a run of items filling `data` exactly."""
    reader = Reader(data, error)
    items = []
    while not reader.at_end():
        items.append(parse_one(reader))
    return tuple(items)

"""Canonical byte encoding shared by every hashed or signed structure.

Integers are 64-bit little-endian, byte fields carry a u64 length prefix.
The snapshot header uses a u16 version.
"""

from __future__ import annotations

import struct

_U16 = struct.Struct("<H")
_U64 = struct.Struct("<Q")
_I64 = struct.Struct("<q")


class DecodeError(ValueError):
    pass


def u16(value: int) -> bytes:
    return _U16.pack(value)


def u64(value: int) -> bytes:
    return _U64.pack(value)


def i64(value: int) -> bytes:
    return _I64.pack(value)


def lp(data: bytes) -> bytes:
    """Length-prefixed byte field."""
    return _U64.pack(len(data)) + data


def lp_str(text: str) -> bytes:
    return lp(text.encode("utf-8"))


class Reader:
    """Cursor over a byte buffer mirroring the encoders above."""

    def __init__(self, data: bytes, offset: int = 0) -> None:
        self.data = data
        self.pos = offset

    def _take(self, size: int) -> bytes:
        end = self.pos + size
        if end > len(self.data):
            raise DecodeError(f"truncated input at offset {self.pos}")
        chunk = self.data[self.pos:end]
        self.pos = end
        return chunk

    def u16(self) -> int:
        return _U16.unpack(self._take(2))[0]

    def u64(self) -> int:
        return _U64.unpack(self._take(8))[0]

    def i64(self) -> int:
        return _I64.unpack(self._take(8))[0]

    def raw(self, size: int) -> bytes:
        return self._take(size)

    def lp(self) -> bytes:
        return self._take(self.u64())

    def lp_str(self) -> str:
        return self.lp().decode("utf-8")

    def at_end(self) -> bool:
        return self.pos == len(self.data)

"""Runtime scalar values and their fixed-width wire encoding.

All multi-byte quantities in this package are little-endian. A value on
the wire is one kind byte followed by a payload of the kind's width.
"""

from __future__ import annotations

import struct

# Kind codes (also the wire tag bytes).
I32 = 0x01
I64 = 0x02
F32 = 0x03
F64 = 0x04

KIND_NAMES = {I32: "i32", I64: "i64", F32: "f32", F64: "f64"}
KIND_BY_NAME = {v: k for k, v in KIND_NAMES.items()}
KIND_WIDTH = {I32: 4, I64: 8, F32: 4, F64: 8}

# A code location: (function index, instruction offset).
CodeOffset = tuple[int, int]

_I32_MIN, _I32_MAX = -(1 << 31), (1 << 31) - 1
_I64_MIN, _I64_MAX = -(1 << 63), (1 << 63) - 1


def wrap_i32(n: int) -> int:
    """Two's-complement wraparound to signed 32-bit."""
    n &= 0xFFFFFFFF
    return n - 0x100000000 if n >= 0x80000000 else n


def wrap_i64(n: int) -> int:
    n &= 0xFFFFFFFFFFFFFFFF
    return n - 0x10000000000000000 if n >= 0x8000000000000000 else n


def round_f32(x: float) -> float:
    """Round a Python float through IEEE-754 single precision."""
    return struct.unpack("<f", struct.pack("<f", x))[0]


class Value:
    """A tagged scalar flowing on the value stack.

    ``num`` holds the native payload: a signed int within the kind's range
    for integer kinds, a float (already rounded for f32) for float kinds.
    Equality compares the encoded bits, so NaNs and signed zeroes behave
    deterministically.
    """

    __slots__ = ("kind", "num")

    def __init__(self, kind: int, num):
        self.kind = kind
        self.num = num

    def __repr__(self) -> str:
        return f"{self.num}{KIND_NAMES[self.kind]}"

    def __eq__(self, other) -> bool:
        if not isinstance(other, Value):
            return NotImplemented
        return self.kind == other.kind and payload_bytes(self) == payload_bytes(other)

    def __hash__(self) -> int:
        return hash((self.kind, payload_bytes(self)))


def i32(n: int) -> Value:
    return Value(I32, wrap_i32(n))


def i64(n: int) -> Value:
    return Value(I64, wrap_i64(n))


def f32(x: float) -> Value:
    return Value(F32, round_f32(x))


def f64(x: float) -> Value:
    return Value(F64, float(x))


def zero_value(kind: int) -> Value:
    """The default value of a kind (integer 0 / float 0.0)."""
    return Value(kind, 0 if kind in (I32, I64) else 0.0)


_PACKERS = {
    I32: struct.Struct("<i"),
    I64: struct.Struct("<q"),
    F32: struct.Struct("<f"),
    F64: struct.Struct("<d"),
}


def payload_bytes(v: Value) -> bytes:
    return _PACKERS[v.kind].pack(v.num)


def encode_value(v: Value) -> bytes:
    return bytes([v.kind]) + payload_bytes(v)


def decode_value(buf: bytes, pos: int) -> tuple[Value, int]:
    """Decode one value at ``pos``; returns (value, next position)."""
    from .errors import DecodeError

    if pos >= len(buf):
        raise DecodeError("truncated value")
    kind = buf[pos]
    packer = _PACKERS.get(kind)
    if packer is None:
        raise DecodeError(f"unknown value kind 0x{kind:02x}")
    end = pos + 1 + packer.size
    if end > len(buf):
        raise DecodeError("truncated value payload")
    return Value(kind, packer.unpack_from(buf, pos + 1)[0]), end

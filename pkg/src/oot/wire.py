"""Interrupt and response encoding.

A command is one opcode byte, a 4-byte little-endian payload length, and
the payload. Replies mirror that with a status byte in front: 0x00 ok,
0x01 error, 0x02 an unsolicited session push. Payload schemas per opcode
live in the pack/parse pairs below; both ends of every link (including
non-Python clients) must produce these byte sequences exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .errors import DecodeError, MalformedInterrupt
from .values import CodeOffset, Value, decode_value, encode_value
from .vm.state import Trap, TrapKind

# Interrupt opcodes.
RUN = 0x01
PAUSE = 0x02
STEP = 0x03
STEP_OVER = 0x04
ADD_BREAKPOINT = 0x05
REMOVE_BREAKPOINT = 0x06
DUMP = 0x07
RECEIVE_STATE = 0x08
PROXY_CALL = 0x09
MONITOR_PROXIES = 0x0A
PROXY_USE_CACHE = 0x0B
PROXY_NO_CACHE = 0x0C
UPDATE_MODULE = 0x0D
UPDATE_STACK_VALUE = 0x0E
UPDATE_GLOBAL = 0x0F
UPDATE_TABLE_ENTRY = 0x10
SET_POLICY = 0x11
PROXY_MOCK = 0x12

OP_NAMES = {
    RUN: "run", PAUSE: "pause", STEP: "step", STEP_OVER: "step-over",
    ADD_BREAKPOINT: "add-breakpoint", REMOVE_BREAKPOINT: "remove-breakpoint",
    DUMP: "dump", RECEIVE_STATE: "receive-state", PROXY_CALL: "proxy-call",
    MONITOR_PROXIES: "monitor-proxies", PROXY_USE_CACHE: "proxy-use-cache",
    PROXY_NO_CACHE: "proxy-no-cache", UPDATE_MODULE: "update-module",
    UPDATE_STACK_VALUE: "update-stack-value", UPDATE_GLOBAL: "update-global",
    UPDATE_TABLE_ENTRY: "update-table-entry", SET_POLICY: "set-policy",
    PROXY_MOCK: "proxy-mock",
}

# Response status bytes.
ST_OK = 0x00
ST_ERR = 0x01
ST_PUSH_SESSION = 0x02

# Error codes inside an error response.
E_MALFORMED = 0x01
E_MODULE_MISMATCH = 0x02
E_CAPACITY = 0x03
E_DECODE = 0x04
E_KIND_MISMATCH = 0x05
E_INDEX_RANGE = 0x06
E_IMMUTABLE_GLOBAL = 0x07
E_UNSUPPORTED = 0x08
E_BAD_STATE = 0x09
E_VALIDATION = 0x0A
E_NOT_AN_IMPORT = 0x0B
E_CACHE_EMPTY = 0x0C
E_CACHE_MISS = 0x0D
E_LINK = 0x0E
E_INTERNAL = 0x0F

# Dump request modes.
DUMP_FULL_SESSION = 0x00
DUMP_BASELINE = 0x01

# Breakpoint policy codes.
POLICY_PAUSE = 0x00
POLICY_SINGLE_STOP = 0x01
POLICY_REMOVE_AND_PROCEED = 0x02

_U32 = struct.Struct("<I")
_HDR = struct.Struct("<BI")


@dataclass(frozen=True)
class InterruptMessage:
    opcode: int
    payload: bytes = b""

    def encode(self) -> bytes:
        return _HDR.pack(self.opcode, len(self.payload)) + self.payload


@dataclass(frozen=True)
class Response:
    status: int
    payload: bytes = b""

    def encode(self) -> bytes:
        return _HDR.pack(self.status, len(self.payload)) + self.payload

    @property
    def ok(self) -> bool:
        return self.status == ST_OK


def decode_interrupt(body: bytes) -> InterruptMessage:
    if len(body) < 5:
        raise MalformedInterrupt("message shorter than its header")
    opcode, n = _HDR.unpack_from(body, 0)
    if len(body) != 5 + n:
        raise MalformedInterrupt("payload length disagrees with header")
    return InterruptMessage(opcode, body[5:])


def decode_response(body: bytes) -> Response:
    if len(body) < 5:
        raise DecodeError("response shorter than its header")
    status, n = _HDR.unpack_from(body, 0)
    if len(body) != 5 + n:
        raise DecodeError("response length disagrees with header")
    return Response(status, body[5:])


# --- payload builders / parsers ---

def error_response(code: int, message: str) -> Response:
    b = message.encode("utf-8")
    return Response(ST_ERR, bytes([code]) + struct.pack("<H", len(b)) + b)


def parse_error(payload: bytes) -> tuple[int, str]:
    if len(payload) < 3:
        raise DecodeError("truncated error payload")
    code = payload[0]
    n = struct.unpack_from("<H", payload, 1)[0]
    return code, payload[3:3 + n].decode("utf-8")


def ack_response(vm_status_code: int) -> Response:
    return Response(ST_OK, bytes([vm_status_code]))


def pack_code_offset(c: CodeOffset) -> bytes:
    return struct.pack("<II", c[0], c[1])


def parse_code_offset(payload: bytes) -> CodeOffset:
    if len(payload) != 8:
        raise MalformedInterrupt("expected an 8-byte code offset")
    f, o = struct.unpack("<II", payload)
    return (f, o)


def pack_dump_request(mode: int) -> bytes:
    return bytes([mode])


def parse_dump_request(payload: bytes) -> int:
    if len(payload) != 1 or payload[0] not in (DUMP_FULL_SESSION, DUMP_BASELINE):
        raise MalformedInterrupt("bad dump mode")
    return payload[0]


def pack_policy(code: int) -> bytes:
    return bytes([code])


def parse_policy(payload: bytes) -> int:
    if len(payload) != 1 or payload[0] not in (
            POLICY_PAUSE, POLICY_SINGLE_STOP, POLICY_REMOVE_AND_PROCEED):
        raise MalformedInterrupt("bad policy code")
    return payload[0]


def pack_func_list(indices: list[int]) -> bytes:
    return _U32.pack(len(indices)) + b"".join(_U32.pack(i) for i in indices)


def parse_func_list(payload: bytes) -> list[int]:
    if len(payload) < 4:
        raise MalformedInterrupt("truncated function list")
    n = _U32.unpack_from(payload, 0)[0]
    if len(payload) != 4 + 4 * n:
        raise MalformedInterrupt("function list length mismatch")
    return [_U32.unpack_from(payload, 4 + 4 * i)[0] for i in range(n)]


def pack_proxy_call(fidx: int, args: list[Value]) -> bytes:
    if len(args) > 255:
        raise ValueError("too many proxy arguments")
    return _U32.pack(fidx) + bytes([len(args)]) + b"".join(
        encode_value(v) for v in args)


def parse_proxy_call(payload: bytes) -> tuple[int, list[Value]]:
    if len(payload) < 5:
        raise MalformedInterrupt("truncated proxy call")
    fidx = _U32.unpack_from(payload, 0)[0]
    argc = payload[4]
    args = []
    pos = 5
    try:
        for _ in range(argc):
            v, pos = decode_value(payload, pos)
            args.append(v)
    except DecodeError as e:
        raise MalformedInterrupt(str(e)) from None
    if pos != len(payload):
        raise MalformedInterrupt("trailing bytes after proxy arguments")
    return fidx, args


RESULT_VALUE = 0x00
RESULT_TRAP = 0x01


def pack_proxy_reply(result: Value | Trap | None) -> bytes:
    if isinstance(result, Trap):
        msg = result.message.encode("utf-8")
        return (bytes([RESULT_TRAP, result.kind.value])
                + pack_code_offset(result.at)
                + struct.pack("<H", len(msg)) + msg)
    if result is None:
        return bytes([RESULT_VALUE, 0])
    return bytes([RESULT_VALUE, 1]) + encode_value(result)


def parse_proxy_reply(payload: bytes) -> Value | Trap | None:
    if not payload:
        raise DecodeError("empty proxy reply")
    if payload[0] == RESULT_TRAP:
        if len(payload) < 12:
            raise DecodeError("truncated trap record")
        kind = TrapKind(payload[1])
        at = struct.unpack_from("<II", payload, 2)
        n = struct.unpack_from("<H", payload, 10)[0]
        return Trap(kind, (at[0], at[1]), payload[12:12 + n].decode("utf-8"))
    if payload[0] == RESULT_VALUE:
        if len(payload) < 2:
            raise DecodeError("truncated proxy reply")
        if payload[1] == 0:
            return None
        v, pos = decode_value(payload, 2)
        if pos != len(payload):
            raise DecodeError("trailing bytes after proxy value")
        return v
    raise DecodeError("bad proxy reply tag")


EDIT_STACK_SLOT = 0x00
EDIT_LOCAL = 0x01


def pack_stack_edit(index: int, value: Value, frame: int | None = None) -> bytes:
    if frame is None:
        return bytes([EDIT_STACK_SLOT]) + _U32.pack(index) + encode_value(value)
    return (bytes([EDIT_LOCAL]) + _U32.pack(frame) + _U32.pack(index)
            + encode_value(value))


def parse_stack_edit(payload: bytes) -> tuple[int | None, int, Value]:
    """Returns (frame or None for a plain stack slot, index, value)."""
    try:
        if not payload:
            raise MalformedInterrupt("empty stack edit")
        if payload[0] == EDIT_STACK_SLOT:
            index = _U32.unpack_from(payload, 1)[0]
            v, pos = decode_value(payload, 5)
            frame = None
        elif payload[0] == EDIT_LOCAL:
            frame = _U32.unpack_from(payload, 1)[0]
            index = _U32.unpack_from(payload, 5)[0]
            v, pos = decode_value(payload, 9)
        else:
            raise MalformedInterrupt("bad stack edit tag")
        if pos != len(payload):
            raise MalformedInterrupt("trailing bytes in stack edit")
    except (struct.error, DecodeError) as e:
        raise MalformedInterrupt(str(e)) from None
    return frame, index, v


def pack_global_edit(index: int, value: Value) -> bytes:
    return _U32.pack(index) + encode_value(value)


def parse_global_edit(payload: bytes) -> tuple[int, Value]:
    try:
        index = _U32.unpack_from(payload, 0)[0]
        v, pos = decode_value(payload, 4)
    except (struct.error, DecodeError) as e:
        raise MalformedInterrupt(str(e)) from None
    if pos != len(payload):
        raise MalformedInterrupt("trailing bytes in global edit")
    return index, v


def pack_table_edit(index: int, func_index: int) -> bytes:
    return _U32.pack(index) + _U32.pack(func_index)


def parse_table_edit(payload: bytes) -> tuple[int, int]:
    if len(payload) != 8:
        raise MalformedInterrupt("table edit must be 8 bytes")
    return _U32.unpack_from(payload, 0)[0], _U32.unpack_from(payload, 4)[0]


def pack_mock(fidx: int, value: Value | None) -> bytes:
    if value is None:
        return _U32.pack(fidx) + b"\x00"
    return _U32.pack(fidx) + b"\x01" + encode_value(value)


def parse_mock(payload: bytes) -> tuple[int, Value | None]:
    try:
        fidx = _U32.unpack_from(payload, 0)[0]
        if len(payload) < 5:
            raise MalformedInterrupt("truncated mock payload")
        if payload[4] == 0:
            if len(payload) != 5:
                raise MalformedInterrupt("trailing bytes in mock payload")
            return fidx, None
        v, pos = decode_value(payload, 5)
        if pos != len(payload):
            raise MalformedInterrupt("trailing bytes in mock payload")
        return fidx, v
    except (struct.error, DecodeError) as e:
        raise MalformedInterrupt(str(e)) from None

"""Transferable execution snapshots and their wire protocol.

A session stream is one fixed-size sizing message followed by nine state
chunks in a fixed order; the last chunk's trailing byte is 0x01 to mark
the stream complete, every earlier chunk carries 0x00. The receiver can
pre-allocate from the sizing message before any chunk arrives.

Chunk order on the wire: pc, error counter, breakpoints, globals, table,
value stack, call stack, memory pages, module hash (terminal).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from .errors import BadState, CapacityExceeded, DecodeError, ModuleMismatch
from .values import CodeOffset, Value, decode_value, encode_value
from .vm.state import Frame, Status, VmState

_U32 = struct.Struct("<I")

# Chunk kind tags.
CHUNK_PC = 0x01
CHUNK_ERROR_COUNTER = 0x02
CHUNK_BREAKPOINTS = 0x03
CHUNK_VALUE_STACK = 0x04
CHUNK_CALL_STACK = 0x05
CHUNK_GLOBALS = 0x06
CHUNK_TABLE = 0x07
CHUNK_MEMORY_PAGES = 0x08
CHUNK_MODULE_HASH = 0x09

WIRE_ORDER = (
    CHUNK_PC, CHUNK_ERROR_COUNTER, CHUNK_BREAKPOINTS, CHUNK_GLOBALS,
    CHUNK_TABLE, CHUNK_VALUE_STACK, CHUNK_CALL_STACK, CHUNK_MEMORY_PAGES,
    CHUNK_MODULE_HASH,
)

PAGE_SIZE = 65536


@dataclass
class DebugSession:
    """Everything needed to resume the execution somewhere else."""

    pc: CodeOffset
    error_counter: CodeOffset | None
    breakpoints: set[CodeOffset]
    value_stack: list[Value]
    call_stack: list[Frame]
    globals: list[Value]
    memory_pages: bytes
    table: list[int]
    module_hash: bytes


@dataclass(frozen=True)
class MemMgmtMsg:
    """Sizing message sent ahead of the chunks for pre-allocation."""

    value_stack_len: int
    call_stack_len: int
    globals_len: int
    table_len: int
    memory_page_count: int

    def encode(self) -> bytes:
        return struct.pack("<5I", self.value_stack_len, self.call_stack_len,
                           self.globals_len, self.table_len,
                           self.memory_page_count)

    SIZE = 20

    @classmethod
    def decode(cls, buf: bytes, pos: int = 0) -> tuple["MemMgmtMsg", int]:
        if pos + cls.SIZE > len(buf):
            raise DecodeError("truncated sizing message")
        fields = struct.unpack_from("<5I", buf, pos)
        return cls(*fields), pos + cls.SIZE


@dataclass(frozen=True)
class StateChunk:
    kind: int
    payload: bytes
    done_flag: int  # 0x00 = more chunks follow, 0x01 = session complete

    def encode(self) -> bytes:
        return bytes([self.kind]) + _U32.pack(len(self.payload)) + self.payload \
            + bytes([self.done_flag])

    @classmethod
    def decode(cls, buf: bytes, pos: int) -> tuple["StateChunk", int]:
        if pos + 5 > len(buf):
            raise DecodeError("truncated chunk header")
        kind = buf[pos]
        length = _U32.unpack_from(buf, pos + 1)[0]
        end = pos + 5 + length + 1
        if end > len(buf):
            raise DecodeError("truncated chunk payload")
        payload = bytes(buf[pos + 5:pos + 5 + length])
        done = buf[end - 1]
        if done not in (0x00, 0x01):
            raise DecodeError(f"bad done flag 0x{done:02x}")
        return cls(kind, payload, done), end


@dataclass
class RemoteDump:
    """The minimal pre-existing dump: pc, call trace, breakpoints only."""

    pc: CodeOffset
    call_stack: list[tuple[int, CodeOffset | None]]
    breakpoints: set[CodeOffset]


def _enc_coff(c: CodeOffset) -> bytes:
    return struct.pack("<II", c[0], c[1])


def _dec_coff(buf: bytes, pos: int) -> tuple[CodeOffset, int]:
    if pos + 8 > len(buf):
        raise DecodeError("truncated code offset")
    f, o = struct.unpack_from("<II", buf, pos)
    return (f, o), pos + 8


def _enc_opt_coff(c: CodeOffset | None) -> bytes:
    if c is None:
        return b"\x00" + b"\x00" * 8
    return b"\x01" + _enc_coff(c)


def _dec_opt_coff(buf: bytes, pos: int) -> tuple[CodeOffset | None, int]:
    if pos + 9 > len(buf):
        raise DecodeError("truncated optional code offset")
    present = buf[pos]
    if present not in (0, 1):
        raise DecodeError("bad presence byte")
    c, end = _dec_coff(buf, pos + 1)
    return (c if present else None), end


def extract_session(s: VmState) -> DebugSession:
    """Copy the paused state out; the VM is left untouched."""
    if s.status not in (Status.PAUSED_AT_BREAKPOINT, Status.TRAPPED, Status.HALTED):
        raise BadState("can only extract from a paused, trapped, or halted VM")
    return DebugSession(
        pc=s.pc,
        error_counter=s.error_counter,
        breakpoints=set(s.breakpoints),
        value_stack=list(s.value_stack),
        call_stack=[Frame(f.func_index, f.return_pc, f.value_stack_base,
                          list(f.locals)) for f in s.call_stack],
        globals=list(s.globals),
        memory_pages=bytes(s.memory),
        table=list(s.table),
        module_hash=s.module_hash,
    )


def apply_session(s: VmState, d: DebugSession) -> VmState:
    """Adopt a session as the VM's state; leaves it paused, ready to resume."""
    if d.module_hash != s.module_hash:
        raise ModuleMismatch("session comes from a different module")
    if len(d.call_stack) > s.limits.max_call_stack:
        raise CapacityExceeded(
            f"session call stack {len(d.call_stack)} exceeds limit "
            f"{s.limits.max_call_stack}")
    if len(d.value_stack) > s.limits.max_value_stack:
        raise CapacityExceeded(
            f"session value stack {len(d.value_stack)} exceeds limit "
            f"{s.limits.max_value_stack}")
    for fr in d.call_stack:
        if fr.value_stack_base > len(d.value_stack):
            raise DecodeError("frame base beyond value stack")
        if not 0 <= fr.func_index < len(s.module.funcs):
            raise DecodeError("frame function index out of range")

    s.pc = d.pc
    s.error_counter = d.error_counter
    s.breakpoints = set(d.breakpoints)
    s.value_stack = list(d.value_stack)
    s.call_stack = [Frame(f.func_index, f.return_pc, f.value_stack_base,
                          list(f.locals)) for f in d.call_stack]
    s.globals = list(d.globals)
    s.memory = bytearray(d.memory_pages)
    s.table = list(d.table)
    s.trap = None
    s.just_resumed = False
    s.status = Status.PAUSED_AT_BREAKPOINT
    return s


def _chunk_payload(d: DebugSession, kind: int) -> bytes:
    if kind == CHUNK_PC:
        return _enc_coff(d.pc)
    if kind == CHUNK_ERROR_COUNTER:
        return _enc_opt_coff(d.error_counter)
    if kind == CHUNK_BREAKPOINTS:
        out = [_U32.pack(len(d.breakpoints))]
        out += [_enc_coff(c) for c in sorted(d.breakpoints)]
        return b"".join(out)
    if kind == CHUNK_GLOBALS:
        return _U32.pack(len(d.globals)) + b"".join(encode_value(v) for v in d.globals)
    if kind == CHUNK_TABLE:
        return _U32.pack(len(d.table)) + b"".join(_U32.pack(t) for t in d.table)
    if kind == CHUNK_VALUE_STACK:
        return _U32.pack(len(d.value_stack)) + b"".join(
            encode_value(v) for v in d.value_stack)
    if kind == CHUNK_CALL_STACK:
        parts = [_U32.pack(len(d.call_stack))]
        for f in d.call_stack:
            parts.append(_U32.pack(f.func_index))
            parts.append(_enc_opt_coff(f.return_pc))
            parts.append(_U32.pack(f.value_stack_base))
            parts.append(_U32.pack(len(f.locals)))
            parts += [encode_value(v) for v in f.locals]
        return b"".join(parts)
    if kind == CHUNK_MEMORY_PAGES:
        pages, rem = divmod(len(d.memory_pages), PAGE_SIZE)
        if rem:
            raise ValueError("memory is not a whole number of pages")
        return _U32.pack(pages) + d.memory_pages
    if kind == CHUNK_MODULE_HASH:
        if len(d.module_hash) != 32:
            raise ValueError("module hash must be 32 bytes")
        return d.module_hash
    raise AssertionError(kind)


def encode_session(d: DebugSession) -> tuple[MemMgmtMsg, list[StateChunk]]:
    mem = MemMgmtMsg(
        value_stack_len=len(d.value_stack),
        call_stack_len=len(d.call_stack),
        globals_len=len(d.globals),
        table_len=len(d.table),
        memory_page_count=len(d.memory_pages) // PAGE_SIZE,
    )
    chunks = []
    for kind in WIRE_ORDER:
        done = 0x01 if kind == WIRE_ORDER[-1] else 0x00
        chunks.append(StateChunk(kind, _chunk_payload(d, kind), done))
    return mem, chunks


def session_to_bytes(d: DebugSession) -> bytes:
    """The full stream: sizing message then every chunk, in order."""
    mem, chunks = encode_session(d)
    return mem.encode() + b"".join(c.encode() for c in chunks)


def _dec_values(buf: bytes, pos: int, count: int) -> tuple[list[Value], int]:
    out = []
    for _ in range(count):
        v, pos = decode_value(buf, pos)
        out.append(v)
    return out, pos


def split_stream(stream: bytes) -> tuple[MemMgmtMsg, list[StateChunk]]:
    """Frame-level split of a session stream, no interpretation."""
    mem, pos = MemMgmtMsg.decode(stream, 0)
    chunks = []
    while pos < len(stream):
        chunk, pos = StateChunk.decode(stream, pos)
        chunks.append(chunk)
    return mem, chunks


def decode_session(stream: bytes) -> DebugSession:
    """Inverse of session_to_bytes; rejects malformed or misordered streams."""
    mem, chunks = split_stream(stream)
    return session_from_chunks(mem, chunks)


def session_from_chunks(mem: MemMgmtMsg, chunks: list[StateChunk]) -> DebugSession:
    fields: dict[int, bytes] = {}
    order_pos = 0
    terminated = False
    for chunk in chunks:
        if terminated:
            raise DecodeError("data after terminal chunk")
        if order_pos >= len(WIRE_ORDER) or chunk.kind != WIRE_ORDER[order_pos]:
            if chunk.kind in fields:
                raise DecodeError(f"duplicate chunk kind {chunk.kind}")
            raise DecodeError(f"chunk kind {chunk.kind} out of order")
        fields[chunk.kind] = chunk.payload
        order_pos += 1
        if chunk.done_flag == 0x01:
            if order_pos != len(WIRE_ORDER):
                raise DecodeError("terminal flag before final chunk")
            terminated = True
    if not terminated:
        raise DecodeError("unterminated session")

    pc, _ = _dec_coff(fields[CHUNK_PC], 0)
    ec, _ = _dec_opt_coff(fields[CHUNK_ERROR_COUNTER], 0)

    buf = fields[CHUNK_BREAKPOINTS]
    n = _U32.unpack_from(buf, 0)[0]
    p = 4
    bps = set()
    for _ in range(n):
        c, p = _dec_coff(buf, p)
        bps.add(c)

    buf = fields[CHUNK_GLOBALS]
    n = _U32.unpack_from(buf, 0)[0]
    if n != mem.globals_len:
        raise DecodeError("globals length disagrees with sizing message")
    globals_, _ = _dec_values(buf, 4, n)

    buf = fields[CHUNK_TABLE]
    n = _U32.unpack_from(buf, 0)[0]
    if n != mem.table_len:
        raise DecodeError("table length disagrees with sizing message")
    table = [_U32.unpack_from(buf, 4 + 4 * i)[0] for i in range(n)]

    buf = fields[CHUNK_VALUE_STACK]
    n = _U32.unpack_from(buf, 0)[0]
    if n != mem.value_stack_len:
        raise DecodeError("value stack length disagrees with sizing message")
    value_stack, _ = _dec_values(buf, 4, n)

    buf = fields[CHUNK_CALL_STACK]
    n = _U32.unpack_from(buf, 0)[0]
    if n != mem.call_stack_len:
        raise DecodeError("call stack length disagrees with sizing message")
    p = 4
    frames = []
    for _ in range(n):
        if p + 4 > len(buf):
            raise DecodeError("truncated frame")
        func_index = _U32.unpack_from(buf, p)[0]
        ret, p2 = _dec_opt_coff(buf, p + 4)
        base = _U32.unpack_from(buf, p2)[0]
        nlocals = _U32.unpack_from(buf, p2 + 4)[0]
        locals_, p = _dec_values(buf, p2 + 8, nlocals)
        frames.append(Frame(func_index, ret, base, locals_))

    buf = fields[CHUNK_MEMORY_PAGES]
    pages = _U32.unpack_from(buf, 0)[0]
    if pages != mem.memory_page_count:
        raise DecodeError("page count disagrees with sizing message")
    memory = buf[4:]
    if len(memory) != pages * PAGE_SIZE:
        raise DecodeError("memory chunk length disagrees with page count")

    digest = fields[CHUNK_MODULE_HASH]
    if len(digest) != 32:
        raise DecodeError("module hash must be 32 bytes")

    return DebugSession(pc, ec, bps, value_stack, frames, globals_,
                        memory, table, digest)


def session_size_bytes(d: DebugSession) -> int:
    """Encoded size, sizing message and chunk framing included."""
    return len(session_to_bytes(d))


def extract_dump(s: VmState) -> RemoteDump:
    """The baseline projection of the current state."""
    return RemoteDump(
        pc=s.pc,
        call_stack=[(f.func_index, f.return_pc) for f in s.call_stack],
        breakpoints=set(s.breakpoints),
    )


def dump_to_bytes(r: RemoteDump) -> bytes:
    parts = [_enc_coff(r.pc), _U32.pack(len(r.call_stack))]
    for func_index, ret in r.call_stack:
        parts.append(_U32.pack(func_index))
        parts.append(_enc_opt_coff(ret))
    parts.append(_U32.pack(len(r.breakpoints)))
    parts += [_enc_coff(c) for c in sorted(r.breakpoints)]
    return b"".join(parts)


def dump_from_bytes(buf: bytes) -> RemoteDump:
    pc, pos = _dec_coff(buf, 0)
    if pos + 4 > len(buf):
        raise DecodeError("truncated dump")
    n = _U32.unpack_from(buf, pos)[0]
    pos += 4
    frames = []
    for _ in range(n):
        if pos + 4 > len(buf):
            raise DecodeError("truncated dump frame")
        func_index = _U32.unpack_from(buf, pos)[0]
        ret, pos = _dec_opt_coff(buf, pos + 4)
        frames.append((func_index, ret))
    if pos + 4 > len(buf):
        raise DecodeError("truncated dump breakpoints")
    nb = _U32.unpack_from(buf, pos)[0]
    pos += 4
    bps = set()
    for _ in range(nb):
        c, pos = _dec_coff(buf, pos)
        bps.add(c)
    if pos != len(buf):
        raise DecodeError("trailing bytes after dump")
    return RemoteDump(pc, frames, bps)


def dump_size_bytes(r: RemoteDump) -> int:
    return len(dump_to_bytes(r))

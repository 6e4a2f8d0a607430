"""Binary module form: length-prefixed sections mirroring SourceModule.

Layout (everything little-endian):

    magic "OTMB", version u8
    types:   u32 count, then u8 nparams + kinds, u8 nresults + kinds
    funcs:   u32 count, then u8 flags(bit0=import), u16+name,
             u32 type_index, then either u16+ns u16+sym (import) or
             u32 nlocals + kinds, u32 ninstrs + instructions
    globals: u32 count, then u8 kind, u8 mut, u16+name, raw payload
    table:   u32 count + u32 entries
    memory:  u32 pages
    exports: u32 count, then u16+name, u32 func index

An instruction is u8 opcode, its immediate (shape per opcode; ``if``
carries u32 target + u8 result kind or 0), then u32 source line.
"""

from __future__ import annotations

import hashlib
import struct

from ..errors import DecodeError
from ..values import KIND_WIDTH, Value, _PACKERS
from .ast import (IF, IMMEDIATE, OP_NAMES, FuncDef, Instr, SourceModule,
                  TypeSig, build_line_table)

MAGIC = b"OTMB"
VERSION = 1

_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_I32 = struct.Struct("<i")
_I64 = struct.Struct("<q")
_F32 = struct.Struct("<f")


class _Writer:
    def __init__(self):
        self.parts: list[bytes] = []

    def u8(self, n: int):
        self.parts.append(bytes([n]))

    def u16(self, n: int):
        self.parts.append(_U16.pack(n))

    def u32(self, n: int):
        self.parts.append(_U32.pack(n))

    def raw(self, b: bytes):
        self.parts.append(b)

    def name(self, s: str):
        b = s.encode("utf-8")
        self.u16(len(b))
        self.raw(b)

    def getvalue(self) -> bytes:
        return b"".join(self.parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def _take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise DecodeError("truncated module blob")
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u8(self) -> int:
        return self._take(1)[0]

    def u16(self) -> int:
        return _U16.unpack(self._take(2))[0]

    def u32(self) -> int:
        return _U32.unpack(self._take(4))[0]

    def name(self) -> str:
        n = self.u16()
        return self._take(n).decode("utf-8")

    def done(self) -> bool:
        return self.pos == len(self.buf)


def _encode_instr(w: _Writer, ins: Instr) -> None:
    w.u8(ins.op)
    shape = IMMEDIATE.get(ins.op)
    if ins.op == IF:
        target, result = ins.imm
        w.u32(target)
        w.u8(result if result is not None else 0)
    elif shape == "u32":
        w.u32(ins.imm)
    elif shape == "i32":
        w.raw(_I32.pack(ins.imm))
    elif shape == "i64":
        w.raw(_I64.pack(ins.imm))
    elif shape == "f32":
        w.raw(_F32.pack(ins.imm))
    w.u32(ins.line)


def _decode_instr(r: _Reader) -> Instr:
    op = r.u8()
    if op not in OP_NAMES:
        raise DecodeError(f"unknown opcode 0x{op:02x} in blob")
    shape = IMMEDIATE.get(op)
    imm = None
    if op == IF:
        target = r.u32()
        result = r.u8()
        imm = (target, result if result else None)
    elif shape == "u32":
        imm = r.u32()
    elif shape == "i32":
        imm = _I32.unpack(r._take(4))[0]
    elif shape == "i64":
        imm = _I64.unpack(r._take(8))[0]
    elif shape == "f32":
        imm = _F32.unpack(r._take(4))[0]
    line = r.u32()
    return Instr(op, imm, line)


def encode_module(m: SourceModule) -> bytes:
    w = _Writer()
    w.raw(MAGIC)
    w.u8(VERSION)

    w.u32(len(m.types))
    for t in m.types:
        w.u8(len(t.params))
        w.raw(bytes(t.params))
        w.u8(len(t.results))
        w.raw(bytes(t.results))

    w.u32(len(m.funcs))
    for f in m.funcs:
        w.u8(1 if f.is_import else 0)
        w.name(f.name)
        w.u32(f.type_index)
        if f.is_import:
            ns, sym = f.import_symbol
            w.name(ns)
            w.name(sym)
        else:
            w.u32(len(f.locals))
            w.raw(bytes(f.locals))
            w.u32(len(f.body))
            for ins in f.body:
                _encode_instr(w, ins)

    w.u32(len(m.globals))
    for (kind, mutable, init), gname in zip(m.globals, m.global_names):
        w.u8(kind)
        w.u8(1 if mutable else 0)
        w.name(gname)
        w.raw(_PACKERS[kind].pack(init.num))

    w.u32(len(m.table))
    for t in m.table:
        w.u32(t)

    w.u32(m.memory_pages)

    w.u32(len(m.exports))
    for name, fi in m.exports.items():
        w.name(name)
        w.u32(fi)

    return w.getvalue()


def decode_module(blob: bytes) -> SourceModule:
    r = _Reader(blob)
    if r._take(4) != MAGIC:
        raise DecodeError("bad module magic")
    if r.u8() != VERSION:
        raise DecodeError("unsupported module version")

    m = SourceModule()

    for _ in range(r.u32()):
        params = tuple(r._take(r.u8()))
        results = tuple(r._take(r.u8()))
        if len(results) > 1:
            raise DecodeError("type with more than one result")
        for k in params + results:
            if k not in KIND_WIDTH:
                raise DecodeError(f"unknown value kind 0x{k:02x}")
        m.types.append(TypeSig(params, results))

    for _ in range(r.u32()):
        flags = r.u8()
        name = r.name()
        type_index = r.u32()
        if flags & 1:
            ns = r.name()
            sym = r.name()
            m.funcs.append(FuncDef(name, type_index, (), [], True, (ns, sym)))
        else:
            local_kinds = tuple(r._take(r.u32()))
            for k in local_kinds:
                if k not in KIND_WIDTH:
                    raise DecodeError(f"unknown value kind 0x{k:02x}")
            body = [_decode_instr(r) for _ in range(r.u32())]
            m.funcs.append(FuncDef(name, type_index, local_kinds, body))

    for _ in range(r.u32()):
        kind = r.u8()
        if kind not in KIND_WIDTH:
            raise DecodeError(f"unknown value kind 0x{kind:02x}")
        mutable = bool(r.u8())
        gname = r.name()
        num = _PACKERS[kind].unpack(r._take(KIND_WIDTH[kind]))[0]
        m.globals.append((kind, mutable, Value(kind, num)))
        m.global_names.append(gname)

    m.table = [r.u32() for _ in range(r.u32())]
    m.memory_pages = r.u32()
    for _ in range(r.u32()):
        name = r.name()
        m.exports[name] = r.u32()

    if not r.done():
        raise DecodeError("trailing bytes after module blob")
    build_line_table(m)
    return m


def module_hash(blob: bytes) -> bytes:
    """32-byte identity of a module's binary form."""
    return hashlib.sha256(blob).digest()

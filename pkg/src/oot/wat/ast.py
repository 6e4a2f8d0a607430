"""Module structure produced by the text frontend.

Structured control is already lowered here: function bodies are flat
instruction lists in which ``if``/``else``/``br`` carry absolute jump
targets, so the interpreter is a plain dispatch loop and a program
counter is just (function index, offset).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..values import CodeOffset, Value

# Instruction opcodes (also the blob encoding bytes).
NOP = 0x00
DROP = 0x01
RETURN = 0x02
END = 0x03
BLOCK = 0x04
LOOP = 0x05
IF = 0x06          # imm: jump target when condition is zero
ELSE = 0x07        # imm: jump target past the matching end
BR = 0x08          # imm: absolute target offset
CALL = 0x09        # imm: function index
I32_CONST = 0x0A   # imm: i32
I64_CONST = 0x0B   # imm: i64
F32_CONST = 0x0C   # imm: f32
LOCAL_GET = 0x0D   # imm: local index
LOCAL_SET = 0x0E
GLOBAL_GET = 0x0F
GLOBAL_SET = 0x10
I32_ADD = 0x11
I32_SUB = 0x12
I32_EQ = 0x13
I64_SUB = 0x14
I64_GT_S = 0x15
F32_ADD = 0x16
F32_DIV = 0x17
F32_EQ = 0x18
I32_LOAD = 0x19
I32_STORE = 0x1A

OP_NAMES = {
    NOP: "nop", DROP: "drop", RETURN: "return", END: "end",
    BLOCK: "block", LOOP: "loop", IF: "if", ELSE: "else", BR: "br",
    CALL: "call",
    I32_CONST: "i32.const", I64_CONST: "i64.const", F32_CONST: "f32.const",
    LOCAL_GET: "local.get", LOCAL_SET: "local.set",
    GLOBAL_GET: "global.get", GLOBAL_SET: "global.set",
    I32_ADD: "i32.add", I32_SUB: "i32.sub", I32_EQ: "i32.eq",
    I64_SUB: "i64.sub", I64_GT_S: "i64.gt_s",
    F32_ADD: "f32.add", F32_DIV: "f32.div", F32_EQ: "f32.eq",
    I32_LOAD: "i32.load", I32_STORE: "i32.store",
}
OP_BY_NAME = {v: k for k, v in OP_NAMES.items()}

# Immediate shapes, keyed by opcode: "u32" index/target, "i32"/"i64"/"f32"
# literal, or None.
IMMEDIATE = {
    IF: "u32", ELSE: "u32", BR: "u32", CALL: "u32",
    I32_CONST: "i32", I64_CONST: "i64", F32_CONST: "f32",
    LOCAL_GET: "u32", LOCAL_SET: "u32", GLOBAL_GET: "u32", GLOBAL_SET: "u32",
}

NO_IMMEDIATE_OPS = frozenset(op for op in OP_NAMES if op not in IMMEDIATE)


class Instr:
    """One lowered instruction: opcode, optional immediate, source line."""

    __slots__ = ("op", "imm", "line")

    def __init__(self, op: int, imm=None, line: int = 0):
        self.op = op
        self.imm = imm
        self.line = line

    def __repr__(self) -> str:
        if self.imm is None:
            return f"{OP_NAMES[self.op]} @{self.line}"
        return f"{OP_NAMES[self.op]} {self.imm} @{self.line}"

    def __eq__(self, other) -> bool:
        if not isinstance(other, Instr):
            return NotImplemented
        return self.op == other.op and self.imm == other.imm and self.line == other.line

    def __hash__(self) -> int:
        return hash((self.op, self.imm, self.line))


@dataclass(frozen=True)
class TypeSig:
    """Function signature; at most one result."""

    params: tuple[int, ...]
    results: tuple[int, ...]

    def __post_init__(self):
        assert len(self.results) <= 1


@dataclass
class FuncDef:
    name: str                  # bare symbol without the leading $; may be ""
    type_index: int
    locals: tuple[int, ...]    # declared locals, params excluded
    body: list[Instr]
    is_import: bool = False
    import_symbol: tuple[str, str] | None = None  # (namespace, name)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FuncDef):
            return NotImplemented
        return (self.name == other.name and self.type_index == other.type_index
                and self.locals == other.locals and self.body == other.body
                and self.is_import == other.is_import
                and self.import_symbol == other.import_symbol)


@dataclass
class SourceModule:
    types: list[TypeSig] = field(default_factory=list)
    funcs: list[FuncDef] = field(default_factory=list)
    globals: list[tuple[int, bool, Value]] = field(default_factory=list)  # (kind, mutable, init)
    global_names: list[str] = field(default_factory=list)
    table: list[int] = field(default_factory=list)
    memory_pages: int = 0
    exports: dict[str, int] = field(default_factory=dict)
    line_table: dict[int, list[CodeOffset]] = field(default_factory=dict, compare=False)

    PAGE_SIZE = 65536

    def func_index(self, name: str) -> int | None:
        for i, f in enumerate(self.funcs):
            if f.name == name:
                return i
        return None

    def sig_of(self, func_index: int) -> TypeSig:
        return self.types[self.funcs[func_index].type_index]


def build_line_table(m: SourceModule) -> None:
    """Populate line -> [(func, offset), ...], sorted, covering every instruction."""
    table: dict[int, list[CodeOffset]] = {}
    for fi, f in enumerate(m.funcs):
        for off, ins in enumerate(f.body):
            table.setdefault(ins.line, []).append((fi, off))
    for locs in table.values():
        locs.sort()
    m.line_table = table


def structurally_equal(a: SourceModule, b: SourceModule) -> bool:
    """Equality that ignores source line numbers (print/reparse round-trips)."""

    def strip(m: SourceModule):
        return (
            m.types,
            [
                (f.name, f.type_index, f.locals,
                 [(i.op, i.imm) for i in f.body], f.is_import, f.import_symbol)
                for f in m.funcs
            ],
            m.globals, m.global_names, m.table, m.memory_pages, m.exports,
        )

    return strip(a) == strip(b)

"""Abstract-stack type checking for lowered modules.

Each function body is simulated over value kinds. Branch rules are
stricter than general WebAssembly: a ``br`` may only target a block or
loop whose entry stack height equals the height at the branch, which is
what makes plain-jump lowering sound.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..values import F32 as F32_KIND
from ..values import I32, KIND_NAMES
from ..values import I64 as I64_KIND
from .ast import (BLOCK, BR, CALL, DROP, ELSE, END, F32_ADD, F32_CONST,
                  F32_DIV, F32_EQ, GLOBAL_GET, GLOBAL_SET, I32_ADD, I32_CONST,
                  I32_EQ, I32_LOAD, I32_STORE, I32_SUB, I64_CONST, I64_GT_S,
                  I64_SUB, IF, LOCAL_GET, LOCAL_SET, LOOP, NOP, RETURN,
                  SourceModule)


@dataclass(frozen=True)
class Finding:
    func_index: int | None
    offset: int | None
    message: str

    def __str__(self) -> str:
        where = "module" if self.func_index is None else f"func {self.func_index}"
        if self.offset is not None:
            where += f" @{self.offset}"
        return f"{where}: {self.message}"


@dataclass
class ValidationReport:
    findings: list[Finding]

    @property
    def ok(self) -> bool:
        return not self.findings

    def __bool__(self) -> bool:
        return self.ok


_BINOPS = {
    I32_ADD: (I32, I32, I32),
    I32_SUB: (I32, I32, I32),
    I32_EQ: (I32, I32, I32),
    I64_SUB: (I64_KIND, I64_KIND, I64_KIND),
    I64_GT_S: (I64_KIND, I64_KIND, I32),
    F32_ADD: (F32_KIND, F32_KIND, F32_KIND),
    F32_DIV: (F32_KIND, F32_KIND, F32_KIND),
    F32_EQ: (F32_KIND, F32_KIND, I32),
}


class _Ctrl:
    __slots__ = ("kind", "entry_height", "result", "dead")

    def __init__(self, kind, entry_height, result):
        self.kind = kind
        self.entry_height = entry_height
        self.result = result
        self.dead = False


def _check_func(m: SourceModule, fi: int, findings: list[Finding]) -> None:
    f = m.funcs[fi]
    sig = m.types[f.type_index]
    local_kinds = tuple(sig.params) + tuple(f.locals)
    stack: list[int] = []
    ctrl: list[_Ctrl] = []
    dead = False

    def fail(off: int, msg: str) -> None:
        findings.append(Finding(fi, off, msg))

    def pop(off: int, want: int | None) -> int | None:
        if dead:
            return want
        floor = ctrl[-1].entry_height if ctrl else 0
        if len(stack) <= floor - 1 or not stack:
            fail(off, "stack underflow")
            return want
        got = stack.pop()
        if want is not None and got != want:
            fail(off, "operand kind mismatch: expected "
                 f"{KIND_NAMES[want]}, found {KIND_NAMES[got]}")
        return got

    def push(kind: int) -> None:
        if not dead:
            stack.append(kind)

    for off, ins in enumerate(f.body):
        op = ins.op
        if op == NOP:
            pass
        elif op == DROP:
            pop(off, None)
        elif op in _BINOPS:
            a, b, r = _BINOPS[op]
            pop(off, b)
            pop(off, a)
            push(r)
        elif op == I32_CONST:
            push(I32)
        elif op == I64_CONST:
            push(I64_KIND)
        elif op == F32_CONST:
            push(F32_KIND)
        elif op in (LOCAL_GET, LOCAL_SET):
            if not 0 <= ins.imm < len(local_kinds):
                fail(off, f"local index {ins.imm} out of range")
                kind = None
            else:
                kind = local_kinds[ins.imm]
            if op == LOCAL_GET:
                push(kind if kind is not None else I32)
            else:
                pop(off, kind)
        elif op in (GLOBAL_GET, GLOBAL_SET):
            if not 0 <= ins.imm < len(m.globals):
                fail(off, f"global index {ins.imm} out of range")
                continue
            kind, mutable, _ = m.globals[ins.imm]
            if op == GLOBAL_GET:
                push(kind)
            else:
                if not mutable:
                    fail(off, "immutable global write")
                pop(off, kind)
        elif op == I32_LOAD:
            pop(off, I32)
            push(I32)
        elif op == I32_STORE:
            pop(off, I32)
            pop(off, I32)
        elif op == CALL:
            if not 0 <= ins.imm < len(m.funcs):
                fail(off, f"call target {ins.imm} out of range")
                continue
            callee = m.types[m.funcs[ins.imm].type_index]
            for p in reversed(callee.params):
                pop(off, p)
            for r in callee.results:
                push(r)
        elif op == BLOCK:
            ctrl.append(_Ctrl("block", len(stack), None))
            ctrl[-1].dead = dead
        elif op == LOOP:
            ctrl.append(_Ctrl("loop", len(stack), None))
            ctrl[-1].dead = dead
        elif op == IF:
            target, result = ins.imm
            pop(off, I32)
            if not 0 <= target <= len(f.body):
                fail(off, f"if target {target} out of range")
            c = _Ctrl("if", len(stack), result)
            c.dead = dead
            ctrl.append(c)
        elif op == ELSE:
            if not ctrl or ctrl[-1].kind != "if":
                fail(off, "else without if")
                continue
            c = ctrl[-1]
            if not 0 <= ins.imm <= len(f.body):
                fail(off, f"else target {ins.imm} out of range")
            if not dead:
                want = [c.result] if c.result is not None else []
                if stack[c.entry_height:] != want:
                    fail(off, "then branch does not leave the declared result")
            del stack[c.entry_height:]
            c.kind = "else"
            dead = c.dead
        elif op == END:
            if not ctrl:
                fail(off, "end without open control frame")
                continue
            c = ctrl.pop()
            if c.kind == "if" and c.result is not None:
                fail(off, "if with result needs an else branch")
            if not dead:
                want = [c.result] if c.result is not None else []
                if stack[c.entry_height:] != want:
                    fail(off, "branch does not leave the declared result")
            del stack[c.entry_height:]
            if c.result is not None:
                stack.append(c.result)
            dead = c.dead
        elif op == BR:
            if not 0 <= ins.imm <= len(f.body):
                fail(off, f"branch target {ins.imm} out of range")
            if not dead and ctrl:
                if len(stack) != ctrl[-1].entry_height:
                    fail(off, "branch stack height mismatch")
            elif not dead and not ctrl:
                fail(off, "br outside any block or loop")
            dead = True
        elif op == RETURN:
            if not dead:
                for r in reversed(sig.results):
                    pop(off, r)
            dead = True
        else:
            fail(off, f"unknown opcode 0x{op:02x}")

    if ctrl:
        fail(len(f.body), "unclosed control frame at end of body")
    elif not dead:
        if len(stack) != len(sig.results):
            fail(len(f.body), "function body does not leave exactly its result")
        else:
            for want, got in zip(sig.results, stack):
                if want != got:
                    fail(len(f.body), "operand kind mismatch: result of wrong kind")


def validate_module(m: SourceModule) -> ValidationReport:
    """Check the whole module; an empty report means it is well-typed."""
    findings: list[Finding] = []

    for fi, f in enumerate(m.funcs):
        if not 0 <= f.type_index < len(m.types):
            findings.append(Finding(fi, None, "type index out of range"))
            continue
        if f.is_import:
            if f.body:
                findings.append(Finding(fi, None, "import with a body"))
            continue
        _check_func(m, fi, findings)

    for i, t in enumerate(m.table):
        if not 0 <= t < len(m.funcs):
            findings.append(Finding(None, i, f"table entry {t} out of range"))
    for name, fi in m.exports.items():
        if not 0 <= fi < len(m.funcs):
            findings.append(Finding(None, None, f"export '{name}' out of range"))
    for gi, (kind, _, init) in enumerate(m.globals):
        if init.kind != kind:
            findings.append(Finding(None, gi, "global init kind mismatch"))

    return ValidationReport(findings)

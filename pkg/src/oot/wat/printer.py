"""Render a lowered module back to parseable WAT text.

Control constructs are re-folded from the block/loop/if markers left in
the flat stream; everything else prints as plain instructions. Reparsing
the output yields a structurally equal module (source lines aside).
"""

from __future__ import annotations

from ..values import F32, KIND_NAMES
from .ast import (BLOCK, BR, CALL, ELSE, END, F32_CONST, GLOBAL_GET,
                  GLOBAL_SET, IF, IMMEDIATE, LOOP, OP_NAMES, FuncDef,
                  SourceModule)


def _fmt_f32(x: float) -> str:
    if x != x:
        return "nan"
    if x == float("inf"):
        return "inf"
    if x == float("-inf"):
        return "-inf"
    return repr(x)


def _func_ref(m: SourceModule, idx: int) -> str:
    name = m.funcs[idx].name
    return f"${name}" if name else str(idx)


def _global_ref(m: SourceModule, idx: int) -> str:
    name = m.global_names[idx]
    return f"${name}" if name else str(idx)


class _BodyPrinter:
    def __init__(self, m: SourceModule, f: FuncDef):
        self.m = m
        self.body = f.body
        self.lines: list[str] = []
        # reconstruction stack: (construct kind, br target) innermost last
        self.frames: list[tuple[str, int]] = []

    def _plain(self, ins) -> str:
        name = OP_NAMES[ins.op]
        if ins.op == CALL:
            return f"{name} {_func_ref(self.m, ins.imm)}"
        if ins.op in (GLOBAL_GET, GLOBAL_SET):
            return f"{name} {_global_ref(self.m, ins.imm)}"
        if ins.op == F32_CONST:
            return f"{name} {_fmt_f32(ins.imm)}"
        if ins.op == BR:
            for depth, (_, target) in enumerate(reversed(self.frames)):
                if target == ins.imm:
                    return f"br {depth}"
            raise ValueError(f"br target {ins.imm} matches no enclosing label")
        if ins.op in IMMEDIATE:
            return f"{name} {ins.imm}"
        return name

    def render(self, indent: str) -> list[str]:
        pos = 0
        while pos < len(self.body):
            pos = self._render_one(pos, indent)
        return self.lines

    def _render_one(self, pos: int, indent: str) -> int:
        ins = self.body[pos]
        op = ins.op
        if op == BLOCK or op == LOOP:
            opener = "block" if op == BLOCK else "loop"
            end = self._matching_end(pos)
            target = end + 1 if op == BLOCK else pos
            self.lines.append(f"{indent}({opener}")
            self.frames.append((opener, target))
            inner = pos + 1
            while inner < end:
                inner = self._render_one(inner, indent + "  ")
            self.frames.pop()
            self.lines[-1] += ")"
            return end + 1
        if op == IF:
            target, result = ins.imm
            end = self._matching_end(pos)
            head = "(if" if result is None else f"(if (result {KIND_NAMES[result]})"
            self.lines.append(f"{indent}{head}")
            self.frames.append(("if", end + 1))
            has_else = target <= end and self.body[target - 1].op == ELSE
            then_end = target - 1 if has_else else end
            self.lines.append(f"{indent}  (then")
            inner = pos + 1
            while inner < then_end:
                inner = self._render_one(inner, indent + "    ")
            self.lines[-1] += ")"
            if has_else:
                self.lines.append(f"{indent}  (else")
                inner = target
                while inner < end:
                    inner = self._render_one(inner, indent + "    ")
                self.lines[-1] += ")"
            self.frames.pop()
            self.lines[-1] += ")"
            return end + 1
        self.lines.append(indent + self._plain(ins))
        return pos + 1

    def _matching_end(self, open_pos: int) -> int:
        depth = 0
        for i in range(open_pos, len(self.body)):
            op = self.body[i].op
            if op in (BLOCK, LOOP, IF):
                depth += 1
            elif op == END:
                depth -= 1
                if depth == 0:
                    return i
        raise ValueError("unterminated control construct in body")


def print_module(m: SourceModule) -> str:
    out: list[str] = ["(module"]
    for i, t in enumerate(m.types):
        params = " ".join(KIND_NAMES[k] for k in t.params)
        results = " ".join(KIND_NAMES[k] for k in t.results)
        out.append(f"  (type (func (param {params}) (result {results})))"
                   .replace("param )", "param)").replace("result )", "result)"))
    for f in m.funcs:
        if f.is_import:
            ns, sym = f.import_symbol
            name = f" ${f.name}" if f.name else ""
            out.append(f'  (import "{ns}" "{sym}" (func{name} (type {f.type_index})))')
    if m.memory_pages:
        out.append(f"  (memory {m.memory_pages})")
    if m.table:
        refs = " ".join(_func_ref(m, t) for t in m.table)
        out.append(f"  (table funcref (elem {refs}))")
    for (kind, mutable, init), gname in zip(m.globals, m.global_names):
        tyname = KIND_NAMES[kind]
        ty = f"(mut {tyname})" if mutable else tyname
        lit = _fmt_f32(init.num) if kind == F32 else str(init.num)
        name = f" ${gname}" if gname else ""
        out.append(f"  (global{name} {ty} ({tyname}.const {lit}))")
    for name, fi in m.exports.items():
        out.append(f'  (export "{name}" (func {_func_ref(m, fi)}))')
    for f in m.funcs:
        if f.is_import:
            continue
        name = f" ${f.name}" if f.name else ""
        out.append(f"  (func{name} (type {f.type_index})")
        if f.locals:
            out.append("    (local " + " ".join(KIND_NAMES[k] for k in f.locals) + ")")
        out.extend(_BodyPrinter(m, f).render("    "))
        out[-1] += ")"
    out[-1] += ")"
    return "\n".join(out) + "\n"

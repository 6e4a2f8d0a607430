"""WAT-subset frontend: parse, validate, print, encode, line mapping."""

from __future__ import annotations

from ..errors import NoCodeAtLine
from ..values import CodeOffset
from .ast import (Instr, SourceModule, TypeSig, build_line_table,
                  structurally_equal)
from .blob import decode_module, encode_module, module_hash
from .parser import parse_module
from .printer import print_module
from .validator import Finding, ValidationReport, validate_module

__all__ = [
    "Instr", "SourceModule", "TypeSig", "Finding", "ValidationReport",
    "parse_module", "validate_module", "encode_module", "decode_module",
    "module_hash", "print_module", "resolve_breakpoint", "build_line_table",
    "structurally_equal",
]


def resolve_breakpoint(m: SourceModule, line: int) -> CodeOffset:
    """Code location of the first instruction on a 1-based source line."""
    locs = m.line_table.get(line)
    if not locs:
        raise NoCodeAtLine(f"no instruction on line {line}")
    return locs[0]

"""Interpreter state: frames, traps, limits, host primitives."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

from ..values import CodeOffset, Value
from ..wat.ast import SourceModule, TypeSig


class Status(enum.Enum):
    RUNNING = 0
    PAUSED_AT_BREAKPOINT = 1
    TRAPPED = 2
    HALTED = 3


class TrapKind(enum.Enum):
    DIVISION_BY_ZERO = 0
    OUT_OF_BOUNDS_MEMORY = 1
    STACK_EXHAUSTED = 2
    UNDEFINED_TABLE_ENTRY = 3
    HOST_ERROR = 4


@dataclass(frozen=True)
class Trap:
    kind: TrapKind
    at: CodeOffset
    message: str = ""


class HostTrap(Exception):
    """Raised by a host primitive to fault the calling instruction."""

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


@dataclass(frozen=True)
class StackLimits:
    max_value_stack: int = 16384
    max_call_stack: int = 4096


@dataclass(frozen=True)
class HostFunc:
    """A bound primitive: declared signature plus the implementation.

    The callable receives the argument values in declaration order and
    returns a Value (or None for a void result); it may raise HostTrap.
    """

    sig: TypeSig
    fn: Callable[[list[Value]], Value | None]


# (namespace, name) -> HostFunc for every import the module declares.
PrimitiveTable = dict[tuple[str, str], HostFunc]


class Frame:
    """One call-stack entry."""

    __slots__ = ("func_index", "return_pc", "value_stack_base", "locals")

    def __init__(self, func_index: int, return_pc: CodeOffset | None,
                 value_stack_base: int, locals: list[Value]):
        self.func_index = func_index
        self.return_pc = return_pc
        self.value_stack_base = value_stack_base
        self.locals = locals

    def __repr__(self) -> str:
        return (f"Frame(func={self.func_index}, ret={self.return_pc}, "
                f"base={self.value_stack_base}, locals={self.locals})")

    def __eq__(self, other) -> bool:
        if not isinstance(other, Frame):
            return NotImplemented
        return (self.func_index == other.func_index
                and self.return_pc == other.return_pc
                and self.value_stack_base == other.value_stack_base
                and self.locals == other.locals)


@dataclass
class VmState:
    """Full interpreter state for one module instance.

    Owned by exactly one execution context at a time; handlers and the
    dispatch loop alternate on it, never run concurrently.
    """

    module: SourceModule
    pc: CodeOffset
    value_stack: list[Value]
    call_stack: list[Frame]
    globals: list[Value]
    memory: bytearray
    table: list[int]
    breakpoints: set[CodeOffset] = field(default_factory=set)
    error_counter: CodeOffset | None = None
    status: Status = Status.RUNNING
    trap: Trap | None = None
    limits: StackLimits = field(default_factory=StackLimits)
    prims: PrimitiveTable = field(default_factory=dict)
    module_hash: bytes = b""
    instr_count: int = 0
    # Set when resuming from a pause so the run loop does not immediately
    # re-trigger the breakpoint under the current pc.
    just_resumed: bool = False

    # Per-function caches resolved at instantiation (index-parallel with
    # module.funcs): bodies, param kinds, result arity, zeroed declared
    # locals, bound host implementations (None for defined functions).
    bodies: list = field(default_factory=list, repr=False)
    func_params: list = field(default_factory=list, repr=False)
    func_results: list = field(default_factory=list, repr=False)
    zero_locals: list = field(default_factory=list, repr=False)
    prim_impls: list = field(default_factory=list, repr=False)

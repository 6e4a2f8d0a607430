"""The dispatch loop: instantiation, stepping, running, isolated calls."""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import BadState, NoMainExport, UnboundImport, ValidationFailed
from ..values import (F32, I32, I64, KIND_NAMES, Value, round_f32, wrap_i32,
                      wrap_i64, zero_value, _PACKERS)
from ..wat.ast import (BLOCK, BR, CALL, DROP, ELSE, END, F32_ADD, F32_CONST,
                       F32_DIV, F32_EQ, GLOBAL_GET, GLOBAL_SET, I32_ADD,
                       I32_CONST, I32_EQ, I32_LOAD, I32_STORE, I32_SUB,
                       I64_CONST, I64_GT_S, I64_SUB, IF, LOCAL_GET, LOCAL_SET,
                       LOOP, NOP, RETURN, SourceModule)
from ..wat.blob import encode_module, module_hash
from ..wat.validator import validate_module
from .state import (Frame, HostTrap, PrimitiveTable, StackLimits, Status,
                    Trap, TrapKind, VmState)

_RUNNING = Status.RUNNING
_TRAPPED = Status.TRAPPED
_HALTED = Status.HALTED
_PAUSED = Status.PAUSED_AT_BREAKPOINT

_I32_PACK = _PACKERS[I32]


@dataclass(frozen=True)
class StepOutcome:
    executed: bool
    status: Status
    trap: Trap | None = None


def instantiate(m: SourceModule, prims: PrimitiveTable | None = None,
                limits: StackLimits | None = None) -> VmState:
    """Build a runnable state positioned at the first instruction of "main"."""
    prims = prims or {}
    limits = limits or StackLimits()

    report = validate_module(m)
    if not report.ok:
        raise ValidationFailed(report.findings)

    main_idx = m.exports.get("main")
    if main_idx is None:
        raise NoMainExport("module exports no 'main' function")

    prim_impls = []
    for f in m.funcs:
        if not f.is_import:
            prim_impls.append(None)
            continue
        host = prims.get(f.import_symbol)
        if host is None:
            ns, sym = f.import_symbol
            raise UnboundImport(f"no primitive bound for {ns}.{sym}")
        if host.sig != m.types[f.type_index]:
            ns, sym = f.import_symbol
            raise UnboundImport(f"signature mismatch for {ns}.{sym}")
        prim_impls.append(host.fn)

    blob = encode_module(m)

    s = VmState(
        module=m,
        pc=(main_idx, 0),
        value_stack=[],
        call_stack=[],
        globals=[init for (_, _, init) in m.globals],
        memory=bytearray(m.memory_pages * SourceModule.PAGE_SIZE),
        table=list(m.table),
        limits=limits,
        prims=prims,
        module_hash=module_hash(blob),
    )
    s.bodies = [f.body for f in m.funcs]
    s.func_params = [m.types[f.type_index].params for f in m.funcs]
    s.func_results = [len(m.types[f.type_index].results) for f in m.funcs]
    s.zero_locals = [[zero_value(k) for k in f.locals] for f in m.funcs]
    s.prim_impls = prim_impls

    main_sig = m.types[m.funcs[main_idx].type_index]
    locals0 = [zero_value(k) for k in main_sig.params] + list(s.zero_locals[main_idx])
    s.call_stack.append(Frame(main_idx, None, 0, locals0))
    return s


def _trap(s: VmState, kind: TrapKind, message: str) -> None:
    s.trap = Trap(kind, s.pc, message)
    s.error_counter = s.pc
    s.status = _TRAPPED


def _do_return(s: VmState) -> None:
    frame = s.call_stack.pop()
    stack = s.value_stack
    if s.func_results[frame.func_index]:
        result = stack[-1]
        del stack[frame.value_stack_base:]
        stack.append(result)
    else:
        del stack[frame.value_stack_base:]
    if not s.call_stack:
        s.status = _HALTED
    else:
        s.pc = frame.return_pc


def _call_host(s: VmState, fidx: int, fi: int, off: int) -> None:
    params = s.func_params[fidx]
    stack = s.value_stack
    n = len(params)
    if n:
        args = stack[-n:]
        del stack[-n:]
    else:
        args = []
    try:
        result = s.prim_impls[fidx](args)
    except HostTrap as e:
        _trap(s, TrapKind.HOST_ERROR, e.message)
        return
    if s.func_results[fidx]:
        if not isinstance(result, Value):
            _trap(s, TrapKind.HOST_ERROR, "primitive returned no value")
            return
        if len(stack) >= s.limits.max_value_stack:
            _trap(s, TrapKind.STACK_EXHAUSTED, "value stack limit reached")
            return
        stack.append(result)
    s.pc = (fi, off + 1)


def _step_inner(s: VmState) -> None:
    """Execute exactly one instruction; all faults land in s.trap."""
    fi, off = s.pc
    body = s.bodies[fi]
    s.instr_count += 1
    if off >= len(body):
        _do_return(s)
        return
    ins = body[off]
    op = ins.op
    stack = s.value_stack

    if op == LOCAL_GET:
        if len(stack) >= s.limits.max_value_stack:
            _trap(s, TrapKind.STACK_EXHAUSTED, "value stack limit reached")
            return
        stack.append(s.call_stack[-1].locals[ins.imm])
        s.pc = (fi, off + 1)
    elif op == I64_CONST:
        if len(stack) >= s.limits.max_value_stack:
            _trap(s, TrapKind.STACK_EXHAUSTED, "value stack limit reached")
            return
        stack.append(Value(I64, ins.imm))
        s.pc = (fi, off + 1)
    elif op == I32_CONST:
        if len(stack) >= s.limits.max_value_stack:
            _trap(s, TrapKind.STACK_EXHAUSTED, "value stack limit reached")
            return
        stack.append(Value(I32, ins.imm))
        s.pc = (fi, off + 1)
    elif op == F32_CONST:
        if len(stack) >= s.limits.max_value_stack:
            _trap(s, TrapKind.STACK_EXHAUSTED, "value stack limit reached")
            return
        stack.append(Value(F32, ins.imm))
        s.pc = (fi, off + 1)
    elif op == CALL:
        fidx = ins.imm
        if s.prim_impls[fidx] is not None:
            _call_host(s, fidx, fi, off)
            return
        if len(s.call_stack) >= s.limits.max_call_stack:
            _trap(s, TrapKind.STACK_EXHAUSTED, "call stack limit reached")
            return
        params = s.func_params[fidx]
        n = len(params)
        if n:
            locals_ = stack[-n:]
            del stack[-n:]
        else:
            locals_ = []
        locals_.extend(s.zero_locals[fidx])
        s.call_stack.append(Frame(fidx, (fi, off + 1), len(stack), locals_))
        s.pc = (fidx, 0)
    elif op == IF:
        cond = stack.pop()
        if cond.num == 0:
            s.pc = (fi, ins.imm[0])
        else:
            s.pc = (fi, off + 1)
    elif op == BR:
        s.pc = (fi, ins.imm)
    elif op == ELSE:
        s.pc = (fi, ins.imm)
    elif op in (NOP, BLOCK, LOOP, END):
        s.pc = (fi, off + 1)
    elif op == I64_SUB:
        b = stack.pop()
        a = stack.pop()
        stack.append(Value(I64, wrap_i64(a.num - b.num)))
        s.pc = (fi, off + 1)
    elif op == I64_GT_S:
        b = stack.pop()
        a = stack.pop()
        stack.append(Value(I32, 1 if a.num > b.num else 0))
        s.pc = (fi, off + 1)
    elif op == I32_ADD:
        b = stack.pop()
        a = stack.pop()
        stack.append(Value(I32, wrap_i32(a.num + b.num)))
        s.pc = (fi, off + 1)
    elif op == I32_SUB:
        b = stack.pop()
        a = stack.pop()
        stack.append(Value(I32, wrap_i32(a.num - b.num)))
        s.pc = (fi, off + 1)
    elif op == I32_EQ:
        b = stack.pop()
        a = stack.pop()
        stack.append(Value(I32, 1 if a.num == b.num else 0))
        s.pc = (fi, off + 1)
    elif op == F32_ADD:
        b = stack.pop()
        a = stack.pop()
        stack.append(Value(F32, round_f32(a.num + b.num)))
        s.pc = (fi, off + 1)
    elif op == F32_DIV:
        b = stack.pop()
        a = stack.pop()
        if b.num == 0.0:
            stack.append(a)
            stack.append(b)
            _trap(s, TrapKind.DIVISION_BY_ZERO, "f32.div denominator is zero")
            return
        stack.append(Value(F32, round_f32(a.num / b.num)))
        s.pc = (fi, off + 1)
    elif op == F32_EQ:
        b = stack.pop()
        a = stack.pop()
        stack.append(Value(I32, 1 if a.num == b.num else 0))
        s.pc = (fi, off + 1)
    elif op == GLOBAL_GET:
        if len(stack) >= s.limits.max_value_stack:
            _trap(s, TrapKind.STACK_EXHAUSTED, "value stack limit reached")
            return
        stack.append(s.globals[ins.imm])
        s.pc = (fi, off + 1)
    elif op == GLOBAL_SET:
        s.globals[ins.imm] = stack.pop()
        s.pc = (fi, off + 1)
    elif op == LOCAL_SET:
        s.call_stack[-1].locals[ins.imm] = stack.pop()
        s.pc = (fi, off + 1)
    elif op == DROP:
        stack.pop()
        s.pc = (fi, off + 1)
    elif op == RETURN:
        _do_return(s)
    elif op == I32_LOAD:
        addr = stack.pop().num & 0xFFFFFFFF
        if addr + 4 > len(s.memory):
            _trap(s, TrapKind.OUT_OF_BOUNDS_MEMORY, f"load at {addr} out of bounds")
            return
        stack.append(Value(I32, wrap_i32(int.from_bytes(s.memory[addr:addr + 4], "little"))))
        s.pc = (fi, off + 1)
    elif op == I32_STORE:
        val = stack.pop()
        addr = stack.pop().num & 0xFFFFFFFF
        if addr + 4 > len(s.memory):
            _trap(s, TrapKind.OUT_OF_BOUNDS_MEMORY, f"store at {addr} out of bounds")
            return
        s.memory[addr:addr + 4] = _I32_PACK.pack(val.num)
        s.pc = (fi, off + 1)
    else:
        _trap(s, TrapKind.HOST_ERROR, f"unimplemented opcode 0x{op:02x}")


def step(s: VmState) -> StepOutcome:
    """Execute one instruction of a running state."""
    if s.status is not _RUNNING:
        raise BadState(f"cannot step while {s.status.name}")
    _step_inner(s)
    return StepOutcome(True, s.status, s.trap if s.status is _TRAPPED else None)


def run(s: VmState, budget: int | None = None, should_yield=None) -> VmState:
    """Step until breakpoint, trap, halt, yield request, or budget exhaustion.

    A breakpoint pauses before its instruction executes; resuming from
    that pause (just_resumed) does not immediately re-trigger it.
    """
    if s.status is not _RUNNING:
        if budget == 0:
            return s
        raise BadState(f"cannot run while {s.status.name}")
    skip = s.just_resumed
    s.just_resumed = False
    bps = s.breakpoints
    remaining = budget
    while s.status is _RUNNING:
        if remaining is not None:
            if remaining <= 0:
                break
            remaining -= 1
        if bps and not skip and s.pc in bps:
            s.status = _PAUSED
            break
        skip = False
        _step_inner(s)
        if should_yield is not None and should_yield():
            break
    return s


def run_unchecked(s: VmState, budget: int) -> VmState:
    """Dispatch loop with the debugger hooks compiled out.

    No breakpoint test, no yield polling: the baseline for measuring
    what the always-on hooks cost.
    """
    remaining = budget
    while s.status is _RUNNING and remaining > 0:
        remaining -= 1
        _step_inner(s)
    return s


def invoke_isolated(s: VmState, fidx: int, args: list[Value]) -> Value | Trap | None:
    """Run one function to completion on s, then put s back exactly.

    The pc, value stack, call stack, status, error counter and trap
    record are bit-identical afterwards whether the call returned or
    trapped; global and memory writes made by the callee stick.
    """
    if not 0 <= fidx < len(s.module.funcs):
        return Trap(TrapKind.HOST_ERROR, s.pc, f"no function {fidx}")
    sig = s.module.types[s.module.funcs[fidx].type_index]
    if len(args) != len(sig.params) or any(
            a.kind != k for a, k in zip(args, sig.params)):
        return Trap(TrapKind.HOST_ERROR, s.pc,
                    f"arguments do not match signature of function {fidx}")

    saved = (s.pc, s.status, s.error_counter, s.trap, s.just_resumed)
    saved_vh = len(s.value_stack)
    saved_ch = len(s.call_stack)

    result: Value | Trap | None = None
    try:
        if s.prim_impls[fidx] is not None:
            try:
                result = s.prim_impls[fidx](list(args))
            except HostTrap as e:
                result = Trap(TrapKind.HOST_ERROR, s.pc, e.message)
        else:
            locals_ = list(args) + list(s.zero_locals[fidx])
            s.call_stack.append(Frame(fidx, s.pc, saved_vh, locals_))
            s.pc = (fidx, 0)
            s.status = _RUNNING
            while len(s.call_stack) > saved_ch and s.status is _RUNNING:
                _step_inner(s)
            if s.status is _TRAPPED:
                result = s.trap
            elif s.func_results[fidx]:
                result = s.value_stack[-1]
    finally:
        del s.value_stack[saved_vh:]
        del s.call_stack[saved_ch:]
        (s.pc, s.status, s.error_counter, s.trap, s.just_resumed) = saved
    return result

"""The always-on interrupt handler shared by device and reconstruction VMs.

One monitor owns one VM. Interrupts arrive as decoded messages and are
handled strictly between instructions; every message gets exactly one
response, and a handler that fails leaves the VM untouched (payloads are
fully decoded and validated before any mutation).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from . import wire
from .errors import (BadState, CacheEmpty, CapacityExceeded, DecodeError,
                     ImmutableGlobal, IndexOutOfRange, KindMismatch,
                     MalformedInterrupt, ModuleMismatch, NoMainExport,
                     NotAnImport, OotError, UnboundImport, ValidationFailed)
from .proxy import Cache, Mock, ProxyConfig, Remote, serve_proxy_call, set_strategy
from .session import (DebugSession, MemMgmtMsg, StateChunk, apply_session,
                      extract_dump, extract_session, dump_to_bytes,
                      session_from_chunks, session_to_bytes, split_stream)
from .values import Value
from .vm.interp import _step_inner, instantiate, step
from .vm.state import PrimitiveTable, Status, VmState
from .wat.ast import CALL
from .wat.blob import decode_module
from .wat.validator import validate_module


class BreakpointPolicy(enum.Enum):
    PAUSE_DEFAULT = wire.POLICY_PAUSE
    SINGLE_STOP = wire.POLICY_SINGLE_STOP
    REMOVE_AND_PROCEED = wire.POLICY_REMOVE_AND_PROCEED


@dataclass(frozen=True)
class StateEdit:
    """A typed in-place edit of paused execution or application state."""

    target: str  # "stack" | "local" | "global" | "table"
    index: int
    frame: int | None = None
    new_value: Value | None = None
    new_func: int | None = None


@dataclass
class PolicyActions:
    """What a breakpoint hit did under the active policy."""

    session: DebugSession
    removed_breakpoints: set
    resumed: bool


# Handler sets for the two build flavors. A device build services proxy
# calls but not the strategy-management interrupts, which only make sense
# on the reconstruction side.
REMOTE_CAPABILITIES = frozenset({
    wire.RUN, wire.PAUSE, wire.STEP, wire.STEP_OVER, wire.ADD_BREAKPOINT,
    wire.REMOVE_BREAKPOINT, wire.DUMP, wire.RECEIVE_STATE, wire.PROXY_CALL,
    wire.UPDATE_MODULE, wire.UPDATE_STACK_VALUE, wire.UPDATE_GLOBAL,
    wire.UPDATE_TABLE_ENTRY, wire.SET_POLICY,
})
LOCAL_CAPABILITIES = (REMOTE_CAPABILITIES - {wire.PROXY_CALL}) | {
    wire.MONITOR_PROXIES, wire.PROXY_USE_CACHE, wire.PROXY_NO_CACHE,
    wire.PROXY_MOCK,
}


@dataclass
class MonitorContext:
    policy: BreakpointPolicy = BreakpointPolicy.PAUSE_DEFAULT
    capabilities: frozenset = REMOTE_CAPABILITIES
    prims: PrimitiveTable = field(default_factory=dict)
    proxy_cfg: ProxyConfig | None = None
    # callable(bytes) -> None delivering unsolicited pushes to the client
    push: object = None


_ERROR_CODES = [
    (MalformedInterrupt, wire.E_MALFORMED),
    (ModuleMismatch, wire.E_MODULE_MISMATCH),
    (CapacityExceeded, wire.E_CAPACITY),
    (DecodeError, wire.E_DECODE),
    (KindMismatch, wire.E_KIND_MISMATCH),
    (IndexOutOfRange, wire.E_INDEX_RANGE),
    (ImmutableGlobal, wire.E_IMMUTABLE_GLOBAL),
    (BadState, wire.E_BAD_STATE),
    (ValidationFailed, wire.E_VALIDATION),
    (UnboundImport, wire.E_VALIDATION),
    (NoMainExport, wire.E_VALIDATION),
    (NotAnImport, wire.E_NOT_AN_IMPORT),
    (CacheEmpty, wire.E_CACHE_EMPTY),
]


def _error_response(e: Exception) -> wire.Response:
    for cls, code in _ERROR_CODES:
        if isinstance(e, cls):
            return wire.error_response(code, str(e))
    return wire.error_response(wire.E_INTERNAL, str(e))


def on_breakpoint_hit(vm: VmState, policy: BreakpointPolicy,
                      ctx: MonitorContext) -> PolicyActions:
    """Run the active policy against a VM paused at a breakpoint."""
    if vm.status is not Status.PAUSED_AT_BREAKPOINT:
        raise BadState("no breakpoint pause to act on")
    session = extract_session(vm)
    if ctx.push is not None:
        ctx.push(wire.Response(wire.ST_PUSH_SESSION,
                               session_to_bytes(session)).encode())
    removed: set = set()
    resumed = False
    if policy is BreakpointPolicy.SINGLE_STOP:
        removed = set(vm.breakpoints)
        vm.breakpoints.clear()
        vm.status = Status.RUNNING
        vm.just_resumed = True
        resumed = True
    elif policy is BreakpointPolicy.REMOVE_AND_PROCEED:
        if vm.pc in vm.breakpoints:
            vm.breakpoints.discard(vm.pc)
            removed = {vm.pc}
        vm.status = Status.RUNNING
        vm.just_resumed = True
        resumed = True
    return PolicyActions(session, removed, resumed)


_STEP_OVER_FUEL = 100_000_000


def step_over(vm: VmState) -> VmState:
    """One step, except a call to a defined function runs to its return."""
    if vm.status is not Status.PAUSED_AT_BREAKPOINT:
        raise BadState("step-over needs a paused VM")
    fi, off = vm.pc
    body = vm.bodies[fi]
    depth = len(vm.call_stack)
    vm.status = Status.RUNNING
    is_defined_call = (off < len(body) and body[off].op == CALL
                       and vm.prim_impls[body[off].imm] is None)
    _step_inner(vm)
    if is_defined_call:
        fuel = _STEP_OVER_FUEL
        while (vm.status is Status.RUNNING and len(vm.call_stack) > depth
               and fuel > 0):
            _step_inner(vm)
            fuel -= 1
    if vm.status is Status.RUNNING:
        vm.status = Status.PAUSED_AT_BREAKPOINT
    return vm


def receive_state(vm: VmState, mem: MemMgmtMsg,
                  chunks: list[StateChunk]) -> VmState:
    """Pre-allocate from the sizing message, then adopt the session."""
    if mem.call_stack_len > vm.limits.max_call_stack:
        raise CapacityExceeded(
            f"announced call stack {mem.call_stack_len} exceeds limit "
            f"{vm.limits.max_call_stack}")
    if mem.value_stack_len > vm.limits.max_value_stack:
        raise CapacityExceeded(
            f"announced value stack {mem.value_stack_len} exceeds limit "
            f"{vm.limits.max_value_stack}")
    session = session_from_chunks(mem, chunks)
    return apply_session(vm, session)


def _adopt(vm: VmState, fresh: VmState) -> None:
    vm.module = fresh.module
    vm.pc = fresh.pc
    vm.value_stack = fresh.value_stack
    vm.call_stack = fresh.call_stack
    vm.globals = fresh.globals
    vm.memory = fresh.memory
    vm.table = fresh.table
    vm.breakpoints = fresh.breakpoints
    vm.error_counter = fresh.error_counter
    vm.status = fresh.status
    vm.trap = fresh.trap
    vm.prims = fresh.prims
    vm.module_hash = fresh.module_hash
    vm.just_resumed = False
    vm.bodies = fresh.bodies
    vm.func_params = fresh.func_params
    vm.func_results = fresh.func_results
    vm.zero_locals = fresh.zero_locals
    vm.prim_impls = fresh.prim_impls


def update_module(vm: VmState, blob: bytes, prims: PrimitiveTable) -> VmState:
    """Swap in a new module and restart from its entry point.

    Any failure (bad blob, validation findings, unbound import) leaves the
    running program untouched. Breakpoints and the error counter do not
    survive: their offsets belong to the old code.
    """
    m = decode_module(bytes(blob))
    report = validate_module(m)
    if not report.ok:
        raise ValidationFailed(report.findings)
    fresh = instantiate(m, prims, vm.limits)
    _adopt(vm, fresh)
    return vm


def reboot(vm: VmState) -> VmState:
    """Restart the current module from main, as a crashing device would.

    Breakpoints live at the VM level and the error counter exists to
    outlive faults, so both survive the restart.
    """
    bps = set(vm.breakpoints)
    ec = vm.error_counter
    fresh = instantiate(vm.module, vm.prims, vm.limits)
    _adopt(vm, fresh)
    vm.breakpoints = bps
    vm.error_counter = ec
    return vm


def apply_state_edit(vm: VmState, e: StateEdit) -> None:
    """Apply one kind-checked edit to a paused VM."""
    if vm.status is not Status.PAUSED_AT_BREAKPOINT:
        raise BadState("state edits need a paused VM")
    if e.target == "stack":
        if not 0 <= e.index < len(vm.value_stack):
            raise IndexOutOfRange(f"no stack slot {e.index}")
        old = vm.value_stack[e.index]
        if e.new_value is None or e.new_value.kind != old.kind:
            raise KindMismatch(f"stack slot {e.index} holds a different kind")
        vm.value_stack[e.index] = e.new_value
    elif e.target == "local":
        if e.frame is None or not 0 <= e.frame < len(vm.call_stack):
            raise IndexOutOfRange(f"no frame {e.frame}")
        frame = vm.call_stack[e.frame]
        if not 0 <= e.index < len(frame.locals):
            raise IndexOutOfRange(f"no local {e.index} in frame {e.frame}")
        old = frame.locals[e.index]
        if e.new_value is None or e.new_value.kind != old.kind:
            raise KindMismatch(f"local {e.index} holds a different kind")
        frame.locals[e.index] = e.new_value
    elif e.target == "global":
        if not 0 <= e.index < len(vm.globals):
            raise IndexOutOfRange(f"no global {e.index}")
        kind, mutable, _ = vm.module.globals[e.index]
        if not mutable:
            raise ImmutableGlobal(f"global {e.index} is immutable")
        if e.new_value is None or e.new_value.kind != kind:
            raise KindMismatch(f"global {e.index} holds a different kind")
        vm.globals[e.index] = e.new_value
    elif e.target == "table":
        if not 0 <= e.index < len(vm.table):
            raise IndexOutOfRange(f"no table entry {e.index}")
        if e.new_func is None or not 0 <= e.new_func < len(vm.module.funcs):
            raise IndexOutOfRange(f"no function {e.new_func}")
        old_sig = vm.module.sig_of(vm.table[e.index])
        new_sig = vm.module.sig_of(e.new_func)
        if old_sig != new_sig:
            raise KindMismatch("replacement function has a different signature")
        vm.table[e.index] = e.new_func
    else:
        raise MalformedInterrupt(f"unknown edit target '{e.target}'")


class Monitor:
    """Dispatches decoded interrupts against one VM."""

    def __init__(self, vm: VmState, ctx: MonitorContext):
        self.vm = vm
        self.ctx = ctx

    def handle(self, msg: wire.InterruptMessage) -> wire.Response:
        if msg.opcode not in wire.OP_NAMES:
            return wire.error_response(wire.E_MALFORMED,
                                       f"unknown opcode 0x{msg.opcode:02x}")
        if msg.opcode not in self.ctx.capabilities:
            return wire.error_response(
                wire.E_UNSUPPORTED,
                f"this build does not handle {wire.OP_NAMES[msg.opcode]}")
        try:
            return self._dispatch(msg)
        except OotError as e:
            return _error_response(e)

    def _ack(self) -> wire.Response:
        return wire.ack_response(self.vm.status.value)

    def _require_empty(self, msg: wire.InterruptMessage) -> None:
        if msg.payload:
            raise MalformedInterrupt(
                f"{wire.OP_NAMES[msg.opcode]} takes no payload")

    def _dispatch(self, msg: wire.InterruptMessage) -> wire.Response:
        vm = self.vm
        op = msg.opcode

        if op == wire.RUN:
            self._require_empty(msg)
            if vm.status is Status.PAUSED_AT_BREAKPOINT:
                vm.status = Status.RUNNING
                vm.just_resumed = True
            elif vm.status is not Status.RUNNING:
                raise BadState(f"cannot resume a {vm.status.name} VM")
            return self._ack()

        if op == wire.PAUSE:
            self._require_empty(msg)
            if vm.status is Status.RUNNING:
                vm.status = Status.PAUSED_AT_BREAKPOINT
            elif vm.status is not Status.PAUSED_AT_BREAKPOINT:
                raise BadState(f"cannot pause a {vm.status.name} VM")
            return self._ack()

        if op == wire.STEP:
            self._require_empty(msg)
            if vm.status is Status.PAUSED_AT_BREAKPOINT:
                vm.status = Status.RUNNING
            step(vm)
            if vm.status is Status.RUNNING:
                vm.status = Status.PAUSED_AT_BREAKPOINT
            return self._ack()

        if op == wire.STEP_OVER:
            self._require_empty(msg)
            if vm.status is Status.RUNNING:
                vm.status = Status.PAUSED_AT_BREAKPOINT
            step_over(vm)
            return self._ack()

        if op == wire.ADD_BREAKPOINT or op == wire.REMOVE_BREAKPOINT:
            coff = wire.parse_code_offset(msg.payload)
            fi, off = coff
            funcs = vm.module.funcs
            if not (0 <= fi < len(funcs) and 0 <= off < len(funcs[fi].body)):
                raise IndexOutOfRange(f"no instruction at {coff}")
            if op == wire.ADD_BREAKPOINT:
                vm.breakpoints.add(coff)
            else:
                vm.breakpoints.discard(coff)
            return self._ack()

        if op == wire.DUMP:
            mode = wire.parse_dump_request(msg.payload)
            if mode == wire.DUMP_BASELINE:
                return wire.Response(wire.ST_OK,
                                     dump_to_bytes(extract_dump(vm)))
            prev = vm.status
            if prev is Status.RUNNING:
                vm.status = Status.PAUSED_AT_BREAKPOINT
            try:
                session = extract_session(vm)
            finally:
                vm.status = prev
            return wire.Response(wire.ST_OK, session_to_bytes(session))

        if op == wire.RECEIVE_STATE:
            mem, chunks = split_stream(msg.payload)
            receive_state(vm, mem, chunks)
            return self._ack()

        if op == wire.PROXY_CALL:
            fidx, args = wire.parse_proxy_call(msg.payload)
            result = serve_proxy_call(vm, fidx, args)
            return wire.Response(wire.ST_OK, wire.pack_proxy_reply(result))

        if op == wire.UPDATE_MODULE:
            update_module(vm, msg.payload, self.ctx.prims)
            return self._ack()

        if op == wire.UPDATE_STACK_VALUE:
            frame, index, value = wire.parse_stack_edit(msg.payload)
            if frame is None:
                apply_state_edit(vm, StateEdit("stack", index, new_value=value))
            else:
                apply_state_edit(vm, StateEdit("local", index, frame=frame,
                                               new_value=value))
            return self._ack()

        if op == wire.UPDATE_GLOBAL:
            index, value = wire.parse_global_edit(msg.payload)
            apply_state_edit(vm, StateEdit("global", index, new_value=value))
            return self._ack()

        if op == wire.UPDATE_TABLE_ENTRY:
            index, func_index = wire.parse_table_edit(msg.payload)
            apply_state_edit(vm, StateEdit("table", index, new_func=func_index))
            return self._ack()

        if op == wire.SET_POLICY:
            self.ctx.policy = BreakpointPolicy(wire.parse_policy(msg.payload))
            return self._ack()

        # Strategy management (reconstruction side only).
        cfg = self.ctx.proxy_cfg
        if cfg is None:
            raise BadState("no proxy configuration on this VM")

        if op == wire.MONITOR_PROXIES:
            indices = wire.parse_func_list(msg.payload)
            for fidx in indices:
                if fidx not in cfg.import_indices:
                    raise NotAnImport(f"function {fidx} is not an import")
            # the list is complete: unlisted imports revert to the default
            for fidx in list(cfg.strategies):
                if isinstance(cfg.strategies[fidx], Remote) and fidx not in indices:
                    del cfg.strategies[fidx]
            for fidx in indices:
                set_strategy(cfg, fidx, Remote())
            return self._ack()

        if op == wire.PROXY_USE_CACHE:
            indices = wire.parse_func_list(msg.payload)
            for fidx in indices:
                if fidx not in cfg.import_indices:
                    raise NotAnImport(f"function {fidx} is not an import")
                if not cfg.has_cache_for(fidx):
                    raise CacheEmpty(f"no cached reply for function {fidx} yet")
            for fidx in indices:
                set_strategy(cfg, fidx, Cache())
            return self._ack()

        if op == wire.PROXY_NO_CACHE:
            indices = wire.parse_func_list(msg.payload)
            for fidx in indices:
                if fidx not in cfg.import_indices:
                    raise NotAnImport(f"function {fidx} is not an import")
            for fidx in indices:
                set_strategy(cfg, fidx, Remote())
            return self._ack()

        if op == wire.PROXY_MOCK:
            fidx, value = wire.parse_mock(msg.payload)
            set_strategy(cfg, fidx, Mock(value))
            return self._ack()

        raise MalformedInterrupt(f"unhandled opcode 0x{op:02x}")


def handle_interrupt(vm: VmState, msg: wire.InterruptMessage,
                     ctx: MonitorContext) -> wire.Response:
    """One-shot dispatch; equivalent to Monitor(vm, ctx).handle(msg)."""
    return Monitor(vm, ctx).handle(msg)

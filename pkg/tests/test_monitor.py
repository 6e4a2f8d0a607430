import random

import pytest
from conftest import snapshot

from oot import corpus, wire
from oot.errors import (BadState, ImmutableGlobal, IndexOutOfRange,
                        KindMismatch)
from oot.monitor import (LOCAL_CAPABILITIES, REMOTE_CAPABILITIES,
                         BreakpointPolicy, Monitor, MonitorContext, StateEdit,
                         apply_state_edit, handle_interrupt,
                         on_breakpoint_hit, reboot, receive_state, step_over,
                         update_module)
from oot.proxy import ProxyConfig
from oot.session import decode_session, extract_session, session_to_bytes, split_stream
from oot.values import f32, i32, i64
from oot.vm import StackLimits, Status, TrapKind, instantiate, run
from oot.wat import encode_module, parse_module, resolve_breakpoint
from oot.wat.ast import CALL, I64_SUB

from test_vm_core import scripted_tma_prims


def paused_countdown(arg: int):
    m = parse_module(corpus.countdown_source(arg))
    s = instantiate(m)
    s.breakpoints.add(resolve_breakpoint(m, 27))
    run(s)
    assert s.status is Status.PAUSED_AT_BREAKPOINT
    return m, s


def remote_ctx(**kw) -> MonitorContext:
    return MonitorContext(capabilities=REMOTE_CAPABILITIES, **kw)


# --- handle_interrupt basics ---

def test_dump_on_paused_vm_carries_full_session():
    _, vm = paused_countdown(2)
    resp = handle_interrupt(vm, wire.InterruptMessage(
        wire.DUMP, wire.pack_dump_request(wire.DUMP_FULL_SESSION)), remote_ctx())
    assert resp.ok
    session = decode_session(resp.payload)
    assert session.pc == vm.pc
    assert len(session.call_stack) == len(vm.call_stack)


def test_dump_works_while_running(countdown_module):
    vm = instantiate(countdown_module)
    run(vm, budget=37)
    resp = handle_interrupt(vm, wire.InterruptMessage(
        wire.DUMP, wire.pack_dump_request(wire.DUMP_FULL_SESSION)), remote_ctx())
    assert resp.ok
    assert vm.status is Status.RUNNING
    assert decode_session(resp.payload).pc == vm.pc


def test_step_executes_one_instruction():
    _, vm = paused_countdown(1)
    before = vm.instr_count
    resp = handle_interrupt(vm, wire.InterruptMessage(wire.STEP), remote_ctx())
    assert resp.ok
    assert vm.instr_count == before + 1
    assert vm.status is Status.PAUSED_AT_BREAKPOINT
    assert resp.payload == bytes([Status.PAUSED_AT_BREAKPOINT.value])


def test_proxy_call_served_in_isolation(tma_module):
    vm = instantiate(tma_module, scripted_tma_prims(online=True))
    run(vm, budget=9)
    before = snapshot(vm)
    resp = handle_interrupt(vm, wire.InterruptMessage(
        wire.PROXY_CALL,
        wire.pack_proxy_call(tma_module.func_index("isConnected"),
                             [i32(3030)])), remote_ctx())
    assert resp.ok
    assert wire.parse_proxy_reply(resp.payload) == i32(1)
    assert snapshot(vm) == before


def test_unknown_opcode_is_error_and_harmless():
    _, vm = paused_countdown(1)
    before = snapshot(vm)
    resp = handle_interrupt(vm, wire.InterruptMessage(0x7F, b""), remote_ctx())
    assert not resp.ok
    code, _ = wire.parse_error(resp.payload)
    assert code == wire.E_MALFORMED
    assert snapshot(vm) == before


def test_capability_mask_rejects_local_only_ops():
    _, vm = paused_countdown(1)
    resp = handle_interrupt(vm, wire.InterruptMessage(
        wire.MONITOR_PROXIES, wire.pack_func_list([])), remote_ctx())
    assert not resp.ok
    code, _ = wire.parse_error(resp.payload)
    assert code == wire.E_UNSUPPORTED


def test_run_resumes_paused_vm():
    _, vm = paused_countdown(1)
    resp = handle_interrupt(vm, wire.InterruptMessage(wire.RUN), remote_ctx())
    assert resp.ok
    assert vm.status is Status.RUNNING
    assert vm.just_resumed


def test_pause_takes_effect_at_boundary(countdown_module):
    vm = instantiate(countdown_module)
    resp = handle_interrupt(vm, wire.InterruptMessage(wire.PAUSE), remote_ctx())
    assert resp.ok
    assert vm.status is Status.PAUSED_AT_BREAKPOINT


# --- breakpoint policies ---

def bp_setup(policy):
    m, vm = paused_countdown(2)
    extra = {(0, 0), (2, 1)}
    vm.breakpoints |= extra
    pushed = []
    ctx = remote_ctx(push=pushed.append)
    actions = on_breakpoint_hit(vm, policy, ctx)
    return m, vm, pushed, actions


def test_single_stop_clears_all_and_resumes():
    _, vm, pushed, actions = bp_setup(BreakpointPolicy.SINGLE_STOP)
    assert actions.resumed
    assert vm.breakpoints == set()
    assert vm.status is Status.RUNNING
    assert len(pushed) == 1
    session = decode_session(wire.decode_response(pushed[0]).payload)
    assert session.pc == actions.session.pc


def test_remove_and_proceed_clears_only_hit():
    _, vm, pushed, actions = bp_setup(BreakpointPolicy.REMOVE_AND_PROCEED)
    assert actions.resumed
    assert actions.removed_breakpoints == {actions.session.pc}
    assert vm.breakpoints == {(0, 0), (2, 1)}
    assert vm.status is Status.RUNNING


def test_pause_default_keeps_everything():
    _, vm, pushed, actions = bp_setup(BreakpointPolicy.PAUSE_DEFAULT)
    assert not actions.resumed
    assert vm.status is Status.PAUSED_AT_BREAKPOINT
    assert len(vm.breakpoints) == 3
    assert len(pushed) == 1


# --- step over ---

def test_step_over_call_restores_depth():
    m, _ = paused_countdown(2)
    cd = m.func_index("countdown")
    call_off = next(off for off, ins in enumerate(m.funcs[cd].body)
                    if ins.op == CALL)
    vm = instantiate(m)
    from oot.vm.interp import _step_inner
    while vm.pc != (cd, call_off):
        _step_inner(vm)
    vm.status = Status.PAUSED_AT_BREAKPOINT
    depth = len(vm.call_stack)
    step_over(vm)
    assert vm.status is Status.PAUSED_AT_BREAKPOINT
    assert len(vm.call_stack) == depth
    assert vm.pc == (cd, call_off + 1)


def test_step_over_non_call_is_single_step():
    m, vm = paused_countdown(2)
    ins = vm.bodies[vm.pc[0]][vm.pc[1]]
    assert ins.op != CALL
    before = vm.instr_count
    step_over(vm)
    assert vm.instr_count == before + 1


def test_step_over_surfaces_callee_trap(tma_module):
    vm = instantiate(tma_module, scripted_tma_prims(online=False))
    main = tma_module.func_index("main")
    avg_call = next(off for off, ins in enumerate(tma_module.funcs[main].body)
                    if ins.op == CALL and ins.imm == tma_module.func_index("avgTemp"))
    from oot.vm.interp import _step_inner
    while vm.pc != (main, avg_call):
        _step_inner(vm)
    vm.status = Status.PAUSED_AT_BREAKPOINT
    step_over(vm)
    assert vm.status is Status.TRAPPED
    assert vm.trap.kind is TrapKind.DIVISION_BY_ZERO
    assert vm.error_counter == resolve_breakpoint(tma_module, 44)


# --- receive state ---

def test_receive_state_early_capacity_rejection():
    m, vm = paused_countdown(50)
    stream = session_to_bytes(extract_session(vm))
    small = instantiate(m, limits=StackLimits(max_call_stack=8))
    mem, chunks = split_stream(stream)
    before = snapshot(small)
    with pytest.raises(Exception) as exc:
        receive_state(small, mem, chunks)
    assert "exceeds limit" in str(exc.value)
    assert snapshot(small) == before


def test_receive_state_applies_valid_stream():
    m, vm = paused_countdown(3)
    stream = session_to_bytes(extract_session(vm))
    fresh = instantiate(m)
    mem, chunks = split_stream(stream)
    receive_state(fresh, mem, chunks)
    assert fresh.status is Status.PAUSED_AT_BREAKPOINT
    assert fresh.pc == vm.pc
    assert snapshot(fresh) == snapshot(vm)


def test_receive_state_out_of_order_is_atomic():
    m, vm = paused_countdown(3)
    mem, chunks = split_stream(session_to_bytes(extract_session(vm)))
    fresh = instantiate(m)
    before = snapshot(fresh)
    bad = [chunks[2], chunks[1], chunks[0]] + chunks[3:]
    resp = handle_interrupt(
        fresh,
        wire.InterruptMessage(
            wire.RECEIVE_STATE,
            mem.encode() + b"".join(c.encode() for c in bad)),
        remote_ctx())
    assert not resp.ok
    assert snapshot(fresh) == before


# --- module update ---

def test_update_module_restarts_with_new_globals(tma_module, tma_fixed_module):
    prims = scripted_tma_prims(online=True)
    vm = instantiate(tma_module, prims)
    run(vm, budget=100)
    update_module(vm, encode_module(tma_fixed_module), prims)
    assert len(vm.globals) == 4
    assert vm.status is Status.RUNNING
    assert vm.pc == (vm.module.exports["main"], 0)
    assert vm.error_counter is None and not vm.breakpoints


def test_update_module_rejects_corrupt_blob(tma_module):
    prims = scripted_tma_prims(online=True)
    vm = instantiate(tma_module, prims)
    run(vm, budget=100)
    before = snapshot(vm)
    with pytest.raises(Exception):
        update_module(vm, b"\x00garbage", prims)
    assert snapshot(vm) == before
    assert vm.status is Status.RUNNING


def test_update_module_same_blob_restarts(countdown_module):
    vm = instantiate(countdown_module)
    run(vm, budget=123)
    update_module(vm, encode_module(countdown_module), {})
    assert vm.pc == (countdown_module.func_index("main"), 0)
    assert len(vm.call_stack) == 1
    assert vm.status is Status.RUNNING


def test_reboot_preserves_error_counter_and_breakpoints(tma_module):
    vm = instantiate(tma_module, scripted_tma_prims(online=False))
    run(vm, budget=100_000)
    assert vm.status is Status.TRAPPED
    ec = vm.error_counter
    vm.breakpoints.add((7, 1))
    reboot(vm)
    assert vm.status is Status.RUNNING
    assert vm.error_counter == ec
    assert vm.breakpoints == {(7, 1)}
    assert vm.globals[2] == f32(0.0)  # application state reset


# --- state edits ---

def test_edit_local_changes_resumed_recursion():
    from test_vm_core import countdown_depth_oracle
    m = parse_module(corpus.countdown_source(2))
    vm = instantiate(m)
    cd = m.func_index("countdown")
    vm.breakpoints.add((cd, 0))
    run(vm)  # paused on entry to the first recursive frame, argument 2
    assert vm.call_stack[-1].locals[0] == i64(2)
    apply_state_edit(vm, StateEdit("local", 0, frame=len(vm.call_stack) - 1,
                                   new_value=i64(7)))
    vm.breakpoints = {resolve_breakpoint(m, 27)}
    vm.status = Status.RUNNING
    vm.just_resumed = True
    run(vm)
    # the edited argument drove seven recursions instead of two
    assert len(vm.call_stack) == countdown_depth_oracle(7)


def test_edit_kind_mismatch_rejected():
    _, vm = paused_countdown(2)
    with pytest.raises(KindMismatch):
        apply_state_edit(vm, StateEdit("local", 0, frame=1, new_value=f32(7.0)))


def test_edit_requires_paused(countdown_module):
    vm = instantiate(countdown_module)
    with pytest.raises(BadState):
        apply_state_edit(vm, StateEdit("global", 0, new_value=i32(5)))


def test_edit_immutable_global_rejected(tma_module):
    vm = instantiate(tma_module, scripted_tma_prims(online=True))
    vm.status = Status.PAUSED_AT_BREAKPOINT
    with pytest.raises(ImmutableGlobal):
        apply_state_edit(vm, StateEdit("global", 0, new_value=i32(99)))


def test_edit_mutable_global_ok(tma_module):
    vm = instantiate(tma_module, scripted_tma_prims(online=True))
    vm.status = Status.PAUSED_AT_BREAKPOINT
    apply_state_edit(vm, StateEdit("global", 2, new_value=f32(2.0)))
    assert vm.globals[2] == f32(2.0)


def test_edit_table_entry_signature_checked(countdown_module):
    vm = instantiate(countdown_module)
    vm.status = Status.PAUSED_AT_BREAKPOINT
    start = countdown_module.func_index("start")
    countdown = countdown_module.func_index("countdown")
    main = countdown_module.func_index("main")
    # table[0] holds the recursion function; swapping in one with another
    # signature must be refused, swapping in itself is fine
    with pytest.raises(KindMismatch):
        apply_state_edit(vm, StateEdit("table", 0, new_func=main))
    apply_state_edit(vm, StateEdit("table", 0, new_func=countdown))
    assert vm.table[0] == countdown
    with pytest.raises(IndexOutOfRange):
        apply_state_edit(vm, StateEdit("table", 9, new_func=start))


def test_edit_stack_slot():
    _, vm = paused_countdown(2)
    vm.value_stack.append(i64(40))
    apply_state_edit(vm, StateEdit("stack", len(vm.value_stack) - 1,
                                   new_value=i64(41)))
    assert vm.value_stack[-1] == i64(41)
    with pytest.raises(IndexOutOfRange):
        apply_state_edit(vm, StateEdit("stack", 99, new_value=i64(0)))
    vm.value_stack.pop()


# --- interrupt atomicity under malformed payload fuzzing ---

def test_malformed_interrupts_never_mutate_state():
    rng = random.Random(31337)
    m, vm = paused_countdown(2)
    cfg = ProxyConfig.for_module(m)
    ctx = MonitorContext(capabilities=LOCAL_CAPABILITIES, proxy_cfg=cfg)
    monitor = Monitor(vm, ctx)
    before = snapshot(vm)
    opcodes = list(wire.OP_NAMES) + [0x55, 0xAA]
    for _ in range(600):
        op = rng.choice(opcodes)
        if op in (wire.RUN, wire.PAUSE, wire.STEP, wire.STEP_OVER, wire.DUMP):
            continue  # these legitimately execute or reply with data
        payload = bytes(rng.randrange(256)
                        for _ in range(rng.choice((0, 1, 3, 7, 12))))
        resp = monitor.handle(wire.InterruptMessage(op, payload))
        if resp.ok:
            # a fuzzed payload that decodes validly may legally mutate; undo
            # is not needed because we only assert on error outcomes
            before = snapshot(vm)
            continue
        assert snapshot(vm) == before, wire.OP_NAMES.get(op, op)


def test_every_interrupt_gets_exactly_one_response():
    m, vm = paused_countdown(1)
    ctx = remote_ctx()
    monitor = Monitor(vm, ctx)
    for op in wire.OP_NAMES:
        resp = monitor.handle(wire.InterruptMessage(op, b"\x00\x01"))
        assert resp is not None
        assert resp.status in (wire.ST_OK, wire.ST_ERR)

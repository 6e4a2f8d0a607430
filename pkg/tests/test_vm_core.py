import random

import pytest
from conftest import execution_projection, snapshot

from oot import corpus
from oot.errors import BadState, NoMainExport, UnboundImport
from oot.values import F32, I32, I64, Value, f32, i32, i64
from oot.vm import (HostFunc, HostTrap, StackLimits, Status, Trap, TrapKind,
                    instantiate, invoke_isolated, run, step)
from oot.vm.interp import _step_inner
from oot.wat import parse_module, resolve_breakpoint
from oot.wat.ast import TypeSig


def scripted_tma_prims(online: bool, temp: float = 21.5, log=None):
    """Hand-rolled sensor bindings, independent of the device module."""
    def req_temp(args):
        if log is not None:
            log.append(("req_temp", args[0].num))
        if not online:
            raise HostTrap(f"sensor {args[0].num} offline")
        return f32(temp)

    def is_connected(args):
        if log is not None:
            log.append(("is_connected", args[0].num))
        return i32(1 if online else 0)

    return {
        ("env", "chip_delay"): HostFunc(TypeSig((I32,), ()), lambda a: None),
        ("env", "req_temp"): HostFunc(TypeSig((I32,), (F32,)), req_temp),
        ("env", "is_connected"): HostFunc(TypeSig((I32,), (I32,)), is_connected),
    }


def countdown_depth_oracle(n: int) -> int:
    """Reference recursion: frames alive when the base case is entered."""
    depth = 1  # the entry function's frame
    k = n
    while True:
        depth += 1  # one recursive frame per argument value n..0
        if k == 0:
            return depth
        k -= 1


# --- instantiate ---

def test_instantiate_positions_at_main(countdown_module):
    s = instantiate(countdown_module)
    assert s.pc == (countdown_module.func_index("main"), 0)
    assert s.value_stack == []
    assert len(s.call_stack) == 1
    assert s.status is Status.RUNNING
    assert len(s.memory) == 65536
    assert bytes(s.memory) == b"\x00" * 65536
    assert [g.num for g in s.globals] == [0, 0]


def test_instantiate_tma_with_prims(tma_module):
    s = instantiate(tma_module, scripted_tma_prims(online=True))
    assert s.status is Status.RUNNING
    assert [g.num for g in s.globals] == [3030, 3031, 0.0]


def test_instantiate_requires_main():
    m = parse_module("(module)")
    with pytest.raises(NoMainExport):
        instantiate(m)


def test_instantiate_requires_bound_imports(tma_module):
    with pytest.raises(UnboundImport):
        instantiate(tma_module, {})


def test_instantiate_rejects_signature_mismatch(tma_module):
    prims = scripted_tma_prims(online=True)
    prims[("env", "chip_delay")] = HostFunc(TypeSig((I64,), ()), lambda a: None)
    with pytest.raises(UnboundImport):
        instantiate(tma_module, prims)


# --- step ---

def test_step_i64_sub(countdown_module):
    s = instantiate(countdown_module)
    cd = countdown_module.func_index("countdown")
    body = countdown_module.funcs[cd].body
    sub_off = next(off for off, ins in enumerate(body)
                   if ins.op == 0x14)  # i64.sub
    s.pc = (cd, sub_off)
    from oot.vm.state import Frame
    s.call_stack.append(Frame(cd, (2, 1), 0, [i64(5)]))
    s.value_stack = [i64(5), i64(1)]
    out = step(s)
    assert out.status is Status.RUNNING
    assert s.value_stack == [i64(4)]
    assert s.pc == (cd, sub_off + 1)


def test_step_f32_div_by_zero_traps(tma_module):
    s = instantiate(tma_module, scripted_tma_prims(online=False))
    div_at = resolve_breakpoint(tma_module, 44)
    run(s, budget=100_000)
    assert s.status is Status.TRAPPED
    assert s.trap.kind is TrapKind.DIVISION_BY_ZERO
    assert s.trap.at == div_at
    assert s.error_counter == div_at


def test_step_requires_running(countdown_module):
    s = instantiate(countdown_module)
    s.status = Status.HALTED
    with pytest.raises(BadState):
        step(s)


def test_countdown_base_case_returns_zero(countdown_module):
    s = instantiate(countdown_module)
    result = invoke_isolated(s, countdown_module.func_index("countdown"),
                             [i64(0)])
    assert result == i64(0)


# --- run ---

@pytest.mark.parametrize("arg", [0, 1, 2, 7, 50])
def test_run_to_breakpoint_depth_matches_oracle(arg):
    m = parse_module(corpus.countdown_source(arg))
    s = instantiate(m)
    s.breakpoints.add(resolve_breakpoint(m, 27))
    run(s)
    assert s.status is Status.PAUSED_AT_BREAKPOINT
    assert s.pc == resolve_breakpoint(m, 27)
    assert len(s.call_stack) == countdown_depth_oracle(arg)
    assert s.value_stack == []


def test_run_budget_zero_is_noop(countdown_module):
    s = instantiate(countdown_module)
    before = snapshot(s)
    run(s, budget=0)
    assert snapshot(s) == before


def test_run_pauses_before_breakpoint_executes(countdown_module):
    s = instantiate(countdown_module)
    bp = resolve_breakpoint(countdown_module, 27)
    s.breakpoints.add(bp)
    run(s)
    # the breakpointed const has not pushed yet
    assert s.value_stack == []
    s.status = Status.RUNNING
    s.just_resumed = True
    run(s, budget=1)
    assert s.value_stack == [i64(0)]


def test_resume_does_not_retrigger_same_breakpoint(countdown_module):
    s = instantiate(countdown_module)
    bp = resolve_breakpoint(countdown_module, 27)
    s.breakpoints.add(bp)
    run(s)
    first = s.instr_count
    s.status = Status.RUNNING
    s.just_resumed = True
    run(s)
    assert s.instr_count > first  # progressed to the next arrival


def test_run_tma_disconnected_traps_at_div(tma_module):
    s = instantiate(tma_module, scripted_tma_prims(online=False))
    run(s, budget=100_000)
    assert s.status is Status.TRAPPED
    assert s.trap.kind is TrapKind.DIVISION_BY_ZERO
    fi, _ = s.trap.at
    assert fi == tma_module.func_index("avgTemp")
    # the offending denominator is still inspectable
    assert s.value_stack[-1] == f32(0.0)


def test_run_tma_online_loops_without_trap(tma_module):
    s = instantiate(tma_module, scripted_tma_prims(online=True, temp=20.0))
    run(s, budget=5000)
    assert s.status is Status.RUNNING
    assert s.error_counter is None


# --- limits ---

def test_call_stack_limit_traps():
    m = parse_module(corpus.countdown_source(5000))
    s = instantiate(m, limits=StackLimits(max_call_stack=64))
    run(s, budget=100_000)
    assert s.status is Status.TRAPPED
    assert s.trap.kind is TrapKind.STACK_EXHAUSTED
    assert len(s.call_stack) == 64


def test_value_stack_limit_traps():
    # each recursion level parks one operand on the value stack
    src = """(module
      (type $t (func (param) (result)))
      (func $main (type $t) (i64.const 7) (call $main) drop)
      (export "main" (func $main)))"""
    s = instantiate(parse_module(src),
                    limits=StackLimits(max_value_stack=32,
                                       max_call_stack=10_000))
    run(s, budget=10_000)
    assert s.status is Status.TRAPPED
    assert s.trap.kind is TrapKind.STACK_EXHAUSTED
    assert len(s.value_stack) == 32


# --- memory ops ---

def test_memory_load_store_round_trip():
    src = """(module
      (type $t (func (param) (result)))
      (memory 1)
      (func $main (type $t)
        (i32.const 16) (i32.const -123456) i32.store
        (i32.const 16) i32.load drop)
      (export "main" (func $main)))"""
    s = instantiate(parse_module(src))
    run(s, budget=10)
    assert s.status is Status.HALTED
    assert s.memory[16:20] == (-123456).to_bytes(4, "little", signed=True)


def test_memory_out_of_bounds_traps():
    src = """(module
      (type $t (func (param) (result)))
      (memory 1)
      (func $main (type $t) (i32.const 65533) i32.load drop)
      (export "main" (func $main)))"""
    s = instantiate(parse_module(src))
    run(s, budget=10)
    assert s.status is Status.TRAPPED
    assert s.trap.kind is TrapKind.OUT_OF_BOUNDS_MEMORY


# --- invoke_isolated ---

def test_invoke_isolated_value_and_state(tma_module):
    s = instantiate(tma_module, scripted_tma_prims(online=True))
    run(s, budget=7)  # somewhere inside the first loop iteration
    before = execution_projection(s)
    result = invoke_isolated(s, tma_module.func_index("isConnected"),
                             [i32(3030)])
    assert result == i32(1)
    assert execution_projection(s) == before


def test_invoke_isolated_trap_leaves_state(tma_module):
    s = instantiate(tma_module, scripted_tma_prims(online=False))
    run(s, budget=5)
    before = execution_projection(s)
    result = invoke_isolated(s, tma_module.func_index("reqTemp"), [i32(3030)])
    assert isinstance(result, Trap)
    assert result.kind is TrapKind.HOST_ERROR
    assert execution_projection(s) == before
    assert s.status is Status.RUNNING


def test_invoke_isolated_defined_function_trap(tma_module):
    # avgTemp divides by zero when the connectivity count global is zero
    s = instantiate(tma_module, scripted_tma_prims(online=False))
    run(s, budget=3)
    before = execution_projection(s)
    result = invoke_isolated(s, tma_module.func_index("avgTemp"), [])
    assert isinstance(result, Trap)
    assert result.kind is TrapKind.DIVISION_BY_ZERO
    assert execution_projection(s) == before


def test_invoke_isolated_argument_mismatch(countdown_module):
    s = instantiate(countdown_module)
    result = invoke_isolated(s, countdown_module.func_index("countdown"),
                             [i32(1)])
    assert isinstance(result, Trap)


def test_invoke_isolated_keeps_global_writes(tma_module):
    s = instantiate(tma_module, scripted_tma_prims(online=True))
    run(s, budget=3)
    connected = 2  # global index of the connectivity counter
    before = s.globals[connected]
    result = invoke_isolated(s, tma_module.func_index("inc_connected"), [])
    assert result is None
    assert s.globals[connected].num == before.num + 1.0


def test_invoke_isolated_random_call_points():
    rng = random.Random(11)
    m = parse_module(corpus.countdown_source(6))
    for _ in range(40):
        s = instantiate(m)
        run(s, budget=rng.randrange(0, 400))
        if s.status is not Status.RUNNING:
            continue
        before = execution_projection(s)
        arg = rng.randrange(0, 20)
        assert invoke_isolated(s, m.func_index("countdown"),
                               [i64(arg)]) == i64(0)
        assert execution_projection(s) == before


# --- cross-cutting properties ---

def test_countdown_always_evaluates_to_zero(countdown_module):
    s = instantiate(countdown_module)
    cd = countdown_module.func_index("countdown")
    for n in [0, 1, 2, 3, 10, 101, 500]:
        assert invoke_isolated(s, cd, [i64(n)]) == i64(0)


def test_deterministic_traces(tma_module):
    def trace(seed_state, n):
        out = []
        for _ in range(n):
            if seed_state.status is not Status.RUNNING:
                break
            out.append(seed_state.pc)
            _step_inner(seed_state)
        return out

    a = instantiate(tma_module, scripted_tma_prims(online=True))
    b = instantiate(tma_module, scripted_tma_prims(online=True))
    assert trace(a, 3000) == trace(b, 3000)


def test_stack_discipline(countdown_module):
    s = instantiate(countdown_module)
    for _ in range(2000):
        if s.status is not Status.RUNNING:
            break
        _step_inner(s)
        top = s.call_stack[-1] if s.call_stack else None
        if top is not None:
            assert len(s.value_stack) >= top.value_stack_base


def test_trap_bookkeeping_invariant(tma_module):
    s = instantiate(tma_module, scripted_tma_prims(online=False))
    run(s, budget=100_000)
    assert s.status is Status.TRAPPED
    assert s.error_counter == s.trap.at

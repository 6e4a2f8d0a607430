import random

import pytest
from conftest import read_fixture_hex, snapshot
from hypothesis import given, settings
from hypothesis import strategies as st

from oot import corpus
from oot.errors import BadState, CapacityExceeded, DecodeError, ModuleMismatch
from oot.session import (DebugSession, MemMgmtMsg, RemoteDump, apply_session,
                         decode_session, dump_from_bytes, dump_size_bytes,
                         dump_to_bytes, encode_session, extract_dump,
                         extract_session, session_size_bytes,
                         session_to_bytes, split_stream)
from oot.values import F32, F64, I32, I64, Value, f32, i32, i64, round_f32
from oot.vm import StackLimits, Status, instantiate, run
from oot.vm.interp import _step_inner
from oot.vm.state import Frame
from oot.wat import parse_module, resolve_breakpoint

from test_vm_core import countdown_depth_oracle, scripted_tma_prims


def paused_countdown(arg: int, limits: StackLimits | None = None):
    m = parse_module(corpus.countdown_source(arg))
    s = instantiate(m, limits=limits)
    s.breakpoints.add(resolve_breakpoint(m, 27))
    run(s)
    assert s.status is Status.PAUSED_AT_BREAKPOINT
    return m, s


# --- extract ---

def test_extract_depth_matches_oracle():
    _, s = paused_countdown(2)
    d = extract_session(s)
    assert len(d.call_stack) == countdown_depth_oracle(2)
    assert d.pc == s.pc
    assert d.module_hash == s.module_hash


def test_extract_requires_pause(countdown_module):
    s = instantiate(countdown_module)
    with pytest.raises(BadState):
        extract_session(s)


def test_extract_fresh_state(countdown_module):
    s = instantiate(countdown_module)
    s.status = Status.PAUSED_AT_BREAKPOINT
    d = extract_session(s)
    assert d.value_stack == []
    assert d.memory_pages == b"\x00" * 65536
    assert d.error_counter is None


def test_extract_is_a_copy(countdown_module):
    _, s = paused_countdown(3)
    d = extract_session(s)
    before = snapshot(s)
    d.value_stack.append(i64(9))
    d.call_stack[0].locals.append(i64(1))
    d.breakpoints.add((0, 0))
    assert snapshot(s) == before


def test_extract_trapped_tma_records_error(tma_module):
    s = instantiate(tma_module, scripted_tma_prims(online=False))
    run(s, budget=100_000)
    assert s.status is Status.TRAPPED
    d = extract_session(s)
    assert d.error_counter == resolve_breakpoint(tma_module, 44)


# --- apply ---

def test_apply_then_resume_matches_uninterrupted():
    m = parse_module(corpus.countdown_source(4))
    ref = instantiate(m)
    interrupted = instantiate(m)

    cut = 100
    ref_trace = []
    for _ in range(400):
        ref_trace.append(ref.pc)
        _step_inner(ref)

    head = []
    for _ in range(cut):
        head.append(interrupted.pc)
        _step_inner(interrupted)
    interrupted.status = Status.PAUSED_AT_BREAKPOINT
    stream = session_to_bytes(extract_session(interrupted))

    fresh = instantiate(parse_module(corpus.countdown_source(4)))
    apply_session(fresh, decode_session(stream))
    assert fresh.status is Status.PAUSED_AT_BREAKPOINT
    fresh.status = Status.RUNNING
    tail = []
    for _ in range(400 - cut):
        tail.append(fresh.pc)
        _step_inner(fresh)
    assert head + tail == ref_trace


def test_apply_rejects_other_module(countdown_module, tma_module):
    _, s = paused_countdown(2)
    d = extract_session(s)
    other = instantiate(tma_module, scripted_tma_prims(online=True))
    with pytest.raises(ModuleMismatch):
        apply_session(other, d)


def test_apply_rejects_oversized_session():
    m, s = paused_countdown(100)
    d = extract_session(s)
    small = instantiate(m, limits=StackLimits(max_call_stack=10))
    with pytest.raises(CapacityExceeded):
        apply_session(small, d)
    assert small.status is Status.RUNNING  # untouched


# --- codec ---

def test_round_trip_paused_session():
    _, s = paused_countdown(5)
    d = extract_session(s)
    mem, chunks = encode_session(d)
    assert mem.call_stack_len == len(d.call_stack)
    assert chunks[-1].done_flag == 0x01
    assert all(c.done_flag == 0x00 for c in chunks[:-1])
    assert decode_session(session_to_bytes(d)) == d


def test_empty_session_golden_stream():
    import hashlib
    from oot.wat import encode_module
    empty_hash = hashlib.sha256(
        encode_module(parse_module("(module)"))).digest()
    d = DebugSession((0, 0), None, set(), [], [], [], b"", [], empty_hash)
    assert session_to_bytes(d) == read_fixture_hex("empty_session.stream.hex")


def test_unterminated_stream_rejected():
    _, s = paused_countdown(1)
    stream = bytearray(session_to_bytes(extract_session(s)))
    stream[-1] = 0x00  # clear the final done flag
    with pytest.raises(DecodeError, match="unterminated"):
        decode_session(bytes(stream))


def test_chunk_order_violation_rejected():
    _, s = paused_countdown(1)
    mem, chunks = encode_session(extract_session(s))
    swapped = [chunks[1], chunks[0]] + chunks[2:]
    stream = mem.encode() + b"".join(c.encode() for c in swapped)
    with pytest.raises(DecodeError, match="out of order"):
        decode_session(stream)


def test_sizing_message_mismatch_rejected():
    _, s = paused_countdown(1)
    d = extract_session(s)
    mem, chunks = encode_session(d)
    lied = MemMgmtMsg(mem.value_stack_len, mem.call_stack_len + 1,
                      mem.globals_len, mem.table_len, mem.memory_page_count)
    stream = lied.encode() + b"".join(c.encode() for c in chunks)
    with pytest.raises(DecodeError, match="disagrees"):
        decode_session(stream)


def test_split_stream_reassembles():
    _, s = paused_countdown(2)
    d = extract_session(s)
    stream = session_to_bytes(d)
    mem, chunks = split_stream(stream)
    assert mem.encode() + b"".join(c.encode() for c in chunks) == stream


# --- randomized round-trip property ---

_values = st.one_of(
    st.integers(-(2**31), 2**31 - 1).map(i32),
    st.integers(-(2**63), 2**63 - 1).map(i64),
    st.floats(width=32, allow_nan=False).map(f32),
    st.floats(allow_nan=False).map(lambda x: Value(F64, x)),
)

_coff = st.tuples(st.integers(0, 2**32 - 1), st.integers(0, 2**32 - 1))

_frames = st.builds(
    Frame,
    func_index=st.integers(0, 1000),
    return_pc=st.one_of(st.none(), _coff),
    value_stack_base=st.integers(0, 1000),
    locals=st.lists(_values, max_size=4),
)


@st.composite
def _sessions(draw):
    pages = draw(st.integers(0, 1))
    memory = bytearray(pages * 65536)
    if memory:
        for _ in range(draw(st.integers(0, 8))):
            memory[draw(st.integers(0, len(memory) - 1))] = draw(st.integers(0, 255))
    return DebugSession(
        pc=draw(_coff),
        error_counter=draw(st.one_of(st.none(), _coff)),
        breakpoints=draw(st.sets(_coff, max_size=5)),
        value_stack=draw(st.lists(_values, max_size=6)),
        call_stack=draw(st.lists(_frames, max_size=5)),
        globals=draw(st.lists(_values, max_size=4)),
        memory_pages=bytes(memory),
        table=draw(st.lists(st.integers(0, 2**32 - 1), max_size=4)),
        module_hash=draw(st.binary(min_size=32, max_size=32)),
    )


@settings(max_examples=120, deadline=None)
@given(_sessions())
def test_session_round_trip_property(d):
    assert decode_session(session_to_bytes(d)) == d


# --- sizes ---

def test_session_size_matches_stream_length():
    _, s = paused_countdown(9)
    d = extract_session(s)
    assert session_size_bytes(d) == len(session_to_bytes(d))


def test_dump_smaller_than_session_everywhere():
    for arg in (0, 1, 4, 16):
        _, s = paused_countdown(arg)
        assert dump_size_bytes(extract_dump(s)) < session_size_bytes(
            extract_session(s))


def test_deeper_stacks_mean_strictly_larger_sessions():
    sizes = []
    for arg in (1, 2, 4, 8, 16, 32):
        _, s = paused_countdown(arg)
        sizes.append(session_size_bytes(extract_session(s)))
    assert sizes == sorted(sizes)
    assert len(set(sizes)) == len(sizes)


def test_empty_dump_golden_size():
    r = RemoteDump((0, 0), [], set())
    assert dump_to_bytes(r) == read_fixture_hex("empty_dump.hex")
    assert dump_size_bytes(r) == 16


def test_dump_round_trip():
    _, s = paused_countdown(3)
    r = extract_dump(s)
    again = dump_from_bytes(dump_to_bytes(r))
    assert again.pc == r.pc
    assert again.call_stack == r.call_stack
    assert again.breakpoints == r.breakpoints

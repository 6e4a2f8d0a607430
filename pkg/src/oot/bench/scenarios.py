"""Desk-scale reproductions of the measurement scenarios.

Byte metrics come straight from the codecs, so they are exact integers
and identical across runs; wall-clock metrics are measured and reported.
"""

from __future__ import annotations

import csv
import io
import statistics
import time
from dataclasses import dataclass, field

from .. import corpus, wire
from ..device import (DeviceSim, MasterNode, RealClock, load_sensor_script,
                      make_clock)
from ..errors import CapacityExceeded
from ..monitor import (REMOTE_CAPABILITIES, Monitor, MonitorContext,
                       receive_state, update_module)
from ..proxy import Mock, ProxyConfig, Remote, make_proxy_primitives, set_strategy
from ..server import ServerConfig, VmClient, VmServer
from ..session import (apply_session, decode_session, extract_session,
                       session_size_bytes, session_to_bytes, split_stream)
from ..transport import connect
from ..values import f32
from ..vm.interp import instantiate, run, run_unchecked
from ..vm.state import StackLimits, Status
from ..wat import encode_module, parse_module, resolve_breakpoint

BREAK_LINE_DEEPEST = 27  # countdown: where the stack is maximal
TMA_BREAK_LOOP = 48
TMA_DIV_LINE = 44


@dataclass
class ScenarioResult:
    rows: list[tuple[str, float, float]] = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    def add(self, metric: str, x: float, y: float) -> None:
        self.rows.append((metric, x, y))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["metric", "x", "y"])
        writer.writerows(self.rows)
        return buf.getvalue()

    def series(self, metric: str) -> list[tuple[float, float]]:
        return [(x, y) for m, x, y in self.rows if m == metric]


def _paused_at_deepest(arg: int, limits: StackLimits):
    m = parse_module(corpus.countdown_source(arg))
    vm = instantiate(m, limits=limits)
    vm.breakpoints.add(resolve_breakpoint(m, BREAK_LINE_DEEPEST))
    run(vm, budget=40 * arg + 4000)
    return m, vm


def scenario_session_scaling(args: list[int],
                             remote_limits: StackLimits | None = None,
                             apply_limits: StackLimits | None = None,
                             repeats: int = 3) -> ScenarioResult:
    """Session size and reconstruction time as the recursion deepens.

    Arguments whose sessions exceed the reconstruction-side limits are
    flagged instead of measured, reproducing the memory-limit wall.
    """
    biggest = max(args)
    remote_limits = remote_limits or StackLimits(max_value_stack=1 << 18,
                                                 max_call_stack=biggest + 64)
    apply_limits = apply_limits or StackLimits()
    result = ScenarioResult()

    for arg in args:
        m, vm = _paused_at_deepest(arg, remote_limits)
        if vm.status is Status.TRAPPED:
            result.add("stack_exhausted", arg, 1)
            continue
        assert vm.status is Status.PAUSED_AT_BREAKPOINT
        size = session_size_bytes(extract_session(vm))
        timings = []
        flagged = False
        for _ in range(repeats):
            fresh = instantiate(m, limits=apply_limits)
            t0 = time.perf_counter()
            stream = session_to_bytes(extract_session(vm))
            session = decode_session(stream)
            try:
                apply_session(fresh, session)
            except CapacityExceeded:
                result.add("capacity_exceeded", arg, 1)
                flagged = True
                break
            timings.append((time.perf_counter() - t0) * 1000.0)
        if flagged:
            continue
        result.add("session_bytes", arg, size)
        result.add("reconstruct_ms", size, statistics.median(timings))
    return result


def scenario_network_overhead(arg: int = 8192, steps: int = 5) -> ScenarioResult:
    """Cumulative device-link bytes for pull-once-then-step-locally versus
    stepping remotely with a state dump after every step."""
    result = ScenarioResult()
    limits = StackLimits(max_value_stack=1 << 18, max_call_stack=arg + 64)

    # Pull one full session, then do every step on the reconstruction.
    m, vm = _paused_at_deepest(arg, limits)
    assert vm.status is Status.PAUSED_AT_BREAKPOINT
    monitor = Monitor(vm, MonitorContext(capabilities=REMOTE_CAPABILITIES))
    resp = monitor.handle(wire.InterruptMessage(
        wire.DUMP, wire.pack_dump_request(wire.DUMP_FULL_SESSION)))
    assert resp.ok
    session_bytes = len(resp.payload)
    local = instantiate(m, limits=limits)
    local_monitor = Monitor(local, MonitorContext(capabilities=REMOTE_CAPABILITIES))
    assert local_monitor.handle(wire.InterruptMessage(
        wire.RECEIVE_STATE, resp.payload)).ok
    result.add("oot_cumulative_bytes", 0, session_bytes)
    for i in range(1, steps + 1):
        assert local_monitor.handle(wire.InterruptMessage(wire.STEP)).ok
        result.add("oot_cumulative_bytes", i, session_bytes)

    # Classic remote debugging: step on the device, re-pull a dump each time.
    m2, vm2 = _paused_at_deepest(arg, limits)
    assert vm2.status is Status.PAUSED_AT_BREAKPOINT
    monitor2 = Monitor(vm2, MonitorContext(capabilities=REMOTE_CAPABILITIES))
    cumulative = 0

    def pull_dump() -> int:
        resp = monitor2.handle(wire.InterruptMessage(
            wire.DUMP, wire.pack_dump_request(wire.DUMP_BASELINE)))
        assert resp.ok
        return len(resp.payload)

    cumulative += pull_dump()
    result.add("baseline_cumulative_bytes", 0, cumulative)
    for i in range(1, steps + 1):
        assert monitor2.handle(wire.InterruptMessage(wire.STEP)).ok
        cumulative += pull_dump()
        result.add("baseline_cumulative_bytes", i, cumulative)

    result.stats["session_bytes"] = session_bytes
    return result


_BROADCAST_SCRIPT = {
    "sensors": {"0": {"timeline": [[0, True]], "temp": {"const": 21.5}}},
    "clock": "real",
}


def _broadcast_once(n: int, proxied: bool, period_ms: int) -> list[float]:
    master = MasterNode().start()
    module = parse_module(corpus.load(corpus.TEMP_BROADCAST))
    script = load_sensor_script(dict(_BROADCAST_SCRIPT))
    sink = None
    server = None
    local_link = None
    try:
        sink = connect("127.0.0.1", master.port)
        devsim = DeviceSim(script, RealClock(), sink)
        server = VmServer(module, ServerConfig(role="remote",
                                               restart_on_trap=False),
                          devsim=devsim).start()
        local_vm = None
        if proxied:
            local_link = connect("127.0.0.1", server.port)
            cfg = ProxyConfig.for_module(module)
            table, facade = make_proxy_primitives(module, cfg, local_link)
            local_vm = instantiate(module, table)
            facade.vm = local_vm
            ctemp = module.func_index("ctemp")
            set_strategy(cfg, ctemp, Remote())

        deadline = time.monotonic() + (n + 3) * period_ms / 1000.0 * 2 + 10
        while len(master.log.entries) < n + 1 and time.monotonic() < deadline:
            if local_vm is not None and local_vm.status is Status.RUNNING:
                run(local_vm, budget=500)
            else:
                time.sleep(0.01)
    finally:
        if server is not None:
            server.stop()
        if local_link is not None:
            local_link.close()
        if sink is not None:
            sink.close()
        master.stop()
    gaps = master.log.inter_arrival_s()
    return gaps[:n]


def scenario_proxy_overhead(n: int = 30, period_ms: int = 1000) -> ScenarioResult:
    """Broadcast cadence at the master node with and without continuous
    proxying of the temperature read. Real clock; runtime about 2*n seconds."""
    result = ScenarioResult()
    for label, proxied in (("no_interrupts", False), ("proxy_interrupts", True)):
        gaps = _broadcast_once(n, proxied, period_ms)
        for i, g in enumerate(gaps):
            result.add(f"{label}_gap_s", i, g)
        stats = {
            "mean": statistics.fmean(gaps),
            "min": min(gaps),
            "max": max(gaps),
            "std": statistics.pstdev(gaps),
            "count": len(gaps),
        }
        result.stats[label] = stats
        for key in ("mean", "min", "max", "std"):
            result.add(f"{label}_{key}", 0, stats[key])
    return result


def measure_hook_overhead(budget: int = 1_500_000) -> dict:
    """Instruction throughput with and without the per-instruction debugger
    hooks, on the deep-recursion workload."""
    timings = {}
    for label, runner in (("hooks_on", run), ("hooks_off", run_unchecked)):
        m = parse_module(corpus.countdown_source(1 << 20))
        vm = instantiate(m, limits=StackLimits(max_value_stack=1 << 22,
                                               max_call_stack=1 << 21))
        t0 = time.perf_counter()
        runner(vm, budget)
        dt = time.perf_counter() - t0
        timings[label] = vm.instr_count / dt
    timings["ratio"] = timings["hooks_on"] / timings["hooks_off"]
    return timings


@dataclass
class Checkpoint:
    name: str
    ok: bool
    detail: str = ""


@dataclass
class TmaTranscript:
    checks: list[Checkpoint] = field(default_factory=list)

    def record(self, name: str, ok: bool, detail: str = "") -> None:
        self.checks.append(Checkpoint(name, bool(ok), detail))

    @property
    def passed(self) -> bool:
        return all(c.ok for c in self.checks)

    def render(self) -> str:
        lines = []
        for c in self.checks:
            mark = "ok" if c.ok else "FAIL"
            detail = f"  ({c.detail})" if c.detail else ""
            lines.append(f"[{mark:4}] {c.name}{detail}")
        lines.append(f"result: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def _wait_until(predicate, timeout_s: float = 10.0, step_s: float = 0.002) -> bool:
    deadline = time.monotonic() + timeout_s
    while time.monotonic() < deadline:
        if predicate():
            return True
        time.sleep(step_s)
    return False


def scenario_tma_walkthrough(iterations: int = 10) -> TmaTranscript:
    """The full monitoring-application debugging story, non-interactive.

    Phases flip the scripted sensor connectivity: offline (device traps
    and reboots, error counter records the faulty division), online
    (device healthy; the session is pulled through a single-stop
    breakpoint and diagnosed locally with a mocked connectivity check),
    then offline again to prove the committed fix holds without sensors.
    """
    t = TmaTranscript()
    module = parse_module(corpus.load(corpus.TEMP_MONITOR))
    fixed_module = parse_module(corpus.load(corpus.TEMP_MONITOR_FIXED))
    div_at = resolve_breakpoint(module, TMA_DIV_LINE)
    loop_at = resolve_breakpoint(module, TMA_BREAK_LOOP)

    script = load_sensor_script({
        "sensors": {
            "3030": {"timeline": [[0, False]], "temp": {"const": 20.0}},
            "3031": {"timeline": [[0, False]], "temp": {"const": 24.0}},
        },
        "clock": "virtual",
    })

    def set_online(online: bool) -> None:
        for spec in script.sensors.values():
            spec.timeline = [(0.0, online)]

    devsim = DeviceSim(script, make_clock(script))
    server = VmServer(module, ServerConfig(role="remote", restart_on_trap=True,
                                           restart_delay_ms=1000.0),
                      devsim=devsim).start()
    client = None
    local_link = None
    try:
        # Phase 1: disconnected sensors crash and reboot the device.
        rebooted = _wait_until(lambda: server.vm.error_counter is not None)
        t.record("device trapped while offline",
                 rebooted and server.vm.error_counter == div_at,
                 f"error counter {server.vm.error_counter}")

        # Phase 2: sensors come back; the device looks healthy again.
        set_online(True)
        _wait_until(lambda: server.vm.status is Status.RUNNING
                    and server.vm.trap is None)

        client = VmClient.connect("127.0.0.1", server.port)
        resp = client.request(wire.SET_POLICY,
                              wire.pack_policy(wire.POLICY_SINGLE_STOP))
        t.record("single-stop policy set", resp.ok)
        resp = client.request(wire.ADD_BREAKPOINT, wire.pack_code_offset(loop_at))
        t.record("breakpoint on the loop head", resp.ok)

        pushed = client.wait_push(timeout=10.0)
        session = decode_session(pushed)
        t.record("session arrived from the loop-head breakpoint",
                 session.pc == loop_at, f"pc {session.pc}")
        t.record("error counter names the division",
                 session.error_counter == div_at,
                 f"error counter {session.error_counter}")
        _wait_until(lambda: server.vm.status is Status.RUNNING, 5.0)
        t.record("device kept running after the stop",
                 server.vm.status is Status.RUNNING
                 and not server.vm.breakpoints,
                 f"status {server.vm.status.name}, "
                 f"breakpoints {server.vm.breakpoints}")

        # Local reconstruction with proxied device functions.
        local_link = connect("127.0.0.1", server.port)
        cfg = ProxyConfig.for_module(module)
        table, facade = make_proxy_primitives(module, cfg, local_link)
        local = instantiate(module, table)
        facade.vm = local
        for sym in ("isConnected", "reqTemp"):
            set_strategy(cfg, module.func_index(sym), Remote())
        receive_state(local, *split_stream(pushed))
        t.record("reconstruction adopted the session",
                 local.status is Status.PAUSED_AT_BREAKPOINT
                 and local.pc == loop_at)

        # Mock connectivity to reproduce the fault locally.
        set_strategy(cfg, module.func_index("isConnected"), Mock(None))
        local.breakpoints.add(div_at)
        local.status = Status.RUNNING
        local.just_resumed = True
        run(local, budget=100_000)
        denominator = local.value_stack[-1] if local.value_stack else None
        t.record("denominator observed zero at the division",
                 local.status is Status.PAUSED_AT_BREAKPOINT
                 and local.pc == div_at and denominator == f32(0.0),
                 f"status {local.status.name}, top {denominator}")

        # Try the fix on the reconstruction first.
        fixed_blob = encode_module(fixed_module)
        update_module(local, fixed_blob, table)
        t.record("fix loaded locally",
                 len(local.module.globals) == 4
                 and local.status is Status.RUNNING)
        run(local, budget=5000)
        t.record("fix survives mocked disconnection locally",
                 local.status is Status.RUNNING and local.trap is None
                 and local.error_counter is None,
                 f"status {local.status.name}")

        # Phase 3: sensors drop again, then the fix ships to the device.
        set_online(False)
        base_iterations = devsim.calls.get("chip_delay", 0)
        resp = client.request(wire.UPDATE_MODULE, fixed_blob, timeout=30.0)
        t.record("fix committed to the device", resp.ok)
        reached = _wait_until(
            lambda: devsim.calls.get("chip_delay", 0) >= base_iterations + iterations,
            timeout_s=30.0)
        t.record(f"device ran {iterations} offline loop iterations on the fix",
                 reached and server.vm.status is Status.RUNNING
                 and server.vm.error_counter is None,
                 f"status {server.vm.status.name}, "
                 f"iterations {devsim.calls.get('chip_delay', 0) - base_iterations}")

        # A corrupt commit must not disturb the device.
        resp = client.request(wire.UPDATE_MODULE, b"\x00garbage")
        still = devsim.calls.get("chip_delay", 0)
        alive = _wait_until(lambda: devsim.calls.get("chip_delay", 0) > still, 10.0)
        t.record("corrupt commit rejected, device unaffected",
                 (not resp.ok) and alive and server.vm.status is Status.RUNNING)
    finally:
        if client is not None:
            client.close()
        if local_link is not None:
            local_link.close()
        server.stop()
    return t


def scenario_tma_no_bug_control() -> TmaTranscript:
    """Same wiring, sensors online throughout: no trap, no error counter."""
    t = TmaTranscript()
    module = parse_module(corpus.load(corpus.TEMP_MONITOR))
    loop_at = resolve_breakpoint(module, TMA_BREAK_LOOP)
    script = load_sensor_script({
        "sensors": {
            "3030": {"timeline": [[0, True]], "temp": {"const": 20.0}},
            "3031": {"timeline": [[0, True]], "temp": {"const": 24.0}},
        },
        "clock": "virtual",
    })
    devsim = DeviceSim(script, make_clock(script))
    server = VmServer(module, ServerConfig(role="remote"),
                      devsim=devsim).start()
    client = None
    try:
        client = VmClient.connect("127.0.0.1", server.port)
        client.request(wire.SET_POLICY, wire.pack_policy(wire.POLICY_SINGLE_STOP))
        client.request(wire.ADD_BREAKPOINT, wire.pack_code_offset(loop_at))
        session = decode_session(client.wait_push(timeout=10.0))
        t.record("session pulled in the healthy control run",
                 session.pc == loop_at)
        t.record("no error counter in the control run",
                 session.error_counter is None,
                 f"error counter {session.error_counter}")
    finally:
        if client is not None:
            client.close()
        server.stop()
    return t

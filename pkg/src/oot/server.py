"""The long-running VM process: socket service plus the dispatch loop.

One thread owns everything: it accepts connections, drains one interrupt
per instruction boundary, advances the program in slices, and applies
breakpoint-policy and trap behavior. A device build can optionally
reboot its application after an uncaught trap (the error counter and
breakpoints survive, application state does not) the way a crashing
thermostat would restart.

While the device is inside a long primitive wait (its delay call), only
proxy-call interrupts are serviced; everything else stays queued for the
next instruction boundary.
"""

from __future__ import annotations

import threading
import time
from collections import deque
from dataclasses import dataclass

from . import wire
from .errors import Disconnected, MalformedInterrupt, OotError
from .monitor import (LOCAL_CAPABILITIES, REMOTE_CAPABILITIES,
                      BreakpointPolicy, Monitor, MonitorContext,
                      on_breakpoint_hit, reboot)
from .proxy import ProxyConfig, make_proxy_primitives
from .session import extract_session, session_to_bytes
from .transport import Endpoint, connect, listen
from .vm.interp import instantiate, run
from .vm.state import StackLimits, Status
from .wat.ast import SourceModule

RUN_SLICE = 2000


@dataclass
class ServerConfig:
    role: str = "remote"                    # "remote" | "local"
    port: int = 0
    limits: StackLimits | None = None
    restart_on_trap: bool = True
    restart_delay_ms: float = 1000.0
    run_slice: int = RUN_SLICE
    start_running: bool = True


class VmServer:
    def __init__(self, module: SourceModule, config: ServerConfig,
                 prims=None, devsim=None, device_link: Endpoint | None = None):
        self.config = config
        self.devsim = devsim
        self.device_link = device_link
        self.proxy_cfg: ProxyConfig | None = None

        if config.role == "local":
            self.proxy_cfg = ProxyConfig.for_module(module)
            table, facade = make_proxy_primitives(module, self.proxy_cfg,
                                                  device_link)
            self.vm = instantiate(module, table, config.limits)
            facade.vm = self.vm
            capabilities = LOCAL_CAPABILITIES
            prims = table
        else:
            prims = prims if prims is not None else (
                devsim.primitives() if devsim is not None else {})
            self.vm = instantiate(module, prims, config.limits)
            capabilities = REMOTE_CAPABILITIES

        self.ctx = MonitorContext(
            policy=BreakpointPolicy.PAUSE_DEFAULT,
            capabilities=capabilities,
            prims=prims,
            proxy_cfg=self.proxy_cfg,
            push=self._push,
        )
        self.monitor = Monitor(self.vm, self.ctx)
        self.listener = listen(config.port)
        self.port = self.listener.port
        self.peers: list[Endpoint] = []
        self.inbox: deque[tuple[Endpoint, wire.InterruptMessage]] = deque()
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

        if not config.start_running:
            self.vm.status = Status.PAUSED_AT_BREAKPOINT
        if devsim is not None:
            devsim.clock.on_wait = self._service_proxy_calls

    # --- plumbing ---

    def _push(self, data: bytes) -> None:
        for ep in list(self.peers):
            try:
                ep.send_frame(data)
            except Disconnected:
                self._drop(ep)

    def _drop(self, ep: Endpoint) -> None:
        if ep in self.peers:
            self.peers.remove(ep)
        ep.close()

    def _accept_new(self) -> None:
        ep = self.listener.poll_accept()
        if ep is not None:
            self.peers.append(ep)

    def _pump(self) -> None:
        for ep in list(self.peers):
            while True:
                try:
                    body = ep.poll_frame()
                except Disconnected:
                    self._drop(ep)
                    break
                if body is None:
                    break
                try:
                    msg = wire.decode_interrupt(body)
                except MalformedInterrupt as e:
                    ep.send_frame(wire.error_response(
                        wire.E_MALFORMED, str(e)).encode())
                    continue
                self.inbox.append((ep, msg))

    def _respond(self, ep: Endpoint, resp: wire.Response) -> None:
        try:
            ep.send_frame(resp.encode())
        except Disconnected:
            self._drop(ep)

    def _handle_one(self) -> bool:
        if not self.inbox:
            return False
        ep, msg = self.inbox.popleft()
        self._respond(ep, self.monitor.handle(msg))
        return True

    def _service_proxy_calls(self) -> None:
        """Called from inside a primitive wait: answer proxy calls only."""
        self._accept_new()
        self._pump()
        kept: deque = deque()
        while self.inbox:
            ep, msg = self.inbox.popleft()
            if msg.opcode == wire.PROXY_CALL:
                self._respond(ep, self.monitor.handle(msg))
            else:
                kept.append((ep, msg))
        self.inbox.extend(kept)

    # --- trap and breakpoint behavior ---

    def _after_run(self) -> None:
        vm = self.vm
        if vm.status is Status.PAUSED_AT_BREAKPOINT:
            on_breakpoint_hit(vm, self.ctx.policy, self.ctx)
        elif vm.status is Status.TRAPPED:
            if self.peers:
                try:
                    self._push(wire.Response(
                        wire.ST_PUSH_SESSION,
                        session_to_bytes(extract_session(vm))).encode())
                except OotError:
                    pass
            if self.config.restart_on_trap:
                if self.devsim is not None:
                    self.devsim.clock.sleep_ms(self.config.restart_delay_ms)
                reboot(vm)

    # --- main loop ---

    def serve(self, stop: threading.Event | None = None) -> None:
        stop = stop or self._stop
        try:
            while not stop.is_set():
                self._accept_new()
                self._pump()
                handled = self._handle_one()
                if self.vm.status is Status.RUNNING:
                    # bound each slice by wall time too: one slice of a
                    # program that sleeps in a primitive would otherwise
                    # hold the loop for minutes
                    deadline = time.monotonic() + 0.05
                    run(self.vm, budget=self.config.run_slice,
                        should_yield=lambda: stop.is_set()
                        or time.monotonic() >= deadline)
                    self._after_run()
                elif not handled:
                    time.sleep(0.001)
        finally:
            for ep in list(self.peers):
                self._drop(ep)
            self.listener.close()

    def start(self) -> "VmServer":
        self._thread = threading.Thread(target=self.serve, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5.0)


class VmClient:
    """Synchronous request/response helper over one connection.

    Unsolicited session pushes arriving between replies are queued on
    .pushes rather than lost.
    """

    def __init__(self, endpoint: Endpoint):
        self.endpoint = endpoint
        self.pushes: list[bytes] = []

    @classmethod
    def connect(cls, host: str, port: int, timeout: float = 5.0) -> "VmClient":
        return cls(connect(host, port, timeout))

    def request(self, opcode: int, payload: bytes = b"",
                timeout: float = 30.0) -> wire.Response:
        self.endpoint.send_frame(wire.InterruptMessage(opcode, payload).encode())
        while True:
            resp = wire.decode_response(self.endpoint.recv_frame(timeout=timeout))
            if resp.status == wire.ST_PUSH_SESSION:
                self.pushes.append(resp.payload)
                continue
            return resp

    def wait_push(self, timeout: float = 10.0) -> bytes:
        if self.pushes:
            return self.pushes.pop(0)
        deadline = time.monotonic() + timeout
        while True:
            remaining = max(0.01, deadline - time.monotonic())
            resp = wire.decode_response(self.endpoint.recv_frame(timeout=remaining))
            if resp.status == wire.ST_PUSH_SESSION:
                return resp.payload
            # replies without a matching request should not happen; drop

    def close(self) -> None:
        self.endpoint.close()

"""Simulated hardware bound into the device VM, plus the master node.

Sensor scripts come from JSON:

    {"sensors": {"3030": {"timeline": [[0, true], [5000, false]],
                          "temp": {"seq": [20.0, 21.0]}}},
     "clock": "virtual"}

``timeline`` entries are (from_ms, online) and must be sorted; ``temp``
is either {"const": v} or a cyclic {"seq": [...]}. Sensor id 0 is the
device's own ambient sensor (read by the broadcast program). The virtual
clock advances only through delay calls, which keeps timing experiments
deterministic and fast; the real clock sleeps.
"""

from __future__ import annotations

import bisect
import json
import struct
import threading
import time
from dataclasses import dataclass, field

from .errors import Disconnected, Timeout
from .transport import Endpoint, listen
from .values import F32, I32, Value, f32, i32, round_f32
from .vm.state import HostFunc, HostTrap, PrimitiveTable
from .wat.ast import TypeSig


class VirtualClock:
    def __init__(self, start_ms: float = 0.0):
        self.now = float(start_ms)
        self.on_wait = None

    def now_ms(self) -> float:
        return self.now

    def sleep_ms(self, ms: float) -> None:
        self.now += ms
        if self.on_wait is not None:
            self.on_wait()


class RealClock:
    """Wall clock; sleeps in slices so a waiting device stays responsive."""

    SLICE_S = 0.005

    def __init__(self):
        self._t0 = time.monotonic()
        self.on_wait = None

    def now_ms(self) -> float:
        return (time.monotonic() - self._t0) * 1000.0

    def sleep_ms(self, ms: float) -> None:
        deadline = time.monotonic() + ms / 1000.0
        while True:
            if self.on_wait is not None:
                self.on_wait()
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                return
            time.sleep(min(self.SLICE_S, remaining))


@dataclass
class TempSource:
    constant: float | None = None
    sequence: list[float] = field(default_factory=list)
    _cursor: int = 0

    def next_value(self) -> float:
        if self.constant is not None:
            return self.constant
        v = self.sequence[self._cursor % len(self.sequence)]
        self._cursor += 1
        return v


@dataclass
class SensorSpec:
    timeline: list[tuple[float, bool]]
    temp: TempSource

    def online_at(self, t_ms: float) -> bool:
        if not self.timeline:
            return True
        starts = [entry[0] for entry in self.timeline]
        idx = bisect.bisect_right(starts, t_ms) - 1
        if idx < 0:
            return False
        return self.timeline[idx][1]


@dataclass
class SensorScript:
    sensors: dict[int, SensorSpec] = field(default_factory=dict)
    clock_mode: str = "virtual"

    def online(self, sensor_id: int, t_ms: float) -> bool:
        spec = self.sensors.get(sensor_id)
        return spec.online_at(t_ms) if spec is not None else False

    def temperature(self, sensor_id: int) -> float:
        spec = self.sensors.get(sensor_id)
        if spec is None:
            return 0.0
        return spec.temp.next_value()


def load_sensor_script(source: str | dict) -> SensorScript:
    """Parse a script from JSON text (or an already-decoded dict)."""
    data = json.loads(source) if isinstance(source, str) else source
    script = SensorScript(clock_mode=data.get("clock", "virtual"))
    if script.clock_mode not in ("virtual", "real"):
        raise ValueError(f"unknown clock mode '{script.clock_mode}'")
    for sid, spec in data.get("sensors", {}).items():
        timeline = [(float(frm), bool(on)) for frm, on in spec.get("timeline", [])]
        if timeline != sorted(timeline, key=lambda e: e[0]):
            raise ValueError(f"sensor {sid}: timeline not sorted")
        temp_spec = spec.get("temp", {"const": 0.0})
        if "const" in temp_spec:
            temp = TempSource(constant=float(temp_spec["const"]))
        elif "seq" in temp_spec:
            seq = [float(x) for x in temp_spec["seq"]]
            if not seq:
                raise ValueError(f"sensor {sid}: empty temperature sequence")
            temp = TempSource(sequence=seq)
        else:
            raise ValueError(f"sensor {sid}: temp needs 'const' or 'seq'")
        script.sensors[int(sid)] = SensorSpec(timeline, temp)
    return script


def make_clock(script: SensorScript):
    return VirtualClock() if script.clock_mode == "virtual" else RealClock()


_SIG_I32_VOID = TypeSig((I32,), ())
_SIG_VOID_F32 = TypeSig((), (F32,))
_SIG_F32_VOID = TypeSig((F32,), ())
_SIG_I32_F32 = TypeSig((I32,), (F32,))
_SIG_I32_I32 = TypeSig((I32,), (I32,))

AMBIENT_SENSOR_ID = 0


class DeviceSim:
    """Owns the script, the clock, and per-primitive call counters."""

    def __init__(self, script: SensorScript, clock, sink: Endpoint | None = None):
        self.script = script
        self.clock = clock
        self.sink = sink
        self.calls: dict[str, int] = {}

    def _count(self, name: str) -> None:
        self.calls[name] = self.calls.get(name, 0) + 1

    def _delay(self, args: list[Value]) -> None:
        self._count("chip_delay")
        self.clock.sleep_ms(max(0, args[0].num))

    def _ctemp(self, args: list[Value]) -> Value:
        self._count("bmp_ctemp")
        return f32(self.script.temperature(AMBIENT_SENSOR_ID))

    def _sendtemp(self, args: list[Value]) -> None:
        self._count("write_f32")
        if self.sink is not None:
            body = struct.pack("<f", round_f32(args[0].num)) + struct.pack(
                "<q", int(self.clock.now_ms()))
            try:
                self.sink.send_frame(body)
            except Disconnected:
                self.sink = None  # receiver went away; keep broadcasting into the void

    def _req_temp(self, args: list[Value]) -> Value:
        self._count("req_temp")
        sid = args[0].num
        if not self.script.online(sid, self.clock.now_ms()):
            raise HostTrap(f"sensor {sid} offline")
        return f32(self.script.temperature(sid))

    def _is_connected(self, args: list[Value]) -> Value:
        self._count("is_connected")
        return i32(1 if self.script.online(args[0].num, self.clock.now_ms()) else 0)

    def primitives(self) -> PrimitiveTable:
        return {
            ("env", "chip_delay"): HostFunc(_SIG_I32_VOID, self._delay),
            ("env", "bmp_ctemp"): HostFunc(_SIG_VOID_F32, self._ctemp),
            ("env", "write_f32"): HostFunc(_SIG_F32_VOID, self._sendtemp),
            ("env", "req_temp"): HostFunc(_SIG_I32_F32, self._req_temp),
            ("env", "is_connected"): HostFunc(_SIG_I32_I32, self._is_connected),
        }


def bind_primitives(script: SensorScript, clock,
                    sink: Endpoint | None = None) -> PrimitiveTable:
    """The standard device binding set (delay, sensors, broadcast)."""
    return DeviceSim(script, clock, sink).primitives()


@dataclass
class MasterNodeLog:
    entries: list[tuple[float, float]] = field(default_factory=list)  # (ms, value)

    def inter_arrival_s(self) -> list[float]:
        ts = [t for t, _ in self.entries]
        return [(b - a) / 1000.0 for a, b in zip(ts, ts[1:])]


class MasterNode:
    """Accepts one broadcaster and logs every received value with a timestamp.

    In virtual-clock experiments the sender's logical send time rides in
    the message and is used as the arrival stamp, which makes the gap
    statistics exactly reproducible; under the real clock the local
    arrival time is recorded.
    """

    def __init__(self, port: int = 0, use_sender_time: bool = False):
        self.listener = listen(port)
        self.port = self.listener.port
        self.log = MasterNodeLog()
        self.use_sender_time = use_sender_time
        self._t0 = time.monotonic()
        self._thread: threading.Thread | None = None
        self._stop = threading.Event()

    def start(self) -> "MasterNode":
        self._thread = threading.Thread(target=self._serve, daemon=True)
        self._thread.start()
        return self

    def _serve(self) -> None:
        try:
            conn = self.listener.accept(timeout=30.0)
        except Timeout:
            return
        while not self._stop.is_set():
            try:
                body = conn.recv_frame(timeout=0.25)
            except Timeout:
                continue
            except Exception:
                break
            if len(body) != 12:
                continue
            value = struct.unpack_from("<f", body, 0)[0]
            sender_ms = struct.unpack_from("<q", body, 4)[0]
            arrival = (sender_ms if self.use_sender_time
                       else (time.monotonic() - self._t0) * 1000.0)
            self.log.entries.append((arrival, value))
        conn.close()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=2.0)
        self.listener.close()


def run_master_node(port: int = 0, use_sender_time: bool = False) -> MasterNode:
    """Start a master node; its .log accumulates as values arrive."""
    return MasterNode(port, use_sender_time).start()

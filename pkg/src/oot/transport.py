"""Stream-socket links with length-prefixed frames and byte accounting.

Frame layout: 4-byte little-endian body length, then the body. Counters
track every byte that crosses a link so network-overhead numbers are
exact integers.
"""

from __future__ import annotations

import socket
import struct
import time
from dataclasses import dataclass, field

from .errors import ConnectRefused, Disconnected, Timeout

_LEN = struct.Struct("<I")

MAX_BODY = 16 * 1024 * 1024
HEADER_SIZE = 4


@dataclass
class LinkStats:
    bytes_sent: int = 0
    bytes_received: int = 0
    messages_sent: int = 0


@dataclass
class LinkConditions:
    one_way_delay_ms: float = 0.0
    enabled: bool = False


def frame(body: bytes) -> bytes:
    if len(body) > MAX_BODY:
        raise ValueError(f"frame body over {MAX_BODY} bytes")
    return _LEN.pack(len(body)) + body


class FrameSplitter:
    """Incremental deframer for a byte stream fed in arbitrary pieces."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[bytes]:
        self._buf.extend(data)
        out = []
        while True:
            if len(self._buf) < HEADER_SIZE:
                return out
            n = _LEN.unpack_from(self._buf, 0)[0]
            if n > MAX_BODY:
                raise Disconnected(f"peer announced frame of {n} bytes")
            if len(self._buf) < HEADER_SIZE + n:
                return out
            out.append(bytes(self._buf[HEADER_SIZE:HEADER_SIZE + n]))
            del self._buf[:HEADER_SIZE + n]


class Endpoint:
    """One side of a connection: framed send/recv plus accounting."""

    def __init__(self, sock: socket.socket):
        self.sock = sock
        self.stats = LinkStats()
        self.conditions = LinkConditions()
        self._splitter = FrameSplitter()
        self._ready: list[bytes] = []

    def send_frame(self, body: bytes) -> None:
        if self.conditions.enabled and self.conditions.one_way_delay_ms > 0:
            time.sleep(self.conditions.one_way_delay_ms / 1000.0)
        data = frame(body)
        try:
            self.sock.sendall(data)
        except OSError as e:
            raise Disconnected(str(e)) from None
        self.stats.bytes_sent += len(data)
        self.stats.messages_sent += 1

    def recv_frame(self, timeout: float | None = None) -> bytes:
        while not self._ready:
            self.sock.settimeout(timeout)
            try:
                data = self.sock.recv(65536)
            except socket.timeout:
                raise Timeout("no frame within timeout") from None
            except OSError as e:
                raise Disconnected(str(e)) from None
            if not data:
                raise Disconnected("peer closed the connection")
            self.stats.bytes_received += len(data)
            self._ready.extend(self._splitter.feed(data))
        return self._ready.pop(0)

    def poll_frame(self) -> bytes | None:
        """Non-blocking receive; None when no complete frame is buffered."""
        if self._ready:
            return self._ready.pop(0)
        self.sock.setblocking(False)
        try:
            data = self.sock.recv(65536)
        except (BlockingIOError, socket.timeout):
            return None
        except OSError as e:
            raise Disconnected(str(e)) from None
        finally:
            self.sock.setblocking(True)
        if not data:
            raise Disconnected("peer closed the connection")
        self.stats.bytes_received += len(data)
        self._ready.extend(self._splitter.feed(data))
        return self._ready.pop(0) if self._ready else None

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


class Listener:
    def __init__(self, sock: socket.socket):
        self.sock = sock
        self.port = sock.getsockname()[1]

    def accept(self, timeout: float | None = None) -> Endpoint:
        self.sock.settimeout(timeout)
        try:
            conn, _ = self.sock.accept()
        except socket.timeout:
            raise Timeout("no connection within timeout") from None
        conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        return Endpoint(conn)

    def poll_accept(self) -> Endpoint | None:
        self.sock.setblocking(False)
        try:
            conn, _ = self.sock.accept()
        except (BlockingIOError, socket.timeout):
            return None
        finally:
            self.sock.setblocking(True)
        conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        return Endpoint(conn)

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


def listen(port: int = 0, host: str = "127.0.0.1") -> Listener:
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    sock.bind((host, port))
    sock.listen(8)
    return Listener(sock)


def connect(host: str, port: int, timeout: float = 5.0) -> Endpoint:
    try:
        sock = socket.create_connection((host, port), timeout=timeout)
    except ConnectionRefusedError:
        raise ConnectRefused(f"{host}:{port}") from None
    except socket.timeout:
        raise Timeout(f"{host}:{port}") from None
    sock.settimeout(None)
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    return Endpoint(sock)

"""Live telemetry endpoint.

One listening socket serves two framings, sniffed from the first bytes of
each connection:

- native: the client sends one JSON handshake line
  ({"role": "subscriber", "topics": [...]} or {"role": "controller"});
  subscribers then receive raw wire frames, controllers send raw wire
  frames (control topics) inbound.
- WebSocket (a request starting with "GET "): after the upgrade, the same
  JSON handshake arrives as the first text message and every wire frame
  travels as one binary WebSocket message.  This is the browser adapter;
  the logical frames are identical.

Subscribers get a bounded per-connection queue that drops the oldest
frames under back-pressure; the recording path never goes through here.
"""

from __future__ import annotations

import base64
import hashlib
import json
import socket
import struct
import threading
from collections import deque

from .simloop import ControlStream
from .streaming import (
    CONTROL_CAMERA,
    CONTROL_DRILL,
    TOPIC_IDS,
    TopicMessage,
    decode_control_camera,
    decode_control_drill,
    decode_message,
    encode_message,
)

WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"
QUEUE_LIMIT = 64


class BindFailure(Exception):
    pass


def _parse_topics(raw) -> set[int] | None:
    if not raw:
        return None  # everything
    out = set()
    for item in raw:
        if isinstance(item, int):
            out.add(item)
        else:
            out.add(TOPIC_IDS[str(item)])
    return out


# ---------------------------------------------------------------------------
# minimal RFC6455 server side


def _ws_accept_key(key: str) -> str:
    digest = hashlib.sha1((key + WS_GUID).encode()).digest()
    return base64.b64encode(digest).decode()


def _ws_handshake(conn: socket.socket, first: bytes) -> bool:
    data = first
    while b"\r\n\r\n" not in data:
        chunk = conn.recv(4096)
        if not chunk:
            return False
        data += chunk
    head = data.split(b"\r\n\r\n", 1)[0].decode("latin-1")
    key = None
    for line in head.split("\r\n")[1:]:
        if ":" in line:
            name, value = line.split(":", 1)
            if name.strip().lower() == "sec-websocket-key":
                key = value.strip()
    if key is None:
        conn.sendall(b"HTTP/1.1 400 Bad Request\r\n\r\n")
        return False
    resp = (
        "HTTP/1.1 101 Switching Protocols\r\n"
        "Upgrade: websocket\r\n"
        "Connection: Upgrade\r\n"
        f"Sec-WebSocket-Accept: {_ws_accept_key(key)}\r\n\r\n"
    )
    conn.sendall(resp.encode("latin-1"))
    return True


def ws_encode_frame(payload: bytes, opcode: int = 2) -> bytes:
    head = bytes([0x80 | opcode])
    n = len(payload)
    if n < 126:
        head += bytes([n])
    elif n < 1 << 16:
        head += bytes([126]) + struct.pack(">H", n)
    else:
        head += bytes([127]) + struct.pack(">Q", n)
    return head + payload


class _WsReader:
    """Blocking frame reader for one connection (handles masking, ping,
    close, and fragmentation)."""

    def __init__(self, conn: socket.socket):
        self.conn = conn
        self._buf = b""

    def _need(self, n: int) -> bytes | None:
        while len(self._buf) < n:
            chunk = self.conn.recv(65536)
            if not chunk:
                return None
            self._buf += chunk
        out, self._buf = self._buf[:n], self._buf[n:]
        return out

    def read_message(self) -> tuple[int, bytes] | None:
        parts = []
        opcode = None
        while True:
            head = self._need(2)
            if head is None:
                return None
            fin = head[0] & 0x80
            op = head[0] & 0x0F
            masked = head[1] & 0x80
            n = head[1] & 0x7F
            if n == 126:
                ext = self._need(2)
                if ext is None:
                    return None
                n = struct.unpack(">H", ext)[0]
            elif n == 127:
                ext = self._need(8)
                if ext is None:
                    return None
                n = struct.unpack(">Q", ext)[0]
            mask = b"\x00\x00\x00\x00"
            if masked:
                mask = self._need(4)
                if mask is None:
                    return None
            payload = self._need(n) if n else b""
            if payload is None:
                return None
            if masked:
                payload = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
            if op == 8:  # close
                return None
            if op == 9:  # ping -> pong
                self.conn.sendall(ws_encode_frame(payload, opcode=10))
                continue
            if op == 10:  # pong
                continue
            if opcode is None:
                opcode = op
            parts.append(payload)
            if fin:
                return opcode, b"".join(parts)


# ---------------------------------------------------------------------------
# server


class _Subscriber:
    def __init__(self, conn: socket.socket, topics: set[int] | None, ws: bool):
        self.conn = conn
        self.topics = topics
        self.ws = ws
        self.queue: deque[bytes] = deque(maxlen=QUEUE_LIMIT)  # drop-oldest
        self.cv = threading.Condition()
        self.alive = True

    def offer(self, topic_id: int, wire: bytes):
        if self.topics is not None and topic_id not in self.topics:
            return
        with self.cv:
            self.queue.append(wire)
            self.cv.notify()

    def close(self):
        with self.cv:
            self.alive = False
            self.cv.notify()
        try:
            self.conn.close()
        except OSError:
            pass


class SimServer:
    """Accepts subscriber and controller connections; Publisher sink."""

    def __init__(self, host: str, port: int, control: ControlStream | None = None):
        self.control = control if control is not None else ControlStream()
        try:
            self._listener = socket.create_server((host, port))
        except OSError as exc:
            raise BindFailure(f"cannot bind {host}:{port}: {exc}") from exc
        self.address = self._listener.getsockname()[:2]
        self._subs: list[_Subscriber] = []
        self._lock = threading.Lock()
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []

    def start(self):
        t = threading.Thread(target=self._accept_loop, daemon=True, name="sim-server-accept")
        t.start()
        self._threads.append(t)
        return self

    # Publisher sink interface
    def offer(self, msg: TopicMessage):
        wire = encode_message(msg)
        with self._lock:
            subs = list(self._subs)
        for sub in subs:
            sub.offer(msg.topic_id, wire)

    def subscriber_count(self) -> int:
        with self._lock:
            return len(self._subs)

    def stop(self):
        self._stop.set()
        try:
            self._listener.close()
        except OSError:
            pass
        with self._lock:
            subs = list(self._subs)
        for sub in subs:
            sub.close()

    # ------------------------------------------------------------------

    def _accept_loop(self):
        while not self._stop.is_set():
            try:
                conn, _addr = self._listener.accept()
            except OSError:
                return
            t = threading.Thread(target=self._serve_conn, args=(conn,), daemon=True)
            t.start()
            self._threads.append(t)

    def _serve_conn(self, conn: socket.socket):
        try:
            first = conn.recv(4, socket.MSG_PEEK)
            if not first:
                conn.close()
                return
            if first.startswith(b"GET"):
                if not _ws_handshake(conn, b""):
                    conn.close()
                    return
                self._serve_ws(conn)
            else:
                self._serve_native(conn)
        except (OSError, ValueError, KeyError):
            try:
                conn.close()
            except OSError:
                pass

    def _register(self, sub: _Subscriber):
        with self._lock:
            self._subs.append(sub)

    def _unregister(self, sub: _Subscriber):
        with self._lock:
            if sub in self._subs:
                self._subs.remove(sub)
        sub.close()

    def _writer_loop(self, sub: _Subscriber, send):
        while True:
            with sub.cv:
                while sub.alive and not sub.queue:
                    sub.cv.wait(timeout=0.5)
                if not sub.alive:
                    return
                if not sub.queue:
                    continue
                wire = sub.queue.popleft()
            try:
                send(wire)
            except OSError:
                return

    def _serve_native(self, conn: socket.socket):
        fh = conn.makefile("rb")
        line = fh.readline(65536)
        hello = json.loads(line.decode())
        role = hello.get("role", "subscriber")
        if role == "subscriber":
            sub = _Subscriber(conn, _parse_topics(hello.get("topics")), ws=False)
            self._register(sub)
            try:
                self._writer_loop(sub, conn.sendall)
            finally:
                self._unregister(sub)
        elif role == "controller":
            self._controller_loop_native(fh)
            conn.close()

    def _controller_loop_native(self, fh):
        buf = b""
        while not self._stop.is_set():
            chunk = fh.read1(65536)
            if not chunk:
                return
            buf += chunk
            buf = self._drain_control(buf)

    def _drain_control(self, buf: bytes) -> bytes:
        offset = 0
        while True:
            try:
                msg, offset = decode_message(buf, offset)
            except Exception:
                return buf[offset:]
            self._handle_control(msg)

    def _handle_control(self, msg: TopicMessage):
        if msg.topic_id == CONTROL_DRILL:
            _t, pose, drilling = decode_control_drill(msg)
            self.control.push_drill(pose, drilling)
        elif msg.topic_id == CONTROL_CAMERA:
            _t, pose = decode_control_camera(msg)
            self.control.push_camera(pose)

    def _serve_ws(self, conn: socket.socket):
        reader = _WsReader(conn)
        hello_msg = reader.read_message()
        if hello_msg is None:
            conn.close()
            return
        _op, payload = hello_msg
        hello = json.loads(payload.decode())
        role = hello.get("role", "subscriber")
        if role == "subscriber":
            sub = _Subscriber(conn, _parse_topics(hello.get("topics")), ws=True)
            self._register(sub)
            try:
                self._writer_loop(sub, lambda wire: conn.sendall(ws_encode_frame(wire)))
            finally:
                self._unregister(sub)
        elif role == "controller":
            while not self._stop.is_set():
                m = reader.read_message()
                if m is None:
                    break
                _op, payload = m
                self._drain_control(payload)  # one wire frame per ws message
            conn.close()

"""TCP sessions carrying OpenIGTLink frames.

Each session owns one reader thread and one writer thread. Inbound messages
are fanned out to subscriber feeds; outbound messages pass through a bounded
queue where TRANSFORM streams are latest-wins and everything else is kept.
"""
from __future__ import annotations

import fnmatch
import itertools
import logging
import queue
import socket
import threading
from collections import deque
from dataclasses import dataclass
from typing import Dict, List, Optional, Union

from .codec import STATUS_BUSY, Message, StatusBody, encode, make_message
from .devices import SERVER_DEVICE
from .framing import FrameReader

logger = logging.getLogger(__name__)

DEFAULT_PORT = 18944
DEFAULT_QUEUE_BOUND = 64
POSE_TYPES = frozenset({"TRANSFORM"})


class TransportError(Exception):
    pass


class StartupError(TransportError):
    pass


class SessionClosedError(TransportError):
    pass


@dataclass
class EndpointConfig:
    host: str = "127.0.0.1"
    port: int = DEFAULT_PORT
    role: str = "server"
    accept_limit: int = 1
    queue_bound: int = DEFAULT_QUEUE_BOUND
    # shrink kernel socket buffers (tests use this to provoke backpressure)
    socket_buffer: Optional[int] = None

    def __post_init__(self):
        # port 0 asks the OS for a free port
        if not 0 <= self.port <= 65535:
            raise ValueError(f"port {self.port} outside 0..65535")
        if self.role not in ("server", "client"):
            raise ValueError(f"role must be 'server' or 'client', not {self.role!r}")
        if self.accept_limit < 1:
            raise ValueError("accept_limit must be >= 1")
        if self.queue_bound < 1:
            raise ValueError("queue_bound must be >= 1")


@dataclass(frozen=True)
class Received:
    session_id: int
    message: Message


@dataclass(frozen=True)
class SessionEvent:
    session_id: int
    kind: str  # "opened" | "closed"
    peer: tuple = ()


class SendTicket:
    """Completion signal for one outbound message."""

    def __init__(self):
        self._event = threading.Event()
        self.dropped = False
        self.error: Optional[BaseException] = None

    def _finish(self, dropped=False, error=None):
        self.dropped = dropped
        self.error = error
        self._event.set()

    @property
    def done(self) -> bool:
        return self._event.is_set()

    def wait(self, timeout: Optional[float] = None) -> bool:
        """True once the frame was written to the socket."""
        self._event.wait(timeout)
        return self._event.is_set() and not self.dropped and self.error is None


class OutboundQueue:
    """Bounded FIFO with latest-wins replacement for pose streams.

    When full, a new TRANSFORM evicts the oldest queued TRANSFORM of the
    same device (or, failing that, of any device) and is appended at the
    tail, so per-device order is preserved. Non-pose messages are never
    evicted and may push the queue past its bound.
    """

    def __init__(self, bound: int = DEFAULT_QUEUE_BOUND):
        self.bound = bound
        self._items: deque = deque()
        self._cond = threading.Condition()
        self._closed = False
        self.dropped = 0

    def __len__(self):
        with self._cond:
            return len(self._items)

    def put(self, message: Message, frame: bytes, ticket: SendTicket):
        with self._cond:
            if self._closed:
                raise SessionClosedError("session closed")
            if len(self._items) >= self.bound and message.type_name in POSE_TYPES:
                victim = self._find_victim(message.device_name)
                if victim is not None:
                    old = self._items[victim]
                    del self._items[victim]
                    old[2]._finish(dropped=True)
                    self.dropped += 1
            self._items.append((message, frame, ticket))
            self._cond.notify()

    def _find_victim(self, device_name):
        fallback = None
        for i, (m, _, _) in enumerate(self._items):
            if m.type_name in POSE_TYPES:
                if m.device_name == device_name:
                    return i
                if fallback is None:
                    fallback = i
        return fallback

    def get(self):
        """Block until an item is available; None once closed and empty."""
        with self._cond:
            while not self._items and not self._closed:
                self._cond.wait()
            if self._items:
                return self._items.popleft()
            return None

    def close(self):
        with self._cond:
            self._closed = True
            pending = list(self._items)
            self._items.clear()
            self._cond.notify_all()
        for _, _, ticket in pending:
            ticket._finish(error=SessionClosedError("session closed before send"))


class Feed:
    """Subscriber view of inbound traffic.

    ``type_name`` is matched exactly; ``device_name`` accepts shell-style
    wildcards. Items are :class:`Received` (and :class:`SessionEvent` when
    ``events`` is set).
    """

    def __init__(self, type_name=None, device_name=None, events=False, sink=None):
        self.type_name = type_name
        self.device_name = device_name
        self.events = events
        self._queue = sink if sink is not None else queue.Queue()

    def matches(self, message: Message) -> bool:
        if self.type_name is not None and message.type_name != self.type_name:
            return False
        if self.device_name is not None and not fnmatch.fnmatchcase(
                message.device_name, self.device_name):
            return False
        return True

    def _offer(self, item):
        if isinstance(item, SessionEvent):
            if self.events:
                self._queue.put(item)
        elif self.matches(item.message):
            self._queue.put(item)

    def get(self, timeout: Optional[float] = None):
        return self._queue.get(timeout=timeout)

    def drain(self) -> list:
        out = []
        while True:
            try:
                out.append(self._queue.get_nowait())
            except queue.Empty:
                return out


class Router:
    def __init__(self):
        self._feeds: List[Feed] = []
        self._lock = threading.Lock()

    def subscribe(self, type_name=None, device_name=None, events=False, sink=None) -> Feed:
        feed = Feed(type_name, device_name, events, sink)
        with self._lock:
            self._feeds.append(feed)
        return feed

    def unsubscribe(self, feed: Feed):
        with self._lock:
            if feed in self._feeds:
                self._feeds.remove(feed)

    def publish(self, item):
        with self._lock:
            feeds = list(self._feeds)
        for feed in feeds:
            feed._offer(item)


_session_ids = itertools.count(1)


class Session:
    """One connected peer."""

    def __init__(self, sock: socket.socket, peer, router: Router,
                 queue_bound: int = DEFAULT_QUEUE_BOUND, on_close=None):
        self.session_id = next(_session_ids)
        self.peer = peer
        self.state = "open"
        self.received = 0
        self._sock = sock
        self._router = router
        self._outbound = OutboundQueue(queue_bound)
        self._reader = FrameReader()
        self._on_close = on_close
        self._lock = threading.Lock()
        self._threads = [
            threading.Thread(target=self._read_loop, name=f"igtl-rx-{self.session_id}", daemon=True),
            threading.Thread(target=self._write_loop, name=f"igtl-tx-{self.session_id}", daemon=True),
        ]

    def start(self):
        self._router.publish(SessionEvent(self.session_id, "opened", tuple(self.peer or ())))
        for t in self._threads:
            t.start()

    @property
    def is_open(self) -> bool:
        return self.state == "open"

    @property
    def dropped(self) -> int:
        return self._outbound.dropped

    @property
    def rejected(self) -> int:
        return len(self._reader.rejected)

    def send(self, message: Message) -> SendTicket:
        if not self.is_open:
            raise SessionClosedError(f"session {self.session_id} is {self.state}")
        frame = encode(message)
        ticket = SendTicket()
        self._outbound.put(message, frame, ticket)
        return ticket

    def _read_loop(self):
        try:
            while True:
                chunk = self._sock.recv(65536)
                if not chunk:
                    break
                before = len(self._reader.rejected)
                for message in self._reader.feed(chunk):
                    self.received += 1
                    self._router.publish(Received(self.session_id, message))
                for exc in self._reader.rejected[before:]:
                    logger.warning("session %s: dropped corrupt frame: %s", self.session_id, exc)
        except OSError:
            pass
        finally:
            self.close()

    def _write_loop(self):
        while True:
            item = self._outbound.get()
            if item is None:
                return
            _, frame, ticket = item
            try:
                self._sock.sendall(frame)
            except OSError as exc:
                ticket._finish(error=exc)
                self.close()
                return
            ticket._finish()

    def close(self):
        with self._lock:
            if self.state != "open":
                return
            self.state = "closing"
        self._outbound.close()
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()
        self.state = "closed"
        self._router.publish(SessionEvent(self.session_id, "closed", tuple(self.peer or ())))
        if self._on_close is not None:
            self._on_close(self)

    def flush(self, timeout: float = 5.0) -> bool:
        """Wait until everything queued so far has been written."""
        ticket = SendTicket()
        # an empty frame queued behind everything else; its completion means drained
        try:
            self._outbound.put(_FLUSH, b"", ticket)
        except SessionClosedError:
            return False
        return ticket.wait(timeout)


_FLUSH = make_message("", StatusBody(0), type_name="STATUS")


class _Endpoint:
    def __init__(self, router: Optional[Router] = None):
        self.router = router or Router()

    def subscribe(self, type_name=None, device_name=None, events=False, sink=None) -> Feed:
        return self.router.subscribe(type_name, device_name, events, sink)

    def unsubscribe(self, feed: Feed):
        self.router.unsubscribe(feed)


class IgtlServer(_Endpoint):
    """Listening endpoint; use :func:`serve` to construct and start one."""

    def __init__(self, config: EndpointConfig):
        super().__init__()
        if config.role != "server":
            raise StartupError("serve() needs an endpoint with role 'server'")
        self.config = config
        self.sessions: Dict[int, Session] = {}
        self.refused = 0
        self._lock = threading.Lock()
        self._listener: Optional[socket.socket] = None
        self._thread: Optional[threading.Thread] = None
        self._running = False

    @property
    def address(self) -> tuple:
        return self._listener.getsockname()[:2]

    @property
    def port(self) -> int:
        return self.address[1]

    def start(self) -> "IgtlServer":
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            sock.bind((self.config.host, self.config.port))
            sock.listen(max(4, self.config.accept_limit + 1))
        except OSError as exc:
            sock.close()
            raise StartupError(
                f"cannot listen on {self.config.host}:{self.config.port}: {exc}") from exc
        self._listener = sock
        self._running = True
        self._thread = threading.Thread(target=self._accept_loop, name="igtl-accept", daemon=True)
        self._thread.start()
        logger.info("OpenIGTLink server listening on %s:%s", *self.address)
        return self

    def open_sessions(self) -> List[Session]:
        with self._lock:
            return [s for s in self.sessions.values() if s.is_open]

    def _accept_loop(self):
        while self._running:
            try:
                conn, peer = self._listener.accept()
            except OSError:
                return
            if self.config.socket_buffer:
                conn.setsockopt(socket.SOL_SOCKET, socket.SO_SNDBUF, self.config.socket_buffer)
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            with self._lock:
                full = len([s for s in self.sessions.values() if s.is_open]) >= self.config.accept_limit
            if full:
                self._refuse(conn, peer)
                continue
            session = Session(conn, peer, self.router, self.config.queue_bound, self._forget)
            with self._lock:
                self.sessions[session.session_id] = session
            logger.info("session %s opened from %s", session.session_id, peer)
            session.start()

    def _refuse(self, conn, peer):
        self.refused += 1
        logger.warning("refusing %s: accept limit %d reached", peer, self.config.accept_limit)
        notice = make_message(SERVER_DEVICE, StatusBody(
            STATUS_BUSY, 0, "REFUSED", f"accept limit {self.config.accept_limit} reached"))
        try:
            conn.sendall(encode(notice))
            conn.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        conn.close()

    def _forget(self, session: Session):
        logger.info("session %s closed", session.session_id)

    def send(self, session: Union[Session, int], message: Message) -> SendTicket:
        if isinstance(session, int):
            with self._lock:
                found = self.sessions.get(session)
            if found is None:
                raise SessionClosedError(f"no session {session}")
            session = found
        return session.send(message)

    def broadcast(self, message: Message) -> List[SendTicket]:
        return [s.send(message) for s in self.open_sessions()]

    def close(self):
        self._running = False
        if self._listener is not None:
            try:
                # shutdown wakes a blocked accept(); close alone does not on Linux
                self._listener.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                self._listener.close()
            except OSError:
                pass
        for session in list(self.sessions.values()):
            session.close()
        if self._thread is not None:
            self._thread.join(timeout=2.0)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class IgtlClient(_Endpoint):
    """Connecting endpoint with a single session."""

    def __init__(self, host: str = "127.0.0.1", port: int = DEFAULT_PORT,
                 queue_bound: int = DEFAULT_QUEUE_BOUND, timeout: float = 5.0,
                 router: Optional[Router] = None):
        # pass a router with feeds already attached to see the server's first frames
        super().__init__(router)
        try:
            sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise StartupError(f"cannot connect to {host}:{port}: {exc}") from exc
        sock.settimeout(None)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self.session = Session(sock, sock.getpeername(), self.router, queue_bound)
        self.session.start()

    @property
    def is_open(self) -> bool:
        return self.session.is_open

    def send(self, message: Message) -> SendTicket:
        return self.session.send(message)

    def close(self):
        self.session.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def serve(config: EndpointConfig) -> IgtlServer:
    """Bind, listen and start accepting sessions."""
    return IgtlServer(config).start()


def connect(host: str = "127.0.0.1", port: int = DEFAULT_PORT, **kwargs) -> IgtlClient:
    return IgtlClient(host, port, **kwargs)

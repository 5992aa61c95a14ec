"""Single-threaded event loop binding a :class:`WorkflowEngine` to a server.

Transport threads only enqueue; every engine mutation happens on the loop
thread. ``realtime`` mode ticks on the wall clock, otherwise time advances
only through :meth:`EngineLoop.call` (used by scripted runs).
"""
from __future__ import annotations

import logging
import queue
import threading
import time
from concurrent.futures import Future
from typing import Callable, Optional

from ..igtl.codec import Message
from ..igtl.transport import IgtlServer, Received, SessionClosedError, SessionEvent
from .engine import WorkflowEngine

logger = logging.getLogger(__name__)


class _Call:
    __slots__ = ("fn", "future")

    def __init__(self, fn, future):
        self.fn = fn
        self.future = future


class _Stop:
    pass


class EngineLoop:
    def __init__(self, engine: WorkflowEngine, server: IgtlServer, realtime: bool = False):
        self.engine = engine
        self.server = server
        self.realtime = realtime
        self.queue: "queue.Queue" = queue.Queue()
        self.errors = []
        engine.sink = self._send
        self._feed = server.subscribe(events=True, sink=self.queue)
        self._thread: Optional[threading.Thread] = None

    def _send(self, session_id: Optional[int], message: Message):
        try:
            if session_id is None:
                self.server.broadcast(message)
            else:
                self.server.send(session_id, message)
        except SessionClosedError:
            logger.info("dropping %s for closed session %s", message.device_name, session_id)

    def start(self) -> "EngineLoop":
        self._thread = threading.Thread(target=self.run, name="engine-loop", daemon=True)
        self._thread.start()
        return self

    def call(self, fn: Callable[[WorkflowEngine], object], timeout: Optional[float] = None):
        """Run ``fn(engine)`` on the loop thread and return its result."""
        future: Future = Future()
        self.queue.put(_Call(fn, future))
        return future.result(timeout)

    def stop(self, timeout: float = 5.0):
        self.queue.put(_Stop())
        if self._thread is not None:
            self._thread.join(timeout)
        self.server.unsubscribe(self._feed)

    def _dispatch(self, item) -> bool:
        engine = self.engine
        if isinstance(item, _Stop):
            return False
        if isinstance(item, _Call):
            try:
                item.future.set_result(item.fn(engine))
            except BaseException as exc:
                item.future.set_exception(exc)
        elif isinstance(item, Received):
            try:
                engine.handle_message(item.session_id, item.message)
            except Exception as exc:
                logger.exception("engine failed on %s", item.message.device_name)
                self.errors.append(exc)
        elif isinstance(item, SessionEvent):
            logger.info("session %s %s %s", item.session_id, item.kind, item.peer)
            if item.kind == "opened":
                engine.publish(engine.ready_message(), item.session_id)
            elif item.kind == "closed":
                engine.on_session_closed(item.session_id)
        return True

    def run(self):
        next_tick = time.monotonic() + self.engine.dt
        while True:
            timeout = None
            if self.realtime:
                timeout = max(0.0, next_tick - time.monotonic())
            try:
                item = self.queue.get(timeout=timeout)
            except queue.Empty:
                item = None
            if item is not None and not self._dispatch(item):
                return
            if self.realtime and time.monotonic() >= next_tick:
                self.engine.tick()
                next_tick += self.engine.dt
                if next_tick < time.monotonic() - 1.0:
                    next_tick = time.monotonic() + self.engine.dt   # fell far behind; resync

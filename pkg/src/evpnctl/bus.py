"""Instrumented in-process message bus between controller modules.

Every hop is timestamped on enqueue and dequeue so that the share of a
request's lifetime spent in message passing can be reported.  Payloads are
copied on publish, as a shared datastore would store them, so the bus cost
is not just a pointer handoff.
"""

from __future__ import annotations

import asyncio
import copy
import logging
from dataclasses import dataclass, field
from typing import Any, Awaitable, Callable, Optional

from .model import monotonic_ns

log = logging.getLogger(__name__)

INBOUND_KINDS = frozenset({
    "evi_created", "evi_deleted", "rp_created", "rp_associated",
    "local_endpoint_up", "local_endpoint_down", "remote_route_received",
})
OUTBOUND_KINDS = frozenset({"route_advertise", "route_withdraw"})


@dataclass
class EvpnEvent:
    kind: str
    payload: Any
    bus_enqueue_ts: int = 0
    bus_dequeue_ts: int = 0
    reply: Optional[asyncio.Future] = field(default=None, repr=False, compare=False)
    trace: Optional[dict] = field(default=None, repr=False, compare=False)

    @property
    def transfer_ns(self) -> int:
        return self.bus_dequeue_ts - self.bus_enqueue_ts


Handler = Callable[[EvpnEvent], Optional[Awaitable[None]]]


class EventBus:
    """FIFO bus with a single ordered consumer."""

    def __init__(self, name: str, kinds: frozenset, copy_payloads: bool = True):
        self.name = name
        self.kinds = kinds
        self.copy_payloads = copy_payloads
        self._queue: asyncio.Queue = asyncio.Queue()
        self._handler: Optional[Handler] = None
        self._task: Optional[asyncio.Task] = None
        self.processed = 0
        self.transfer_ns_total = 0

    def publish(self, kind: str, payload: Any = None, *, reply: asyncio.Future = None,
                trace: dict = None) -> EvpnEvent:
        if kind not in self.kinds:
            raise ValueError(f"{self.name} bus does not carry {kind!r} events")
        event = EvpnEvent(kind, None, reply=reply, trace=trace)
        event.bus_enqueue_ts = monotonic_ns()
        event.payload = copy.deepcopy(payload) if self.copy_payloads else payload
        self._queue.put_nowait(event)
        return event

    def start(self, handler: Handler) -> None:
        self._handler = handler
        self._task = asyncio.get_running_loop().create_task(self._consume(), name=f"bus-{self.name}")

    async def stop(self) -> None:
        if self._task:
            self._task.cancel()
            try:
                await self._task
            except asyncio.CancelledError:
                pass
            self._task = None

    async def _consume(self):
        while True:
            event = await self._queue.get()
            payload = copy.deepcopy(event.payload) if self.copy_payloads else event.payload
            event.payload = payload
            event.bus_dequeue_ts = monotonic_ns()
            self.transfer_ns_total += event.transfer_ns
            try:
                result = self._handler(event)
                if asyncio.iscoroutine(result):
                    await result
            except Exception as exc:
                log.exception("%s bus handler failed on %s", self.name, event.kind)
                if event.reply is not None and not event.reply.done():
                    event.reply.set_exception(exc)
            finally:
                self.processed += 1
                self._queue.task_done()

    @property
    def pending(self) -> int:
        return self._queue.qsize()

    async def join(self) -> None:
        await self._queue.join()

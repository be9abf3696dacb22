"""BGP peering session: FSM, keepalives, and the coalescing output queue."""

from __future__ import annotations

import asyncio
import collections
import contextlib
import ipaddress
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

from ..errors import Backpressure, MalformedMessage
from ..model import monotonic_ns
from . import codec
from .codec import EvpnRoute, ParsedUpdate, PathAttributes

log = logging.getLogger(__name__)

DEFAULT_PORT = 1790
FLUSH_IDLE_S = 0.005
FLUSH_COUNT = 100
QUEUE_LIMIT = 10_000
BACKOFF_BASE_S = 1.0
BACKOFF_CAP_S = 32.0
WRITE_HIGH_WATER = 64 * 1024

STATES = ("idle", "connect", "open_sent", "established")


@dataclass
class _Pending:
    withdraw: bool
    route: EvpnRoute
    attrs: Optional[PathAttributes]
    nlri: bytes
    trace: Optional[object] = None


@dataclass
class SessionCounters:
    parsed: int = 0
    serialized: int = 0
    filtered: int = 0
    malformed: int = 0
    unknown_skipped: int = 0
    updates_in: int = 0
    updates_out: int = 0
    resets: int = 0

    def to_json(self):
        return dict(self.__dict__)


class SessionReset(Exception):
    pass


@dataclass
class BgpSession:
    """One peering.  ``run_active`` dials out and reconnects with backoff;
    ``serve_connection`` drives an accepted connection."""

    peer_id: str
    local_asn: int
    router_id: str
    peer_addr: Optional[str] = None
    peer_port: int = DEFAULT_PORT
    peer_asn: Optional[int] = None
    hold_time: int = 90
    on_update: Optional[Callable[["BgpSession", ParsedUpdate], None]] = None
    on_established: Optional[Callable[["BgpSession"], None]] = None
    state: str = "idle"
    counters: SessionCounters = field(default_factory=SessionCounters)

    def __post_init__(self):
        self.negotiated_hold = self.hold_time
        self.remote_open: Optional[codec.OpenMessage] = None
        self.established = asyncio.Event()
        self._queue: collections.deque[_Pending] = collections.deque()
        self._queue_bytes = 0
        self._rib_out: dict = {}
        self._last_enqueue = 0
        self._wakeup = asyncio.Event()
        self._idle = asyncio.Event()
        self._idle.set()
        self._writer: Optional[asyncio.StreamWriter] = None
        self._tasks: list[asyncio.Task] = []
        self._runner: Optional[asyncio.Task] = None
        self._closing = False
        self.backoff_history: list[float] = []

    # ------------------------------------------------------------ lifecycle

    def start(self) -> asyncio.Task:
        self._runner = asyncio.get_running_loop().create_task(self.run_active(), name=f"bgp-{self.peer_id}")
        return self._runner

    async def run_active(self):
        backoff = BACKOFF_BASE_S
        while not self._closing:
            self.state = "connect"
            try:
                reader, writer = await asyncio.open_connection(self.peer_addr, self.peer_port)
            except OSError as exc:
                log.debug("%s: connect failed: %s", self.peer_id, exc)
            else:
                reached = await self.serve_connection(reader, writer)
                if reached:
                    backoff = BACKOFF_BASE_S
            if self._closing:
                break
            self.state = "idle"
            self.backoff_history.append(backoff)
            await asyncio.sleep(backoff)
            backoff = min(backoff * 2, BACKOFF_CAP_S)

    async def serve_connection(self, reader, writer) -> bool:
        """Run the FSM over one transport; returns whether it got established."""
        self._writer = writer
        reached = False
        try:
            writer.write(codec.encode_open(self.local_asn, self.hold_time, self.router_id))
            self.state = "open_sent"
            await writer.drain()
            got_open = False
            while True:
                timeout = self.negotiated_hold if self.negotiated_hold else None
                try:
                    msg_type, body, raw = await asyncio.wait_for(self._read(reader), timeout)
                except asyncio.TimeoutError:
                    self._notify(codec.ERR_HOLD_TIMER, 0)
                    raise SessionReset("hold timer expired") from None
                if msg_type == codec.MSG_OPEN:
                    if got_open:
                        self._notify(codec.ERR_FSM, 0)
                        raise SessionReset("duplicate OPEN")
                    self.remote_open = codec.decode_open(body)
                    if self.peer_asn is not None and self.remote_open.asn != self.peer_asn:
                        self._notify(codec.ERR_OPEN, 2)
                        raise SessionReset(f"peer AS {self.remote_open.asn} != {self.peer_asn}")
                    if not self.remote_open.supports_evpn:
                        self._notify(codec.ERR_OPEN, 7)
                        raise SessionReset("peer lacks the L2VPN EVPN capability")
                    got_open = True
                    self.negotiated_hold = min(self.hold_time, self.remote_open.hold_time)
                    writer.write(codec.encode_keepalive())
                elif msg_type == codec.MSG_KEEPALIVE:
                    if not got_open:
                        self._notify(codec.ERR_FSM, 0)
                        raise SessionReset("KEEPALIVE before OPEN")
                    if self.state != "established":
                        self._become_established()
                        reached = True
                elif msg_type == codec.MSG_UPDATE:
                    if self.state != "established":
                        self._notify(codec.ERR_FSM, 0)
                        raise SessionReset("UPDATE outside established")
                    self._handle_update(raw)
                elif msg_type == codec.MSG_NOTIFICATION:
                    code, sub = codec.decode_notification(body)
                    raise SessionReset(f"NOTIFICATION {code}/{sub} from peer")
                else:
                    self._notify(codec.ERR_HEADER, 3)
                    raise SessionReset(f"bad message type {msg_type}")
        except MalformedMessage as exc:
            self.counters.malformed += 1
            log.warning("%s: malformed message: %s", self.peer_id, exc)
            self._notify(exc.code, exc.subcode)
        except SessionReset as exc:
            log.info("%s: session reset: %s", self.peer_id, exc)
        except (asyncio.IncompleteReadError, ConnectionError) as exc:
            log.info("%s: connection lost: %s", self.peer_id, exc)
        finally:
            await self._teardown(writer)
        return reached

    async def _read(self, reader):
        header = await reader.readexactly(codec.HEADER_LEN)
        length, msg_type = codec.parse_header(header)
        body = await reader.readexactly(length - codec.HEADER_LEN)
        return msg_type, body, header + body

    def _notify(self, code, subcode):
        if self._writer is not None and not self._writer.is_closing():
            with contextlib.suppress(Exception):
                self._writer.write(codec.encode_notification(code, subcode))

    def _become_established(self):
        self.state = "established"
        self.established.set()
        # peer lost everything with the previous transport; replay Adj-RIB-Out
        self._queue.clear()
        self._queue_bytes = 0
        for route, attrs, nlri in self._rib_out.values():
            self._push(_Pending(False, route, attrs, nlri))
        loop = asyncio.get_running_loop()
        self._tasks = [
            loop.create_task(self._keepalives(), name=f"ka-{self.peer_id}"),
            loop.create_task(self._flusher(), name=f"flush-{self.peer_id}"),
        ]
        if self.on_established:
            self.on_established(self)

    async def _teardown(self, writer):
        was_established = self.state == "established"
        self.state = "idle"
        self.established.clear()
        self.negotiated_hold = self.hold_time
        for task in self._tasks:
            task.cancel()
        for task in self._tasks:
            with contextlib.suppress(asyncio.CancelledError, Exception):
                await task
        self._tasks = []
        with contextlib.suppress(Exception):
            writer.close()
            await writer.wait_closed()
        self._writer = None
        if was_established:
            self.counters.resets += 1

    async def close(self):
        self._closing = True
        if self._writer is not None:
            self._notify(codec.ERR_CEASE, 0)
            self._writer.close()
        if self._runner is not None:
            self._runner.cancel()
            with contextlib.suppress(asyncio.CancelledError, Exception):
                await self._runner

    async def wait_established(self, timeout: float = 5.0):
        await asyncio.wait_for(self.established.wait(), timeout)

    async def _keepalives(self):
        while True:
            interval = self.negotiated_hold / 3 if self.negotiated_hold else 30
            await asyncio.sleep(interval)
            if self._writer is not None:
                self._writer.write(codec.encode_keepalive())

    # ------------------------------------------------------------ receive

    def _handle_update(self, raw: bytes):
        parsed = codec.parse_update(raw)
        self.counters.updates_in += 1
        self.counters.parsed += len(parsed.routes) + len(parsed.withdrawals)
        self.counters.unknown_skipped += parsed.unknown_skipped
        if self.on_update is not None:
            self.on_update(self, parsed)

    # ------------------------------------------------------------ send

    def enqueue_advertisement(self, route: EvpnRoute, attrs: PathAttributes,
                              nlri: bytes = None, trace=None) -> None:
        nlri = nlri if nlri is not None else codec.encode_nlri(route)
        self._rib_out[route.key()] = (route, attrs, nlri)
        self._push(_Pending(False, route, attrs, nlri, trace))

    def enqueue_withdrawal(self, route: EvpnRoute, nlri: bytes = None, trace=None) -> None:
        nlri = nlri if nlri is not None else codec.encode_nlri(route)
        self._rib_out.pop(route.key(), None)
        self._push(_Pending(True, route, None, nlri, trace))

    def _push(self, item: _Pending):
        if len(self._queue) >= QUEUE_LIMIT:
            raise Backpressure(f"{self.peer_id}: {QUEUE_LIMIT} routes pending")
        self._queue.append(item)
        self._queue_bytes += len(item.nlri)
        self._last_enqueue = monotonic_ns()
        self._idle.clear()
        self._wakeup.set()

    @property
    def advertised(self) -> list:
        return [route for route, _, _ in self._rib_out.values()]

    @property
    def pending(self) -> int:
        return len(self._queue)

    async def wait_flushed(self, timeout: float = 5.0):
        await asyncio.wait_for(self._idle.wait(), timeout)

    async def _flusher(self):
        size_budget = codec.MAX_MESSAGE_LEN - 100
        while True:
            await self._wakeup.wait()
            while self._queue:
                if len(self._queue) >= FLUSH_COUNT or self._queue_bytes >= size_budget:
                    break
                idle_s = (monotonic_ns() - self._last_enqueue) / 1e9
                if idle_s >= FLUSH_IDLE_S:
                    break
                await asyncio.sleep(FLUSH_IDLE_S - idle_s)
            batch = []
            while self._queue and len(batch) < FLUSH_COUNT:
                item = self._queue.popleft()
                self._queue_bytes -= len(item.nlri)
                batch.append(item)
            try:
                messages = self._coalesce(batch)
            except Exception:
                log.exception("%s: dropping %d unencodable routes", self.peer_id, len(batch))
                messages = []
            for message, items in messages:
                await self._send_update(message, items)
            if not self._queue:
                self._wakeup.clear()
                self._idle.set()

    def _coalesce(self, batch: list[_Pending]):
        """Group consecutive entries with identical attributes; never reorder."""
        runs: list[list[_Pending]] = []
        for item in batch:
            if runs and runs[-1][0].withdraw == item.withdraw and runs[-1][0].attrs == item.attrs:
                runs[-1].append(item)
            else:
                runs.append([item])
        out = []
        for run in runs:
            attrs = run[0].attrs
            pos = 0
            for chunk in codec.split_nlris([i.nlri for i in run], attrs):
                items = run[pos:pos + len(chunk)]
                pos += len(chunk)
                if run[0].withdraw:
                    out.append((codec.build_update([], None, chunk), items))
                else:
                    out.append((codec.build_update(chunk, attrs), items))
        return out

    async def _send_update(self, message: bytes, items: list[_Pending]):
        backoff = 0.001
        while self._writer is not None and self._writer.transport.get_write_buffer_size() > WRITE_HIGH_WATER:
            await asyncio.sleep(backoff)
            backoff = min(backoff * 2, 0.05)
        assert self.state == "established", "UPDATE outside established state"
        now = monotonic_ns()
        for item in items:
            if item.trace is not None:
                item.trace.extra["message_sent"] = now
        self._writer.write(message)
        self.counters.updates_out += 1
        self.counters.serialized += len(items)
        await self._writer.drain()


class BgpListener:
    """Accepts inbound connections and hands them to a passive session."""

    def __init__(self, session: BgpSession, host: str = "127.0.0.1", port: int = 0):
        self.session = session
        self.host = host
        self.port = port
        self._server: Optional[asyncio.base_events.Server] = None
        self._current: Optional[asyncio.Task] = None

    async def start(self):
        self._server = await asyncio.start_server(self._accept, self.host, self.port)
        self.port = self._server.sockets[0].getsockname()[1]
        return self

    async def _accept(self, reader, writer):
        if self._current is not None and not self._current.done():
            # a new dial-in supersedes a half-dead transport
            if self.session._writer is not None:
                self.session._writer.close()
            with contextlib.suppress(Exception):
                await self._current
        self._current = asyncio.current_task()
        await self.session.serve_connection(reader, writer)

    async def close(self):
        self.session._closing = True
        if self.session._writer is not None:
            self.session._writer.close()
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()


def addr_of(text: str, default_port: int) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host:
        return text, default_port
    return host, int(port)


def next_hop_of(router_id: str) -> ipaddress.IPv4Address:
    return ipaddress.IPv4Address(router_id)

"""Bagpipe-style EVPN message generator for control-plane response times.

The generator is a BGP speaker that advertises MAC/IP routes to the
controller, which is configured to reflect them straight back.  Replies are
matched to requests by MAC address.  Send times are taken when the UPDATE
is written to the socket and receive times when parsing of the reply
starts, so neither speaker's own output queue is counted.
"""

from __future__ import annotations

import asyncio
import logging
from dataclasses import dataclass, field

from ..bgp import codec
from ..bgp.codec import EvpnRoute, PathAttributes
from ..bgp.session import BgpListener, BgpSession
from ..model import RouteDistinguisher, RouteTarget, format_mac

log = logging.getLogger(__name__)

MODES = ("burst", "one_by_one", "single")
WARMUP_MESSAGES = 20
REPLY_TIMEOUT_S = 10.0


class GeneratorTimeout(RuntimeError):
    def __init__(self, missing: list[str]):
        super().__init__(f"{len(missing)} replies missing: {', '.join(missing[:10])}"
                         + (" ..." if len(missing) > 10 else ""))
        self.missing = missing


@dataclass
class GeneratorConfig:
    mode: str
    count: int = 100
    peer_addr: str = "127.0.0.1"
    mac_seed: int = 0x02_00_00_00_00_00
    warmup: int = WARMUP_MESSAGES
    timeout_s: float = REPLY_TIMEOUT_S

    def __post_init__(self):
        if self.mode == "one":
            self.mode = "one_by_one"
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.mode == "single":
            self.count = 1
        if self.count <= 0:
            raise ValueError("count must be positive")
        if not 0 <= self.mac_seed < 1 << 48:
            raise ValueError("mac_seed must fit 48 bits")


def mac_sequence(seed: int, start: int, count: int) -> list[bytes]:
    return [((seed + start + i) % (1 << 48)).to_bytes(6, "big") for i in range(count)]


class _SendStamp:
    """Receives the wire-write timestamp from the session's flusher."""
    __slots__ = ("extra",)

    def __init__(self):
        self.extra = {}


@dataclass
class RunSamples:
    mode: str
    rtt_ms: list = field(default_factory=list)
    macs: list = field(default_factory=list)


class Generator:
    """Passive BGP peer that the controller dials as a reflect peer."""

    def __init__(self, route_target: RouteTarget, asn: int = 65000,
                 router_id: str = "10.254.0.1", host: str = "127.0.0.1"):
        self.route_target = route_target
        self.router_id = router_id
        self.rd = RouteDistinguisher(asn, 1)
        self.session = BgpSession("controller", asn, router_id, on_update=self._on_update)
        self.listener = BgpListener(self.session, host)
        self._waiting: dict[bytes, asyncio.Future] = {}
        self._label = 200
        self._next_start = 0

    @property
    def port(self) -> int:
        return self.listener.port

    async def start(self) -> "Generator":
        await self.listener.start()
        return self

    async def stop(self):
        await self.listener.close()

    def _on_update(self, session, parsed: codec.ParsedUpdate):
        for route in parsed.routes:
            if route.route_type != codec.MAC_IP_ADVERTISEMENT:
                continue
            fut = self._waiting.pop(route.mac, None)
            if fut is not None and not fut.done():
                fut.set_result(parsed.parse_started)

    def _send(self, mac: bytes) -> tuple[_SendStamp, asyncio.Future]:
        fut = asyncio.get_running_loop().create_future()
        self._waiting[mac] = fut
        stamp = _SendStamp()
        route = EvpnRoute.mac_ip(self.rd, mac, self._label)
        self.session.enqueue_advertisement(route, PathAttributes.for_targets(self.router_id, [self.route_target]),
                                           trace=stamp)
        return stamp, fut

    async def _collect(self, sent: list, timeout: float) -> list[float]:
        futs = [f for _, _, f in sent]
        done, pending = await asyncio.wait(futs, timeout=timeout)
        if pending:
            missing = [format_mac(m) for m, _, f in sent if not f.done()]
            for m, _, f in sent:
                self._waiting.pop(m, None)
            raise GeneratorTimeout(missing)
        return [(f.result() - s.extra["message_sent"]) / 1e6 for _, s, f in sent]

    async def run(self, cfg: GeneratorConfig) -> RunSamples:
        """Run warm-up messages, then ``cfg.count`` measured messages."""
        await self.session.wait_established(cfg.timeout_s)
        if cfg.warmup:
            await self._one_by_one(self._macs(cfg, cfg.warmup), cfg.timeout_s)
        macs = self._macs(cfg, cfg.count)
        if cfg.mode == "burst":
            rtts = await self._burst(macs, cfg.timeout_s)
        else:
            rtts = await self._one_by_one(macs, cfg.timeout_s)
        return RunSamples(cfg.mode, rtts, [format_mac(m) for m in macs])

    def _macs(self, cfg: GeneratorConfig, count: int) -> list[bytes]:
        macs = mac_sequence(cfg.mac_seed, self._next_start, count)
        self._next_start += count
        return macs

    async def _one_by_one(self, macs, timeout) -> list[float]:
        rtts = []
        for mac in macs:
            stamp, fut = self._send(mac)
            rtts += await self._collect([(mac, stamp, fut)], timeout)
        return rtts

    async def _burst(self, macs, timeout) -> list[float]:
        sent = []
        for mac in macs:
            stamp, fut = self._send(mac)
            sent.append((mac, stamp, fut))
        return await self._collect(sent, timeout)


async def run_generator(cfg: GeneratorConfig, generator: Generator) -> list[float]:
    """Per-message round-trip times in milliseconds, in send order."""
    return (await generator.run(cfg)).rtt_ms

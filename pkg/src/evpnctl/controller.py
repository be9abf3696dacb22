"""Wires the controller together: buses, L2VPN service, BGP sessions,
PE configurator and the northbound API."""

from __future__ import annotations

import asyncio
import contextlib
import logging
from dataclasses import dataclass, field
from typing import Optional

from .bgp import codec
from .bgp.codec import ParsedUpdate
from .bgp.session import BgpSession
from .bus import INBOUND_KINDS, OUTBOUND_KINDS, EventBus, EvpnEvent
from .instrument import Instrumentation, MessageTrace, StageLog
from .inventory import Inventory
from .model import LabelAllocator, format_mac, monotonic_ns
from .peconf import ConfigTransaction, PeConfigurator, render_base_config
from .service import L2vpnService

log = logging.getLogger(__name__)


@dataclass
class PeerConfig:
    id: str
    host: str
    port: int
    reflect: bool = False
    asn: Optional[int] = None


@dataclass
class ControllerConfig:
    asn: int = 64512
    router_id: str = "192.0.2.1"
    api_host: str = "127.0.0.1"
    api_port: int = 8181
    hold_time: int = 90
    label_base: int = 100000
    label_size: int = 100000
    peers: list = field(default_factory=list)
    instrument: bool = True
    push_base_config: bool = True
    default_allow: bool = True
    start_api: bool = True


class Controller:
    def __init__(self, inventory: Inventory, config: Optional[ControllerConfig] = None):
        self.inventory = inventory
        self.config = config or ControllerConfig()
        self.sessions: dict[str, BgpSession] = {}
        self.stage_log = StageLog()
        self.instrumentation = Instrumentation(self.config.instrument)
        self.inbound: Optional[EventBus] = None
        self.outbound: Optional[EventBus] = None
        self.service: Optional[L2vpnService] = None
        self.configurator: Optional[PeConfigurator] = None
        self.api = None
        self.base_config: dict[str, ConfigTransaction] = {}

    @property
    def api_addr(self) -> str:
        return f"{self.config.api_host}:{self.config.api_port}"

    async def start(self) -> "Controller":
        cfg = self.config
        self.inbound = EventBus("inbound", INBOUND_KINDS)
        self.outbound = EventBus("outbound", OUTBOUND_KINDS)
        self.configurator = PeConfigurator({pe.id: pe.mgmt() for pe in self.inventory.pes.values()})
        self.service = L2vpnService(
            self.inventory, self.configurator, self.outbound, cfg.asn, cfg.router_id,
            LabelAllocator(cfg.label_base, cfg.label_size), self.stage_log, self.instrumentation,
            reflect_peers={p.id for p in cfg.peers if p.reflect}, default_allow=cfg.default_allow)
        self.inbound.start(self.service.handle)
        self.outbound.start(self._on_outbound)

        await self.configurator.connect_all()
        if cfg.push_base_config:
            await asyncio.gather(*(self._push_base(pe) for pe in self.inventory.pes))

        for pe in self.inventory.pes.values():
            host, port = pe.bgp()
            self.add_peer(PeerConfig(pe.id, host, port))
        for peer in cfg.peers:
            self.add_peer(peer)

        if cfg.start_api:
            from .api import ApiServer
            self.api = await ApiServer(self, cfg.api_host, cfg.api_port).start()
            cfg.api_port = self.api.port
        return self

    async def _push_base(self, pe_id: str):
        doc = render_base_config(pe_id, [self.config.router_id], self.config.asn)
        txn = await self.configurator.push_transaction(ConfigTransaction([doc]))
        self.base_config[pe_id] = txn
        if not txn.committed:
            log.error("base BGP config on %s rolled back: %s", pe_id, txn.reason)

    def add_peer(self, peer: PeerConfig) -> BgpSession:
        session = BgpSession(peer.id, self.config.asn, self.config.router_id,
                             peer_addr=peer.host, peer_port=peer.port, peer_asn=peer.asn,
                             hold_time=self.config.hold_time, on_update=self._on_bgp_update)
        self.sessions[peer.id] = session
        session.start()
        if peer.reflect:
            self.service.reflect_peers.add(peer.id)
        return session

    async def wait_established(self, timeout: float = 5.0):
        await asyncio.gather(*(s.wait_established(timeout) for s in self.sessions.values()))

    async def stop(self):
        if self.api is not None:
            await self.api.stop()
        for session in self.sessions.values():
            await session.close()
        await self.inbound.stop()
        await self.outbound.stop()
        if self.service is not None:
            for task in self.service._chains.values():
                task.cancel()
        await self.configurator.close()

    async def __aenter__(self):
        return await self.start()

    async def __aexit__(self, *exc):
        await self.stop()

    # ------------------------------------------------------------ northbound entry

    async def submit(self, kind: str, payload: dict, timeout: float = 30.0):
        """Publish an event and wait for the service's acknowledgement."""
        fut = asyncio.get_running_loop().create_future()
        self.inbound.publish(kind, payload, reply=fut)
        return await asyncio.wait_for(fut, timeout)

    # ------------------------------------------------------------ BGP glue

    def _on_bgp_update(self, session: BgpSession, parsed: ParsedUpdate):
        trace = None
        if self.instrumentation.enabled:
            first = next((r for r in parsed.routes if r.route_type == codec.MAC_IP_ADVERTISEMENT), None)
            if first is not None:
                trace = MessageTrace(format_mac(first.mac), parsed.parse_started, parsed.parse_finished)
        self.inbound.publish("remote_route_received", {
            "peer": session.peer_id,
            "routes": parsed.routes,
            "withdrawals": parsed.withdrawals,
            "attrs": parsed.attrs,
        }, trace=trace)

    def _targets(self, peers) -> list[BgpSession]:
        if peers is not None:
            return [self.sessions[p] for p in peers if p in self.sessions]
        reflectors = self.service.reflect_peers
        return [s for pid, s in self.sessions.items() if pid not in reflectors]

    def _on_outbound(self, event: EvpnEvent):
        p = event.payload
        route = p["route"]
        trace: Optional[MessageTrace] = event.trace
        nlri = codec.encode_nlri(route)
        if trace is not None:
            trace.outbound_enqueue = event.bus_enqueue_ts
            trace.outbound_dequeue = event.bus_dequeue_ts
            trace.serialized = monotonic_ns()
            self.instrumentation.record(trace)
        for session in self._targets(p.get("peers")):
            if event.kind == "route_advertise":
                session.enqueue_advertisement(route, p["attrs"], nlri, trace)
            else:
                session.enqueue_withdrawal(route, nlri)

    async def quiesce(self, timeout: float = 30.0):
        """Wait until no event, device transaction or queued route is in flight."""

        async def settle():
            while True:
                await self.inbound.join()
                await self.service.drain()
                await self.outbound.join()
                for s in self.sessions.values():
                    if s.state == "established":
                        await s.wait_flushed(timeout)
                if (self.inbound.pending == 0 and self.outbound.pending == 0
                        and not any(self.service.busy(e) for e in list(self.service._busy))):
                    return

        await asyncio.wait_for(settle(), timeout)

    def stats(self) -> dict:
        svc = self.service
        return {
            "service": dict(svc.counters.__dict__),
            "sessions": {
                pid: {"state": s.state, **s.counters.to_json(),
                      "filtered": svc.filtered_by_peer.get(pid, 0)}
                for pid, s in self.sessions.items()
            },
            "bus": {
                b.name: {"processed": b.processed, "transfer_ms_total": b.transfer_ns_total / 1e6}
                for b in (self.inbound, self.outbound)
            },
        }


@contextlib.asynccontextmanager
async def running(inventory: Inventory, config: Optional[ControllerConfig] = None):
    ctl = Controller(inventory, config)
    await ctl.start()
    try:
        yield ctl
    finally:
        await ctl.stop()

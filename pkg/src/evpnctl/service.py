"""L2VPN service: owns EVI, policy and MAC state and decides which EVPN
control messages to emit.

All table mutations happen on the inbound bus consumer.  Device
configuration pushes are slow, so they run as per-EVI task chains: work
for one EVI is strictly FIFO while different EVIs proceed in parallel.
"""

from __future__ import annotations

import asyncio
import itertools
import logging
from dataclasses import dataclass, field
from typing import Awaitable, Callable, Optional

from .bgp import codec
from .bgp.codec import EvpnRoute, PathAttributes
from .bus import EventBus, EvpnEvent
from .errors import Conflict, InvalidArgument, NotFound, TransactionFailed
from .instrument import Instrumentation, MessageTrace, StageLog
from .inventory import Inventory
from .model import (
    ZERO_ESI,
    AuxMapping,
    EviRecord,
    LabelAllocator,
    MacTableEntry,
    RoutingPolicy,
    RouteTarget,
    derive_rd_rt,
    format_mac,
    monotonic_ns,
    parse_ip,
    parse_mac,
)
from .peconf import ConfigTransaction, PeConfigurator, render_evi_config

log = logging.getLogger(__name__)


def should_advertise(origin: str, allow_mac_advertisement: bool) -> bool:
    """Advertisement gate: only locally learned MACs, and only if policy allows."""
    return origin == "local" and allow_mac_advertisement


class MacTable:
    """Main EVPN table keyed by (mac, evi)."""

    def __init__(self):
        self._by_evi: dict[int, dict[bytes, MacTableEntry]] = {}

    def get(self, mac: bytes, evi_id: int) -> Optional[MacTableEntry]:
        return self._by_evi.get(evi_id, {}).get(mac)

    def put(self, entry: MacTableEntry) -> None:
        if entry.origin == "local" and entry.path_list:
            raise InvalidArgument("local entries carry no path list")
        if entry.origin == "remote" and not entry.path_list:
            raise InvalidArgument("remote entries need a path list")
        self._by_evi.setdefault(entry.evi_id, {})[entry.mac] = entry

    def remove(self, mac: bytes, evi_id: int) -> Optional[MacTableEntry]:
        bucket = self._by_evi.get(evi_id)
        if not bucket:
            return None
        entry = bucket.pop(mac, None)
        if not bucket:
            del self._by_evi[evi_id]
        return entry

    def drop_evi(self, evi_id: int) -> list[MacTableEntry]:
        return list(self._by_evi.pop(evi_id, {}).values())

    def entries(self, evi_id: Optional[int] = None) -> list[MacTableEntry]:
        if evi_id is not None:
            return list(self._by_evi.get(evi_id, {}).values())
        return [e for bucket in self._by_evi.values() for e in bucket.values()]

    def __len__(self):
        return sum(len(b) for b in self._by_evi.values())


@dataclass
class ServiceCounters:
    filtered: int = 0
    ignored_local_wins: int = 0
    unmapped_endpoints: int = 0
    unmatched_withdrawals: int = 0
    over_limit: int = 0
    ip_conflicts: int = 0
    routes_advertised: int = 0
    routes_withdrawn: int = 0


@dataclass
class _Applied:
    """Where a remote route was applied, so its withdrawal can be undone."""
    route: EvpnRoute
    evis: list = field(default_factory=list)


class L2vpnService:
    def __init__(self, inventory: Inventory, configurator: Optional[PeConfigurator],
                 outbound: EventBus, asn: int = 64512, router_id: str = "192.0.2.1",
                 labels: Optional[LabelAllocator] = None, stage_log: Optional[StageLog] = None,
                 instrumentation: Optional[Instrumentation] = None, reflect_peers=(),
                 default_allow: bool = True):
        self.inventory = inventory
        self.configurator = configurator
        self.outbound = outbound
        self.asn = asn
        self.router_id = router_id
        self.labels = labels or LabelAllocator()
        self.stage_log = stage_log or StageLog()
        self.instrumentation = instrumentation or Instrumentation()
        self.reflect_peers = set(reflect_peers)
        self.default_allow = default_allow
        self.handler_hook: Optional[Callable[[EvpnEvent], None]] = None

        self.evis: dict[int, EviRecord] = {}
        self.rps: dict[int, RoutingPolicy] = {}
        self.aux: dict[int, AuxMapping] = {}
        self.mac_table = MacTable()
        self.esi_routes: dict = {}
        self.counters = ServiceCounters()
        self.filtered_by_peer: dict[str, int] = {}
        self._evi_ids = itertools.count(1)
        self._rp_ids = itertools.count(1)
        self._advertised: dict[tuple, tuple[EvpnRoute, PathAttributes]] = {}
        self._imets: dict[int, dict[int, tuple[EvpnRoute, PathAttributes]]] = {}
        self._remote: dict[tuple, _Applied] = {}
        self._imet_peers: dict[int, dict[str, set]] = {}
        self._chains: dict[int, asyncio.Task] = {}
        self._busy: dict[int, int] = {}

    # ------------------------------------------------------------ dispatch

    def handle(self, event: EvpnEvent):
        handler = getattr(self, f"_on_{event.kind}")
        result = handler(event)
        if self.handler_hook is not None:
            self.handler_hook(event)
        return result

    def _reply(self, event: EvpnEvent, value=None, error: Exception = None):
        fut = event.reply
        if fut is None or fut.done():
            if error is not None and fut is None:
                raise error
            return
        if error is not None:
            fut.set_exception(error)
        else:
            fut.set_result(value)

    # ------------------------------------------------------------ queries

    def snapshot_evi(self, evi_id: int) -> dict:
        evi = self.evis.get(evi_id)
        if evi is None:
            raise NotFound(f"l2vpn {evi_id} not found")
        doc = evi.to_json()
        doc["vnis"] = sorted(m.vni for m in self.aux.values() if m.evi_id == evi_id)
        doc["busy"] = self.busy(evi_id)
        timing = self.stage_log.get(evi_id)
        doc["timing"] = timing.to_json() if timing else None
        return doc

    def snapshot_rp(self, rp_id: int) -> dict:
        rp = self.rps.get(rp_id)
        if rp is None:
            raise NotFound(f"rp {rp_id} not found")
        doc = rp.to_json()
        doc["evi_ids"] = sorted(e.evi_id for e in self.evis.values() if e.rp_id == rp_id)
        return doc

    def busy(self, evi_id: int) -> bool:
        return self._busy.get(evi_id, 0) > 0

    async def wait_idle(self, evi_id: int, timeout: float = 30.0) -> None:
        loop = asyncio.get_running_loop()
        deadline = loop.time() + timeout
        while self.busy(evi_id):
            task = self._chains.get(evi_id)
            remaining = deadline - loop.time()
            if remaining <= 0:
                raise asyncio.TimeoutError(f"EVI {evi_id} still busy")
            if task is not None and not task.done():
                await asyncio.wait({task}, timeout=remaining)
            else:
                await asyncio.sleep(0)

    async def drain(self) -> None:
        while any(not t.done() for t in self._chains.values()):
            await asyncio.gather(*[t for t in self._chains.values() if not t.done()],
                                 return_exceptions=True)

    def lookup_mac(self, mac, evi_id: int) -> Optional[MacTableEntry]:
        return self.mac_table.get(parse_mac(mac), evi_id)

    def participating_pes(self, vni: int) -> set[str]:
        return set(self._imet_peers.get(vni, {}))

    def policy_of(self, evi: EviRecord) -> Optional[RoutingPolicy]:
        return self.rps.get(evi.rp_id) if evi.rp_id is not None else None

    def allows(self, evi: EviRecord) -> bool:
        rp = self.policy_of(evi)
        return rp.allow_mac_advertisement if rp is not None else self.default_allow

    def import_targets(self, evi: EviRecord) -> set[RouteTarget]:
        rp = self.policy_of(evi)
        return {evi.rt} | (set(rp.import_rts) if rp else set())

    def export_attrs(self, evi: EviRecord) -> PathAttributes:
        rp = self.policy_of(evi)
        targets = {evi.rt} | (set(rp.export_rts) if rp else set())
        return PathAttributes.for_targets(self.router_id, targets)

    def advertised_routes(self) -> list[EvpnRoute]:
        return [r for r, _ in self._advertised.values()]

    # ------------------------------------------------------------ per-EVI chains

    def _schedule(self, evi_id: int, work: Callable[[], Awaitable[None]]) -> asyncio.Task:
        previous = self._chains.get(evi_id)
        self._busy[evi_id] = self._busy.get(evi_id, 0) + 1

        async def run():
            try:
                if previous is not None and not previous.done():
                    await asyncio.wait({previous})
                await work()
            except Exception:
                log.exception("EVI %s background work failed", evi_id)
            finally:
                self._busy[evi_id] -= 1
                if not self._busy[evi_id]:
                    del self._busy[evi_id]

        task = asyncio.get_running_loop().create_task(run(), name=f"evi-{evi_id}")
        self._chains[evi_id] = task
        return task

    async def _push(self, evi: EviRecord, operation: str = "merge") -> ConfigTransaction:
        rp = self.policy_of(evi)
        txn = ConfigTransaction([render_evi_config(evi, rp, pe, operation) for pe in evi.pe_ids])
        if self.configurator is None:
            txn.advance("validating")
            txn.advance("committing")
            txn.advance("committed")
        else:
            await self.configurator.push_transaction(txn)
        self.stage_log.netconf_done(evi.evi_id, txn.total_ms)
        return txn

    # ------------------------------------------------------------ northbound events

    def _on_evi_created(self, event: EvpnEvent):
        req = event.payload
        try:
            record = self.create_evi(req)
        except Exception as exc:
            self._reply(event, error=exc)
            return
        self.stage_log.evi_created(record.evi_id, req.get("received_ns", monotonic_ns()))
        self._reply(event, record.to_json())
        self._schedule(record.evi_id, lambda: self._deploy(record.evi_id))
        for net in record.network_ids:
            for port in self.inventory.ports_on(net):
                self.endpoint_up(port.mac, port.ip, port.network_id)

    def create_evi(self, req: dict) -> EviRecord:
        pe_ids = tuple(dict.fromkeys(req["pe_ids"]))
        network_ids = tuple(dict.fromkeys(req["network_ids"]))
        if not pe_ids:
            raise InvalidArgument("pe_ids must not be empty", "pe_ids")
        if not network_ids:
            raise InvalidArgument("network_ids must not be empty", "network_ids")
        for i, pe in enumerate(pe_ids):
            if pe not in self.inventory.pes:
                raise InvalidArgument(f"unknown PE {pe!r}", f"pe_ids.{i}")
        vnis = []
        for i, net in enumerate(network_ids):
            network = self.inventory.networks.get(net)
            if network is None:
                raise InvalidArgument(f"unknown network {net!r}", f"network_ids.{i}")
            owner = self.aux.get(network.vni)
            if owner is not None:
                raise Conflict(f"network {net!r} already belongs to l2vpn {owner.evi_id}")
            vnis.append(network.vni)
        evi_id = next(self._evi_ids)
        rd, rt = derive_rd_rt(evi_id, self.asn)
        label = self.labels.allocate(evi_id)
        record = EviRecord(evi_id, req["customer_id"], req["virtual_network_id"], req["sap_id"],
                           network_ids, pe_ids, rd, rt, label)
        self.evis[evi_id] = record
        for vni in vnis:
            self.aux[vni] = AuxMapping(vni, evi_id, self.participating_pes(vni), ("vxlan", vni))
        return record

    async def _deploy(self, evi_id: int):
        evi = self.evis.get(evi_id)
        if evi is None:
            return
        txn = await self._push(evi)
        if txn.committed:
            evi.state = "deployed"
            evi.reason = None
            self._advertise_imets(evi)
        else:
            evi.state = "failed"
            evi.reason = txn.reason
            log.warning("EVI %s deployment rolled back: %s", evi_id, txn.reason)

    def _on_rp_created(self, event: EvpnEvent):
        req = event.payload
        try:
            rp = RoutingPolicy(
                next(self._rp_ids), req["name"], bool(req.get("allow_mac_advertisement", True)),
                frozenset(RouteTarget.parse(t) for t in req.get("import_rts", ())),
                frozenset(RouteTarget.parse(t) for t in req.get("export_rts", ())),
                req.get("max_mac_routes"),
            )
        except Exception as exc:
            self._reply(event, error=exc)
            return
        self.rps[rp.rp_id] = rp
        self.stage_log.rp_created(rp.rp_id, req.get("received_ns", monotonic_ns()))
        self._reply(event, rp.to_json())

    def _on_rp_associated(self, event: EvpnEvent):
        evi_id, rp_id = event.payload["evi_id"], event.payload["rp_id"]
        evi = self.evis.get(evi_id)
        if evi is None or evi.state == "deleting":
            self._reply(event, error=NotFound(f"l2vpn {evi_id} not found"))
            return
        if rp_id not in self.rps:
            self._reply(event, error=NotFound(f"rp {rp_id} not found"))
            return
        changed = evi.rp_id != rp_id
        evi.rp_id = rp_id
        self.stage_log.rp_associated(evi_id, rp_id)
        self._reply(event, {"evi_id": evi_id, "rp_id": rp_id})
        if changed:
            self._sync_adverts(evi)
            self._schedule(evi_id, lambda: self._update_config(evi_id))

    async def _update_config(self, evi_id: int):
        evi = self.evis.get(evi_id)
        if evi is None or evi.state == "deleting":
            return
        txn = await self._push(evi)
        if txn.committed:
            if evi.state == "failed" and evi.reason and evi.reason.startswith("policy update"):
                evi.state, evi.reason = "deployed", None
        else:
            evi.state = "failed"
            evi.reason = f"policy update rolled back: {txn.reason}"

    def _on_evi_deleted(self, event: EvpnEvent):
        evi_id = event.payload["evi_id"]
        evi = self.evis.get(evi_id)
        if evi is None or evi.state == "deleting":
            self._reply(event, error=NotFound(f"l2vpn {evi_id} not found"))
            return
        if evi.state == "pending" or self.busy(evi_id):
            self._reply(event, error=Conflict(f"l2vpn {evi_id} is mid-transaction, retry later"))
            return
        evi.state = "deleting"
        for entry in self.mac_table.drop_evi(evi_id):
            self._withdraw_local(evi_id, entry.mac)
        for route, _ in self._imets.pop(evi_id, {}).values():
            self._emit_withdraw(route)
        for vni in [v for v, m in self.aux.items() if m.evi_id == evi_id]:
            del self.aux[vni]
        reply = event.reply

        async def finish():
            txn = await self._push(evi, "delete")
            if txn.committed:
                self.labels.release(evi_id)
                self.evis.pop(evi_id, None)
                if reply is not None and not reply.done():
                    reply.set_result({"evi_id": evi_id, "deleted": True})
            else:
                evi.state = "failed"
                evi.reason = f"delete rolled back: {txn.reason}"
                if reply is not None and not reply.done():
                    reply.set_exception(TransactionFailed(evi.reason))

        self._schedule(evi_id, finish)

    # ------------------------------------------------------------ local endpoints

    def _on_local_endpoint_up(self, event: EvpnEvent):
        p = event.payload
        result = self.endpoint_up(p["mac"], p.get("ip"), p["network_id"])
        self._reply(event, result)

    def _on_local_endpoint_down(self, event: EvpnEvent):
        p = event.payload
        result = self.endpoint_down(p["mac"], p["network_id"])
        self._reply(event, result)

    def evi_for_network(self, network_id: str) -> Optional[EviRecord]:
        network = self.inventory.networks.get(network_id)
        if network is None:
            return None
        mapping = self.aux.get(network.vni)
        if mapping is None:
            return None
        return self.evis.get(mapping.evi_id)

    def endpoint_up(self, mac, ip, network_id: str) -> dict:
        mac, ip = parse_mac(mac), parse_ip(ip)
        evi = self.evi_for_network(network_id)
        if evi is None or evi.state == "deleting":
            self.counters.unmapped_endpoints += 1
            log.warning("endpoint %s on network %r not mapped to any l2vpn; ignored",
                        format_mac(mac), network_id)
            return {"mapped": False}
        existing = self.mac_table.get(mac, evi.evi_id)
        if existing is not None and existing.origin == "local" and existing.ip == ip:
            return {"mapped": True, "evi_id": evi.evi_id, "changed": False}
        if ip is not None:
            for other in self.mac_table.entries(evi.evi_id):
                if other.ip == ip and other.mac != mac:
                    self.counters.ip_conflicts += 1
                    log.warning("IP %s in l2vpn %s moves from %s to %s", ip, evi.evi_id,
                                format_mac(other.mac), format_mac(mac))
        self.mac_table.put(MacTableEntry(mac, evi.evi_id, "local", evi.mpls_label, ZERO_ESI, ip))
        self._sync_adverts(evi)
        return {"mapped": True, "evi_id": evi.evi_id, "changed": True}

    def endpoint_down(self, mac, network_id: str) -> dict:
        mac = parse_mac(mac)
        evi = self.evi_for_network(network_id)
        if evi is None:
            return {"mapped": False}
        entry = self.mac_table.get(mac, evi.evi_id)
        if entry is None or entry.origin != "local":
            return {"mapped": True, "changed": False}
        self.mac_table.remove(mac, evi.evi_id)
        self._sync_adverts(evi)
        return {"mapped": True, "changed": True}

    # ------------------------------------------------------------ advertisement

    def _local_route(self, evi: EviRecord, entry: MacTableEntry) -> EvpnRoute:
        return EvpnRoute.mac_ip(evi.rd, entry.mac, evi.mpls_label, ip=entry.ip, esi=ZERO_ESI)

    def _sync_adverts(self, evi: EviRecord) -> None:
        """Bring advertised type-2 routes of one EVI in line with the gate."""
        allow = self.allows(evi)
        attrs = self.export_attrs(evi)
        desired = {}
        for entry in self.mac_table.entries(evi.evi_id):
            if should_advertise(entry.origin, allow):
                desired[entry.mac] = self._local_route(evi, entry)
        current = {mac: v for (e, mac), v in self._advertised.items() if e == evi.evi_id}
        for mac, (route, old_attrs) in current.items():
            if mac not in desired or desired[mac].key() != route.key():
                self._withdraw_local(evi.evi_id, mac)
        for mac, route in desired.items():
            if self._advertised.get((evi.evi_id, mac)) != (route, attrs):
                self._advertised[(evi.evi_id, mac)] = (route, attrs)
                self._emit_advertise(route, attrs)

    def _withdraw_local(self, evi_id: int, mac: bytes) -> None:
        held = self._advertised.pop((evi_id, mac), None)
        if held is not None:
            self._emit_withdraw(held[0])

    def _advertise_imets(self, evi: EviRecord) -> None:
        attrs = self.export_attrs(evi)
        routes = self._imets.setdefault(evi.evi_id, {})
        for vni in sorted(m.vni for m in self.aux.values() if m.evi_id == evi.evi_id):
            route = EvpnRoute.inclusive_multicast(evi.rd, vni, self.router_id)
            if routes.get(vni) != (route, attrs):
                routes[vni] = (route, attrs)
                self._emit_advertise(route, attrs)

    def _emit_advertise(self, route, attrs, peers=None, trace: MessageTrace = None):
        self.counters.routes_advertised += 1
        if trace is not None:
            trace.outbound_enqueue = monotonic_ns()
        self.outbound.publish("route_advertise", {"route": route, "attrs": attrs, "peers": peers},
                              trace=trace)

    def _emit_withdraw(self, route, peers=None):
        self.counters.routes_withdrawn += 1
        self.outbound.publish("route_withdraw", {"route": route, "peers": peers})

    # ------------------------------------------------------------ remote routes

    def _on_remote_route_received(self, event: EvpnEvent):
        p = event.payload
        peer = p["peer"]
        trace: Optional[MessageTrace] = event.trace
        if trace is not None:
            trace.inbound_enqueue = event.bus_enqueue_ts
            trace.inbound_dequeue = event.bus_dequeue_ts
        for route in p.get("withdrawals", ()):
            self.remote_withdraw(route, peer)
        attrs = p.get("attrs")
        for route in p.get("routes", ()):
            matched = self.remote_advertise(route, attrs, peer)
            if matched and peer in self.reflect_peers and route.route_type == codec.MAC_IP_ADVERTISEMENT:
                self._reflect(route, matched[0], peer, trace)
        self._reply(event, {"routes": len(p.get("routes", ())), "withdrawals": len(p.get("withdrawals", ()))})

    def _matching_evis(self, attrs: Optional[PathAttributes]) -> list[EviRecord]:
        if attrs is None:
            return []
        targets = set(attrs.route_targets)
        return [e for e in self.evis.values()
                if e.state != "deleting" and targets & self.import_targets(e)]

    def remote_advertise(self, route: EvpnRoute, attrs: Optional[PathAttributes], peer: str) -> list[EviRecord]:
        key = (peer, route.key())
        if key in self._remote:
            self.remote_withdraw(route, peer)
        evis = self._matching_evis(attrs)
        if not evis:
            self.counters.filtered += 1
            self.filtered_by_peer[peer] = self.filtered_by_peer.get(peer, 0) + 1
            return []
        applied = _Applied(route)
        t = route.route_type
        if t == codec.MAC_IP_ADVERTISEMENT:
            for evi in evis:
                if self._learn_remote_mac(evi, route, peer):
                    applied.evis.append(evi.evi_id)
        elif t == codec.INCLUSIVE_MULTICAST:
            peers = self._imet_peers.setdefault(route.eth_tag, {})
            peers.setdefault(peer, set()).add(route.key())
            mapping = self.aux.get(route.eth_tag)
            if mapping is not None:
                mapping.participating_pes.add(peer)
            applied.evis = [e.evi_id for e in evis]
        else:
            self.esi_routes[key] = route
            applied.evis = [e.evi_id for e in evis]
        if applied.evis:
            self._remote[key] = applied
        return [self.evis[i] for i in applied.evis]

    def _learn_remote_mac(self, evi: EviRecord, route: EvpnRoute, peer: str) -> bool:
        existing = self.mac_table.get(route.mac, evi.evi_id)
        if existing is not None and existing.origin == "local":
            self.counters.ignored_local_wins += 1
            log.info("remote route for local MAC %s in l2vpn %s ignored",
                     format_mac(route.mac), evi.evi_id)
            return False
        if existing is None:
            rp = self.policy_of(evi)
            if rp is not None and rp.max_mac_routes is not None:
                remote = sum(1 for e in self.mac_table.entries(evi.evi_id) if e.origin == "remote")
                if remote >= rp.max_mac_routes:
                    self.counters.over_limit += 1
                    self.counters.filtered += 1
                    return False
            path = [peer]
        else:
            path = sorted(set(existing.path_list) | {peer})
        ip = route.ip if route.ip is not None else (existing.ip if existing else None)
        if ip is not None:
            for other in self.mac_table.entries(evi.evi_id):
                if other.ip == ip and other.mac != route.mac:
                    self.counters.ip_conflicts += 1
        self.mac_table.put(MacTableEntry(route.mac, evi.evi_id, "remote", route.labels[0],
                                         route.esi, ip, path))
        return True

    def remote_withdraw(self, route: EvpnRoute, peer: str) -> None:
        key = (peer, route.key())
        applied = self._remote.pop(key, None)
        if applied is None:
            self.counters.unmatched_withdrawals += 1
            return
        t = route.route_type
        if t == codec.MAC_IP_ADVERTISEMENT:
            mac = applied.route.mac
            for evi_id in applied.evis:
                entry = self.mac_table.get(mac, evi_id)
                if entry is None or entry.origin != "remote":
                    continue
                remaining = [p for p in entry.path_list if p != peer]
                if remaining:
                    entry.path_list = remaining
                else:
                    self.mac_table.remove(mac, evi_id)
        elif t == codec.INCLUSIVE_MULTICAST:
            vni = applied.route.eth_tag
            peers = self._imet_peers.get(vni, {})
            keys = peers.get(peer, set())
            keys.discard(route.key())
            if not keys:
                peers.pop(peer, None)
                mapping = self.aux.get(vni)
                if mapping is not None:
                    mapping.participating_pes.discard(peer)
            if not peers:
                self._imet_peers.pop(vni, None)
        else:
            self.esi_routes.pop(key, None)

    def _reflect(self, route: EvpnRoute, evi: EviRecord, peer: str, trace: Optional[MessageTrace]):
        reply = EvpnRoute.mac_ip(evi.rd, route.mac, evi.mpls_label, ip=route.ip, esi=ZERO_ESI)
        if trace is not None:
            trace.handled = monotonic_ns()
        self._emit_advertise(reply, self.export_attrs(evi), peers=[peer], trace=trace)

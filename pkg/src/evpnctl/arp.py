"""ARP suppression proxy and silent-host announcer.

ARP requests are answered from the controller's MAC/IP table instead of
being flooded.  VM boot notifications stand in for a gratuitous ARP and
are turned into local endpoint events.
"""

from __future__ import annotations

import ipaddress
import logging
from dataclasses import dataclass
from typing import Optional

from .errors import InvalidArgument
from .model import format_mac, parse_ip

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ArpQuery:
    target_ip: ipaddress.IPv4Address
    evi_id: int

    @classmethod
    def of(cls, evi_id, ip) -> "ArpQuery":
        addr = parse_ip(ip)
        if not isinstance(addr, ipaddress.IPv4Address):
            raise InvalidArgument(f"ARP target must be an IPv4 address, got {ip!r}", "ip")
        return cls(addr, int(evi_id))


@dataclass
class ArpCounters:
    hits: int = 0
    misses: int = 0


class ArpProxy:
    def __init__(self, service, submit=None):
        self.service = service
        self._submit = submit
        self.counters = ArpCounters()

    def handle_arp_request(self, q: ArpQuery) -> Optional[bytes]:
        # Several MACs may claim the IP after a move; the newest one answers.
        best = None
        for entry in self.service.mac_table.entries(q.evi_id):
            if entry.ip == q.target_ip and (best is None or entry.learned_at >= best.learned_at):
                best = entry
        if best is None:
            self.counters.misses += 1
            return None
        self.counters.hits += 1
        return best.mac

    def query(self, evi_id, ip) -> dict:
        q = ArpQuery.of(evi_id, ip)
        mac = self.handle_arp_request(q)
        return {"evi_id": q.evi_id, "ip": str(q.target_ip),
                "hit": mac is not None, "mac": format_mac(mac) if mac else None}

    async def on_vm_boot(self, mac, ip, network_id: str) -> dict:
        if self._submit is None:
            return self.service.endpoint_up(mac, ip, network_id)
        return await self._submit("local_endpoint_up", {"mac": mac, "ip": ip, "network_id": network_id})

    def stats(self) -> dict:
        return {"hits": self.counters.hits, "misses": self.counters.misses}

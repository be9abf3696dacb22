"""Static inventory of PEs, networks and ports, loaded once at startup."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import InvalidArgument
from .model import MAX_VNI, parse_ip, parse_mac


@dataclass(frozen=True)
class PeInfo:
    id: str
    mgmt_addr: str
    bgp_addr: str
    control_addr: Optional[str] = None

    @staticmethod
    def _split(addr: str, default_port: int) -> tuple[str, int]:
        host, sep, port = addr.rpartition(":")
        if not sep:
            return addr, default_port
        return host, int(port)

    def mgmt(self, default_port: int = 2830) -> tuple[str, int]:
        return self._split(self.mgmt_addr, default_port)

    def bgp(self, default_port: int = 1790) -> tuple[str, int]:
        return self._split(self.bgp_addr, default_port)


@dataclass(frozen=True)
class Network:
    id: str
    vni: int


@dataclass(frozen=True)
class Port:
    mac: bytes
    ip: object
    network_id: str


@dataclass
class Inventory:
    pes: dict = field(default_factory=dict)
    networks: dict = field(default_factory=dict)
    ports: list = field(default_factory=list)

    @classmethod
    def from_json(cls, doc: dict) -> "Inventory":
        inv = cls()
        for pe in doc.get("pes", ()):
            info = PeInfo(pe["id"], pe["mgmt_addr"], pe["bgp_addr"], pe.get("control_addr"))
            if info.id in inv.pes:
                raise InvalidArgument(f"duplicate PE id {info.id!r}")
            inv.pes[info.id] = info
        vnis = set()
        for net in doc.get("networks", ()):
            vni = int(net["vni"])
            if not 0 < vni <= MAX_VNI:
                raise InvalidArgument(f"network {net['id']!r}: VNI {vni} outside 24 bits")
            if vni in vnis:
                raise InvalidArgument(f"VNI {vni} used by more than one network")
            vnis.add(vni)
            inv.networks[net["id"]] = Network(net["id"], vni)
        for port in doc.get("ports", ()):
            if port["network_id"] not in inv.networks:
                raise InvalidArgument(f"port {port['mac']} on unknown network {port['network_id']!r}")
            inv.ports.append(Port(parse_mac(port["mac"]), parse_ip(port.get("ip")), port["network_id"]))
        return inv

    @classmethod
    def load(cls, path) -> "Inventory":
        return cls.from_json(json.loads(Path(path).read_text()))

    def to_json(self) -> dict:
        from .model import format_mac
        return {
            "pes": [{"id": p.id, "mgmt_addr": p.mgmt_addr, "bgp_addr": p.bgp_addr,
                     **({"control_addr": p.control_addr} if p.control_addr else {})}
                    for p in self.pes.values()],
            "networks": [{"id": n.id, "vni": n.vni} for n in self.networks.values()],
            "ports": [{"mac": format_mac(p.mac), "ip": str(p.ip) if p.ip else None,
                       "network_id": p.network_id} for p in self.ports],
        }

    def ports_on(self, network_id: str) -> list[Port]:
        return [p for p in self.ports if p.network_id == network_id]

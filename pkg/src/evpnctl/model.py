"""Domain types and allocators shared by every controller module."""

from __future__ import annotations

import heapq
import ipaddress
import struct
import threading
import time
from dataclasses import dataclass, field
from typing import Optional, Union

from .errors import AlreadyAllocated, InvalidArgument, ResourceExhausted

IPAddress = Union[ipaddress.IPv4Address, ipaddress.IPv6Address]

MAX_U16 = 0xFFFF
MAX_U32 = 0xFFFFFFFF
MAX_LABEL = (1 << 20) - 1
MAX_VNI = (1 << 24) - 1


def monotonic_ns() -> int:
    return time.perf_counter_ns()


def parse_mac(value: Union[str, bytes]) -> bytes:
    if isinstance(value, (bytes, bytearray)):
        if len(value) != 6:
            raise InvalidArgument(f"MAC must be 6 bytes, got {len(value)}")
        return bytes(value)
    parts = value.replace("-", ":").split(":")
    if len(parts) != 6:
        raise InvalidArgument(f"bad MAC address {value!r}")
    try:
        raw = bytes(int(p, 16) for p in parts)
    except ValueError:
        raise InvalidArgument(f"bad MAC address {value!r}") from None
    return raw


def format_mac(mac: bytes) -> str:
    return ":".join(f"{b:02x}" for b in mac)


def parse_ip(value) -> Optional[IPAddress]:
    if value is None or value == "":
        return None
    if isinstance(value, (ipaddress.IPv4Address, ipaddress.IPv6Address)):
        return value
    try:
        return ipaddress.ip_address(value)
    except ValueError:
        raise InvalidArgument(f"bad IP address {value!r}") from None


def _parse_pair(text: str, what: str) -> tuple[int, int]:
    try:
        left, right = text.split(":")
        return int(left), int(right)
    except (ValueError, AttributeError):
        raise InvalidArgument(f"bad {what} {text!r}, expected 'asn:number'") from None


@dataclass(frozen=True, order=True)
class RouteDistinguisher:
    asn: int
    assigned_number: int
    type_field: int = 0

    def __post_init__(self):
        if self.type_field != 0:
            raise InvalidArgument("only type-0 route distinguishers are supported")
        if not 0 <= self.asn <= MAX_U16:
            raise InvalidArgument(f"RD asn out of range: {self.asn}")
        if not 0 <= self.assigned_number <= MAX_U32:
            raise InvalidArgument(f"RD number out of range: {self.assigned_number}")

    def to_bytes(self) -> bytes:
        return struct.pack("!HHI", self.type_field, self.asn, self.assigned_number)

    @classmethod
    def from_bytes(cls, data: bytes) -> "RouteDistinguisher":
        type_field, asn, number = struct.unpack("!HHI", data)
        return cls(asn, number, type_field)

    @classmethod
    def parse(cls, text: str) -> "RouteDistinguisher":
        return cls(*_parse_pair(text, "route distinguisher"))

    def __str__(self):
        return f"{self.asn}:{self.assigned_number}"


@dataclass(frozen=True, order=True)
class RouteTarget:
    asn: int
    local_admin: int

    TYPE = 0x00
    SUBTYPE = 0x02

    def __post_init__(self):
        if not 0 <= self.asn <= MAX_U16:
            raise InvalidArgument(f"RT asn out of range: {self.asn}")
        if not 0 <= self.local_admin <= MAX_U32:
            raise InvalidArgument(f"RT number out of range: {self.local_admin}")

    def to_bytes(self) -> bytes:
        return struct.pack("!BBHI", self.TYPE, self.SUBTYPE, self.asn, self.local_admin)

    @classmethod
    def from_bytes(cls, data: bytes) -> Optional["RouteTarget"]:
        """Decode an extended community; ``None`` if it is not a 2-octet-AS RT."""
        typ, sub, asn, admin = struct.unpack("!BBHI", data)
        if typ != cls.TYPE or sub != cls.SUBTYPE:
            return None
        return cls(asn, admin)

    @classmethod
    def parse(cls, text: str) -> "RouteTarget":
        return cls(*_parse_pair(text, "route target"))

    def __str__(self):
        return f"{self.asn}:{self.local_admin}"


@dataclass(frozen=True)
class EthernetSegmentId:
    value: bytes = bytes(10)

    def __post_init__(self):
        if len(self.value) != 10:
            raise InvalidArgument(f"ESI must be 10 octets, got {len(self.value)}")

    @property
    def single_homed(self) -> bool:
        return self.value == bytes(10)

    @classmethod
    def parse(cls, text: str) -> "EthernetSegmentId":
        try:
            return cls(bytes(int(p, 16) for p in text.split(":")))
        except ValueError:
            raise InvalidArgument(f"bad ESI {text!r}") from None

    def __str__(self):
        return ":".join(f"{b:02x}" for b in self.value)


ZERO_ESI = EthernetSegmentId()

EVI_STATES = ("pending", "deployed", "failed", "deleting")


@dataclass
class EviRecord:
    evi_id: int
    customer_id: str
    virtual_network_id: str
    sap_id: str
    network_ids: tuple[str, ...]
    pe_ids: tuple[str, ...]
    rd: Optional[RouteDistinguisher] = None
    rt: Optional[RouteTarget] = None
    mpls_label: Optional[int] = None
    rp_id: Optional[int] = None
    state: str = "pending"
    reason: Optional[str] = None

    @property
    def allocated(self) -> bool:
        return self.rd is not None and self.rt is not None and self.mpls_label is not None

    def to_json(self) -> dict:
        return {
            "evi_id": self.evi_id,
            "customer_id": self.customer_id,
            "virtual_network_id": self.virtual_network_id,
            "sap_id": self.sap_id,
            "network_ids": list(self.network_ids),
            "pe_ids": list(self.pe_ids),
            "rd": str(self.rd) if self.rd else None,
            "rt": str(self.rt) if self.rt else None,
            "mpls_label": self.mpls_label,
            "rp_id": self.rp_id,
            "state": self.state,
            "reason": self.reason,
        }


@dataclass
class RoutingPolicy:
    rp_id: int
    name: str
    allow_mac_advertisement: bool = True
    import_rts: frozenset = frozenset()
    export_rts: frozenset = frozenset()
    max_mac_routes: Optional[int] = None

    def to_json(self) -> dict:
        return {
            "rp_id": self.rp_id,
            "name": self.name,
            "allow_mac_advertisement": self.allow_mac_advertisement,
            "import_rts": [str(rt) for rt in sorted(self.import_rts)],
            "export_rts": [str(rt) for rt in sorted(self.export_rts)],
            "max_mac_routes": self.max_mac_routes,
        }


@dataclass
class MacTableEntry:
    mac: bytes
    evi_id: int
    origin: str
    mpls_label: int
    esi: EthernetSegmentId = ZERO_ESI
    ip: Optional[IPAddress] = None
    path_list: list = field(default_factory=list)
    learned_at: int = field(default_factory=monotonic_ns)

    def to_json(self) -> dict:
        return {
            "mac": format_mac(self.mac),
            "ip": str(self.ip) if self.ip else None,
            "evi_id": self.evi_id,
            "origin": self.origin,
            "mpls_label": self.mpls_label,
            "esi": str(self.esi),
            "path_list": list(self.path_list),
        }


@dataclass
class AuxMapping:
    vni: int
    evi_id: int
    participating_pes: set = field(default_factory=set)
    # ("vxlan", vni) | ("vlan", tag) | ("none", None)
    local_encap: tuple = ("none", None)


def derive_rd_rt(evi_id: int, controller_asn: int) -> tuple[RouteDistinguisher, RouteTarget]:
    if not isinstance(evi_id, int) or not 0 < evi_id <= MAX_U32:
        raise InvalidArgument(f"evi_id must be in [1, 2^32), got {evi_id!r}")
    if not 0 <= controller_asn <= MAX_U16:
        raise InvalidArgument(f"controller asn must be 16-bit, got {controller_asn!r}")
    return RouteDistinguisher(controller_asn, evi_id), RouteTarget(controller_asn, evi_id)


class LabelAllocator:
    """Per-EVI MPLS label pool handing out the lowest free label."""

    def __init__(self, base: int = 100000, size: int = 100000):
        if base < 16 or size <= 0 or base + size - 1 > MAX_LABEL:
            raise InvalidArgument(f"label pool [{base}, {base + size}) outside [16, 2^20)")
        self.base = base
        self.size = size
        self._lock = threading.Lock()
        self._by_evi: dict[int, int] = {}
        self._by_label: dict[int, int] = {}
        self._released: list[int] = []
        self._next = base

    def allocate(self, evi_id: int) -> int:
        with self._lock:
            if evi_id in self._by_evi:
                return self._by_evi[evi_id]
            while self._released:
                label = heapq.heappop(self._released)
                if label not in self._by_label:
                    break
            else:
                if self._next >= self.base + self.size:
                    raise ResourceExhausted(f"label pool of {self.size} exhausted")
                label = self._next
                self._next += 1
            self._bind(evi_id, label)
            return label

    def reserve(self, evi_id: int, label: int) -> int:
        """Bind a specific label, e.g. when replaying known state."""
        with self._lock:
            if not self.base <= label < self.base + self.size:
                raise InvalidArgument(f"label {label} outside pool")
            holder = self._by_label.get(label)
            if holder is not None and holder != evi_id:
                raise AlreadyAllocated(f"label {label} held by EVI {holder}")
            current = self._by_evi.get(evi_id)
            if current is not None and current != label:
                raise AlreadyAllocated(f"EVI {evi_id} already holds label {current}")
            if label >= self._next:
                self._released.extend(range(self._next, label))
                heapq.heapify(self._released)
                self._next = label + 1
            self._bind(evi_id, label)
            return label

    def _bind(self, evi_id, label):
        self._by_evi[evi_id] = label
        self._by_label[label] = evi_id

    def release(self, evi_id: int) -> None:
        with self._lock:
            label = self._by_evi.pop(evi_id, None)
            if label is None:
                return
            del self._by_label[label]
            heapq.heappush(self._released, label)

    def label_of(self, evi_id: int) -> Optional[int]:
        return self._by_evi.get(evi_id)

    def snapshot(self) -> dict[int, int]:
        with self._lock:
            return dict(self._by_evi)

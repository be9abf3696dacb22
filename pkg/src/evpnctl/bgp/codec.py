"""BGP message framing and the EVPN (AFI 25 / SAFI 70) NLRI codec.

NLRI layouts follow RFC 7432 section 7. Every NLRI entry is
``route_type(1) + length(1) + body``; IP lengths and the MAC length are
carried in bits. MPLS labels occupy the high-order 20 bits of 3 octets.
"""

from __future__ import annotations

import ipaddress
import struct
from dataclasses import dataclass, field
from typing import Iterable, Optional

from ..errors import InvalidArgument, MalformedMessage
from ..model import (
    MAX_LABEL,
    MAX_U32,
    EthernetSegmentId,
    IPAddress,
    RouteDistinguisher,
    RouteTarget,
    format_mac,
    monotonic_ns,
    parse_ip,
    parse_mac,
)

MARKER = b"\xff" * 16
HEADER_LEN = 19
MAX_MESSAGE_LEN = 4096

MSG_OPEN = 1
MSG_UPDATE = 2
MSG_NOTIFICATION = 3
MSG_KEEPALIVE = 4

AFI_L2VPN = 25
SAFI_EVPN = 70

ATTR_ORIGIN = 1
ATTR_AS_PATH = 2
ATTR_MP_REACH_NLRI = 14
ATTR_MP_UNREACH_NLRI = 15
ATTR_EXTENDED_COMMUNITIES = 16

FLAG_OPTIONAL = 0x80
FLAG_TRANSITIVE = 0x40
FLAG_EXTENDED_LENGTH = 0x10

AS_SEQUENCE = 2

ETHERNET_AD = 1
MAC_IP_ADVERTISEMENT = 2
INCLUSIVE_MULTICAST = 3
ETHERNET_SEGMENT = 4

# NOTIFICATION error codes used here
ERR_HEADER = 1
ERR_OPEN = 2
ERR_UPDATE = 3
ERR_HOLD_TIMER = 4
ERR_FSM = 5
ERR_CEASE = 6


# per route type: fields that must be set, fields that must be unset (labels: empty),
# and the allowed label counts; "ip" is optional on type 2
_REQUIRED = {
    1: ("esi", "eth_tag"),
    2: ("esi", "eth_tag", "mac"),
    3: ("eth_tag", "originating_ip"),
    4: ("esi", "originating_ip"),
}
_FORBIDDEN = {
    1: ("mac", "ip", "originating_ip"),
    2: ("originating_ip",),
    3: ("esi", "mac", "ip"),
    4: ("eth_tag", "mac", "ip"),
}
_LABEL_COUNTS = {1: (1,), 2: (1, 2), 3: (0,), 4: (0,)}


@dataclass(frozen=True)
class EvpnRoute:
    route_type: int
    rd: RouteDistinguisher
    esi: Optional[EthernetSegmentId] = None
    eth_tag: Optional[int] = None
    mac: Optional[bytes] = None
    ip: Optional[IPAddress] = None
    labels: tuple = ()
    originating_ip: Optional[IPAddress] = None

    @classmethod
    def ethernet_ad(cls, rd, esi, eth_tag, label):
        return cls(ETHERNET_AD, rd, esi=esi, eth_tag=eth_tag, labels=(label,))

    @classmethod
    def mac_ip(cls, rd, mac, labels, ip=None, esi=None, eth_tag=0):
        if isinstance(labels, int):
            labels = (labels,)
        return cls(
            MAC_IP_ADVERTISEMENT,
            rd,
            esi=esi if esi is not None else EthernetSegmentId(),
            eth_tag=eth_tag,
            mac=parse_mac(mac),
            ip=parse_ip(ip),
            labels=tuple(labels),
        )

    @classmethod
    def inclusive_multicast(cls, rd, eth_tag, originating_ip):
        return cls(INCLUSIVE_MULTICAST, rd, eth_tag=eth_tag, originating_ip=parse_ip(originating_ip))

    @classmethod
    def ethernet_segment(cls, rd, esi, originating_ip):
        return cls(ETHERNET_SEGMENT, rd, esi=esi, originating_ip=parse_ip(originating_ip))

    def validate(self) -> None:
        t = self.route_type
        if t not in (1, 2, 3, 4):
            raise InvalidArgument(f"unknown EVPN route type {t}")
        for name in _REQUIRED[t]:
            if getattr(self, name) is None:
                raise InvalidArgument(f"type-{t} route requires {name}")
        for name in _FORBIDDEN[t]:
            if getattr(self, name) is not None:
                raise InvalidArgument(f"type-{t} route must not carry {name}")
        if self.eth_tag is not None and not 0 <= self.eth_tag <= MAX_U32:
            raise InvalidArgument(f"eth_tag out of range: {self.eth_tag}")
        if self.mac is not None and len(self.mac) != 6:
            raise InvalidArgument("MAC must be 6 bytes")
        if len(self.labels) not in _LABEL_COUNTS[t]:
            raise InvalidArgument(f"type-{t} route cannot carry {len(self.labels)} labels")
        for label in self.labels:
            if not 0 <= label <= MAX_LABEL:
                raise InvalidArgument(f"label out of range: {label}")

    def key(self) -> tuple:
        """Route identity as used for withdrawals (labels never count)."""
        t = self.route_type
        if t == ETHERNET_AD:
            return (t, self.rd, self.esi, self.eth_tag)
        if t == MAC_IP_ADVERTISEMENT:
            return (t, self.rd, self.eth_tag, self.mac, self.ip)
        if t == INCLUSIVE_MULTICAST:
            return (t, self.rd, self.eth_tag, self.originating_ip)
        return (t, self.rd, self.esi, self.originating_ip)

    def to_json(self) -> dict:
        out = {"route_type": self.route_type, "rd": str(self.rd)}
        if self.esi is not None:
            out["esi"] = str(self.esi)
        if self.eth_tag is not None:
            out["eth_tag"] = self.eth_tag
        if self.mac is not None:
            out["mac"] = format_mac(self.mac)
        if self.ip is not None:
            out["ip"] = str(self.ip)
        if self.labels:
            out["labels"] = list(self.labels)
        if self.originating_ip is not None:
            out["originating_ip"] = str(self.originating_ip)
        return out

    @classmethod
    def from_json(cls, doc: dict) -> "EvpnRoute":
        route = cls(
            int(doc["route_type"]),
            RouteDistinguisher.parse(doc["rd"]),
            esi=EthernetSegmentId.parse(doc["esi"]) if doc.get("esi") else None,
            eth_tag=doc.get("eth_tag"),
            mac=parse_mac(doc["mac"]) if doc.get("mac") else None,
            ip=parse_ip(doc.get("ip")),
            labels=tuple(doc.get("labels", ())),
            originating_ip=parse_ip(doc.get("originating_ip")),
        )
        route.validate()
        return route


@dataclass(frozen=True)
class PathAttributes:
    next_hop: ipaddress.IPv4Address
    extended_communities: tuple = ()
    origin: int = 0
    as_path: tuple = ()

    @classmethod
    def for_targets(cls, next_hop, route_targets: Iterable[RouteTarget], origin=0, as_path=()):
        comms = tuple(rt.to_bytes() for rt in sorted(set(route_targets)))
        return cls(ipaddress.IPv4Address(next_hop), comms, origin, tuple(as_path))

    @property
    def route_targets(self) -> list[RouteTarget]:
        rts = (RouteTarget.from_bytes(c) for c in self.extended_communities)
        return [rt for rt in rts if rt is not None]

    def to_json(self) -> dict:
        return {
            "next_hop": str(self.next_hop),
            "route_targets": [str(rt) for rt in self.route_targets],
            "origin": self.origin,
            "as_path": list(self.as_path),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "PathAttributes":
        return cls.for_targets(
            doc["next_hop"],
            [RouteTarget.parse(rt) for rt in doc.get("route_targets", ())],
            doc.get("origin", 0),
            doc.get("as_path", ()),
        )


@dataclass
class ParsedUpdate:
    routes: list
    withdrawals: list
    attrs: Optional[PathAttributes]
    unknown_skipped: int = 0
    parse_started: int = 0
    parse_finished: int = 0

    def __iter__(self):
        return iter((self.routes, self.withdrawals, self.attrs))


# ---------------------------------------------------------------- NLRI


def _pack_label(label: int) -> bytes:
    return (label << 4).to_bytes(3, "big")


def _unpack_label(data: bytes) -> int:
    return int.from_bytes(data, "big") >> 4


def _pack_ip(ip: Optional[IPAddress]) -> bytes:
    if ip is None:
        return b"\x00"
    raw = ip.packed
    return bytes([len(raw) * 8]) + raw


# RD, ESI, ethernet tag, MAC length and MAC of a type-2 NLRI
_TYPE2_HEAD = struct.Struct("!HHI10sIB6s")


def encode_nlri(route: EvpnRoute) -> bytes:
    route.validate()
    t = route.route_type
    if t == ETHERNET_AD:
        body = (route.rd.to_bytes() + route.esi.value + struct.pack("!I", route.eth_tag)
                + _pack_label(route.labels[0]))
    elif t == MAC_IP_ADVERTISEMENT:
        rd = route.rd
        body = (_TYPE2_HEAD.pack(rd.type_field, rd.asn, rd.assigned_number, route.esi.value,
                                 route.eth_tag, 48, route.mac)
                + _pack_ip(route.ip) + b"".join(_pack_label(lbl) for lbl in route.labels))
    elif t == INCLUSIVE_MULTICAST:
        body = route.rd.to_bytes() + struct.pack("!I", route.eth_tag) + _pack_ip(route.originating_ip)
    else:
        body = route.rd.to_bytes() + route.esi.value + _pack_ip(route.originating_ip)
    return bytes([t, len(body)]) + body


def _take_ip(body: bytes, pos: int, allow_empty: bool) -> tuple[Optional[IPAddress], int]:
    if pos >= len(body):
        raise MalformedMessage("NLRI truncated before IP length", ERR_UPDATE, 10)
    bits = body[pos]
    pos += 1
    if bits == 0 and allow_empty:
        return None, pos
    if bits not in (32, 128):
        raise MalformedMessage(f"bad IP length {bits} bits", ERR_UPDATE, 10)
    n = bits // 8
    if pos + n > len(body):
        raise MalformedMessage("NLRI truncated inside IP address", ERR_UPDATE, 10)
    return ipaddress.ip_address(body[pos:pos + n]), pos + n


def _decode_body(t: int, body: bytes) -> EvpnRoute:
    need = {1: 25, 2: 33, 3: 13, 4: 19}[t]
    if len(body) < need:
        raise MalformedMessage(f"type-{t} NLRI too short ({len(body)} bytes)", ERR_UPDATE, 10)
    rd = RouteDistinguisher.from_bytes(body[:8])
    if t == ETHERNET_AD:
        if len(body) != 25:
            raise MalformedMessage("type-1 NLRI length mismatch", ERR_UPDATE, 10)
        return EvpnRoute(t, rd, esi=EthernetSegmentId(body[8:18]),
                         eth_tag=struct.unpack("!I", body[18:22])[0],
                         labels=(_unpack_label(body[22:25]),))
    if t == MAC_IP_ADVERTISEMENT:
        esi = EthernetSegmentId(body[8:18])
        tag = struct.unpack("!I", body[18:22])[0]
        if body[22] != 48:
            raise MalformedMessage(f"bad MAC length {body[22]}", ERR_UPDATE, 10)
        mac = body[23:29]
        ip, pos = _take_ip(body, 29, allow_empty=True)
        rest = body[pos:]
        if len(rest) not in (3, 6):
            raise MalformedMessage("type-2 NLRI label field length mismatch", ERR_UPDATE, 10)
        labels = tuple(_unpack_label(rest[i:i + 3]) for i in range(0, len(rest), 3))
        return EvpnRoute(t, rd, esi=esi, eth_tag=tag, mac=mac, ip=ip, labels=labels)
    if t == INCLUSIVE_MULTICAST:
        tag = struct.unpack("!I", body[8:12])[0]
        ip, pos = _take_ip(body, 12, allow_empty=False)
        if pos != len(body):
            raise MalformedMessage("type-3 NLRI length mismatch", ERR_UPDATE, 10)
        return EvpnRoute(t, rd, eth_tag=tag, originating_ip=ip)
    esi = EthernetSegmentId(body[8:18])
    ip, pos = _take_ip(body, 18, allow_empty=False)
    if pos != len(body):
        raise MalformedMessage("type-4 NLRI length mismatch", ERR_UPDATE, 10)
    return EvpnRoute(t, rd, esi=esi, originating_ip=ip)


def decode_nlri(data: bytes) -> tuple[list[EvpnRoute], int]:
    """Decode a run of NLRI entries; unknown route types are skipped and counted."""
    routes = []
    skipped = 0
    pos = 0
    while pos < len(data):
        if pos + 2 > len(data):
            raise MalformedMessage("NLRI entry header truncated", ERR_UPDATE, 10)
        t, length = data[pos], data[pos + 1]
        pos += 2
        if pos + length > len(data):
            raise MalformedMessage(
                f"NLRI length {length} exceeds remaining {len(data) - pos} bytes", ERR_UPDATE, 10)
        body = data[pos:pos + length]
        pos += length
        if t not in (1, 2, 3, 4):
            skipped += 1
            continue
        try:
            routes.append(_decode_body(t, body))
        except InvalidArgument as exc:
            raise MalformedMessage(str(exc), ERR_UPDATE, 10) from None
    return routes, skipped


# ---------------------------------------------------------------- messages


def frame(msg_type: int, body: bytes) -> bytes:
    length = HEADER_LEN + len(body)
    if length > MAX_MESSAGE_LEN:
        raise InvalidArgument(f"message of {length} bytes exceeds {MAX_MESSAGE_LEN}")
    return MARKER + struct.pack("!HB", length, msg_type) + body


def _attr(flags: int, code: int, value: bytes) -> bytes:
    if len(value) > 255:
        return struct.pack("!BBH", flags | FLAG_EXTENDED_LENGTH, code, len(value)) + value
    return struct.pack("!BBB", flags, code, len(value)) + value


def _encode_attrs(attrs: Optional[PathAttributes], nlri: bytes, withdrawn: bytes) -> bytes:
    out = b""
    if attrs is not None:
        out += _attr(FLAG_TRANSITIVE, ATTR_ORIGIN, bytes([attrs.origin]))
        as_path = b""
        if attrs.as_path:
            as_path = struct.pack("!BB", AS_SEQUENCE, len(attrs.as_path)) + b"".join(
                struct.pack("!H", asn) for asn in attrs.as_path)
        out += _attr(FLAG_TRANSITIVE, ATTR_AS_PATH, as_path)
    if nlri:
        nh = attrs.next_hop.packed
        value = struct.pack("!HBB", AFI_L2VPN, SAFI_EVPN, len(nh)) + nh + b"\x00" + nlri
        out += _attr(FLAG_OPTIONAL, ATTR_MP_REACH_NLRI, value)
    if withdrawn:
        value = struct.pack("!HB", AFI_L2VPN, SAFI_EVPN) + withdrawn
        out += _attr(FLAG_OPTIONAL, ATTR_MP_UNREACH_NLRI, value)
    if attrs is not None and attrs.extended_communities:
        out += _attr(FLAG_OPTIONAL | FLAG_TRANSITIVE, ATTR_EXTENDED_COMMUNITIES,
                     b"".join(attrs.extended_communities))
    return out


def build_update(nlris: list[bytes], attrs: Optional[PathAttributes],
                 withdrawn: list[bytes] = ()) -> bytes:
    """Assemble one UPDATE from already-encoded NLRI entries."""
    if not nlris and not withdrawn:
        raise InvalidArgument("UPDATE needs at least one route or withdrawal")
    if nlris:
        if attrs is None:
            raise InvalidArgument("advertisements require path attributes")
        if not attrs.route_targets:
            raise InvalidArgument("EVPN advertisements must carry a route target")
    path_attrs = _encode_attrs(attrs if nlris else None, b"".join(nlris), b"".join(withdrawn))
    body = struct.pack("!H", 0) + struct.pack("!H", len(path_attrs)) + path_attrs
    return frame(MSG_UPDATE, body)


def update_overhead(attrs: Optional[PathAttributes]) -> int:
    """Bytes an UPDATE spends outside its NLRI entries (extended-length MP attribute)."""
    probe = b"\x03\x00"
    if attrs is None:
        return len(build_update([], None, [probe])) - len(probe) + 1
    return len(build_update([probe], attrs)) - len(probe) + 1


def serialize_update(routes: list[EvpnRoute], attrs: Optional[PathAttributes],
                     withdrawals: list[EvpnRoute] = ()) -> bytes:
    if not routes and not withdrawals:
        raise InvalidArgument("nothing to advertise or withdraw")
    return build_update([encode_nlri(r) for r in routes], attrs,
                        [encode_nlri(r) for r in withdrawals])


def split_nlris(nlris: list[bytes], attrs: Optional[PathAttributes]) -> list[list[bytes]]:
    """Partition encoded NLRIs into chunks that each fit one UPDATE, order kept."""
    budget = MAX_MESSAGE_LEN - update_overhead(attrs)
    chunks, current, size = [], [], 0
    for n in nlris:
        if current and size + len(n) > budget:
            chunks.append(current)
            current, size = [], 0
        current.append(n)
        size += len(n)
    if current:
        chunks.append(current)
    return chunks


def serialize_updates(routes: list[EvpnRoute], attrs: PathAttributes) -> list[bytes]:
    """Like :func:`serialize_update` but splits at the 4096-byte limit."""
    if not routes:
        raise InvalidArgument("nothing to advertise")
    return [build_update(chunk, attrs) for chunk in split_nlris([encode_nlri(r) for r in routes], attrs)]


def parse_header(header: bytes) -> tuple[int, int]:
    if len(header) < HEADER_LEN:
        raise MalformedMessage("short BGP header", ERR_HEADER, 2)
    if header[:16] != MARKER:
        raise MalformedMessage("connection not synchronized", ERR_HEADER, 1)
    length, msg_type = struct.unpack("!HB", header[16:19])
    if not HEADER_LEN <= length <= MAX_MESSAGE_LEN:
        raise MalformedMessage(f"bad message length {length}", ERR_HEADER, 2)
    return length, msg_type


def _decode_attrs(data: bytes):
    pos = 0
    attrs = {}
    while pos < len(data):
        if pos + 3 > len(data):
            raise MalformedMessage("attribute header truncated", ERR_UPDATE, 1)
        flags, code = data[pos], data[pos + 1]
        if flags & FLAG_EXTENDED_LENGTH:
            if pos + 4 > len(data):
                raise MalformedMessage("attribute header truncated", ERR_UPDATE, 1)
            length = struct.unpack("!H", data[pos + 2:pos + 4])[0]
            pos += 4
        else:
            length = data[pos + 2]
            pos += 3
        if pos + length > len(data):
            raise MalformedMessage(f"attribute {code} length exceeds message", ERR_UPDATE, 1)
        attrs[code] = data[pos:pos + length]
        pos += length
    return attrs


def parse_update(data: bytes) -> ParsedUpdate:
    started = monotonic_ns()
    length, msg_type = parse_header(data)
    if msg_type != MSG_UPDATE:
        raise InvalidArgument(f"not an UPDATE message (type {msg_type})")
    if length != len(data):
        raise MalformedMessage(f"header length {length} != {len(data)} bytes", ERR_HEADER, 2)
    body = data[HEADER_LEN:]
    if len(body) < 4:
        raise MalformedMessage("UPDATE body truncated", ERR_UPDATE, 1)
    wlen = struct.unpack("!H", body[:2])[0]
    if 2 + wlen + 2 > len(body):
        raise MalformedMessage("withdrawn-routes length exceeds message", ERR_UPDATE, 1)
    pos = 2 + wlen
    alen = struct.unpack("!H", body[pos:pos + 2])[0]
    pos += 2
    if pos + alen > len(body):
        raise MalformedMessage("path-attribute length exceeds message", ERR_UPDATE, 1)
    raw = _decode_attrs(body[pos:pos + alen])

    routes, withdrawals, skipped = [], [], 0
    next_hop = None
    reach = raw.get(ATTR_MP_REACH_NLRI)
    if reach is not None:
        if len(reach) < 5:
            raise MalformedMessage("MP_REACH_NLRI truncated", ERR_UPDATE, 9)
        afi, safi, nh_len = struct.unpack("!HBB", reach[:4])
        if 4 + nh_len + 1 > len(reach):
            raise MalformedMessage("MP_REACH_NLRI next hop truncated", ERR_UPDATE, 9)
        if (afi, safi) == (AFI_L2VPN, SAFI_EVPN):
            nh = reach[4:4 + nh_len]
            if nh_len not in (4, 16):
                raise MalformedMessage(f"bad next-hop length {nh_len}", ERR_UPDATE, 9)
            next_hop = ipaddress.ip_address(nh)
            routes, skipped = decode_nlri(reach[4 + nh_len + 1:])
    unreach = raw.get(ATTR_MP_UNREACH_NLRI)
    if unreach is not None:
        if len(unreach) < 3:
            raise MalformedMessage("MP_UNREACH_NLRI truncated", ERR_UPDATE, 9)
        afi, safi = struct.unpack("!HB", unreach[:3])
        if (afi, safi) == (AFI_L2VPN, SAFI_EVPN):
            withdrawals, more = decode_nlri(unreach[3:])
            skipped += more

    attrs = None
    if ATTR_ORIGIN in raw or next_hop is not None:
        origin = raw.get(ATTR_ORIGIN, b"\x00")
        as_path = []
        seg = raw.get(ATTR_AS_PATH, b"")
        p = 0
        while p < len(seg):
            if p + 2 > len(seg):
                raise MalformedMessage("AS_PATH truncated", ERR_UPDATE, 11)
            count = seg[p + 1]
            if p + 2 + 2 * count > len(seg):
                raise MalformedMessage("AS_PATH truncated", ERR_UPDATE, 11)
            as_path.extend(struct.unpack(f"!{count}H", seg[p + 2:p + 2 + 2 * count]))
            p += 2 + 2 * count
        comm = raw.get(ATTR_EXTENDED_COMMUNITIES, b"")
        if len(comm) % 8:
            raise MalformedMessage("extended communities not a multiple of 8", ERR_UPDATE, 5)
        attrs = PathAttributes(
            next_hop if next_hop is not None else ipaddress.IPv4Address(0),
            tuple(comm[i:i + 8] for i in range(0, len(comm), 8)),
            origin[0] if origin else 0,
            tuple(as_path),
        )
    return ParsedUpdate(routes, withdrawals, attrs, skipped, started, monotonic_ns())


# ---------------------------------------------------------------- OPEN etc.


@dataclass
class OpenMessage:
    asn: int
    hold_time: int
    router_id: ipaddress.IPv4Address
    capabilities: list = field(default_factory=list)

    @property
    def supports_evpn(self) -> bool:
        return (1, struct.pack("!HBB", AFI_L2VPN, 0, SAFI_EVPN)) in self.capabilities


def encode_open(asn: int, hold_time: int, router_id) -> bytes:
    cap = struct.pack("!BB", 1, 4) + struct.pack("!HBB", AFI_L2VPN, 0, SAFI_EVPN)
    params = struct.pack("!BB", 2, len(cap)) + cap
    body = struct.pack("!BHH", 4, asn, hold_time) + ipaddress.IPv4Address(router_id).packed
    return frame(MSG_OPEN, body + bytes([len(params)]) + params)


def decode_open(body: bytes) -> OpenMessage:
    if len(body) < 10:
        raise MalformedMessage("OPEN truncated", ERR_OPEN, 0)
    version, asn, hold = struct.unpack("!BHH", body[:5])
    if version != 4:
        raise MalformedMessage(f"unsupported BGP version {version}", ERR_OPEN, 1)
    if hold and hold < 3:
        raise MalformedMessage(f"unacceptable hold time {hold}", ERR_OPEN, 6)
    router_id = ipaddress.IPv4Address(body[5:9])
    plen = body[9]
    params = body[10:10 + plen]
    if len(params) != plen:
        raise MalformedMessage("OPEN optional parameters truncated", ERR_OPEN, 0)
    caps = []
    p = 0
    while p + 2 <= len(params):
        ptype, pl = params[p], params[p + 1]
        value = params[p + 2:p + 2 + pl]
        if ptype == 2:
            q = 0
            while q + 2 <= len(value):
                code, cl = value[q], value[q + 1]
                caps.append((code, value[q + 2:q + 2 + cl]))
                q += 2 + cl
        p += 2 + pl
    return OpenMessage(asn, hold, router_id, caps)


def encode_keepalive() -> bytes:
    return frame(MSG_KEEPALIVE, b"")


def encode_notification(code: int, subcode: int = 0, data: bytes = b"") -> bytes:
    return frame(MSG_NOTIFICATION, bytes([code, subcode]) + data)


def decode_notification(body: bytes) -> tuple[int, int]:
    if len(body) < 2:
        raise MalformedMessage("NOTIFICATION truncated", ERR_HEADER, 2)
    return body[0], body[1]

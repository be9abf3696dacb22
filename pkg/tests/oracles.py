"""Independent oracles for the codec tests.

Nothing here imports the package: the decoder below is written only from
the wire-format table (BGP framing, MP_REACH/MP_UNREACH, RFC 7432 NLRI
layouts) so a shared misunderstanding cannot hide behind a round trip.
"""

from __future__ import annotations

import ipaddress
import struct


def hand_type2_nlri(rd_asn, rd_num, mac: bytes, label: int, ip: bytes = b"", label2=None) -> bytes:
    body = b""
    body += struct.pack("!HHI", 0, rd_asn, rd_num)     # RD type 0
    body += bytes(10)                                  # ESI
    body += struct.pack("!I", 0)                       # ethernet tag
    body += bytes([48]) + mac
    body += bytes([len(ip) * 8]) + ip
    body += (label << 4).to_bytes(3, "big")
    if label2 is not None:
        body += (label2 << 4).to_bytes(3, "big")
    return bytes([2, len(body)]) + body


def hand_type3_nlri(rd_asn, rd_num, tag: int, ip: bytes) -> bytes:
    body = struct.pack("!HHI", 0, rd_asn, rd_num) + struct.pack("!I", tag) + bytes([len(ip) * 8]) + ip
    return bytes([3, len(body)]) + body


class RefError(Exception):
    pass


def _ip(raw: bytes):
    return str(ipaddress.ip_address(raw)) if raw else None


def _rd(raw: bytes) -> str:
    t, asn, num = struct.unpack("!HHI", raw)
    if t != 0:
        raise RefError("RD type")
    return f"{asn}:{num}"


def _label(raw: bytes) -> int:
    return int.from_bytes(raw, "big") >> 4


def ref_decode_nlri(data: bytes) -> list[dict]:
    out = []
    i = 0
    while i < len(data):
        if i + 2 > len(data):
            raise RefError("short NLRI header")
        rtype, length = data[i], data[i + 1]
        body = data[i + 2:i + 2 + length]
        if len(body) != length:
            raise RefError("NLRI overruns buffer")
        i += 2 + length
        r = {"type": rtype, "rd": _rd(body[0:8])}
        if rtype == 1:
            if length != 25:
                raise RefError("type 1 length")
            r.update(esi=body[8:18].hex(), tag=struct.unpack("!I", body[18:22])[0],
                     labels=[_label(body[22:25])])
        elif rtype == 2:
            r["esi"] = body[8:18].hex()
            r["tag"] = struct.unpack("!I", body[18:22])[0]
            if body[22] != 48:
                raise RefError("MAC length")
            r["mac"] = body[23:29].hex(":")
            iplen = body[29] // 8
            if iplen not in (0, 4, 16):
                raise RefError("IP length")
            r["ip"] = _ip(body[30:30 + iplen])
            rest = body[30 + iplen:]
            if len(rest) not in (3, 6):
                raise RefError("label bytes")
            r["labels"] = [_label(rest[k:k + 3]) for k in range(0, len(rest), 3)]
        elif rtype == 3:
            r["tag"] = struct.unpack("!I", body[8:12])[0]
            iplen = body[12] // 8
            if iplen not in (4, 16) or length != 13 + iplen:
                raise RefError("type 3 IP")
            r["originating_ip"] = _ip(body[13:13 + iplen])
        elif rtype == 4:
            r["esi"] = body[8:18].hex()
            iplen = body[18] // 8
            if iplen not in (4, 16) or length != 19 + iplen:
                raise RefError("type 4 IP")
            r["originating_ip"] = _ip(body[19:19 + iplen])
        else:
            raise RefError(f"route type {rtype}")
        out.append(r)
    return out


def ref_decode_update(msg: bytes) -> dict:
    """Returns {"reach": [...], "unreach": [...], "next_hop": str, "rts": [(asn, n)]}."""
    if msg[:16] != b"\xff" * 16:
        raise RefError("marker")
    length, mtype = struct.unpack("!HB", msg[16:19])
    if length != len(msg) or length > 4096 or mtype != 2:
        raise RefError("header")
    wlen = struct.unpack("!H", msg[19:21])[0]
    pos = 21 + wlen
    alen = struct.unpack("!H", msg[pos:pos + 2])[0]
    pos += 2
    end = pos + alen
    if end != len(msg):
        raise RefError("trailing bytes after attributes (classic NLRI unexpected)")
    out = {"reach": [], "unreach": [], "next_hop": None, "rts": []}
    while pos < end:
        flags, code = msg[pos], msg[pos + 1]
        if flags & 0x10:
            vlen = struct.unpack("!H", msg[pos + 2:pos + 4])[0]
            pos += 4
        else:
            vlen = msg[pos + 2]
            pos += 3
        val = msg[pos:pos + vlen]
        pos += vlen
        if code == 14:
            afi, safi, nhlen = struct.unpack("!HBB", val[:4])
            if (afi, safi) != (25, 70):
                raise RefError("AFI/SAFI")
            out["next_hop"] = _ip(val[4:4 + nhlen])
            if val[4 + nhlen] != 0:
                raise RefError("reserved byte")
            out["reach"] = ref_decode_nlri(val[5 + nhlen:])
        elif code == 15:
            afi, safi = struct.unpack("!HB", val[:3])
            if (afi, safi) != (25, 70):
                raise RefError("AFI/SAFI")
            out["unreach"] = ref_decode_nlri(val[3:])
        elif code == 16:
            for k in range(0, len(val), 8):
                t, st = val[k], val[k + 1]
                if (t, st) == (0x00, 0x02):
                    out["rts"].append(struct.unpack("!HI", val[k + 2:k + 8]))
    return out


def route_as_ref(route) -> dict:
    """Project a package EvpnRoute onto the reference decoder's dict shape."""
    r = {"type": route.route_type, "rd": f"{route.rd.asn}:{route.rd.assigned_number}"}
    if route.route_type in (1, 2, 4):
        r["esi"] = route.esi.value.hex()
    if route.route_type in (1, 2, 3):
        r["tag"] = route.eth_tag
    if route.route_type in (1, 2):
        r["labels"] = list(route.labels)
    if route.route_type == 2:
        r["mac"] = route.mac.hex(":")
        r["ip"] = str(route.ip) if route.ip is not None else None
    if route.route_type in (3, 4):
        r["originating_ip"] = str(route.originating_ip)
    return r


class LabelPoolOracle:
    """Lowest-free label pool simulated with a plain list."""

    def __init__(self, base, size):
        self.base, self.size = base, size
        self.used = {}

    def allocate(self, evi):
        if evi in self.used:
            return self.used[evi]
        taken = set(self.used.values())
        for label in range(self.base, self.base + self.size):
            if label not in taken:
                self.used[evi] = label
                return label
        raise OverflowError

    def release(self, evi):
        self.used.pop(evi, None)

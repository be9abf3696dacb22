import ipaddress
import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evpnctl.bgp import codec
from evpnctl.bgp.codec import EvpnRoute, PathAttributes
from evpnctl.errors import InvalidArgument, MalformedMessage
from evpnctl.model import ZERO_ESI, EthernetSegmentId, RouteDistinguisher, RouteTarget
from oracles import hand_type2_nlri, hand_type3_nlri, ref_decode_update, route_as_ref
from strategies import attrs, routes

RD = RouteDistinguisher(64512, 100)
ATTRS = PathAttributes.for_targets("192.0.2.1", [RouteTarget(64512, 100)])
MAC1 = bytes.fromhex("aabbccddee01")


def _update_with_nlri(nlri: bytes, attrs=ATTRS) -> bytes:
    return codec.build_update([nlri], attrs)


def test_hand_assembled_type2_decodes_to_exact_fields():
    nlri = hand_type2_nlri(64512, 100, MAC1, 100000)
    parsed = codec.parse_update(_update_with_nlri(nlri))
    assert parsed.routes == [EvpnRoute(2, RD, esi=ZERO_ESI, eth_tag=0, mac=MAC1, ip=None, labels=(100000,))]
    assert parsed.parse_started > 0 and parsed.parse_finished >= parsed.parse_started


def test_type2_encoding_is_bit_exact():
    route = EvpnRoute.mac_ip(RD, "aa:bb:cc:dd:ee:01", 100000)
    assert codec.encode_nlri(route) == hand_type2_nlri(64512, 100, MAC1, 100000)
    with_ip = EvpnRoute.mac_ip(RD, MAC1, (100000, 7), ip="10.0.0.5")
    assert codec.encode_nlri(with_ip) == hand_type2_nlri(64512, 100, MAC1, 100000,
                                                         ip=bytes([10, 0, 0, 5]), label2=7)


def test_type3_nlri_is_19_bytes():
    route = EvpnRoute.inclusive_multicast(RD, 0, "10.0.0.1")
    nlri = codec.encode_nlri(route)
    assert len(nlri) == 1 + 1 + 8 + 4 + 1 + 4 == 19
    assert nlri == hand_type3_nlri(64512, 100, 0, bytes([10, 0, 0, 1]))
    msg = codec.serialize_update([route], ATTRS)
    assert msg[:16] == b"\xff" * 16 and struct.unpack("!H", msg[16:18])[0] == len(msg)
    assert msg.endswith(b"".join(ATTRS.extended_communities))
    assert nlri in msg


def test_label_occupies_high_20_bits():
    nlri = codec.encode_nlri(EvpnRoute.ethernet_ad(RD, ZERO_ESI, 0, 0xABCDE))
    assert nlri[-3:] == bytes.fromhex("abcde0")


def test_empty_route_list_is_invalid():
    with pytest.raises(InvalidArgument):
        codec.serialize_update([], ATTRS)


def test_advertisement_without_route_target_is_invalid():
    bare = PathAttributes(ipaddress.IPv4Address("192.0.2.1"), ())
    with pytest.raises(InvalidArgument):
        codec.serialize_update([EvpnRoute.inclusive_multicast(RD, 0, "10.0.0.1")], bare)


@pytest.mark.parametrize("route", [
    EvpnRoute(2, RD, esi=ZERO_ESI, eth_tag=0, mac=None, labels=(16,)),
    EvpnRoute(3, RD, eth_tag=0),
    EvpnRoute(1, RD, esi=ZERO_ESI, eth_tag=0),
    EvpnRoute(3, RD, eth_tag=0, originating_ip=ipaddress.ip_address("10.0.0.1"), mac=MAC1),
    EvpnRoute(4, RD, esi=ZERO_ESI, originating_ip=ipaddress.ip_address("10.0.0.1"), eth_tag=5),
])
def test_field_presence_violations_rejected(route):
    with pytest.raises(InvalidArgument):
        codec.encode_nlri(route)


def test_two_type2_routes_share_one_update():
    r1 = EvpnRoute.mac_ip(RD, MAC1, 100000)
    r2 = EvpnRoute.mac_ip(RD, bytes.fromhex("aabbccddee02"), 100000)
    msg = codec.serialize_update([r1, r2], ATTRS)
    parsed = codec.parse_update(msg)
    assert parsed.routes == [r1, r2]
    assert len(ref_decode_update(msg)["reach"]) == 2


def test_truncated_nlri_is_malformed():
    nlri = hand_type2_nlri(64512, 100, MAC1, 100000)
    broken = nlri[:1] + bytes([nlri[1] + 5]) + nlri[2:]
    with pytest.raises(MalformedMessage) as exc:
        codec.parse_update(_update_with_nlri(broken))
    assert exc.value.code == codec.ERR_UPDATE


def test_unknown_route_type_is_skipped_and_counted():
    good = hand_type3_nlri(64512, 100, 7, bytes([10, 0, 0, 1]))
    unknown = bytes([9, 4]) + b"abcd"
    parsed = codec.parse_update(_update_with_nlri(unknown + good))
    assert parsed.unknown_skipped == 1
    assert [r.eth_tag for r in parsed.routes] == [7]


def test_withdrawals_round_trip():
    r = EvpnRoute.mac_ip(RD, MAC1, 100000, ip="10.0.0.5")
    msg = codec.serialize_update([], None, [r])
    parsed = codec.parse_update(msg)
    assert parsed.routes == [] and parsed.withdrawals == [r]
    assert ref_decode_update(msg)["unreach"] == [route_as_ref(r)]


def test_large_batches_split_at_message_limit():
    rs = [EvpnRoute.mac_ip(RD, i.to_bytes(6, "big"), 100000, ip=ipaddress.IPv6Address(i))
          for i in range(300)]
    msgs = codec.serialize_updates(rs, ATTRS)
    assert len(msgs) > 1
    assert all(len(m) <= codec.MAX_MESSAGE_LEN for m in msgs)
    back = [r for m in msgs for r in codec.parse_update(m).routes]
    assert back == rs


def test_oversized_single_message_rejected():
    rs = [EvpnRoute.mac_ip(RD, i.to_bytes(6, "big"), 1, ip=ipaddress.IPv6Address(i)) for i in range(200)]
    with pytest.raises(InvalidArgument):
        codec.serialize_update(rs, ATTRS)


def test_open_message_carries_evpn_capability():
    msg = codec.encode_open(64512, 90, "192.0.2.1")
    length, mtype = codec.parse_header(msg[:19])
    assert mtype == codec.MSG_OPEN and length == len(msg)
    opened = codec.decode_open(msg[19:])
    assert opened.supports_evpn and opened.asn == 64512 and opened.hold_time == 90
    # capability code 1 (multiprotocol), AFI 25, reserved, SAFI 70
    assert bytes([1, 4, 0, 25, 0, 70]) in msg


def test_notification_round_trip():
    msg = codec.encode_notification(4, 0)
    assert codec.decode_notification(msg[19:]) == (4, 0)


def test_bad_marker_is_malformed():
    msg = bytearray(codec.encode_keepalive())
    msg[0] = 0
    with pytest.raises(MalformedMessage):
        codec.parse_header(bytes(msg))


def test_route_key_ignores_labels_but_not_mac():
    a = EvpnRoute.mac_ip(RD, MAC1, 100)
    assert a.key() == EvpnRoute.mac_ip(RD, MAC1, 200).key()
    assert a.key() != EvpnRoute.mac_ip(RD, bytes(6), 100).key()


def test_route_json_round_trip():
    r = EvpnRoute.mac_ip(RD, MAC1, (5, 6), ip="2001:db8::1", esi=EthernetSegmentId(bytes(range(10))))
    assert EvpnRoute.from_json(r.to_json()) == r


@settings(max_examples=1000, deadline=None)
@given(st.lists(routes, min_size=1, max_size=8), attrs)
def test_round_trip_and_reference_decoder(rs, a):
    msgs = codec.serialize_updates(rs, a)
    back = [r for m in msgs for r in codec.parse_update(m).routes]
    assert back == rs
    ref = [r for m in msgs for r in ref_decode_update(m)["reach"]]
    assert ref == [route_as_ref(r) for r in rs]
    decoded = ref_decode_update(msgs[0])
    assert decoded["next_hop"] == str(a.next_hop)
    assert sorted(RouteTarget(*x) for x in decoded["rts"]) == sorted(a.route_targets)

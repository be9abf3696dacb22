import asyncio
import time

import pytest

from evpnctl.arp import ArpProxy, ArpQuery
from evpnctl.bgp.codec import EvpnRoute
from evpnctl.errors import InvalidArgument
from evpnctl.model import RouteDistinguisher, RouteTarget, parse_ip

M = bytes.fromhex("020000000005")


async def until(pred, timeout=5.0):
    end = time.monotonic() + timeout
    while not pred():
        assert time.monotonic() < end, "condition not reached"
        await asyncio.sleep(0.01)


async def make_evi(ctl, net, pes=("pe1", "pe2")):
    evi = await ctl.submit("evi_created", {"customer_id": "c", "virtual_network_id": "v", "sap_id": "s",
                                           "network_ids": [net], "pe_ids": list(pes)})
    await ctl.quiesce()
    return evi


async def learn_remote(bed, evi, mac, ip, pe="pe2"):
    route = EvpnRoute.mac_ip(RouteDistinguisher(64512, 900 + evi["evi_id"]), mac, 300, ip=ip)
    bed.sim(pe).stage_route(route, [RouteTarget.parse(evi["rt"])])
    await until(lambda: bed.controller.service.lookup_mac(mac, evi["evi_id"]) is not None)
    return route


def test_query_requires_ipv4():
    with pytest.raises(InvalidArgument):
        ArpQuery.of(1, "2001:db8::1")
    assert ArpQuery.of("3", "10.0.0.1") == ArpQuery(parse_ip("10.0.0.1"), 3)


async def test_hit_after_remote_type2_and_miss_after_withdraw(bed):
    ctl = bed.controller
    evi = await make_evi(ctl, "net1")
    proxy = ArpProxy(ctl.service)
    route = await learn_remote(bed, evi, M, "10.0.0.5")
    assert proxy.handle_arp_request(ArpQuery.of(evi["evi_id"], "10.0.0.5")) == M
    assert proxy.handle_arp_request(ArpQuery.of(evi["evi_id"], "10.0.0.99")) is None
    assert proxy.stats() == {"hits": 1, "misses": 1}
    bed.sim("pe2").withdraw_route(route)
    await until(lambda: ctl.service.lookup_mac(M, evi["evi_id"]) is None)
    assert proxy.query(evi["evi_id"], "10.0.0.5") == {"evi_id": evi["evi_id"], "ip": "10.0.0.5",
                                                      "hit": False, "mac": None}


async def test_answers_are_scoped_per_evi(bed):
    ctl = bed.controller
    a, b = await make_evi(ctl, "net1"), await make_evi(ctl, "net2")
    ma, mb = bytes.fromhex("0200000000aa"), bytes.fromhex("0200000000bb")
    await learn_remote(bed, a, ma, "10.0.0.5")
    await learn_remote(bed, b, mb, "10.0.0.5")
    proxy = ArpProxy(ctl.service)
    assert proxy.handle_arp_request(ArpQuery.of(a["evi_id"], "10.0.0.5")) == ma
    assert proxy.handle_arp_request(ArpQuery.of(b["evi_id"], "10.0.0.5")) == mb


async def test_newest_claim_answers_after_ip_move(bed):
    ctl = bed.controller
    evi = await make_evi(ctl, "net1")
    proxy = ArpProxy(ctl.service, ctl.submit)
    await proxy.on_vm_boot("02:00:00:00:00:01", "10.0.0.7", "net1")
    await proxy.on_vm_boot("02:00:00:00:00:02", "10.0.0.7", "net1")
    assert proxy.query(evi["evi_id"], "10.0.0.7")["mac"] == "02:00:00:00:00:02"
    assert ctl.service.counters.ip_conflicts == 1


async def test_vm_boot_announces_to_remote_pes(bed):
    ctl = bed.controller
    await make_evi(ctl, "net1")
    proxy = ArpProxy(ctl.service, ctl.submit)
    first = await proxy.on_vm_boot("02:00:00:00:00:33", "10.0.0.33", "net1")
    again = await proxy.on_vm_boot("02:00:00:00:00:33", "10.0.0.33", "net1")
    assert first["changed"] and not again["changed"]
    await ctl.quiesce()
    for sim in bed.sims.values():
        adverts = [r for _, k, r in sim.route_log if k == "advertise" and r.route_type == 2]
        assert [r.mac.hex() for r in adverts] == ["020000000033"]
        assert str(adverts[0].ip) == "10.0.0.33"


async def test_vm_boot_on_unmapped_network_only_warns(bed, caplog):
    ctl = bed.controller
    proxy = ArpProxy(ctl.service, ctl.submit)
    result = await proxy.on_vm_boot("02:00:00:00:00:44", None, "net9")
    assert result == {"mapped": False} and len(ctl.service.mac_table) == 0
    assert "not mapped" in caplog.text


async def test_suppression_counts_for_scripted_hosts(bed):
    ctl = bed.controller
    evi = await make_evi(ctl, "net1")
    n = 20
    for i in range(n):
        route = EvpnRoute.mac_ip(RouteDistinguisher(64512, 901), bytes([2, 0, 0, 0, 1, i]), 300,
                                 ip=f"10.1.0.{i + 1}")
        bed.sim("pe1").stage_route(route, [RouteTarget.parse(evi["rt"])])
    await until(lambda: len(ctl.service.mac_table.entries(evi["evi_id"])) == n)
    proxy = ArpProxy(ctl.service)
    for i in range(n):
        assert proxy.handle_arp_request(ArpQuery.of(evi["evi_id"], f"10.1.0.{i + 1}")) == bytes([2, 0, 0, 0, 1, i])
    assert proxy.stats() == {"hits": n, "misses": 0}

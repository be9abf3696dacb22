import aiohttp
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from evpnctl.fleet import start_testbed


def l2vpn_body(networks=("net1",), pes=("pe1", "pe2"), **kw):
    body = {"customer_id": "cust", "virtual_network_id": "vn", "sap_id": "sap",
            "network_ids": list(networks), "pe_ids": list(pes)}
    body.update(kw)
    return body


@pytest.fixture
async def http(bed):
    base = f"http://{bed.controller.api_addr}"
    async with aiohttp.ClientSession(base) as session:
        yield session


async def call(http, method, path, body=None, raw=None):
    kwargs = {"data": raw, "headers": {"Content-Type": "application/json"}} if raw is not None else {"json": body}
    async with http.request(method, path, **kwargs) as resp:
        return resp.status, await resp.json()


async def test_create_returns_201_and_first_id(http):
    status, doc = await call(http, "POST", "/v1/l2vpn", l2vpn_body(("net1", "net2")))
    assert status == 201 and doc["evi_id"] == 1
    assert doc["state"] == "pending" and isinstance(doc["receipt_ts"], int)
    status, doc = await call(http, "GET", "/v1/l2vpn/1?wait=10")
    assert status == 200 and doc["state"] == "deployed"


async def test_unknown_pe_is_422_with_field_path(http):
    status, doc = await call(http, "POST", "/v1/l2vpn", l2vpn_body(pes=("pe1", "peX")))
    assert status == 422 and doc["field"] == "pe_ids.1" and "peX" in doc["error"]


@pytest.mark.parametrize("body,field", [
    (l2vpn_body(networks=()), "network_ids"),
    (l2vpn_body(pes=()), "pe_ids"),
    ({k: v for k, v in l2vpn_body().items() if k != "sap_id"}, "sap_id"),
    (l2vpn_body(extra=1), "extra"),
    (l2vpn_body(customer_id=5), "customer_id"),
])
async def test_schema_violations_are_422(http, body, field):
    status, doc = await call(http, "POST", "/v1/l2vpn", body)
    assert status == 422 and doc["field"] == field


async def test_control_characters_rejected_before_reaching_devices(http):
    status, doc = await call(http, "POST", "/v1/l2vpn", l2vpn_body(sap_id="a\x00b"))
    assert status == 422 and doc["field"] == "sap_id"


@pytest.mark.parametrize("raw", ["{not json", "[1, 2]", ""])
async def test_malformed_json_is_400(http, raw):
    status, doc = await call(http, "POST", "/v1/l2vpn", raw=raw)
    assert status == 400 and doc["field"] is None and doc["error"]


async def test_reused_network_is_409(http):
    await call(http, "POST", "/v1/l2vpn", l2vpn_body())
    status, doc = await call(http, "POST", "/v1/l2vpn", l2vpn_body())
    assert status == 409


async def test_rp_create_and_parse(http):
    status, doc = await call(http, "POST", "/v1/rp", {"name": "a", "allow_mac_advertisement": True})
    assert status == 201 and doc["rp_id"] == 1
    status, doc = await call(http, "POST", "/v1/rp", {"name": "b", "import_rts": ["64512:100"]})
    assert status == 201 and doc["import_rts"] == ["64512:100"]
    status, doc = await call(http, "POST", "/v1/rp", {"name": "c", "import_rts": ["banana"]})
    assert status == 422 and doc["field"] == "import_rts.0"


async def test_associate_replace_and_unknown(http, bed):
    await call(http, "POST", "/v1/l2vpn", l2vpn_body())
    await call(http, "POST", "/v1/rp", {"name": "a"})
    await call(http, "POST", "/v1/rp", {"name": "b"})
    status, doc = await call(http, "PUT", "/v1/l2vpn/1/rp", {"rp_id": 1})
    assert status == 200 and bed.controller.service.evis[1].rp_id == 1
    status, _ = await call(http, "PUT", "/v1/l2vpn/1/rp", {"rp_id": 2})
    assert status == 200 and bed.controller.service.evis[1].rp_id == 2
    _, rp1 = await call(http, "GET", "/v1/rp/1")
    _, rp2 = await call(http, "GET", "/v1/rp/2")
    assert rp1["evi_ids"] == [] and rp2["evi_ids"] == [1]
    status, doc = await call(http, "PUT", "/v1/l2vpn/1/rp", {"rp_id": 9})
    assert status == 404 and "9" in doc["error"]
    status, _ = await call(http, "PUT", "/v1/l2vpn/42/rp", {"rp_id": 1})
    assert status == 404


async def test_delete_lifecycle(http, bed):
    await call(http, "POST", "/v1/l2vpn", l2vpn_body())
    status, _ = await call(http, "DELETE", "/v1/l2vpn/1")
    assert status == 409  # still pending
    await call(http, "GET", "/v1/l2vpn/1?wait=10")
    for i in range(3):
        await call(http, "POST", "/v1/endpoints", {"mac": f"02:00:00:00:00:0{i}", "ip": None, "network_id": "net1"})
    await bed.controller.quiesce()
    before = {pe: len(s.received_routes(2)) for pe, s in bed.sims.items()}
    assert before == {"pe1": 3, "pe2": 3}
    status, doc = await call(http, "DELETE", "/v1/l2vpn/1")
    assert status == 200 and doc["deleted"]
    await bed.controller.quiesce()
    for sim in bed.sims.values():
        assert sum(1 for _, k, r in sim.route_log if k == "withdraw" and r.route_type == 2) == 3
        assert sim.running_evis() == []
    assert (await call(http, "GET", "/v1/l2vpn/1"))[0] == 404
    assert (await call(http, "DELETE", "/v1/l2vpn/77"))[0] == 404


async def test_queries(http):
    for i in range(1, 11):
        await call(http, "POST", "/v1/l2vpn", l2vpn_body((f"net{i}",)))
    status, docs = await call(http, "GET", "/v1/l2vpn")
    assert status == 200 and len(docs) == 10
    assert (await call(http, "GET", "/v1/rp/404"))[0] == 404
    assert await call(http, "GET", "/v1/l2vpn/abc") == (422, {"error": "evi_id must be an integer", "field": "evi_id"})


async def test_receipt_timestamps_monotone(http):
    stamps = []
    for i in range(1, 11):
        _, doc = await call(http, "POST", "/v1/l2vpn", l2vpn_body((f"net{i}",)))
        stamps.append(doc["receipt_ts"])
        _, doc = await call(http, "POST", "/v1/rp", {"name": f"r{i}"})
        stamps.append(doc["receipt_ts"])
    assert stamps == sorted(stamps)


async def test_thousand_sequential_creations():
    bed = await start_testbed(pes=2, networks=1000)
    try:
        async with aiohttp.ClientSession(f"http://{bed.controller.api_addr}") as http:
            ids = []
            for i in range(1, 1001):
                status, doc = await call(http, "POST", "/v1/l2vpn", l2vpn_body((f"net{i}",)))
                assert status == 201
                ids.append(doc["evi_id"])
        assert len(set(ids)) == 1000
        await bed.controller.quiesce(120)
        assert all(e.state == "deployed" for e in bed.controller.service.evis.values())
    finally:
        await bed.stop()


ident = st.text(st.characters(codec="utf-8", exclude_categories=("Cs",)), min_size=1, max_size=20)


@settings(max_examples=30, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(cust=ident, vn=ident, sap=ident, nets=st.lists(st.sampled_from([f"net{i}" for i in range(1, 11)]),
                                                         min_size=1, max_size=4, unique=True),
       pes=st.lists(st.sampled_from(["pe1", "pe2"]), min_size=1, max_size=2, unique=True))
async def test_accepted_body_round_trips(http, cust, vn, sap, nets, pes):
    body = {"customer_id": cust, "virtual_network_id": vn, "sap_id": sap, "network_ids": nets, "pe_ids": pes}
    status, doc = await call(http, "POST", "/v1/l2vpn", body)
    if status == 409:
        return  # a network already taken by an earlier example
    if any(ch in text for text in (cust, vn, sap) for ch in map(chr, [*range(0, 9), 11, 12, *range(14, 32), 0xFFFE, 0xFFFF])):
        assert status == 422
        return
    assert status == 201
    _, stored = await call(http, "GET", f"/v1/l2vpn/{doc['evi_id']}?wait=10")
    assert {k: stored[k] for k in body} == body
    assert (await call(http, "DELETE", f"/v1/l2vpn/{doc['evi_id']}"))[0] == 200


@settings(max_examples=20, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.lists(st.tuples(st.integers(1, 3), st.integers(1, 3)), min_size=1, max_size=12))
async def test_rp_reverse_references_match(http, bed, assocs):
    svc = bed.controller.service
    while len(svc.rps) < 3:
        await call(http, "POST", "/v1/rp", {"name": "r"})
    for i in range(1, 4):
        if not any(f"net{i}" in e.network_ids for e in svc.evis.values()):
            await call(http, "POST", "/v1/l2vpn", l2vpn_body((f"net{i}",)))
    evi_ids = sorted(svc.evis)[:3]
    for e, r in assocs:
        assert (await call(http, "PUT", f"/v1/l2vpn/{evi_ids[e - 1]}/rp", {"rp_id": r}))[0] == 200
    _, rps = await call(http, "GET", "/v1/rp")
    _, evis = await call(http, "GET", "/v1/l2vpn")
    for rp in rps:
        assert rp["evi_ids"] == sorted(e["evi_id"] for e in evis if e["rp_id"] == rp["rp_id"])

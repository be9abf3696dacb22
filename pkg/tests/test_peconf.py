import asyncio

import pytest
from hypothesis import given
from hypothesis import strategies as st

from evpnctl.errors import InvalidArgument, InvalidState
from evpnctl.model import EviRecord, RouteTarget, RoutingPolicy, derive_rd_rt
from evpnctl.peconf import PHASES, ConfigTransaction, PeConfigurator, render_base_config, render_evi_config
from evpnctl.simulator import ControlClient, SimLatencyProfile
from evpnctl.fleet import start_simulators


def evi(evi_id=100, pes=("pe1", "pe2"), allocated=True):
    rd, rt = derive_rd_rt(evi_id, 64512) if allocated else (None, None)
    return EviRecord(evi_id, "c1", "vn1", "sap1", ("net1",), pes, rd, rt,
                     100000 if allocated else None)


def test_render_contains_identity_fields():
    doc = render_evi_config(evi(), None, "pe1")
    assert "<evpn><evi>100</evi><rd>64512:100</rd>" in doc.xml_body
    assert "<import>64512:100</import>" in doc.xml_body
    assert "<mpls-label>100000</mpls-label>" in doc.xml_body
    assert "<policy>" not in doc.xml_body


def test_render_policy_block():
    rp = RoutingPolicy(1, "deny", False, frozenset({RouteTarget(64512, 7)}))
    doc = render_evi_config(evi(), rp, "pe1")
    assert "<policy><advertise-mac>false</advertise-mac></policy>" in doc.xml_body
    assert "<import>64512:7</import>" in doc.xml_body


def test_render_delete_marks_operation():
    doc = render_evi_config(evi(), None, "pe1", "delete")
    assert '<evpn operation="delete">' in doc.xml_body and doc.operation == "delete"


def test_render_unallocated_is_invalid_state():
    with pytest.raises(InvalidState):
        render_evi_config(evi(allocated=False), None, "pe1")


def test_render_rejects_non_xml_text():
    record = evi()
    record.customer_id = "bad\x1b"
    with pytest.raises(InvalidArgument):
        render_evi_config(record, None, "pe1")


@given(st.integers(1, 10**6), st.booleans(), st.sets(st.integers(1, 999), max_size=4))
def test_render_is_deterministic(evi_id, allow, rts):
    rp = RoutingPolicy(1, "p", allow, frozenset(RouteTarget(1, n) for n in rts),
                       frozenset(RouteTarget(2, n) for n in reversed(sorted(rts))))
    a = render_evi_config(evi(evi_id), rp, "pe1")
    b = render_evi_config(evi(evi_id), rp, "pe1")
    assert a.xml_body == b.xml_body


@pytest.mark.parametrize("neighbors", [["10.0.0.1"], ["10.0.0.1", "10.0.0.2"]])
def test_base_config_lists_each_neighbor(neighbors):
    doc = render_base_config("pe1", neighbors, 64512)
    assert doc.xml_body.count("<neighbor>") == len(neighbors)
    assert "<family><evpn/></family>" in doc.xml_body


def test_base_config_without_neighbors_rejected():
    with pytest.raises(InvalidArgument):
        render_base_config("pe1", [])


def test_one_document_per_pe():
    d = render_evi_config(evi(), None, "pe1")
    with pytest.raises(InvalidArgument):
        ConfigTransaction([d, d])


def test_illegal_phase_transition():
    txn = ConfigTransaction([])
    with pytest.raises(InvalidState):
        txn.advance("committed")


@pytest.fixture
async def fleet():
    sims = await start_simulators(3, latency=SimLatencyProfile(1, 2, 1, 0))
    conf = PeConfigurator({pe: ("127.0.0.1", s.netconf_port) for pe, s in sims.items()})
    await conf.connect_all()
    yield sims, conf
    await conf.close()
    await asyncio.gather(*(s.stop() for s in sims.values()))


def txn_for(record, pes):
    return ConfigTransaction([render_evi_config(record, None, pe) for pe in pes])


def assert_trail_monotone(txn):
    order = [PHASES.index(p) for p in txn.trail]
    assert order == sorted(order)
    assert sum(txn.phase_ms.values()) <= txn.total_ms + 1e-6


async def test_happy_path_commits_on_all(fleet):
    sims, conf = fleet
    txn = await conf.push_transaction(txn_for(evi(), ["pe1", "pe2"]))
    assert txn.phase == "committed"
    assert txn.trail == ["rendering", "validating", "committing", "committed"]
    assert sims["pe1"].running_evis() == sims["pe2"].running_evis() == [100]
    assert sims["pe3"].running_evis() == []
    assert_trail_monotone(txn)


async def test_validate_failure_on_one_pe_rolls_back_all(fleet):
    sims, conf = fleet
    async with ControlClient("127.0.0.1", sims["pe2"].control_port) as ctl:
        await ctl.send("fail_next_validate", count=1)
    txn = await conf.push_transaction(txn_for(evi(), ["pe1", "pe2"]))
    assert txn.phase == "rolled_back"
    assert "pe2" in txn.reason and "validation failed" in txn.reason
    assert sims["pe1"].running_evis() == sims["pe2"].running_evis() == []
    assert sims["pe1"].datastore.evis(sims["pe1"].datastore.candidate) == []
    assert txn.pe_status["pe1"] == "discarded"
    assert_trail_monotone(txn)


async def test_unreachable_pe_is_reported_as_transport(fleet):
    sims, conf = fleet
    await sims["pe3"].stop_netconf()
    txn = await conf.push_transaction(txn_for(evi(), ["pe1", "pe3"]))
    assert txn.phase == "rolled_back"
    assert "pe3: transport" in txn.reason
    assert sims["pe1"].running_evis() == []


async def test_delete_after_commit_clears_running(fleet):
    sims, conf = fleet
    record = evi()
    await conf.push_transaction(txn_for(record, ["pe1"]))
    txn = await conf.push_transaction(ConfigTransaction([render_evi_config(record, None, "pe1", "delete")]))
    assert txn.committed and sims["pe1"].running_evis() == []


async def test_overlapping_transactions_serialise(fleet):
    sims, conf = fleet
    txns = [txn_for(evi(i), ["pe1", "pe2"] if i % 2 else ["pe2", "pe1"]) for i in range(1, 9)]
    done = await asyncio.wait_for(asyncio.gather(*(conf.push_transaction(t) for t in txns)), 10)
    assert all(t.committed for t in done)
    assert sims["pe1"].running_evis() == list(range(1, 9))


async def test_unknown_pe_rejected(fleet):
    _, conf = fleet
    with pytest.raises(InvalidArgument):
        await conf.push_transaction(txn_for(evi(), ["pe9"]))

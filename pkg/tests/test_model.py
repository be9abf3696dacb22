import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evpnctl.errors import AlreadyAllocated, InvalidArgument, ResourceExhausted
from evpnctl.model import (
    ZERO_ESI,
    EthernetSegmentId,
    LabelAllocator,
    MacTableEntry,
    RouteDistinguisher,
    RouteTarget,
    derive_rd_rt,
)
from evpnctl.service import MacTable
from oracles import LabelPoolOracle


def test_derive_rd_rt_examples():
    rd, rt = derive_rd_rt(100, 64512)
    assert (str(rd), str(rt)) == ("64512:100", "64512:100")
    rd, rt = derive_rd_rt(1, 1)
    assert rd == RouteDistinguisher(1, 1) and rt == RouteTarget(1, 1)


@pytest.mark.parametrize("evi", [0, -1, 1 << 32])
def test_derive_rd_rt_rejects_out_of_range(evi):
    with pytest.raises(InvalidArgument):
        derive_rd_rt(evi, 64512)


@given(st.integers(1, (1 << 32) - 1), st.integers(1, (1 << 32) - 1), st.integers(0, 0xFFFF))
def test_derive_rd_rt_injective(a, b, asn):
    if a != b:
        ra, ta = derive_rd_rt(a, asn)
        rb, tb = derive_rd_rt(b, asn)
        assert ra.to_bytes() != rb.to_bytes()
        assert ta.to_bytes() != tb.to_bytes()


def test_rd_wire_form_is_eight_bytes():
    assert RouteDistinguisher(64512, 100).to_bytes() == bytes.fromhex("0000fc0000000064")


def test_rt_extended_community_bytes():
    raw = RouteTarget(64512, 100).to_bytes()
    assert raw == bytes.fromhex("0002fc0000000064")
    assert RouteTarget.from_bytes(raw) == RouteTarget(64512, 100)
    assert RouteTarget.from_bytes(bytes.fromhex("0003fc0000000064")) is None


@pytest.mark.parametrize("text", ["banana", "1:2:3", "70000:1", ":5"])
def test_rt_parse_rejects(text):
    with pytest.raises(InvalidArgument):
        RouteTarget.parse(text)


def test_esi():
    assert ZERO_ESI.single_homed
    assert not EthernetSegmentId(bytes(9) + b"\x01").single_homed
    with pytest.raises(InvalidArgument):
        EthernetSegmentId(bytes(9))


def test_label_first_allocation_is_base():
    assert LabelAllocator(100000).allocate(1) == 100000


def test_label_reuse_after_release_matches_hand_simulation():
    pool, oracle = LabelAllocator(100000, 10), LabelPoolOracle(100000, 10)
    for evi in (1, 2, 3):
        assert pool.allocate(evi) == oracle.allocate(evi)
    pool.release(2)
    oracle.release(2)
    assert pool.allocate(4) == oracle.allocate(4) == 100000 + 1


def test_label_same_evi_same_label():
    pool = LabelAllocator()
    assert pool.allocate(7) == pool.allocate(7)


def test_label_pool_exhaustion():
    pool = LabelAllocator(100000, 2)
    pool.allocate(1)
    pool.allocate(2)
    with pytest.raises(ResourceExhausted):
        pool.allocate(3)


def test_label_reserve_conflicts():
    pool = LabelAllocator(100000, 10)
    pool.allocate(1)
    with pytest.raises(AlreadyAllocated):
        pool.reserve(2, 100000)
    with pytest.raises(AlreadyAllocated):
        pool.reserve(1, 100005)
    assert pool.reserve(3, 100004) == 100004
    assert pool.allocate(4) == 100001


@settings(max_examples=200)
@given(st.lists(st.tuples(st.sampled_from(["alloc", "release"]), st.integers(1, 12)), max_size=60))
def test_label_pool_matches_oracle_and_stays_sound(ops):
    pool, oracle = LabelAllocator(100000, 8), LabelPoolOracle(100000, 8)
    for op, evi in ops:
        if op == "alloc":
            try:
                want = oracle.allocate(evi)
            except OverflowError:
                with pytest.raises(ResourceExhausted):
                    pool.allocate(evi)
                continue
            assert pool.allocate(evi) == want
        else:
            pool.release(evi)
            oracle.release(evi)
        live = pool.snapshot()
        assert len(set(live.values())) == len(live)


def test_label_allocator_thread_safety():
    pool = LabelAllocator(100000, 4000)
    results = {}

    def worker(start):
        for evi in range(start, start + 500):
            results[evi] = pool.allocate(evi)

    threads = [threading.Thread(target=worker, args=(i * 500 + 1,)) for i in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(set(results.values())) == 4000


@settings(max_examples=200)
@given(st.lists(st.tuples(st.sampled_from(["local", "remote", "del"]),
                          st.integers(0, 5), st.integers(1, 3)), max_size=80))
def test_mac_table_unique_per_mac_evi(ops):
    table, model = MacTable(), {}
    for op, m, evi in ops:
        mac = bytes([0, 0, 0, 0, 0, m])
        if op == "del":
            table.remove(mac, evi)
            model.pop((mac, evi), None)
        else:
            path = ["pe1"] if op == "remote" else []
            table.put(MacTableEntry(mac, evi, op, 100000, path_list=path))
            model[(mac, evi)] = op
        keys = [(e.mac, e.evi_id) for e in table.entries()]
        assert len(keys) == len(set(keys))
        assert set(keys) == set(model)


def test_mac_table_path_list_invariant():
    table = MacTable()
    with pytest.raises(InvalidArgument):
        table.put(MacTableEntry(b"\x00" * 6, 1, "remote", 16, path_list=[]))
    with pytest.raises(InvalidArgument):
        table.put(MacTableEntry(b"\x00" * 6, 1, "local", 16, path_list=["pe1"]))

"""Device configuration rendering and transactional push to PEs."""

from __future__ import annotations

import asyncio
import itertools
import logging
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Optional

from .errors import InvalidArgument, InvalidState
from .model import EviRecord, RoutingPolicy, monotonic_ns
from .netconf import NetconfClient, RpcError

log = logging.getLogger(__name__)

DEVICE_NS = "urn:example:evpn-device"

# characters outside the XML 1.0 Char production cannot appear in a document at all
_NON_XML = re.compile("[^\t\n\r\x20-\ud7ff\ue000-\ufffd\U00010000-\U0010ffff]")


def xml_safe(text: str) -> bool:
    return _NON_XML.search(text) is None


PHASES = ("rendering", "validating", "committing", "committed", "rolled_back")
_NEXT = {
    "rendering": {"validating"},
    "validating": {"committing", "rolled_back"},
    "committing": {"committed", "rolled_back"},
    "committed": set(),
    "rolled_back": set(),
}


@dataclass(frozen=True)
class ConfigDocument:
    pe_id: str
    xml_body: str
    operation: str = "merge"


def _sub(parent, tag, text=None):
    el = ET.SubElement(parent, tag)
    if text is not None:
        el.text = str(text)
    return el


def _tostring(root: ET.Element) -> str:
    # ET escapes '>' in text and attributes, so " />" only ever closes a tag
    return ET.tostring(root, encoding="unicode").replace(" />", "/>")


def render_evi_config(evi: EviRecord, rp: Optional[RoutingPolicy], pe_id: str,
                      operation: str = "merge") -> ConfigDocument:
    if not evi.allocated:
        raise InvalidState(f"EVI {evi.evi_id} has no RD/RT/label allocated")
    if operation not in ("merge", "delete"):
        raise InvalidArgument(f"unknown operation {operation!r}")
    for name in ("customer_id", "virtual_network_id", "sap_id"):
        if not xml_safe(getattr(evi, name)):
            raise InvalidArgument(f"{name} holds characters not representable in XML", name)
    root = ET.Element("config", xmlns=DEVICE_NS)
    instances = _sub(root, "evpn-instances")
    evpn = _sub(instances, "evpn")
    if operation == "delete":
        evpn.set("operation", "delete")
    _sub(evpn, "evi", evi.evi_id)
    _sub(evpn, "rd", evi.rd)
    imports = {evi.rt} | (set(rp.import_rts) if rp else set())
    exports = {evi.rt} | (set(rp.export_rts) if rp else set())
    targets = _sub(evpn, "route-target")
    for rt in sorted(imports):
        _sub(targets, "import", rt)
    for rt in sorted(exports):
        _sub(targets, "export", rt)
    _sub(evpn, "mpls-label", evi.mpls_label)
    _sub(evpn, "customer-id", evi.customer_id)
    _sub(evpn, "virtual-network-id", evi.virtual_network_id)
    _sub(evpn, "sap-id", evi.sap_id)
    if rp is not None:
        policy = _sub(evpn, "policy")
        _sub(policy, "advertise-mac", "true" if rp.allow_mac_advertisement else "false")
        if rp.max_mac_routes is not None:
            _sub(policy, "max-mac-routes", rp.max_mac_routes)
    return ConfigDocument(pe_id, _tostring(root), operation)


def render_base_config(pe_id: str, neighbors: list[str], local_asn: Optional[int] = None) -> ConfigDocument:
    if not neighbors:
        raise InvalidArgument(f"{pe_id}: base BGP config needs at least one neighbor")
    root = ET.Element("config", xmlns=DEVICE_NS)
    bgp = _sub(root, "bgp")
    if local_asn is not None:
        _sub(bgp, "local-as", local_asn)
    family = _sub(bgp, "family")
    _sub(family, "evpn")
    for addr in neighbors:
        neighbor = _sub(bgp, "neighbor")
        _sub(neighbor, "address", addr)
    return ConfigDocument(pe_id, _tostring(root), "merge")


_txn_ids = itertools.count(1)


@dataclass
class ConfigTransaction:
    documents: list
    txn_id: int = field(default_factory=lambda: next(_txn_ids))
    phase: str = "rendering"
    reason: Optional[str] = None
    pe_status: dict = field(default_factory=dict)
    phase_ms: dict = field(default_factory=dict)
    pe_ms: dict = field(default_factory=dict)
    total_ms: float = 0.0
    trail: list = field(default_factory=lambda: ["rendering"])

    def __post_init__(self):
        pes = [d.pe_id for d in self.documents]
        if len(set(pes)) != len(pes):
            raise InvalidArgument("one document per target PE")

    @property
    def pe_ids(self) -> list[str]:
        return [d.pe_id for d in self.documents]

    @property
    def committed(self) -> bool:
        return self.phase == "committed"

    def advance(self, phase: str) -> None:
        if phase not in _NEXT[self.phase]:
            raise InvalidState(f"transaction {self.txn_id}: {self.phase} -> {phase} not allowed")
        self.phase = phase
        self.trail.append(phase)

    def to_json(self) -> dict:
        return {
            "txn_id": self.txn_id,
            "phase": self.phase,
            "reason": self.reason,
            "pe_status": dict(self.pe_status),
            "phase_ms": dict(self.phase_ms),
            "total_ms": self.total_ms,
        }


class PeConfigurator:
    """Pool of NETCONF sessions plus the validate-all/commit-all push."""

    def __init__(self, mgmt_addrs: dict[str, tuple[str, int]]):
        self.mgmt_addrs = dict(mgmt_addrs)
        self.sessions: dict[str, NetconfClient] = {}
        self._locks: dict[str, asyncio.Lock] = {pe: asyncio.Lock() for pe in self.mgmt_addrs}
        self.history: list[ConfigTransaction] = []

    async def connect_all(self, timeout: float = 5.0):
        await asyncio.gather(*(self._session(pe, timeout) for pe in self.mgmt_addrs))

    async def _session(self, pe_id: str, timeout: float = 5.0) -> NetconfClient:
        client = self.sessions.get(pe_id)
        if client is not None and client.connected:
            return client
        host, port = self.mgmt_addrs[pe_id]
        client = NetconfClient(host, port, name=pe_id)
        await client.connect(timeout)
        self.sessions[pe_id] = client
        return client

    async def close(self):
        await asyncio.gather(*(c.close() for c in self.sessions.values()))
        self.sessions.clear()

    async def push_transaction(self, txn: ConfigTransaction) -> ConfigTransaction:
        unknown = [pe for pe in txn.pe_ids if pe not in self.mgmt_addrs]
        if unknown:
            raise InvalidArgument(f"unknown PEs {unknown}")
        locks = [self._locks[pe] for pe in sorted(txn.pe_ids)]
        for lock in locks:
            await lock.acquire()
        try:
            await self._run(txn)
        finally:
            for lock in reversed(locks):
                lock.release()
        self.history.append(txn)
        return txn

    async def _each(self, txn, op, pes=None):
        """Run ``op(client, doc)`` on every PE concurrently; return {pe: exception|None}."""
        docs = [d for d in txn.documents if pes is None or d.pe_id in pes]

        async def one(doc):
            start = monotonic_ns()
            try:
                client = await self._session(doc.pe_id)
                await op(client, doc)
                return None
            except (RpcError, ConnectionError, OSError, asyncio.TimeoutError) as exc:
                return exc
            finally:
                txn.pe_ms[doc.pe_id] = txn.pe_ms.get(doc.pe_id, 0.0) + (monotonic_ns() - start) / 1e6

        results = await asyncio.gather(*(one(d) for d in docs))
        return {d.pe_id: r for d, r in zip(docs, results)}

    async def _timed(self, txn, name, coro):
        start = monotonic_ns()
        try:
            return await coro
        finally:
            txn.phase_ms[name] = (monotonic_ns() - start) / 1e6

    @staticmethod
    def _describe(failures: dict) -> str:
        parts = []
        for pe, exc in sorted(failures.items()):
            kind = "transport" if isinstance(exc, (ConnectionError, OSError, asyncio.TimeoutError)) else "rpc"
            parts.append(f"{pe}: {kind}: {exc}")
        return "; ".join(parts)

    async def _rollback(self, txn, reason, skip=()):
        txn.reason = reason
        pes = [pe for pe in txn.pe_ids if pe not in skip]
        results = await self._timed(txn, "rollback", self._each(
            txn, lambda c, d: c.discard_changes(), set(pes)))
        for pe, exc in results.items():
            if txn.pe_status.get(pe) != "committed":
                txn.pe_status[pe] = "discarded" if exc is None else "unreachable"
        txn.advance("rolled_back")

    async def _run(self, txn: ConfigTransaction):
        start = monotonic_ns()
        # documents are rendered; staging them in candidate is part of validation
        txn.advance("validating")
        try:
            edits = await self._timed(txn, "edit", self._each(
                txn, lambda c, d: c.edit_config(d.xml_body)))
            failed = {pe: e for pe, e in edits.items() if e is not None}
            if failed:
                for pe in failed:
                    txn.pe_status[pe] = "edit-failed"
                await self._rollback(txn, "edit-config failed: " + self._describe(failed))
                return
            checks = await self._timed(txn, "validate", self._each(txn, lambda c, d: c.validate()))
            failed = {pe: e for pe, e in checks.items() if e is not None}
            if failed:
                for pe in failed:
                    txn.pe_status[pe] = "validate-failed"
                await self._rollback(txn, "validation failed: " + self._describe(failed))
                return
            txn.advance("committing")
            commits = await self._timed(txn, "commit", self._each(txn, lambda c, d: c.commit()))
            failed = {pe: e for pe, e in commits.items() if e is not None}
            for pe, exc in commits.items():
                txn.pe_status[pe] = "committed" if exc is None else "commit-failed"
            if failed:
                done = [pe for pe, exc in commits.items() if exc is None]
                reason = "commit failed: " + self._describe(failed)
                if done:
                    reason += f" (already committed, inconsistent: {', '.join(sorted(done))})"
                await self._rollback(txn, reason, skip=done)
                return
            txn.advance("committed")
        finally:
            txn.total_ms = (monotonic_ns() - start) / 1e6

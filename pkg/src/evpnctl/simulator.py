"""Simulated provider-edge router.

A NETCONF-style server with candidate/running datastores, a BGP EVPN peer,
and a line-delimited JSON control channel used by tests and the bench
harness to script failures and inject routes.
"""

from __future__ import annotations

import asyncio
import contextlib
import copy
import ipaddress
import json
import logging
import random
import xml.etree.ElementTree as ET
from dataclasses import asdict, dataclass
from typing import Optional

from .bgp import codec
from .bgp.codec import EvpnRoute, PathAttributes
from .bgp.session import BgpListener, BgpSession
from .model import MAX_U16, RouteDistinguisher, RouteTarget, monotonic_ns
from .netconf import (
    BASE_NS,
    STREAM_LIMIT,
    hello_xml,
    parse_hello,
    read_message,
    strip_ns,
    write_message,
)
from .peconf import DEVICE_NS

log = logging.getLogger(__name__)

SCHEMA = {
    "config": {"bgp", "evpn-instances"},
    "bgp": {"local-as", "family", "neighbor"},
    "family": {"evpn"},
    "neighbor": {"address"},
    "evpn-instances": {"evpn"},
    "evpn": {"evi", "rd", "route-target", "mpls-label", "customer-id",
             "virtual-network-id", "sap-id", "policy"},
    "route-target": {"import", "export"},
    "policy": {"advertise-mac", "max-mac-routes"},
}
LEAVES = {"local-as", "address", "evi", "rd", "mpls-label", "customer-id",
          "virtual-network-id", "sap-id", "import", "export", "advertise-mac",
          "max-mac-routes"}


@dataclass
class SimLatencyProfile:
    edit_ms: float = 0.0
    validate_ms: float = 0.0
    commit_ms: float = 0.0
    jitter_ms: float = 0.0

    def delay_s(self, op: str, rng: random.Random) -> float:
        base = {"edit": self.edit_ms, "validate": self.validate_ms, "commit": self.commit_ms}.get(op, 0.0)
        if base == 0 and self.jitter_ms == 0:
            return 0.0
        return (base + rng.uniform(0, self.jitter_ms)) / 1000.0

    @classmethod
    def from_json(cls, doc: dict) -> "SimLatencyProfile":
        profile = cls(**{k: float(v) for k, v in doc.items() if k in cls.__dataclass_fields__})
        if min(asdict(profile).values()) < 0:
            raise ValueError("latencies must be non-negative")
        return profile


class ValidationError(Exception):
    pass


class Datastore:
    def __init__(self):
        self.running = ET.Element("config")
        self.candidate = ET.Element("config")

    def edit(self, config: ET.Element) -> None:
        for top in config:
            if top.tag == "evpn-instances":
                target = self.candidate.find("evpn-instances")
                if target is None:
                    target = ET.SubElement(self.candidate, "evpn-instances")
                for evpn in top:
                    self._merge_evpn(target, evpn)
            else:
                existing = self.candidate.find(top.tag)
                if existing is not None:
                    self.candidate.remove(existing)
                self.candidate.append(copy.deepcopy(top))

    @staticmethod
    def _merge_evpn(target: ET.Element, evpn: ET.Element):
        key = evpn.findtext("evi")
        for old in target.findall("evpn"):
            if old.findtext("evi") == key:
                target.remove(old)
        if evpn.get("operation") != "delete":
            new = copy.deepcopy(evpn)
            new.attrib.pop("operation", None)
            target.append(new)

    def inject(self, evpn: ET.Element) -> None:
        target = self.candidate.find("evpn-instances")
        if target is None:
            target = ET.SubElement(self.candidate, "evpn-instances")
        target.append(copy.deepcopy(evpn))

    def validate(self) -> None:
        self._check(self.candidate)
        seen = set()
        for evpn in self.candidate.iter("evpn"):
            if evpn.find("evi") is None:
                continue
            evi = evpn.findtext("evi")
            if evi in seen:
                raise ValidationError(f"duplicate evi {evi}")
            seen.add(evi)
            try:
                if int(evi) <= 0:
                    raise ValueError
            except ValueError:
                raise ValidationError(f"bad evi {evi!r}") from None
            for required in ("rd", "mpls-label"):
                if evpn.find(required) is None:
                    raise ValidationError(f"evi {evi}: missing {required}")
            try:
                label = int(evpn.findtext("mpls-label"))
            except ValueError:
                raise ValidationError(f"evi {evi}: bad mpls-label") from None
            if not 16 <= label < (1 << 20):
                raise ValidationError(f"evi {evi}: mpls-label {label} out of range")
            try:
                RouteDistinguisher.parse(evpn.findtext("rd"))
            except ValueError as exc:
                raise ValidationError(f"evi {evi}: {exc}") from None

    def _check(self, elem: ET.Element):
        allowed = SCHEMA.get(elem.tag)
        if allowed is None:
            return
        for child in elem:
            if child.tag not in allowed:
                raise ValidationError(f"<{child.tag}> not allowed under <{elem.tag}>")
            if child.tag in LEAVES and len(child):
                raise ValidationError(f"<{child.tag}> must be a leaf")
            self._check(child)

    def commit(self) -> None:
        self.running = copy.deepcopy(self.candidate)

    def discard(self) -> None:
        self.candidate = copy.deepcopy(self.running)

    @staticmethod
    def evis(tree: ET.Element) -> list[int]:
        return [int(e.findtext("evi")) for e in tree.iter("evpn") if e.findtext("evi")]


def _reply(mid: Optional[str], inner: str) -> str:
    attr = f' message-id="{mid}"' if mid is not None else ""
    return f'<rpc-reply{attr} xmlns="{BASE_NS}">{inner}</rpc-reply>'


def _rpc_error(mid, tag, message, error_type="application") -> str:
    msg = ET.Element("error-message")
    msg.text = message
    return _reply(mid, f"<rpc-error><error-type>{error_type}</error-type><error-tag>{tag}</error-tag>"
                       f"<error-severity>error</error-severity>{ET.tostring(msg, encoding='unicode')}"
                       "</rpc-error>")


class PeSimulator:
    def __init__(self, pe_id: str, router_id: str = "10.255.0.1", asn: int = 64512,
                 latency: Optional[SimLatencyProfile] = None, mode: str = "normal",
                 host: str = "127.0.0.1", seed: Optional[int] = None, hold_time: int = 90):
        self.pe_id = pe_id
        self.router_id = router_id
        self.asn = asn
        self.latency = latency or SimLatencyProfile()
        self.mode = mode
        self.host = host
        self.datastore = Datastore()
        self.rng = random.Random(seed)
        self.fail_next_validate = 0
        self.op_log: list[tuple[str, float]] = []
        self.route_log: list[tuple[int, str, EvpnRoute]] = []
        self.received: dict = {}
        self._lock = asyncio.Lock()
        self._session_ids = iter(range(1, 1 << 30))
        self._netconf_server = None
        self._control_server = None
        self._netconf_writers: set = set()
        self.bgp = BgpSession(peer_id=f"{pe_id}-peer", local_asn=asn, router_id=router_id,
                              hold_time=hold_time, on_update=self._on_update)
        self.bgp_listener = BgpListener(self.bgp, host)
        self.netconf_port = 0
        self.control_port = 0

    @property
    def bgp_port(self) -> int:
        return self.bgp_listener.port

    async def start(self, netconf_port: int = 0, bgp_port: int = 0, control_port: int = 0):
        self._netconf_server = await asyncio.start_server(
            self._serve_netconf, self.host, netconf_port, limit=STREAM_LIMIT)
        self.netconf_port = self._netconf_server.sockets[0].getsockname()[1]
        self.bgp_listener.port = bgp_port
        await self.bgp_listener.start()
        self._control_server = await asyncio.start_server(self._serve_control, self.host, control_port)
        self.control_port = self._control_server.sockets[0].getsockname()[1]
        return self

    async def stop(self):
        await self.stop_netconf()
        await self.bgp_listener.close()
        if self._control_server is not None:
            self._control_server.close()
            await self._control_server.wait_closed()

    async def stop_netconf(self):
        """Make the device unreachable for management (closes live sessions)."""
        if self._netconf_server is not None:
            self._netconf_server.close()
            for w in list(self._netconf_writers):
                w.close()
            await self._netconf_server.wait_closed()
            self._netconf_server = None

    def describe(self) -> dict:
        return {
            "id": self.pe_id,
            "mgmt_addr": f"{self.host}:{self.netconf_port}",
            "bgp_addr": f"{self.host}:{self.bgp_port}",
            "control_addr": f"{self.host}:{self.control_port}",
            "router_id": self.router_id,
        }

    # ------------------------------------------------------------ NETCONF

    async def _serve_netconf(self, reader, writer):
        self._netconf_writers.add(writer)
        try:
            write_message(writer, hello_xml(next(self._session_ids)))
            try:
                parse_hello(await read_message(reader))
            except Exception:
                return
            while True:
                data = await read_message(reader)
                reply, close = await self._dispatch(data)
                write_message(writer, reply)
                await writer.drain()
                if close:
                    return
        except (asyncio.IncompleteReadError, ConnectionError):
            pass
        finally:
            self._netconf_writers.discard(writer)
            writer.close()

    async def _dispatch(self, data: bytes) -> tuple[str, bool]:
        try:
            rpc = strip_ns(ET.fromstring(data))
        except ET.ParseError as exc:
            return _rpc_error(None, "malformed-message", f"not well-formed: {exc}", "rpc"), False
        mid = rpc.get("message-id")
        if rpc.tag != "rpc" or len(rpc) != 1:
            return _rpc_error(mid, "malformed-message", "expected <rpc> with one operation", "rpc"), False
        op = rpc[0]
        async with self._lock:
            start = monotonic_ns()
            try:
                reply, close = await self._operation(mid, op)
            finally:
                self.op_log.append((op.tag, (monotonic_ns() - start) / 1e6))
        return reply, close

    async def _operation(self, mid, op) -> tuple[str, bool]:
        ok = _reply(mid, "<ok/>")
        if op.tag == "edit-config":
            await asyncio.sleep(self.latency.delay_s("edit", self.rng))
            target = op.find("target")
            if target is None or target.find("candidate") is None:
                return _rpc_error(mid, "operation-not-supported", "only the candidate datastore is writable"), False
            config = op.find("config")
            if config is None:
                return _rpc_error(mid, "missing-element", "edit-config without <config>", "protocol"), False
            self.datastore.edit(config)
            return ok, False
        if op.tag == "validate":
            await asyncio.sleep(self.latency.delay_s("validate", self.rng))
            if self.fail_next_validate:
                self.fail_next_validate -= 1
                return _rpc_error(mid, "operation-failed", "validation failure forced by test control"), False
            try:
                self.datastore.validate()
            except ValidationError as exc:
                return _rpc_error(mid, "operation-failed", str(exc)), False
            return ok, False
        if op.tag == "commit":
            await asyncio.sleep(self.latency.delay_s("commit", self.rng))
            self.datastore.commit()
            return ok, False
        if op.tag == "discard-changes":
            self.datastore.discard()
            return ok, False
        if op.tag == "get-config":
            source = op.find("source")
            tree = self.datastore.candidate if source is not None and source.find("candidate") is not None \
                else self.datastore.running
            body = copy.deepcopy(tree)
            body.set("xmlns", DEVICE_NS)
            return _reply(mid, f"<data>{ET.tostring(body, encoding='unicode')}</data>"), False
        if op.tag == "close-session":
            return ok, True
        return _rpc_error(mid, "operation-not-supported", f"unknown operation <{op.tag}>", "protocol"), False

    def running_evis(self) -> list[int]:
        return self.datastore.evis(self.datastore.running)

    # ------------------------------------------------------------ BGP

    def _on_update(self, session: BgpSession, parsed: codec.ParsedUpdate):
        now = monotonic_ns()
        for route in parsed.withdrawals:
            self.route_log.append((now, "withdraw", route))
            self.received.pop(route.key(), None)
        reflect = []
        for route in parsed.routes:
            self.route_log.append((now, "advertise", route))
            self.received[route.key()] = (route, parsed.attrs)
            if self.mode == "reflect" and route.route_type == codec.MAC_IP_ADVERTISEMENT:
                reflect.append(route)
        for route in reflect:
            own = EvpnRoute(route.route_type, self.own_rd, esi=route.esi, eth_tag=route.eth_tag,
                            mac=route.mac, ip=route.ip, labels=route.labels)
            attrs = PathAttributes(ipaddress.IPv4Address(self.router_id),
                                   parsed.attrs.extended_communities)
            session.enqueue_advertisement(own, attrs)

    @property
    def own_rd(self) -> RouteDistinguisher:
        return RouteDistinguisher(self.asn & MAX_U16, int(ipaddress.IPv4Address(self.router_id)))

    def received_routes(self, route_type: Optional[int] = None) -> list[EvpnRoute]:
        return [r for r, _ in self.received.values() if route_type is None or r.route_type == route_type]

    def stage_route(self, route: EvpnRoute, route_targets) -> None:
        attrs = PathAttributes.for_targets(self.router_id, route_targets)
        self.bgp.enqueue_advertisement(route, attrs)

    def withdraw_route(self, route: EvpnRoute) -> None:
        self.bgp.enqueue_withdrawal(route)

    # ------------------------------------------------------------ control

    async def _serve_control(self, reader, writer):
        try:
            while True:
                line = await reader.readline()
                if not line:
                    return
                try:
                    reply = await self.control(json.loads(line))
                except Exception as exc:
                    reply = {"ok": False, "error": f"{type(exc).__name__}: {exc}"}
                writer.write(json.dumps(reply).encode() + b"\n")
                await writer.drain()
        except ConnectionError:
            pass
        finally:
            writer.close()

    async def control(self, cmd: dict) -> dict:
        name = cmd.get("cmd")
        if name == "fail_next_validate":
            self.fail_next_validate += int(cmd.get("count", 1))
        elif name == "set_latency":
            self.latency = SimLatencyProfile.from_json(cmd)
        elif name == "set_mode":
            if cmd["mode"] not in ("normal", "reflect"):
                raise ValueError(f"unknown mode {cmd['mode']!r}")
            self.mode = cmd["mode"]
        elif name == "stage_route":
            route = EvpnRoute.from_json(cmd["route"])
            self.stage_route(route, [RouteTarget.parse(t) for t in cmd.get("route_targets", ())])
        elif name == "withdraw_route":
            self.withdraw_route(EvpnRoute.from_json(cmd["route"]))
        elif name == "inject_candidate":
            elem = strip_ns(ET.fromstring(cmd["xml"]))
            self.datastore.inject(elem)
        elif name == "received_routes":
            return {"ok": True, "routes": [r.to_json() for r in self.received_routes()]}
        elif name == "running_evis":
            return {"ok": True, "evis": self.running_evis()}
        elif name == "netconf_down":
            await self.stop_netconf()
        else:
            raise ValueError(f"unknown command {name!r}")
        return {"ok": True}


class ControlClient:
    """Client for a simulator's test-control channel."""

    def __init__(self, host: str, port: int):
        self.host, self.port = host, port
        self._reader = self._writer = None

    async def __aenter__(self):
        self._reader, self._writer = await asyncio.open_connection(self.host, self.port)
        return self

    async def __aexit__(self, *exc):
        self._writer.close()
        with contextlib.suppress(Exception):
            await self._writer.wait_closed()

    async def send(self, cmd: str, **args) -> dict:
        self._writer.write(json.dumps({"cmd": cmd, **args}).encode() + b"\n")
        await self._writer.drain()
        reply = json.loads(await self._reader.readline())
        if not reply.get("ok"):
            raise RuntimeError(reply.get("error", "control command failed"))
        return reply

"""Northbound REST/JSON API.

Handlers validate request bodies, stamp the receipt time and forward the
request as an event to the L2VPN service; they hold no state of their own.
"""

from __future__ import annotations

import asyncio
import json
import logging
from typing import Annotated, Optional

from aiohttp import web
from pydantic import AfterValidator, BaseModel, ConfigDict, Field, ValidationError

from .errors import Conflict, InvalidArgument, InvalidState, NotFound, TransactionFailed
from .model import RouteTarget, monotonic_ns
from .peconf import xml_safe

log = logging.getLogger(__name__)


def _check_rt(value: str) -> str:
    RouteTarget.parse(value)
    return value


def _check_xml(value: str) -> str:
    # these strings end up in device configuration documents
    if not xml_safe(value):
        raise ValueError("contains characters not representable in XML")
    return value


RtString = Annotated[str, AfterValidator(_check_rt)]
XmlString = Annotated[str, AfterValidator(_check_xml)]
NonEmptyIds = Annotated[list[Annotated[str, Field(min_length=1)]], Field(min_length=1)]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", strict=True)


class L2vpnRequest(_Strict):
    customer_id: XmlString
    virtual_network_id: XmlString
    sap_id: XmlString
    network_ids: NonEmptyIds
    pe_ids: NonEmptyIds


class RpRequest(_Strict):
    name: str
    allow_mac_advertisement: bool = True
    import_rts: list[RtString] = []
    export_rts: list[RtString] = []
    max_mac_routes: Optional[Annotated[int, Field(gt=0)]] = None


class AssociationRequest(_Strict):
    rp_id: int


class EndpointRequest(_Strict):
    mac: str
    ip: Optional[str] = None
    network_id: str


class EndpointDownRequest(_Strict):
    mac: str
    network_id: str


def error_response(status: int, message: str, field: Optional[str] = None) -> web.Response:
    return web.json_response({"error": message, "field": field}, status=status)


@web.middleware
async def _errors(request: web.Request, handler):
    try:
        return await handler(request)
    except web.HTTPException:
        raise
    except ValidationError as exc:
        first = exc.errors()[0]
        field = ".".join(str(p) for p in first["loc"]) or None
        return error_response(422, first["msg"], field)
    except InvalidArgument as exc:
        return error_response(422, str(exc), exc.field)
    except NotFound as exc:
        return error_response(404, str(exc))
    except (Conflict, InvalidState) as exc:
        return error_response(409, str(exc))
    except TransactionFailed as exc:
        return error_response(502, str(exc))
    except asyncio.TimeoutError:
        return error_response(504, "controller did not answer in time")


async def _body(request: web.Request, model: type[BaseModel]) -> BaseModel:
    try:
        doc = json.loads(await request.read())
    except (ValueError, UnicodeDecodeError) as exc:
        raise web.HTTPBadRequest(text=json.dumps({"error": f"malformed JSON: {exc}", "field": None}),
                                 content_type="application/json")
    if not isinstance(doc, dict):
        raise web.HTTPBadRequest(text=json.dumps({"error": "body must be a JSON object", "field": None}),
                                 content_type="application/json")
    return model.model_validate(doc)


def _int_param(request: web.Request, name: str) -> int:
    raw = request.match_info.get(name) or request.query.get(name)
    try:
        return int(raw)
    except (TypeError, ValueError):
        raise InvalidArgument(f"{name} must be an integer", name) from None


class ApiServer:
    def __init__(self, controller, host: str = "127.0.0.1", port: int = 8181):
        from .arp import ArpProxy

        self.ctl = controller
        self.host = host
        self.port = port
        self.arp = ArpProxy(controller.service, controller.submit)
        self.app = web.Application(middlewares=[_errors])
        self.app.add_routes([
            web.post("/v1/l2vpn", self.create_l2vpn),
            web.get("/v1/l2vpn", self.list_l2vpn),
            web.get("/v1/l2vpn/{evi_id}", self.show_l2vpn),
            web.delete("/v1/l2vpn/{evi_id}", self.delete_l2vpn),
            web.put("/v1/l2vpn/{evi_id}/rp", self.associate_rp),
            web.get("/v1/l2vpn/{evi_id}/macs", self.list_macs),
            web.post("/v1/rp", self.create_rp),
            web.get("/v1/rp", self.list_rp),
            web.get("/v1/rp/{rp_id}", self.show_rp),
            web.post("/v1/endpoints", self.endpoint_up),
            web.post("/v1/endpoints/down", self.endpoint_down),
            web.get("/v1/arp", self.arp_query),
            web.get("/v1/stats", self.stats),
            web.get("/v1/stats/deploy", self.deploy_stats),
            web.get("/v1/stats/wbt", self.wbt_stats),
        ])
        self._runner: Optional[web.AppRunner] = None

    async def start(self) -> "ApiServer":
        self._runner = web.AppRunner(self.app, access_log=None)
        await self._runner.setup()
        site = web.TCPSite(self._runner, self.host, self.port)
        await site.start()
        self.port = self._runner.addresses[0][1]
        return self

    async def stop(self):
        if self._runner is not None:
            await self._runner.cleanup()
            self._runner = None

    @property
    def service(self):
        return self.ctl.service

    # ------------------------------------------------------------ l2vpn

    async def create_l2vpn(self, request: web.Request):
        received = monotonic_ns()
        body = await _body(request, L2vpnRequest)
        payload = body.model_dump()
        payload["received_ns"] = received
        record = await self.ctl.submit("evi_created", payload)
        return web.json_response({**record, "receipt_ts": received}, status=201)

    async def list_l2vpn(self, request: web.Request):
        return web.json_response([self.service.snapshot_evi(i) for i in sorted(self.service.evis)])

    async def show_l2vpn(self, request: web.Request):
        evi_id = _int_param(request, "evi_id")
        wait = float(request.query.get("wait", 0))
        if wait > 0:
            if evi_id not in self.service.evis:
                raise NotFound(f"l2vpn {evi_id} not found")
            await self.service.wait_idle(evi_id, wait)
        return web.json_response(self.service.snapshot_evi(evi_id))

    async def delete_l2vpn(self, request: web.Request):
        evi_id = _int_param(request, "evi_id")
        result = await self.ctl.submit("evi_deleted", {"evi_id": evi_id}, timeout=120.0)
        return web.json_response(result)

    async def associate_rp(self, request: web.Request):
        evi_id = _int_param(request, "evi_id")
        body = await _body(request, AssociationRequest)
        result = await self.ctl.submit("rp_associated", {"evi_id": evi_id, "rp_id": body.rp_id})
        return web.json_response(result)

    async def list_macs(self, request: web.Request):
        evi_id = _int_param(request, "evi_id")
        self.service.snapshot_evi(evi_id)
        entries = self.service.mac_table.entries(evi_id)
        return web.json_response([e.to_json() for e in sorted(entries, key=lambda e: e.mac)])

    # ------------------------------------------------------------ rp

    async def create_rp(self, request: web.Request):
        received = monotonic_ns()
        body = await _body(request, RpRequest)
        payload = body.model_dump()
        payload["received_ns"] = received
        record = await self.ctl.submit("rp_created", payload)
        return web.json_response({**record, "receipt_ts": received}, status=201)

    async def list_rp(self, request: web.Request):
        return web.json_response([self.service.snapshot_rp(i) for i in sorted(self.service.rps)])

    async def show_rp(self, request: web.Request):
        return web.json_response(self.service.snapshot_rp(_int_param(request, "rp_id")))

    # ------------------------------------------------------------ hosts

    async def endpoint_up(self, request: web.Request):
        body = await _body(request, EndpointRequest)
        return web.json_response(await self.arp.on_vm_boot(body.mac, body.ip, body.network_id))

    async def endpoint_down(self, request: web.Request):
        body = await _body(request, EndpointDownRequest)
        return web.json_response(await self.ctl.submit("local_endpoint_down", body.model_dump()))

    async def arp_query(self, request: web.Request):
        evi_id = _int_param(request, "evi")
        ip = request.query.get("ip")
        if not ip:
            raise InvalidArgument("ip is required", "ip")
        return web.json_response(self.arp.query(evi_id, ip))

    # ------------------------------------------------------------ stats

    async def stats(self, request: web.Request):
        return web.json_response({**self.ctl.stats(), "arp": self.arp.stats()})

    async def deploy_stats(self, request: web.Request):
        timings = self.ctl.stage_log.evis
        return web.json_response([timings[i].to_json() for i in sorted(timings)])

    async def wbt_stats(self, request: web.Request):
        inst = self.ctl.instrumentation
        return web.json_response({"enabled": inst.enabled,
                                  "records": [t.to_json() for t in inst.collect()]})

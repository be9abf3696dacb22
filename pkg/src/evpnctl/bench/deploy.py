"""EVI deployment scaling benchmark with per-stage timing.

Each iteration creates an L2VPN on randomly chosen free networks, creates a
routing policy and associates it, exactly as an administrator script would
over the REST API.  Stage timings are read back from the controller's data
logger, so they are controller-side and exclude client overhead.
"""

from __future__ import annotations

import asyncio
import csv
import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import aiohttp

from ..controller import ControllerConfig
from ..fleet import Testbed, start_testbed
from ..netconf import NetconfClient
from ..simulator import Datastore, SimLatencyProfile
from .report import describe

log = logging.getLogger(__name__)

WARMUP_EVIS = 5
STAGES = ("l2vpn_ms", "rp_ms", "netconf_ms", "total_ms")


@dataclass
class StageTiming:
    evi_id: int
    l2vpn_ms: float
    rp_ms: float
    netconf_ms: float
    total_ms: float
    state: str = "deployed"


@dataclass
class DeployResult:
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    assignments: dict = field(default_factory=dict)
    datastore_diff: dict = field(default_factory=dict)
    rollbacks: int = 0
    aborted: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.aborted is None and not self.datastore_diff and self.rollbacks == 0


class ApiClient:
    """Minimal async client for the northbound API."""

    def __init__(self, base_url: str):
        self.base = base_url.rstrip("/")
        self._http: Optional[aiohttp.ClientSession] = None

    async def __aenter__(self):
        self._http = aiohttp.ClientSession()
        return self

    async def __aexit__(self, *exc):
        await self._http.close()

    async def call(self, method: str, path: str, body=None, expect=(200, 201)):
        async with self._http.request(method, self.base + path, json=body) as resp:
            doc = await resp.json()
            if resp.status not in expect:
                raise RuntimeError(f"{method} {path} -> {resp.status}: {doc}")
            return doc


def assign_pes(index: int, pe_ids: list[str], per_evi: int = 2) -> list[str]:
    """Round-robin placement of ``per_evi`` PEs starting at ``index``."""
    k = min(per_evi, len(pe_ids))
    return [pe_ids[(index + j) % len(pe_ids)] for j in range(k)]


async def _deploy_one(api: ApiClient, i: int, network: str, pes: list[str], wait_s: float) -> dict:
    evi = await api.call("POST", "/v1/l2vpn", {
        "customer_id": f"cust{i}", "virtual_network_id": f"vn{i}", "sap_id": f"sap{i}",
        "network_ids": [network], "pe_ids": pes,
    })
    evi_id = evi["evi_id"]
    doc = await api.call("GET", f"/v1/l2vpn/{evi_id}?wait={wait_s}")
    if doc["state"] != "deployed":
        return doc
    rp = await api.call("POST", "/v1/rp", {"name": f"rp{i}", "allow_mac_advertisement": True})
    await api.call("PUT", f"/v1/l2vpn/{evi_id}/rp", {"rp_id": rp["rp_id"]})
    return await api.call("GET", f"/v1/l2vpn/{evi_id}?wait={wait_s}")


async def datastore_diff(bed: Testbed, expected: dict[int, list[str]]) -> dict:
    """Compare every PE's running datastore (read over NETCONF) with the
    expected EVI placement.  Returns ``{pe: {"missing": [...], "extra": [...]}}``
    for PEs that disagree."""
    diff = {}
    for pe_id, info in bed.inventory.pes.items():
        client = await NetconfClient(*info.mgmt(), name=pe_id).connect()
        try:
            running = set(Datastore.evis(await client.get_config("running")))
        finally:
            await client.close()
        want = {e for e, pes in expected.items() if pe_id in pes}
        if running != want:
            diff[pe_id] = {"missing": sorted(want - running), "extra": sorted(running - want)}
    return diff


async def run_deployment_bench(n: int, delay_s: float = 1.0, pes: int = 4,
                               latency: Optional[SimLatencyProfile] = None,
                               out_dir=None, seed: int = 0, warmup: int = WARMUP_EVIS,
                               wait_s: float = 120.0) -> DeployResult:
    rng = random.Random(seed)
    bed = await start_testbed(pes, networks=n + warmup, latency=latency,
                              config=ControllerConfig(api_port=0), seed=seed)
    result = DeployResult()
    try:
        pe_ids = sorted(bed.inventory.pes)
        free = sorted(bed.inventory.networks)
        async with ApiClient(f"http://{bed.controller.api_addr}") as api:
            for w in range(warmup):
                net = free.pop(rng.randrange(len(free)))
                doc = await _deploy_one(api, -w - 1, net, assign_pes(w, pe_ids), wait_s)
                await api.call("DELETE", f"/v1/l2vpn/{doc['evi_id']}")
                free.append(net)
            baseline = len(bed.controller.configurator.history)

            for i in range(n):
                net = free.pop(rng.randrange(len(free)))
                placement = assign_pes(i, pe_ids)
                doc = await _deploy_one(api, i, net, placement, wait_s)
                result.assignments[doc["evi_id"]] = placement
                if doc["state"] != "deployed":
                    result.aborted = f"l2vpn {doc['evi_id']} ended {doc['state']}: {doc.get('reason')}"
                    break
                if delay_s > 0 and i + 1 < n:
                    await asyncio.sleep(delay_s)

            timings = {t["evi_id"]: t for t in await api.call("GET", "/v1/stats/deploy")}
            states = {e["evi_id"]: e["state"] for e in await api.call("GET", "/v1/l2vpn")}
        for evi_id in result.assignments:
            t = timings[evi_id]
            result.rows.append(StageTiming(evi_id, t["l2vpn_ms"], t["rp_ms"], t["netconf_ms"],
                                           t["total_ms"], states.get(evi_id, "missing")))
        result.rollbacks = sum(1 for txn in bed.controller.configurator.history[baseline:]
                               if not txn.committed)
        result.datastore_diff = await datastore_diff(bed, result.assignments)
    finally:
        await bed.stop()

    result.summary = summarize(result)
    if out_dir is not None:
        write_outputs(result, out_dir)
    return result


def summarize(result: DeployResult) -> dict:
    summary = {
        "evis": len(result.rows),
        "deployed": sum(1 for r in result.rows if r.state == "deployed"),
        "rollbacks": result.rollbacks,
        "datastore_consistent": not result.datastore_diff,
        "aborted": result.aborted,
    }
    if result.rows:
        for stage in STAGES:
            summary[stage] = describe([getattr(r, stage) for r in result.rows])
    return summary


def write_outputs(result: DeployResult, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "deploy_timings.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["evi_id", *STAGES, "state"])
        for r in result.rows:
            w.writerow([r.evi_id, *(f"{getattr(r, s):.6f}" for s in STAGES), r.state])
    doc = {**result.summary, "datastore_diff": result.datastore_diff}
    (out / "deploy_summary.json").write_text(json.dumps(doc, indent=2) + "\n")



"""Whitebox and blackbox control-plane latency runs.

BBT-UQ uses one-by-one mode (no queueing), BBT-Q uses burst mode, and WBT
is read from the controller's pipeline traces for the one-by-one messages.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..controller import Controller, ControllerConfig, PeerConfig
from ..fleet import start_testbed
from ..model import RouteTarget
from .generator import Generator, GeneratorConfig
from .report import emit_report

log = logging.getLogger(__name__)

SERIES = {"one_by_one": "bbt_uq", "burst": "bbt_q", "single": "bbt_single"}


@dataclass
class WbtReport:
    enabled: bool
    records: list = field(default_factory=list)

    @property
    def pipeline_ms(self) -> list[float]:
        return [r["pipeline_ms"] for r in self.records]

    @property
    def bus_ms(self) -> list[float]:
        return [r["bus_ms"] for r in self.records]

    def summary(self) -> dict:
        if not self.records:
            return {"enabled": self.enabled, "count": 0}
        return {
            "enabled": self.enabled,
            "count": len(self.records),
            "mean_pipeline_ms": float(np.mean(self.pipeline_ms)),
            "mean_bus_ms": float(np.mean(self.bus_ms)),
            "mean_bus_share": float(np.mean([r["bus_share"] for r in self.records])),
        }


def collect_wbt(controller: Controller, keys: Optional[list[str]] = None) -> WbtReport:
    inst = controller.instrumentation
    if not inst.enabled:
        return WbtReport(False)
    return WbtReport(True, [t.to_json() for t in inst.collect(keys)])


@dataclass
class LatencyResult:
    samples: dict = field(default_factory=dict)
    wbt: list = field(default_factory=list)
    summaries: dict = field(default_factory=dict)


async def start_reflect_setup(pes: int = 1, instrument: bool = True, seed: int = 0):
    """Controller plus one deployed EVI and a generator peered in reflect mode."""
    bed = await start_testbed(pes, networks=1, config=ControllerConfig(api_port=0, instrument=instrument),
                              seed=seed)
    ctl = bed.controller
    record = await ctl.submit("evi_created", {
        "customer_id": "bench", "virtual_network_id": "bench", "sap_id": "bench",
        "network_ids": ["net1"], "pe_ids": sorted(bed.inventory.pes)})
    await ctl.service.wait_idle(record["evi_id"])
    gen = await Generator(RouteTarget.parse(record["rt"])).start()
    ctl.add_peer(PeerConfig("generator", "127.0.0.1", gen.port, reflect=True))
    await ctl.sessions["generator"].wait_established(5.0)
    await gen.session.wait_established(5.0)
    await ctl.quiesce()
    return bed, gen


async def run_latency_bench(modes=("one_by_one", "burst"), count: int = 100, repeats: int = 5,
                            out_dir=None, seed: int = 0, instrument: bool = True) -> LatencyResult:
    bed, gen = await start_reflect_setup(instrument=instrument, seed=seed)
    result = LatencyResult()
    try:
        for rep in range(repeats):
            for mode in modes:
                cfg = GeneratorConfig(mode, count, mac_seed=0x02_00_00_00_00_00 + (seed << 24))
                run = await gen.run(cfg)
                result.samples.setdefault(SERIES[cfg.mode], []).append(run.rtt_ms)
                if cfg.mode == "one_by_one":
                    result.wbt.append(collect_wbt(bed.controller, run.macs))
                await bed.controller.quiesce()
    finally:
        await gen.stop()
        await bed.stop()

    if out_dir is not None:
        for name, reps in result.samples.items():
            result.summaries[name] = emit_report(out_dir, name, reps)
        wbt_reps = [w.pipeline_ms for w in result.wbt]
        if any(wbt_reps):
            bus = [v for w in result.wbt for v in w.bus_ms]
            share = [r["bus_share"] for w in result.wbt for r in w.records]
            result.summaries["wbt"] = emit_report(out_dir, "wbt", wbt_reps, {
                "mean_bus_ms": float(np.mean(bus)),
                "mean_bus_share": float(np.mean(share)),
            })
    return result


def pooled_mean(reps: list[list[float]]) -> float:
    return float(np.mean([v for rep in reps for v in rep]))

"""Helpers to bring up a simulated PE fleet and a controller in one loop."""

from __future__ import annotations

import asyncio
from dataclasses import dataclass, field
from typing import Optional

from .controller import Controller, ControllerConfig
from .inventory import Inventory
from .simulator import PeSimulator, SimLatencyProfile


def make_networks(count: int, base_vni: int = 5000) -> list[dict]:
    return [{"id": f"net{i}", "vni": base_vni + i} for i in range(1, count + 1)]


@dataclass
class Testbed:
    sims: dict = field(default_factory=dict)
    controller: Optional[Controller] = None
    inventory: Optional[Inventory] = None

    def sim(self, pe_id: str) -> PeSimulator:
        return self.sims[pe_id]

    async def stop(self):
        if self.controller is not None:
            await self.controller.stop()
        await asyncio.gather(*(s.stop() for s in self.sims.values()))


async def start_simulators(count: int, latency: Optional[SimLatencyProfile] = None,
                           mode: str = "normal", seed: int = 0, hold_time: int = 90) -> dict:
    sims = {}
    for i in range(1, count + 1):
        sim = PeSimulator(f"pe{i}", router_id=f"10.255.0.{i}", latency=latency, mode=mode,
                          seed=seed + i, hold_time=hold_time)
        await sim.start()
        sims[sim.pe_id] = sim
    return sims


async def start_testbed(pes: int = 2, networks: int = 10, ports: Optional[list] = None,
                        latency: Optional[SimLatencyProfile] = None, mode: str = "normal",
                        config: Optional[ControllerConfig] = None, seed: int = 0,
                        establish: bool = True) -> Testbed:
    bed = Testbed()
    bed.sims = await start_simulators(pes, latency, mode, seed)
    bed.inventory = Inventory.from_json({
        "pes": [s.describe() for s in bed.sims.values()],
        "networks": make_networks(networks),
        "ports": ports or [],
    })
    cfg = config or ControllerConfig(api_port=0)
    bed.controller = await Controller(bed.inventory, cfg).start()
    if establish:
        await bed.controller.wait_established()
        await asyncio.gather(*(s.bgp.wait_established(5.0) for s in bed.sims.values()))
    return bed

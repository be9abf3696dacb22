"""Controller-side data loggers: deployment stage timings and per-message
pipeline traces used for the whitebox latency breakdown."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .model import monotonic_ns


def _ms(ns: int) -> float:
    return ns / 1e6


@dataclass
class DeployTiming:
    evi_id: int
    received_ns: int
    l2vpn_ms: float = 0.0
    rp_ms: float = 0.0
    netconf_ms: float = 0.0
    finished_ns: Optional[int] = None
    transactions: int = 0

    @property
    def total_ms(self) -> float:
        if self.finished_ns is None:
            return 0.0
        return _ms(self.finished_ns - self.received_ns)

    def to_json(self) -> dict:
        return {
            "evi_id": self.evi_id,
            "l2vpn_ms": self.l2vpn_ms,
            "rp_ms": self.rp_ms,
            "netconf_ms": self.netconf_ms,
            "total_ms": self.total_ms,
            "transactions": self.transactions,
        }


class StageLog:
    """Stamps requests on receipt and at the end of their lifecycle."""

    def __init__(self):
        self.evis: dict[int, DeployTiming] = {}
        self.rps: dict[int, float] = {}

    def evi_created(self, evi_id: int, received_ns: int) -> None:
        self.evis[evi_id] = DeployTiming(evi_id, received_ns, _ms(monotonic_ns() - received_ns))

    def rp_created(self, rp_id: int, received_ns: int) -> None:
        self.rps[rp_id] = _ms(monotonic_ns() - received_ns)

    def rp_associated(self, evi_id: int, rp_id: int) -> None:
        timing = self.evis.get(evi_id)
        if timing is not None:
            timing.rp_ms = self.rps.get(rp_id, 0.0)

    def netconf_done(self, evi_id: int, duration_ms: float) -> None:
        timing = self.evis.get(evi_id)
        if timing is not None:
            timing.netconf_ms += duration_ms
            timing.transactions += 1
            timing.finished_ns = monotonic_ns()

    def get(self, evi_id: int) -> Optional[DeployTiming]:
        return self.evis.get(evi_id)


@dataclass
class MessageTrace:
    """Timestamps (ns) of one received route through the controller pipeline."""

    key: str
    parse_start: int = 0
    parse_end: int = 0
    inbound_enqueue: int = 0
    inbound_dequeue: int = 0
    handled: int = 0
    outbound_enqueue: int = 0
    outbound_dequeue: int = 0
    serialized: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def complete(self) -> bool:
        return self.serialized > 0 and self.parse_start > 0

    @property
    def pipeline_ns(self) -> int:
        return self.serialized - self.parse_start

    @property
    def bus_ns(self) -> int:
        return (self.inbound_dequeue - self.inbound_enqueue) + (self.outbound_dequeue - self.outbound_enqueue)

    def to_json(self) -> dict:
        pipeline = self.pipeline_ns
        return {
            "key": self.key,
            "pipeline_ms": _ms(pipeline),
            "bus_ms": _ms(self.bus_ns),
            "inbound_bus_ms": _ms(self.inbound_dequeue - self.inbound_enqueue),
            "outbound_bus_ms": _ms(self.outbound_dequeue - self.outbound_enqueue),
            "parse_ms": _ms(self.parse_end - self.parse_start),
            "handler_ms": _ms(self.handled - self.inbound_dequeue),
            "serialize_ms": _ms(self.serialized - self.outbound_dequeue),
            "bus_share": self.bus_ns / pipeline if pipeline > 0 else 0.0,
        }


class Instrumentation:
    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self.traces: dict[str, MessageTrace] = {}

    def record(self, trace: MessageTrace) -> None:
        if self.enabled and trace.complete:
            self.traces[trace.key] = trace

    def collect(self, keys=None) -> list[MessageTrace]:
        if keys is None:
            return list(self.traces.values())
        return [self.traces[k] for k in keys if k in self.traces]

    def clear(self) -> None:
        self.traces.clear()

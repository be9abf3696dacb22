"""EVPN orchestration controller with a simulated PE fleet and benchmarks."""

__version__ = "0.1.0"

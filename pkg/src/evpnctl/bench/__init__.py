"""Deployment-scaling and control-plane latency benchmarks."""

from .deploy import DeployResult, StageTiming, run_deployment_bench
from .generator import Generator, GeneratorConfig, GeneratorTimeout, run_generator
from .latency import WbtReport, collect_wbt, run_latency_bench
from .report import EmptyReport, emit_report

__all__ = ["DeployResult", "StageTiming", "run_deployment_bench", "Generator", "GeneratorConfig",
           "GeneratorTimeout", "run_generator", "WbtReport", "collect_wbt", "run_latency_bench",
           "EmptyReport", "emit_report"]

"""Planning and simulation for DRL workloads on partitioned GPUs."""

from .channels import BatchMode, PipelineConfig, PipelineMetrics, simulate_pipeline
from .mapping import (Mode, ModelParams, PlanError, TemplateKind, build_plan, compare_serving,
                      compare_training, select_template)
from .reduction import GmiLayout, Strategy, StrategyNotApplicable, execute, predict_latency, select_strategy
from .search import SearchConfig, SyntheticCostModel, TraceProfiler, explore
from .topology import Arch, Backend, GmiPartition, GpuSpec, Topology, select_backend, validate_layout
from .workload import BENCHMARKS, DrlWorkload, Role, load_benchmark

__version__ = "0.1.0"

__all__ = [
    "Arch", "Backend", "BatchMode", "BENCHMARKS", "DrlWorkload", "GmiLayout", "GmiPartition", "GpuSpec",
    "Mode", "ModelParams", "PipelineConfig", "PipelineMetrics", "PlanError", "Role", "SearchConfig",
    "Strategy", "StrategyNotApplicable", "SyntheticCostModel", "TemplateKind", "Topology", "TraceProfiler",
    "build_plan", "compare_serving", "compare_training", "execute", "explore", "load_benchmark",
    "predict_latency", "select_backend", "select_strategy", "select_template", "simulate_pipeline",
    "validate_layout",
]

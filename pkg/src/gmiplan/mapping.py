"""Task-to-GMI mapping templates and their analytical cost model.

Resource sizes are expressed in dominant-resource units: a role's dominant
fraction of one GPU times ``units_per_gpu`` (10 by default, so the default
simulator weighs 10, the agent 1 and the trainer 2).  ``total_resource`` in
the throughput estimators is in the same units, e.g. 80 for eight GPUs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

from .topology import Arch, Backend, Topology, uniform_partitions, validate_layout
from .workload import DrlWorkload, Role

DEFAULT_UNITS_PER_GPU = 10.0
SERVING_COMM_FACTOR = 2.0
TRAINING_COMM_FACTOR = 7.0

SERVING_ROLES = (Role.SIMULATOR, Role.AGENT)
TRAINING_ROLES = (Role.SIMULATOR, Role.AGENT, Role.TRAINER)


class TemplateKind(str, Enum):
    TDG = "TDG"
    TCG = "TCG"
    TDG_EX = "TDG_EX"
    TCG_EX = "TCG_EX"
    ASYNC_DECOUPLED = "AsyncDecoupled"


class Mode(str, Enum):
    SERVING = "serving"
    SYNC_TRAIN = "sync_train"
    ASYNC_TRAIN = "async_train"


class PlanError(ValueError):
    pass


@dataclass(frozen=True)
class ModelParams:
    """Knobs of the analytical model, defaulting to the profiled constants."""

    units_per_gpu: float = DEFAULT_UNITS_PER_GPU
    serving_comm_factor: float = SERVING_COMM_FACTOR
    training_comm_factor: float = TRAINING_COMM_FACTOR

    def __post_init__(self):
        for name in ("units_per_gpu", "serving_comm_factor", "training_comm_factor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class CostEstimate:
    template: TemplateKind
    resource_size: float
    comm_size: float
    throughput: float | None = None

    def __post_init__(self):
        if not self.resource_size > 0:
            raise ValueError("resource_size must be positive")
        if self.comm_size < 0:
            raise ValueError("comm_size must be non-negative")


def _sizes(workload: DrlWorkload, roles, units_per_gpu: float) -> dict[Role, float]:
    kind = workload.dominant_kind(roles)
    return {r: workload.profiles[r].size(kind) * units_per_gpu for r in roles}


def serving_cost(template, workload: DrlWorkload, units_per_gpu: float = DEFAULT_UNITS_PER_GPU) -> CostEstimate:
    template = TemplateKind(template)
    R = _sizes(workload, SERVING_ROLES, units_per_gpu)
    t_s, t_a = workload.t_s, workload.t_a
    if template is TemplateKind.TDG:
        size = (t_s * R[Role.SIMULATOR] + t_a * workload.alpha * R[Role.AGENT]) / (t_s + t_a)
        com = 2 * workload.state_size + workload.action_size + workload.reward_size
    elif template is TemplateKind.TCG:
        size = max(R[Role.SIMULATOR], R[Role.AGENT])
        com = 0.0
    else:
        raise ValueError(f"serving_cost expects TDG or TCG, got {template.value}")
    return CostEstimate(template, size, com)


def training_cost(template, workload: DrlWorkload, n_gmis: int,
                  units_per_gpu: float = DEFAULT_UNITS_PER_GPU) -> CostEstimate:
    template = TemplateKind(template)
    if n_gmis < 1:
        raise ValueError(f"n_gmis must be >= 1, got {n_gmis}")
    R = _sizes(workload, TRAINING_ROLES, units_per_gpu)
    t_s, t_a, t_t = workload.t_s, workload.t_a, workload.t_t
    m_p = workload.model_size
    sync = 2 * (n_gmis - 1) * m_p / n_gmis
    if template is TemplateKind.TDG_EX:
        size = (t_s * R[Role.SIMULATOR] + t_a * workload.alpha * R[Role.AGENT]
                + t_t * workload.beta * R[Role.TRAINER]) / (t_s + t_a + t_t)
        com = workload.steps_per_train * workload.experience_size + m_p + sync
    elif template is TemplateKind.TCG_EX:
        size = max(R.values())
        com = sync
    else:
        raise ValueError(f"training_cost expects TDG_EX or TCG_EX, got {template.value}")
    return CostEstimate(template, size, com)


def serving_throughput(cost: CostEstimate, workload: DrlWorkload, total_resource: float, bandwidth: float) -> float:
    _check_positive(total_resource, bandwidth)
    return (total_resource / cost.resource_size) / (workload.t_s + workload.t_a + cost.comm_size / bandwidth)


def training_throughput(cost: CostEstimate, workload: DrlWorkload, total_resource: float, bandwidth: float) -> float:
    _check_positive(total_resource, bandwidth)
    iteration = workload.t_s + workload.t_a + workload.t_t
    return (total_resource / cost.resource_size) / (iteration + cost.comm_size / bandwidth)


def _check_positive(total_resource, bandwidth):
    if not total_resource > 0:
        raise ValueError("total_resource must be positive")
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")


def calibrated_bandwidth(cost: CostEstimate, iteration_time: float, factor: float) -> float:
    """Bandwidth at which ``cost``'s communication takes ``factor`` iterations."""
    if cost.comm_size == 0:
        raise ValueError("cannot calibrate on a template without communication")
    return cost.comm_size / (factor * iteration_time)


def colocation_penalty(dedicated: CostEstimate, colocated: CostEstimate) -> float:
    """Relative parallelism lost by colocating roles in one GMI."""
    return colocated.resource_size / dedicated.resource_size - 1


@dataclass(frozen=True)
class TemplateComparison:
    dedicated: CostEstimate
    colocated: CostEstimate
    bandwidth: float

    @property
    def ratio(self) -> float:
        return self.colocated.throughput / self.dedicated.throughput

    @property
    def resource_penalty(self) -> float:
        return colocation_penalty(self.dedicated, self.colocated)


def compare_serving(workload: DrlWorkload, total_resource: float, params: ModelParams = ModelParams(),
                    bandwidth: float | None = None) -> TemplateComparison:
    tdg = serving_cost(TemplateKind.TDG, workload, params.units_per_gpu)
    tcg = serving_cost(TemplateKind.TCG, workload, params.units_per_gpu)
    if bandwidth is None:
        bandwidth = calibrated_bandwidth(tdg, workload.t_s + workload.t_a, params.serving_comm_factor)
    return TemplateComparison(
        _with_top(tdg, serving_throughput(tdg, workload, total_resource, bandwidth)),
        _with_top(tcg, serving_throughput(tcg, workload, total_resource, bandwidth)),
        bandwidth,
    )


def compare_training(workload: DrlWorkload, total_resource: float, n_gmis: int,
                     params: ModelParams = ModelParams(), bandwidth: float | None = None) -> TemplateComparison:
    tdg = training_cost(TemplateKind.TDG_EX, workload, n_gmis, params.units_per_gpu)
    tcg = training_cost(TemplateKind.TCG_EX, workload, n_gmis, params.units_per_gpu)
    if bandwidth is None:
        iteration = workload.t_s + workload.t_a + workload.t_t
        bandwidth = calibrated_bandwidth(tdg, iteration, params.training_comm_factor)
    return TemplateComparison(
        _with_top(tdg, training_throughput(tdg, workload, total_resource, bandwidth)),
        _with_top(tcg, training_throughput(tcg, workload, total_resource, bandwidth)),
        bandwidth,
    )


def _with_top(cost: CostEstimate, top: float) -> CostEstimate:
    return CostEstimate(cost.template, cost.resource_size, cost.comm_size, top)


def select_template(mode) -> TemplateKind:
    return {
        Mode.SERVING: TemplateKind.TCG,
        Mode.SYNC_TRAIN: TemplateKind.TCG_EX,
        Mode.ASYNC_TRAIN: TemplateKind.ASYNC_DECOUPLED,
    }[Mode(mode)]


@dataclass(frozen=True)
class MappingPlan:
    template: TemplateKind
    gmi_assignments: Mapping[int, frozenset[Role]]
    gpu_layout: Mapping[int, tuple[int, ...]]
    topology: Topology = field(repr=False)
    serving_gpus: frozenset[int] = frozenset()
    training_gpus: frozenset[int] = frozenset()

    def gmis_with(self, role: Role) -> list[int]:
        return sorted(g for g, roles in self.gmi_assignments.items() if role in roles)

    def mpl(self, role: Role | None = None) -> list[list[int]]:
        """Per-GPU GMI lists, optionally restricted to GMIs hosting ``role``."""
        out = []
        for gpu_id in sorted(self.gpu_layout):
            ids = [g for g in self.gpu_layout[gpu_id] if role is None or role in self.gmi_assignments[g]]
            if ids:
                out.append(ids)
        return out

    def to_dict(self) -> dict:
        return {
            "template": self.template.value,
            "gpu_layout": {str(k): list(v) for k, v in sorted(self.gpu_layout.items())},
            "gmi_assignments": {str(k): sorted(r.value for r in v) for k, v in sorted(self.gmi_assignments.items())},
            "serving_gpus": sorted(self.serving_gpus),
            "training_gpus": sorted(self.training_gpus),
        }


def build_plan(template, topology: Topology, workload: DrlWorkload, gmis_per_gpu: int,
               serving_ratio: tuple[int, int] = (1, 1)) -> MappingPlan:
    """Lay ``template`` onto ``topology`` with ``gmis_per_gpu`` equal GMIs per GPU.

    Existing partitions of ``topology`` are replaced by the uniform layout; its
    GPUs and bandwidths are kept.
    """
    template = TemplateKind(template)
    if gmis_per_gpu < 1:
        raise PlanError(f"gmis_per_gpu must be >= 1, got {gmis_per_gpu}")
    report = validate_layout(topology)
    if not report.ok:
        raise PlanError("layout does not validate: " + "; ".join(map(str, report.violations)))
    gpus = sorted(topology.gpus, key=lambda g: g.id)
    if not gpus:
        raise PlanError("topology has no GPUs")

    serving = template in (TemplateKind.TDG, TemplateKind.TCG)
    backend = Backend.MIG if serving and all(g.arch is Arch.SM80 for g in gpus) else Backend.MPS
    try:
        parts = uniform_partitions(gpus, gmis_per_gpu, backend)
    except ValueError as e:
        raise PlanError(str(e)) from None
    materialized = Topology(tuple(gpus), parts, topology.b1, topology.b2)
    layout = {g.id: tuple(p.gmi_id for p in parts if p.gpu_id == g.id) for g in gpus}

    assignments: dict[int, frozenset[Role]] = {}
    serving_gpus: frozenset[int] = frozenset()
    training_gpus: frozenset[int] = frozenset()
    if template in (TemplateKind.TCG, TemplateKind.TCG_EX):
        roles = frozenset(SERVING_ROLES if template is TemplateKind.TCG else TRAINING_ROLES)
        assignments = {gmi: roles for ids in layout.values() for gmi in ids}
    elif template in (TemplateKind.TDG, TemplateKind.TDG_EX):
        cycle = SERVING_ROLES if template is TemplateKind.TDG else TRAINING_ROLES
        if gmis_per_gpu < len(cycle):
            raise PlanError(f"{template.value} needs at least {len(cycle)} GMIs per GPU, got {gmis_per_gpu}")
        for ids in layout.values():
            for i, gmi in enumerate(ids):
                assignments[gmi] = frozenset([cycle[i % len(cycle)]])
    else:
        if len(gpus) < 2:
            raise PlanError(f"not enough GPUs for a serving/training split: need 2, have {len(gpus)}")
        s, t = serving_ratio
        if s < 1 or t < 1:
            raise PlanError("serving_ratio entries must be >= 1")
        n_serving = min(max(round(len(gpus) * s / (s + t)), 1), len(gpus) - 1)
        serving_gpus = frozenset(g.id for g in gpus[:n_serving])
        training_gpus = frozenset(g.id for g in gpus[n_serving:])
        for gpu_id, ids in layout.items():
            roles = frozenset(SERVING_ROLES) if gpu_id in serving_gpus else frozenset([Role.TRAINER])
            for gmi in ids:
                assignments[gmi] = roles

    return MappingPlan(template, assignments, layout, materialized, serving_gpus, training_gpus)


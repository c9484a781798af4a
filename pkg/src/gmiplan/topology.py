"""GPUs, interconnects and sub-GPU instances (GMIs).

A GMI is either an MPS client share (any fraction of the SMs) or a MIG
instance drawn from the fixed A100 profile list.  ``validate_layout``
reports rule violations as data so callers can print all of them at once.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Iterable, Sequence


class Arch(str, Enum):
    SM70 = "SM70"
    SM80 = "SM80"


class Backend(str, Enum):
    MPS = "MPS"
    MIG = "MIG"


class TaskMode(str, Enum):
    TRAINING = "training"
    SERVING = "serving"


# name -> (compute units out of 8, memory GB)
MIG_PROFILES: dict[str, tuple[int, int]] = {
    "1g.5gb": (1, 5),
    "2g.10gb": (2, 10),
    "3g.20gb": (3, 20),
    "4g.20gb": (4, 20),
    "7g.40gb": (7, 40),
}

MIG_RESERVED_UNITS = 1

# Bandwidth returned for a GMI talking to itself: transfers cost nothing.
INTRA = math.inf

DEFAULT_B1 = 1.0
DEFAULT_B2 = 30.0


@dataclass(frozen=True)
class GpuSpec:
    id: int
    arch: Arch = Arch.SM80
    sm_units: int = 8
    mem_gb: float = 40.0

    def __post_init__(self):
        object.__setattr__(self, "arch", Arch(self.arch))
        if self.sm_units < 1:
            raise ValueError(f"GPU {self.id}: sm_units must be >= 1, got {self.sm_units}")
        if not self.mem_gb > 0:
            raise ValueError(f"GPU {self.id}: mem_gb must be positive, got {self.mem_gb}")

    def usable_units(self, backend: Backend) -> int:
        if self.arch is Arch.SM80 and Backend(backend) is Backend.MIG:
            return self.sm_units - MIG_RESERVED_UNITS
        return self.sm_units


@dataclass(frozen=True)
class GmiPartition:
    gmi_id: int
    gpu_id: int
    backend: Backend
    sm_share: Fraction
    mem_gb: float

    def __post_init__(self):
        object.__setattr__(self, "backend", Backend(self.backend))
        share = Fraction(self.sm_share).limit_denominator(10**6)
        if not 0 < share <= 1:
            raise ValueError(f"GMI {self.gmi_id}: sm_share must be in (0, 1], got {self.sm_share}")
        object.__setattr__(self, "sm_share", share)

    @classmethod
    def mig(cls, gmi_id: int, gpu_id: int, profile: str, sm_units: int = 8) -> "GmiPartition":
        try:
            units, mem = MIG_PROFILES[profile]
        except KeyError:
            raise ValueError(f"unknown MIG profile {profile!r}; expected one of {sorted(MIG_PROFILES)}") from None
        return cls(gmi_id, gpu_id, Backend.MIG, Fraction(units, sm_units), float(mem))

    @classmethod
    def mps(cls, gmi_id: int, gpu_id: int, share, mem_gb: float) -> "GmiPartition":
        return cls(gmi_id, gpu_id, Backend.MPS, Fraction(share), float(mem_gb))

    def mig_profile(self, sm_units: int = 8) -> str | None:
        """Profile name matching this partition, or None if it is not a MIG profile."""
        units = self.sm_share * sm_units
        for name, (k, mem) in MIG_PROFILES.items():
            if units == k and math.isclose(self.mem_gb, mem):
                return name
        return None


@dataclass(frozen=True)
class Violation:
    gpu_id: int | None
    rule: str
    message: str

    def __str__(self):
        where = f"GPU {self.gpu_id}" if self.gpu_id is not None else "topology"
        return f"{where}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok


@dataclass(frozen=True)
class Topology:
    gpus: tuple[GpuSpec, ...]
    partitions: tuple[GmiPartition, ...] = ()
    b1: float = DEFAULT_B1
    b2: float = DEFAULT_B2
    _by_gmi: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "gpus", tuple(self.gpus))
        object.__setattr__(self, "partitions", tuple(self.partitions))
        if not (self.b1 > 0 and self.b2 > 0):
            raise ValueError(f"bandwidths must be positive, got b1={self.b1} b2={self.b2}")
        object.__setattr__(self, "_by_gmi", {p.gmi_id: p for p in self.partitions})

    @classmethod
    def uniform(
        cls,
        num_gpus: int,
        gmis_per_gpu: int,
        backend: Backend = Backend.MPS,
        arch: Arch = Arch.SM80,
        b1: float = DEFAULT_B1,
        b2: float = DEFAULT_B2,
    ) -> "Topology":
        """Equal partitions on every GPU, GMI ids numbered GPU-major."""
        gpus = tuple(GpuSpec(i, arch) for i in range(num_gpus))
        return cls(gpus, uniform_partitions(gpus, gmis_per_gpu, backend), b1, b2)

    def gpu(self, gpu_id: int) -> GpuSpec:
        for g in self.gpus:
            if g.id == gpu_id:
                return g
        raise KeyError(f"unknown GPU id {gpu_id}")

    def partition(self, gmi_id: int) -> GmiPartition:
        try:
            return self._by_gmi[gmi_id]
        except KeyError:
            raise KeyError(f"unknown GMI id {gmi_id}") from None

    def gpu_of(self, gmi_id: int) -> int:
        return self.partition(gmi_id).gpu_id

    def mpl(self) -> list[list[int]]:
        """GMI ids grouped per GPU, in GPU order, ids ascending; GPUs without GMIs are skipped."""
        per_gpu: dict[int, list[int]] = defaultdict(list)
        for p in self.partitions:
            per_gpu[p.gpu_id].append(p.gmi_id)
        return [sorted(per_gpu[g.id]) for g in self.gpus if per_gpu.get(g.id)]

    def with_bandwidths(self, b1: float | None = None, b2: float | None = None) -> "Topology":
        return Topology(self.gpus, self.partitions, self.b1 if b1 is None else b1, self.b2 if b2 is None else b2)


def uniform_partitions(gpus: Sequence[GpuSpec], gmis_per_gpu: int, backend: Backend) -> tuple[GmiPartition, ...]:
    """``gmis_per_gpu`` equal GMIs per GPU.

    MIG picks the largest profile that fits ``gmis_per_gpu`` times; more than
    the usable unit count cannot be expressed and raises ValueError.
    """
    if gmis_per_gpu < 1:
        raise ValueError(f"gmis_per_gpu must be >= 1, got {gmis_per_gpu}")
    backend = Backend(backend)
    parts = []
    gmi_id = 0
    for gpu in gpus:
        if backend is Backend.MIG:
            usable = gpu.usable_units(backend)
            fitting = [(k, name) for name, (k, _) in MIG_PROFILES.items() if k * gmis_per_gpu <= usable]
            if not fitting:
                raise ValueError(f"{gmis_per_gpu} MIG instances do not fit on GPU {gpu.id} ({usable} usable units)")
            profile = max(fitting)[1]
        for _ in range(gmis_per_gpu):
            if backend is Backend.MIG:
                parts.append(GmiPartition.mig(gmi_id, gpu.id, profile, gpu.sm_units))
            else:
                parts.append(GmiPartition.mps(gmi_id, gpu.id, Fraction(1, gmis_per_gpu), gpu.mem_gb / gmis_per_gpu))
            gmi_id += 1
    return tuple(parts)


def validate_layout(topology: Topology) -> ValidationReport:
    violations: list[Violation] = []
    gpu_ids = {g.id for g in topology.gpus}
    if len(gpu_ids) != len(topology.gpus):
        violations.append(Violation(None, "duplicate-gpu", "duplicate GPU ids"))

    seen: dict[int, int] = defaultdict(int)
    for p in topology.partitions:
        seen[p.gmi_id] += 1
    for gmi_id in sorted(k for k, n in seen.items() if n > 1):
        violations.append(Violation(None, "duplicate-gmi", f"GMI id {gmi_id} used {seen[gmi_id]} times"))

    per_gpu: dict[int, list[GmiPartition]] = defaultdict(list)
    for p in topology.partitions:
        if p.gpu_id not in gpu_ids:
            violations.append(Violation(p.gpu_id, "unknown-gpu", f"GMI {p.gmi_id} references missing GPU {p.gpu_id}"))
        else:
            per_gpu[p.gpu_id].append(p)

    for gpu in topology.gpus:
        violations.extend(_check_gpu(gpu, per_gpu.get(gpu.id, [])))

    violations.sort(key=lambda v: (v.gpu_id is not None, v.gpu_id or 0, v.rule, v.message))
    return ValidationReport(tuple(violations))


def _check_gpu(gpu: GpuSpec, parts: Iterable[GmiPartition]) -> list[Violation]:
    parts = sorted(parts, key=lambda p: p.gmi_id)
    if not parts:
        return []
    out = []
    backends = {p.backend for p in parts}
    if len(backends) > 1:
        out.append(Violation(gpu.id, "mixed-backend", "mixes MPS and MIG partitions"))
        return out
    backend = backends.pop()

    if backend is Backend.MIG:
        if gpu.arch is not Arch.SM80:
            out.append(Violation(gpu.id, "backend-unavailable", f"MIG is not available on {gpu.arch.value}"))
        units = 0
        for p in parts:
            if p.mig_profile(gpu.sm_units) is None:
                out.append(Violation(gpu.id, "mig-profile",
                                     f"GMI {p.gmi_id} ({p.sm_share} SMs, {p.mem_gb:g} GB) is not an allowed MIG profile"))
            units += p.sm_share * gpu.sm_units
        usable = gpu.usable_units(Backend.MIG)
        if units > usable:
            out.append(Violation(gpu.id, "mig-units", f"{units} units exceeds {usable} usable units"))
    else:
        total = sum((p.sm_share for p in parts), Fraction(0))
        if total > 1:
            out.append(Violation(gpu.id, "mps-share", f"MPS shares sum to {float(total):.4g} > 1"))
        mem = sum(p.mem_gb for p in parts)
        if mem > gpu.mem_gb * (1 + 1e-12):
            out.append(Violation(gpu.id, "memory", f"{mem:g} GB allocated exceeds {gpu.mem_gb:g} GB"))
    return out


def select_backend(arch, task_mode) -> Backend:
    try:
        arch = Arch(arch)
    except ValueError:
        raise ValueError(f"unsupported arch {arch!r}; expected SM70 or SM80") from None
    mode = TaskMode(task_mode)
    if arch is Arch.SM70:
        return Backend.MPS
    return Backend.MIG if mode is TaskMode.SERVING else Backend.MPS


def path_bandwidth(topology: Topology, src_gmi: int, dst_gmi: int) -> float:
    """Bandwidth between two GMIs: INTRA for the same GMI, b1 on one GPU, b2 across GPUs."""
    src = topology.partition(src_gmi)
    dst = topology.partition(dst_gmi)
    if src.gmi_id == dst.gmi_id:
        return INTRA
    # memory isolation forces a host bounce even on the same device
    if src.gpu_id == dst.gpu_id:
        return topology.b1
    return topology.b2

"""Profiling-driven search over ``(num_env, gmis_per_gpu)``.

``explore`` walks GMI sizes from small to large (10 GMIs per GPU down to 1)
and, for each, grows ``num_env`` until throughput saturates relative to
memory growth.  Profiling is delegated to a ``Profiler``: the synthetic
model needs no hardware, and ``TraceProfiler`` replays measurements from a
file.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

from .reduction import GmiLayout, predict_latency, select_strategy
from .topology import DEFAULT_B1, DEFAULT_B2
from .workload import BENCHMARKS, DrlWorkload, load_benchmark

NUM_ENV_GRID = tuple(128 * 2 ** i for i in range(8))  # 128 .. 16384
GMIS_PER_GPU_RANGE = tuple(range(10, 0, -1))
DEFAULT_SAT_THRESHOLD = 0.1
# bytes * (time unit / byte) scaling of reduction latency into workload time units
DEFAULT_LATENCY_SCALE = 1e6


@dataclass(frozen=True)
class ProfileResult:
    runnable: bool
    top: float | None = None
    mem: float | None = None

    def __post_init__(self):
        if self.runnable:
            if self.top is None or self.mem is None or self.top < 0 or self.mem < 0:
                raise ValueError("runnable results need non-negative top and mem")
        elif self.top is not None or self.mem is not None:
            raise ValueError("non-runnable results carry no measurements")


NOT_RUNNABLE = ProfileResult(False)


class Profiler(Protocol):
    def profile(self, bench: str, gmis_per_gpu: int, num_env: int) -> ProfileResult: ...


@dataclass(frozen=True)
class SearchConfig:
    num_env_grid: tuple[int, ...] = NUM_ENV_GRID
    gmis_per_gpu_range: tuple[int, ...] = GMIS_PER_GPU_RANGE
    sat_threshold: float = DEFAULT_SAT_THRESHOLD
    b1: float = DEFAULT_B1
    b2: float = DEFAULT_B2
    latency_scale: float = DEFAULT_LATENCY_SCALE

    def __post_init__(self):
        object.__setattr__(self, "num_env_grid", tuple(self.num_env_grid))
        object.__setattr__(self, "gmis_per_gpu_range", tuple(self.gmis_per_gpu_range))
        if not self.num_env_grid or not self.gmis_per_gpu_range:
            raise ValueError("search grids must be non-empty")
        if not 0 < self.sat_threshold < 1:
            raise ValueError("sat_threshold must be in (0, 1)")
        if not (self.b1 > 0 and self.b2 > 0 and self.latency_scale > 0):
            raise ValueError("b1, b2 and latency_scale must be positive")


@dataclass(frozen=True)
class SyntheticCostModel:
    """Desk-scale stand-in for profiling one benchmark on equal GMIs.

    A GMI with SM share ``s = 1 / gmis_per_gpu`` tops out at
    ``min(gpu_top * s, process_top)``: small GMIs are compute bound, large ones
    are limited by what a single process can drive.  Throughput rises
    linearly in ``num_env`` up to ``knee_env`` and stays flat after it, and
    memory grows as ``base_mem + mem_per_env * num_env``.  A point is
    runnable when ``s >= min_share`` and the memory fits in ``gpu_mem * s``.
    """

    gpu_top: float = 1.0e5
    process_top: float = 4.0e4
    knee_env: int = 4096
    base_mem: float = 0.5
    mem_per_env: float = 0.002
    gpu_mem: float = 40.0
    min_share: float = 0.125

    def __post_init__(self):
        if not (self.gpu_top > 0 and self.process_top > 0 and self.knee_env > 0):
            raise ValueError("gpu_top, process_top and knee_env must be positive")
        if not (self.base_mem >= 0 and self.mem_per_env > 0 and self.gpu_mem > 0):
            raise ValueError("memory parameters must be positive")

    def cap(self, gmis_per_gpu: int) -> float:
        return min(self.gpu_top / gmis_per_gpu, self.process_top)

    def throughput(self, gmis_per_gpu: int, num_env: int) -> float:
        return self.cap(gmis_per_gpu) * min(num_env, self.knee_env) / self.knee_env

    def memory(self, num_env: int) -> float:
        return self.base_mem + self.mem_per_env * num_env

    def runnable(self, gmis_per_gpu: int, num_env: int) -> bool:
        share = 1.0 / gmis_per_gpu
        return share >= self.min_share and self.memory(num_env) <= self.gpu_mem * share

    def profile(self, bench: str, gmis_per_gpu: int, num_env: int) -> ProfileResult:
        if bench not in BENCHMARKS:
            raise KeyError(f"unknown benchmark {bench!r}")
        if not self.runnable(gmis_per_gpu, num_env):
            return NOT_RUNNABLE
        return ProfileResult(True, self.throughput(gmis_per_gpu, num_env), self.memory(num_env))


class TraceProfiler:
    """Replays measurements from a CSV of ``bench,gmis_per_gpu,num_env,runnable,top,mem``.

    A header row and ``#`` comments are allowed.  Points missing from the
    file are treated as not runnable.
    """

    def __init__(self, rows: dict[tuple[str, int, int], ProfileResult]):
        self.rows = rows

    @classmethod
    def from_file(cls, path) -> "TraceProfiler":
        rows: dict[tuple[str, int, int], ProfileResult] = {}
        with open(path, newline="") as f:
            lines = [ln for ln in f if ln.strip() and not ln.lstrip().startswith("#")]
        for lineno, rec in enumerate(csv.reader(lines), start=1):
            rec = [x.strip() for x in rec]
            if rec and rec[0].lower() == "bench":
                continue
            if len(rec) < 4:
                raise ValueError(f"{path}: row {lineno}: expected bench,gmis_per_gpu,num_env,runnable[,top,mem]")
            bench, gpg, env, ok = rec[:4]
            try:
                runnable = ok.lower() in ("1", "true", "yes", "y")
                key = (bench, int(gpg), int(env))
                if runnable:
                    rows[key] = ProfileResult(True, float(rec[4]), float(rec[5]))
                else:
                    rows[key] = NOT_RUNNABLE
            except (ValueError, IndexError) as e:
                raise ValueError(f"{path}: row {lineno}: {e}") from None
        return cls(rows)

    def profile(self, bench: str, gmis_per_gpu: int, num_env: int) -> ProfileResult:
        return self.rows.get((bench, gmis_per_gpu, num_env), NOT_RUNNABLE)


def saturation(top: float, pre_top: float, mem: float, pre_mem: float) -> float:
    """Relative throughput gain divided by relative memory growth.

    No memory growth gives ``inf`` when throughput still grew and 0 otherwise.
    """
    if not (pre_top > 0 and pre_mem > 0):
        raise ValueError("previous top and mem must be positive; initialize trackers on the first runnable point")
    r_top = (top - pre_top) / pre_top
    r_mem = (mem - pre_mem) / pre_mem
    if r_mem <= 0:
        return math.inf if r_top > 0 else 0.0
    return r_top / r_mem


def comm_discount(workload: DrlWorkload, gmis_per_gpu: int, num_gpu: int,
                  b1: float = DEFAULT_B1, b2: float = DEFAULT_B2,
                  latency_scale: float = DEFAULT_LATENCY_SCALE) -> float:
    """Fraction of an iteration left for compute after gradient reduction."""
    layout = GmiLayout.uniform(num_gpu, gmis_per_gpu)
    strategy = select_strategy(layout)
    latency = predict_latency(strategy, num_gpu, gmis_per_gpu, workload.model_size, b1, b2)
    iteration = workload.t_s + workload.t_a + workload.t_t
    return iteration / (iteration + latency / latency_scale)


def estimate_system_throughput(gmis_per_gpu: int, num_gpu: int, per_gmi_top: float,
                               workload: DrlWorkload | None = None, b1: float = DEFAULT_B1,
                               b2: float = DEFAULT_B2, latency_scale: float = DEFAULT_LATENCY_SCALE) -> float:
    """Linear GMI scaling damped by reduction latency; no workload means free communication."""
    if gmis_per_gpu < 1 or num_gpu < 1 or per_gmi_top < 0:
        raise ValueError("gmis_per_gpu and num_gpu must be >= 1 and per_gmi_top >= 0")
    discount = 1.0
    if workload is not None:
        discount = comm_discount(workload, gmis_per_gpu, num_gpu, b1, b2, latency_scale)
    return per_gmi_top * gmis_per_gpu * num_gpu * discount


@dataclass(frozen=True)
class VisitedPoint:
    gmis_per_gpu: int
    num_env: int
    runnable: bool
    top: float | None
    mem: float | None
    sat: float | None
    acc_top: float | None
    action: str  # skip | init | prune | estimate

    def to_dict(self) -> dict:
        return {k: (None if isinstance(v, float) and math.isinf(v) else v)
                for k, v in self.__dict__.items()} | {"sat_inf": self.sat is not None and math.isinf(self.sat)}


@dataclass(frozen=True)
class SearchResult:
    feasible: bool
    num_env: int | None
    gmis_per_gpu: int | None
    throughput: float | None
    visited: tuple[VisitedPoint, ...] = field(default=())
    fallback: bool = False

    @property
    def config(self) -> tuple[int, int] | None:
        return (self.num_env, self.gmis_per_gpu) if self.feasible else None

    def to_dict(self) -> dict:
        return {
            "feasible": self.feasible,
            "num_env": self.num_env,
            "gmis_per_gpu": self.gmis_per_gpu,
            "throughput": self.throughput,
            "fallback": self.fallback,
            "visited": [v.to_dict() for v in self.visited],
        }


def explore(bench: str, num_gpu: int, config: SearchConfig = SearchConfig(),
            profiler: Profiler | None = None, workload: DrlWorkload | None = None) -> SearchResult:
    if num_gpu < 1:
        raise ValueError("num_gpu must be >= 1")
    profiler = profiler or SyntheticCostModel()
    if workload is None:
        workload = load_benchmark(bench)

    def estimate(gpg, top):
        return estimate_system_throughput(gpg, num_gpu, top, workload, config.b1, config.b2, config.latency_scale)

    best: tuple[int, int] | None = None
    max_top = -math.inf
    visited: list[VisitedPoint] = []
    inits: list[tuple[int, int, float]] = []
    for gpg in config.gmis_per_gpu_range:
        pre_top = pre_mem = 0.0
        for num_env in config.num_env_grid:
            res = profiler.profile(bench, gpg, num_env)
            if not res.runnable:
                visited.append(VisitedPoint(gpg, num_env, False, None, None, None, None, "skip"))
                continue
            if pre_top == 0 and pre_mem == 0:
                pre_top, pre_mem = res.top, res.mem
                visited.append(VisitedPoint(gpg, num_env, True, res.top, res.mem, None, None, "init"))
                inits.append((gpg, num_env, res.top))
                continue
            sat = saturation(res.top, pre_top, res.mem, pre_mem)
            pre_top, pre_mem = res.top, res.mem
            if sat < config.sat_threshold:
                visited.append(VisitedPoint(gpg, num_env, True, res.top, res.mem, sat, None, "prune"))
                break
            acc = estimate(gpg, res.top)
            visited.append(VisitedPoint(gpg, num_env, True, res.top, res.mem, sat, acc, "estimate"))
            if acc > max_top:
                max_top = acc
                best = (num_env, gpg)

    if best is not None:
        return SearchResult(True, best[0], best[1], max_top, tuple(visited))
    # Nothing passed the saturation check; fall back to the best tracker-initialization point.
    fallback = None
    for gpg, num_env, top in inits:
        acc = estimate(gpg, top)
        if acc > max_top:
            max_top, fallback = acc, (num_env, gpg)
    if fallback is not None:
        return SearchResult(True, fallback[0], fallback[1], max_top, tuple(visited), fallback=True)
    return SearchResult(False, None, None, None, tuple(visited))

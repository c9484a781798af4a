"""Sectioned key/value run configuration.

Example::

    [topology]
    arch = SM80
    gpus = 2
    b1 = 1.0
    b2 = 30.0
    # either equal GMIs per GPU ...
    gmis_per_gpu = 2
    backend = MPS
    # ... or explicit partitions: "gmi gpu MIG profile" or "gmi gpu MPS share mem_gb"
    partitions =
        0 0 MIG 3g.20gb
        1 0 MIG 3g.20gb

    [workload]
    name = AT

    [model]
    serving_comm_factor = 2.0
    overhead = 0.05

    [search]
    sat_threshold = 0.1
    trace = measurements.csv
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

from .channels import PipelineConfig
from .mapping import ModelParams
from .search import DEFAULT_LATENCY_SCALE, SearchConfig
from .topology import Arch, Backend, GmiPartition, GpuSpec, Topology, uniform_partitions
from .workload import BENCHMARKS, DrlWorkload, load_benchmark

SECTIONS = ("topology", "workload", "model", "search")


class ConfigError(Exception):
    """Malformed configuration; the message names the file, section and key."""


class ConfigNotFound(ConfigError):
    pass


@dataclass(frozen=True)
class RunConfig:
    topology: Topology
    workload: DrlWorkload
    model: ModelParams = ModelParams()
    pipeline: PipelineConfig = PipelineConfig()
    search: SearchConfig = SearchConfig()
    gmis_per_gpu: int = 1
    trace_path: Path | None = None
    element_size: int = 4
    source: str = "<defaults>"
    extra: dict = field(default_factory=dict)


def default_topology() -> Topology:
    return Topology.uniform(1, 1)


def _read(path) -> configparser.ConfigParser:
    path = Path(path)
    if not path.is_file():
        raise ConfigNotFound(f"config not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=(";",), interpolation=None)
    try:
        cp.read_string(path.read_text(), source=str(path))
    except configparser.Error as e:
        raise ConfigError(str(e)) from None
    unknown = [s for s in cp.sections() if s not in SECTIONS]
    if unknown:
        raise ConfigError(f"{path}: unknown section(s) {unknown}; expected {list(SECTIONS)}")
    return cp


class _Section:
    def __init__(self, cp: configparser.ConfigParser, name: str, source: str):
        self.items = dict(cp[name]) if cp.has_section(name) else {}
        self.name = name
        self.source = source
        self.used: set[str] = set()

    def _where(self, key):
        return f"{self.source}: [{self.name}] {key}"

    def get(self, key, conv=str, default=None, positive=False):
        if key not in self.items:
            return default
        self.used.add(key)
        raw = self.items[key].strip()
        try:
            value = conv(raw)
        except (ValueError, KeyError) as e:
            raise ConfigError(f"{self._where(key)}: cannot parse {raw!r} ({e})") from None
        if positive and not value > 0:
            raise ConfigError(f"{self._where(key)}: must be positive, got {raw}")
        return value

    def check_unused(self, allowed):
        bad = sorted(set(self.items) - set(allowed))
        if bad:
            raise ConfigError(f"{self.source}: [{self.name}] unknown key(s) {bad}")


def _parse_partitions(sec: _Section, gpus: dict[int, GpuSpec]) -> tuple[GmiPartition, ...]:
    raw = sec.get("partitions")
    parts = []
    lines = [ln.strip() for ln in raw.splitlines() if ln.strip()]
    for i, line in enumerate(lines, start=1):
        fields = line.split()
        where = f"{sec._where('partitions')} entry {i} ({line!r})"
        try:
            gmi, gpu, backend = int(fields[0]), int(fields[1]), Backend(fields[2].upper())
            units = gpus[gpu].sm_units if gpu in gpus else 8
            if backend is Backend.MIG:
                if len(fields) != 4:
                    raise ValueError("expected: gmi gpu MIG profile")
                parts.append(GmiPartition.mig(gmi, gpu, fields[3], units))
            else:
                if len(fields) != 5:
                    raise ValueError("expected: gmi gpu MPS share mem_gb")
                parts.append(GmiPartition.mps(gmi, gpu, Fraction(fields[3]), float(fields[4])))
        except (ValueError, IndexError) as e:
            raise ConfigError(f"{where}: {e}") from None
    return tuple(parts)


def _topology(sec: _Section) -> tuple[Topology, int]:
    arch = sec.get("arch", lambda s: Arch(s.upper()), Arch.SM80)
    n = sec.get("gpus", int, 1, positive=True)
    sm_units = sec.get("sm_units", int, 8, positive=True)
    mem_gb = sec.get("mem_gb", float, 40.0, positive=True)
    b1 = sec.get("b1", float, 1.0, positive=True)
    b2 = sec.get("b2", float, 30.0, positive=True)
    gpus = tuple(GpuSpec(i, arch, sm_units, mem_gb) for i in range(n))
    if "partitions" in sec.items:
        parts = _parse_partitions(sec, {g.id: g for g in gpus})
        per_gpu: dict[int, int] = {}
        for p in parts:
            per_gpu[p.gpu_id] = per_gpu.get(p.gpu_id, 0) + 1
        gmis_per_gpu = sec.get("gmis_per_gpu", int, max(per_gpu.values(), default=1), positive=True)
    else:
        gmis_per_gpu = sec.get("gmis_per_gpu", int, 1, positive=True)
        backend = sec.get("backend", lambda s: Backend(s.upper()), Backend.MPS)
        try:
            parts = uniform_partitions(gpus, gmis_per_gpu, backend)
        except ValueError as e:
            raise ConfigError(f"{sec._where('gmis_per_gpu')}: {e}") from None
    sec.check_unused({"arch", "gpus", "sm_units", "mem_gb", "b1", "b2", "partitions", "gmis_per_gpu", "backend"})
    return Topology(gpus, parts, b1, b2), gmis_per_gpu


_WORKLOAD_KEYS = ("state_size", "action_size", "reward_size", "model_size", "steps_per_train", "alpha", "beta")


def _workload(sec: _Section, fallback: str = "AT") -> DrlWorkload:
    name = sec.get("name", str, fallback)
    if name in BENCHMARKS:
        base = load_benchmark(name)
    else:
        required = [k for k in ("state_size", "action_size", "reward_size", "model_size") if k not in sec.items]
        if required:
            raise ConfigError(f"{sec.source}: [workload] {name!r} is not a catalog benchmark; "
                              f"custom workloads need {required}")
        base = None
    overrides = {}
    for key in _WORKLOAD_KEYS:
        conv = int if key == "steps_per_train" else float
        value = sec.get(key, conv, positive=True)
        if value is not None:
            overrides[key] = value
    sec.check_unused({"name", *_WORKLOAD_KEYS})
    try:
        if base is None:
            return DrlWorkload(name=name, **overrides)
        return replace(base, **overrides)
    except ValueError as e:
        raise ConfigError(f"{sec.source}: [workload] {e}") from None


def load_workload(name_or_path: str) -> DrlWorkload:
    """A catalog name, or a path to a file with a [workload] section."""
    if name_or_path in BENCHMARKS:
        return load_benchmark(name_or_path)
    path = Path(name_or_path)
    if not path.suffix and not path.exists():
        raise ConfigError(f"unknown benchmark {name_or_path!r}; expected one of {sorted(BENCHMARKS)} or a file")
    cp = _read(path)
    return _workload(_Section(cp, "workload", str(path)))


def load_config(path=None, workload: str | None = None) -> RunConfig:
    if path is None:
        cp = configparser.ConfigParser()
        source = "<defaults>"
    else:
        cp = _read(path)
        source = str(path)
    topo_sec = _Section(cp, "topology", source)
    if cp.has_section("topology"):
        topology, gmis_per_gpu = _topology(topo_sec)
    else:
        topology, gmis_per_gpu = default_topology(), 1
    wl = load_workload(workload) if workload else _workload(_Section(cp, "workload", source))

    m = _Section(cp, "model", source)
    model = ModelParams(
        units_per_gpu=m.get("units_per_gpu", float, 10.0, positive=True),
        serving_comm_factor=m.get("serving_comm_factor", float, 2.0, positive=True),
        training_comm_factor=m.get("training_comm_factor", float, 7.0, positive=True),
    )
    try:
        pipeline = PipelineConfig(
            compress_threshold=m.get("compress_threshold", int, 16),
            batch_mode=m.get("batch_mode", str, "stack"),
            target_batch=m.get("target_batch", int, 32),
            overhead=m.get("overhead", float, 0.05),
            seed=m.get("seed", int, 0),
        )
    except ValueError as e:
        raise ConfigError(f"{source}: [model] {e}") from None
    element_size = m.get("element_size", int, 4, positive=True)
    latency_scale = m.get("latency_scale", float, DEFAULT_LATENCY_SCALE, positive=True)
    m.check_unused({"units_per_gpu", "serving_comm_factor", "training_comm_factor", "compress_threshold",
                    "batch_mode", "target_batch", "overhead", "seed", "element_size", "latency_scale"})

    s = _Section(cp, "search", source)
    try:
        search = SearchConfig(sat_threshold=s.get("sat_threshold", float, 0.1), b1=topology.b1, b2=topology.b2,
                              latency_scale=latency_scale)
    except ValueError as e:
        raise ConfigError(f"{source}: [search] {e}") from None
    trace = s.get("trace", str)
    trace_path = None
    if trace:
        trace_path = Path(trace)
        if not trace_path.is_absolute() and path is not None:
            trace_path = Path(path).parent / trace_path
    s.check_unused({"sat_threshold", "trace"})

    return RunConfig(topology, wl, model, pipeline, search, gmis_per_gpu, trace_path, element_size, source)

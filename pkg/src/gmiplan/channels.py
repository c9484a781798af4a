"""Channel-based experience sharing between agent and trainer GMIs.

Records flow through four stages: the dispenser splits each record into its
state/action/reward channels, the compressor concatenates ``threshold``
entries of a channel into one transfer unit, the migrator routes units to
trainers, and the batcher slices or stacks them into training batches.

Cost model: a unit of ``k`` records on channel ``c`` costs
``overhead + k * size_c / bandwidth``.  Cross-GMI copies are driven by the
agent process, so transfer time is spent on the agent's clock and slows
its prediction rate.  The uni-channel baseline sends every entry on its
own (threshold 1).
"""

from __future__ import annotations

import heapq
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import kernels
from .mapping import MappingPlan
from .topology import path_bandwidth
from .workload import DrlWorkload, Role


class Channel(str, Enum):
    STATE = "state"
    ACTION = "action"
    REWARD = "reward"


CHANNELS = (Channel.STATE, Channel.ACTION, Channel.REWARD)


class BatchMode(str, Enum):
    SLICE = "slice"
    STACK = "stack"


class PipelineError(ValueError):
    pass


@dataclass(frozen=True)
class ExperienceRecord:
    source: int
    seq: int
    state_size: float
    action_size: float
    reward_size: float

    def size(self, channel: Channel) -> float:
        return {Channel.STATE: self.state_size, Channel.ACTION: self.action_size,
                Channel.REWARD: self.reward_size}[channel]


@dataclass(frozen=True)
class ChannelEntry:
    channel: Channel
    source: int
    seq: int
    size: float


@dataclass(frozen=True)
class TransferUnit:
    channel: Channel
    src: int
    dst: int | None
    records: tuple[tuple[int, int], ...]  # (source, seq)
    record_size: float

    @property
    def count(self) -> int:
        return len(self.records)

    @property
    def payload(self) -> float:
        return self.count * self.record_size

    def routed(self, dst: int) -> "TransferUnit":
        return TransferUnit(self.channel, self.src, dst, self.records, self.record_size)


@dataclass(frozen=True)
class Batch:
    trainer: int
    records: tuple[tuple[int, int], ...]

    @property
    def size(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class PipelineConfig:
    compress_threshold: int = 16
    batch_mode: BatchMode = BatchMode.STACK
    target_batch: int = 32
    overhead: float = 0.05
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "batch_mode", BatchMode(self.batch_mode))
        if self.compress_threshold < 1:
            raise ValueError("compress_threshold must be >= 1")
        if self.target_batch < 1:
            raise ValueError("target_batch must be >= 1")
        if self.overhead < 0:
            raise ValueError("overhead must be >= 0")

    def uni_channel(self) -> "PipelineConfig":
        return PipelineConfig(1, self.batch_mode, self.target_batch, self.overhead, self.seed)


@dataclass(frozen=True)
class PipelineMetrics:
    pps: float
    ttop: float
    link_throughput: float
    records_dispensed: int
    records_trained: int
    units_sent: int
    trainer_loads: Mapping[int, int] = field(default_factory=dict)
    batches: int = 0
    serving_makespan: float = 0.0
    training_makespan: float = 0.0

    def to_dict(self) -> dict:
        return {
            "pps": self.pps,
            "ttop": self.ttop,
            "link_throughput": self.link_throughput,
            "records_dispensed": self.records_dispensed,
            "records_trained": self.records_trained,
            "units_sent": self.units_sent,
            "trainer_loads": {str(k): v for k, v in sorted(self.trainer_loads.items())},
            "batches": self.batches,
            "serving_makespan": self.serving_makespan,
            "training_makespan": self.training_makespan,
        }


def dispense(records: Iterable[ExperienceRecord]) -> dict[Channel, list[ChannelEntry]]:
    queues: dict[Channel, list[ChannelEntry]] = {c: [] for c in CHANNELS}
    for r in records:
        for c in CHANNELS:
            queues[c].append(ChannelEntry(c, r.source, r.seq, r.size(c)))
    return queues


def compress(queue: Sequence[ChannelEntry], threshold: int) -> list[TransferUnit]:
    """Group a channel queue into units of ``threshold`` entries per source; the tail is flushed."""
    if threshold < 1:
        raise ValueError("threshold must be >= 1")
    by_source: dict[int, list[ChannelEntry]] = defaultdict(list)
    for e in queue:
        by_source[e.source].append(e)
    units = []
    for src in sorted(by_source):
        entries = by_source[src]
        for i in range(0, len(entries), threshold):
            chunk = entries[i:i + threshold]
            units.append(TransferUnit(chunk[0].channel, src, None,
                                      tuple((e.source, e.seq) for e in chunk), chunk[0].size))
    return units


def transfer_time(count: int, record_size: float, bandwidth: float, overhead: float) -> float:
    return overhead + count * record_size / bandwidth


class Migrator:
    """Routes units to trainers: same-GPU trainers directly, others by least load."""

    def __init__(self, plan: MappingPlan):
        self.topology = plan.topology
        self.trainers = plan.gmis_with(Role.TRAINER)
        if not self.trainers:
            raise PipelineError("plan has no trainer GMIs")
        self.load: dict[int, int] = {t: 0 for t in self.trainers}

    def destination(self, src: int) -> int:
        gpu = self.topology.gpu_of(src)
        local = [t for t in self.trainers if self.topology.gpu_of(t) == gpu]
        candidates = local or self.trainers
        if src in candidates:
            return src
        return min(candidates, key=lambda t: (self.load[t], t))

    def route(self, src: int, count: int) -> int:
        dst = self.destination(src)
        self.load[dst] += count
        return dst

    def bandwidth(self, src: int) -> float:
        # every candidate for a given agent sits at the same path distance
        return path_bandwidth(self.topology, src, self.destination(src))


def migrate(units: Sequence[TransferUnit], plan: MappingPlan) -> list[TransferUnit]:
    """Route units in order.  Units covering the same records on other channels follow the first."""
    mg = Migrator(plan)
    decided: dict[tuple, int] = {}
    out = []
    for u in units:
        key = (u.src, u.records)
        if key not in decided:
            decided[key] = mg.route(u.src, u.count)
        out.append(u.routed(decided[key]))
    return out


def batch(units: Sequence[TransferUnit], mode, target_batch: int, trainer: int = -1) -> list[Batch]:
    """Slice units into batches of at most ``target_batch``, or stack them until reaching it.

    ``units`` are the per-record groups arriving at one trainer, in order;
    stacked leftovers are flushed at the end.
    """
    if target_batch < 1:
        raise ValueError("target_batch must be >= 1")
    mode = BatchMode(mode)
    out = []
    if mode is BatchMode.SLICE:
        for u in units:
            for i in range(0, u.count, target_batch):
                out.append(Batch(trainer, u.records[i:i + target_batch]))
        return out
    acc: list[tuple[int, int]] = []
    for u in units:
        acc.extend(u.records)
        if len(acc) >= target_batch:
            out.append(Batch(trainer, tuple(acc)))
            acc = []
    if acc:
        out.append(Batch(trainer, tuple(acc)))
    return out


def _batch_times(groups: Sequence[tuple[float, int]], mode: BatchMode, target: int) -> list[tuple[float, int]]:
    """(ready time, size) of the batches formed from arriving (time, size) groups."""
    out = []
    if mode is BatchMode.SLICE:
        for t, n in groups:
            full, rest = divmod(n, target)
            out.extend([(t, target)] * full)
            if rest:
                out.append((t, rest))
        return out
    acc = 0
    last = 0.0
    for t, n in groups:
        acc += n
        last = t
        if acc >= target:
            out.append((t, acc))
            acc = 0
    if acc:
        out.append((last, acc))
    return out


def simulate_pipeline(workload: DrlWorkload, plan: MappingPlan, config: PipelineConfig, duration: float,
                      backend: str | None = None) -> PipelineMetrics:
    """Run the pipeline for ``duration`` time units of agent production and drain it.

    Each agent GMI produces ``floor(duration / (T_s + T_a))`` records starting
    at a seeded random phase.  PPS is records over the serving makespan, TTOP
    is trained samples over the training makespan; both makespans include the
    drain.  Trainers spend ``T_t * size / target_batch`` per batch.
    """
    if not duration > 0:
        raise PipelineError(f"duration must be positive, got {duration}")
    agents = plan.gmis_with(Role.AGENT)
    if not agents:
        raise PipelineError("plan has no agent GMIs")
    mg = Migrator(plan)
    delta = workload.t_s + workload.t_a
    n_records = int(duration // delta)
    sizes = np.array([workload.state_size, workload.action_size, workload.reward_size])
    rng = np.random.default_rng(config.seed)
    phases = rng.uniform(0.0, delta, size=len(agents))

    # (arrival, agent, group index, size); routing follows arrival order
    ready: list[tuple[float, int, int, int]] = []
    serving_end = 0.0
    busy_total = 0.0
    units_sent = 0
    for agent, phase in zip(agents, phases):
        arrivals, counts, finish, busy = kernels.agent_timeline(
            n_records, delta, phase, config.compress_threshold, sizes, mg.bandwidth(agent), config.overhead,
            backend=backend)
        serving_end = max(serving_end, finish)
        busy_total += busy
        units_sent += len(arrivals) * len(CHANNELS)
        ready.extend((float(a), agent, i, int(n)) for i, (a, n) in enumerate(zip(arrivals, counts)))
    heapq.heapify(ready)

    per_trainer: dict[int, list[tuple[float, int]]] = defaultdict(list)
    while ready:
        arrival, agent, _, n = heapq.heappop(ready)
        per_trainer[mg.route(agent, n)].append((arrival, n))

    dispensed = n_records * len(agents)
    trained = 0
    n_batches = 0
    training_end = 0.0
    for trainer in sorted(per_trainer):
        batches = _batch_times(per_trainer[trainer], config.batch_mode, config.target_batch)
        if not batches:
            continue
        times = np.array([b[0] for b in batches])
        costs = np.array([workload.t_t * b[1] / config.target_batch for b in batches])
        finish = kernels.fifo_service(times, costs, backend=backend)
        training_end = max(training_end, float(finish[-1]))
        trained += sum(b[1] for b in batches)
        n_batches += len(batches)

    return PipelineMetrics(
        pps=dispensed / serving_end if serving_end > 0 else 0.0,
        ttop=trained / training_end if training_end > 0 else 0.0,
        link_throughput=dispensed / busy_total if busy_total > 0 else 0.0,
        records_dispensed=dispensed,
        records_trained=trained,
        units_sent=units_sent,
        trainer_loads=dict(mg.load),
        batches=n_batches,
        serving_makespan=float(serving_end),
        training_makespan=training_end,
    )


def run_records(workload: DrlWorkload, plan: MappingPlan, config: PipelineConfig,
                records_per_agent: int) -> dict[int, list[Batch]]:
    """Record-level run of all four stages, returning the batches per trainer.

    Units are processed in production order (round-robin over agents), which
    is what the timed simulation does when agents run in lockstep.
    """
    agents = plan.gmis_with(Role.AGENT)
    records = [ExperienceRecord(a, s, workload.state_size, workload.action_size, workload.reward_size)
               for s in range(records_per_agent) for a in agents]
    queues = dispense(records)
    per_channel = {c: compress(queues[c], config.compress_threshold) for c in CHANNELS}
    # interleave so each group's channel units travel together, in production order
    groups = sorted(zip(*(per_channel[c] for c in CHANNELS)), key=lambda g: (g[0].records[-1][1], g[0].src))
    routed = migrate([u for g in groups for u in g], plan)
    arrived: dict[int, list[TransferUnit]] = defaultdict(list)
    for u in routed:
        if u.channel is Channel.STATE:
            arrived[u.dst].append(u)
    return {t: batch(arrived[t], config.batch_mode, config.target_batch, t) for t in sorted(arrived)}

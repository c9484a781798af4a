"""Gradient reduction across GMIs: strategy selection, latency model and simulation.

Three strategies are modelled:

* MPR stages every buffer through host memory and runs one ring over all
  GMIs at host-bounce bandwidth ``b1``.
* MRR forms one ring per GMI column (one GMI per GPU) over the inter-GPU
  links at ``b2``; the rings share those links and so run one after another,
  then a synchronization ring spanning every GPU combines the ring results.
* HAR reduces among colocated GMIs through the host first, then runs one
  inter-GPU ring among per-GPU leaders.

Each run records a step-indexed trace.  Under the ideal link model (no
contention, transfers in one step concurrent, steps sequential) the trace
latency equals ``predict_latency``.  The closing broadcast is traced but kept
out of the latency.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import kernels
from .topology import DEFAULT_B1, DEFAULT_B2, Topology


class Strategy(str, Enum):
    MPR = "MPR"
    MRR = "MRR"
    HAR = "HAR"


class LinkKind(str, Enum):
    HOST_BOUNCE = "host_bounce"
    RING = "ring"
    LOCAL = "local_reduce"


class StrategyNotApplicable(ValueError):
    pass


@dataclass(frozen=True)
class GmiLayout:
    mpl: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        mpl = tuple(tuple(int(x) for x in ids) for ids in self.mpl)
        if not mpl:
            raise ValueError("layout needs at least one GPU")
        if any(not ids for ids in mpl):
            raise ValueError("every GPU in the layout needs at least one GMI")
        flat = [x for ids in mpl for x in ids]
        if len(set(flat)) != len(flat):
            raise ValueError("GMI ids in a layout must be unique")
        object.__setattr__(self, "mpl", mpl)

    @classmethod
    def of(cls, layout) -> "GmiLayout":
        if isinstance(layout, GmiLayout):
            return layout
        if isinstance(layout, Topology):
            return cls(layout.mpl())
        return cls(layout)

    @classmethod
    def uniform(cls, num_gpus: int, gmis_per_gpu: int) -> "GmiLayout":
        return cls(tuple(tuple(range(g * gmis_per_gpu, (g + 1) * gmis_per_gpu)) for g in range(num_gpus)))

    @property
    def num_gpus(self) -> int:
        return len(self.mpl)

    @property
    def gmis(self) -> list[int]:
        return [x for ids in self.mpl for x in ids]

    @property
    def is_uniform(self) -> bool:
        return len({len(ids) for ids in self.mpl}) == 1

    @property
    def max_per_gpu(self) -> int:
        return max(len(ids) for ids in self.mpl)

    def gpu_index(self) -> dict[int, int]:
        return {x: j for j, ids in enumerate(self.mpl) for x in ids}


@dataclass(frozen=True)
class TraceEvent:
    step: int
    phase: str
    src: int
    dst: int
    bytes: float
    link: LinkKind

    def to_dict(self) -> dict:
        return {"step": self.step, "phase": self.phase, "src": self.src, "dst": self.dst,
                "bytes": self.bytes, "link": self.link.value}


@dataclass(frozen=True)
class ReductionRun:
    strategy: Strategy
    result: np.ndarray
    latency: float
    trace: tuple[TraceEvent, ...]
    outputs: Mapping[int, np.ndarray]

    def trace_lines(self) -> list[str]:
        return [json.dumps(e.to_dict(), sort_keys=True) for e in self.trace]


def select_strategy(layout) -> Strategy:
    mpl = GmiLayout.of(layout).mpl
    if len(mpl) <= 1:
        return Strategy.MPR
    per_gpu = {len(ids) for ids in mpl}
    if len(per_gpu) > 1:
        return Strategy.HAR
    if per_gpu.pop() > len(mpl):
        return Strategy.HAR
    return Strategy.MRR


def is_applicable(strategy, layout) -> bool:
    strategy = Strategy(strategy)
    layout = GmiLayout.of(layout)
    if strategy is Strategy.MRR:
        return layout.is_uniform and layout.max_per_gpu <= layout.num_gpus
    return True


def predict_latency(strategy, g: int, t: int, m_p: float, b1: float, b2: float) -> float:
    """Closed-form reduction time for ``g`` GPUs with ``t`` GMIs each and an ``m_p``-byte model."""
    strategy = Strategy(strategy)
    if g < 1 or t < 1:
        raise ValueError("g and t must be >= 1")
    if not m_p > 0:
        raise ValueError("m_p must be positive")
    if strategy is Strategy.MPR:
        return 2 * (g * t - 1) * m_p / (g * t * b1)
    if strategy is Strategy.MRR:
        return 2 * (g - 1) * (t + 1) * m_p / (g * b2)
    return 2 * (g - 1) * m_p / (g * b2) + 2 * (t - 1) * m_p / (t * b1)


def layout_latency(strategy, layout, m_p: float, b1: float, b2: float) -> float:
    """``predict_latency`` generalized to uneven layouts.

    MPR rings over all GMIs; HAR is bounded by the most crowded GPU.
    """
    strategy = Strategy(strategy)
    layout = GmiLayout.of(layout)
    g = layout.num_gpus
    if strategy is Strategy.MPR:
        return predict_latency(strategy, 1, len(layout.gmis), m_p, b1, b2)
    if strategy is Strategy.MRR:
        _require_mrr(layout)
    return predict_latency(strategy, g, layout.max_per_gpu, m_p, b1, b2)


def leader_gmis(layout) -> list[int]:
    """One GMI per GPU: the first id with ``id % M == 0`` (M = GMIs on that GPU), else the smallest."""
    leaders = []
    for ids in GmiLayout.of(layout).mpl:
        m = len(ids)
        hits = [x for x in ids if x % m == 0]
        leaders.append(hits[0] if hits else min(ids))
    return leaders


def mrr_rings(layout) -> list[list[int]]:
    """Column rings: ring ``i`` takes the ``i``-th GMI of every GPU and ends on GPU ``i``."""
    layout = GmiLayout.of(layout)
    _require_mrr(layout)
    g = layout.num_gpus
    t = layout.max_per_gpu
    return [[layout.mpl[(i + 1 + j) % g][i] for j in range(g)] for i in range(t)]


def _require_mrr(layout: GmiLayout):
    if not is_applicable(Strategy.MRR, layout):
        raise StrategyNotApplicable(
            "multiple CUDA streams error: the synchronization ring would need more than one GMI "
            f"on a GPU (layout {[list(x) for x in layout.mpl]})")


def link_bandwidth(link: LinkKind, b1: float, b2: float) -> float:
    if link is LinkKind.HOST_BOUNCE:
        return b1
    if link is LinkKind.RING:
        return b2
    return float("inf")


def trace_latency(trace: Iterable[TraceEvent], b1: float, b2: float) -> float:
    """Sum over steps of the slowest transfer in each step, broadcast excluded."""
    per_step: dict[int, float] = defaultdict(float)
    for e in trace:
        if e.phase == "broadcast":
            continue
        per_step[e.step] = max(per_step[e.step], e.bytes / link_bandwidth(e.link, b1, b2))
    return sum(per_step[s] for s in sorted(per_step))


class _Run:
    """Mutable state of one simulated reduction."""

    def __init__(self, layout: GmiLayout, buffers, element_size: float, backend):
        self.layout = layout
        self.data = _stack_buffers(layout, buffers)
        self.row = {gmi: i for i, gmi in enumerate(layout.gmis)}
        self.payload = self.data.shape[1] * element_size
        self.backend = backend
        self.events: list[TraceEvent] = []

    def ring(self, members: Sequence[int], link: LinkKind, step0: int, phase: str,
             contributions: np.ndarray | None = None) -> int:
        """Ring allreduce among ``members``; returns the number of steps taken."""
        k = len(members)
        if k < 2:
            return 0
        rows = [self.row[m] for m in members]
        buf = np.ascontiguousarray(self.data[rows] if contributions is None else contributions)
        bounds = _chunk_bounds(buf.shape[1], k)
        kernels.ring_allreduce(buf, bounds, backend=self.backend)
        self.data[rows] = buf
        share = self.payload / k
        for s in range(2 * (k - 1)):
            for i in range(k):
                self.events.append(TraceEvent(step0 + s, phase, members[i], members[(i + 1) % k], share, link))
        return 2 * (k - 1)

    def broadcast(self, step: int, holder_of: Mapping[int, int], link_of) -> None:
        for gmi in self.layout.gmis:
            src = holder_of[gmi]
            self.data[self.row[gmi]] = self.data[self.row[src]]
            link = LinkKind.LOCAL if src == gmi else link_of(src, gmi)
            self.events.append(TraceEvent(step, "broadcast", src, gmi, self.payload, link))


def _stack_buffers(layout: GmiLayout, buffers) -> np.ndarray:
    if isinstance(buffers, Mapping):
        missing = [g for g in layout.gmis if g not in buffers]
        if missing:
            raise ValueError(f"no buffer for GMIs {missing}")
        vectors = [np.asarray(buffers[g], dtype=np.float64) for g in layout.gmis]
    else:
        vectors = [np.asarray(b, dtype=np.float64) for b in buffers]
        if len(vectors) != len(layout.gmis):
            raise ValueError(f"expected {len(layout.gmis)} buffers, got {len(vectors)}")
    lengths = {v.shape for v in vectors}
    if len(lengths) != 1 or len(next(iter(lengths))) != 1:
        raise ValueError(f"buffers must be 1-D with one shared length, got shapes {sorted(lengths)}")
    if vectors[0].shape[0] == 0:
        raise ValueError("buffers must be non-empty")
    return np.array(vectors, dtype=np.float64)


def _chunk_bounds(length: int, k: int) -> np.ndarray:
    q, r = divmod(length, k)
    sizes = [q + (1 if i < r else 0) for i in range(k)]
    return np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)


def execute(strategy, layout, buffers, topology: Topology | None = None, *,
            b1: float | None = None, b2: float | None = None,
            element_size: float = 4, backend: str | None = None) -> ReductionRun:
    """Simulate ``strategy`` on ``layout`` and return the reduced vector and trace.

    ``buffers`` maps GMI id to a vector, or lists vectors in layout order.
    Bandwidths come from ``topology`` unless given explicitly.  Each element
    counts as ``element_size`` bytes on the wire.
    """
    strategy = Strategy(strategy)
    layout = GmiLayout.of(layout)
    if b1 is None:
        b1 = topology.b1 if topology is not None else DEFAULT_B1
    if b2 is None:
        b2 = topology.b2 if topology is not None else DEFAULT_B2
    if topology is not None:
        known = {p.gmi_id for p in topology.partitions}
        unknown = [g for g in layout.gmis if g not in known]
        if unknown:
            raise ValueError(f"layout GMIs {unknown} are not in the topology")
    if strategy is Strategy.MRR:
        _require_mrr(layout)

    run = _Run(layout, buffers, element_size, backend)
    gpu = layout.gpu_index()

    def path(src, dst):
        return LinkKind.HOST_BOUNCE if gpu[src] == gpu[dst] else LinkKind.RING

    if strategy is Strategy.MPR:
        steps = run.ring(layout.gmis, LinkKind.HOST_BOUNCE, 0, "step1")
        run.broadcast(steps, {g: g for g in layout.gmis}, path)
    elif strategy is Strategy.MRR:
        rings = mrr_rings(layout)
        step = 0
        for ring in rings:
            step += run.ring(ring, LinkKind.RING, step, "step1")
        # GPU j < t contributes ring j's endpoint; remaining GPUs relay zeros.
        sync, contrib = [], []
        for j in range(layout.num_gpus):
            if j < len(rings):
                sync.append(rings[j][-1])
                contrib.append(run.data[run.row[rings[j][-1]]])
            else:
                sync.append(layout.mpl[j][0])
                contrib.append(np.zeros(run.data.shape[1]))
        step += run.ring(sync, LinkKind.RING, step, "step2", np.array(contrib))
        if len(sync) == 1:
            run.data[run.row[sync[0]]] = contrib[0]
        holder = {m: ring[-1] for ring in rings for m in ring}
        run.broadcast(step, holder, path)
    else:
        steps1 = 0
        for ids in layout.mpl:
            steps1 = max(steps1, run.ring(list(ids), LinkKind.HOST_BOUNCE, 0, "step1"))
        leaders = leader_gmis(layout)
        steps2 = run.ring(leaders, LinkKind.RING, steps1, "step2")
        holder = {m: leaders[j] for j, ids in enumerate(layout.mpl) for m in ids}
        run.broadcast(steps1 + steps2, holder, path)

    trace = tuple(run.events)
    outputs = {g: run.data[run.row[g]].copy() for g in layout.gmis}
    result = outputs[layout.gmis[0]]
    return ReductionRun(strategy, result, trace_latency(trace, b1, b2), trace, outputs)

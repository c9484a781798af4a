"""Pure-Python kernels; reference semantics for the compiled ``_ckernels``.

Both implementations perform the same floating-point operations in the same
order, so their outputs are bit-identical.
"""

from __future__ import annotations

import numpy as np


def ring_allreduce(buf: np.ndarray, bounds: np.ndarray) -> None:
    """In-place ring allreduce (sum) over the rows of ``buf``.

    Row ``i`` is ring member ``i``; member ``i`` sends to ``(i + 1) % k``.
    ``bounds`` has ``k + 1`` entries delimiting the ``k`` chunks.  Runs
    ``k - 1`` reduce-scatter steps followed by ``k - 1`` allgather steps.
    """
    k = buf.shape[0]
    for step in range(k - 1):
        for i in range(k):
            c = (i - step) % k
            lo, hi = bounds[c], bounds[c + 1]
            buf[(i + 1) % k, lo:hi] += buf[i, lo:hi]
    for step in range(k - 1):
        for i in range(k):
            c = (i + 1 - step) % k
            lo, hi = bounds[c], bounds[c + 1]
            buf[(i + 1) % k, lo:hi] = buf[i, lo:hi]


def agent_timeline(n_records, delta, phase, threshold, channel_sizes, bandwidth, overhead):
    """Timeline of one agent that produces records and ships them in units.

    Every ``delta`` the agent finishes one record.  When ``threshold`` records
    are pending (or the last record is produced) it sends one unit per channel,
    each costing ``overhead + count * size / bandwidth`` on the agent's own
    clock.  Returns ``(group_arrivals, group_sizes, finish, busy)``.
    """
    n_groups = -(-n_records // threshold) if n_records > 0 else 0
    arrivals = np.empty(n_groups, dtype=np.float64)
    sizes = np.empty(n_groups, dtype=np.int64)
    t = phase
    busy = 0.0
    pending = 0
    g = 0
    for r in range(n_records):
        t += delta
        pending += 1
        if pending == threshold or r == n_records - 1:
            for s in channel_sizes:
                cost = overhead + pending * s / bandwidth
                t += cost
                busy += cost
            arrivals[g] = t
            sizes[g] = pending
            g += 1
            pending = 0
    return arrivals, sizes, t, busy


def fifo_service(arrivals, costs):
    """Finish times of jobs served one at a time in arrival order."""
    n = len(arrivals)
    out = np.empty(n, dtype=np.float64)
    free = 0.0
    for i in range(n):
        start = arrivals[i] if arrivals[i] > free else free
        free = start + costs[i]
        out[i] = free
    return out

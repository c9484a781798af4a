"""Independent reference implementations used to check the package.

Nothing here imports the package's algorithms; each oracle is written
from the rule it checks, in the plainest form possible.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

MIG_UNITS = {"1g.5gb": 1, "2g.10gb": 2, "3g.20gb": 3, "4g.20gb": 4, "7g.40gb": 7}


def strategy_by_rules(mpl):
    """Step-by-step selection rule over a GMI-to-GPU mapping list."""
    if len(mpl) <= 1:
        return "MPR"
    counts = [len(ids) for ids in mpl]
    for c in counts[1:]:
        if c != counts[0]:
            return "HAR"
    g, t = len(mpl), counts[0]
    if t > g:
        return "HAR"
    return "MRR"


def elementwise_sum(vectors):
    out = [0.0] * len(vectors[0])
    for v in vectors:
        for i, x in enumerate(v):
            out[i] += float(x)
    return np.array(out)


def latency_table(g, t, m, b1, b2):
    """Latencies by counting ring steps: a k-member ring moves m/k per step for 2(k-1) steps."""
    def ring(k, bw):
        return 0.0 if k < 2 else 2 * (k - 1) * (m / k) / bw
    return {
        "MPR": ring(g * t, b1),
        "MRR": t * ring(g, b2) + ring(g, b2),
        "HAR": ring(t, b1) + ring(g, b2),
    }


def mig_layouts(max_instances=7):
    """Every multiset of MIG profiles up to ``max_instances`` instances."""
    names = sorted(MIG_UNITS)
    for n in range(1, max_instances + 1):
        yield from itertools.combinations_with_replacement(names, n)


def mig_layout_valid(profiles, usable=7):
    return sum(MIG_UNITS[p] for p in profiles) <= usable


def exhaustive_best(profile, bench, grid_gpg, grid_env, estimate):
    """Best (num_env, gmis_per_gpu) over every runnable point, with the search's tie order."""
    best, best_val = None, -math.inf
    for gpg in grid_gpg:
        for env in grid_env:
            res = profile(bench, gpg, env)
            if not res.runnable:
                continue
            val = estimate(gpg, res.top)
            if val > best_val:
                best, best_val = (env, gpg), val
    return best, best_val


def serving_ratio_by_hand(r_s, r_a, t_s, t_a, alpha, comm_factor):
    tdg_r = (t_s * r_s + t_a * alpha * r_a) / (t_s + t_a)
    tcg_r = max(r_s, r_a)
    # TDG communication takes comm_factor iterations; TCG has none
    return (1 / tcg_r / (t_s + t_a)) / (1 / tdg_r / ((1 + comm_factor) * (t_s + t_a)))


def training_ratio_by_hand(r_s, r_a, r_t, t_s, t_a, t_t, alpha, beta, comm_factor):
    it = t_s + t_a + t_t
    tdg_r = (t_s * r_s + t_a * alpha * r_a + t_t * beta * r_t) / it
    tcg_r = max(r_s, r_a, r_t)
    return (1 / tcg_r / it) / (1 / tdg_r / ((1 + comm_factor) * it))

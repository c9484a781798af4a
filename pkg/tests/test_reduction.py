import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gmiplan.reduction import (GmiLayout, LinkKind, Strategy, StrategyNotApplicable, execute, is_applicable,
                               layout_latency, leader_gmis, mrr_rings, predict_latency, select_strategy)
from gmiplan.topology import Topology
from oracles import elementwise_sum, latency_table, strategy_by_rules

B1, B2 = 1.0, 30.0


@pytest.mark.parametrize("mpl,expected", [
    ([[0, 1, 2]], Strategy.MPR), ([[0, 1], [2, 3]], Strategy.MRR),
    ([[0, 1, 2], [3, 4, 5]], Strategy.HAR), ([[0], [1, 2]], Strategy.HAR), ([[0], [1]], Strategy.MRR),
])
def test_canonical_selection(mpl, expected):
    assert select_strategy(mpl) is expected


def test_predicted_latencies_two_by_two():
    assert predict_latency("MPR", 2, 2, 240, B1, B2) == pytest.approx(360)
    assert predict_latency("MRR", 2, 2, 240, B1, B2) == pytest.approx(24)
    assert predict_latency("HAR", 2, 2, 240, B1, B2) == pytest.approx(248)


def test_single_gmi_costs_nothing():
    for s in Strategy:
        assert predict_latency(s, 1, 1, 100, B1, B2) == 0


def test_latency_rejects_bad_inputs():
    with pytest.raises(ValueError):
        predict_latency("MPR", 0, 1, 1, B1, B2)
    with pytest.raises(ValueError):
        predict_latency("MPR", 1, 1, 0, B1, B2)


def test_leaders():
    assert leader_gmis([[0, 1], [2, 3]]) == [0, 2]
    assert leader_gmis([[1, 3], [5, 7]]) == [1, 5]
    assert leader_gmis([[4, 5, 6]]) == [6]


def test_mrr_rings_end_on_their_gpu():
    rings = mrr_rings([[0, 1], [2, 3], [4, 5]])
    assert rings == [[2, 4, 0], [5, 1, 3]]


def test_forced_mrr_on_crowded_layout_fails():
    with pytest.raises(StrategyNotApplicable, match="multiple CUDA streams error"):
        execute(Strategy.MRR, [[0, 1, 2], [3, 4, 5]], [np.ones(4)] * 6)
    assert not is_applicable("MRR", [[0], [1, 2]])


def test_layout_validation():
    with pytest.raises(ValueError, match="unique"):
        GmiLayout([[0, 1], [1]])
    with pytest.raises(ValueError, match="at least one GMI"):
        GmiLayout([[0], []])


def test_buffer_validation():
    with pytest.raises(ValueError, match="no buffer"):
        execute("MPR", [[0, 1]], {0: np.ones(3)})
    with pytest.raises(ValueError, match="one shared length"):
        execute("MPR", [[0, 1]], [np.ones(3), np.ones(4)])


def test_execute_with_topology_takes_its_bandwidths():
    topo = Topology.uniform(2, 2, b1=2.0, b2=60.0)
    run = execute("HAR", topo, [np.ones(60)] * 4, topo)
    assert run.latency == pytest.approx(predict_latency("HAR", 2, 2, 240, 2.0, 60.0))


def test_trace_structure():
    run = execute("HAR", [[0, 1], [2, 3]], [np.arange(8.0)] * 4, b1=B1, b2=B2)
    phases = {e.phase for e in run.trace}
    assert phases == {"step1", "step2", "broadcast"}
    assert all(e.link is LinkKind.HOST_BOUNCE for e in run.trace if e.phase == "step1")
    assert all(e.link is LinkKind.RING for e in run.trace if e.phase == "step2")
    lines = run.trace_lines()
    assert json.loads(lines[0])["phase"] == "step1"


def test_results_match_on_every_gmi():
    rng = np.random.default_rng(3)
    bufs = [rng.standard_normal(17) for _ in range(6)]
    for s in (Strategy.MPR, Strategy.HAR):
        run = execute(s, [[0, 1, 2], [3, 4, 5]], bufs)
        for out in run.outputs.values():
            np.testing.assert_allclose(out, elementwise_sum(bufs), rtol=1e-12)


def test_uneven_har_latency_uses_most_crowded_gpu():
    layout = [[0, 1, 2], [3]]
    run = execute("HAR", layout, [np.ones(60)] * 4)
    assert run.latency == pytest.approx(layout_latency("HAR", layout, 240, B1, B2), rel=1e-12)
    assert run.latency == pytest.approx(predict_latency("HAR", 2, 3, 240, B1, B2), rel=1e-12)


def test_selected_latency_is_never_worse_than_mpr_on_multi_gpu():
    for g in range(2, 6):
        for t in range(1, 6):
            layout = GmiLayout.uniform(g, t)
            chosen = layout_latency(select_strategy(layout), layout, 1000, B1, B2)
            assert chosen <= layout_latency("MPR", layout, 1000, B1, B2)


layouts = st.integers(1, 4).flatmap(lambda g: st.lists(st.integers(1, 4), min_size=g, max_size=g))


def _mpl(counts):
    ids, out = iter(range(100)), []
    for c in counts:
        out.append([next(ids) for _ in range(c)])
    return out


@settings(max_examples=150, deadline=None)
@given(layouts, st.integers(1, 64), st.integers(0, 2**32 - 1))
def test_reduction_equals_sum(counts, n, seed):
    mpl = _mpl(counts)
    rng = np.random.default_rng(seed)
    bufs = [rng.standard_normal(n) for _ in range(sum(counts))]
    expected = elementwise_sum(bufs)
    for s in Strategy:
        if not is_applicable(s, mpl):
            continue
        run = execute(s, mpl, bufs)
        for out in run.outputs.values():
            np.testing.assert_allclose(out, expected, rtol=1e-9, atol=1e-12)


@given(layouts)
def test_selection_matches_rules(counts):
    mpl = _mpl(counts)
    assert select_strategy(mpl).value == strategy_by_rules(mpl)


@given(st.integers(1, 8), st.integers(1, 9), st.floats(1, 1e6), st.floats(0.1, 10), st.floats(1, 100))
def test_closed_forms_match_step_counting(g, t, m, b1, b2):
    table = latency_table(g, t, m, b1, b2)
    for s in Strategy:
        assert predict_latency(s, g, t, m, b1, b2) == pytest.approx(table[s.value], rel=1e-12, abs=1e-12)

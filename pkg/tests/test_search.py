import math

import pytest
from hypothesis import given, settings, strategies as st

from gmiplan.search import (NUM_ENV_GRID, NOT_RUNNABLE, ProfileResult, SearchConfig, SyntheticCostModel,
                            TraceProfiler, comm_discount, estimate_system_throughput, explore, saturation)
from gmiplan.workload import load_benchmark
from oracles import exhaustive_best

AT = load_benchmark("AT")


def test_saturation_values():
    assert saturation(1.5, 1.0, 1.5, 1.0) == pytest.approx(1.0)
    assert saturation(1.02, 1.0, 2.0, 1.0) == pytest.approx(0.02)
    assert saturation(1.0, 1.0, 2.0, 1.0) == 0
    assert saturation(2.0, 1.0, 1.0, 1.0) == math.inf
    with pytest.raises(ValueError):
        saturation(1.0, 0.0, 1.0, 1.0)


def test_synthetic_model_shape():
    m = SyntheticCostModel()
    assert m.profile("AT", 10, 128) is NOT_RUNNABLE
    lo, hi = m.profile("AT", 2, 512), m.profile("AT", 2, 1024)
    assert hi.top == pytest.approx(2 * lo.top)
    assert hi.mem - lo.mem == pytest.approx(m.mem_per_env * 512)
    past = m.profile("AT", 2, 8192)
    knee = m.profile("AT", 2, 4096)
    assert (past.top - knee.top) / knee.top < 0.1
    assert (past.mem - knee.mem) / knee.mem >= 0.5
    with pytest.raises(KeyError):
        m.profile("ZZ", 1, 128)


def test_estimate_identity_and_free_comm():
    assert estimate_system_throughput(1, 1, 123.0, AT) == pytest.approx(123.0)
    assert estimate_system_throughput(3, 2, 10.0) == 60.0
    assert estimate_system_throughput(3, 2, 10.0, AT, b1=1e300, b2=1e300) == pytest.approx(60.0)


def test_discount_decreases_with_model_size():
    small = comm_discount(AT, 2, 2)
    big = comm_discount(load_benchmark("SH"), 2, 2)
    assert 0 < big < small < 1


def test_explore_finds_the_designed_optimum():
    model = SyntheticCostModel(gpu_top=1e5, process_top=5e4)
    res = explore("AT", 1, SearchConfig(), model)
    assert (res.num_env, res.gmis_per_gpu) == (4096, 2)
    assert res.feasible and not res.fallback


def test_knee_stops_the_row():
    model = SyntheticCostModel(knee_env=2048)
    res = explore("AT", 1, SearchConfig(), model)
    pruned_rows = {v.gmis_per_gpu for v in res.visited if v.action == "prune"}
    assert pruned_rows
    for v in res.visited:
        if v.gmis_per_gpu in pruned_rows:
            assert v.num_env <= 4096
    assert len(res.visited) < len(NUM_ENV_GRID) * 10


def test_all_unrunnable_is_infeasible():
    res = explore("AT", 1, SearchConfig(), TraceProfiler({}))
    assert not res.feasible and res.config is None


def test_single_runnable_row(tmp_path):
    p = tmp_path / "trace.csv"
    p.write_text("bench,gmis_per_gpu,num_env,runnable,top,mem\n# measured\nAT,4,512,1,900,3.0\nAT,4,1024,0\n")
    res = explore("AT", 1, SearchConfig(), TraceProfiler.from_file(p))
    assert (res.num_env, res.gmis_per_gpu) == (512, 4)
    assert res.fallback


def test_bad_trace_row(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("AT,4,512,1,notanumber,3\n")
    with pytest.raises(ValueError, match="row 1"):
        TraceProfiler.from_file(p)


def test_profile_result_invariants():
    with pytest.raises(ValueError):
        ProfileResult(True, None, 1.0)
    with pytest.raises(ValueError):
        ProfileResult(False, 1.0, 1.0)


def test_config_validation():
    with pytest.raises(ValueError):
        SearchConfig(sat_threshold=0)
    with pytest.raises(ValueError):
        SearchConfig(num_env_grid=())


def test_explore_is_deterministic():
    assert explore("HM", 2) == explore("HM", 2)


models = st.builds(SyntheticCostModel, gpu_top=st.floats(1e3, 1e6), process_top=st.floats(1e3, 1e6),
                   knee_env=st.sampled_from(NUM_ENV_GRID[1:]), base_mem=st.floats(0.1, 2),
                   mem_per_env=st.floats(1e-4, 2e-3), min_share=st.sampled_from([0.1, 0.125, 0.2, 0.5]))


@settings(max_examples=40, deadline=None)
@given(models, st.integers(1, 4), st.sampled_from(["AT", "HM", "SH"]))
def test_explore_matches_exhaustive(model, num_gpu, bench):
    cfg = SearchConfig()
    wl = load_benchmark(bench)
    res = explore(bench, num_gpu, cfg, model, wl)

    def est(gpg, top):
        return estimate_system_throughput(gpg, num_gpu, top, wl, cfg.b1, cfg.b2, cfg.latency_scale)

    best, val = exhaustive_best(model.profile, bench, cfg.gmis_per_gpu_range, cfg.num_env_grid, est)
    assert (res.num_env, res.gmis_per_gpu) == best
    assert res.throughput == pytest.approx(val)

from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from gmiplan.topology import (INTRA, Arch, Backend, GmiPartition, GpuSpec, Topology, path_bandwidth,
                              select_backend, uniform_partitions, validate_layout)
from oracles import MIG_UNITS, mig_layout_valid


def mig_topology(*profiles, arch=Arch.SM80):
    gpu = GpuSpec(0, arch)
    return Topology((gpu,), tuple(GmiPartition.mig(i, 0, p) for i, p in enumerate(profiles)))


def rules(report):
    return {v.rule for v in report.violations}


def test_three_three_one_is_valid():
    assert validate_layout(mig_topology("3g.20gb", "3g.20gb", "1g.5gb")).ok


def test_four_four_exceeds_usable_units():
    rep = validate_layout(mig_topology("4g.20gb", "4g.20gb"))
    assert not rep.ok
    assert rules(rep) == {"mig-units"}
    assert "exceeds 7 usable units" in rep.violations[0].message


def test_mig_on_volta_is_rejected():
    rep = validate_layout(mig_topology("1g.5gb", arch=Arch.SM70))
    assert "backend-unavailable" in rules(rep)


def test_mps_shares_over_one():
    gpu = GpuSpec(0)
    topo = Topology((gpu,), (GmiPartition.mps(0, 0, Fraction(3, 5), 10), GmiPartition.mps(1, 0, Fraction(3, 5), 10)))
    assert rules(validate_layout(topo)) == {"mps-share"}


def test_mps_memory_over_capacity():
    topo = Topology((GpuSpec(0),), (GmiPartition.mps(0, 0, 0.5, 30), GmiPartition.mps(1, 0, 0.5, 30)))
    assert rules(validate_layout(topo)) == {"memory"}


def test_mixed_backends_and_unknown_gpu():
    topo = Topology((GpuSpec(0),), (GmiPartition.mps(0, 0, 0.5, 10), GmiPartition.mig(1, 0, "1g.5gb"),
                                    GmiPartition.mps(2, 5, 0.5, 10)))
    assert rules(validate_layout(topo)) == {"mixed-backend", "unknown-gpu"}


def test_duplicate_gmi_ids():
    topo = Topology((GpuSpec(0),), (GmiPartition.mps(0, 0, 0.25, 5), GmiPartition.mps(0, 0, 0.25, 5)))
    assert "duplicate-gmi" in rules(validate_layout(topo))


def test_unknown_profile_and_non_profile_share():
    with pytest.raises(ValueError, match="unknown MIG profile"):
        GmiPartition.mig(0, 0, "5g.30gb")
    odd = GmiPartition(0, 0, Backend.MIG, Fraction(5, 8), 30)
    assert odd.mig_profile() is None
    assert "mig-profile" in rules(validate_layout(Topology((GpuSpec(0),), (odd,))))


def test_violation_order_is_deterministic():
    parts = (GmiPartition.mig(0, 1, "7g.40gb"), GmiPartition.mig(1, 1, "1g.5gb"),
             GmiPartition.mig(2, 0, "4g.20gb"), GmiPartition.mig(3, 0, "4g.20gb"))
    topo = Topology((GpuSpec(0), GpuSpec(1)), parts)
    rep = validate_layout(topo)
    assert [v.gpu_id for v in rep.violations] == [0, 1]
    assert validate_layout(Topology(topo.gpus, parts[::-1])) == rep


@pytest.mark.parametrize("arch,mode,expected", [
    ("SM70", "training", Backend.MPS), ("SM70", "serving", Backend.MPS),
    ("SM80", "training", Backend.MPS), ("SM80", "serving", Backend.MIG),
])
def test_backend_table(arch, mode, expected):
    assert select_backend(arch, mode) is expected


def test_backend_rejects_unknown_arch():
    with pytest.raises(ValueError, match="unsupported arch"):
        select_backend("SM90", "training")


def test_path_bandwidth_levels():
    topo = Topology.uniform(2, 2, b1=1.5, b2=40)
    assert path_bandwidth(topo, 0, 0) == INTRA
    assert path_bandwidth(topo, 0, 1) == 1.5
    assert path_bandwidth(topo, 1, 2) == 40
    with pytest.raises(KeyError):
        path_bandwidth(topo, 0, 9)


@pytest.mark.parametrize("k,profile", [(1, "7g.40gb"), (2, "3g.20gb"), (3, "2g.10gb"), (7, "1g.5gb")])
def test_uniform_mig_picks_largest_fitting_profile(k, profile):
    parts = uniform_partitions((GpuSpec(0),), k, Backend.MIG)
    assert {p.mig_profile() for p in parts} == {profile}
    assert validate_layout(Topology((GpuSpec(0),), parts)).ok


def test_uniform_mig_rejects_eight():
    with pytest.raises(ValueError, match="do not fit"):
        uniform_partitions((GpuSpec(0),), 8, Backend.MIG)


def test_uniform_mps_numbering_is_gpu_major():
    topo = Topology.uniform(3, 2)
    assert topo.mpl() == [[0, 1], [2, 3], [4, 5]]
    assert validate_layout(topo).ok


@given(st.lists(st.sampled_from(sorted(MIG_UNITS)), min_size=1, max_size=7))
def test_mig_validity_matches_unit_sum(profiles):
    assert validate_layout(mig_topology(*profiles)).ok == mig_layout_valid(profiles)


@given(st.lists(st.integers(1, 10), min_size=1, max_size=6))
def test_mps_validity_matches_share_sum(denoms):
    shares = [Fraction(1, d) for d in denoms]
    topo = Topology((GpuSpec(0),), tuple(GmiPartition.mps(i, 0, s, 40 * s) for i, s in enumerate(shares)))
    assert validate_layout(topo).ok == (sum(shares) <= 1)

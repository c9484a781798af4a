import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gmiplan import kernels

BACKENDS = kernels.available_backends()


@pytest.mark.skipif(os.environ.get("GMIPLAN_PURE_PYTHON", "") not in ("", "0"), reason="fallback forced")
def test_compiled_backend_is_built():
    # the package is meant to be installed with its extension
    assert "cython" in BACKENDS
    assert kernels.BACKEND == "cython"


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.fifo_service([0.0], [1.0], backend="fortran")


def test_ring_rejects_wrong_layout():
    with pytest.raises(TypeError):
        kernels.ring_allreduce(np.ones((2, 3), dtype=np.float32), [0, 1, 3])
    with pytest.raises(ValueError):
        kernels.ring_allreduce(np.ones((2, 3)), [0, 3])


@pytest.mark.parametrize("backend", BACKENDS)
def test_ring_sums_rows(backend):
    buf = np.arange(12.0).reshape(3, 4).copy()
    kernels.ring_allreduce(buf, [0, 2, 3, 4], backend=backend)
    assert (buf == np.arange(12.0).reshape(3, 4).sum(axis=0)).all()


@pytest.mark.parametrize("backend", BACKENDS)
def test_fifo_waits_for_server(backend):
    out = kernels.fifo_service([0.0, 0.5, 5.0], [2.0, 1.0, 1.0], backend=backend)
    assert out.tolist() == [2.0, 3.0, 6.0]


@pytest.mark.parametrize("backend", BACKENDS)
def test_timeline_groups(backend):
    arr, sizes, finish, busy = kernels.agent_timeline(5, 1.0, 0.0, 2, [2.0, 1.0, 1.0], 4.0, 0.5, backend=backend)
    assert sizes.tolist() == [2, 2, 1]
    # each group of k costs 3 * 0.5 + k * 4 / 4
    assert busy == pytest.approx(3 * 1.5 + 5)
    assert finish == pytest.approx(5 + busy)
    assert arr[0] == pytest.approx(2 + 1.5 + 2)


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled kernels not built")
@settings(max_examples=60, deadline=None)
@given(st.integers(1, 9), st.integers(1, 50), st.integers(0, 2**32 - 1))
def test_backends_bit_identical(k, n, seed):
    rng = np.random.default_rng(seed)
    buf = rng.standard_normal((k, n))
    q, r = divmod(n, k)
    bounds = np.concatenate([[0], np.cumsum([q + (i < r) for i in range(k)])])
    a, b = buf.copy(), buf.copy()
    kernels.ring_allreduce(a, bounds, backend="python")
    kernels.ring_allreduce(b, bounds, backend="cython")
    assert np.array_equal(a, b)

    sizes = rng.uniform(1, 100, 3)
    args = (n, 7.0, float(rng.uniform(0, 7)), k, sizes, 30.0, float(rng.uniform(0, 1)))
    pa, pc = kernels.agent_timeline(*args, backend="python"), kernels.agent_timeline(*args, backend="cython")
    assert np.array_equal(pa[0], pc[0]) and np.array_equal(pa[1], pc[1])
    assert pa[2] == pc[2] and pa[3] == pc[3]

    arrivals = np.sort(rng.uniform(0, 10, n))
    costs = rng.uniform(0, 1, n)
    assert np.array_equal(kernels.fifo_service(arrivals, costs, backend="python"),
                          kernels.fifo_service(arrivals, costs, backend="cython"))

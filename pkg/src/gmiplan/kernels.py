"""Kernel dispatch: the compiled extension when built, else the pure-Python fallback.

Set ``GMIPLAN_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

import numpy as np

from . import _pykernels

_c = None
if os.environ.get("GMIPLAN_PURE_PYTHON", "") in ("", "0"):
    try:
        from . import _ckernels as _c
    except ImportError:
        _c = None

BACKEND = "cython" if _c is not None else "python"


def available_backends() -> list[str]:
    return ["python"] + (["cython"] if _c is not None else [])


def _impl(backend: str | None):
    backend = backend or BACKEND
    if backend == "python":
        return _pykernels
    if backend == "cython":
        if _c is None:
            raise RuntimeError("compiled kernels are not built; run `pip install -e . --no-build-isolation`")
        return _c
    raise ValueError(f"unknown kernel backend {backend!r}")


def ring_allreduce(buf: np.ndarray, bounds, backend: str | None = None) -> None:
    if buf.dtype != np.float64 or not buf.flags.c_contiguous or buf.ndim != 2:
        raise TypeError("buf must be a C-contiguous 2-D float64 array")
    bounds = np.ascontiguousarray(bounds, dtype=np.int64)
    if len(bounds) != buf.shape[0] + 1:
        raise ValueError("bounds must have one more entry than ring members")
    _impl(backend).ring_allreduce(buf, bounds)


def agent_timeline(n_records: int, delta: float, phase: float, threshold: int,
                   channel_sizes, bandwidth: float, overhead: float, backend: str | None = None):
    sizes = np.ascontiguousarray(channel_sizes, dtype=np.float64)
    return _impl(backend).agent_timeline(int(n_records), float(delta), float(phase), int(threshold),
                                         sizes, float(bandwidth), float(overhead))


def fifo_service(arrivals, costs, backend: str | None = None) -> np.ndarray:
    arrivals = np.ascontiguousarray(arrivals, dtype=np.float64)
    costs = np.ascontiguousarray(costs, dtype=np.float64)
    if arrivals.shape != costs.shape:
        raise ValueError("arrivals and costs must have the same length")
    return _impl(backend).fifo_service(arrivals, costs)

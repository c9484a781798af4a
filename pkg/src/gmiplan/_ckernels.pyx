# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; see ``_pykernels`` for the reference semantics."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def ring_allreduce(double[:, ::1] buf, const long long[::1] bounds):
    cdef Py_ssize_t k = buf.shape[0]
    cdef Py_ssize_t step, i, c, j, dst
    with nogil:
        for step in range(k - 1):
            for i in range(k):
                c = (i - step + k) % k
                dst = (i + 1) % k
                for j in range(bounds[c], bounds[c + 1]):
                    buf[dst, j] += buf[i, j]
        for step in range(k - 1):
            for i in range(k):
                c = (i + 1 - step + k) % k
                dst = (i + 1) % k
                for j in range(bounds[c], bounds[c + 1]):
                    buf[dst, j] = buf[i, j]


def agent_timeline(long long n_records, double delta, double phase, long long threshold,
                   const double[::1] channel_sizes, double bandwidth, double overhead):
    cdef long long n_groups = (n_records + threshold - 1) // threshold if n_records > 0 else 0
    arrivals_arr = np.empty(n_groups, dtype=np.float64)
    sizes_arr = np.empty(n_groups, dtype=np.int64)
    cdef double[::1] arrivals = arrivals_arr
    cdef long long[::1] sizes = sizes_arr
    cdef double t = phase
    cdef double busy = 0.0
    cdef double cost
    cdef long long pending = 0
    cdef long long g = 0
    cdef long long r
    cdef Py_ssize_t s
    cdef Py_ssize_t n_channels = channel_sizes.shape[0]
    with nogil:
        for r in range(n_records):
            t += delta
            pending += 1
            if pending == threshold or r == n_records - 1:
                for s in range(n_channels):
                    cost = overhead + pending * channel_sizes[s] / bandwidth
                    t += cost
                    busy += cost
                arrivals[g] = t
                sizes[g] = pending
                g += 1
                pending = 0
    return arrivals_arr, sizes_arr, t, busy


def fifo_service(const double[::1] arrivals, const double[::1] costs):
    cdef Py_ssize_t n = arrivals.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double free = 0.0
    cdef double start
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            start = arrivals[i] if arrivals[i] > free else free
            free = start + costs[i]
            out[i] = free
    return out_arr

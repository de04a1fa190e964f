# cython: language_level=3
"""Compiled twin of crtkit._kernels_py; bit-identical outputs by contract."""

cimport cython

import numpy as np

cimport numpy as cnp

cnp.import_array()

cdef double _U53 = 2.0 ** -53


cdef inline unsigned long long _mix64(unsigned long long z) noexcept nogil:
    z = z + 0x9E3779B97F4A7C15ULL
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


@cython.boundscheck(False)
@cython.wraparound(False)
def seed_grid(object base, Py_ssize_t n_draws, Py_ssize_t n_rows):
    cdef unsigned long long t = _mix64(<unsigned long long> (int(base) & 0xFFFFFFFFFFFFFFFF))
    out = np.empty((n_draws, n_rows), dtype=np.uint64)
    cdef unsigned long long[:, ::1] o = out
    cdef Py_ssize_t b, i
    cdef unsigned long long row_base
    with nogil:
        for b in range(n_draws):
            row_base = _mix64(t ^ <unsigned long long> b)
            for i in range(n_rows):
                o[b, i] = _mix64(row_base ^ <unsigned long long> i)
    return out


@cython.boundscheck(False)
@cython.wraparound(False)
def uniforms(object seeds):
    arr = np.ascontiguousarray(np.asarray(seeds, dtype=np.uint64))
    flat = arr.reshape(-1)
    out = np.empty(flat.shape[0], dtype=np.float64)
    cdef const unsigned long long[::1] s = flat
    cdef double[::1] o = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(s.shape[0]):
            o[i] = (<double> (_mix64(s[i]) >> 11) + 0.5) * _U53
    return out.reshape(arr.shape)


@cython.boundscheck(False)
@cython.wraparound(False)
def uniform_grid(object base, Py_ssize_t n_draws, Py_ssize_t n_rows):
    cdef unsigned long long t = _mix64(<unsigned long long> (int(base) & 0xFFFFFFFFFFFFFFFF))
    out = np.empty((n_draws, n_rows), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t b, i
    cdef unsigned long long row_base
    with nogil:
        for b in range(n_draws):
            row_base = _mix64(t ^ <unsigned long long> b)
            for i in range(n_rows):
                o[b, i] = (<double> (_mix64(_mix64(row_base ^ <unsigned long long> i)) >> 11) + 0.5) * _U53
    return out


@cython.boundscheck(False)
@cython.wraparound(False)
def grid_lookup(object values, object u):
    cdef const double[:, ::1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef const double[:, ::1] uu = np.ascontiguousarray(u, dtype=np.float64)
    cdef Py_ssize_t m = v.shape[0], k = v.shape[1]
    cdef Py_ssize_t n_draws = uu.shape[0]
    if uu.shape[1] != m:
        raise ValueError("u must have one column per grid row")
    out = np.empty((n_draws, m), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t b, i, idx
    with nogil:
        for b in range(n_draws):
            for i in range(m):
                idx = <Py_ssize_t> (uu[b, i] * k)
                if idx > k - 1:
                    idx = k - 1
                o[b, i] = v[i, idx]
    return out


@cython.boundscheck(False)
@cython.wraparound(False)
def categorical_lookup(object cum, object u):
    cdef const double[:, ::1] c = np.ascontiguousarray(cum, dtype=np.float64)
    cdef const double[:, ::1] uu = np.ascontiguousarray(u, dtype=np.float64)
    cdef Py_ssize_t m = c.shape[0], levels = c.shape[1]
    cdef Py_ssize_t n_draws = uu.shape[0]
    if uu.shape[1] != m:
        raise ValueError("u must have one column per probability row")
    out = np.empty((n_draws, m), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t b, i, l, hit
    with nogil:
        for b in range(n_draws):
            for i in range(m):
                hit = 0
                for l in range(levels - 1):
                    if c[i, l] <= uu[b, i]:
                        hit += 1
                o[b, i] = <double> hit
    return out

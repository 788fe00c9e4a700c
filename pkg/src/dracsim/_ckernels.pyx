# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops. See ``_fallback.py`` for the reference semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, M_PI

cnp.import_array()


def modal_series(coeffs, modes, Py_ssize_t n):
    cdef double complex[::1] c = np.ascontiguousarray(coeffs, dtype=np.complex128)
    cdef double complex[::1] z = np.ascontiguousarray(modes, dtype=np.complex128)
    cdef Py_ssize_t m = c.shape[0]
    out_arr = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] out = out_arr
    acc_arr = np.array(c, dtype=np.complex128, copy=True)
    cdef double complex[::1] acc = acc_arr
    cdef Py_ssize_t k, j
    cdef double complex s
    with nogil:
        for k in range(n):
            s = 0
            for j in range(m):
                s = s + acc[j]
                acc[j] = acc[j] * z[j]
            out[k] = s
    return out_arr


cdef inline void _mul(double complex a2, double complex b2,
                      double complex* a, double complex* b) noexcept nogil:
    # (a2, b2) . (a, b) in the SU(2) parametrisation [[a, -b*], [b, a*]]
    cdef double complex a1 = a[0]
    cdef double complex b1 = b[0]
    a[0] = a2 * a1 - b2.conjugate() * b1
    b[0] = b2 * a1 + a2.conjugate() * b1


def dd_ensemble(seg_signal_phase, seg_duration, pulse_axis_phase, double theta, detunings_hz):
    cdef double[::1] sig = np.ascontiguousarray(seg_signal_phase, dtype=np.float64)
    cdef double[::1] dur = np.ascontiguousarray(seg_duration, dtype=np.float64)
    cdef double[::1] pax = np.ascontiguousarray(pulse_axis_phase, dtype=np.float64)
    cdef double[::1] det = np.ascontiguousarray(detunings_hz, dtype=np.float64)
    cdef Py_ssize_t n_seg = dur.shape[0]
    cdef Py_ssize_t n_pulse = pax.shape[0]
    cdef Py_ssize_t m = det.shape[0]
    out_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] out = out_arr

    pa_arr = np.empty(n_pulse, dtype=np.complex128)
    pb_arr = np.empty(n_pulse, dtype=np.complex128)
    cdef double complex[::1] pa = pa_arr
    cdef double complex[::1] pb = pb_arr
    cdef double c = cos(theta / 2.0)
    cdef double s = sin(theta / 2.0)
    cdef Py_ssize_t i, k
    for k in range(n_pulse):
        pa[k] = c
        pb[k] = -1j * s * (cos(pax[k]) + 1j * sin(pax[k]))

    cdef double complex a, b, fa
    cdef double phi
    cdef double h = sin(M_PI / 4.0)
    with nogil:
        for i in range(m):
            a = 1.0
            b = 0.0
            for k in range(n_seg):
                phi = sig[k] + 2.0 * M_PI * det[i] * dur[k]
                fa = cos(phi / 2.0) - 1j * sin(phi / 2.0)
                _mul(fa, 0.0, &a, &b)
                if k < n_pulse:
                    _mul(pa[k], pb[k], &a, &b)
            _mul(h, -1j * h, &a, &b)
            out[i] = -(a * b).real
    return out_arr

# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled flow-field kernel; semantics mirror ``fallback.py`` exactly."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, sqrt

cnp.import_array()


def field_velocity_batch(points, sources, vortices, gaussians, double eps):
    """See ``sheaftrack._kernels.fallback.field_velocity_batch``."""
    pts = np.ascontiguousarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError("points must have shape (P, 3)")
    cdef const double[:, ::1] x = pts
    cdef const double[:, ::1] src = np.ascontiguousarray(np.asarray(sources, dtype=np.float64).reshape(-1, 4))
    cdef const double[:, ::1] vor = np.ascontiguousarray(np.asarray(vortices, dtype=np.float64).reshape(-1, 7))
    cdef const double[:, ::1] gau = np.ascontiguousarray(np.asarray(gaussians, dtype=np.float64).reshape(-1, 9))

    out_arr = np.zeros((pts.shape[0], 3), dtype=np.float64)
    cdef double[:, ::1] out = out_arr

    cdef Py_ssize_t n_pts = x.shape[0]
    cdef Py_ssize_t n_src = src.shape[0]
    cdef Py_ssize_t n_vor = vor.shape[0]
    cdef Py_ssize_t n_gau = gau.shape[0]
    cdef Py_ssize_t p, k
    cdef double rx, ry, rz, dist, denom, scale
    cdef double ax, ay, az, axial, px_, py_, pz_
    cdef double eps3 = eps * eps * eps
    cdef double eps2 = eps * eps

    for p in range(n_pts):
        for k in range(n_src):
            rx = x[p, 0] - src[k, 0]
            ry = x[p, 1] - src[k, 1]
            rz = x[p, 2] - src[k, 2]
            dist = sqrt(rx * rx + ry * ry + rz * rz)
            scale = src[k, 3] / (dist * dist * dist + eps3)
            out[p, 0] += scale * rx
            out[p, 1] += scale * ry
            out[p, 2] += scale * rz

        for k in range(n_vor):
            rx = x[p, 0] - vor[k, 0]
            ry = x[p, 1] - vor[k, 1]
            rz = x[p, 2] - vor[k, 2]
            ax = vor[k, 3]
            ay = vor[k, 4]
            az = vor[k, 5]
            axial = rx * ax + ry * ay + rz * az
            px_ = rx - axial * ax
            py_ = ry - axial * ay
            pz_ = rz - axial * az
            denom = px_ * px_ + py_ * py_ + pz_ * pz_ + eps2
            scale = vor[k, 6] / denom
            # axis x perpendicular offset
            out[p, 0] += scale * (ay * pz_ - az * py_)
            out[p, 1] += scale * (az * px_ - ax * pz_)
            out[p, 2] += scale * (ax * py_ - ay * px_)

        for k in range(n_gau):
            rx = x[p, 0] - gau[k, 0]
            ry = x[p, 1] - gau[k, 1]
            rz = x[p, 2] - gau[k, 2]
            ax = gau[k, 3]
            ay = gau[k, 4]
            az = gau[k, 5]
            axial = rx * ax + ry * ay + rz * az
            px_ = rx - axial * ax
            py_ = ry - axial * ay
            pz_ = rz - axial * az
            scale = gau[k, 6] * exp(
                -(px_ * px_ + py_ * py_ + pz_ * pz_) / (2.0 * gau[k, 7] * gau[k, 7])
                - axial * axial / (2.0 * gau[k, 8] * gau[k, 8])
            )
            out[p, 0] += scale * ax
            out[p, 1] += scale * ay
            out[p, 2] += scale * az

    return out_arr

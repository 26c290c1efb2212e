# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the numpy kernels in ``pyref``.

Loop-level implementations of the per-point bandwidth search, the
heavy-tailed embedding forces, the fused Adam update, and the
inverse-distance grid. Semantics must match ``pyref`` (same update
protocol, same guards); the parity tests hold both to a tight tolerance.
"""

import numpy as np

cimport cython
cimport numpy as cnp
from libc.math cimport exp, fabs, log, sqrt, isinf, INFINITY, NAN

cnp.import_array()

BACKEND = "cython"

ctypedef fused floating:
    float
    double


def adam_update(floating[::1] param, floating[::1] grad,
                floating[::1] m, floating[::1] v,
                double bc1, double bc2, double lr,
                double beta1, double beta2, double eps):
    cdef Py_ssize_t i, n = param.shape[0]
    cdef double mh, vh
    for i in range(n):
        m[i] = <floating>(beta1 * m[i] + (1.0 - beta1) * grad[i])
        v[i] = <floating>(beta2 * v[i] + (1.0 - beta2) * (grad[i] * grad[i]))
        mh = m[i] / bc1
        vh = v[i] / bc2
        param[i] -= <floating>(lr * mh / (sqrt(vh) + eps))


def calibrate_bandwidths(double[:, ::1] sqd, double perplexity,
                         int n_steps=50, double tol=1e-5):
    cdef Py_ssize_t n = sqd.shape[0]
    cdef cnp.ndarray[double, ndim=1] beta_arr = np.ones(n, dtype=np.float64)
    cdef double[::1] beta = beta_arr
    cdef double target = log(perplexity)
    cdef double lo, hi, b, w, sw, sdw, entropy, diff
    cdef Py_ssize_t i, j
    cdef int step
    for i in range(n):
        lo = -INFINITY
        hi = INFINITY
        b = 1.0
        for step in range(n_steps):
            sw = 0.0
            sdw = 0.0
            for j in range(n):
                if j == i:
                    continue
                w = exp(-sqd[i, j] * b)
                sw += w
                sdw += sqd[i, j] * w
            if sw < 1e-300:
                sw = 1e-300
            entropy = log(sw) + b * sdw / sw
            diff = entropy - target
            if fabs(diff) <= tol:
                break
            if diff > 0.0:
                lo = b
                if isinf(hi):
                    b = b * 2.0
                else:
                    b = (lo + hi) * 0.5
            else:
                hi = b
                if isinf(lo):
                    b = b * 0.5
                else:
                    b = (lo + hi) * 0.5
        beta[i] = b
    return beta_arr


def studentt_forces(double[:, ::1] p, double[:, ::1] y, double eps=1e-12):
    cdef Py_ssize_t n = y.shape[0]
    cdef cnp.ndarray[double, ndim=2] grad_arr = np.zeros((n, 2), dtype=np.float64)
    cdef double[:, ::1] grad = grad_arr
    cdef cnp.ndarray[double, ndim=2] w_arr = np.empty((n, n), dtype=np.float64)
    cdef double[:, ::1] w = w_arr
    cdef double z = 0.0, kl = 0.0
    cdef double dx, dy, wij, qij, coef
    cdef Py_ssize_t i, j
    for i in range(n):
        w[i, i] = 0.0
        for j in range(i + 1, n):
            dx = y[i, 0] - y[j, 0]
            dy = y[i, 1] - y[j, 1]
            wij = 1.0 / (1.0 + dx * dx + dy * dy)
            w[i, j] = wij
            w[j, i] = wij
            z += 2.0 * wij
    if z < eps:
        z = eps
    for i in range(n):
        for j in range(n):
            if j == i:
                continue
            qij = w[i, j] / z
            if qij < eps:
                qij = eps
            if p[i, j] > 0.0:
                kl += p[i, j] * log(p[i, j] / qij)
            coef = 4.0 * (p[i, j] - qij) * w[i, j]
            grad[i, 0] += coef * (y[i, 0] - y[j, 0])
            grad[i, 1] += coef * (y[i, 1] - y[j, 1])
    return grad_arr, kl


def idw_grid(double[::1] px, double[::1] py, double[::1] values,
             int grid_n, double power=2.0, double eps=1e-12):
    cdef Py_ssize_t k = px.shape[0]
    cdef cnp.ndarray[double, ndim=2] field_arr = np.empty((grid_n, grid_n), dtype=np.float64)
    cdef double[:, ::1] field = field_arr
    cdef double gx, gy, d2, d, wgt, num, den, step
    cdef bint inverse_square = power == 2.0
    cdef Py_ssize_t r, c, j, hit
    step = 2.0 / grid_n
    for r in range(grid_n):
        gy = (r + 0.5) * step - 1.0
        for c in range(grid_n):
            gx = (c + 0.5) * step - 1.0
            if gx * gx + gy * gy > 1.0:
                field[r, c] = NAN
                continue
            num = 0.0
            den = 0.0
            hit = -1
            for j in range(k):
                d2 = (gx - px[j]) * (gx - px[j]) + (gy - py[j]) * (gy - py[j])
                if d2 <= eps * eps:
                    hit = j
                    break
                if inverse_square:
                    wgt = 1.0 / d2
                else:
                    d = sqrt(d2)
                    if d < eps:
                        d = eps
                    wgt = 1.0 / d ** power
                num += wgt * values[j]
                den += wgt
            if hit >= 0:
                field[r, c] = values[hit]
            else:
                field[r, c] = num / den
    return field_arr

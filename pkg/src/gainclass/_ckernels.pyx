# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; same contracts as ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport log, INFINITY, fabs

cnp.import_array()

cdef double _TIE_REL = 1e-12
TIE_REL = _TIE_REL
FIXED = 0
MAX_ITERS = 1
COLLAPSE = 2
STALLED = 3


cdef inline double _xlogx(double a) nogil:
    return a * log(a) if a > 0 else 0.0


def exhaustive_search(x, double floor):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0]
    cdef long long total = 1LL << (n - 1)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] vals_arr = np.empty(total)
    cdef double[::1] vals = vals_arr
    cdef long long code
    cdef Py_ssize_t j
    cdef double c1, c2, s1, s2, d, q1, q2, mu1, mu2, v1, v2, a1, a2, best, lim
    with nogil:
        vals[0] = INFINITY
        for code in range(1, total):
            c1 = 0.0; c2 = 0.0; s1 = 0.0; s2 = 0.0
            for j in range(n):
                if (code >> (n - 1 - j)) & 1:
                    c2 += 1.0; s2 += xv[j]
                else:
                    c1 += 1.0; s1 += xv[j]
            mu1 = s1 / c1
            mu2 = s2 / c2
            q1 = 0.0; q2 = 0.0
            for j in range(n):
                if (code >> (n - 1 - j)) & 1:
                    d = xv[j] - mu2; q2 += d * d
                else:
                    d = xv[j] - mu1; q1 += d * d
            v1 = q1 / c1
            v2 = q2 / c2
            if v1 < floor:
                v1 = floor
            if v2 < floor:
                v2 = floor
            a1 = c1 / n
            a2 = c2 / n
            vals[code] = -2.0 * _xlogx(a1) + a1 * log(v1) - 2.0 * _xlogx(a2) + a2 * log(v2)
        best = INFINITY
        for code in range(1, total):
            if vals[code] < best:
                best = vals[code]
        lim = best + _TIE_REL * (fabs(best) if fabs(best) > 1.0 else 1.0)
        for code in range(1, total):
            if vals[code] <= lim:
                break
    return int(code), float(vals[code])


cdef int _params(const double[::1] x, double[::1] m, double floor, double* out) noexcept nogil:
    # out = [a1, mu1, v1, a2, mu2, v2]; returns 0 when a class is empty
    cdef Py_ssize_t j, n = x.shape[0]
    cdef double w1 = 0.0, w2 = 0.0, s1 = 0.0, s2 = 0.0, q1 = 0.0, q2 = 0.0, d, mu1, mu2, v1, v2
    for j in range(n):
        w1 += m[j]
        w2 += 1.0 - m[j]
        s1 += m[j] * x[j]
        s2 += (1.0 - m[j]) * x[j]
    if w1 <= 0 or w2 <= 0:
        return 0
    mu1 = s1 / w1
    mu2 = s2 / w2
    for j in range(n):
        d = x[j] - mu1
        q1 += m[j] * d * d
        d = x[j] - mu2
        q2 += (1.0 - m[j]) * d * d
    v1 = q1 / w1
    v2 = q2 / w2
    out[0] = w1 / n; out[1] = mu1; out[2] = v1 if v1 > floor else floor
    out[3] = w2 / n; out[4] = mu2; out[5] = v2 if v2 > floor else floor
    return 1


cdef inline double _lg(double* p) noexcept nogil:
    return -2.0 * p[0] * log(p[0]) + p[0] * log(p[2]) - 2.0 * p[3] * log(p[3]) + p[3] * log(p[5])


cdef void _map(const double[::1] x, double* p, double tie, double[::1] out) noexcept nogil:
    cdef Py_ssize_t j, n = x.shape[0]
    cdef double r, c1, c2
    c1 = log(p[0]) - 0.5 * log(p[2])
    c2 = log(p[3]) - 0.5 * log(p[5])
    for j in range(n):
        r = (c1 - (x[j] - p[1]) * (x[j] - p[1]) / (2.0 * p[2])) - (c2 - (x[j] - p[4]) * (x[j] - p[4]) / (2.0 * p[5]))
        if r > 0:
            out[j] = 1.0
        elif r < 0:
            out[j] = 0.0
        else:
            out[j] = tie


cdef inline bint _same(double[::1] a, double[::1] b) noexcept nogil:
    cdef Py_ssize_t j
    for j in range(a.shape[0]):
        if a[j] != b[j]:
            return False
    return True


def fixed_point(x, m1, double floor, int max_iters, double tol, double tie):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] m_arr = np.array(m1, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] new_arr = np.empty_like(m_arr)
    cdef double[::1] m = m_arr
    cdef double[::1] new = new_arr
    cdef double p[6]
    cdef double q[6]
    cdef double lg, lg_new, decrease, scale
    cdef int it = 0, status = MAX_ITERS, k
    trace = []
    if not _params(xv, m, floor, p):
        return m_arr, 0, np.empty(0), COLLAPSE
    lg = _lg(p)
    trace.append(lg)
    while it < max_iters:
        it += 1
        _map(xv, p, tie, new)
        if _same(new, m):
            status = FIXED
            break
        if not _params(xv, new, floor, q):
            status = COLLAPSE
            break
        lg_new = _lg(q)
        scale = fabs(lg) if fabs(lg) > 1.0 else 1.0
        if lg_new > lg + _TIE_REL * scale:
            status = STALLED
            break
        decrease = lg - lg_new
        m[:] = new
        for k in range(6):
            p[k] = q[k]
        lg = lg_new
        trace.append(lg)
        if decrease < tol:
            _map(xv, p, tie, new)
            if _same(new, m):
                status = FIXED
                break
    return m_arr, it, np.asarray(trace, dtype=np.float64), status


def best_flip(x, m1, double floor):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[::1] mv = np.ascontiguousarray(m1, dtype=np.float64)
    cdef Py_ssize_t j, n = xv.shape[0]
    cdef double mean = 0.0, c1 = 0.0, s1 = 0.0, q1 = 0.0, c2 = 0.0, s2 = 0.0, q2 = 0.0
    cdef double xc, sg, nc1, nc2, v1, v2, a1, a2, val, best = INFINITY
    cdef Py_ssize_t best_j = -1
    for j in range(n):
        mean += xv[j]
    mean /= n
    for j in range(n):
        xc = xv[j] - mean
        if mv[j] > 0.5:
            c1 += 1.0; s1 += xc; q1 += xc * xc
        else:
            c2 += 1.0; s2 += xc; q2 += xc * xc
    for j in range(n):
        xc = xv[j] - mean
        sg = -1.0 if mv[j] > 0.5 else 1.0
        nc1 = c1 + sg
        nc2 = c2 - sg
        if nc1 <= 0 or nc2 <= 0:
            continue
        v1 = (q1 + sg * xc * xc) / nc1 - ((s1 + sg * xc) / nc1) ** 2
        v2 = (q2 - sg * xc * xc) / nc2 - ((s2 - sg * xc) / nc2) ** 2
        if v1 < floor:
            v1 = floor
        if v2 < floor:
            v2 = floor
        a1 = nc1 / n
        a2 = nc2 / n
        val = -2.0 * (a1 * log(a1) + a2 * log(a2)) + a1 * log(v1) + a2 * log(v2)
        if val < best:
            best = val
            best_j = j
    return int(best_j), float(best)


def interval_scan(xs, double floor):
    cdef const double[::1] xv = np.ascontiguousarray(xs, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], l, r, j
    cdef cnp.ndarray[cnp.float64_t, ndim=1] s_arr = np.zeros(n + 1)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] q_arr = np.zeros(n + 1)
    cdef double[::1] sc = s_arr
    cdef double[::1] qc = q_arr
    cdef double mean = 0.0, d, c, co, s, q, so, qo, v_in, v_out, a, val, best = INFINITY
    cdef Py_ssize_t bl = -1, br = -1
    with nogil:
        for j in range(n):
            mean += xv[j]
        mean /= n
        for j in range(n):
            d = xv[j] - mean
            sc[j + 1] = sc[j] + d
            qc[j + 1] = qc[j] + d * d
        for l in range(n):
            for r in range(l, n - 1):
                c = r - l + 1
                co = n - c
                s = sc[r + 1] - sc[l]
                q = qc[r + 1] - qc[l]
                so = sc[n] - s
                qo = qc[n] - q
                v_in = q / c - (s / c) * (s / c)
                v_out = qo / co - (so / co) * (so / co)
                if v_in < floor:
                    v_in = floor
                if v_out < floor:
                    v_out = floor
                a = c / n
                val = -2.0 * (a * log(a) + (1.0 - a) * log(1.0 - a)) + a * log(v_in) + (1.0 - a) * log(v_out)
                if val < best:
                    best = val
                    bl = l
                    br = r
    return int(bl), int(br), float(best)

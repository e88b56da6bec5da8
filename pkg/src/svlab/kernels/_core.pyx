# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels. Mirrors the API of ``svlab.kernels.pure``."""

from libc.math cimport exp, log, sqrt, tanh, isfinite

BACKEND = "cython"


def mm_nn(double[::1] a, double[::1] b, Py_ssize_t m, Py_ssize_t k, Py_ssize_t n,
          double[::1] out):
    cdef Py_ssize_t i, p, j, ia, ib, io
    cdef double aip
    for i in range(m):
        ia = i * k
        io = i * n
        for p in range(k):
            aip = a[ia + p]
            if aip == 0.0:
                continue
            ib = p * n
            for j in range(n):
                out[io + j] += aip * b[ib + j]


def mm_nt(double[::1] a, double[::1] b, Py_ssize_t m, Py_ssize_t k, Py_ssize_t n,
          double[::1] out):
    cdef Py_ssize_t i, p, j, ia, ib, io
    cdef double s
    for i in range(m):
        ia = i * k
        io = i * n
        for j in range(n):
            ib = j * k
            s = 0.0
            for p in range(k):
                s += a[ia + p] * b[ib + p]
            out[io + j] += s


def mm_tn(double[::1] a, double[::1] b, Py_ssize_t m, Py_ssize_t k, Py_ssize_t n,
          double[::1] out):
    cdef Py_ssize_t i, p, j, ia, ib, io
    cdef double api
    for p in range(k):
        ia = p * m
        ib = p * n
        for i in range(m):
            api = a[ia + i]
            if api == 0.0:
                continue
            io = i * n
            for j in range(n):
                out[io + j] += api * b[ib + j]


def transpose(double[::1] a, Py_ssize_t m, Py_ssize_t n, double[::1] out):
    cdef Py_ssize_t i, j
    for i in range(m):
        for j in range(n):
            out[j * m + i] = a[i * n + j]


def vacc(double[::1] a, double[::1] out):
    cdef Py_ssize_t i
    for i in range(a.shape[0]):
        out[i] += a[i]


def vaxpy(double alpha, double[::1] a, double[::1] out):
    cdef Py_ssize_t i
    for i in range(a.shape[0]):
        out[i] += alpha * a[i]


def vadd(double[::1] a, double[::1] b, double[::1] out):
    cdef Py_ssize_t i
    for i in range(a.shape[0]):
        out[i] = a[i] + b[i]


def vsub(double[::1] a, double[::1] b, double[::1] out):
    cdef Py_ssize_t i
    for i in range(a.shape[0]):
        out[i] = a[i] - b[i]


def vmul(double[::1] a, double[::1] b, double[::1] out):
    cdef Py_ssize_t i
    for i in range(a.shape[0]):
        out[i] = a[i] * b[i]


def vmul_acc(double[::1] a, double[::1] b, double[::1] out):
    cdef Py_ssize_t i
    for i in range(a.shape[0]):
        out[i] += a[i] * b[i]


def vdiv_acc(double[::1] a, double[::1] b, double[::1] out):
    cdef Py_ssize_t i
    for i in range(a.shape[0]):
        out[i] += a[i] / b[i]


def vscale(double alpha, double[::1] a, double[::1] out):
    cdef Py_ssize_t i
    for i in range(a.shape[0]):
        out[i] = alpha * a[i]


def vtanh(double[::1] a, double[::1] out):
    cdef Py_ssize_t i
    for i in range(a.shape[0]):
        out[i] = tanh(a[i])


def vtanh_bwd(double[::1] y, double[::1] gy, double[::1] gx):
    cdef Py_ssize_t i
    for i in range(y.shape[0]):
        gx[i] += gy[i] * (1.0 - y[i] * y[i])


def vexp(double[::1] a, double[::1] out):
    cdef Py_ssize_t i
    for i in range(a.shape[0]):
        out[i] = exp(a[i])


def vlog(double[::1] a, double[::1] out):
    cdef Py_ssize_t i
    for i in range(a.shape[0]):
        out[i] = log(a[i])


def vsqrt(double[::1] a, double[::1] out):
    cdef Py_ssize_t i
    for i in range(a.shape[0]):
        out[i] = sqrt(a[i])


def vsqrt_bwd(double[::1] y, double[::1] gy, double[::1] gx):
    cdef Py_ssize_t i
    for i in range(y.shape[0]):
        gx[i] += gy[i] / (2.0 * y[i])


def vclampmin(double c, double[::1] a, double[::1] out):
    cdef Py_ssize_t i
    for i in range(a.shape[0]):
        out[i] = a[i] if a[i] > c else c


def vclampmin_bwd(double c, double[::1] x, double[::1] gy, double[::1] gx):
    cdef Py_ssize_t i
    for i in range(x.shape[0]):
        if x[i] > c:
            gx[i] += gy[i]


def dot(double[::1] a, double[::1] b):
    cdef Py_ssize_t i
    cdef double s = 0.0
    for i in range(a.shape[0]):
        s += a[i] * b[i]
    return s


def ksum(double[::1] a):
    cdef Py_ssize_t i
    cdef double s = 0.0
    for i in range(a.shape[0]):
        s += a[i]
    return s


def softmax_rows(double[::1] x, Py_ssize_t r, Py_ssize_t c, double[::1] out):
    cdef Py_ssize_t i, j, base
    cdef double hi, s, e, inv, chk, v
    for i in range(r):
        base = i * c
        chk = 0.0
        hi = x[base]
        for j in range(c):
            v = x[base + j]
            chk += v
            if v > hi:
                hi = v
        if not isfinite(chk):
            return 1
        s = 0.0
        for j in range(c):
            e = exp(x[base + j] - hi)
            out[base + j] = e
            s += e
        inv = 1.0 / s
        for j in range(c):
            out[base + j] *= inv
    return 0


def softmax_rows_bwd(double[::1] y, double[::1] gy, Py_ssize_t r, Py_ssize_t c,
                     double[::1] gx):
    cdef Py_ssize_t i, j, base
    cdef double d
    for i in range(r):
        base = i * c
        d = 0.0
        for j in range(c):
            d += y[base + j] * gy[base + j]
        for j in range(c):
            gx[base + j] += y[base + j] * (gy[base + j] - d)


def logsoftmax_rows(double[::1] x, Py_ssize_t r, Py_ssize_t c, double[::1] out):
    cdef Py_ssize_t i, j, base
    cdef double hi, s, lse, chk, v
    for i in range(r):
        base = i * c
        chk = 0.0
        hi = x[base]
        for j in range(c):
            v = x[base + j]
            chk += v
            if v > hi:
                hi = v
        if not isfinite(chk):
            return 1
        s = 0.0
        for j in range(c):
            s += exp(x[base + j] - hi)
        lse = hi + log(s)
        for j in range(c):
            out[base + j] = x[base + j] - lse
    return 0


def logsoftmax_rows_bwd(double[::1] lsm, double[::1] gy, Py_ssize_t r, Py_ssize_t c,
                        double[::1] gx):
    cdef Py_ssize_t i, j, base
    cdef double s
    for i in range(r):
        base = i * c
        s = 0.0
        for j in range(c):
            s += gy[base + j]
        for j in range(c):
            gx[base + j] += gy[base + j] - exp(lsm[base + j]) * s


def layernorm_rows(double[::1] x, Py_ssize_t r, Py_ssize_t c, double eps,
                   double[::1] out, double[::1] stats):
    cdef Py_ssize_t i, j, base
    cdef double mu, var, d, rstd
    for i in range(r):
        base = i * c
        mu = 0.0
        for j in range(c):
            mu += x[base + j]
        mu /= c
        var = 0.0
        for j in range(c):
            d = x[base + j] - mu
            var += d * d
        var /= c
        rstd = 1.0 / sqrt(var + eps)
        stats[2 * i] = mu
        stats[2 * i + 1] = rstd
        for j in range(c):
            out[base + j] = (x[base + j] - mu) * rstd


def layernorm_rows_bwd(double[::1] y, double[::1] stats, double[::1] gy,
                       Py_ssize_t r, Py_ssize_t c, double[::1] gx):
    cdef Py_ssize_t i, j, base
    cdef double rstd, m1, m2
    for i in range(r):
        base = i * c
        rstd = stats[2 * i + 1]
        m1 = 0.0
        m2 = 0.0
        for j in range(c):
            m1 += gy[base + j]
            m2 += gy[base + j] * y[base + j]
        m1 /= c
        m2 /= c
        for j in range(c):
            gx[base + j] += rstd * (gy[base + j] - m1 - y[base + j] * m2)


def adam_update(double[::1] p, double[::1] g, double[::1] m, double[::1] v,
                double lr, double b1, double b2, double eps, double bc1, double bc2):
    cdef Py_ssize_t i
    cdef double gi
    for i in range(p.shape[0]):
        gi = g[i]
        m[i] = b1 * m[i] + (1.0 - b1) * gi
        v[i] = b2 * v[i] + (1.0 - b2) * gi * gi
        p[i] -= lr * (m[i] / bc1) / (sqrt(v[i] / bc2) + eps)

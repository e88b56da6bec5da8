"""Pure-Python fallback kernels.

Same flat-buffer API as the compiled ``_core`` extension: every function
works on ``array('d')`` buffers in row-major order. Accumulating kernels
(``mm_*``, ``v*_acc``, ``*_bwd``) add into ``out`` so gradient buffers can
be reused without an extra pass.
"""

import math

BACKEND = "pure"


def mm_nn(a, b, m, k, n, out):
    # out[m x n] += a[m x k] . b[k x n]
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


def mm_nt(a, b, m, k, n, out):
    # out[m x n] += a[m x k] . b^T, b stored as [n x k]
    for i in range(m):
        ia = i * k
        io = i * n
        for j in range(n):
            ib = j * k
            s = 0.0
            for p in range(k):
                s += a[ia + p] * b[ib + p]
            out[io + j] += s


def mm_tn(a, b, m, k, n, out):
    # out[m x n] += a^T . b, a stored as [k x m], b as [k x n]
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


def transpose(a, m, n, out):
    for i in range(m):
        for j in range(n):
            out[j * m + i] = a[i * n + j]


def vacc(a, out):
    for i in range(len(a)):
        out[i] += a[i]


def vaxpy(alpha, a, out):
    for i in range(len(a)):
        out[i] += alpha * a[i]


def vadd(a, b, out):
    for i in range(len(a)):
        out[i] = a[i] + b[i]


def vsub(a, b, out):
    for i in range(len(a)):
        out[i] = a[i] - b[i]


def vmul(a, b, out):
    for i in range(len(a)):
        out[i] = a[i] * b[i]


def vmul_acc(a, b, out):
    for i in range(len(a)):
        out[i] += a[i] * b[i]


def vdiv_acc(a, b, out):
    for i in range(len(a)):
        out[i] += a[i] / b[i]


def vscale(alpha, a, out):
    for i in range(len(a)):
        out[i] = alpha * a[i]


def vtanh(a, out):
    for i in range(len(a)):
        out[i] = math.tanh(a[i])


def vtanh_bwd(y, gy, gx):
    for i in range(len(y)):
        gx[i] += gy[i] * (1.0 - y[i] * y[i])


def vexp(a, out):
    for i in range(len(a)):
        out[i] = math.exp(a[i])


def vlog(a, out):
    for i in range(len(a)):
        out[i] = math.log(a[i])


def vsqrt(a, out):
    for i in range(len(a)):
        out[i] = math.sqrt(a[i])


def vsqrt_bwd(y, gy, gx):
    for i in range(len(y)):
        gx[i] += gy[i] / (2.0 * y[i])


def vclampmin(c, a, out):
    for i in range(len(a)):
        out[i] = a[i] if a[i] > c else c


def vclampmin_bwd(c, x, gy, gx):
    for i in range(len(x)):
        if x[i] > c:
            gx[i] += gy[i]


def dot(a, b):
    s = 0.0
    for i in range(len(a)):
        s += a[i] * b[i]
    return s


def ksum(a):
    s = 0.0
    for i in range(len(a)):
        s += a[i]
    return s


def softmax_rows(x, r, c, out):
    # Returns nonzero status on non-finite input.
    for i in range(r):
        base = i * c
        chk = 0.0
        hi = x[base]
        for j in range(c):
            v = x[base + j]
            chk += v
            if v > hi:
                hi = v
        if not math.isfinite(chk):
            return 1
        s = 0.0
        for j in range(c):
            e = math.exp(x[base + j] - hi)
            out[base + j] = e
            s += e
        inv = 1.0 / s
        for j in range(c):
            out[base + j] *= inv
    return 0


def softmax_rows_bwd(y, gy, r, c, gx):
    # gx += y * (gy - sum_j y_j gy_j), per row
    for i in range(r):
        base = i * c
        d = 0.0
        for j in range(c):
            d += y[base + j] * gy[base + j]
        for j in range(c):
            gx[base + j] += y[base + j] * (gy[base + j] - d)


def logsoftmax_rows(x, r, c, out):
    for i in range(r):
        base = i * c
        chk = 0.0
        hi = x[base]
        for j in range(c):
            v = x[base + j]
            chk += v
            if v > hi:
                hi = v
        if not math.isfinite(chk):
            return 1
        s = 0.0
        for j in range(c):
            s += math.exp(x[base + j] - hi)
        lse = hi + math.log(s)
        for j in range(c):
            out[base + j] = x[base + j] - lse
    return 0


def logsoftmax_rows_bwd(lsm, gy, r, c, gx):
    # gx += gy - softmax * sum_j gy_j, per row
    for i in range(r):
        base = i * c
        s = 0.0
        for j in range(c):
            s += gy[base + j]
        for j in range(c):
            gx[base + j] += gy[base + j] - math.exp(lsm[base + j]) * s


def layernorm_rows(x, r, c, eps, out, stats):
    # stats holds (mu, rstd) per row, needed by the backward pass.
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
        rstd = 1.0 / math.sqrt(var + eps)
        stats[2 * i] = mu
        stats[2 * i + 1] = rstd
        for j in range(c):
            out[base + j] = (x[base + j] - mu) * rstd


def layernorm_rows_bwd(y, stats, gy, r, c, gx):
    # gx += rstd * (gy - mean(gy) - y * mean(gy*y)), per row
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


def adam_update(p, g, m, v, lr, b1, b2, eps, bc1, bc2):
    # bc1/bc2 are the bias-correction denominators 1-b1^t, 1-b2^t.
    for i in range(len(p)):
        gi = g[i]
        m[i] = b1 * m[i] + (1.0 - b1) * gi
        v[i] = b2 * v[i] + (1.0 - b2) * gi * gi
        p[i] -= lr * (m[i] / bc1) / (math.sqrt(v[i] / bc2) + eps)

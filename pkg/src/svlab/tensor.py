"""Dense 64-bit tensors with reverse-mode differentiation.

Tensors are flat ``array('d')`` buffers in row-major order. Each
differentiable operation records its inputs and a backward closure on the
result, forming an implicit graph; ``Tensor.backward`` walks it once in
reverse topological order. Gradient buffers are allocated lazily on first
touch. Tensors that are not attached to a graph are plain value objects.

All heavy lifting happens in ``svlab.kernels`` (compiled when available).
"""

from __future__ import annotations

import math
import struct
import sys
from array import array
from contextlib import contextmanager

from . import kernels as K
from .errors import NumericError, ShapeError

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block (forward-only evaluation)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled():
    return _GRAD_ENABLED


def _zeros_arr(n):
    return array("d", bytes(8 * n))


def _prod(shape):
    p = 1
    for s in shape:
        p *= s
    return p


class Tensor:
    __slots__ = ("shape", "data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, shape, data=None, requires_grad=False):
        shape = tuple(int(s) for s in shape)
        if not shape or any(s <= 0 for s in shape):
            raise ShapeError(f"invalid shape {shape}: dimensions must be positive")
        n = _prod(shape)
        if data is None:
            data = _zeros_arr(n)
        elif not isinstance(data, array) or data.typecode != "d":
            data = array("d", data)
        if len(data) != n:
            raise ShapeError(
                f"data length {len(data)} does not match shape {shape} (need {n})"
            )
        self.shape = shape
        self.data = data
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    # -- construction helpers -------------------------------------------------

    @classmethod
    def zeros(cls, shape, requires_grad=False):
        return cls(shape, None, requires_grad)

    @classmethod
    def full(cls, shape, value, requires_grad=False):
        t = cls(shape, None, requires_grad)
        for i in range(len(t.data)):
            t.data[i] = value
        return t

    @classmethod
    def vector(cls, values, requires_grad=False):
        values = list(values)
        return cls((len(values),), values, requires_grad)

    @classmethod
    def from_rows(cls, rows, requires_grad=False):
        rows = [list(r) for r in rows]
        ncols = len(rows[0])
        if any(len(r) != ncols for r in rows):
            raise ShapeError("from_rows: ragged rows")
        flat = [v for r in rows for v in r]
        return cls((len(rows), ncols), flat, requires_grad)

    @classmethod
    def scalar(cls, value, requires_grad=False):
        return cls((1,), [value], requires_grad)

    # -- basic accessors ------------------------------------------------------

    @property
    def size(self):
        return len(self.data)

    def item(self):
        if self.size != 1:
            raise ShapeError(f"item() on non-scalar tensor of shape {self.shape}")
        return self.data[0]

    def tolist(self):
        if len(self.shape) == 2:
            r, c = self.shape
            return [list(self.data[i * c : (i + 1) * c]) for i in range(r)]
        return list(self.data)

    def copy(self, requires_grad=None):
        rg = self.requires_grad if requires_grad is None else requires_grad
        return Tensor(self.shape, array("d", self.data), rg)

    def detach(self):
        return Tensor(self.shape, self.data, False)

    def is_finite(self):
        return all(map(math.isfinite, self.data))

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- autodiff -------------------------------------------------------------

    def _gbuf(self):
        if self.grad is None:
            self.grad = _zeros_arr(self.size)
        return self.grad

    def zero_grad(self):
        self.grad = None

    def backward(self):
        if self.size != 1:
            raise ShapeError(f"backward: loss must be scalar, got shape {self.shape}")
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self._gbuf()[0] = 1.0
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def _result(shape, data, parents, backward):
    out = Tensor(shape, data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _same_shape(a, b, op):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


# -- elementwise ---------------------------------------------------------------


def add(a, b):
    _same_shape(a, b, "add")
    out = _zeros_arr(a.size)
    K.vadd(a.data, b.data, out)

    def bwd(g):
        if a.requires_grad:
            K.vacc(g, a._gbuf())
        if b.requires_grad:
            K.vacc(g, b._gbuf())

    return _result(a.shape, out, (a, b), bwd)


def sub(a, b):
    _same_shape(a, b, "sub")
    out = _zeros_arr(a.size)
    K.vsub(a.data, b.data, out)

    def bwd(g):
        if a.requires_grad:
            K.vacc(g, a._gbuf())
        if b.requires_grad:
            K.vaxpy(-1.0, g, b._gbuf())

    return _result(a.shape, out, (a, b), bwd)


def mul(a, b):
    _same_shape(a, b, "mul")
    out = _zeros_arr(a.size)
    K.vmul(a.data, b.data, out)

    def bwd(g):
        if a.requires_grad:
            K.vmul_acc(g, b.data, a._gbuf())
        if b.requires_grad:
            K.vmul_acc(g, a.data, b._gbuf())

    return _result(a.shape, out, (a, b), bwd)


def scale(a, alpha):
    alpha = float(alpha)
    out = _zeros_arr(a.size)
    K.vscale(alpha, a.data, out)

    def bwd(g):
        if a.requires_grad:
            K.vaxpy(alpha, g, a._gbuf())

    return _result(a.shape, out, (a,), bwd)


def tanh(a):
    out = _zeros_arr(a.size)
    K.vtanh(a.data, out)

    def bwd(g, _y=out):
        if a.requires_grad:
            K.vtanh_bwd(_y, g, a._gbuf())

    return _result(a.shape, out, (a,), bwd)


def exp(a):
    out = _zeros_arr(a.size)
    K.vexp(a.data, out)

    def bwd(g, _y=out):
        if a.requires_grad:
            K.vmul_acc(g, _y, a._gbuf())

    return _result(a.shape, out, (a,), bwd)


def log(a):
    out = _zeros_arr(a.size)
    K.vlog(a.data, out)

    def bwd(g):
        if a.requires_grad:
            K.vdiv_acc(g, a.data, a._gbuf())

    return _result(a.shape, out, (a,), bwd)


def sqrt(a):
    out = _zeros_arr(a.size)
    K.vsqrt(a.data, out)

    def bwd(g, _y=out):
        if a.requires_grad:
            K.vsqrt_bwd(_y, g, a._gbuf())

    return _result(a.shape, out, (a,), bwd)


def clamp_min(a, floor):
    floor = float(floor)
    out = _zeros_arr(a.size)
    K.vclampmin(floor, a.data, out)

    def bwd(g):
        if a.requires_grad:
            K.vclampmin_bwd(floor, a.data, g, a._gbuf())

    return _result(a.shape, out, (a,), bwd)


# -- structure -----------------------------------------------------------------


def reshape(a, shape):
    shape = tuple(int(s) for s in shape)
    if _prod(shape) != a.size:
        raise ShapeError(f"reshape: {a.shape} has {a.size} elements, {shape} needs {_prod(shape)}")
    out = array("d", a.data)

    def bwd(g):
        if a.requires_grad:
            K.vacc(g, a._gbuf())

    return _result(shape, out, (a,), bwd)


def transpose(a):
    if len(a.shape) != 2:
        raise ShapeError(f"transpose: need a 2-D tensor, got shape {a.shape}")
    m, n = a.shape
    out = _zeros_arr(a.size)
    K.transpose(a.data, m, n, out)

    def bwd(g):
        if a.requires_grad:
            gt = _zeros_arr(a.size)
            K.transpose(g, n, m, gt)
            K.vacc(gt, a._gbuf())

    return _result((n, m), out, (a,), bwd)


def concat_rows(tensors):
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat_rows: empty input")
    shapes = [t.shape for t in tensors]
    if any(len(s) != 2 for s in shapes):
        raise ShapeError(f"concat_rows: need 2-D tensors, got shapes {shapes}")
    ncols = shapes[0][1]
    if any(s[1] != ncols for s in shapes):
        raise ShapeError(f"concat_rows: column counts differ: {shapes}")
    nrows = sum(s[0] for s in shapes)
    out = array("d")
    for t in tensors:
        out.extend(t.data)

    def bwd(g):
        off = 0
        for t in tensors:
            if t.requires_grad:
                K.vacc(g[off : off + t.size], t._gbuf())
            off += t.size

    return _result((nrows, ncols), out, tensors, bwd)


# -- linear algebra ------------------------------------------------------------


def matmul(a, b):
    if len(a.shape) != 2 or len(b.shape) != 2:
        raise ShapeError(f"matmul: need 2-D tensors, got shapes {a.shape} and {b.shape}")
    m, k = a.shape
    kb, n = b.shape
    if k != kb:
        raise ShapeError(f"matmul: inner dimensions disagree: {a.shape} vs {b.shape}")
    out = _zeros_arr(m * n)
    K.mm_nn(a.data, b.data, m, k, n, out)

    def bwd(g):
        if a.requires_grad:
            K.mm_nt(g, b.data, m, n, k, a._gbuf())
        if b.requires_grad:
            K.mm_tn(a.data, g, k, m, n, b._gbuf())

    return _result((m, n), out, (a, b), bwd)


def sum_all(a):
    out = array("d", [K.ksum(a.data)])

    def bwd(g):
        if a.requires_grad:
            gb = a._gbuf()
            g0 = g[0]
            for i in range(a.size):
                gb[i] += g0

    return _result((1,), out, (a,), bwd)


def weighted_sum(stack, w):
    """O = sum_l w[l] * Z_l over a layer stack of equally shaped tensors."""
    stack = list(stack)
    if len(w.shape) != 1 or w.shape[0] != len(stack):
        raise ShapeError(
            f"weighted_sum: weight shape {w.shape} does not match stack of {len(stack)}"
        )
    base = stack[0].shape
    for z in stack:
        if z.shape != base:
            raise ShapeError(
                f"weighted_sum: ragged stack, {z.shape} differs from {base}"
            )
    out = _zeros_arr(stack[0].size)
    for l, z in enumerate(stack):
        K.vaxpy(w.data[l], z.data, out)

    def bwd(g):
        if w.requires_grad:
            gw = w._gbuf()
            for l, z in enumerate(stack):
                gw[l] += K.dot(g, z.data)
        for l, z in enumerate(stack):
            if z.requires_grad:
                K.vaxpy(w.data[l], g, z._gbuf())

    return _result(base, out, tuple(stack) + (w,), bwd)


# -- normalizations ------------------------------------------------------------


def _rows_of(a, op):
    if len(a.shape) == 1:
        return 1, a.shape[0]
    if len(a.shape) == 2:
        return a.shape
    raise ShapeError(f"{op}: need a 1-D or 2-D tensor, got shape {a.shape}")


def softmax(a, axis=-1):
    """Exponential normalization along ``axis`` with max-subtraction."""
    if len(a.shape) == 1:
        axis = 0
    nd = len(a.shape)
    if axis < 0:
        axis += nd
    if axis not in (0, 1) or axis >= nd:
        raise ShapeError(f"softmax: invalid axis {axis} for shape {a.shape}")
    if nd == 1 or axis == 1:
        r, c = _rows_of(a, "softmax")
        out = _zeros_arr(a.size)
        if K.softmax_rows(a.data, r, c, out):
            raise NumericError("softmax: non-finite input")

        def bwd(g, _y=out):
            if a.requires_grad:
                K.softmax_rows_bwd(_y, g, r, c, a._gbuf())

        return _result(a.shape, out, (a,), bwd)

    # axis 0 on a 2-D tensor: work on the transpose
    m, n = a.shape
    xt = _zeros_arr(a.size)
    K.transpose(a.data, m, n, xt)
    yt = _zeros_arr(a.size)
    if K.softmax_rows(xt, n, m, yt):
        raise NumericError("softmax: non-finite input")
    out = _zeros_arr(a.size)
    K.transpose(yt, n, m, out)

    def bwd(g, _yt=yt):
        if a.requires_grad:
            gt = _zeros_arr(a.size)
            K.transpose(g, m, n, gt)
            gxt = _zeros_arr(a.size)
            K.softmax_rows_bwd(_yt, gt, n, m, gxt)
            gx = _zeros_arr(a.size)
            K.transpose(gxt, n, m, gx)
            K.vacc(gx, a._gbuf())

    return _result(a.shape, out, (a,), bwd)


def log_softmax_rows(a):
    r, c = _rows_of(a, "log_softmax_rows")
    out = _zeros_arr(a.size)
    if K.logsoftmax_rows(a.data, r, c, out):
        raise NumericError("log_softmax_rows: non-finite input")

    def bwd(g, _y=out):
        if a.requires_grad:
            K.logsoftmax_rows_bwd(_y, g, r, c, a._gbuf())

    return _result(a.shape, out, (a,), bwd)


def layer_norm_rows(a, eps=1e-5):
    r, c = _rows_of(a, "layer_norm_rows")
    out = _zeros_arr(a.size)
    stats = _zeros_arr(2 * r)
    K.layernorm_rows(a.data, r, c, eps, out, stats)

    def bwd(g, _y=out, _s=stats):
        if a.requires_grad:
            K.layernorm_rows_bwd(_y, _s, g, r, c, a._gbuf())

    return _result(a.shape, out, (a,), bwd)


def l2_normalize_rows(a):
    """Scale each row to unit Euclidean norm."""
    r, c = _rows_of(a, "l2_normalize_rows")
    out = _zeros_arr(a.size)
    norms = []
    for i in range(r):
        row = a.data[i * c : (i + 1) * c]
        nrm = math.sqrt(K.dot(row, row))
        if nrm == 0.0:
            raise NumericError("l2_normalize_rows: zero-norm row")
        norms.append(nrm)
        K.vaxpy(1.0 / nrm, row, memoryview_slice(out, i * c, c))

    def bwd(g, _y=out):
        if not a.requires_grad:
            return
        gb = a._gbuf()
        for i in range(r):
            lo = i * c
            yrow = _y[lo : lo + c]
            grow = g[lo : lo + c]
            d = K.dot(yrow, grow)
            inv = 1.0 / norms[i]
            for j in range(c):
                gb[lo + j] += (grow[j] - yrow[j] * d) * inv

    return _result(a.shape, out, (a,), bwd)


def memoryview_slice(buf, start, length):
    # array('d') slices copy; a memoryview writes through.
    return memoryview(buf)[start : start + length]


# -- gradient verification -----------------------------------------------------


def grad_check(f, params, eps=1e-5):
    """Max relative error between analytic and central-difference gradients.

    ``f`` rebuilds and returns the scalar loss; ``params`` are the leaf
    tensors to perturb. Relative error per entry is
    |analytic - central| / (|central| + 1e-12).
    """
    if not (1e-7 <= eps <= 1e-3):
        raise ValueError(f"grad_check: eps {eps} outside [1e-7, 1e-3]")
    params = list(params)
    for p in params:
        p.zero_grad()
        p.requires_grad = True
    loss = f()
    if not loss.is_finite():
        raise NumericError("grad_check: non-finite loss")
    loss.backward()
    analytic = [array("d", p.grad) if p.grad is not None else _zeros_arr(p.size) for p in params]
    worst = 0.0
    with no_grad():
        for p, ga in zip(params, analytic):
            for i in range(p.size):
                orig = p.data[i]
                p.data[i] = orig + eps
                lp = f().item()
                p.data[i] = orig - eps
                lm = f().item()
                p.data[i] = orig
                if not (math.isfinite(lp) and math.isfinite(lm)):
                    raise NumericError("grad_check: non-finite loss during perturbation")
                fd = (lp - lm) / (2.0 * eps)
                rel = abs(ga[i] - fd) / (abs(fd) + 1e-12)
                if rel > worst:
                    worst = rel
    return worst


# -- serialization -------------------------------------------------------------


def write_tensor(fh, t):
    """Flat binary record: rank, dims (u64 LE each), data (f64 LE)."""
    fh.write(struct.pack("<Q", len(t.shape)))
    fh.write(struct.pack(f"<{len(t.shape)}Q", *t.shape))
    payload = t.data if sys.byteorder == "little" else _byteswapped(t.data)
    fh.write(payload.tobytes())


def read_tensor(fh):
    raw = fh.read(8)
    if len(raw) != 8:
        raise IOError("tensor record: truncated header")
    (rank,) = struct.unpack("<Q", raw)
    if rank == 0 or rank > 8:
        raise IOError(f"tensor record: implausible rank {rank}")
    dims = struct.unpack(f"<{rank}Q", fh.read(8 * rank))
    n = _prod(dims)
    raw = fh.read(8 * n)
    if len(raw) != 8 * n:
        raise IOError("tensor record: truncated data")
    data = array("d")
    data.frombytes(raw)
    if sys.byteorder != "little":
        data.byteswap()
    return Tensor(dims, data)


def _byteswapped(data):
    out = array("d", data)
    out.byteswap()
    return out


def save_tensor(path, t):
    with open(path, "wb") as fh:
        write_tensor(fh, t)


def load_tensor(path):
    with open(path, "rb") as fh:
        return read_tensor(fh)

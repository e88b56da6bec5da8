"""Kernel backend selection.

The compiled extension is used when available; set ``SVLAB_KERNELS=pure``
to force the pure-Python fallback (mostly useful for tests and the
backend benchmark).
"""

import os

if os.environ.get("SVLAB_KERNELS", "").lower() == "pure":
    from . import pure as impl
else:
    try:
        from . import _core as impl  # type: ignore[attr-defined]
    except ImportError:
        from . import pure as impl

BACKEND = impl.BACKEND

mm_nn = impl.mm_nn
mm_nt = impl.mm_nt
mm_tn = impl.mm_tn
transpose = impl.transpose
vacc = impl.vacc
vaxpy = impl.vaxpy
vadd = impl.vadd
vsub = impl.vsub
vmul = impl.vmul
vmul_acc = impl.vmul_acc
vdiv_acc = impl.vdiv_acc
vscale = impl.vscale
vtanh = impl.vtanh
vtanh_bwd = impl.vtanh_bwd
vexp = impl.vexp
vlog = impl.vlog
vsqrt = impl.vsqrt
vsqrt_bwd = impl.vsqrt_bwd
vclampmin = impl.vclampmin
vclampmin_bwd = impl.vclampmin_bwd
dot = impl.dot
ksum = impl.ksum
softmax_rows = impl.softmax_rows
softmax_rows_bwd = impl.softmax_rows_bwd
logsoftmax_rows = impl.logsoftmax_rows
logsoftmax_rows_bwd = impl.logsoftmax_rows_bwd
layernorm_rows = impl.layernorm_rows
layernorm_rows_bwd = impl.layernorm_rows_bwd
adam_update = impl.adam_update

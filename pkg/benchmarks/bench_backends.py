"""Benchmark the compiled kernel extension against the pure-Python fallback.

Times the raw hot kernels (matmul, softmax, layer norm) and a full encoder
forward+backward pass with both implementations, and checks that they agree
bit-for-bit on identical inputs.

Run:  python3 benchmarks/bench_backends.py
"""

from __future__ import annotations

import random
import time
from array import array

from svlab.kernels import pure

try:
    from svlab.kernels import _core as compiled
except ImportError:
    compiled = None


def _rand_arr(rng, n):
    return array("d", [rng.uniform(-1.0, 1.0) for _ in range(n)])


def _time(fn, reps):
    best = float("inf")
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels():
    rng = random.Random(7)
    m = n = k = 96
    a = _rand_arr(rng, m * k)
    b = _rand_arr(rng, k * n)
    rows, cols = 256, 64
    x = _rand_arr(rng, rows * cols)

    cases = []
    for label, mod in (("pure", pure), ("compiled", compiled)):
        if mod is None:
            continue
        out_mm = array("d", bytes(8 * m * n))
        out_sm = array("d", bytes(8 * rows * cols))
        out_ln = array("d", bytes(8 * rows * cols))
        stats = array("d", bytes(8 * rows * 2))
        results = {
            "mm_nn 96x96x96": _time(lambda: mod.mm_nn(a, b, m, k, n, out_mm), 5),
            "softmax 256x64": _time(lambda: mod.softmax_rows(x, rows, cols, out_sm), 5),
            "layernorm 256x64": _time(lambda: mod.layernorm_rows(x, rows, cols, 1e-5, out_ln, stats), 5),
        }
        cases.append((label, results, (array("d", out_mm), array("d", out_sm), array("d", out_ln))))
    return cases


def bench_encoder():
    import os

    results = {}
    payloads = {}
    for label, env in (("pure", "pure"), ("compiled", "")):
        if compiled is None and label == "compiled":
            continue
        # re-import svlab with the requested backend in a fresh interpreter-ish way:
        # backend selection happens at import, so spawn a subprocess.
        import subprocess
        import sys

        code = (
            "import random, time\n"
            "from svlab.encoder import EncoderConfig, EncoderParams, encode\n"
            "from svlab import tensor as T\n"
            "from svlab.kernels import BACKEND\n"
            "rng = random.Random(3)\n"
            "cfg = EncoderConfig()\n"
            "p = EncoderParams(cfg)\n"
            "frames = T.Tensor((40, cfg.input_dim), [rng.uniform(-1,1) for _ in range(40*cfg.input_dim)])\n"
            "t0 = time.perf_counter()\n"
            "for _ in range(5):\n"
            "    loss = T.sum_all(encode(p, frames)[-1])\n"
            "    loss.backward()\n"
            "    for _, t in p.named_trainable(): t.zero_grad()\n"
            "dt = (time.perf_counter()-t0)/5\n"
            "print(BACKEND, repr(dt), repr(loss.item()))\n"
        )
        envd = dict(os.environ)
        if env:
            envd["SVLAB_KERNELS"] = env
        else:
            envd.pop("SVLAB_KERNELS", None)
        out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, env=envd)
        if out.returncode != 0:
            raise RuntimeError(out.stderr)
        backend, dt, loss = out.stdout.split()
        results[label] = (backend, float(dt))
        payloads[label] = loss
    return results, payloads


def main():
    print("== raw kernels (best of 5) ==")
    cases = bench_kernels()
    for label, results, _ in cases:
        for name, dt in results.items():
            print(f"  {label:9s} {name:18s} {dt * 1e3:8.3f} ms")
    if len(cases) == 2:
        agree = all(x == y for x, y in zip(cases[0][2], cases[1][2]))
        print(f"  agreement (bit-exact): {agree}")
        if not agree:
            raise SystemExit("kernel implementations disagree")

    print("== encoder forward+backward, T=40 (mean of 5) ==")
    results, payloads = bench_encoder()
    for label, (backend, dt) in results.items():
        print(f"  {label:9s} ({backend:8s}) {dt * 1e3:8.2f} ms/pass")
    if len(payloads) == 2:
        agree = payloads["pure"] == payloads["compiled"]
        print(f"  agreement (bit-exact loss): {agree}")
        if not agree:
            raise SystemExit("encoder results disagree between backends")
    if len(results) == 2:
        speedup = results["pure"][1] / results["compiled"][1]
        print(f"  speedup: {speedup:.1f}x")


if __name__ == "__main__":
    main()

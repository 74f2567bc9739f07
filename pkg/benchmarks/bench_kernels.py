"""Throughput comparison of the numba-jitted and pure-numpy kernel paths.

Micro-benchmarks time both implementations in-process; the end-to-end
section re-runs a training step in subprocesses with FIXED_DG_NUMBA=1/0
so each backend is selected the way users select it.

Usage: python benchmarks/bench_kernels.py [--no-e2e]
"""

import os
import subprocess
import sys
import time

import numpy as np

from fixed_dg import kernels


def best_of(fn, *args, repeat=5, inner=10):
    fn(*args)  # warmup (includes jit compile on the numba path)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        for _ in range(inner):
            fn(*args)
        best = min(best, (time.perf_counter() - t0) / inner)
    return best


def fmt(seconds):
    return f"{seconds * 1e3:8.3f} ms"


def bench_conv(b, cin, cout, t, k, stride=1):
    rng = np.random.default_rng(0)
    xp = rng.uniform(-1, 1, (b, cin, t))
    w = rng.uniform(-1, 1, (cout, cin, k))
    bias = rng.uniform(-1, 1, cout)
    length = kernels.out_length(t, k, stride, 0)
    gout = rng.uniform(-1, 1, (b, cout, length))

    rows = []
    t_np = best_of(kernels.conv1d_forward_np, xp, w, bias, stride, length)
    t_nb = best_of(kernels._conv1d_forward_nb, xp, w, bias, stride, length) if kernels._HAVE_NUMBA else None
    rows.append((f"conv1d fwd  B{b} {cin}->{cout} T{t} K{k}", t_np, t_nb))
    t_np = best_of(kernels.conv1d_backward_np, xp, w, gout, stride)
    t_nb = best_of(kernels._conv1d_backward_nb, xp, w, gout, stride) if kernels._HAVE_NUMBA else None
    rows.append((f"conv1d bwd  B{b} {cin}->{cout} T{t} K{k}", t_np, t_nb))
    return rows


def bench_pool(b, c, t, width):
    rng = np.random.default_rng(1)
    x = rng.uniform(-1, 1, (b, c, t))
    _, arg = kernels.maxpool1d_forward_np(x, width)
    gout = rng.uniform(-1, 1, arg.shape)

    rows = []
    t_np = best_of(kernels.maxpool1d_forward_np, x, width)
    t_nb = best_of(kernels._maxpool1d_forward_nb, x, width) if kernels._HAVE_NUMBA else None
    rows.append((f"maxpool fwd B{b} C{c} T{t} w{width}", t_np, t_nb))
    t_np = best_of(kernels.maxpool1d_backward_np, arg, gout, t)
    t_nb = best_of(kernels._maxpool1d_backward_nb, arg, gout, t) if kernels._HAVE_NUMBA else None
    rows.append((f"maxpool bwd B{b} C{c} T{t} w{width}", t_np, t_nb))
    return rows


_E2E_SNIPPET = """
import time
import numpy as np
from fixed_dg import kernels
from fixed_dg.datagen import gen_synthetic_har, default_har_protos, default_har_transforms, split_train_val
from fixed_dg.trainer import AlgorithmConfig, train
from fixed_dg.models import ArchSpec, Cnn1dBody

ds = gen_synthetic_har(default_har_protos(4), default_har_transforms(3, 0.3, 6), 24, 128, 6, seed=1)
tr, va = split_train_val(ds, seed=1)
arch = ArchSpec(in_shape=(6, 128), num_classes=4, num_domains=3, body=Cnn1dBody(), bottleneck_dim=64)
cfg = AlgorithmConfig(algorithm="FIXED", epochs=1, batch_per_domain=16, seed=1, adv_eta=0.1)
train(cfg, tr, va, arch=arch)  # warmup epoch (jit compile etc.)
t0 = time.perf_counter()
cfg = AlgorithmConfig(algorithm="FIXED", epochs=5, batch_per_domain=16, seed=1, adv_eta=0.1)
train(cfg, tr, va, arch=arch)
print(f"{kernels.active_backend()}: 5 FIXED epochs on a (6,128) CNN in {time.perf_counter() - t0:.2f}s")
"""


def main():
    print(f"active backend: {kernels.active_backend()}  (numba importable: {kernels._HAVE_NUMBA})")
    rows = []
    rows += bench_conv(96, 3, 8, 48, 9)
    rows += bench_conv(128, 6, 16, 128, 9)
    rows += bench_conv(128, 16, 32, 64, 9)
    rows += bench_pool(128, 16, 128, 2)

    print(f"\n{'kernel':38s} {'numpy':>12s} {'numba':>12s} {'speedup':>9s}")
    for name, t_np, t_nb in rows:
        if t_nb is None:
            print(f"{name:38s} {fmt(t_np)}        (numba unavailable)")
        else:
            print(f"{name:38s} {fmt(t_np)} {fmt(t_nb)} {t_np / t_nb:8.2f}x")

    if "--no-e2e" not in sys.argv:
        print("\nend-to-end training step (subprocess per backend):")
        for flag in ("1", "0"):
            env = dict(os.environ, FIXED_DG_NUMBA=flag)
            out = subprocess.run(
                [sys.executable, "-c", _E2E_SNIPPET], env=env, capture_output=True, text=True
            )
            print(" ", out.stdout.strip() or out.stderr.strip().splitlines()[-1])


if __name__ == "__main__":
    main()

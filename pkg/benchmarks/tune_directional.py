"""Measure the directional benchmark orderings while choosing frozen settings.

Not part of the test suite; run by hand to pick the acceptance-test
configuration and record the observed gaps.
"""

import sys
import time

import numpy as np

from fixed_dg.datagen import (
    default_har_protos,
    default_har_transforms,
    gen_rotated_moons,
    gen_synthetic_har,
)
from fixed_dg.losses import MarginConfig
from fixed_dg.models import ArchSpec, Cnn1dBody, MlpBody
from fixed_dg.trainer import AlgorithmConfig, leave_one_domain_out

ALGS = ("ERM", "Mixup", "FIX_DANN", "FIXED")


def run(dataset, arch_for, algs=ALGS, seeds=(0, 1, 2), **cfg_kw):
    table = {}
    for alg in algs:
        accs = []
        for seed in seeds:
            cfg = AlgorithmConfig(algorithm=alg, seed=seed, **cfg_kw)
            lodo = leave_one_domain_out(cfg, dataset, arch_for=arch_for)
            accs.append(lodo.average_target_acc)
        table[alg] = (float(np.mean(accs)), accs)
    return table


def show(name, table, t0):
    print(f"\n== {name} ({time.time() - t0:.1f}s) ==")
    for alg, (mean, accs) in table.items():
        print(f"  {alg:10s} {mean:.4f}  {[round(a, 4) for a in accs]}")
    m = {a: v[0] for a, v in table.items()}
    print(f"  FIXED-FIX_DANN {100 * (m['FIXED'] - m['FIX_DANN']):+.2f}pp   "
          f"FIX_DANN-Mixup {100 * (m['FIX_DANN'] - m['Mixup']):+.2f}pp   "
          f"FIXED-ERM {100 * (m['FIXED'] - m['ERM']):+.2f}pp")


def moons_case(n=160, noise=0.25, epochs=40, batch=16, hidden=(32,), bottleneck=16,
               alpha=0.2, eta=1.0, gamma=1.0, top_k=1, lr=1e-2):
    ds = gen_rotated_moons(n, (0.0, 30.0, 60.0, 90.0), noise, seed=100)

    def arch_for(sources):
        return ArchSpec(in_shape=(2,), num_classes=2, num_domains=sources.num_domains,
                        body=MlpBody(hidden), bottleneck_dim=bottleneck)

    t0 = time.time()
    table = run(ds, arch_for, epochs=epochs, batch_per_domain=batch, mixup_alpha=alpha,
                adv_eta=eta, margin=MarginConfig(gamma=gamma, top_k=top_k), lr=lr)
    show(f"moons n={n} noise={noise} ep={epochs} a={alpha} eta={eta} g={gamma}", table, t0)
    return table


def har_case(n_per_class=24, length=64, channels=3, classes=4, noise=0.4, epochs=30,
             batch=16, conv=(8, 16), bottleneck=32, alpha=0.2, eta=1.0, gamma=1.0, top_k=1):
    ds = gen_synthetic_har(default_har_protos(classes),
                           default_har_transforms(4, noise, channels),
                           n_per_class, length, channels, seed=200)

    def arch_for(sources):
        return ArchSpec(in_shape=(channels, length), num_classes=classes,
                        num_domains=sources.num_domains,
                        body=Cnn1dBody(channels=conv, kernel=9, pool=2),
                        bottleneck_dim=bottleneck)

    t0 = time.time()
    table = run(ds, arch_for, epochs=epochs, batch_per_domain=batch, mixup_alpha=alpha,
                adv_eta=eta, margin=MarginConfig(gamma=gamma, top_k=top_k))
    show(f"har n={n_per_class} noise={noise} ep={epochs} a={alpha} eta={eta} g={gamma}", table, t0)
    return table


if __name__ == "__main__":
    which = sys.argv[1] if len(sys.argv) > 1 else "both"
    if which in ("moons", "both"):
        moons_case()
    if which in ("har", "both"):
        har_case()

"""Compare the compiled kernels against the pure-numpy fallback.

Runs every workload twice in subprocesses: once with the default backend
(numba-compiled loops when numba is importable) and once with
``NODEDP_NO_NUMBA=1``. The backend is chosen at import time, which is why
each measurement needs a fresh interpreter.

Usage: python benchmarks/bench_kernels.py
"""

import json
import os
import subprocess
import sys
import time

WORKLOADS = ("subgraph sampling", "clipped gradient batch", "accountant scan",
             "training iteration")


def _bench(fn, repeat=5):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def worker():
    import numpy as np

    from nodedp import _kernels
    from nodedp.gnn import batch_losses_and_clipped_sum, init_params
    from nodedp.graph import gen_erdos_renyi, gen_planted_classes, split_train_test
    from nodedp.sampler import SamplerConfig, heter_poisson
    from nodedp.trainer import TrainConfig, train

    _kernels.warmup()
    out = {"backend": "numba" if _kernels.NUMBA_ENABLED else "numpy"}

    g = gen_erdos_renyi(3000, 0.01, 16, 4, np.random.default_rng(0))
    cfg = SamplerConfig(0.3, 3.0)
    rng = np.random.default_rng(1)
    out[WORKLOADS[0]] = _bench(
        lambda: heter_poisson(g, np.arange(3000), cfg, np.random.default_rng(1))
    )

    batch = heter_poisson(g, np.arange(3000), cfg, rng)
    params = init_params("gin", 16, 32, 4, np.random.default_rng(2))
    out[WORKLOADS[1]] = _bench(
        lambda: batch_losses_and_clipped_sum(params, batch)
    )

    out[WORKLOADS[2]] = _bench(
        lambda: _kernels.ln_bound_scan(2000, 0.2, 2.0, 5.0, 20.0, True, False)
    )

    gp = gen_planted_classes(1000, 4, 8, 5.0, 0.03, 0.006, np.random.default_rng(3))
    split = split_train_test(gp, 0.8, np.random.default_rng(4))
    tcfg = TrainConfig(arch="gin", iterations=10, eta=2e-3, q_b=0.3, M=2.0,
                       sigma=1.0, d_hid=16, seed=0)
    out[WORKLOADS[3]] = _bench(lambda: train(gp, split, tcfg), repeat=3) / 10.0

    print(json.dumps(out))


def main():
    results = {}
    for label, env_extra in (("numba", {}), ("numpy", {"NODEDP_NO_NUMBA": "1"})):
        env = dict(os.environ, **env_extra)
        proc = subprocess.run(
            [sys.executable, os.path.abspath(__file__), "--worker"],
            capture_output=True, text=True, env=env, check=True,
        )
        results[label] = json.loads(proc.stdout.strip().splitlines()[-1])

    if results["numba"]["backend"] != "numba":
        print("note: numba unavailable; both columns use the numpy fallback")

    w = max(len(n) for n in WORKLOADS)
    print(f"{'workload':<{w}}  {'numba':>10}  {'numpy':>10}  speedup")
    for name in WORKLOADS:
        a, b = results["numba"][name], results["numpy"][name]
        print(f"{name:<{w}}  {a * 1e3:>8.2f}ms  {b * 1e3:>8.2f}ms  {b / a:>6.1f}x")


if __name__ == "__main__":
    if "--worker" in sys.argv:
        worker()
    else:
        main()

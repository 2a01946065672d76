"""Compiled vs pure-numpy window kernel: wall time and agreement.

Usage::

    python3 bench/benchmark.py [--traj 2000] [--eps 0.1] [--repeat 3]
"""
import argparse
import time

import numpy as np

from dcmsim import hilbert as hc
from dcmsim.coarse import WindowConfig
from dcmsim.ensemble import InitialCondition, simulate_windows
from dcmsim.kernels import available_backends
from dcmsim.micro import build_system
from dcmsim.noise import build_noise_model


def cases():
    z, x = hc.preset("pauli_z"), hc.preset("pauli_x")
    s = 1 / np.sqrt(2)
    ini = InitialCondition("fixed", [s, s], [s, s])
    noisy = build_system(0.5 * z + 0.3 * x, 0.7 * x, [z], [x],
                         noise=build_noise_model([[0.5]], [[0.3]], [[0.2]]))
    inter = build_system(0.5 * z, 0.5 * z, interaction=[(z, z)])
    return [("noisy free", noisy, ini, "free"), ("xi-feedback", inter, ini, "interacting")]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--traj", type=int, default=2000)
    ap.add_argument("--eps", type=float, default=0.1)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = available_backends()
    window = WindowConfig.from_epsilon(args.eps, 0.5, 0.05, tuple(np.linspace(0, 1, 11)))
    print(f"trajectories={args.traj} steps={window.n_steps} backends={backends}")
    for name, spec, ini, mode in cases():
        res, best = {}, {}
        for b in backends:
            times = []
            for _ in range(args.repeat):
                t0 = time.perf_counter()
                res[b] = simulate_windows(spec, window, args.traj, 1, ini, mode=mode, backend=b)
                times.append(time.perf_counter() - t0)
            best[b] = min(times)
        line = "  ".join(f"{b}={best[b]:.3f}s" for b in backends)
        if len(backends) == 2:
            diff = np.max(np.abs(res["cython"] - res["python"]))
            line += f"  speedup={best['python'] / best['cython']:.1f}x  max|diff|={diff:.2e}"
        print(f"{name:12s} {line}")


if __name__ == "__main__":
    main()

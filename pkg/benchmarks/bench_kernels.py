"""Time the numba and numpy kernel backends on the shapes a 64x64 training step uses.

Each backend runs in its own subprocess because the backend is fixed at import:

    python benchmarks/bench_kernels.py [--repeat 20]
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from dlarch import kernels as K

repeat = int(sys.argv[1])
r = np.random.default_rng(0)
f32 = np.float32
B = 16
cases = {
    "conv fwd 3->16 @64": lambda: K.conv2d_forward(xp0, w0, 1, 64, 64),
    "conv fwd 16->16 @32": lambda: K.conv2d_forward(xp1, w1, 1, 32, 32),
    "conv fwd 16->32 s2": lambda: K.conv2d_forward(xp1, w2, 2, 16, 16),
    "conv grad-input 16->16 @32": lambda: K.conv2d_grad_input(g1, w1, 1, 34, 34),
    "conv grad-weight 16->16 @32": lambda: K.conv2d_grad_weight(g1, xp1, 1, 3, 3),
    "matmul 16x64 @ 64x35": lambda: K.matmul(a, b),
    "spatial mean 16x64x16x16": lambda: K.spatial_mean(fm),
}
xp0 = r.standard_normal((B, 3, 66, 66)).astype(f32)
w0 = r.standard_normal((16, 3, 3, 3)).astype(f32)
xp1 = r.standard_normal((B, 16, 34, 34)).astype(f32)
w1 = r.standard_normal((16, 16, 3, 3)).astype(f32)
w2 = r.standard_normal((32, 16, 3, 3)).astype(f32)
g1 = r.standard_normal((B, 16, 32, 32)).astype(f32)
a = r.standard_normal((B, 64)).astype(f32)
b = r.standard_normal((64, 35)).astype(f32)
fm = r.standard_normal((B, 64, 16, 16)).astype(f32)
out = {}
for name, fn in cases.items():
    fn()  # compile / warm up
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    out[name] = best
print(json.dumps({"backend": K.BACKEND, "times": out}))
"""


def run(backend, repeat):
    env = dict(os.environ, DLARCH_BACKEND=backend)
    res = subprocess.run(
        [sys.executable, "-c", WORKER, str(repeat)], env=env, capture_output=True, text=True, check=True
    )
    return json.loads(res.stdout)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    nb, npy = run("numba", args.repeat), run("numpy", args.repeat)
    if nb["backend"] != "numba":
        print("numba unavailable; only the numpy backend was timed")
    print(f"{'kernel':<30}{'numba ms':>10}{'numpy ms':>10}{'speedup':>9}")
    for name, t_np in npy["times"].items():
        t_nb = nb["times"][name]
        print(f"{name:<30}{1e3 * t_nb:>10.3f}{1e3 * t_np:>10.3f}{t_np / t_nb:>8.2f}x")


if __name__ == "__main__":
    main()

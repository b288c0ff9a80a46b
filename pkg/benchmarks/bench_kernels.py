"""Compare the compiled kernels with the NumPy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Times the raw matmul and pair-count kernels at the shapes the model uses,
then one full training run per backend, and checks the results agree bit
for bit.
"""

import argparse
import time

import numpy as np

from structprompt import _kernels_py, kernels
from structprompt.data import kshot_sample, synth_generate
from structprompt.objective import TrainConfig, fit, init_state

try:
    from structprompt import _kernels as _kernels_c
except ImportError:
    _kernels_c = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    backends = {"python": _kernels_py}
    if _kernels_c is not None:
        backends["cython"] = _kernels_c
    else:
        print("compiled extension not built; timing the fallback only")

    rng = np.random.default_rng(0)
    shapes = {"fuse  64x128 @ 128x64": (64, 128, 64), "score 64x64 @ 64x4": (64, 64, 4),
              "gram  20x64 @ 64x20": (20, 64, 20)}
    print(f"{'kernel':28s}" + "".join(f"{name:>12s}" for name in backends))
    for label, (n, m, p) in shapes.items():
        a, b = rng.normal(size=(n, m)), rng.normal(size=(m, p))
        outs = {k: kernels.matmul(a, b, impl=v) for k, v in backends.items()}
        assert all(np.array_equal(o, outs["python"]) for o in outs.values())
        cells = [best_of(lambda v=v: kernels.matmul(a, b, impl=v), args.repeat * 20) for v in backends.values()]
        print(f"{label:28s}" + "".join(f"{t * 1e6:10.1f}us" for t in cells))

    pos, neg = rng.random(500), rng.random(1500)
    counts = {k: kernels.pair_count(pos, neg, impl=v) for k, v in backends.items()}
    assert len(set(counts.values())) == 1
    cells = [best_of(lambda v=v: kernels.pair_count(pos, neg, impl=v), args.repeat) for v in backends.values()]
    print(f"{'pair_count 500x1500':28s}" + "".join(f"{t * 1e6:10.1f}us" for t in cells))

    cfg = TrainConfig(seed=0, epochs=100)
    train, _ = kshot_sample(synth_generate(C=4, per_class=100, rho=0.2, seed=0), cfg.k_shot, 0)
    finals = {}
    cells = []
    for name, impl in backends.items():
        kernels._impl = impl
        start = time.perf_counter()
        state, trace = fit(init_state(cfg, train.label_names), train, cfg)
        cells.append(time.perf_counter() - start)
        finals[name] = trace[-1].total
    print(f"{'fit, 100 epochs, 64 ex.':28s}" + "".join(f"{t:11.3f}s" for t in cells))
    assert len(set(finals.values())) == 1, finals
    print("backends agree bit for bit")


if __name__ == "__main__":
    main()

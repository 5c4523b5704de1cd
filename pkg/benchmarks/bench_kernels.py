"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Times each hot kernel at model-sized shapes and one full ``generate`` call
per backend, then prints per-call times and the speedup.
"""
import argparse
import timeit

import numpy as np

from attnedit import _backend, _kernels_py
from attnedit.model import ModelConfig, generate, init_model
from attnedit.pipeline import default_vocabulary
from attnedit.text import Prompt


def kernel_cases(rng):
    d, S, L, H = 64, 65, 6, 4
    x, w, b = rng.normal(size=d), rng.normal(size=(d, d)), rng.normal(size=d)
    keys, vals = rng.normal(size=(S, d)), rng.normal(size=(S, d))
    probs = rng.random((H, S))
    m = rng.normal(size=(H, S))
    a, c = rng.normal(size=(16, d)), rng.normal(size=(d, 16))
    return {
        "linear 64x64": lambda k: k.linear(x, w, b),
        "layer_norm 64": lambda k: k.layer_norm(x, b, b, 1e-5),
        "softmax_rows 4x65": lambda k: k.softmax_rows(m, 0.25),
        "attention_probs 65 keys": lambda k: k.attention_probs(x, keys, S, H, 0.25),
        "attention_combine 65 keys": lambda k: k.attention_combine(probs, vals, H),
        "matmul 16x64x16": lambda k: k.matmul(a, c),
        "lcs_suffix_table 8x12": lambda k: k.lcs_suffix_table(list(range(8)), list(range(12))),
    }


def bench(fn, repeat):
    t = timeit.Timer(fn)
    n, _ = t.autorange()
    return min(t.repeat(repeat, n)) / n


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = _backend.available()
    if "compiled" not in backends:
        print("compiled extension not built; only the numpy fallback is available")
    modules = {"python": _kernels_py}
    if "compiled" in backends:
        from attnedit import _kernels

        modules["compiled"] = _kernels

    rng = np.random.default_rng(0)
    print(f"{'kernel':28s}" + "".join(f"{name:>14s}" for name in modules) + f"{'speedup':>10s}")
    for label, fn in kernel_cases(rng).items():
        times = {name: bench(lambda: fn(mod), args.repeat) for name, mod in modules.items()}
        speed = times["python"] / times["compiled"] if "compiled" in times else float("nan")
        print(f"{label:28s}" + "".join(f"{times[n] * 1e6:12.2f}us" for n in modules) + f"{speed:9.1f}x")

    vocab = default_vocabulary()
    model = init_model(ModelConfig(vocab_size=len(vocab)))
    p = Prompt.from_text("acoustic guitar solo with soft brushed drums", vocab)
    gen = {}
    for name in modules:
        previous = _backend.use(name)
        try:
            generate(model, p, 1)
            gen[name] = bench(lambda: generate(model, p, 1), max(1, args.repeat // 2))
        finally:
            _backend.use(previous)
    speed = gen["python"] / gen["compiled"] if "compiled" in gen else float("nan")
    print(f"{'generate (T=64, K=2)':28s}" + "".join(f"{gen[n] * 1e3:12.2f}ms" for n in modules) + f"{speed:9.1f}x")


if __name__ == "__main__":
    main()

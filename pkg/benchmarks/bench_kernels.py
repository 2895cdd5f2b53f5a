"""Compare the compiled metric kernels against the pure-Python fallback.

Usage: python3 benchmarks/bench_kernels.py [--lengths 10 50 200] [--repeat 5]
"""

import argparse
import random
import timeit

from scenebgm.metrics import _pykernels

try:
    from scenebgm.metrics import _ckernels
except ImportError:  # not built; report the fallback alone
    _ckernels = None


def _tokens(rng: random.Random, n: int, vocab: int) -> list:
    return [rng.randrange(vocab) for _ in range(n)]


def _time(fn, number: int, repeat: int) -> float:
    """Best per-call time in microseconds."""
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number * 1e6


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--lengths", type=int, nargs="+", default=[10, 20, 50, 200])
    parser.add_argument("--vocab", type=int, default=30, help="distinct token ids per sequence")
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    rng = random.Random(args.seed)
    impls = [("python", _pykernels)] + ([("cython", _ckernels)] if _ckernels else [])
    print(f"{'kernel':<13}{'length':>8}" + "".join(f"{name + ' us':>14}" for name, _ in impls) + f"{'speedup':>10}")
    for kernel in ("lcs_length", "align_chunks"):
        for n in args.lengths:
            a, b = _tokens(rng, n, args.vocab), _tokens(rng, n, args.vocab)
            number = max(1, 2000 // n)
            results = [getattr(mod, kernel)(a, b) for _, mod in impls]
            if len(set(map(str, results))) != 1:
                raise SystemExit(f"{kernel} disagrees at length {n}: {results}")
            times = [_time(lambda m=mod: getattr(m, kernel)(a, b), number, args.repeat) for _, mod in impls]
            speedup = f"{times[0] / times[1]:.1f}x" if len(times) == 2 and times[1] > 0 else "-"
            print(f"{kernel:<13}{n:>8}" + "".join(f"{t:>14.1f}" for t in times) + f"{speedup:>10}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

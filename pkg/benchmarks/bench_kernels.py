"""Benchmark the numba kernels against their pure-numpy fallbacks.

Run directly:  python benchmarks/bench_kernels.py
Set HINGLISH_NO_NUMBA=1 to confirm the fallback path is the one measured.
"""

from __future__ import annotations

import time

import numpy as np

from hinglish_pipeline import kernels


def _unit_rows(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    m = rng.standard_normal((n, d))
    return m / np.linalg.norm(m, axis=1, keepdims=True)


def timed(fn, *args, repeat: int = 5) -> float:
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def bench_greedy_match() -> list[tuple[str, float, float]]:
    rng = np.random.default_rng(7)
    rows = []
    for pairs, n_tok, dim in [(200, 24, 384), (50, 64, 768), (2000, 12, 128)]:
        cands = [_unit_rows(rng, n_tok, dim) for _ in range(pairs)]
        refs = [_unit_rows(rng, n_tok, dim) for _ in range(pairs)]

        def run_numpy():
            for c, r in zip(cands, refs):
                kernels._greedy_match_numpy(c, r)

        t_numpy = timed(run_numpy)
        t_numba = None
        if kernels.using_numba():
            kernels._greedy_match_numba(cands[0], refs[0])  # compile

            def run_numba():
                for c, r in zip(cands, refs):
                    kernels._greedy_match_numba(c, r)

            t_numba = timed(run_numba)
        rows.append((f"greedy {pairs}x({n_tok}tok,{dim}d)", t_numpy, t_numba))
    return rows


def bench_tag_stats() -> list[tuple[str, float, float]]:
    rng = np.random.default_rng(8)
    rows = []
    for size in [1_000_000, 10_000_000]:
        tags = rng.integers(0, 3, size=size).astype(np.int8)
        t_numpy = timed(kernels._tag_stats_numpy, tags)
        t_numba = None
        if kernels.using_numba():
            kernels._tag_stats_numba(tags[:16])  # compile
            t_numba = timed(kernels._tag_stats_numba, tags)
        rows.append((f"tag_stats {size:,} tags", t_numpy, t_numba))
    return rows


def main() -> None:
    print(f"numba backend active: {kernels.using_numba()}")
    print(f"{'kernel':<36} {'numpy':>10} {'numba':>10} {'speedup':>9}")
    for name, t_numpy, t_numba in bench_greedy_match() + bench_tag_stats():
        if t_numba is None:
            print(f"{name:<36} {t_numpy * 1e3:>8.2f}ms {'-':>10} {'-':>9}")
        else:
            print(
                f"{name:<36} {t_numpy * 1e3:>8.2f}ms {t_numba * 1e3:>8.2f}ms "
                f"{t_numpy / t_numba:>8.1f}x"
            )


if __name__ == "__main__":
    main()

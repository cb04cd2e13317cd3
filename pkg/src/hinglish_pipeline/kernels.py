"""Numeric kernels shared by the metric and similarity modules.

Two interchangeable backends are provided for each kernel: a numba
``@njit`` fast path and a pure-numpy fallback.  The fallback is selected
by setting ``HINGLISH_NO_NUMBA=1`` in the environment (or automatically
when numba is not importable).  Both backends are kept importable so the
benchmark suite and the parity tests can compare them directly.

Tag codes are fixed here: HI=0, EN=1, OTHER=2.
"""

from __future__ import annotations

import os

import numpy as np

HI_CODE = 0
EN_CODE = 1
OTHER_CODE = 2

_PURE_NUMPY = os.environ.get("HINGLISH_NO_NUMBA", "").strip().lower() in {"1", "true", "yes"}


def _greedy_match_numpy(cand: np.ndarray, ref: np.ndarray) -> tuple[float, float]:
    sim = cand @ ref.T
    precision = float(sim.max(axis=1).mean())
    recall = float(sim.max(axis=0).mean())
    return precision, recall


def _tag_stats_numpy(tags: np.ndarray) -> tuple[int, int, int, int]:
    n_hi = int((tags == HI_CODE).sum())
    n_en = int((tags == EN_CODE).sum())
    n_other = int((tags == OTHER_CODE).sum())
    lang = tags[tags != OTHER_CODE]
    switches = int((lang[1:] != lang[:-1]).sum()) if lang.size > 1 else 0
    return n_hi, n_en, n_other, switches


_HAVE_NUMBA = False
if not _PURE_NUMPY:
    try:
        from numba import njit

        @njit(cache=True)
        def _greedy_match_numba(cand, ref):  # pragma: no cover - compiled
            # BLAS matmul for the similarities, fused single-pass max/mean
            # reductions instead of numpy's temporary row/col arrays.
            sim = cand @ ref.T
            n, m = sim.shape
            row_sum = 0.0
            col_max = np.full(m, -1.0e300)
            for i in range(n):
                best = -1.0e300
                for j in range(m):
                    s = sim[i, j]
                    if s > best:
                        best = s
                    if s > col_max[j]:
                        col_max[j] = s
                row_sum += best
            return row_sum / n, col_max.mean()

        @njit(cache=True)
        def _tag_stats_numba(tags):  # pragma: no cover - compiled
            n_hi = 0
            n_en = 0
            n_other = 0
            switches = 0
            prev = -1
            for t in tags:
                if t == HI_CODE:
                    n_hi += 1
                elif t == EN_CODE:
                    n_en += 1
                else:
                    n_other += 1
                    continue
                if prev >= 0 and t != prev:
                    switches += 1
                prev = t
            return n_hi, n_en, n_other, switches

        _HAVE_NUMBA = True
    except ImportError:
        _HAVE_NUMBA = False


def using_numba() -> bool:
    """True when the numba backend is active for this process."""
    return _HAVE_NUMBA


def greedy_match(cand: np.ndarray, ref: np.ndarray) -> tuple[float, float]:
    """Greedy token-matching means over a similarity matrix.

    ``cand`` and ``ref`` are (n, d) and (m, d) arrays of unit-norm row
    vectors.  Returns (precision, recall): the mean over candidate rows of
    the best dot product against any reference row, and vice versa.
    """
    cand = np.ascontiguousarray(cand, dtype=np.float64)
    ref = np.ascontiguousarray(ref, dtype=np.float64)
    if cand.ndim != 2 or ref.ndim != 2 or cand.shape[1] != ref.shape[1]:
        raise ValueError("expected (n, d) and (m, d) arrays with matching d")
    if cand.shape[0] == 0 or ref.shape[0] == 0:
        raise ValueError("empty embedding matrix")
    if _HAVE_NUMBA:
        p, r = _greedy_match_numba(cand, ref)
        return float(p), float(r)
    return _greedy_match_numpy(cand, ref)


def tag_stats(tags: np.ndarray) -> tuple[int, int, int, int]:
    """One-pass counts over a coded tag sequence.

    Returns (n_hi, n_en, n_other, switches) where switches counts adjacent
    differing tags over the subsequence with OTHER removed.
    """
    tags = np.ascontiguousarray(tags, dtype=np.int8)
    if _HAVE_NUMBA:
        a, b, c, d = _tag_stats_numba(tags)
        return int(a), int(b), int(c), int(d)
    return _tag_stats_numpy(tags)

"""Embedding-based semantic similarity with pluggable providers.

``bertscore`` performs greedy token matching over unit-norm token
embeddings (precision over candidate tokens, recall over reference
tokens, no IDF weighting); ``cosine_similarity`` compares sentence
embeddings.  Providers supply the vectors: a deterministic hash-seeded
stub for tests, an HTTP provider speaking a one-endpoint JSON protocol
for real encoders, and a normalizing wrapper that routes all text
through the cleaning and variant pipeline first so romanized spelling
noise does not depress similarity.
"""

from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass
from typing import Protocol

import httpx
import numpy as np

from .kernels import greedy_match
from .normalize import CleaningConfig, VariantTable, clean_and_normalize

__all__ = [
    "EmbeddingProvider",
    "ProviderError",
    "SimilarityReport",
    "HashEmbeddingProvider",
    "HttpEmbeddingProvider",
    "NormalizingProvider",
    "bertscore",
    "cosine_similarity",
]


class ProviderError(RuntimeError):
    """An embedding provider failed to produce usable vectors."""


class EmbeddingProvider(Protocol):
    dimension: int

    def embed_tokens(self, text: str) -> np.ndarray: ...

    def embed_sentence(self, text: str) -> np.ndarray: ...


@dataclass(frozen=True)
class SimilarityReport:
    precision: float
    recall: float
    f1: float
    cosine: float

    def __post_init__(self) -> None:
        p, r = self.precision, self.recall
        expected = 2.0 * p * r / (p + r) if p + r > 0 else 0.0
        if abs(self.f1 - expected) > 1e-9:
            raise ValueError(f"f1 {self.f1} inconsistent with P={p}, R={r}")
        if not -1.0 - 1e-9 <= self.cosine <= 1.0 + 1e-9:
            raise ValueError(f"cosine out of [-1, 1]: {self.cosine}")

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "cosine": self.cosine,
        }


def _unit(vec: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    if norm < 1e-12:
        raise ProviderError("zero-norm embedding vector")
    return vec / norm


class HashEmbeddingProvider:
    """Deterministic stub: each token's vector is seeded by its hash.

    Identical inputs always embed identically across processes, which is
    all the scoring tests need from a provider.
    """

    def __init__(self, dimension: int = 64) -> None:
        if dimension < 2:
            raise ValueError("dimension must be >= 2")
        self.dimension = dimension

    def _token_vector(self, token: str) -> np.ndarray:
        seed = int.from_bytes(
            hashlib.sha256(token.encode("utf-8")).digest()[:8], "big"
        )
        rng = np.random.default_rng(seed)
        return _unit(rng.standard_normal(self.dimension))

    def embed_tokens(self, text: str) -> np.ndarray:
        tokens = text.split()
        if not tokens:
            raise ProviderError("cannot embed empty text")
        return np.stack([self._token_vector(t) for t in tokens])

    def embed_sentence(self, text: str) -> np.ndarray:
        vectors = self.embed_tokens(text)
        mean = vectors.mean(axis=0)
        if float(np.linalg.norm(mean)) < 1e-12:
            return self._token_vector("\x00" + text)
        return _unit(mean)


class HttpEmbeddingProvider:
    """Client for the one-endpoint embedding protocol.

    POST {url}/embed with {"texts": [...]} returns {"vectors": [[...]]}.
    Token embedding whitespace-tokenizes client-side and embeds each
    token as a text.  At most ``max_parallel`` requests are in flight at
    once; responses are renormalized to unit length defensively.
    """

    def __init__(
        self,
        base_url: str,
        dimension: int | None = None,
        batch_size: int = 64,
        max_parallel: int = 4,
        timeout: float = 30.0,
    ) -> None:
        if batch_size < 1 or max_parallel < 1:
            raise ValueError("batch_size and max_parallel must be positive")
        self.base_url = base_url.rstrip("/")
        self.dimension = dimension or 0
        self.batch_size = batch_size
        self._semaphore = threading.BoundedSemaphore(max_parallel)
        self._client = httpx.Client(timeout=timeout)

    def _post_batch(self, texts: list[str]) -> list[list[float]]:
        with self._semaphore:
            try:
                response = self._client.post(
                    f"{self.base_url}/embed", json={"texts": texts}
                )
                response.raise_for_status()
                vectors = response.json()["vectors"]
            except (httpx.HTTPError, KeyError, ValueError) as exc:
                raise ProviderError(f"embedding endpoint failure: {exc}") from exc
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise ProviderError("embedding endpoint returned wrong vector count")
        return vectors

    def _embed_texts(self, texts: list[str]) -> np.ndarray:
        rows: list[list[float]] = []
        for start in range(0, len(texts), self.batch_size):
            rows.extend(self._post_batch(texts[start : start + self.batch_size]))
        matrix = np.asarray(rows, dtype=np.float64)
        if matrix.ndim != 2:
            raise ProviderError("embedding endpoint returned ragged vectors")
        if not self.dimension:
            self.dimension = matrix.shape[1]
        norms = np.linalg.norm(matrix, axis=1, keepdims=True)
        if np.any(norms < 1e-12):
            raise ProviderError("embedding endpoint returned a zero vector")
        return matrix / norms

    def embed_tokens(self, text: str) -> np.ndarray:
        tokens = text.split()
        if not tokens:
            raise ProviderError("cannot embed empty text")
        return self._embed_texts(tokens)

    def embed_sentence(self, text: str) -> np.ndarray:
        if not text.strip():
            raise ProviderError("cannot embed empty text")
        return self._embed_texts([text])[0]

    def close(self) -> None:
        self._client.close()


class NormalizingProvider:
    """Wrapper that cleans and canonicalizes text before embedding.

    This is the Hinglish tailoring: spelling variants collapse onto
    their canonical forms so they stop depressing similarity scores.
    """

    def __init__(
        self,
        inner: EmbeddingProvider,
        table: VariantTable,
        cleaning: CleaningConfig | None = None,
    ) -> None:
        self.inner = inner
        self.table = table
        self.cleaning = cleaning or CleaningConfig()

    @property
    def dimension(self) -> int:
        return self.inner.dimension

    def _prepare(self, text: str) -> str:
        return clean_and_normalize(text, self.table, self.cleaning)

    def embed_tokens(self, text: str) -> np.ndarray:
        return self.inner.embed_tokens(self._prepare(text))

    def embed_sentence(self, text: str) -> np.ndarray:
        return self.inner.embed_sentence(self._prepare(text))


def _clamp(value: float) -> float:
    return max(-1.0, min(1.0, value))


def bertscore(
    candidate: str, reference: str, provider: EmbeddingProvider
) -> SimilarityReport:
    """Greedy-matching precision/recall/F1 plus sentence cosine.

    Precision is the mean over candidate tokens of the best similarity
    to any reference token; recall swaps the roles; F1 is their harmonic
    mean.  No IDF weighting is applied.
    """
    if not candidate.strip() or not reference.strip():
        raise ValueError("candidate and reference must be non-empty")
    cand = provider.embed_tokens(candidate)
    ref = provider.embed_tokens(reference)
    precision, recall = greedy_match(cand, ref)
    precision = _clamp(precision)
    recall = _clamp(recall)
    f1 = 2.0 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return SimilarityReport(
        precision=precision,
        recall=recall,
        f1=f1,
        cosine=cosine_similarity(candidate, reference, provider),
    )


def cosine_similarity(a: str, b: str, provider: EmbeddingProvider) -> float:
    """Dot product of unit-norm sentence vectors, clamped to [-1, 1]."""
    if not a.strip() or not b.strip():
        raise ValueError("both texts must be non-empty")
    va = provider.embed_sentence(a)
    vb = provider.embed_sentence(b)
    return _clamp(float(np.dot(va, vb)))

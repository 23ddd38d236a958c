"""Embedding providers and the per-server multi-vector index.

A server's relevance to a query vector is the maximum cosine similarity over
the vectors of its augmented document (MaxSim). Vectors are L2-normalised at
embed time, so cosine is a dot product. Search is exact.
"""

from __future__ import annotations

import logging
import os
from collections.abc import Sequence
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Protocol, runtime_checkable

import httpx
import numpy as np

from .errors import DimensionMismatchError, EmbeddingError, IndexBuildError, ProviderError
from .registry import AugmentedDocument

logger = logging.getLogger(__name__)

ENV_EMBED_ENDPOINT = "TURA_EMBED_ENDPOINT"
DEFAULT_DIM = 64
MULTI_VECTOR = "multi_vector"
SINGLE_VECTOR = "single_vector"
MODES = (MULTI_VECTOR, SINGLE_VECTOR)


@runtime_checkable
class EmbeddingProvider(Protocol):
    dim: int

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray: ...


class HashingEmbedder:
    """Deterministic offline encoder: hashed lowercase word uni+bigrams.

    Backed by scikit-learn's ``HashingVectorizer`` (signed MurmurHash3 feature
    hashing), so vectors are identical across processes and platforms.
    """

    def __init__(self, dim: int = DEFAULT_DIM, ngram_range: tuple[int, int] = (1, 2)):
        from sklearn.feature_extraction.text import HashingVectorizer

        self.dim = dim
        self.ngram_range = ngram_range
        self._vec = HashingVectorizer(
            n_features=dim,
            ngram_range=ngram_range,
            lowercase=True,
            token_pattern=r"(?u)\b\w+\b",
            alternate_sign=True,
            norm=None,
        )

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        mat = self._vec.transform(list(texts)).toarray()
        return mat.astype(np.float64)

    def __repr__(self) -> str:
        return f"HashingEmbedder(dim={self.dim}, ngram_range={self.ngram_range})"


class HttpEmbedder:
    """Remote encoder: ``POST {"input": [...]}`` returning ``{"embeddings": [[...], ...]}``."""

    def __init__(self, endpoint: str, dim: int, timeout: float = 30.0):
        self.endpoint = endpoint
        self.dim = dim
        self.timeout = timeout

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        try:
            resp = httpx.post(self.endpoint, json={"input": list(texts)}, timeout=self.timeout)
            resp.raise_for_status()
            data = resp.json()["embeddings"]
        except (httpx.HTTPError, KeyError, ValueError) as exc:
            raise ProviderError(f"embedding endpoint failed: {exc}") from None
        return np.asarray(data, dtype=np.float64)


def default_embedder(dim: int = DEFAULT_DIM) -> EmbeddingProvider:
    endpoint = os.environ.get(ENV_EMBED_ENDPOINT)
    if endpoint:
        return HttpEmbedder(endpoint, dim)
    return HashingEmbedder(dim)


def _normalise(mat: np.ndarray, dim: int) -> np.ndarray:
    if mat.ndim != 2 or mat.shape[1] != dim:
        raise DimensionMismatchError(dim, mat.shape[-1] if mat.ndim else 0)
    if not np.all(np.isfinite(mat)):
        raise EmbeddingError("provider returned non-finite values")
    norms = np.linalg.norm(mat, axis=1)
    if np.any(norms == 0):
        raise EmbeddingError("text has no embeddable content")
    return mat / norms[:, None]


def embed_many(texts: Sequence[str], provider: EmbeddingProvider) -> np.ndarray:
    """Embed and L2-normalise ``texts``; one row per text."""
    for t in texts:
        if not isinstance(t, str) or not t.strip():
            raise EmbeddingError("cannot embed empty text")
    if not texts:
        return np.zeros((0, provider.dim))
    try:
        raw = provider.embed_batch(texts)
    except ProviderError:
        raise
    except Exception as exc:
        raise ProviderError(f"embedding provider failed: {exc}") from exc
    return _normalise(np.asarray(raw, dtype=np.float64), provider.dim)


def embed(text: str, provider: EmbeddingProvider) -> np.ndarray:
    return embed_many([text], provider)[0]


@dataclass(frozen=True)
class ServerScore:
    server_id: str
    score: float


@dataclass(frozen=True)
class VectorSet:
    server_id: str
    roles: tuple[str, ...]
    vectors: np.ndarray


class ServerIndex:
    """Immutable exact-search index over per-server vector sets.

    Vectors of one server are stored contiguously; ``offsets[i]`` is the first
    row of server ``i``.
    """

    def __init__(self, dim: int, mode: str, server_ids: Sequence[str], offsets: np.ndarray,
                 vectors: np.ndarray, roles: Sequence[str]):
        if mode not in MODES:
            raise ValueError(f"unknown index mode {mode!r}")
        self.dim = int(dim)
        self.mode = mode
        self.server_ids = tuple(server_ids)
        self.offsets = np.asarray(offsets, dtype=np.int64)
        self.vectors = np.asarray(vectors, dtype=np.float64)
        self.roles = tuple(roles)
        self.vectors.setflags(write=False)
        self.offsets.setflags(write=False)

    def __len__(self) -> int:
        return len(self.server_ids)

    def __repr__(self) -> str:
        return f"ServerIndex(mode={self.mode}, servers={len(self)}, vectors={self.n_vectors}, dim={self.dim})"

    @property
    def n_vectors(self) -> int:
        return int(self.vectors.shape[0])

    @cached_property
    def _id_rank(self) -> np.ndarray:
        order = sorted(range(len(self.server_ids)), key=self.server_ids.__getitem__)
        rank = np.empty(len(order), dtype=np.int64)
        rank[order] = np.arange(len(order))
        return rank

    def vector_set(self, server_id: str) -> VectorSet:
        i = self.server_ids.index(server_id)
        lo = self.offsets[i]
        hi = self.offsets[i + 1] if i + 1 < len(self.offsets) else self.n_vectors
        return VectorSet(server_id, self.roles[lo:hi], self.vectors[lo:hi])

    def scores(self, query_vectors: np.ndarray) -> np.ndarray:
        """Per-server MaxSim scores, shape ``(n_queries, n_servers)``."""
        q = np.atleast_2d(np.asarray(query_vectors, dtype=np.float64))
        if q.shape[1] != self.dim:
            raise DimensionMismatchError(self.dim, q.shape[1])
        if not self.server_ids:
            return np.zeros((q.shape[0], 0))
        sims = q @ self.vectors.T
        return np.maximum.reduceat(sims, self.offsets, axis=1)

    def ranked(self, scores: np.ndarray, top_n: int) -> list[ServerScore]:
        order = np.lexsort((self._id_rank, -scores))[:top_n]
        return [ServerScore(self.server_ids[i], float(scores[i])) for i in order]

    def save(self, path: str | Path) -> None:
        # A file handle keeps numpy from appending ".npz" to the name.
        with open(path, "wb") as fh:
            self._savez(fh)

    def _savez(self, fh) -> None:
        np.savez(
            fh,
            dim=np.int64(self.dim),
            mode=np.array(self.mode),
            server_ids=np.array(self.server_ids, dtype=str),
            offsets=self.offsets,
            vectors=self.vectors,
            roles=np.array(self.roles, dtype=str),
        )

    @classmethod
    def load(cls, path: str | Path) -> "ServerIndex":
        with np.load(Path(path), allow_pickle=False) as z:
            return cls(int(z["dim"]), str(z["mode"]), [str(s) for s in z["server_ids"]],
                       z["offsets"], z["vectors"], [str(r) for r in z["roles"]])


def build_index(documents: Sequence[AugmentedDocument], provider: EmbeddingProvider,
                mode: str = MULTI_VECTOR) -> ServerIndex:
    """Embed every document; one vector per segment, or one per server in single-vector mode."""
    if mode not in MODES:
        raise ValueError(f"unknown index mode {mode!r}")
    texts: list[str] = []
    roles: list[str] = []
    owners: list[tuple[str, int | None]] = []
    offsets: list[int] = []
    for doc in documents:
        if not doc.segments:
            raise IndexBuildError("document has no segments", server_id=doc.server_id)
        offsets.append(len(texts))
        if mode == SINGLE_VECTOR:
            texts.append("\n".join(s.text for s in doc.segments))
            roles.append("concatenated")
            owners.append((doc.server_id, None))
        else:
            for j, seg in enumerate(doc.segments):
                texts.append(seg.text)
                roles.append(seg.role)
                owners.append((doc.server_id, j))
    for (sid, j), t in zip(owners, texts):
        if not t.strip():
            raise IndexBuildError("empty segment", server_id=sid, segment=j)
    try:
        vectors = embed_many(texts, provider) if texts else np.zeros((0, provider.dim))
    except EmbeddingError as exc:
        # locate the failing segment for the report
        for (sid, j), t in zip(owners, texts):
            try:
                embed_many([t], provider)
            except EmbeddingError as inner:
                raise IndexBuildError(str(inner), server_id=sid, segment=j) from exc
        raise IndexBuildError(str(exc), server_id=owners[0][0]) from exc
    except ProviderError as exc:
        raise IndexBuildError(str(exc), server_id=owners[0][0] if owners else "?") from exc
    logger.debug("built %s index: %d servers, %d vectors", mode, len(documents), len(texts))
    return ServerIndex(provider.dim, mode, [d.server_id for d in documents],
                       np.asarray(offsets, dtype=np.int64), vectors, roles)


def retrieve(index: ServerIndex, query_vector: np.ndarray, top_n: int) -> list[ServerScore]:
    """Top ``top_n`` servers by MaxSim; ties broken by server_id ascending."""
    if top_n < 1:
        raise ValueError("top_n must be >= 1")
    scores = index.scores(query_vector)
    if scores.shape[1] == 0:
        return []
    return index.ranked(scores[0], top_n)

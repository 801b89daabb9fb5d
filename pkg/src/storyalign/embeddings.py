"""Text embeddings and cosine similarity, with a content-addressed cache.

Three interchangeable backends: a remote batch endpoint for production,
file-backed precomputed vectors, and a deterministic hash-projection
backend for offline tests (the content hash seeds a pseudorandom unit
vector). The provider normalizes text, pins the vector dimension for
the run, and caches by (model id, text hash).
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import requests

from .errors import DegenerateVector, DimensionError, EmbeddingUnavailable, ProviderUnavailable
from .model import normalize_phrase


@dataclass(frozen=True)
class Vector:
    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("vector must be a non-empty 1-d array")
        if not np.all(np.isfinite(arr)):
            raise ValueError("vector entries must be finite")
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


def cosine(u: Vector, v: Vector) -> float:
    """Cosine similarity, clamped to [-1, 1] against rounding."""
    if u.dim != v.dim:
        raise DimensionError(f"cosine over dims {u.dim} and {v.dim}")
    nu = float(np.linalg.norm(u.values))
    nv = float(np.linalg.norm(v.values))
    if nu == 0.0 or nv == 0.0:
        raise DegenerateVector("cosine with a zero vector")
    raw = float(np.dot(u.values, v.values) / (nu * nv))
    return max(-1.0, min(1.0, raw))


def text_key(text: str) -> str:
    return hashlib.sha256(normalize_phrase(text).encode("utf-8")).hexdigest()


class HashProjectionBackend:
    """Deterministic test backend: hash of the text seeds a unit vector."""

    def __init__(self, dim: int = 64):
        if dim < 2:
            raise ValueError("dim must be >= 2")
        self.dim = dim

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:
        out = []
        for text in texts:
            seed = int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")
            rng = np.random.default_rng(seed)
            vec = rng.standard_normal(self.dim)
            out.append(vec / np.linalg.norm(vec))
        return out


class FileVectorBackend:
    """Precomputed vectors, from a JSON file {text: [floats]} or an in-memory mapping.

    Keys are matched on the normalized text.
    """

    def __init__(self, source: Mapping[str, Sequence[float]] | Path | str):
        if isinstance(source, (str, Path)):
            with Path(source).open(encoding="utf-8") as fh:
                raw = json.load(fh)
        else:
            raw = source
        self._table = {normalize_phrase(k): np.asarray(v, dtype=np.float64) for k, v in raw.items()}

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:
        out = []
        for text in texts:
            key = normalize_phrase(text)
            if key not in self._table:
                raise EmbeddingUnavailable(f"no precomputed vector for {text!r}")
            out.append(self._table[key])
        return out


class HttpEmbeddingBackend:
    """Remote endpoint taking a batch of texts and returning one vector each."""

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key: str | None = None,
        timeout: float = 60.0,
        retries: int = 3,
        backoff: float = 0.5,
    ):
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {"model": self.model, "input": list(texts)}
        last_error: Exception | None = None
        for attempt in range(self.retries):
            try:
                resp = requests.post(self.endpoint, json=body, headers=headers, timeout=self.timeout)
                resp.raise_for_status()
                data = resp.json()["data"]
                if len(data) != len(texts):
                    raise EmbeddingUnavailable("endpoint returned a batch of the wrong length")
                return [np.asarray(entry["embedding"], dtype=np.float64) for entry in data]
            except (requests.RequestException, KeyError, ValueError) as exc:
                last_error = exc
                if attempt + 1 < self.retries and self.backoff > 0:
                    time.sleep(self.backoff * (2**attempt))
        raise EmbeddingUnavailable(f"embedding endpoint {self.endpoint} unreachable: {last_error}")


DEFAULT_MODEL_ID = "all-MiniLM-L6-v2"


class EmbeddingProvider:
    """Backend wrapper owning normalization, dimension pinning, and the cache.

    Vectors are deterministic per (backend, text): the cache is keyed by
    the content hash of the normalized text and namespaced by model id
    through the cache file path. The dimension is read from the first
    vector and enforced for the rest of the run.
    """

    def __init__(
        self,
        backend,
        model_id: str = DEFAULT_MODEL_ID,
        cache_path: Path | str | None = None,
    ):
        self.backend = backend
        self.model_id = model_id
        self._cache: dict[str, np.ndarray] = {}
        self._dim: int | None = None
        self._lock = threading.Lock()
        self._cache_path = Path(cache_path) if cache_path else None
        self.backend_calls = 0
        if self._cache_path and self._cache_path.exists():
            self._load_cache()

    def _load_cache(self) -> None:
        assert self._cache_path is not None
        with self._cache_path.open(encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                record = json.loads(line)
                vec = np.asarray(record["v"], dtype=np.float64)
                self._cache[record["h"]] = vec
                if self._dim is None:
                    self._dim = vec.shape[0]

    def _check(self, text: str, vec: np.ndarray) -> np.ndarray:
        vec = np.asarray(vec, dtype=np.float64)
        if not np.all(np.isfinite(vec)):
            raise EmbeddingUnavailable(f"backend returned non-finite values for {text!r}")
        if float(np.linalg.norm(vec)) == 0.0:
            raise DegenerateVector(f"backend returned a zero vector for {text!r}")
        if self._dim is None:
            self._dim = int(vec.shape[0])
        elif vec.shape[0] != self._dim:
            raise DimensionError(f"vector of dim {vec.shape[0]} in a dim-{self._dim} run")
        return vec

    def _persist(self, key: str, vec: np.ndarray) -> None:
        if self._cache_path is None:
            return
        self._cache_path.parent.mkdir(parents=True, exist_ok=True)
        record = json.dumps({"h": key, "v": vec.tolist()})
        with self._cache_path.open("a", encoding="utf-8") as fh:
            fh.write(record + "\n")

    def embed(self, text: str) -> Vector:
        return Vector(self.embed_many([text])[0])

    def embed_many(self, texts: Sequence[str]) -> np.ndarray:
        """Embed a batch, reusing cached vectors; rows align with texts."""
        normalized = []
        for text in texts:
            norm = normalize_phrase(text)
            if not norm:
                raise ValueError("cannot embed empty text")
            normalized.append(norm)
        keys = [text_key(t) for t in normalized]
        with self._lock:
            missing = [i for i, k in enumerate(keys) if k not in self._cache]
        if missing:
            batch = [normalized[i] for i in missing]
            try:
                vectors = self.backend.embed_batch(batch)
            except ProviderUnavailable as exc:
                raise EmbeddingUnavailable(str(exc)) from exc
            self.backend_calls += 1
            with self._lock:
                for i, vec in zip(missing, vectors):
                    checked = self._check(normalized[i], vec)
                    # Concurrent duplicate computes are fine: values are
                    # identical, last write wins.
                    if keys[i] not in self._cache:
                        self._cache[keys[i]] = checked
                        self._persist(keys[i], checked)
        with self._lock:
            rows = [self._cache[k] for k in keys]
        return np.vstack(rows)

    def cosine(self, a: str, b: str) -> float:
        return cosine(self.embed(a), self.embed(b))

    @property
    def cache_size(self) -> int:
        return len(self._cache)

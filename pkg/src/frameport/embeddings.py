"""Contextual embeddings for keyword occurrences.

A provider turns a KeywordOccurrence into one d_b-dimensional vector by
average-pooling the subword vectors of the keyword's tokens inside its
context. Three interchangeable providers:

- file-backed: vectors precomputed offline, keyed per occurrence;
- deterministic-hash: per-token vectors seeded from a content hash, so
  identical keyword text embeds identically across runs;
- context-window: skip-gram vectors trained on the corpus, mixed with a
  projected local-context average so occurrences of the same keyword in
  different surroundings separate.

Providers are read-only once constructed; training never writes back.
"""

from __future__ import annotations

import base64
import binascii
import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from frameport.bpe import (
    BpeVocab,
    bpe_encode_with_offsets,
    pretokenize,
    token_spans_overlapping,
)
from frameport.canon import KeywordOccurrence
from frameport.errors import (
    ConfigError,
    DimensionMismatch,
    MissingVectorError,
)

FILE_BACKED = "file-backed"
CONTEXT_WINDOW = "context-window"
DETERMINISTIC_HASH = "deterministic-hash"


@dataclass(frozen=True, eq=False)
class ContextualEmbedding:
    vector: np.ndarray
    occurrence: KeywordOccurrence


def occurrence_key(occ: KeywordOccurrence) -> str:
    """Stable lookup key: corpusid:unitid:spanstart:spanend."""
    return f"{occ.unit_ref}:{occ.span[0]}:{occ.span[1]}"


class EmbeddingProvider:
    """Interface: subclasses define kind, dim, and _vector()."""

    kind: str = "abstract"

    @property
    def dim(self) -> int:
        raise NotImplementedError

    def _vector(self, occ: KeywordOccurrence) -> np.ndarray:
        raise NotImplementedError


def embed_occurrence(
    provider: EmbeddingProvider, occ: KeywordOccurrence
) -> ContextualEmbedding:
    vec = np.asarray(provider._vector(occ), dtype=np.float32)
    if vec.shape != (provider.dim,):
        raise DimensionMismatch(
            f"provider returned shape {vec.shape}, declared d_b={provider.dim}"
        )
    if not np.all(np.isfinite(vec)):
        raise DimensionMismatch("non-finite embedding entries")
    return ContextualEmbedding(vector=vec, occurrence=occ)


def embed_batch(
    provider: EmbeddingProvider, occs: Sequence[KeywordOccurrence]
) -> list[ContextualEmbedding]:
    out: list[ContextualEmbedding] = []
    for i, occ in enumerate(occs):
        try:
            out.append(embed_occurrence(provider, occ))
        except Exception as exc:
            raise type(exc)(f"occurrence {i}: {exc}") from exc
    return out


class FileBackedProvider(EmbeddingProvider):
    """Vectors loaded from a text file.

    Format: header line ``d_b=<int>``, then one record per occurrence:
    ``corpusid:unitid:spanstart:spanend<TAB><payload>`` where the payload
    is the f32 little-endian vector as hex or base64.
    """

    kind = FILE_BACKED

    def __init__(self, path: str | Path):
        lines = Path(path).read_text().splitlines()
        if not lines or not lines[0].startswith("d_b="):
            raise ConfigError(f"{path}: missing d_b=<int> header")
        try:
            self._dim = int(lines[0][4:])
        except ValueError as exc:
            raise ConfigError(f"{path}: bad d_b header") from exc
        if self._dim <= 0:
            raise ConfigError(f"{path}: d_b must be positive")
        self._table: dict[str, np.ndarray] = {}
        for ln, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            key, _, payload = line.partition("\t")
            if not payload:
                raise ConfigError(f"{path}:{ln}: expected key<TAB>payload")
            raw = _decode_payload(payload.strip(), path, ln)
            vec = np.frombuffer(raw, dtype="<f4")
            if vec.shape != (self._dim,):
                raise DimensionMismatch(
                    f"{path}:{ln}: {vec.shape[0]} floats, expected {self._dim}"
                )
            self._table[key] = vec.astype(np.float32)

    @property
    def dim(self) -> int:
        return self._dim

    def __len__(self) -> int:
        return len(self._table)

    def _vector(self, occ: KeywordOccurrence) -> np.ndarray:
        key = occurrence_key(occ)
        vec = self._table.get(key)
        if vec is None:
            raise MissingVectorError(f"no vector for occurrence {key!r}")
        return vec


def _decode_payload(payload: str, path, ln: int) -> bytes:
    is_hex = len(payload) % 2 == 0 and all(
        c in "0123456789abcdefABCDEF" for c in payload
    )
    if is_hex:
        return binascii.unhexlify(payload)
    try:
        return base64.b64decode(payload, validate=True)
    except binascii.Error as exc:
        raise ConfigError(f"{path}:{ln}: payload is neither hex nor base64") from exc


def write_embedding_file(
    path: str | Path, dim: int, records: Iterable[tuple[str, np.ndarray]]
) -> None:
    """Emit the file-backed format (base64 payloads)."""
    with open(path, "w") as fh:
        fh.write(f"d_b={dim}\n")
        for key, vec in records:
            arr = np.asarray(vec, dtype="<f4")
            if arr.shape != (dim,):
                raise DimensionMismatch(f"record {key!r} has shape {arr.shape}")
            fh.write(f"{key}\t{base64.b64encode(arr.tobytes()).decode('ascii')}\n")


class HashProvider(EmbeddingProvider):
    """Content-hashed static vectors; reproducible across processes.

    Each pre-token of the keyword text gets a unit-free gaussian vector
    seeded by sha256 of the token, and the occurrence embeds as the mean
    over those tokens. Context is ignored by construction.
    """

    kind = DETERMINISTIC_HASH

    def __init__(self, dim: int = 64):
        if dim <= 0:
            raise ConfigError("d_b must be positive")
        self._dim = dim
        self._cache: dict[str, np.ndarray] = {}

    @property
    def dim(self) -> int:
        return self._dim

    def _token_vector(self, token: str) -> np.ndarray:
        vec = self._cache.get(token)
        if vec is None:
            digest = hashlib.sha256(token.encode("utf-8")).digest()
            seed = int.from_bytes(digest[:8], "little")
            vec = (
                np.random.default_rng(seed)
                .standard_normal(self._dim)
                .astype(np.float32)
            )
            self._cache[token] = vec
        return vec

    def _vector(self, occ: KeywordOccurrence) -> np.ndarray:
        tokens = pretokenize(occ.keyword.text)
        if not tokens:
            raise ConfigError(f"keyword {occ.keyword.text!r} has no tokens")
        stack = np.stack([self._token_vector(t) for t in tokens])
        return stack.mean(axis=0)


class ContextWindowProvider(EmbeddingProvider):
    """Skip-gram token vectors plus a projected local-context average.

    The occurrence vector is mean(keyword-token vectors) + R @ mean(vectors
    of the w tokens on each side), with R a fixed seeded projection. The
    context term makes occurrences of one keyword differ by surroundings.
    """

    kind = CONTEXT_WINDOW

    def __init__(
        self,
        vocab: BpeVocab,
        vectors: np.ndarray,
        window: int = 4,
        context_weight: float = 0.5,
        seed: int = 0,
    ):
        if vectors.ndim != 2 or vectors.shape[0] != vocab.size:
            raise DimensionMismatch(
                f"vector table {vectors.shape} does not match vocab size {vocab.size}"
            )
        self._vocab = vocab
        self._vectors = vectors.astype(np.float32)
        self._vectors.flags.writeable = False
        self._window = window
        self._context_weight = context_weight
        d = vectors.shape[1]
        self._projection = (
            np.random.default_rng(seed).standard_normal((d, d)).astype(np.float32)
            / np.sqrt(d)
        )

    @property
    def dim(self) -> int:
        return self._vectors.shape[1]

    @classmethod
    def train(
        cls,
        texts: Iterable[str],
        vocab: BpeVocab,
        dim: int = 64,
        window: int = 4,
        negatives: int = 4,
        lr: float = 0.05,
        epochs: int = 1,
        seed: int = 0,
        context_weight: float = 0.5,
    ) -> "ContextWindowProvider":
        """Skip-gram with negative sampling over BPE token streams."""
        rng = np.random.default_rng(seed)
        v = vocab.size
        w_in = ((rng.random((v, dim)) - 0.5) / dim).astype(np.float32)
        w_out = np.zeros((v, dim), dtype=np.float32)
        streams = [
            [tid for tid, _ in bpe_encode_with_offsets(vocab, t)] for t in texts
        ]
        if not any(streams):
            raise ConfigError("cannot train on an empty corpus")
        for _ in range(epochs):
            for stream in streams:
                n = len(stream)
                for i, center in enumerate(stream):
                    lo = max(0, i - window)
                    hi = min(n, i + window + 1)
                    for j in range(lo, hi):
                        if j == i:
                            continue
                        ctx = stream[j]
                        targets = [(ctx, 1.0)]
                        for neg in rng.integers(0, v, size=negatives):
                            targets.append((int(neg), 0.0))
                        vi = w_in[center]
                        for tid, label in targets:
                            vo = w_out[tid]
                            score = 1.0 / (1.0 + np.exp(-np.clip(vi @ vo, -30, 30)))
                            g = lr * (label - score)
                            w_out[tid] = vo + g * vi
                            vi = vi + g * vo
                        w_in[center] = vi
        return cls(
            vocab,
            w_in,
            window=window,
            context_weight=context_weight,
            seed=seed,
        )

    def _vector(self, occ: KeywordOccurrence) -> np.ndarray:
        encoded = bpe_encode_with_offsets(self._vocab, occ.context)
        positions = token_spans_overlapping(encoded, occ.span_in_context)
        if not positions:
            raise MissingVectorError(
                f"keyword span {occ.span_in_context} matches no tokens in context"
            )
        ids = [encoded[k][0] for k in positions]
        kw_mean = self._vectors[ids].mean(axis=0)
        lo = max(0, positions[0] - self._window)
        hi = min(len(encoded), positions[-1] + 1 + self._window)
        ctx_ids = [
            encoded[k][0] for k in range(lo, hi) if k not in positions
        ]
        if ctx_ids:
            ctx_mean = self._vectors[ctx_ids].mean(axis=0)
            kw_mean = kw_mean + self._context_weight * (self._projection @ ctx_mean)
        return kw_mean


def make_provider(
    kind: str,
    dim: int = 64,
    path: str | Path | None = None,
    vocab: BpeVocab | None = None,
    texts: Iterable[str] | None = None,
    seed: int = 0,
) -> EmbeddingProvider:
    if kind == FILE_BACKED:
        if path is None:
            raise ConfigError("file-backed provider needs a path")
        return FileBackedProvider(path)
    if kind == DETERMINISTIC_HASH:
        return HashProvider(dim)
    if kind == CONTEXT_WINDOW:
        if vocab is None or texts is None:
            raise ConfigError("context-window provider needs a vocab and corpus")
        return ContextWindowProvider.train(texts, vocab, dim=dim, seed=seed)
    raise ConfigError(f"unknown provider kind {kind!r}")

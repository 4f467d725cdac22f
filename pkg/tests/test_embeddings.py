"""Embedding providers: hash reproducibility, file format, context windows."""

from __future__ import annotations

import hashlib

import numpy as np
import pytest

from frameport.bpe import bpe_train
from frameport.canon import CALLABLE, PARAMETER, ApiKeyword, KeywordOccurrence
from frameport.embeddings import (
    CONTEXT_WINDOW,
    DETERMINISTIC_HASH,
    FILE_BACKED,
    ContextWindowProvider,
    FileBackedProvider,
    HashProvider,
    embed_batch,
    embed_occurrence,
    make_provider,
    occurrence_key,
    write_embedding_file,
)
from frameport.errors import ConfigError, DimensionMismatch, MissingVectorError


def _occ(text="nn.Linear", kind=CALLABLE, owner=None, context=None, span=(0, 9),
         unit_ref="pytorch:0", context_offset=0):
    kw = ApiKeyword("pytorch", kind, text, owner=owner)
    return KeywordOccurrence(
        keyword=kw,
        span=span,
        context=context if context is not None else text,
        context_offset=context_offset,
        unit_ref=unit_ref,
    )


def test_occurrence_key_format():
    occ = _occ(span=(12, 21), unit_ref="pytorch:7")
    assert occurrence_key(occ) == "pytorch:7:12:21"


def test_hash_provider_matches_sha256_seeded_token_mean():
    provider = HashProvider(dim=16)
    got = embed_occurrence(provider, _occ("nn.Linear")).vector

    def token_vec(token: str) -> np.ndarray:
        digest = hashlib.sha256(token.encode()).digest()
        seed = int.from_bytes(digest[:8], "little")
        return np.random.default_rng(seed).standard_normal(16).astype(np.float32)

    expected = np.stack([token_vec(t) for t in ("nn", ".", "Linear")]).mean(axis=0)
    assert np.array_equal(got, expected)


def test_hash_provider_ignores_context_and_is_stable_across_instances():
    a = HashProvider(dim=8)
    b = HashProvider(dim=8)
    occ1 = _occ("nn.ReLU", context="x = nn.ReLU()", span=(4, 11))
    occ2 = _occ("nn.ReLU", context="totally different place", span=(0, 7))
    v1 = embed_occurrence(a, occ1).vector
    v2 = embed_occurrence(a, occ2).vector
    v3 = embed_occurrence(b, occ1).vector
    assert np.array_equal(v1, v2)
    assert np.array_equal(v1, v3)
    with pytest.raises(ConfigError):
        HashProvider(dim=0)


def test_file_backed_round_trip_and_lookup(tmp_path):
    rng = np.random.default_rng(0)
    vecs = {f"pytorch:0:{i}:{i + 3}": rng.standard_normal(5).astype(np.float32)
            for i in range(4)}
    path = tmp_path / "emb.txt"
    write_embedding_file(path, 5, vecs.items())
    provider = FileBackedProvider(path)
    assert provider.dim == 5 and len(provider) == 4
    occ = _occ("abc", span=(2, 5), unit_ref="pytorch:0")
    got = embed_occurrence(provider, occ).vector
    assert np.array_equal(got, vecs["pytorch:0:2:5"])
    with pytest.raises(MissingVectorError):
        embed_occurrence(provider, _occ("abc", span=(90, 93)))


def test_file_backed_accepts_hex_payloads(tmp_path):
    vec = np.arange(3, dtype="<f4")
    path = tmp_path / "hex.txt"
    path.write_text(f"d_b=3\npytorch:0:0:3\t{vec.tobytes().hex()}\n")
    provider = FileBackedProvider(path)
    assert np.array_equal(
        embed_occurrence(provider, _occ("abc", span=(0, 3))).vector, vec
    )


def test_file_backed_format_errors(tmp_path):
    cases = {
        "no_header.txt": "pytorch:0:0:3\tdeadbeef\n",
        "bad_dim.txt": "d_b=zero\n",
        "neg_dim.txt": "d_b=-3\n",
        "no_tab.txt": "d_b=3\nk deadbeef\n",
        "bad_payload.txt": "d_b=3\nk\t!!!not-encodable!!!\n",
    }
    for name, content in cases.items():
        p = tmp_path / name
        p.write_text(content)
        with pytest.raises(ConfigError):
            FileBackedProvider(p)
    wrong = tmp_path / "wrong_width.txt"
    vec = np.arange(2, dtype="<f4")
    wrong.write_text(f"d_b=3\nk\t{vec.tobytes().hex()}\n")
    with pytest.raises(DimensionMismatch):
        FileBackedProvider(wrong)
    with pytest.raises(DimensionMismatch):
        write_embedding_file(tmp_path / "w.txt", 3, [("k", np.zeros(2))])


def _trained_provider(**kwargs):
    texts = [
        "fc = nn.Linear(in_features=4, out_features=2)\n" * 3,
        "act = nn.ReLU()\npool = nn.MaxPool2d(kernel_size=2)\n" * 2,
    ]
    vocab = bpe_train(texts, 40)
    return texts, vocab, ContextWindowProvider.train(texts, vocab, dim=12, **kwargs)


def test_context_window_provider_separates_contexts():
    _, _, provider = _trained_provider()
    ctx_a = "fc = nn.Linear(in_features=4)"
    ctx_b = "y = nn.Linear(out_features=2)"
    occ_a = _occ("nn.Linear", context=ctx_a, span=(5, 14))
    occ_b = _occ("nn.Linear", context=ctx_b, span=(4, 13))
    va = embed_occurrence(provider, occ_a).vector
    vb = embed_occurrence(provider, occ_b).vector
    assert va.shape == (12,) and vb.shape == (12,)
    assert not np.array_equal(va, vb)  # same keyword, different surroundings
    # deterministic re-train produces identical vectors
    _, _, provider2 = _trained_provider()
    assert np.array_equal(va, embed_occurrence(provider2, occ_a).vector)


def test_context_window_span_outside_context_fails():
    _, _, provider = _trained_provider()
    occ = _occ("nn.Linear", context="short", span=(100, 109))
    with pytest.raises(MissingVectorError):
        embed_occurrence(provider, occ)


def test_context_window_honors_context_offset():
    _, _, provider = _trained_provider()
    ctx = "fc = nn.Linear(in_features=4)"
    shifted = _occ("nn.Linear", context=ctx, span=(105, 114), context_offset=100)
    plain = _occ("nn.Linear", context=ctx, span=(5, 14))
    assert np.array_equal(
        embed_occurrence(provider, shifted).vector,
        embed_occurrence(provider, plain).vector,
    )


def test_context_window_vector_table_validation():
    texts = ["tiny corpus"]
    vocab = bpe_train(texts, 2)
    with pytest.raises(DimensionMismatch):
        ContextWindowProvider(vocab, np.zeros((3, 4), np.float32))
    with pytest.raises(ConfigError):
        ContextWindowProvider.train([], vocab)
    provider = ContextWindowProvider(
        vocab, np.ones((vocab.size, 4), np.float32)
    )
    with pytest.raises(ValueError):
        provider._vectors[0, 0] = 9.0  # table is read-only


def test_embed_batch_prefixes_the_failing_index():
    provider = HashProvider(dim=4)
    good = _occ("nn.ReLU")
    with pytest.raises(ConfigError) as exc:
        embed_batch(provider, [good, _occ("")])
    assert str(exc.value).startswith("occurrence 1:")
    out = embed_batch(provider, [good, good])
    assert len(out) == 2
    assert all(e.vector.shape == (4,) for e in out)


def test_embed_occurrence_validates_shape_and_finiteness():
    class Bad(HashProvider):
        def _vector(self, occ):
            return np.zeros(self.dim + 1, np.float32)

    with pytest.raises(DimensionMismatch):
        embed_occurrence(Bad(4), _occ())

    class Inf(HashProvider):
        def _vector(self, occ):
            return np.full(self.dim, np.inf, np.float32)

    with pytest.raises(DimensionMismatch):
        embed_occurrence(Inf(4), _occ())


def test_make_provider_dispatch(tmp_path):
    assert make_provider(DETERMINISTIC_HASH, dim=7).dim == 7
    with pytest.raises(ConfigError):
        make_provider(FILE_BACKED)
    with pytest.raises(ConfigError):
        make_provider(CONTEXT_WINDOW)
    with pytest.raises(ConfigError):
        make_provider("psychic")
    path = tmp_path / "emb.txt"
    write_embedding_file(path, 2, [("k", np.zeros(2, np.float32))])
    assert make_provider(FILE_BACKED, path=path).kind == FILE_BACKED
    texts = ["a b c d"]
    vocab = bpe_train(texts, 2)
    provider = make_provider(CONTEXT_WINDOW, dim=6, vocab=vocab, texts=texts)
    assert provider.dim == 6

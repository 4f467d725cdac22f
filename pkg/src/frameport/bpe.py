"""Byte-pair encoding over UTF-8 bytes.

The initial alphabet is all 256 byte values, so every string encodes
without an unknown-token fallback and decoding is lossless. Merges are
learned and applied within pre-tokens (identifier / number / whitespace /
single-symbol chunks), never across them.

Token strings map bytes through latin-1, which keeps the vocab JSON
human-readable for ASCII while staying a bijection.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from frameport.errors import ConfigError

PAD = "<pad>"
UNK = "<unk>"
MASK = "<mask>"
SPECIAL_TOKENS = (PAD, UNK, MASK)

_PRETOKEN_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*|[0-9]+|\s+|[^\sA-Za-z0-9_]")


def pretokenize(text: str) -> list[str]:
    """Split text into chunks that merges never cross."""
    return _PRETOKEN_RE.findall(text)


def _byte_tokens(pretoken: str) -> tuple[str, ...]:
    return tuple(chr(b) for b in pretoken.encode("utf-8"))


@dataclass(frozen=True)
class BpeVocab:
    """Ordered merge list plus the token table it induces."""

    merges: tuple[tuple[str, str], ...]
    tokens: tuple[str, ...] = ()
    token_to_id: dict[str, int] = field(default_factory=dict, compare=False)
    _ranks: dict[tuple[str, str], int] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if not self.tokens:
            base = list(SPECIAL_TOKENS) + [chr(b) for b in range(256)]
            base += [a + b for a, b in self.merges]
            object.__setattr__(self, "tokens", tuple(base))
        expected = len(SPECIAL_TOKENS) + 256 + len(self.merges)
        if len(self.tokens) != expected:
            raise ConfigError(
                f"token table size {len(self.tokens)} != {expected} implied by merges"
            )
        self.token_to_id.clear()
        self.token_to_id.update({t: i for i, t in enumerate(self.tokens)})
        if len(self.token_to_id) != len(self.tokens):
            raise ConfigError("duplicate tokens in vocabulary")
        self._ranks.clear()
        self._ranks.update({pair: r for r, pair in enumerate(self.merges)})

    @property
    def size(self) -> int:
        return len(self.tokens)

    @property
    def pad_id(self) -> int:
        return self.token_to_id[PAD]

    @property
    def unk_id(self) -> int:
        return self.token_to_id[UNK]

    @property
    def mask_id(self) -> int:
        return self.token_to_id[MASK]

    def to_dict(self) -> dict:
        return {"version": 1, "merges": [list(p) for p in self.merges]}

    @classmethod
    def from_dict(cls, doc: dict) -> "BpeVocab":
        return cls(merges=tuple((a, b) for a, b in doc["merges"]))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "BpeVocab":
        return cls.from_dict(json.loads(Path(path).read_text()))


def bpe_train(texts: Iterable[str], merge_count: int) -> BpeVocab:
    """Learn up to merge_count merges from a text stream.

    The most frequent adjacent pair wins each round; frequency ties go to
    the lexicographically smallest pair so training is deterministic.
    """
    if merge_count < 0:
        raise ConfigError("merge_count must be >= 0")
    word_counts: Counter[tuple[str, ...]] = Counter()
    saw_text = False
    for text in texts:
        saw_text = True
        for pre in pretokenize(text):
            word_counts[_byte_tokens(pre)] += 1
    if not saw_text:
        raise ConfigError("cannot train BPE on an empty stream")
    merges: list[tuple[str, str]] = []
    words = dict(word_counts)
    for _ in range(merge_count):
        pair_counts: Counter[tuple[str, str]] = Counter()
        for word, count in words.items():
            for pair in zip(word, word[1:]):
                pair_counts[pair] += count
        if not pair_counts:
            break
        best_count = max(pair_counts.values())
        best = min(p for p, c in pair_counts.items() if c == best_count)
        merges.append(best)
        merged = best[0] + best[1]
        new_words: dict[tuple[str, ...], int] = {}
        for word, count in words.items():
            out: list[str] = []
            i = 0
            while i < len(word):
                if i + 1 < len(word) and (word[i], word[i + 1]) == best:
                    out.append(merged)
                    i += 2
                else:
                    out.append(word[i])
                    i += 1
            key = tuple(out)
            new_words[key] = new_words.get(key, 0) + count
        words = new_words
    return BpeVocab(merges=tuple(merges))


def _merge_word(vocab: BpeVocab, word: tuple[str, ...]) -> tuple[str, ...]:
    ranks = vocab._ranks
    symbols = list(word)
    while len(symbols) > 1:
        best_rank = None
        for pair in zip(symbols, symbols[1:]):
            r = ranks.get(pair)
            if r is not None and (best_rank is None or r < best_rank):
                best_rank = r
                best_pair = pair
        if best_rank is None:
            break
        a, b = best_pair
        merged = a + b
        out: list[str] = []
        i = 0
        while i < len(symbols):
            if i + 1 < len(symbols) and symbols[i] == a and symbols[i + 1] == b:
                out.append(merged)
                i += 2
            else:
                out.append(symbols[i])
                i += 1
        symbols = out
    return tuple(symbols)


def bpe_encode(vocab: BpeVocab, text: str) -> list[int]:
    """Encode text to token ids; lossless under :func:`bpe_decode`."""
    return [tid for tid, _ in bpe_encode_with_offsets(vocab, text)]


def bpe_encode_with_offsets(
    vocab: BpeVocab, text: str
) -> list[tuple[int, tuple[int, int]]]:
    """Encode and report each token's (start, end) byte span in the text."""
    out: list[tuple[int, tuple[int, int]]] = []
    pos = 0
    for pre in pretokenize(text):
        for sym in _merge_word(vocab, _byte_tokens(pre)):
            width = len(sym)  # one latin-1 char per byte
            out.append((vocab.token_to_id[sym], (pos, pos + width)))
            pos += width
    return out


def bpe_decode(vocab: BpeVocab, ids: Iterable[int]) -> str:
    """Invert bpe_encode; special tokens decode to nothing."""
    parts: list[str] = []
    for tid in ids:
        token = vocab.tokens[tid]
        if token in SPECIAL_TOKENS:
            continue
        parts.append(token)
    return "".join(parts).encode("latin-1").decode("utf-8")


def token_spans_overlapping(
    encoded: list[tuple[int, tuple[int, int]]], span: tuple[int, int]
) -> list[int]:
    """Positions of encoded tokens whose byte span intersects ``span``."""
    lo, hi = span
    return [
        k
        for k, (_, (s, e)) in enumerate(encoded)
        if s < hi and e > lo
    ]


def iter_token_ids(vocab: BpeVocab, texts: Iterable[str]) -> Iterator[int]:
    for text in texts:
        yield from bpe_encode(vocab, text)

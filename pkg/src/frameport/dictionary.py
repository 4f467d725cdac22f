"""Induce an API keyword dictionary from aligned output embeddings.

Matching is hierarchical: callables and their parameters form groups;
groups pair up greedily by summed similarity, then parameters pair up
one-to-one inside each matched group. Parameters the target group cannot
absorb are dropped, and a parameter scoring above the threshold tau
against some target callable becomes a one-to-many expansion that emits a
new zero-argument call.

All ties break toward lower indices / lexicographically smaller names so
generation is deterministic.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from frameport.canon import (
    CALLABLE,
    PARAMETER,
    ApiKeyword,
    SignatureDatabase,
)
from frameport.errors import (
    ConfigError,
    DimensionMismatch,
    EmptyVocabularyError,
    KOutOfRange,
    UnmappedKeyword,
    ZeroVectorError,
)

COSINE = "cosine"
DOT = "dot"

RENAME = "rename"
DROP = "drop"
EXPAND = "expand"


@dataclass(frozen=True, eq=False)
class ScoreMatrix:
    """Keyword-pair scores: rows = source vocab ids, cols = target."""

    values: np.ndarray
    measure: str

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def score_matrix(E1: np.ndarray, E2: np.ndarray, measure: str = COSINE) -> ScoreMatrix:
    """Pairwise scores between embedding columns of the two sides."""
    if E1.ndim != 2 or E2.ndim != 2 or E1.shape[0] != E2.shape[0]:
        raise DimensionMismatch(
            f"embedding matrices {E1.shape} / {E2.shape} do not share a row dim"
        )
    a = E1.astype(np.float64).T  # (m1, d)
    b = E2.astype(np.float64).T  # (m2, d)
    if measure == DOT:
        return ScoreMatrix(values=a @ b.T, measure=DOT)
    if measure == COSINE:
        na = np.linalg.norm(a, axis=1)
        nb = np.linalg.norm(b, axis=1)
        if np.any(na == 0) or np.any(nb == 0):
            side = 1 if np.any(na == 0) else 2
            raise ZeroVectorError(f"zero-norm embedding on side {side}")
        return ScoreMatrix(values=(a / na[:, None]) @ (b / nb[:, None]).T, measure=COSINE)
    raise ConfigError(f"unknown measure {measure!r}")


def csls_rescale(s: ScoreMatrix, k: int) -> ScoreMatrix:
    """Hubness correction: 2*s_ij minus each side's mean top-k neighborhood."""
    values = s.values
    m1, m2 = values.shape
    if k < 1 or k > min(m1, m2):
        raise KOutOfRange(f"K={k} outside [1, {min(m1, m2)}]")
    # mean of the k largest entries per row / per column
    row_top = np.sort(values, axis=1)[:, -k:].mean(axis=1)
    col_top = np.sort(values, axis=0)[-k:, :].mean(axis=0)
    out = 2.0 * values - row_top[:, None] - col_top[None, :]
    return ScoreMatrix(values=out, measure=f"csls({k}, {s.measure})")


def _values(s: ScoreMatrix | np.ndarray) -> np.ndarray:
    return s.values if isinstance(s, ScoreMatrix) else np.asarray(s)


def greedy_match(
    s: ScoreMatrix | np.ndarray,
    rows: Sequence[int] | None = None,
    cols: Sequence[int] | None = None,
) -> list[tuple[int, int, float]]:
    """Per-row argmax over the column subset; ties pick the lowest column.

    Many-to-one matches are allowed: each row chooses independently.
    """
    values = _values(s)
    row_ids = list(range(values.shape[0])) if rows is None else list(rows)
    col_ids = list(range(values.shape[1])) if cols is None else list(cols)
    if not col_ids:
        return []
    col_arr = np.asarray(col_ids)
    out = []
    for i in row_ids:
        row = values[i, col_arr]
        j = int(np.argmax(row))  # first occurrence wins ties
        out.append((i, int(col_arr[j]), float(row[j])))
    return out


@dataclass(frozen=True)
class KeywordGroup:
    """A callable keyword together with its parameter keywords."""

    callable_kw: ApiKeyword
    parameters: tuple[ApiKeyword, ...] = ()

    def __post_init__(self) -> None:
        if self.callable_kw.kind != CALLABLE:
            raise ConfigError(f"group head {self.callable_kw.text!r} is not a callable")
        for p in self.parameters:
            if p.kind != PARAMETER or p.owner != self.callable_kw.text:
                raise ConfigError(
                    f"parameter {p.text!r} does not belong to {self.callable_kw.text!r}"
                )


def build_groups(
    db: SignatureDatabase, vocab: Sequence[ApiKeyword]
) -> list[KeywordGroup]:
    """Group the vocabulary by callable ownership, in vocab order."""
    for kw in vocab:
        if kw.id < 0:
            raise ConfigError(f"vocab keyword {kw.text!r} has no id")
    params_by_owner: dict[str, list[ApiKeyword]] = {}
    for kw in vocab:
        if kw.kind == PARAMETER and kw.owner:
            params_by_owner.setdefault(kw.owner, []).append(kw)
    groups = []
    for kw in vocab:
        if kw.kind == CALLABLE:
            groups.append(
                KeywordGroup(
                    callable_kw=kw,
                    parameters=tuple(params_by_owner.get(kw.text, ())),
                )
            )
    return groups


def group_similarity(
    g1: KeywordGroup, g2: KeywordGroup, s: ScoreMatrix | np.ndarray
) -> float:
    """Callable-pair score plus each source parameter's best in-group score."""
    values = _values(s)
    total = float(values[g1.callable_kw.id, g2.callable_kw.id])
    if g2.parameters:
        cols = [q.id for q in g2.parameters]
        for p in g1.parameters:
            total += float(values[p.id, cols].max())
    return total


@dataclass(frozen=True)
class ParamEntry:
    src: str
    tgt: str | None  # None means the parameter is dropped
    score: float


@dataclass(frozen=True)
class Expansion:
    src_param: str
    new_call: str  # rendered zero-argument call, e.g. "nn.ReLU()"
    score: float


@dataclass(frozen=True)
class GroupEntry:
    src_callable: str
    tgt_callable: str
    score: float
    params: tuple[ParamEntry, ...] = ()
    expansions: tuple[Expansion, ...] = ()


@dataclass(frozen=True)
class KeywordDictionary:
    src_framework: str
    tgt_framework: str
    tau: float
    groups: tuple[GroupEntry, ...] = ()

    def __post_init__(self) -> None:
        seen = set()
        for g in self.groups:
            if g.src_callable in seen:
                raise ConfigError(f"duplicate source callable {g.src_callable!r}")
            seen.add(g.src_callable)

    def group_for(self, src_callable: str) -> GroupEntry | None:
        for g in self.groups:
            if g.src_callable == src_callable:
                return g
        return None

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "src_framework": self.src_framework,
            "tgt_framework": self.tgt_framework,
            "tau": self.tau,
            "groups": [
                {
                    "src_callable": g.src_callable,
                    "tgt_callable": g.tgt_callable,
                    "score": g.score,
                    "params": [
                        {"src": p.src, "tgt": p.tgt, "score": p.score}
                        for p in g.params
                    ],
                    "expansions": [
                        {
                            "src_param": e.src_param,
                            "new_call": e.new_call,
                            "score": e.score,
                        }
                        for e in g.expansions
                    ],
                }
                for g in self.groups
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "KeywordDictionary":
        groups = tuple(
            GroupEntry(
                src_callable=g["src_callable"],
                tgt_callable=g["tgt_callable"],
                score=float(g["score"]),
                params=tuple(
                    ParamEntry(src=p["src"], tgt=p["tgt"], score=float(p["score"]))
                    for p in g.get("params", [])
                ),
                expansions=tuple(
                    Expansion(
                        src_param=e["src_param"],
                        new_call=e["new_call"],
                        score=float(e["score"]),
                    )
                    for e in g.get("expansions", [])
                ),
            )
            for g in doc["groups"]
        )
        return cls(
            src_framework=doc["src_framework"],
            tgt_framework=doc["tgt_framework"],
            tau=float(doc["tau"]),
            groups=groups,
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "KeywordDictionary":
        return cls.from_dict(json.loads(Path(path).read_text()))


def generate_dictionary(
    E1: np.ndarray,
    E2: np.ndarray,
    vocab1: Sequence[ApiKeyword],
    vocab2: Sequence[ApiKeyword],
    db1: SignatureDatabase,
    db2: SignatureDatabase,
    measure: str = COSINE,
    tau: float = 5.0,
    drop_floor: float = -math.inf,
    csls_k: int | None = None,
) -> KeywordDictionary:
    """Two-step hierarchical generation from embedding matrices.

    E1/E2 have one column per vocab keyword, indexed by keyword id.
    """
    if E1.shape[1] != len(vocab1) or E2.shape[1] != len(vocab2):
        raise DimensionMismatch(
            f"embedding columns {E1.shape[1]}/{E2.shape[1]} != vocab sizes "
            f"{len(vocab1)}/{len(vocab2)}"
        )
    groups1 = build_groups(db1, vocab1)
    groups2 = build_groups(db2, vocab2)
    if not groups1 or not groups2:
        raise EmptyVocabularyError("both sides need at least one callable group")
    s = score_matrix(E1, E2, measure)
    if csls_k is not None:
        s = csls_rescale(s, csls_k)
    values = s.values
    tgt_callable_ids = [g.callable_kw.id for g in groups2]
    tgt_callable_text = {g.callable_kw.id: g.callable_kw.text for g in groups2}

    entries: list[GroupEntry] = []
    for g1 in groups1:
        best_g2 = None
        best_sim = -math.inf
        for g2 in groups2:
            sim = group_similarity(g1, g2, s)
            if sim > best_sim or (
                sim == best_sim
                and best_g2 is not None
                and g2.callable_kw.text < best_g2.callable_kw.text
            ):
                best_sim = sim
                best_g2 = g2
        assert best_g2 is not None

        # expansions take precedence over in-group parameter matching
        expansions: list[Expansion] = []
        matchable: list[ApiKeyword] = []
        for p in g1.parameters:
            call_scores = values[p.id, tgt_callable_ids]
            j = int(np.argmax(call_scores))
            if float(call_scores[j]) > tau:
                expansions.append(
                    Expansion(
                        src_param=p.text,
                        new_call=f"{tgt_callable_text[tgt_callable_ids[j]]}()",
                        score=float(call_scores[j]),
                    )
                )
            else:
                matchable.append(p)

        # one-to-one greedy by descending score; leftovers are dropped
        candidates = sorted(
            (
                (-float(values[p.id, q.id]), pi, qi)
                for pi, p in enumerate(matchable)
                for qi, q in enumerate(best_g2.parameters)
            ),
        )
        assigned: dict[int, tuple[str, float]] = {}
        used_tgt: set[int] = set()
        for neg_score, pi, qi in candidates:
            if pi in assigned or qi in used_tgt:
                continue
            score = -neg_score
            if score <= drop_floor:
                continue
            assigned[pi] = (best_g2.parameters[qi].text, score)
            used_tgt.add(qi)
        params = tuple(
            ParamEntry(
                src=p.text,
                tgt=assigned[pi][0] if pi in assigned else None,
                score=assigned[pi][1] if pi in assigned else 0.0,
            )
            for pi, p in enumerate(matchable)
        )
        entries.append(
            GroupEntry(
                src_callable=g1.callable_kw.text,
                tgt_callable=best_g2.callable_kw.text,
                score=best_sim,
                params=params,
                expansions=tuple(expansions),
            )
        )
    return KeywordDictionary(
        src_framework=db1.framework,
        tgt_framework=db2.framework,
        tau=tau,
        groups=tuple(entries),
    )


@dataclass(frozen=True)
class Translation:
    """What the pipeline should do with one keyword occurrence."""

    kind: str  # rename | drop | expand
    new_name: str | None = None
    new_call: str | None = None
    score: float = 0.0


def lookup(
    dictionary: KeywordDictionary,
    kw: ApiKeyword,
    owner: str | None = None,
) -> Translation:
    """Resolve a keyword; parameters resolve inside their owner's group."""
    if kw.kind == CALLABLE:
        g = dictionary.group_for(kw.text)
        if g is None:
            raise UnmappedKeyword(f"callable {kw.text!r} not in dictionary")
        return Translation(kind=RENAME, new_name=g.tgt_callable, score=g.score)
    owner_name = owner if owner is not None else kw.owner
    if not owner_name:
        raise UnmappedKeyword(f"parameter {kw.text!r} has no owner context")
    g = dictionary.group_for(owner_name)
    if g is None:
        raise UnmappedKeyword(f"no group for owner {owner_name!r}")
    for e in g.expansions:
        if e.src_param == kw.text:
            return Translation(kind=EXPAND, new_call=e.new_call, score=e.score)
    for p in g.params:
        if p.src == kw.text:
            if p.tgt is None:
                return Translation(kind=DROP, score=p.score)
            return Translation(kind=RENAME, new_name=p.tgt, score=p.score)
    raise UnmappedKeyword(f"parameter {kw.text!r} not in group {owner_name!r}")


def dictionary_pairs(
    dictionary: KeywordDictionary,
) -> list[tuple[tuple[str, str, str | None], tuple[str, str, str | None]]]:
    """All (kind, text, owner) rename pairs, callables then parameters."""
    pairs = []
    for g in dictionary.groups:
        pairs.append(
            ((CALLABLE, g.src_callable, None), (CALLABLE, g.tgt_callable, None))
        )
        for p in g.params:
            if p.tgt is not None:
                pairs.append(
                    (
                        (PARAMETER, p.src, g.src_callable),
                        (PARAMETER, p.tgt, g.tgt_callable),
                    )
                )
    return pairs


def vocab_index(
    vocab: Sequence[ApiKeyword],
) -> Mapping[tuple[str, str, str | None], int]:
    """Map (kind, text, owner) to embedding column id."""
    return {(kw.kind, kw.text, kw.owner): kw.id for kw in vocab}

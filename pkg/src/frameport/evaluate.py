"""Scoring: F1 over call bags, exact match, dictionary ranking metrics,
and the multi-seed evaluation harness.

Calls compare textually after canonicalization; there is no semantic
equivalence (``2*2`` never matches ``4``). Ranking metrics restrict
candidates to the keyword's own kind and charge ties at the worst rank.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from frameport.canon import (
    ApiKeyword,
    SignatureDatabase,
    SourceUnit,
    canonicalize,
)
from frameport.dictionary import ScoreMatrix
from frameport.errors import ConfigError, FrameportError, ParseError

import ast


@dataclass(frozen=True)
class EvalExample:
    id: str
    src_framework: str
    tgt_framework: str
    source: str
    gold: str
    gold_keyword_pairs: tuple[tuple[tuple[str, str, str | None], tuple[str, str, str | None]], ...] = ()


def load_eval_set(path: str | Path) -> list[EvalExample]:
    """Parse the JSONL eval-set format."""
    examples = []
    for ln, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{ln}: bad JSON: {exc}") from None
        pairs = tuple(
            (
                (s[0], s[1], s[2] if len(s) > 2 else None),
                (t[0], t[1], t[2] if len(t) > 2 else None),
            )
            for s, t in rec.get("gold_keyword_pairs", [])
        )
        examples.append(
            EvalExample(
                id=str(rec["id"]),
                src_framework=rec["src_framework"],
                tgt_framework=rec["tgt_framework"],
                source=rec["source"],
                gold=rec["gold"],
                gold_keyword_pairs=pairs,
            )
        )
    return examples


# -- call bags ---------------------------------------------------------------

Fingerprint = tuple[str, tuple[str, ...], tuple[tuple[str, str], ...]]


def call_bag(unit: SourceUnit, db: SignatureDatabase) -> Counter:
    """Multiset of call fingerprints after canonicalization.

    A fingerprint is (callee text, positional value texts, sorted keyword
    (name, value text) pairs), so pre-canonical argument order never
    matters.
    """
    canon_unit = canonicalize(unit, db)
    tree = ast.parse(canon_unit.text)
    bag: Counter = Counter()
    for node in ast.walk(tree):
        if isinstance(node, ast.Call):
            fp: Fingerprint = (
                ast.unparse(node.func),
                tuple(ast.unparse(a) for a in node.args),
                tuple(
                    sorted(
                        (kw.arg or "**", ast.unparse(kw.value))
                        for kw in node.keywords
                    )
                ),
            )
            bag[fp] += 1
    return bag


def f1(pred: SourceUnit, gold: SourceUnit, db: SignatureDatabase) -> float:
    """2*n_match / (n_pred + n_truth) over call bags; 1.0 if both empty.

    An unparseable prediction scores 0.
    """
    gold_bag = call_bag(gold, db)
    try:
        pred_bag = call_bag(pred, db)
    except ParseError:
        return 0.0
    n_pred = sum(pred_bag.values())
    n_truth = sum(gold_bag.values())
    if n_pred + n_truth == 0:
        return 1.0
    n_match = sum((pred_bag & gold_bag).values())
    return 2.0 * n_match / (n_pred + n_truth)


def exact_match(pred: SourceUnit, gold: SourceUnit, db: SignatureDatabase) -> bool:
    """Byte equality after canonicalizing both sides."""
    try:
        canon_pred = canonicalize(pred, db)
    except ParseError:
        return False
    canon_gold = canonicalize(gold, db)
    return canon_pred.text == canon_gold.text


# -- dictionary ranking metrics ----------------------------------------------


def _values(s: ScoreMatrix | np.ndarray) -> np.ndarray:
    return s.values if isinstance(s, ScoreMatrix) else np.asarray(s)


KeyTriple = tuple[str, str, str | None]


def _rank(
    values: np.ndarray,
    src_id: int,
    gold_id: int,
    candidate_ids: Sequence[int],
) -> float:
    """Gold-pessimal rank of the gold candidate: ties count against it.

    Infinite when the gold target is not a candidate at all.
    """
    if gold_id not in candidate_ids:
        return float("inf")
    gold_score = values[src_id, gold_id]
    rank = 0
    for c in candidate_ids:
        if values[src_id, c] >= gold_score:
            rank += 1
    return rank


def _resolve_pairs(
    gold_pairs: Sequence[tuple[KeyTriple, KeyTriple]],
    vocab1: Sequence[ApiKeyword],
    vocab2: Sequence[ApiKeyword],
) -> list[tuple[int, int, str]]:
    idx1 = {(kw.kind, kw.text, kw.owner): kw.id for kw in vocab1}
    idx2 = {(kw.kind, kw.text, kw.owner): kw.id for kw in vocab2}
    resolved = []
    for src_key, tgt_key in gold_pairs:
        i = idx1.get(tuple(src_key))
        j = idx2.get(tuple(tgt_key))
        resolved.append((-1 if i is None else i, -1 if j is None else j, src_key[0]))
    return resolved


def precision_at_k(
    scores: ScoreMatrix | np.ndarray,
    gold_pairs: Sequence[tuple[KeyTriple, KeyTriple]],
    vocab1: Sequence[ApiKeyword],
    vocab2: Sequence[ApiKeyword],
    k: int,
) -> float:
    """Fraction of gold sources whose target ranks in the top k among
    same-kind candidates. Pairs missing from either vocab count as misses.
    """
    if k < 1:
        raise ConfigError("k must be >= 1")
    if not gold_pairs:
        raise ConfigError("no gold pairs to score")
    values = _values(scores)
    kind_cols = {
        kind: [kw.id for kw in vocab2 if kw.kind == kind]
        for kind in {kw.kind for kw in vocab2}
    }
    hits = 0
    for i, j, kind in _resolve_pairs(gold_pairs, vocab1, vocab2):
        if i < 0 or j < 0:
            continue
        if _rank(values, i, j, kind_cols.get(kind, [])) <= k:
            hits += 1
    return hits / len(gold_pairs)


def mrr(
    scores: ScoreMatrix | np.ndarray,
    gold_pairs: Sequence[tuple[KeyTriple, KeyTriple]],
    vocab1: Sequence[ApiKeyword],
    vocab2: Sequence[ApiKeyword],
) -> float:
    """Mean reciprocal gold-pessimal rank; missing pairs contribute 0."""
    if not gold_pairs:
        raise ConfigError("no gold pairs to score")
    values = _values(scores)
    kind_cols = {
        kind: [kw.id for kw in vocab2 if kw.kind == kind]
        for kind in {kw.kind for kw in vocab2}
    }
    total = 0.0
    for i, j, kind in _resolve_pairs(gold_pairs, vocab1, vocab2):
        if i < 0 or j < 0:
            continue
        total += 1.0 / _rank(values, i, j, kind_cols.get(kind, []))
    return total / len(gold_pairs)


# -- evaluation harness ------------------------------------------------------


@dataclass
class EvalReport:
    seeds: list[dict] = field(default_factory=list)
    mean: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"version": 1, "seeds": self.seeds, "mean": self.mean}

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"
        )


def run_suite(
    transpile_fn: Callable[[EvalExample, int], str],
    examples: Sequence[EvalExample],
    dbs: Mapping[str, SignatureDatabase],
    seeds: Sequence[int] = (10, 20, 30, 40, 50),
    artifacts_dir: str | Path | None = None,
) -> EvalReport:
    """Score every example under every seed.

    A pipeline failure (placeholder mismatch, backend error, unparseable
    output) scores that example F1=0, EM=false instead of aborting. With
    ``artifacts_dir`` set, the first seed's predictions are written as
    ``{id}/pred.py`` next to a ``gold_test.py`` reference for an external
    execution harness.
    """
    report = EvalReport()
    if not examples:
        report.mean = {"f1": None, "em": None, "examples": 0}
        return report
    first_preds: dict[str, str] = {}
    for seed in seeds:
        rows = []
        for ex in examples:
            tgt_db = dbs[ex.tgt_framework]
            gold_unit = SourceUnit(
                text=ex.gold, framework=ex.tgt_framework, origin=f"{ex.id}:gold"
            )
            error: str | None = None
            try:
                pred_text = transpile_fn(ex, seed)
            except FrameportError as exc:
                pred_text = ""
                error = f"{type(exc).__name__}: {exc}"
            if seed == seeds[0]:
                first_preds[ex.id] = pred_text
            pred_unit = SourceUnit(
                text=pred_text, framework=ex.tgt_framework, origin=f"{ex.id}:pred"
            )
            if error is None:
                row_f1 = f1(pred_unit, gold_unit, tgt_db)
                row_em = exact_match(pred_unit, gold_unit, tgt_db)
            else:
                row_f1, row_em = 0.0, False
            rows.append(
                {"id": ex.id, "f1": row_f1, "em": bool(row_em), "error": error}
            )
        report.seeds.append(
            {
                "seed": seed,
                "examples": rows,
                "f1": sum(r["f1"] for r in rows) / len(rows),
                "em": sum(1 for r in rows if r["em"]) / len(rows),
            }
        )
    report.mean = {
        "f1": sum(s["f1"] for s in report.seeds) / len(report.seeds),
        "em": sum(s["em"] for s in report.seeds) / len(report.seeds),
        "examples": len(examples),
    }
    if artifacts_dir is not None:
        base = Path(artifacts_dir)
        for ex in examples:
            exdir = base / ex.id
            exdir.mkdir(parents=True, exist_ok=True)
            (exdir / "pred.py").write_text(first_preds.get(ex.id, "") + "\n")
            (exdir / "gold_test.py").write_text(
                f"# reference output for example {ex.id}; compare against pred.py\n"
                + ex.gold
                + "\n"
            )
    return report

"""Command-line interface tying the toolchain together.

Subcommands cover the full workflow: ``ingest`` builds a corpus from
file trees, ``train`` aligns keyword embeddings adversarially, ``dict``
induces a keyword dictionary from a checkpoint, ``transpile`` runs the
five-stage translation on a file or stdin, ``eval`` scores an example
suite, and ``inspect`` examines vocabularies, neighbor rankings, and
dictionary diffs.

Exit codes: 0 success, 2 usage or configuration error, 3 pipeline
failure, 4 completion-backend failure.
"""

from __future__ import annotations

import argparse
import json
import signal
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .bpe import bpe_train
from .canon import CALLABLE, PARAMETER, ApiKeyword, SignatureDatabase, SourceUnit
from .corpus import (
    DEFAULT_INCLUDE,
    DEFAULT_MARKERS,
    DEFAULT_SIZE_CAP,
    extract_occurrences,
    ingest,
    load_corpus,
    save_corpus,
    vocab_keywords,
)
from .dictionary import (
    COSINE,
    DOT,
    KeywordDictionary,
    generate_dictionary,
    score_matrix,
    csls_rescale,
    vocab_index,
)
from .embeddings import (
    CONTEXT_WINDOW,
    DETERMINISTIC_HASH,
    FILE_BACKED,
    embed_batch,
    make_provider,
)
from .errors import (
    BackendUnavailable,
    ConfigError,
    EmptyVocabularyError,
    FrameportError,
    KOutOfRange,
    StopMarkerMissing,
)
from .evaluate import load_eval_set, run_suite
from .llm import BackendConfig, load_template
from .pipeline import (
    FRAMEWORKS,
    default_database,
    default_dictionary,
    default_template,
    transpile_unit,
)
from .train import (
    BATCH_GRID,
    DEFAULT_TOTAL_SAMPLES,
    LR_GRID,
    Optimizers,
    TrainConfig,
    avg_cosine_similarity,
    grid_search,
    load_checkpoint,
    save_checkpoint,
    train,
)


def _emit(args: argparse.Namespace, payload: dict, lines: Sequence[str]) -> None:
    """Print either a JSON document or plain text lines."""
    if getattr(args, "format", "text") == "json":
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        for line in lines:
            print(line)


def _load_databases(frameworks: Sequence[str]) -> dict[str, SignatureDatabase]:
    return {fw: default_database(fw) for fw in frameworks}


# -- ingest ------------------------------------------------------------------


def cmd_ingest(args: argparse.Namespace) -> int:
    dbs = _load_databases(args.frameworks)
    result = ingest(
        args.roots,
        dbs,
        include=args.include,
        exclude=args.exclude,
        markers=args.markers,
        size_cap=args.size_cap,
    )
    if not args.dry_run:
        save_corpus(args.out, result)
    counts = {fw: len(units) for fw, units in sorted(result.units.items())}
    vocab_sizes = {
        fw: len(st.vocabulary)
        for fw, st in sorted(result.manifest.frameworks.items())
    }
    payload = {
        "units": counts,
        "vocabulary": vocab_sizes,
        "skipped": len(result.skipped),
        "written": not args.dry_run,
    }
    lines = [
        f"{fw}: {n} units, {vocab_sizes[fw]} vocabulary keywords"
        for fw, n in counts.items()
    ]
    lines.append(f"skipped {len(result.skipped)} files")
    if args.dry_run:
        lines.append("dry run: nothing written")
    else:
        lines.append(f"corpus written to {args.out}")
    _emit(args, payload, lines)
    return 0


# -- train -------------------------------------------------------------------


def _build_provider(args: argparse.Namespace, texts: Sequence[str]):
    spec = args.provider
    if spec.startswith("file:"):
        return make_provider(FILE_BACKED, path=spec[len("file:") :])
    if spec == "hash":
        return make_provider(DETERMINISTIC_HASH, dim=args.provider_dim)
    if spec == "context-window":
        vocab = bpe_train(texts, num_merges=args.bpe_merges)
        return make_provider(
            CONTEXT_WINDOW,
            dim=args.provider_dim,
            vocab=vocab,
            texts=texts,
            seed=args.seed,
        )
    raise ConfigError(
        f"unknown provider {spec!r}; expected hash, context-window, or file:PATH"
    )


def _framework_arrays(occs, vocab, provider) -> tuple[np.ndarray, np.ndarray]:
    """Stack occurrence embeddings and vocabulary-id labels for one side."""
    index = vocab_index(vocab)
    kept, labels = [], []
    for occ in occs:
        kw = occ.keyword
        kid = index.get((kw.kind, kw.text, kw.owner))
        if kid is None:
            continue
        kept.append(occ)
        labels.append(kid)
    if not kept:
        raise EmptyVocabularyError("no keyword occurrences to train on")
    embs = embed_batch(provider, kept)
    H = np.stack([e.vector for e in embs]).astype(np.float32)
    y = np.asarray(labels, dtype=np.int64)
    return H, y


def _train_inputs(args: argparse.Namespace):
    corpus = load_corpus(args.corpus)
    src, tgt = args.src_framework, args.tgt_framework
    for fw in (src, tgt):
        if fw not in corpus.manifest.frameworks:
            raise ConfigError(f"corpus has no framework {fw!r}")
    db1, db2 = default_database(src), default_database(tgt)
    vocab1 = vocab_keywords(corpus.manifest.frameworks[src].vocabulary)
    vocab2 = vocab_keywords(corpus.manifest.frameworks[tgt].vocabulary)
    occs1 = extract_occurrences(corpus.units[src], db1, src)
    occs2 = extract_occurrences(corpus.units[tgt], db2, tgt)
    texts = [u.text for u in corpus.units[src]] + [u.text for u in corpus.units[tgt]]
    provider = _build_provider(args, texts)
    H1, y1 = _framework_arrays(occs1, vocab1, provider)
    H2, y2 = _framework_arrays(occs2, vocab2, provider)
    return (H1, y1, H2, y2), (vocab1, vocab2), (db1, db2)


def _make_selector(vocab1, vocab2, db1, db2, tau: float):
    def selector(model) -> float:
        E1, E2 = model.output_embeddings
        induced = generate_dictionary(
            E1, E2, vocab1, vocab2, db1, db2, measure=COSINE, tau=tau
        )
        return avg_cosine_similarity(model, induced, vocab1, vocab2)

    return selector


def cmd_train(args: argparse.Namespace) -> int:
    arrays, vocabs, dbs = _train_inputs(args)
    H1, y1, H2, y2 = arrays
    vocab1, vocab2 = vocabs
    db1, db2 = dbs
    sizes = (len(vocab1), len(vocab2))
    selector = _make_selector(vocab1, vocab2, db1, db2, args.tau)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    metrics_path = out / "metrics.jsonl"

    if args.resume and args.grid:
        raise ConfigError("--resume cannot be combined with --grid")

    if args.grid:
        cells_seen: list[dict] = []
        with open(metrics_path, "w") as fh:

            def on_cell(cell) -> None:
                rec = {
                    "peak_lr": cell.peak_lr,
                    "batch_size": cell.batch_size,
                    "avg_cos_sim": cell.score,
                }
                cells_seen.append(rec)
                fh.write(json.dumps(rec) + "\n")

            base = TrainConfig(
                d=args.d,
                total_samples=(
                    args.total_samples
                    if args.total_samples is not None
                    else DEFAULT_TOTAL_SAMPLES
                ),
                seed=args.seed,
                checkpoint_every=args.checkpoint_every,
            )
            result = grid_search(
                H1,
                y1,
                H2,
                y2,
                base,
                selector,
                lrs=args.lrs,
                batch_sizes=args.batch_sizes,
                on_cell=on_cell,
                vocab_sizes=sizes,
            )
        ckpt = out / "checkpoint.json"
        save_checkpoint(
            ckpt,
            result.best_model,
            Optimizers.init(result.best_model),
            result.best_cfg.total_steps,
            result.best_cfg,
        )
        (out / "grid.json").write_text(
            json.dumps(
                {
                    "cells": cells_seen,
                    "best": {
                        "peak_lr": result.best_cfg.peak_lr,
                        "batch_size": result.best_cfg.batch_size,
                        "avg_cos_sim": result.best_score,
                    },
                },
                indent=2,
            )
            + "\n"
        )
        payload = {
            "mode": "grid",
            "best_peak_lr": result.best_cfg.peak_lr,
            "best_batch_size": result.best_cfg.batch_size,
            "avg_cos_sim": result.best_score,
            "checkpoint": str(ckpt),
        }
        lines = [
            f"grid best: lr={result.best_cfg.peak_lr} "
            f"batch={result.best_cfg.batch_size} "
            f"avg_cos_sim={result.best_score:.4f}",
            f"checkpoint written to {ckpt}",
        ]
        _emit(args, payload, lines)
        return 0

    resume_state = None
    if args.resume:
        resume_state = load_checkpoint(args.resume)
        cfg = resume_state.cfg
        if args.total_samples is not None:
            cfg = replace(cfg, total_samples=args.total_samples)
    else:
        cfg = TrainConfig(
            d=args.d,
            peak_lr=args.peak_lr,
            batch_size=args.batch_size,
            total_samples=(
                args.total_samples
                if args.total_samples is not None
                else DEFAULT_TOTAL_SAMPLES
            ),
            seed=args.seed,
            checkpoint_every=args.checkpoint_every,
        )

    interrupted = {"flag": False}

    def _on_sigint(signum, frame) -> None:
        interrupted["flag"] = True

    previous = signal.signal(signal.SIGINT, _on_sigint)
    mode = "a" if args.resume else "w"
    try:
        with open(metrics_path, mode) as fh:

            def on_record(rec: dict) -> None:
                fh.write(json.dumps(rec) + "\n")

            result = train(
                H1,
                y1,
                H2,
                y2,
                cfg,
                selector=selector,
                on_record=on_record,
                resume=resume_state,
                vocab_sizes=sizes,
                stop=lambda: interrupted["flag"],
            )
    finally:
        signal.signal(signal.SIGINT, previous)

    ckpt = out / "checkpoint.json"
    save_checkpoint(
        ckpt,
        result.model,
        result.opt,
        result.step,
        cfg,
        result.sampler_state,
        result.dropout_state,
    )
    best_ckpt = out / "checkpoint_best.json"
    save_checkpoint(
        best_ckpt,
        result.best_model,
        Optimizers.init(result.best_model),
        result.step,
        cfg,
    )
    if interrupted["flag"]:
        print(f"interrupted: checkpoint saved at step {result.step}", file=sys.stderr)
    payload = {
        "mode": "train",
        "steps": result.step,
        "avg_cos_sim": result.best_score,
        "checkpoint": str(ckpt),
        "best_checkpoint": str(best_ckpt),
        "interrupted": interrupted["flag"],
    }
    lines = [
        f"trained to step {result.step}, best avg_cos_sim={result.best_score:.4f}",
        f"checkpoint written to {ckpt}",
    ]
    _emit(args, payload, lines)
    return 0


# -- dict --------------------------------------------------------------------


def _measure_args(args: argparse.Namespace) -> tuple[str, int | None]:
    if args.measure == "csls":
        return DOT, args.k if args.k is not None else 10
    if args.k is not None:
        raise ConfigError("--k only applies to --measure csls")
    return args.measure, None


def cmd_dict(args: argparse.Namespace) -> int:
    state = load_checkpoint(args.checkpoint)
    corpus = load_corpus(args.corpus)
    src, tgt = args.src_framework, args.tgt_framework
    for fw in (src, tgt):
        if fw not in corpus.manifest.frameworks:
            raise ConfigError(f"corpus has no framework {fw!r}")
    vocab1 = vocab_keywords(corpus.manifest.frameworks[src].vocabulary)
    vocab2 = vocab_keywords(corpus.manifest.frameworks[tgt].vocabulary)
    db1, db2 = default_database(src), default_database(tgt)
    E1, E2 = state.model.output_embeddings
    measure, csls_k = _measure_args(args)
    dictionary = generate_dictionary(
        E1,
        E2,
        vocab1,
        vocab2,
        db1,
        db2,
        measure=measure,
        tau=args.tau,
        drop_floor=args.drop_floor,
        csls_k=csls_k,
    )
    dictionary = KeywordDictionary(
        src_framework=src,
        tgt_framework=tgt,
        tau=dictionary.tau,
        groups=dictionary.groups,
    )
    dictionary.save(args.out)
    n_params = sum(len(g.params) for g in dictionary.groups)
    n_exp = sum(len(g.expansions) for g in dictionary.groups)
    payload = {
        "groups": len(dictionary.groups),
        "params": n_params,
        "expansions": n_exp,
        "out": str(args.out),
    }
    lines = [
        f"{len(dictionary.groups)} groups, {n_params} parameter entries, "
        f"{n_exp} expansions",
        f"dictionary written to {args.out}",
    ]
    _emit(args, payload, lines)
    return 0


# -- transpile ----------------------------------------------------------------


def _read_input(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read input {path}: {exc}") from None


def _write_output(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
        if text and not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        Path(path).write_text(text + ("\n" if text and not text.endswith("\n") else ""))


def cmd_transpile(args: argparse.Namespace) -> int:
    src, tgt = args.src_framework, args.tgt_framework
    src_db, tgt_db = default_database(src), default_database(tgt)
    if args.dictionary:
        dictionary = KeywordDictionary.load(args.dictionary)
    else:
        dictionary = default_dictionary(src, tgt)
    if args.template is None:
        template = default_template(src, tgt)
    else:
        template = load_template(args.template, src, tgt)
    backend_cfg = BackendConfig.load(args.backend) if args.backend else BackendConfig()
    text = _read_input(args.input)
    unit = SourceUnit(text=text, framework=src, origin=args.input)
    result = transpile_unit(
        unit, src_db, tgt_db, dictionary, template, backend_cfg, strict=args.strict
    )
    for warning in result.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    if args.format == "json":
        print(
            json.dumps(
                {
                    "output": result.output.text,
                    "skeleton": result.skeleton.text,
                    "warnings": list(result.warnings),
                },
                indent=2,
                sort_keys=True,
            )
        )
    else:
        _write_output(args.output, result.output.text)
    return 0


# -- eval ----------------------------------------------------------------------


def cmd_eval(args: argparse.Namespace) -> int:
    examples = load_eval_set(args.eval_set)
    frameworks = sorted(
        {ex.src_framework for ex in examples} | {ex.tgt_framework for ex in examples}
    )
    dbs = _load_databases(frameworks or list(FRAMEWORKS))
    backend_cfg = BackendConfig.load(args.backend) if args.backend else BackendConfig()

    cache: dict[tuple[str, str], tuple] = {}

    def _pair(src: str, tgt: str):
        if (src, tgt) not in cache:
            if args.dictionary_dir:
                path = Path(args.dictionary_dir) / f"dict_{src}_{tgt}.json"
                dictionary = KeywordDictionary.load(path)
            else:
                dictionary = default_dictionary(src, tgt)
            cache[(src, tgt)] = (dictionary, default_template(src, tgt))
        return cache[(src, tgt)]

    def transpile_fn(ex, seed: int) -> str:
        dictionary, template = _pair(ex.src_framework, ex.tgt_framework)
        unit = SourceUnit(text=ex.source, framework=ex.src_framework, origin=ex.id)
        result = transpile_unit(
            unit,
            dbs[ex.src_framework],
            dbs[ex.tgt_framework],
            dictionary,
            template,
            backend_cfg,
        )
        return result.output.text

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = run_suite(
        transpile_fn,
        examples,
        dbs,
        seeds=args.seeds,
        artifacts_dir=out / "artifacts",
    )
    report_path = out / "report.json"
    report.save(report_path)
    payload = report.to_dict()
    payload["report"] = str(report_path)
    mean = report.mean
    lines = [
        f"{len(examples)} examples x {len(args.seeds)} seeds",
        f"mean f1={mean['f1']} em={mean['em']}",
        f"report written to {report_path}",
    ]
    _emit(args, payload, lines)
    return 0


# -- inspect -------------------------------------------------------------------


def _find_keyword(
    vocab: Sequence[ApiKeyword], kind: str, text: str, owner: str | None
) -> ApiKeyword:
    for kw in vocab:
        if kw.kind == kind and kw.text == text and kw.owner == owner:
            return kw
    where = f" of {owner}" if owner else ""
    raise ConfigError(f"{kind} {text!r}{where} is not in the vocabulary")


def cmd_inspect_vocab(args: argparse.Namespace) -> int:
    corpus = load_corpus(args.corpus)
    if args.framework not in corpus.manifest.frameworks:
        raise ConfigError(f"corpus has no framework {args.framework!r}")
    entries = corpus.manifest.frameworks[args.framework].vocabulary
    if args.kind:
        entries = [e for e in entries if e.keyword.kind == args.kind]
    entries = entries[: args.limit] if args.limit else entries
    payload = {
        "framework": args.framework,
        "entries": [
            {
                "id": e.keyword.id,
                "kind": e.keyword.kind,
                "text": e.keyword.text,
                "owner": e.keyword.owner,
                "count": e.count,
            }
            for e in entries
        ],
    }
    lines = [
        f"{e.keyword.id:>4}  {e.count:>6}  {e.keyword.kind:<9} "
        + (f"{e.keyword.owner}." if e.keyword.owner else "")
        + e.keyword.text
        for e in entries
    ]
    _emit(args, payload, lines)
    return 0


def cmd_inspect_neighbors(args: argparse.Namespace) -> int:
    state = load_checkpoint(args.checkpoint)
    corpus = load_corpus(args.corpus)
    src, tgt = args.src_framework, args.tgt_framework
    for fw in (src, tgt):
        if fw not in corpus.manifest.frameworks:
            raise ConfigError(f"corpus has no framework {fw!r}")
    vocab1 = vocab_keywords(corpus.manifest.frameworks[src].vocabulary)
    vocab2 = vocab_keywords(corpus.manifest.frameworks[tgt].vocabulary)
    kw = _find_keyword(vocab1, args.kind, args.keyword, args.owner)
    E1, E2 = state.model.output_embeddings
    measure, csls_k = _measure_args(args)
    s = score_matrix(E1, E2, measure)
    if csls_k is not None:
        s = csls_rescale(s, csls_k)
    candidates = [c for c in vocab2 if c.kind == kw.kind]
    row = s.values[kw.id]
    ranked = sorted(candidates, key=lambda c: (-row[c.id], c.id))[: args.top]
    payload = {
        "keyword": {"kind": kw.kind, "text": kw.text, "owner": kw.owner},
        "measure": s.measure,
        "neighbors": [
            {
                "kind": c.kind,
                "text": c.text,
                "owner": c.owner,
                "score": float(row[c.id]),
            }
            for c in ranked
        ],
    }
    lines = [
        f"{float(row[c.id]):>10.4f}  "
        + (f"{c.owner}." if c.owner else "")
        + c.text
        for c in ranked
    ]
    _emit(args, payload, lines)
    return 0


def _group_shape(g) -> tuple:
    return (
        g.tgt_callable,
        tuple((p.src, p.tgt) for p in g.params),
        tuple((e.src_param, e.new_call) for e in g.expansions),
    )


def cmd_inspect_diff(args: argparse.Namespace) -> int:
    old = KeywordDictionary.load(args.old)
    new = KeywordDictionary.load(args.new)
    old_groups = {g.src_callable: g for g in old.groups}
    new_groups = {g.src_callable: g for g in new.groups}
    changes: list[dict] = []
    for name in sorted(old_groups.keys() | new_groups.keys()):
        a, b = old_groups.get(name), new_groups.get(name)
        if a is None:
            changes.append({"src_callable": name, "change": "added"})
        elif b is None:
            changes.append({"src_callable": name, "change": "removed"})
        elif _group_shape(a) != _group_shape(b):
            changes.append(
                {
                    "src_callable": name,
                    "change": "changed",
                    "old_tgt": a.tgt_callable,
                    "new_tgt": b.tgt_callable,
                }
            )
    payload = {"changes": changes}
    lines = [
        f"{c['change']:<8} {c['src_callable']}"
        + (
            f" ({c['old_tgt']} -> {c['new_tgt']})"
            if c["change"] == "changed"
            else ""
        )
        for c in changes
    ]
    _emit(args, payload, lines)
    return 0


# -- parser ---------------------------------------------------------------------


def _csv_ints(raw: str) -> list[int]:
    try:
        return [int(part) for part in raw.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated int list: {raw!r}")


def _csv_floats(raw: str) -> list[float]:
    try:
        return [float(part) for part in raw.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated float list: {raw!r}")


def _add_format(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--format",
        choices=("text", "json"),
        default="text",
        help="Output format for the command summary.",
    )


def _add_measure(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--measure",
        choices=("cosine", "dot", "csls"),
        default="cosine",
        help="Similarity measure; csls rescales dot scores by neighborhood.",
    )
    p.add_argument(
        "--k", type=int, default=None, help="Neighborhood size for --measure csls."
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="frameport",
        description="Source-to-source transpiler between deep-learning framework dialects.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="Scan file trees into a training corpus.")
    p.add_argument("--root", dest="roots", action="append", required=True,
                   help="Directory to scan; repeatable.")
    p.add_argument("--out", required=True, help="Corpus output directory.")
    p.add_argument("--framework", dest="frameworks", action="append",
                   choices=FRAMEWORKS, default=None,
                   help="Framework to collect; repeatable (default: all).")
    p.add_argument("--include", action="append", default=None,
                   help="Filename glob to include; repeatable (default: *.py, *.ipynb).")
    p.add_argument("--exclude", action="append", default=None,
                   help="Path glob to exclude; repeatable.")
    p.add_argument("--marker", dest="markers", action="append", default=None,
                   help="Substring a file must mention; repeatable (default: torch, keras, mxnet).")
    p.add_argument("--size-cap", type=int, default=DEFAULT_SIZE_CAP,
                   help="Skip files larger than this many bytes.")
    p.add_argument("--dry-run", action="store_true",
                   help="Report counts without writing the corpus.")
    _add_format(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="Align keyword embeddings adversarially.")
    p.add_argument("--corpus", required=True, help="Corpus directory from ingest.")
    p.add_argument("--src-framework", required=True, choices=FRAMEWORKS)
    p.add_argument("--tgt-framework", required=True, choices=FRAMEWORKS)
    p.add_argument("--out", required=True, help="Directory for checkpoints and metrics.")
    p.add_argument("--provider", default="hash",
                   help="Embedding provider: hash, context-window, or file:PATH.")
    p.add_argument("--provider-dim", type=int, default=64,
                   help="Embedding width d_b for generated providers.")
    p.add_argument("--bpe-merges", type=int, default=200,
                   help="BPE merges when training a context-window provider.")
    p.add_argument("--d", type=int, default=64, help="Aligned hidden width d.")
    p.add_argument("--peak-lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--total-samples", type=int, default=None,
                   help="Samples drawn per side over the whole run (default 1536000).")
    p.add_argument("--checkpoint-every", type=int, default=500,
                   help="Steps between model-selection checkpoints.")
    p.add_argument("--tau", type=float, default=5.0,
                   help="Expansion threshold used by the selection dictionary.")
    p.add_argument("--seed", type=int, default=10)
    p.add_argument("--grid", action="store_true",
                   help="Search the (peak_lr, batch_size) grid instead of one cell.")
    p.add_argument("--lrs", type=_csv_floats, default=list(LR_GRID),
                   help="Grid learning rates as a comma list.")
    p.add_argument("--batch-sizes", type=_csv_ints, default=list(BATCH_GRID),
                   help="Grid batch sizes as a comma list.")
    p.add_argument("--resume", default=None, help="Checkpoint file to continue from.")
    _add_format(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("dict", help="Induce a keyword dictionary from a checkpoint.")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True, help="Corpus the checkpoint was trained on.")
    p.add_argument("--src-framework", required=True, choices=FRAMEWORKS)
    p.add_argument("--tgt-framework", required=True, choices=FRAMEWORKS)
    p.add_argument("--out", required=True, help="Dictionary JSON path.")
    _add_measure(p)
    p.add_argument("--tau", type=float, default=5.0,
                   help="Parameter-to-callable expansion threshold.")
    p.add_argument("--drop-floor", type=float, default=float("-inf"),
                   help="Scores below this floor drop the parameter outright.")
    _add_format(p)
    p.set_defaults(func=cmd_dict)

    p = sub.add_parser("transpile", help="Translate one file or stdin.")
    p.add_argument("--from", dest="src_framework", required=True, choices=FRAMEWORKS)
    p.add_argument("--to", dest="tgt_framework", required=True, choices=FRAMEWORKS)
    p.add_argument("--input", default="-", help="Input file, or - for stdin.")
    p.add_argument("--output", default="-", help="Output file, or - for stdout.")
    p.add_argument("--dictionary", default=None,
                   help="Keyword dictionary JSON (default: bundled fixture).")
    p.add_argument("--template", default=None,
                   help="Prompt template file (default: bundled fixture).")
    p.add_argument("--backend", default=None,
                   help="Backend config JSON (default: offline mock).")
    p.add_argument("--strict", action="store_true",
                   help="Fail on unknown callables instead of passing them through.")
    p.add_argument("--seed", type=int, default=10,
                   help="Reserved for sampling backends; the mock is deterministic.")
    _add_format(p)
    p.set_defaults(func=cmd_transpile)

    p = sub.add_parser("eval", help="Score a transpilation example suite.")
    p.add_argument("--eval-set", required=True, help="JSONL examples file.")
    p.add_argument("--out", required=True, help="Directory for report and artifacts.")
    p.add_argument("--seeds", type=_csv_ints, default=[10, 20, 30, 40, 50],
                   help="Run seeds as a comma list.")
    p.add_argument("--dictionary-dir", default=None,
                   help="Directory of dict_<src>_<tgt>.json files (default: bundled).")
    p.add_argument("--backend", default=None,
                   help="Backend config JSON (default: offline mock).")
    _add_format(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inspect", help="Examine corpora, rankings, and dictionaries.")
    what = p.add_subparsers(dest="what", required=True)

    q = what.add_parser("vocab", help="List a framework's keyword vocabulary.")
    q.add_argument("--corpus", required=True)
    q.add_argument("--framework", required=True, choices=FRAMEWORKS)
    q.add_argument("--kind", choices=(CALLABLE, PARAMETER), default=None)
    q.add_argument("--limit", type=int, default=None)
    _add_format(q)
    q.set_defaults(func=cmd_inspect_vocab)

    q = what.add_parser("neighbors", help="Top-scoring candidates for one keyword.")
    q.add_argument("--checkpoint", required=True)
    q.add_argument("--corpus", required=True)
    q.add_argument("--src-framework", required=True, choices=FRAMEWORKS)
    q.add_argument("--tgt-framework", required=True, choices=FRAMEWORKS)
    q.add_argument("--keyword", required=True, help="Keyword text to look up.")
    q.add_argument("--kind", choices=(CALLABLE, PARAMETER), default=CALLABLE)
    q.add_argument("--owner", default=None,
                   help="Owning callable (required for parameters).")
    q.add_argument("--top", type=int, default=5)
    _add_measure(q)
    _add_format(q)
    q.set_defaults(func=cmd_inspect_neighbors)

    q = what.add_parser("diff", help="Compare the mappings of two dictionaries.")
    q.add_argument("--old", required=True)
    q.add_argument("--new", required=True)
    _add_format(q)
    q.set_defaults(func=cmd_inspect_diff)

    return parser


def _normalize(args: argparse.Namespace) -> argparse.Namespace:
    if getattr(args, "command", "") == "ingest":
        args.frameworks = args.frameworks or list(FRAMEWORKS)
        args.include = args.include or list(DEFAULT_INCLUDE)
        args.exclude = args.exclude or []
        args.markers = args.markers or list(DEFAULT_MARKERS)
    return args


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = _normalize(parser.parse_args(argv))
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return int(args.func(args))
    except KOutOfRange as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (BackendUnavailable, StopMarkerMissing) as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return 4
    except FrameportError as exc:
        print(f"pipeline error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

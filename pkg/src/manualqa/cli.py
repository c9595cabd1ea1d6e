"""Command-line entry points tying the pipeline together.

Thread-count environment variables are pinned before numpy loads so that
CLI runs are single-threaded and reproducible under a fixed seed.
"""

from __future__ import annotations

import os

for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import argparse
import json
import sys
from pathlib import Path

from . import release_import
from .corpus import corpus_stats, load_corpus, save_corpus, split_view
from .evaluation import evaluate_split
from .features import Featurizer
from .model import Model
from .retrieval import PageIndex, build_index, retrieve
from .synth import generate_synthetic
from .train import TrainConfig, fit
from .vocab import Vocabulary


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="flat key=value config file")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")


def _train_config(args) -> TrainConfig:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.config is not None:
        return TrainConfig.from_file(args.config, **overrides)
    return TrainConfig(**overrides)


def _load_model(checkpoint: Path, vocab_path: Path | None):
    vocab_path = vocab_path or checkpoint.parent / "vocab.json"
    vocab = Vocabulary.load(vocab_path)
    model, meta = Model.load_checkpoint(checkpoint, expected_vocab_hash=vocab.fingerprint())
    return model, vocab, meta


def _cmd_synth(args) -> int:
    seed = args.seed if args.seed is not None else 7
    corpus = generate_synthetic(seed, args.manuals, args.pages, args.qas)
    save_corpus(corpus, args.out)
    print(f"wrote {len(corpus.manuals)} manuals / {corpus.n_pages} pages / {corpus.n_qas} qas to {args.out}")
    return 0


def _cmd_import(args) -> int:
    corpus = release_import.import_release(args.src, dest_images=Path(args.out))
    save_corpus(corpus, args.out)
    print(f"imported {len(corpus.manuals)} manuals / {corpus.n_qas} qas into {args.out}")
    return 0


def _cmd_stats(args) -> int:
    corpus = load_corpus(args.corpus)
    report = corpus_stats(corpus)
    payload = report.to_json()
    if args.out:
        Path(args.out).write_text(payload + "\n", encoding="utf-8")
    print(payload)
    return 0


def _cmd_train(args) -> int:
    config = _train_config(args)
    if args.checkpoint_dir is not None:
        config.checkpoint_dir = str(args.checkpoint_dir)
    if args.epochs is not None:
        config.epochs = args.epochs
    if args.max_steps is not None:
        config.max_steps = args.max_steps
    if args.tasks is not None:
        flags = {t.strip() for t in args.tasks.split(",") if t.strip()}
        unknown = flags - {"pr", "pr_global", "ta", "va"}
        if unknown:
            raise ValueError(f"unknown task flags: {sorted(unknown)}")
        config.pr = "pr" in flags
        config.pr_global = "pr_global" in flags
        config.ta = "ta" in flags
        config.va = "va" in flags
        config.__post_init__()
    corpus = load_corpus(args.corpus)
    result = fit(corpus, config, verbose=not args.quiet)
    print(f"best epoch {result.best_epoch} after {result.steps} steps -> {result.checkpoint_path}")
    return 0


def _cmd_index(args) -> int:
    corpus = load_corpus(args.corpus)
    if args.split:
        corpus = split_view(corpus, args.split)
    model, vocab, _ = _load_model(args.checkpoint, args.vocab)
    index = build_index(model, Featurizer(load_corpus(args.corpus), vocab), corpus)
    index.save(args.out)
    print(f"indexed {len(index.entries)} pages -> {args.out}")
    return 0


def _cmd_retrieve(args) -> int:
    corpus = load_corpus(args.corpus)
    model, vocab, _ = _load_model(args.checkpoint, args.vocab)
    index = PageIndex.load(args.index)
    result = retrieve(
        args.question,
        model,
        Featurizer(corpus, vocab),
        index,
        args.top_k,
        scope=args.manual,
        mode=args.mode,
    )
    for hit in result.hits:
        print(f"{hit.manual_id}\tpage {hit.page_index}\t{hit.score:.4f}")
    return 0


def _cmd_answer(args) -> int:
    from . import qa as qa_mod

    corpus = load_corpus(args.corpus)
    model, vocab, _ = _load_model(args.checkpoint, args.vocab)
    featurizer = Featurizer(corpus, vocab)
    page_index = args.page
    if page_index is None:
        if args.index is None:
            raise ValueError("either --page or --index is required")
        index = PageIndex.load(args.index)
        result = retrieve(args.question, model, featurizer, index, 1, scope=args.manual)
        page_index = result.hits[0].page_index
    predicted = qa_mod.answer_multimodal(
        model, featurizer, args.question, args.manual, page_index, threshold=args.threshold
    )
    print(
        json.dumps(
            {
                "manual_id": args.manual,
                "page_index": page_index,
                "answer_text": predicted.text,
                "regions": [
                    {"region_id": rid, "probability": prob}
                    for rid, prob in predicted.regions.selected
                ],
            },
            indent=2,
            sort_keys=True,
        )
    )
    return 0


def _cmd_eval(args) -> int:
    corpus = split_view(load_corpus(args.corpus), args.split)
    model, vocab, _ = _load_model(args.checkpoint, args.vocab)
    featurizer = Featurizer(load_corpus(args.corpus), vocab)
    index = PageIndex.load(args.index) if args.index else None
    report = evaluate_split(
        model,
        featurizer,
        corpus,
        setting=args.setting,
        index=index,
        retrieval_mode=args.mode,
        threshold=args.threshold,
        top_k=args.top_k,
    )
    payload = report.to_json()
    if args.out:
        Path(args.out).write_text(payload + "\n", encoding="utf-8")
    print(payload)
    return 0


def _cmd_serve(args) -> int:
    from .service import serve

    serve(
        args.corpus,
        args.checkpoint,
        args.index,
        port=args.port,
        host=args.host,
        vocab_path=args.vocab,
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="manualqa", description="Manual page retrieval and multimodal QA pipeline"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a deterministic synthetic corpus")
    _add_common(p)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--manuals", type=int, default=5)
    p.add_argument("--pages", type=int, default=8)
    p.add_argument("--qas", type=int, default=2)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("import", help="import a released annotation tree")
    _add_common(p)
    p.add_argument("--src", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=_cmd_import)

    p = sub.add_parser("stats", help="corpus statistics report")
    _add_common(p)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("train", help="multitask training run")
    _add_common(p)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--checkpoint-dir", type=Path, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--tasks", type=str, default=None, help="comma list of pr,pr_global,ta,va")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("index", help="build the page embedding index")
    _add_common(p)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--vocab", type=Path, default=None)
    p.add_argument("--split", type=str, default=None)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=_cmd_index)

    p = sub.add_parser("retrieve", help="rank pages for a question")
    _add_common(p)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--vocab", type=Path, default=None)
    p.add_argument("--index", type=Path, required=True)
    p.add_argument("--question", type=str, required=True)
    p.add_argument("--manual", type=str, default=None)
    p.add_argument("--top-k", type=int, default=5)
    p.add_argument("--mode", choices=["token_interaction", "global"], default="token_interaction")
    p.set_defaults(func=_cmd_retrieve)

    p = sub.add_parser("answer", help="answer a question on one page")
    _add_common(p)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--vocab", type=Path, default=None)
    p.add_argument("--manual", type=str, required=True)
    p.add_argument("--page", type=int, default=None)
    p.add_argument("--index", type=Path, default=None)
    p.add_argument("--question", type=str, required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=_cmd_answer)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    _add_common(p)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--vocab", type=Path, default=None)
    p.add_argument("--setting", choices=["separate", "cascade"], required=True)
    p.add_argument("--split", type=str, default="test")
    p.add_argument("--index", type=Path, default=None)
    p.add_argument("--top-k", type=int, default=1)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--mode", choices=["token_interaction", "global"], default="token_interaction")
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("serve", help="run the HTTP inference service")
    _add_common(p)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--vocab", type=Path, default=None)
    p.add_argument("--index", type=Path, required=True)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", type=str, default="127.0.0.1")
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return 130
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

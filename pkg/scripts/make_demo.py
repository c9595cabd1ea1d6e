"""Build demo artifacts for the frontend round-trip test.

Produces, under --out: corpus/ (saved synthetic corpus), ckpt/best.ckpt +
ckpt/vocab.json (trained tiny model), pages.idx (page index over the whole
corpus), and expected.json describing one memorized question whose model
answer exactly matches gold.

Usage: python3 scripts/make_demo.py --out frontend/.demo
"""

import argparse
import json
import sys
from pathlib import Path

import os

for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(var, "1")

import manualqa as mq
from manualqa import qa as qa_mod
from manualqa.corpus import filter_single_page_qas, split_view
from manualqa.retrieval import build_index


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, required=True)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--max-steps", type=int, default=800)
    args = parser.parse_args()

    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    corpus = mq.generate_synthetic(args.seed, 3, 4, 2)
    mq.save_corpus(corpus, out / "corpus")
    corpus = mq.load_corpus(out / "corpus")

    config = mq.TrainConfig(
        epochs=10_000,
        batch_size=8,
        learning_rate=1e-3,
        tau=0.05,
        seed=args.seed,
        pr=True, ta=True, va=True,
        max_steps=args.max_steps,
        val_split="train",
        eval_every=10,
        weight_decay=0.0,
        checkpoint_dir=str(out / "ckpt"),
    )
    result = mq.fit(corpus, config)

    index = build_index(result.model, result.featurizer, corpus)
    index.save(out / "pages.idx")

    train_view = split_view(filter_single_page_qas(corpus), "train")
    chosen = None
    for manual, qa in train_view.iter_qas():
        page_index = min(qa.relevant_pages)
        predicted = qa_mod.answer_multimodal(
            result.model, result.featurizer, qa.question, manual.id, page_index
        )
        if predicted.text == qa.answer.text and predicted.region_ids() == qa.answer.region_ids:
            # the service routes /ask through retrieval: require the gold
            # page to actually be retrieved top-1 for this question
            from manualqa.retrieval import retrieve

            hit = retrieve(
                qa.question, result.model, result.featurizer, index, 1, scope=manual.id
            ).hits[0]
            if hit.page_index == page_index:
                chosen = (manual, qa, page_index, predicted)
                break
    if chosen is None:
        print("no fully memorized question found; raise --max-steps", file=sys.stderr)
        return 1

    manual, qa, page_index, predicted = chosen
    page = manual.pages[page_index]
    expected = {
        "manual_id": manual.id,
        "question": qa.question,
        "answer_text": qa.answer.text,
        "region_ids": sorted(qa.answer.region_ids),
        "boxes": {
            rid: manual.find_region(rid).box.to_list() for rid in qa.answer.region_ids
        },
        "page_index": page_index,
        "page_width": page.width,
    }
    (out / "expected.json").write_text(json.dumps(expected, indent=2, sort_keys=True))
    print(f"demo artifacts in {out}")
    print(f"memorized question: {qa.question!r} -> {qa.answer.text!r}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

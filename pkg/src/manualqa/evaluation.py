"""The two-setting evaluation protocol and its metrics.

Retrieval quality is Recall@{1,3,5} computed within each manual and then
averaged across manuals weighted by page count. Answer quality is measured
either with the gold page supplied ("separate" setting) or with the page
the retriever ranked first ("cascade" setting); both settings run the same
code path, so a perfect page picker makes cascade reproduce separate
exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

from . import metrics as text_metrics
from . import qa as qa_mod
from .corpus import Corpus, Manual, QAPair, SemanticLabel
from .features import Featurizer
from .model import Model
from .retrieval import (
    IndexError_,
    PageIndex,
    build_index,
    normalize_rows,
    score_question_against_entry,
)

ALL_TASKS = ("retrieval", "text", "regions")

#: (manual, qa) -> page index to hand to the QA heads.
PagePicker = Callable[[Manual, QAPair], int]


@dataclass(frozen=True)
class RegionScores:
    precision: float
    recall: float
    f1: float
    micro_precision: float
    micro_recall: float
    micro_f1: float

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "micro_precision": self.micro_precision,
            "micro_recall": self.micro_recall,
            "micro_f1": self.micro_f1,
        }


@dataclass(frozen=True)
class MetricReport:
    setting: str
    n_questions: int
    retrieval: Optional[dict[str, float]] = None
    text: Optional[dict[str, float]] = None
    regions: Optional[RegionScores] = None

    def to_dict(self) -> dict:
        out: dict = {"setting": self.setting, "n_questions": self.n_questions}
        if self.retrieval is not None:
            out["retrieval"] = dict(sorted(self.retrieval.items()))
        if self.text is not None:
            out["text"] = dict(sorted(self.text.items()))
        if self.regions is not None:
            out["regions"] = self.regions.to_dict()
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def values_dict(self) -> dict:
        """The measured payload: everything except the setting tag."""
        out = self.to_dict()
        out.pop("setting")
        return out


# ---------------------------------------------------------------------------
# Metric primitives
# ---------------------------------------------------------------------------


def weighted_recall_at_k(
    records: Iterable[tuple[str, Sequence[int], set[int]]],
    page_counts: dict[str, int],
    ks: Sequence[int] = (1, 3, 5),
) -> dict[int, float]:
    """Per-manual mean recall, then page-count-weighted mean over manuals.

    ``records`` holds (manual_id, ranked page indices, gold page set) per
    question. Manuals contributing no questions carry no weight.
    """
    per_manual: dict[str, list[list[float]]] = {}
    for manual_id, ranked, gold in records:
        if not gold:
            raise ValueError("gold page set is empty")
        recalls = [len(gold.intersection(ranked[:k])) / len(gold) for k in ks]
        per_manual.setdefault(manual_id, []).append(recalls)
    out = {}
    for i, k in enumerate(ks):
        num = 0.0
        den = 0.0
        for manual_id, rows in per_manual.items():
            weight = page_counts[manual_id]
            num += weight * (sum(r[i] for r in rows) / len(rows))
            den += weight
        out[k] = num / den if den else 0.0
    return out


def region_prf(
    predicted: Sequence[frozenset[str] | set[str]],
    gold: Sequence[frozenset[str] | set[str]],
) -> RegionScores:
    """Set precision/recall/F1 per question, macro-averaged.

    Conventions: an empty prediction has precision 1 only against an empty
    gold set; an empty gold set has recall 1. Micro scores aggregate the
    raw intersection counts over all questions.
    """
    if len(predicted) != len(gold):
        raise ValueError("predicted and gold must be parallel")
    ps, rs, fs = [], [], []
    inter_total = pred_total = gold_total = 0
    for pred_set, gold_set in zip(predicted, gold):
        inter = len(set(pred_set) & set(gold_set))
        inter_total += inter
        pred_total += len(pred_set)
        gold_total += len(gold_set)
        p = inter / len(pred_set) if pred_set else (1.0 if not gold_set else 0.0)
        r = inter / len(gold_set) if gold_set else 1.0
        f = 2 * p * r / (p + r) if (p + r) else 0.0
        ps.append(p)
        rs.append(r)
        fs.append(f)
    n = len(ps) or 1
    micro_p = inter_total / pred_total if pred_total else (1.0 if not gold_total else 0.0)
    micro_r = inter_total / gold_total if gold_total else 1.0
    micro_f = 2 * micro_p * micro_r / (micro_p + micro_r) if (micro_p + micro_r) else 0.0
    return RegionScores(
        precision=sum(ps) / n,
        recall=sum(rs) / n,
        f1=sum(fs) / n,
        micro_precision=micro_p,
        micro_recall=micro_r,
        micro_f1=micro_f,
    )


def text_scores(hypotheses: Sequence[str], references: Sequence[str]) -> dict[str, float]:
    return {
        "bleu4": text_metrics.bleu4(hypotheses, references),
        "meteor_lite": text_metrics.meteor_lite(hypotheses, references),
        "rouge_l": text_metrics.rouge_l(hypotheses, references),
        "cider": text_metrics.cider(hypotheses, references),
    }


# ---------------------------------------------------------------------------
# Split evaluation
# ---------------------------------------------------------------------------


def _rank_pages(model, featurizer, index, manual_id, question, mode) -> list[int]:
    h_q = model.encode(model.embed(featurizer.question(question)))
    e_q = normalize_rows(h_q)
    scored = [
        (score_question_against_entry(e_q, entry, mode), entry)
        for entry in index.scoped(manual_id)
    ]
    scored.sort(key=lambda t: (-t[0], t[1].manual_id, t[1].page_index))
    return [entry.page_index for _, entry in scored]


def evaluate_split(
    model: Model,
    featurizer: Featurizer,
    corpus: Corpus,
    setting: str,
    tasks: Sequence[str] = ALL_TASKS,
    index: Optional[PageIndex] = None,
    retriever: Optional[PagePicker] = None,
    retrieval_mode: str = "token_interaction",
    threshold: float = 0.5,
    max_answer_len: int = 32,
    ks: Sequence[int] = (1, 3, 5),
    top_k: int = 1,
) -> MetricReport:
    """Evaluate one split under one setting.

    ``separate`` hands each question its first gold page; ``cascade`` hands
    it the top-ranked page (or ``retriever``'s pick when supplied — the
    retrieval metrics always reflect the model's own ranking).
    """
    if setting not in ("separate", "cascade"):
        raise ValueError(f"unknown setting {setting!r}")
    if top_k != 1:
        raise ValueError("QA consumes exactly the top-1 page; multi-page fusion is out of scope")
    unknown = set(tasks) - set(ALL_TASKS)
    if unknown:
        raise ValueError(f"unknown tasks: {sorted(unknown)}")

    need_ranking = "retrieval" in tasks or (setting == "cascade" and retriever is None)
    if need_ranking:
        if index is None:
            index = build_index(model, featurizer, corpus)
        elif index.checkpoint_hash != model.fingerprint():
            raise IndexError_(
                "index was built under a different checkpoint "
                f"({index.checkpoint_hash[:12]}... != {model.fingerprint()[:12]}...)"
            )

    rankings: dict[tuple[str, str], list[int]] = {}
    if need_ranking:
        for manual, qa_pair in corpus.iter_qas():
            rankings[(manual.id, qa_pair.id)] = _rank_pages(
                model, featurizer, index, manual.id, qa_pair.question, retrieval_mode
            )

    retrieval_scores = None
    if "retrieval" in tasks:
        records = [
            (manual.id, rankings[(manual.id, qa_pair.id)], set(qa_pair.relevant_pages))
            for manual, qa_pair in corpus.iter_qas()
        ]
        page_counts = {m.id: len(m.pages) for m in corpus.manuals}
        recalls = weighted_recall_at_k(records, page_counts, ks)
        retrieval_scores = {f"recall@{k}": recalls[k] for k in ks}

    text_section = None
    region_section = None
    n_questions = corpus.n_qas
    if "text" in tasks or "regions" in tasks:
        hyps, refs, pred_sets, gold_sets = [], [], [], []
        for manual, qa_pair in corpus.iter_qas():
            if setting == "separate":
                page_idx = min(qa_pair.relevant_pages)
            elif retriever is not None:
                page_idx = retriever(manual, qa_pair)
            else:
                page_idx = rankings[(manual.id, qa_pair.id)][0]
            predicted = qa_mod.answer_multimodal(
                model,
                featurizer,
                qa_pair.question,
                manual.id,
                page_idx,
                threshold=threshold,
                max_len=max_answer_len,
            )
            hyps.append(predicted.text)
            refs.append(qa_pair.answer.text)
            pred_sets.append(predicted.region_ids())
            gold_sets.append(qa_pair.answer.region_ids)
        if "text" in tasks:
            text_section = text_scores(hyps, refs)
        if "regions" in tasks:
            region_section = region_prf(pred_sets, gold_sets)

    return MetricReport(
        setting=setting,
        n_questions=n_questions,
        retrieval=retrieval_scores,
        text=text_section,
        regions=region_section,
    )


def evaluate_separate(
    model: Model, featurizer: Featurizer, corpus: Corpus, **kwargs
) -> MetricReport:
    """QA with the gold page supplied; retrieval measured independently."""
    return evaluate_split(model, featurizer, corpus, setting="separate", **kwargs)


def evaluate_cascade(
    model: Model,
    featurizer: Featurizer,
    corpus: Corpus,
    index: PageIndex,
    retriever: Optional[PagePicker] = None,
    **kwargs,
) -> MetricReport:
    """QA on the top-1 retrieved page, compounding retrieval errors."""
    return evaluate_split(
        model, featurizer, corpus, setting="cascade", index=index, retriever=retriever, **kwargs
    )


def report_by_region_label(
    model: Model,
    featurizer: Featurizer,
    corpus: Corpus,
    threshold: float = 0.5,
    max_answer_len: int = 32,
) -> dict[str, MetricReport]:
    """Per-label answer metrics; a question counts in every label its gold
    visual answer touches."""
    buckets: dict[str, list[tuple[str, str, frozenset, frozenset]]] = {
        label.value: [] for label in SemanticLabel
    }
    for manual, qa_pair in corpus.iter_qas():
        page_idx = min(qa_pair.relevant_pages)
        predicted = qa_mod.answer_multimodal(
            model,
            featurizer,
            qa_pair.question,
            manual.id,
            page_idx,
            threshold=threshold,
            max_len=max_answer_len,
        )
        labels = {manual.find_region(rid).label.value for rid in qa_pair.answer.region_ids}
        row = (predicted.text, qa_pair.answer.text, predicted.region_ids(), qa_pair.answer.region_ids)
        for label in labels:
            buckets[label].append(row)
    reports = {}
    for label, rows in buckets.items():
        if not rows:
            continue
        hyps = [r[0] for r in rows]
        refs = [r[1] for r in rows]
        reports[label] = MetricReport(
            setting="separate",
            n_questions=len(rows),
            text=text_scores(hyps, refs),
            regions=region_prf([r[2] for r in rows], [r[3] for r in rows]),
        )
    return reports


def render_table(rows: dict[str, MetricReport]) -> str:
    """Plain-text table mirroring the standard results layout."""
    columns = [
        ("R@1", lambda r: (r.retrieval or {}).get("recall@1")),
        ("R@3", lambda r: (r.retrieval or {}).get("recall@3")),
        ("R@5", lambda r: (r.retrieval or {}).get("recall@5")),
        ("B4", lambda r: (r.text or {}).get("bleu4")),
        ("M-lite", lambda r: (r.text or {}).get("meteor_lite")),
        ("R-L", lambda r: (r.text or {}).get("rouge_l")),
        ("C", lambda r: (r.text or {}).get("cider")),
        ("P", lambda r: r.regions.precision if r.regions else None),
        ("R", lambda r: r.regions.recall if r.regions else None),
        ("F1", lambda r: r.regions.f1 if r.regions else None),
    ]
    name_w = max([len(n) for n in rows] + [5])
    header = "Model".ljust(name_w) + "".join(f"{name:>9}" for name, _ in columns)
    lines = [header, "-" * len(header)]
    for name, report in rows.items():
        cells = []
        for _, getter in columns:
            value = getter(report)
            cells.append(f"{value:9.3f}" if value is not None else f"{'-':>9}")
        lines.append(name.ljust(name_w) + "".join(cells))
    return "\n".join(lines)

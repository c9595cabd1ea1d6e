"""Corpus data model and on-disk format for multi-page product manuals.

A corpus is a set of manuals; each manual is an ordered list of pages; each
page carries typed semantic regions (bounding box + label + OCR words) and
the manual carries question/answer pairs whose answers are multimodal: a
textual sentence plus a set of region references.

On disk a corpus is a directory:

    manifest.json           {corpus_name, manual_ids, split_assignment}
    manuals/<id>.json       one JSON document per manual (schema below)
    images/...              page rasters (PNG), referenced by relative path

Everything loaded through :func:`load_corpus` is fully validated; objects
are immutable after construction and safe to share across worker threads.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Optional

import numpy as np

SPLIT_NAMES = ("train", "val", "test")


class CorpusError(Exception):
    """Base error for corpus loading and validation failures."""


class CorpusValidationError(CorpusError):
    """An invariant of the data model does not hold."""


class SemanticLabel(str, Enum):
    """The six semantic categories a manual region can carry."""

    TEXT = "Text"
    TITLE = "Title"
    PRODUCT_IMAGE = "ProductImage"
    ILLUSTRATION = "Illustration"
    TABLE = "Table"
    GRAPHIC = "Graphic"


#: Labels whose regions are allowed to carry no OCR words at all.
WORDLESS_LABELS = frozenset(
    {SemanticLabel.PRODUCT_IMAGE, SemanticLabel.GRAPHIC, SemanticLabel.ILLUSTRATION}
)


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in page pixel coordinates, origin top-left."""

    x0: float
    y0: float
    x1: float
    y1: float

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def area(self) -> float:
        return max(0.0, self.width) * max(0.0, self.height)

    def validate_within(self, page_width: float, page_height: float, where: str) -> None:
        if not (0 <= self.x0 < self.x1 <= page_width):
            raise CorpusValidationError(
                f"{where}: x-extent [{self.x0}, {self.x1}] invalid for page width {page_width}"
            )
        if not (0 <= self.y0 < self.y1 <= page_height):
            raise CorpusValidationError(
                f"{where}: y-extent [{self.y0}, {self.y1}] invalid for page height {page_height}"
            )

    def to_list(self) -> list[float]:
        return [self.x0, self.y0, self.x1, self.y1]

    @classmethod
    def from_list(cls, raw, where: str) -> "BBox":
        if not isinstance(raw, (list, tuple)) or len(raw) != 4:
            raise CorpusError(f"{where}: box must be a 4-element list, got {raw!r}")
        return cls(*(float(v) for v in raw))


@dataclass(frozen=True)
class Word:
    """A single OCR token with its own box."""

    text: str
    box: BBox

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise CorpusValidationError("word text is empty after whitespace trim")


@dataclass(frozen=True)
class Region:
    """A labeled rectangular area of a page with its OCR words, in reading order."""

    id: str
    label: SemanticLabel
    box: BBox
    words: tuple[Word, ...]

    def __post_init__(self) -> None:
        if not self.id:
            raise CorpusValidationError("region id is empty")
        if not self.words and self.label not in WORDLESS_LABELS:
            raise CorpusValidationError(
                f"region {self.id}: label {self.label.value} requires at least one word"
            )

    @property
    def text(self) -> str:
        return " ".join(w.text for w in self.words)


@dataclass(frozen=True)
class Page:
    """One manual page: raster dimensions, image path, and ordered regions."""

    id: str
    index: int
    width: int
    height: int
    image_path: str
    regions: tuple[Region, ...]

    def __post_init__(self) -> None:
        where = f"page {self.id}"
        if self.index < 0:
            raise CorpusValidationError(f"{where}: negative index")
        if self.width <= 0 or self.height <= 0:
            raise CorpusValidationError(f"{where}: non-positive dimensions")
        for region in self.regions:
            region.box.validate_within(self.width, self.height, f"{where}: region {region.id}")
            for word in region.words:
                word.box.validate_within(
                    self.width, self.height, f"{where}: region {region.id}: word {word.text!r}"
                )


@dataclass(frozen=True)
class MultimodalAnswer:
    """Answer payload: a natural-language sentence plus referenced regions."""

    text: str
    region_ids: frozenset[str]

    def __post_init__(self) -> None:
        if not self.region_ids and not self.text.strip():
            raise CorpusValidationError("answer has neither text nor regions")


@dataclass(frozen=True)
class QAPair:
    """A question with its multimodal answer.

    ``relevant_pages`` is never stored; it is derived from the pages of the
    answer regions during :class:`Manual` validation.
    """

    id: str
    manual_id: str
    question: str
    answer: MultimodalAnswer
    relevant_pages: frozenset[int] = field(default=frozenset(), compare=False)

    def __post_init__(self) -> None:
        if not self.question.strip():
            raise CorpusValidationError(f"qa {self.id}: question is empty")


@dataclass(frozen=True)
class Manual:
    """A product manual: ordered pages plus its annotated QA pairs."""

    id: str
    brand: str
    category: str
    pages: tuple[Page, ...]
    qas: tuple[QAPair, ...]

    def __post_init__(self) -> None:
        if not self.pages:
            raise CorpusValidationError(f"manual {self.id}: has no pages")
        indices = [p.index for p in self.pages]
        if indices != list(range(len(self.pages))):
            raise CorpusValidationError(
                f"manual {self.id}: page indices {indices} are not contiguous from 0"
            )
        page_ids = [p.id for p in self.pages]
        if len(set(page_ids)) != len(page_ids):
            raise CorpusValidationError(f"manual {self.id}: duplicate page ids")

        region_page: dict[str, int] = {}
        for page in self.pages:
            for region in page.regions:
                if region.id in region_page:
                    raise CorpusValidationError(
                        f"manual {self.id}: region id {region.id} appears on more than one page"
                    )
                region_page[region.id] = page.index

        resolved_qas = []
        for qa in self.qas:
            pages = set()
            for rid in qa.answer.region_ids:
                if rid not in region_page:
                    raise CorpusValidationError(
                        f"manual {self.id}: qa {qa.id} references unknown region {rid}"
                    )
                pages.add(region_page[rid])
            if not pages:
                raise CorpusValidationError(
                    f"manual {self.id}: qa {qa.id} resolves to no relevant pages"
                )
            object.__setattr__(qa, "relevant_pages", frozenset(pages))
            resolved_qas.append(qa)
        object.__setattr__(self, "_region_page", region_page)

    def page_of_region(self, region_id: str) -> int:
        return self._region_page[region_id]

    def find_region(self, region_id: str) -> Region:
        page = self.pages[self._region_page[region_id]]
        for region in page.regions:
            if region.id == region_id:
                return region
        raise KeyError(region_id)


@dataclass
class Corpus:
    """All manuals plus the train/val/test split assignment.

    ``root`` points at the backing directory after :func:`load_corpus`;
    ``images`` holds in-memory rasters (path -> uint8 HxWx3 array) for
    corpora produced by the synthetic generator before their first save.
    Neither participates in equality: two corpora are equal when their
    manuals and split assignment are equal field-for-field.
    """

    name: str
    manuals: tuple[Manual, ...]
    split_assignment: dict[str, str]
    root: Optional[Path] = field(default=None, compare=False)
    images: dict[str, np.ndarray] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        ids = [m.id for m in self.manuals]
        if len(set(ids)) != len(ids):
            raise CorpusValidationError("duplicate manual ids")
        missing = set(ids) - set(self.split_assignment)
        if missing:
            raise CorpusValidationError(f"manuals without split assignment: {sorted(missing)}")
        extra = set(self.split_assignment) - set(ids)
        if extra:
            raise CorpusValidationError(f"split assignment for unknown manuals: {sorted(extra)}")
        bad = {s for s in self.split_assignment.values() if s not in SPLIT_NAMES}
        if bad:
            raise CorpusValidationError(f"unknown split names: {sorted(bad)}")
        self._by_id = {m.id: m for m in self.manuals}

    def get_manual(self, manual_id: str) -> Manual:
        try:
            return self._by_id[manual_id]
        except KeyError:
            raise CorpusError(f"unknown manual {manual_id!r}") from None

    @property
    def n_pages(self) -> int:
        return sum(len(m.pages) for m in self.manuals)

    @property
    def n_qas(self) -> int:
        return sum(len(m.qas) for m in self.manuals)

    def iter_qas(self) -> Iterable[tuple[Manual, QAPair]]:
        for manual in self.manuals:
            for qa in manual.qas:
                yield manual, qa

    def load_page_image(self, page: Page) -> np.ndarray:
        """Return the page raster as a uint8 array (HxWx3 or HxW).

        Resolution order: in-memory images, then ``root``-relative PNG.
        A corpus with neither raises ``CorpusError``.
        """
        if page.image_path in self.images:
            return self.images[page.image_path]
        if self.root is not None:
            path = self.root / page.image_path
            if path.exists():
                from PIL import Image

                with Image.open(path) as im:
                    return np.asarray(im.convert("RGB"))
        raise CorpusError(f"no image available for {page.image_path}")


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _word_to_dict(word: Word) -> dict:
    return {"text": word.text, "box": word.box.to_list()}


def _region_to_dict(region: Region) -> dict:
    return {
        "id": region.id,
        "label": region.label.value,
        "box": region.box.to_list(),
        "words": [_word_to_dict(w) for w in region.words],
    }


def _manual_to_dict(manual: Manual) -> dict:
    return {
        "id": manual.id,
        "brand": manual.brand,
        "category": manual.category,
        "pages": [
            {
                "id": p.id,
                "index": p.index,
                "width": p.width,
                "height": p.height,
                "image_path": p.image_path,
                "regions": [_region_to_dict(r) for r in p.regions],
            }
            for p in manual.pages
        ],
        "qas": [
            {
                "id": qa.id,
                "question": qa.question,
                "answer": {
                    "text": qa.answer.text,
                    "region_ids": sorted(qa.answer.region_ids),
                },
            }
            for qa in manual.qas
        ],
    }


def _require(mapping: Mapping, key: str, where: str):
    if key not in mapping:
        raise CorpusError(f"{where}: missing field {key!r}")
    return mapping[key]


def _manual_from_dict(raw: Mapping, manual_id: str) -> Manual:
    where = f"manual {manual_id}"
    if _require(raw, "id", where) != manual_id:
        raise CorpusError(f"{where}: file id {raw['id']!r} does not match manifest")
    pages = []
    for praw in _require(raw, "pages", where):
        pw = f"{where}: page {praw.get('id', '?')}"
        regions = []
        for rraw in _require(praw, "regions", pw):
            rw = f"{pw}: region {rraw.get('id', '?')}"
            label_raw = _require(rraw, "label", rw)
            try:
                label = SemanticLabel(label_raw)
            except ValueError:
                raise CorpusError(f"{rw}: unknown label {label_raw!r}") from None
            words = tuple(
                Word(_require(wraw, "text", rw), BBox.from_list(_require(wraw, "box", rw), rw))
                for wraw in _require(rraw, "words", rw)
            )
            regions.append(
                Region(
                    id=_require(rraw, "id", rw),
                    label=label,
                    box=BBox.from_list(_require(rraw, "box", rw), rw),
                    words=words,
                )
            )
        pages.append(
            Page(
                id=_require(praw, "id", pw),
                index=int(_require(praw, "index", pw)),
                width=int(_require(praw, "width", pw)),
                height=int(_require(praw, "height", pw)),
                image_path=_require(praw, "image_path", pw),
                regions=tuple(regions),
            )
        )
    qas = []
    for qraw in _require(raw, "qas", where):
        qw = f"{where}: qa {qraw.get('id', '?')}"
        araw = _require(qraw, "answer", qw)
        qas.append(
            QAPair(
                id=_require(qraw, "id", qw),
                manual_id=manual_id,
                question=_require(qraw, "question", qw),
                answer=MultimodalAnswer(
                    text=_require(araw, "text", qw),
                    region_ids=frozenset(_require(araw, "region_ids", qw)),
                ),
            )
        )
    return Manual(
        id=manual_id,
        brand=_require(raw, "brand", where),
        category=_require(raw, "category", where),
        pages=tuple(pages),
        qas=tuple(qas),
    )


def _dump_json(payload, path: Path) -> None:
    path.write_text(
        json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write a corpus directory; serialization is byte-deterministic."""
    root = Path(path)
    (root / "manuals").mkdir(parents=True, exist_ok=True)
    manifest = {
        "corpus_name": corpus.name,
        "manual_ids": [m.id for m in corpus.manuals],
        "split_assignment": corpus.split_assignment,
    }
    _dump_json(manifest, root / "manifest.json")
    for manual in corpus.manuals:
        _dump_json(_manual_to_dict(manual), root / "manuals" / f"{manual.id}.json")
    if corpus.images:
        from PIL import Image

        for rel, pixels in sorted(corpus.images.items()):
            target = root / rel
            target.parent.mkdir(parents=True, exist_ok=True)
            Image.fromarray(pixels).save(target, format="PNG")
    elif corpus.root is not None and Path(corpus.root) != root:
        import shutil

        for manual in corpus.manuals:
            for page in manual.pages:
                src = Path(corpus.root) / page.image_path
                if src.exists():
                    dst = root / page.image_path
                    dst.parent.mkdir(parents=True, exist_ok=True)
                    shutil.copyfile(src, dst)


def load_corpus(path: str | Path) -> Corpus:
    """Load and validate a corpus directory written by :func:`save_corpus`."""
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise CorpusError(f"{root}: manifest.json not found")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    manuals = []
    for manual_id in _require(manifest, "manual_ids", "manifest"):
        manual_path = root / "manuals" / f"{manual_id}.json"
        if not manual_path.exists():
            raise CorpusError(f"manual {manual_id}: file {manual_path} not found")
        raw = json.loads(manual_path.read_text(encoding="utf-8"))
        manuals.append(_manual_from_dict(raw, manual_id))
    return Corpus(
        name=_require(manifest, "corpus_name", "manifest"),
        manuals=tuple(manuals),
        split_assignment=dict(_require(manifest, "split_assignment", "manifest")),
        root=root,
    )


# ---------------------------------------------------------------------------
# Views and filters
# ---------------------------------------------------------------------------


def split_view(corpus: Corpus, split_name: str) -> Corpus:
    """Restrict a corpus to the manuals assigned to one split."""
    if split_name not in SPLIT_NAMES:
        raise CorpusError(f"unknown split {split_name!r}; expected one of {SPLIT_NAMES}")
    keep = tuple(m for m in corpus.manuals if corpus.split_assignment[m.id] == split_name)
    return Corpus(
        name=corpus.name,
        manuals=keep,
        split_assignment={m.id: split_name for m in keep},
        root=corpus.root,
        images=corpus.images,
    )


def filter_single_page_qas(corpus: Corpus) -> Corpus:
    """Drop every QA whose answer regions span more than one page.

    Returns a new corpus; the input is untouched. Idempotent.
    """
    import dataclasses

    manuals = tuple(
        dataclasses.replace(
            manual, qas=tuple(qa for qa in manual.qas if len(qa.relevant_pages) == 1)
        )
        for manual in corpus.manuals
    )
    return Corpus(
        name=corpus.name,
        manuals=manuals,
        split_assignment=dict(corpus.split_assignment),
        root=corpus.root,
        images=corpus.images,
    )


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------


def _n_tokens(text: str) -> int:
    return len(text.split())


@dataclass(frozen=True)
class StatsReport:
    """Corpus statistics; lengths count whitespace-separated tokens."""

    n_manuals: int
    n_pages: int
    n_qas: int
    pct_unique_questions: float
    pct_unique_answers: float
    mean_question_len: float
    mean_answer_len: float
    mean_page_len: float
    regions_by_label: dict[str, int]
    pages_per_manual: dict[int, int]

    def to_dict(self) -> dict:
        return {
            "n_manuals": self.n_manuals,
            "n_pages": self.n_pages,
            "n_qas": self.n_qas,
            "pct_unique_questions": self.pct_unique_questions,
            "pct_unique_answers": self.pct_unique_answers,
            "mean_question_len": self.mean_question_len,
            "mean_answer_len": self.mean_answer_len,
            "mean_page_len": self.mean_page_len,
            "regions_by_label": dict(sorted(self.regions_by_label.items())),
            "pages_per_manual": {str(k): v for k, v in sorted(self.pages_per_manual.items())},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def corpus_stats(corpus: Corpus) -> StatsReport:
    questions = []
    answers = []
    page_lens = []
    label_counts: Counter = Counter()
    pages_per_manual: Counter = Counter()
    for manual in corpus.manuals:
        pages_per_manual[len(manual.pages)] += 1
        for page in manual.pages:
            page_lens.append(sum(_n_tokens(w.text) for r in page.regions for w in r.words))
            for region in page.regions:
                label_counts[region.label.value] += 1
        for qa in manual.qas:
            questions.append(qa.question)
            answers.append(qa.answer.text)

    def pct_unique(items: list[str]) -> float:
        return 100.0 * len(set(items)) / len(items) if items else 0.0

    def mean(values: list[int]) -> float:
        return float(sum(values)) / len(values) if values else 0.0

    return StatsReport(
        n_manuals=len(corpus.manuals),
        n_pages=corpus.n_pages,
        n_qas=corpus.n_qas,
        pct_unique_questions=pct_unique(questions),
        pct_unique_answers=pct_unique(answers),
        mean_question_len=mean([_n_tokens(q) for q in questions]),
        mean_answer_len=mean([_n_tokens(a) for a in answers]),
        mean_page_len=mean(page_lens),
        regions_by_label=dict(label_counts),
        pages_per_manual=dict(pages_per_manual),
    )

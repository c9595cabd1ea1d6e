"""Featurization: token sequences plus the embedding summands.

Questions become subword ids ending in the end marker. Pages become, per
region in order, a label-marker token followed by the region's OCR subwords;
every page token carries a layout box (normalized to a 0-1000 grid) and a
raw visual feature extracted from the region's image crop. Embeddings are
assembled additively: question rows are token+segment, page rows are
token+segment+position+projected-ROI.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .corpus import BBox, Corpus, CorpusError, Page, SemanticLabel
from .vocab import Vocabulary

SEG_QUESTION = 0
SEG_PAGE = 1

COORD_GRID = 1000  # boxes normalized to integers in [0, COORD_GRID]
ROI_SIDE = 32
ROI_DIM = ROI_SIDE * ROI_SIDE  # crop -> 32x32 grayscale -> flatten

RoiBackend = Callable[[Optional[np.ndarray], BBox], np.ndarray]


@dataclass(frozen=True)
class QuestionFeatures:
    token_ids: np.ndarray  # int64 [L], ends with the end-of-question marker
    segment_ids: np.ndarray  # int64 [L], all SEG_QUESTION

    def __len__(self) -> int:
        return len(self.token_ids)


@dataclass(frozen=True)
class PageFeatures:
    token_ids: np.ndarray  # int64 [L]
    segment_ids: np.ndarray  # int64 [L], all SEG_PAGE
    token_boxes: np.ndarray  # int64 [L, 4] grid-normalized x0,y0,x1,y1
    roi_vectors: np.ndarray  # float32 [L, ROI_DIM], shared across a region's tokens
    marker_positions: tuple[int, ...]  # index of each kept region's marker token

    def __len__(self) -> int:
        return len(self.token_ids)


def normalize_box(box: BBox, page_width: float, page_height: float) -> tuple[int, int, int, int]:
    """Map pixel coordinates onto the integer layout grid."""

    def grid(v: float, extent: float) -> int:
        return int(np.clip(int(v * COORD_GRID / extent), 0, COORD_GRID))

    return (
        grid(box.x0, page_width),
        grid(box.y0, page_height),
        grid(box.x1, page_width),
        grid(box.y1, page_height),
    )


def extract_roi_feature(page_image: Optional[np.ndarray], box: BBox) -> np.ndarray:
    """Default visual backend: crop, resize to 32x32 grayscale, flatten.

    Values are centered around mid-gray (range [-0.5, 0.5]) so that a
    featureless crop carries little signal into the projected summand.
    Zero-area boxes and missing images yield the zero vector.
    """
    if page_image is None or box.area <= 0:
        return np.zeros(ROI_DIM, dtype=np.float32)
    from PIL import Image

    h, w = page_image.shape[:2]
    x0 = int(np.clip(np.floor(box.x0), 0, w - 1))
    y0 = int(np.clip(np.floor(box.y0), 0, h - 1))
    x1 = int(np.clip(np.ceil(box.x1), x0 + 1, w))
    y1 = int(np.clip(np.ceil(box.y1), y0 + 1, h))
    crop = page_image[y0:y1, x0:x1]
    im = Image.fromarray(crop)
    gray = im.convert("L").resize((ROI_SIDE, ROI_SIDE), Image.BILINEAR)
    return (np.asarray(gray, dtype=np.float32) / 255.0 - 0.5).reshape(-1)


def encode_question(question: str, vocab: Vocabulary) -> QuestionFeatures:
    if not question.strip():
        raise ValueError("question is empty")
    ids = vocab.tokenize(question) + [vocab.eos_id]
    return QuestionFeatures(
        token_ids=np.asarray(ids, dtype=np.int64),
        segment_ids=np.full(len(ids), SEG_QUESTION, dtype=np.int64),
    )


def encode_page(
    page: Page,
    vocab: Vocabulary,
    max_len: int = 512,
    image: Optional[np.ndarray] = None,
    roi_backend: RoiBackend = extract_roi_feature,
) -> PageFeatures:
    """Concatenate per-region token runs, truncating region-suffix-first.

    A region past the budget is dropped whole; the last kept region loses
    trailing whole words; a kept region always keeps its marker token.
    Pages with no regions at all encode as one synthetic wordless Text
    region spanning the page (an encoding construct only).
    """
    if page.regions:
        regions: list[tuple[SemanticLabel, BBox, tuple]] = [
            (r.label, r.box, r.words) for r in page.regions
        ]
    else:
        whole_page = BBox(0.0, 0.0, float(page.width), float(page.height))
        regions = [(SemanticLabel.TEXT, whole_page, ())]
    token_ids: list[int] = []
    boxes: list[tuple[int, int, int, int]] = []
    rois: list[np.ndarray] = []
    marker_positions: list[int] = []

    truncated = False
    for label, box, words in regions:
        if truncated or len(token_ids) + 1 > max_len:
            break
        region_box = normalize_box(box, page.width, page.height)
        region_roi = np.asarray(roi_backend(image, box), dtype=np.float32)
        marker_positions.append(len(token_ids))
        token_ids.append(vocab.marker_id(label))
        boxes.append(region_box)
        rois.append(region_roi)
        for word in words:
            sub = vocab.tokenize(word.text)
            if len(token_ids) + len(sub) > max_len:
                truncated = True
                break
            word_box = normalize_box(word.box, page.width, page.height)
            for tid in sub:
                token_ids.append(tid)
                boxes.append(word_box)
                rois.append(region_roi)

    return PageFeatures(
        token_ids=np.asarray(token_ids, dtype=np.int64),
        segment_ids=np.full(len(token_ids), SEG_PAGE, dtype=np.int64),
        token_boxes=np.asarray(boxes, dtype=np.int64),
        roi_vectors=np.stack(rois).astype(np.float32),
        marker_positions=tuple(marker_positions),
    )


@dataclass
class EmbeddingTables:
    """Plain-array view of the learnable embedding tables."""

    token: np.ndarray  # [V, d]
    segment: np.ndarray  # [2, d]
    pos_x0: np.ndarray  # [COORD_GRID+1, d]
    pos_y0: np.ndarray
    pos_x1: np.ndarray
    pos_y1: np.ndarray
    pos_w: np.ndarray
    pos_h: np.ndarray
    roi_proj: np.ndarray  # [ROI_DIM, d]


def layout_buckets(token_boxes: np.ndarray) -> tuple[np.ndarray, ...]:
    """Six bucket index arrays (x0, y0, x1, y1, width, height) per token."""
    x0, y0, x1, y1 = (token_boxes[:, i] for i in range(4))
    return x0, y0, x1, y1, x1 - x0, y1 - y0


def assemble_embeddings(
    features: QuestionFeatures | PageFeatures, tables: EmbeddingTables
) -> np.ndarray:
    """Sum the embedding summands row-wise; shape [L, hidden]."""
    z = tables.token[features.token_ids] + tables.segment[features.segment_ids]
    if isinstance(features, PageFeatures):
        x0, y0, x1, y1, w, h = layout_buckets(features.token_boxes)
        z = (
            z
            + tables.pos_x0[x0]
            + tables.pos_y0[y0]
            + tables.pos_x1[x1]
            + tables.pos_y1[y1]
            + tables.pos_w[w]
            + tables.pos_h[h]
            + features.roi_vectors.astype(tables.roi_proj.dtype) @ tables.roi_proj
        )
    return z


class Featurizer:
    """Caching front end: text/page -> features, with corpus image access."""

    def __init__(
        self,
        corpus: Corpus,
        vocab: Vocabulary,
        max_page_len: int = 512,
        roi_backend: RoiBackend = extract_roi_feature,
    ):
        self.corpus = corpus
        self.vocab = vocab
        self.max_page_len = max_page_len
        self.roi_backend = roi_backend
        self._question_cache: dict[str, QuestionFeatures] = {}
        self._page_cache: dict[tuple[str, int, int], PageFeatures] = {}

    def question(self, text: str) -> QuestionFeatures:
        feats = self._question_cache.get(text)
        if feats is None:
            feats = encode_question(text, self.vocab)
            self._question_cache[text] = feats
        return feats

    def page(self, manual_id: str, page_index: int, max_len: Optional[int] = None) -> PageFeatures:
        budget = self.max_page_len if max_len is None else min(max_len, self.max_page_len)
        key = (manual_id, page_index, budget)
        feats = self._page_cache.get(key)
        if feats is None:
            page = self.corpus.get_manual(manual_id).pages[page_index]
            try:
                image = self.corpus.load_page_image(page)
            except CorpusError:
                image = None
            feats = encode_page(
                page, self.vocab, budget, image=image, roi_backend=self.roi_backend
            )
            self._page_cache[key] = feats
        return feats

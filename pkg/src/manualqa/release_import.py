"""Import adapter for externally released manual-QA annotation trees.

Expected source layout (one directory per manual):

    src/
      manuals.json                  [{"id", "brand", "category"}, ...]
      splits.json                   {"train": [ids...], "val": [...], "test": [...]}   (optional)
      <manual_id>/
        annotation.json
        pages/<index>.png           page rasters (optional)

``annotation.json`` schema:

    {
      "pages": [
        {"width": int, "height": int, "image": "pages/0.png",
         "regions": [
            {"category": "Text" | "Title" | "Product image" | "Illustration"
                         | "Table" | "Graphic",
             "bbox": [x0, y0, x1, y1],
             "words": [{"text": str, "bbox": [x0, y0, x1, y1]}, ...]}
         ]}
      ],
      "qas": [
        {"question": str, "answer": str,
         "answer_regions": [[page_index, region_index], ...]}
      ]
    }

Manuals without a split entry go to "train". The importer normalizes label
spellings, assigns stable region/QA ids, clamps boxes into the page, and
produces a corpus that passes full validation; save it with
:func:`manualqa.save_corpus` to get the pipeline's native format.
"""

from __future__ import annotations

import json
import shutil
from pathlib import Path

from .corpus import (
    BBox,
    Corpus,
    CorpusError,
    Manual,
    MultimodalAnswer,
    Page,
    QAPair,
    Region,
    SemanticLabel,
    Word,
)

_LABEL_ALIASES = {
    "text": SemanticLabel.TEXT,
    "title": SemanticLabel.TITLE,
    "productimage": SemanticLabel.PRODUCT_IMAGE,
    "product image": SemanticLabel.PRODUCT_IMAGE,
    "product_image": SemanticLabel.PRODUCT_IMAGE,
    "illustration": SemanticLabel.ILLUSTRATION,
    "table": SemanticLabel.TABLE,
    "graphic": SemanticLabel.GRAPHIC,
}


def _label(raw: str, where: str) -> SemanticLabel:
    key = raw.strip().lower()
    if key not in _LABEL_ALIASES:
        raise CorpusError(f"{where}: unknown region category {raw!r}")
    return _LABEL_ALIASES[key]


def _clamped_box(raw, width: float, height: float, where: str) -> BBox:
    box = BBox.from_list(raw, where)
    x0 = min(max(box.x0, 0.0), width - 1.0)
    y0 = min(max(box.y0, 0.0), height - 1.0)
    x1 = max(min(box.x1, float(width)), x0 + 1.0)
    y1 = max(min(box.y1, float(height)), y0 + 1.0)
    return BBox(x0, y0, x1, y1)


def import_release(src: str | Path, dest_images: Path | None = None) -> Corpus:
    """Map a release tree into a validated corpus.

    When ``dest_images`` is given, page rasters are copied there under the
    corpus-native ``images/<manual>/pageNNN.png`` layout.
    """
    src = Path(src)
    listing_path = src / "manuals.json"
    if not listing_path.exists():
        raise CorpusError(f"{src}: manuals.json not found")
    listing = json.loads(listing_path.read_text(encoding="utf-8"))

    splits_path = src / "splits.json"
    split_of: dict[str, str] = {}
    if splits_path.exists():
        for split, ids in json.loads(splits_path.read_text(encoding="utf-8")).items():
            for manual_id in ids:
                split_of[manual_id] = split

    manuals = []
    for entry in listing:
        manual_id = entry["id"]
        where = f"manual {manual_id}"
        ann_path = src / manual_id / "annotation.json"
        if not ann_path.exists():
            raise CorpusError(f"{where}: {ann_path} not found")
        ann = json.loads(ann_path.read_text(encoding="utf-8"))

        pages = []
        for p_idx, praw in enumerate(ann.get("pages", [])):
            pw = f"{where}: page {p_idx}"
            width, height = int(praw["width"]), int(praw["height"])
            regions = []
            for r_idx, rraw in enumerate(praw.get("regions", [])):
                rw = f"{pw}: region {r_idx}"
                words = tuple(
                    Word(w["text"], _clamped_box(w["bbox"], width, height, rw))
                    for w in rraw.get("words", [])
                    if str(w.get("text", "")).strip()
                )
                label = _label(rraw.get("category", rraw.get("label", "")), rw)
                regions.append(
                    Region(
                        id=f"{manual_id}-p{p_idx}-r{r_idx}",
                        label=label,
                        box=_clamped_box(rraw["bbox"], width, height, rw),
                        words=words,
                    )
                )
            image_rel = f"images/{manual_id}/page{p_idx:03d}.png"
            if dest_images is not None and praw.get("image"):
                src_img = src / manual_id / praw["image"]
                if src_img.exists():
                    target = dest_images / image_rel
                    target.parent.mkdir(parents=True, exist_ok=True)
                    shutil.copyfile(src_img, target)
            pages.append(
                Page(
                    id=f"{manual_id}-p{p_idx}",
                    index=p_idx,
                    width=width,
                    height=height,
                    image_path=image_rel,
                    regions=tuple(regions),
                )
            )

        qas = []
        for q_idx, qraw in enumerate(ann.get("qas", [])):
            qw = f"{where}: qa {q_idx}"
            region_ids = set()
            for ref in qraw.get("answer_regions", []):
                p_idx, r_idx = int(ref[0]), int(ref[1])
                if not 0 <= p_idx < len(pages) or not 0 <= r_idx < len(pages[p_idx].regions):
                    raise CorpusError(f"{qw}: region reference {ref} out of range")
                region_ids.add(pages[p_idx].regions[r_idx].id)
            qas.append(
                QAPair(
                    id=f"{manual_id}-q{q_idx}",
                    manual_id=manual_id,
                    question=qraw["question"],
                    answer=MultimodalAnswer(
                        text=qraw.get("answer", ""), region_ids=frozenset(region_ids)
                    ),
                )
            )
        manuals.append(
            Manual(
                id=manual_id,
                brand=entry.get("brand", "unknown"),
                category=entry.get("category", "unknown"),
                pages=tuple(pages),
                qas=tuple(qas),
            )
        )

    return Corpus(
        name=src.name,
        manuals=tuple(manuals),
        split_assignment={m.id: split_of.get(m.id, "train") for m in manuals},
        root=dest_images,
    )

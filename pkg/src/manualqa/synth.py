"""Deterministic synthetic corpus generator for desk-scale experiments.

Every page gets a unique code word that also appears in the questions and
answers anchored to it, so a small model can learn both to retrieve the
right page and to reproduce the answer sentence: each answer is assembled
exclusively from words present in its gold regions.
"""

from __future__ import annotations

import numpy as np

from .corpus import (
    BBox,
    Corpus,
    Manual,
    MultimodalAnswer,
    Page,
    QAPair,
    Region,
    SemanticLabel,
    Word,
    WORDLESS_LABELS,
)

PAGE_WIDTH = 320
PAGE_HEIGHT = 416

_BRANDS = ["acme", "orbit", "nimbus", "vertex", "quasar", "helio"]
_CATEGORIES = ["camera", "router", "speaker", "vacuum", "drone", "monitor"]
_NOUNS = ["battery", "filter", "sensor", "remote", "lens", "strap", "display", "antenna"]
_VERBS = ["reset", "charge", "pair", "clean", "calibrate", "mount", "update", "adjust"]
_SYLLABLES = ["ka", "lo", "mi", "tu", "ve", "zo", "ren", "bas", "dol", "fin"]

_EXTRA_LABEL_CYCLE = [
    SemanticLabel.PRODUCT_IMAGE,
    SemanticLabel.TABLE,
    SemanticLabel.GRAPHIC,
    SemanticLabel.ILLUSTRATION,
    SemanticLabel.TEXT,
    SemanticLabel.TITLE,
]

_LABEL_SHADES = {
    SemanticLabel.TEXT: (70, 70, 70),
    SemanticLabel.TITLE: (40, 40, 160),
    SemanticLabel.PRODUCT_IMAGE: (160, 60, 60),
    SemanticLabel.ILLUSTRATION: (60, 140, 60),
    SemanticLabel.TABLE: (150, 110, 40),
    SemanticLabel.GRAPHIC: (120, 60, 140),
}


def _page_code(m_idx: int, p_idx: int, rng: np.random.Generator) -> str:
    syl = _SYLLABLES[int(rng.integers(len(_SYLLABLES)))]
    return f"{syl}{m_idx}{p_idx}"


def _word_row(texts: list[str], box: BBox) -> tuple[Word, ...]:
    """Lay words out left to right inside a region box."""
    n = len(texts)
    pad = 2.0
    usable = box.width - 2 * pad
    step = usable / n
    words = []
    for i, text in enumerate(texts):
        x0 = box.x0 + pad + i * step
        x1 = min(box.x1 - pad, x0 + max(4.0, step * 0.85))
        words.append(Word(text=text, box=BBox(x0, box.y0 + pad, x1, box.y1 - pad)))
    return tuple(words)


def _render_page(page: Page) -> np.ndarray:
    """Rasterize a page: white background, one shaded rectangle per region."""
    img = np.full((page.height, page.width, 3), 255, dtype=np.uint8)
    for region in page.regions:
        x0, y0 = int(region.box.x0), int(region.box.y0)
        x1, y1 = int(region.box.x1), int(region.box.y1)
        shade = _LABEL_SHADES[region.label]
        fill = tuple(min(255, c + 140) for c in shade)
        img[y0:y1, x0:x1] = fill
        img[y0 : y0 + 2, x0:x1] = shade
        img[y1 - 2 : y1, x0:x1] = shade
        img[y0:y1, x0 : x0 + 2] = shade
        img[y0:y1, x1 - 2 : x1] = shade
        for word in region.words:
            wx0, wy0 = int(word.box.x0), int(word.box.y0)
            wx1, wy1 = int(word.box.x1), int(word.box.y1)
            img[wy0:wy1, wx0:wx1] = tuple(max(0, c - 20) for c in fill)
    return img


def generate_synthetic(
    seed: int, n_manuals: int, pages_per_manual: int, qas_per_page: int
) -> Corpus:
    """Build a fully deterministic corpus with images, regions, and QAs.

    Pages carry 2-6 regions; the very first page of the corpus carries all
    six labels so label coverage holds for any argument combination.
    """
    if min(n_manuals, pages_per_manual, qas_per_page) < 1:
        raise ValueError("all counts must be >= 1")
    rng = np.random.default_rng(seed)
    manuals = []
    images: dict[str, np.ndarray] = {}
    for m_idx in range(n_manuals):
        manual_id = f"m{m_idx}"
        brand = _BRANDS[m_idx % len(_BRANDS)]
        category = _CATEGORIES[m_idx % len(_CATEGORIES)]
        pages = []
        qas = []
        for p_idx in range(pages_per_manual):
            code = _page_code(m_idx, p_idx, rng)
            # cycle nouns/verbs so pages of a manual differ in content
            # words, not just in the page code
            noun_a = _NOUNS[p_idx % len(_NOUNS)]
            noun_b = _NOUNS[(p_idx + 3) % len(_NOUNS)]
            verb = _VERBS[(p_idx + m_idx) % len(_VERBS)]

            first_corpus_page = m_idx == 0 and p_idx == 0
            if first_corpus_page:
                n_regions = 6
            else:
                n_regions = int(rng.integers(2, 7))

            band_h = (PAGE_HEIGHT - 16.0) / n_regions
            regions = []

            def band(i: int) -> BBox:
                top = 8.0 + i * band_h
                return BBox(8.0, top + 2.0, PAGE_WIDTH - 8.0, top + band_h - 2.0)

            title_box = band(0)
            regions.append(
                Region(
                    id=f"{manual_id}-p{p_idx}-r0",
                    label=SemanticLabel.TITLE,
                    box=title_box,
                    words=_word_row([brand, category, "guide", code], title_box),
                )
            )
            body_words = ["press", "the", noun_a, "button", "to", verb, "the", noun_b, code]
            body_box = band(1)
            regions.append(
                Region(
                    id=f"{manual_id}-p{p_idx}-r1",
                    label=SemanticLabel.TEXT,
                    box=body_box,
                    words=_word_row(body_words, body_box),
                )
            )
            for extra_i in range(2, n_regions):
                if first_corpus_page:
                    label = _EXTRA_LABEL_CYCLE[extra_i - 2]
                else:
                    label = _EXTRA_LABEL_CYCLE[int(rng.integers(len(_EXTRA_LABEL_CYCLE)))]
                box = band(extra_i)
                if label in WORDLESS_LABELS:
                    words: tuple[Word, ...] = ()
                elif label is SemanticLabel.TABLE:
                    words = _word_row(["step", "part", noun_a, "count"], box)
                else:
                    words = _word_row(["see", "also", noun_b, code], box)
                regions.append(
                    Region(id=f"{manual_id}-p{p_idx}-r{extra_i}", label=label, box=box, words=words)
                )

            page = Page(
                id=f"{manual_id}-p{p_idx}",
                index=p_idx,
                width=PAGE_WIDTH,
                height=PAGE_HEIGHT,
                image_path=f"images/{manual_id}/page{p_idx:03d}.png",
                regions=tuple(regions),
            )
            pages.append(page)
            images[page.image_path] = _render_page(page)

            body_region_id = f"{manual_id}-p{p_idx}-r1"
            visual_region_ids = [
                r.id for r in regions[2:] if r.label in WORDLESS_LABELS
            ]
            for q_idx in range(qas_per_page):
                gold = {body_region_id}
                if q_idx % 2 == 1 and visual_region_ids:
                    gold.add(visual_region_ids[0])
                if q_idx % 2 == 0:
                    question = f"how do i {verb} the {noun_b} on {code}"
                    answer_text = f"press the {noun_a} button to {verb} the {noun_b}"
                else:
                    question = f"what does the {noun_a} button do on {code}"
                    answer_text = f"the {noun_a} button {verb} the {noun_b} {code}"
                qas.append(
                    QAPair(
                        id=f"{manual_id}-p{p_idx}-q{q_idx}",
                        manual_id=manual_id,
                        question=question,
                        answer=MultimodalAnswer(
                            text=answer_text, region_ids=frozenset(gold)
                        ),
                    )
                )
        manuals.append(
            Manual(id=manual_id, brand=brand, category=category, pages=tuple(pages), qas=tuple(qas))
        )

    split_assignment = {}
    for m_idx, manual in enumerate(manuals):
        if n_manuals >= 3:
            frac = m_idx / n_manuals
            split = "train" if frac < 0.6 else ("val" if frac < 0.8 else "test")
        else:
            split = "train"
        split_assignment[manual.id] = split

    return Corpus(
        name=f"synthetic-{seed}",
        manuals=tuple(manuals),
        split_assignment=split_assignment,
        images=images,
    )

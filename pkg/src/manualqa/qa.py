"""Joint question+page encoding and the two answer heads.

The question and page embeddings are concatenated into one encoder pass;
the decoder generates the answer sentence from the joint hidden states and
the region selector reads the hidden state at each region's label-marker
token. ``answer_multimodal`` shares a single encoder pass between both
heads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .features import Featurizer
from .model import Model


@dataclass(frozen=True)
class JointEncoding:
    H: np.ndarray  # [len(question)+len(page), hidden]
    marker_positions: tuple[int, ...]  # into H, one per kept region
    region_ids: tuple[str, ...]  # parallel to marker_positions
    question_len: int


@dataclass(frozen=True)
class RegionSelection:
    """Thresholded visual-part prediction plus all per-region probabilities."""

    selected: tuple[tuple[str, float], ...]  # (region_id, probability), p >= threshold
    probabilities: dict[str, float]

    def region_ids(self) -> frozenset[str]:
        return frozenset(rid for rid, _ in self.selected)


@dataclass(frozen=True)
class PredictedAnswer:
    text: str
    regions: RegionSelection

    def region_ids(self) -> frozenset[str]:
        return self.regions.region_ids()


def joint_encode(
    model: Model, featurizer: Featurizer, question: str, manual_id: str, page_index: int
) -> JointEncoding:
    """One encoder pass over [question; page]; marker positions are offset
    by the question length."""
    qf = featurizer.question(question)
    budget = model.config.max_positions - len(qf)
    if budget < 1:
        raise ValueError("question leaves no room for page tokens")
    pf = featurizer.page(manual_id, page_index, max_len=budget)
    z = np.vstack([model.embed(qf), model.embed(pf)])
    H = model.encode(z)
    page = featurizer.corpus.get_manual(manual_id).pages[page_index]
    kept = len(pf.marker_positions)
    region_ids = tuple(r.id for r in page.regions[:kept])
    markers = tuple(len(qf) + m for m in pf.marker_positions[: len(region_ids)])
    return JointEncoding(
        H=H, marker_positions=markers, region_ids=region_ids, question_len=len(qf)
    )


def _generate_text(model: Model, featurizer: Featurizer, H, max_len: int) -> str:
    vocab = featurizer.vocab
    ids = model.generate(H, max_len=max_len, eos_id=vocab.eos_id, bos_id=vocab.bos_id)
    return vocab.detokenize(ids)


def _select_regions(model: Model, enc: JointEncoding, threshold: float) -> RegionSelection:
    probs = model.region_select(enc.H, enc.marker_positions)
    probabilities = {rid: float(p) for rid, p in zip(enc.region_ids, probs)}
    selected = tuple(
        (rid, p) for rid, p in probabilities.items() if p >= threshold
    )
    return RegionSelection(selected=selected, probabilities=probabilities)


def answer_textual(
    model: Model,
    featurizer: Featurizer,
    question: str,
    manual_id: str,
    page_index: int,
    max_len: int = 32,
) -> str:
    enc = joint_encode(model, featurizer, question, manual_id, page_index)
    return _generate_text(model, featurizer, enc.H, max_len)


def answer_visual(
    model: Model,
    featurizer: Featurizer,
    question: str,
    manual_id: str,
    page_index: int,
    threshold: float = 0.5,
) -> RegionSelection:
    """Regions whose selector probability reaches the (inclusive) threshold."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must be in (0, 1)")
    enc = joint_encode(model, featurizer, question, manual_id, page_index)
    return _select_regions(model, enc, threshold)


def answer_multimodal(
    model: Model,
    featurizer: Featurizer,
    question: str,
    manual_id: str,
    page_index: int,
    threshold: float = 0.5,
    max_len: int = 32,
) -> PredictedAnswer:
    """Both heads on one shared encoder pass."""
    enc = joint_encode(model, featurizer, question, manual_id, page_index)
    text = _generate_text(model, featurizer, enc.H, max_len)
    regions = _select_regions(model, enc, threshold)
    return PredictedAnswer(text=text, regions=regions)


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------


def bce_region_loss(probabilities: np.ndarray, gold: np.ndarray) -> float:
    """Mean binary cross-entropy over regions.

    Probabilities outside (0, 1) are clamped at 1e-7 from either end.
    """
    p = np.clip(np.asarray(probabilities, dtype=np.float64), 1e-7, 1.0 - 1e-7)
    y = np.asarray(gold, dtype=np.float64)
    if p.shape != y.shape:
        raise ValueError("one probability per region required")
    if p.size == 0:
        return 0.0
    return float(-(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)).mean())


def bce_with_logits(logits: np.ndarray, gold: np.ndarray) -> tuple[float, np.ndarray]:
    """Numerically stable BCE on logits; returns (mean loss, dloss/dlogits)."""
    x = np.asarray(logits)
    y = np.asarray(gold, dtype=x.dtype)
    if x.size == 0:
        return 0.0, np.zeros_like(x)
    losses = np.maximum(x, 0) - x * y + np.log1p(np.exp(-np.abs(x)))
    dlogits = (nn.sigmoid(x) - y) / x.size
    return float(losses.mean()), dlogits

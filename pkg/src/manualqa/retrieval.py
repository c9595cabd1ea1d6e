"""Token-level late-interaction page retrieval.

Question and page are encoded separately; every token pair gets a cosine
similarity, aggregated as mean-over-one-side of max-over-the-other-side.
Ranking uses the question-to-page direction. Training applies the
symmetric in-batch InfoNCE loss on both directions at temperature ``tau``.

The page index stores, per page, the matrix of unit-normalized token
embeddings under the checkpoint hash that produced them, serialized as a
JSON header followed by raw little-endian float32 bytes (deterministic,
so rebuilding with the same checkpoint is byte-identical).
"""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .corpus import Corpus
from .features import Featurizer
from .model import Model

_IDX_MAGIC = b"MQAIDX1\n"
_NORM_TOL = 1e-6


class IndexError_(Exception):
    """Index file corrupt or inconsistent with the checkpoint in use."""


@dataclass(frozen=True)
class RetrievalConfig:
    temperature: float = 0.01
    top_k: int = 5
    mode: str = "token_interaction"  # or "global"

    def __post_init__(self) -> None:
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.mode not in ("token_interaction", "global"):
            raise ValueError(f"unknown scoring mode {self.mode!r}")


@dataclass(frozen=True)
class PageHit:
    manual_id: str
    page_index: int
    score: float


@dataclass(frozen=True)
class RetrievalResult:
    """Pages ranked by question-to-page score, best first.

    Ties break by (manual_id, page_index) ascending.
    """

    hits: tuple[PageHit, ...]

    def pages(self) -> list[tuple[str, int]]:
        return [(h.manual_id, h.page_index) for h in self.hits]


# ---------------------------------------------------------------------------
# Scoring primitives
# ---------------------------------------------------------------------------


def normalize_rows(h: np.ndarray) -> np.ndarray:
    """Unit-L2 rows; raises on a degenerate (zero-norm) embedding."""
    norms = np.linalg.norm(h, axis=-1, keepdims=True)
    if np.any(norms <= 1e-30):
        raise ValueError("zero-norm embedding row")
    return h / norms


def normalize_rows_backward(h: np.ndarray, de: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(h, axis=-1, keepdims=True)
    e = h / norms
    return (de - e * (e * de).sum(axis=-1, keepdims=True)) / norms


def score_pair(h_q: np.ndarray, h_p: np.ndarray) -> tuple[float, float, np.ndarray]:
    """Late-interaction scores between one question and one page.

    Returns (question-to-page, page-to-question, token similarity matrix).
    Rows are L2-normalized internally, so inputs may be raw hidden states.
    """
    if h_q.ndim != 2 or h_p.ndim != 2 or not len(h_q) or not len(h_p):
        raise ValueError("inputs must be non-empty [tokens, dim] matrices")
    s = normalize_rows(h_q) @ normalize_rows(h_p).T
    s_qp = float(s.max(axis=1).mean())
    s_pq = float(s.max(axis=0).mean())
    return s_qp, s_pq, s


def encode_global(h: np.ndarray) -> np.ndarray:
    """Single-vector page/question representation: mean-pool then normalize."""
    if h.ndim != 2 or not len(h):
        raise ValueError("input must be a non-empty [tokens, dim] matrix")
    g = h.mean(axis=0)
    norm = np.linalg.norm(g)
    if norm <= 1e-30:
        raise ValueError("zero-norm pooled embedding")
    return g / norm


def encode_global_backward(h: np.ndarray, dg: np.ndarray) -> np.ndarray:
    g = h.mean(axis=0)
    norm = np.linalg.norm(g)
    e = g / norm
    dpool = (dg - e * (e @ dg)) / norm
    return np.broadcast_to(dpool / len(h), h.shape).astype(h.dtype).copy()


def _diag_cross_entropy(S: np.ndarray, tau: float) -> tuple[float, np.ndarray]:
    """Mean over rows of -log softmax(S/tau) at the diagonal, plus dL/dS."""
    B = S.shape[0]
    logits = S.astype(np.float64) / tau
    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1))
    loss = float((logz - shifted[np.arange(B), np.arange(B)]).mean())
    P = np.exp(shifted - logz[:, None])
    dS = P - np.eye(B)
    dS /= tau * B
    return loss, dS


def nce_loss_pair(
    S_qp: np.ndarray, S_pq: np.ndarray, tau: float
) -> tuple[float, np.ndarray, np.ndarray]:
    """Bidirectional InfoNCE: half the sum of both directions' losses.

    Matched pairs sit on the diagonals. Returns (loss, dL/dS_qp, dL/dS_pq).
    """
    if S_qp.ndim != 2 or S_qp.shape[0] != S_qp.shape[1]:
        raise ValueError("score matrix must be square")
    if S_qp.shape != S_pq.shape:
        raise ValueError("direction matrices must have the same shape")
    loss_qp, d_qp = _diag_cross_entropy(S_qp, tau)
    loss_pq, d_pq = _diag_cross_entropy(S_pq, tau)
    return 0.5 * (loss_qp + loss_pq), 0.5 * d_qp, 0.5 * d_pq


def nce_loss(S: np.ndarray, tau: float) -> float:
    """Symmetric InfoNCE over one score matrix (rows: one direction,
    columns: the other)."""
    loss, _, _ = nce_loss_pair(S, S.T, tau)
    return loss


class TokenScoreBatch:
    """All pairwise late-interaction scores for a training batch.

    Caches the argmax positions so the NCE gradient can be pushed back to
    the individual token embeddings.
    """

    def __init__(self, E_q: Sequence[np.ndarray], E_p: Sequence[np.ndarray]):
        if len(E_q) != len(E_p):
            raise ValueError("batch sides must have equal length")
        B = len(E_q)
        self.E_q, self.E_p = list(E_q), list(E_p)
        self.S_qp = np.zeros((B, B))
        self.S_pq = np.zeros((B, B))
        self._row_arg = {}
        self._col_arg = {}
        for a in range(B):
            for b in range(B):
                m = self.E_q[a] @ self.E_p[b].T
                row_arg = m.argmax(axis=1)
                col_arg = m.argmax(axis=0)
                self._row_arg[(a, b)] = row_arg
                self._col_arg[(a, b)] = col_arg
                self.S_qp[a, b] = m[np.arange(m.shape[0]), row_arg].mean()
                # page b -> question a direction
                self.S_pq[b, a] = m[col_arg, np.arange(m.shape[1])].mean()

    def backward(
        self, dS_qp: np.ndarray, dS_pq: np.ndarray
    ) -> tuple[list[np.ndarray], list[np.ndarray]]:
        B = len(self.E_q)
        dE_q = [np.zeros_like(e) for e in self.E_q]
        dE_p = [np.zeros_like(e) for e in self.E_p]
        for a in range(B):
            for b in range(B):
                n, m = self.E_q[a].shape[0], self.E_p[b].shape[0]
                dM = np.zeros((n, m), dtype=self.E_q[a].dtype)
                g_qp = dS_qp[a, b]
                if g_qp:
                    dM[np.arange(n), self._row_arg[(a, b)]] += g_qp / n
                g_pq = dS_pq[b, a]
                if g_pq:
                    dM[self._col_arg[(a, b)], np.arange(m)] += g_pq / m
                if g_qp or g_pq:
                    dE_q[a] += dM @ self.E_p[b]
                    dE_p[b] += dM.T @ self.E_q[a]
        return dE_q, dE_p


# ---------------------------------------------------------------------------
# Page index
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IndexEntry:
    manual_id: str
    page_index: int
    matrix: np.ndarray  # [n_tokens, dim] unit rows, float32
    global_vec: Optional[np.ndarray] = None  # [dim], for global-mode scoring

    @property
    def n_tokens(self) -> int:
        return self.matrix.shape[0]


@dataclass
class PageIndex:
    checkpoint_hash: str
    entries: list[IndexEntry] = field(default_factory=list)

    def validate(self) -> None:
        for entry in self.entries:
            norms = np.linalg.norm(entry.matrix, axis=1)
            worst = float(np.abs(norms - 1.0).max()) if len(norms) else 0.0
            if worst > _NORM_TOL:
                raise IndexError_(
                    f"index entry {entry.manual_id}/{entry.page_index}: "
                    f"row norm deviates by {worst:.2e}"
                )

    def scoped(self, manual_id: Optional[str]) -> list[IndexEntry]:
        if manual_id is None:
            return self.entries
        hits = [e for e in self.entries if e.manual_id == manual_id]
        if not hits:
            raise IndexError_(f"no pages indexed for manual {manual_id!r}")
        return hits

    def _serialize(self) -> bytes:
        header = {
            "checkpoint_hash": self.checkpoint_hash,
            "entries": [
                {
                    "manual_id": e.manual_id,
                    "page_index": e.page_index,
                    "n_tokens": e.n_tokens,
                    "dim": int(e.matrix.shape[1]),
                    "has_global": e.global_vec is not None,
                }
                for e in self.entries
            ],
        }
        buf = io.BytesIO()
        buf.write(_IDX_MAGIC)
        buf.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        buf.write(b"\n")
        for e in self.entries:
            buf.write(np.ascontiguousarray(e.matrix, dtype="<f4").tobytes())
            if e.global_vec is not None:
                buf.write(np.ascontiguousarray(e.global_vec, dtype="<f4").tobytes())
        return buf.getvalue()

    def save(self, path: str | Path) -> str:
        data = self._serialize()
        Path(path).write_bytes(data)
        return hashlib.sha256(data).hexdigest()

    @classmethod
    def load(cls, path: str | Path) -> "PageIndex":
        data = Path(path).read_bytes()
        if not data.startswith(_IDX_MAGIC):
            raise IndexError_(f"{path}: bad magic")
        end = data.index(b"\n", len(_IDX_MAGIC))
        header = json.loads(data[len(_IDX_MAGIC):end].decode("utf-8"))
        entries = []
        offset = end + 1
        for meta in header["entries"]:
            n, d = meta["n_tokens"], meta["dim"]
            matrix = np.frombuffer(data, dtype="<f4", count=n * d, offset=offset).reshape(n, d)
            offset += n * d * 4
            global_vec = None
            if meta["has_global"]:
                global_vec = np.frombuffer(data, dtype="<f4", count=d, offset=offset).copy()
                offset += d * 4
            entries.append(
                IndexEntry(meta["manual_id"], meta["page_index"], matrix.copy(), global_vec)
            )
        index = cls(checkpoint_hash=header["checkpoint_hash"], entries=entries)
        index.validate()
        return index


def build_index(model: Model, featurizer: Featurizer, corpus: Corpus) -> PageIndex:
    """Encode every page of the corpus under the model's checkpoint hash."""
    entries = []
    for manual in corpus.manuals:
        for page in manual.pages:
            pf = featurizer.page(manual.id, page.index)
            h = model.encode(model.embed(pf))
            matrix = normalize_rows(h).astype(np.float32)
            # Renormalize after the float32 cast so stored rows meet the
            # norm invariant exactly as stored.
            matrix = (matrix / np.linalg.norm(matrix, axis=1, keepdims=True)).astype(np.float32)
            global_vec = encode_global(h).astype(np.float32)
            entries.append(IndexEntry(manual.id, page.index, matrix, global_vec))
    index = PageIndex(checkpoint_hash=model.fingerprint(), entries=entries)
    index.validate()
    return index


def score_question_against_entry(
    e_q: np.ndarray, entry: IndexEntry, mode: str = "token_interaction"
) -> float:
    """Question-to-page score given pre-normalized question rows."""
    if mode == "token_interaction":
        s = e_q @ entry.matrix.T
        return float(s.max(axis=1).mean())
    if entry.global_vec is None:
        raise IndexError_("index has no global vectors; rebuild it")
    g_q = encode_global(e_q)
    return float(g_q @ entry.global_vec)


def retrieve(
    question: str,
    model: Model,
    featurizer: Featurizer,
    index: PageIndex,
    top_k: int,
    scope: Optional[str] = None,
    mode: str = "token_interaction",
) -> RetrievalResult:
    """Rank pages (within one manual, or the whole index) for a question."""
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    qf = featurizer.question(question)
    h_q = model.encode(model.embed(qf))
    e_q = normalize_rows(h_q)
    scored = [
        (score_question_against_entry(e_q, entry, mode), entry)
        for entry in index.scoped(scope)
    ]
    scored.sort(key=lambda t: (-t[0], t[1].manual_id, t[1].page_index))
    hits = tuple(
        PageHit(entry.manual_id, entry.page_index, score) for score, entry in scored[:top_k]
    )
    return RetrievalResult(hits=hits)

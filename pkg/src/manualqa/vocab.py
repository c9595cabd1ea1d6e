"""Word-and-character subword vocabulary.

Pieces come in two namespaces: word-initial pieces stored verbatim and
continuation pieces serialized with a ``##`` prefix. The inventory always
contains every single character seen in the corpus (in both namespaces),
so corpus text tokenizes with full coverage; frequent whole words are
added on top until ``target_size``. Detokenization joins continuation
pieces without a space, which makes the round trip exact up to whitespace
normalization for any text built from inventory characters.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from pathlib import Path

from .corpus import Corpus, SemanticLabel

PAD = "<pad>"
UNK = "<unk>"
EOS = "</s>"
BOS = "<s>"

LABEL_MARKERS = {
    SemanticLabel.TEXT: "<Text>",
    SemanticLabel.TITLE: "<Title>",
    SemanticLabel.PRODUCT_IMAGE: "<ProductImage>",
    SemanticLabel.ILLUSTRATION: "<Illustration>",
    SemanticLabel.TABLE: "<Table>",
    SemanticLabel.GRAPHIC: "<Graphic>",
}

_CORE_SPECIALS = (PAD, UNK, EOS, BOS)
_CONT = "##"


class Vocabulary:
    """Immutable piece inventory with id<->piece bijection."""

    def __init__(self, pieces: list[str]):
        self.pieces = list(pieces)
        self._piece_to_id = {p: i for i, p in enumerate(self.pieces)}
        if len(self._piece_to_id) != len(self.pieces):
            raise ValueError("duplicate pieces in vocabulary")
        for special in _CORE_SPECIALS + tuple(LABEL_MARKERS.values()):
            if special not in self._piece_to_id:
                raise ValueError(f"vocabulary missing special token {special}")
        self.pad_id = self._piece_to_id[PAD]
        self.unk_id = self._piece_to_id[UNK]
        self.eos_id = self._piece_to_id[EOS]
        self.bos_id = self._piece_to_id[BOS]
        self.marker_ids = {
            label: self._piece_to_id[tok] for label, tok in LABEL_MARKERS.items()
        }
        self._special_ids = frozenset(
            (self.pad_id, self.unk_id, self.eos_id, self.bos_id, *self.marker_ids.values())
        )
        # Word-initial and continuation lookup tables.
        self._initial: dict[str, int] = {}
        self._cont: dict[str, int] = {}
        for i, piece in enumerate(self.pieces):
            if i in self._special_ids:
                continue
            if piece.startswith(_CONT):
                self._cont[piece[len(_CONT):]] = i
            else:
                self._initial[piece] = i

    def __len__(self) -> int:
        return len(self.pieces)

    def is_special(self, token_id: int) -> bool:
        return token_id in self._special_ids

    def marker_id(self, label: SemanticLabel) -> int:
        return self.marker_ids[label]

    def id_of(self, piece: str) -> int:
        return self._piece_to_id[piece]

    # -- encoding ----------------------------------------------------------

    def _encode_word(self, word: str, out: list[int]) -> None:
        if word in self._initial:
            out.append(self._initial[word])
            return
        pos = 0
        table = self._initial
        while pos < len(word):
            end = len(word)
            matched = False
            while end > pos:
                pid = table.get(word[pos:end])
                if pid is not None:
                    out.append(pid)
                    pos = end
                    matched = True
                    break
                end -= 1
            if not matched:
                out.append(self.unk_id)
                pos += 1
            table = self._cont

    def tokenize(self, text: str) -> list[int]:
        """Whitespace-split then greedy longest-match segmentation."""
        ids: list[int] = []
        for word in text.split():
            self._encode_word(word, ids)
        return ids

    def detokenize(self, ids: list[int]) -> str:
        """Inverse of tokenize up to whitespace normalization; drops specials."""
        parts: list[str] = []
        for i in ids:
            if self.is_special(int(i)):
                continue
            piece = self.pieces[int(i)]
            if piece.startswith(_CONT) and parts:
                parts[-1] += piece[len(_CONT):]
            elif piece.startswith(_CONT):
                parts.append(piece[len(_CONT):])
            else:
                parts.append(piece)
        return " ".join(parts)

    # -- persistence ---------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "pieces": self.pieces,
            "specials": {
                "pad": PAD,
                "unk": UNK,
                "eos": EOS,
                "bos": BOS,
                "markers": {label.value: tok for label, tok in LABEL_MARKERS.items()},
            },
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True, indent=2) + "\n",
            encoding="utf-8",
        )

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(raw["pieces"])

    def fingerprint(self) -> str:
        payload = json.dumps(self.pieces, ensure_ascii=False).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()


def _corpus_texts(corpus: Corpus):
    for manual in corpus.manuals:
        yield manual.brand
        yield manual.category
        for page in manual.pages:
            for region in page.regions:
                for word in region.words:
                    yield word.text
        for qa in manual.qas:
            yield qa.question
            yield qa.answer.text


def build_vocab(corpus: Corpus, target_size: int = 512) -> Vocabulary:
    """Frequency-ranked word pieces over a full character inventory.

    The character inventory (both namespaces) plus specials is always
    included, even if that alone exceeds ``target_size``: coverage of the
    corpus beats the size budget.
    """
    if target_size < 64:
        raise ValueError("target_size must be >= 64")
    word_freq: Counter = Counter()
    chars: set[str] = set()
    for text in _corpus_texts(corpus):
        for word in text.split():
            word_freq[word] += 1
            chars.update(word)
    if not word_freq:
        raise ValueError("corpus contains no text")

    specials = list(_CORE_SPECIALS) + [LABEL_MARKERS[l] for l in SemanticLabel]
    pieces = list(specials)
    seen = set(pieces)
    for ch in sorted(chars):
        for form in (ch, _CONT + ch):
            if form not in seen:
                pieces.append(form)
                seen.add(form)

    reserved = set(specials)
    candidates = sorted(word_freq.items(), key=lambda kv: (-kv[1], kv[0]))
    for word, _freq in candidates:
        if len(pieces) >= target_size:
            break
        if len(word) < 2 or word in seen or word in reserved or word.startswith(_CONT):
            continue
        pieces.append(word)
        seen.add(word)
    return Vocabulary(pieces)

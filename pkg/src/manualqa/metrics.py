"""Corpus-level text generation metrics.

All metrics share one normalization: lowercase, punctuation split into
separate tokens, applied identically to hypotheses and references.

Conventions (documented where the underlying definitions leave room):

* BLEU4 - clipped n-gram precision aggregated over the corpus, uniform
  1-4 gram weights, brevity penalty, no smoothing; precision denominators
  are ``max(1, count)`` so hypotheses shorter than n contribute zero for
  that order.
* ROUGE-L - per-pair LCS F-measure with beta = 1.2, averaged over pairs
  (the form used by the captioning evaluation suites).
* METEOR-lite - exact + Porter-stem matching stages only; classic
  parameters Fmean = 10PR/(R+9P), penalty 0.5*(chunks/matches)^3.
* CIDEr - plain (non-D) formulation: average over 1-4 grams of tf-idf
  cosine, times 10; idf comes from the evaluated reference corpus.
"""

from __future__ import annotations

import math
import re
from collections import Counter, defaultdict
from typing import Sequence

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


def normalize_text(text: str) -> list[str]:
    """Lowercase and split words and punctuation marks into tokens."""
    return _TOKEN_RE.findall(text.lower())


def _as_ref_lists(references: Sequence) -> list[list[list[str]]]:
    """Each reference item may be one string or a list of alternatives."""
    out = []
    for ref in references:
        alts = [ref] if isinstance(ref, str) else list(ref)
        out.append([normalize_text(a) for a in alts])
    return out


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _check_parallel(hypotheses, references) -> None:
    if len(hypotheses) != len(references):
        raise ValueError("hypotheses and references must be parallel")
    if not hypotheses:
        raise ValueError("nothing to score")


# ---------------------------------------------------------------------------
# BLEU4
# ---------------------------------------------------------------------------


def bleu4(hypotheses: Sequence[str], references: Sequence) -> float:
    _check_parallel(hypotheses, references)
    refs = _as_ref_lists(references)
    matched = [0] * 4
    total = [0] * 4
    hyp_len = 0
    ref_len = 0
    for hyp_text, alts in zip(hypotheses, refs):
        hyp = normalize_text(hyp_text)
        hyp_len += len(hyp)
        # closest reference length, shorter wins ties
        ref_len += min((abs(len(a) - len(hyp)), len(a)) for a in alts)[1]
        for n in range(1, 5):
            grams = _ngrams(hyp, n)
            total[n - 1] += max(sum(grams.values()), 0)
            if not grams:
                continue
            clip: Counter = Counter()
            for alt in alts:
                for gram, count in _ngrams(alt, n).items():
                    clip[gram] = max(clip[gram], count)
            matched[n - 1] += sum(min(c, clip[g]) for g, c in grams.items())
    if min(matched) == 0:
        return 0.0
    log_prec = sum(math.log(m / max(1, t)) for m, t in zip(matched, total)) / 4.0
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / max(1, hyp_len))
    return bp * math.exp(log_prec)


# ---------------------------------------------------------------------------
# ROUGE-L
# ---------------------------------------------------------------------------


def _lcs_len(a: list[str], b: list[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, 1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[-1]))
        prev = cur
    return prev[-1]


def rouge_l(hypotheses: Sequence[str], references: Sequence, beta: float = 1.2) -> float:
    _check_parallel(hypotheses, references)
    refs = _as_ref_lists(references)
    scores = []
    for hyp_text, alts in zip(hypotheses, refs):
        hyp = normalize_text(hyp_text)
        best = 0.0
        for alt in alts:
            lcs = _lcs_len(hyp, alt)
            if lcs == 0:
                continue
            p = lcs / len(hyp)
            r = lcs / len(alt)
            best = max(best, (1 + beta**2) * p * r / (r + beta**2 * p))
        scores.append(best)
    return sum(scores) / len(scores)


# ---------------------------------------------------------------------------
# METEOR-lite
# ---------------------------------------------------------------------------

_VOWELS = "aeiou"


def _is_consonant(word: str, i: int) -> bool:
    ch = word[i]
    if ch in _VOWELS:
        return False
    if ch == "y":
        return i == 0 or not _is_consonant(word, i - 1)
    return True


def _measure(stem: str) -> int:
    """Number of VC sequences in [C](VC)^m[V]."""
    forms = "".join("c" if _is_consonant(stem, i) else "v" for i in range(len(stem)))
    return len(re.findall("vc", forms.replace("cc", "c").replace("vv", "v")))


def _contains_vowel(stem: str) -> bool:
    return any(not _is_consonant(stem, i) for i in range(len(stem)))


def _ends_double_consonant(word: str) -> bool:
    return (
        len(word) >= 2
        and word[-1] == word[-2]
        and _is_consonant(word, len(word) - 1)
    )


def _ends_cvc(word: str) -> bool:
    if len(word) < 3:
        return False
    if not (
        _is_consonant(word, len(word) - 3)
        and not _is_consonant(word, len(word) - 2)
        and _is_consonant(word, len(word) - 1)
    ):
        return False
    return word[-1] not in "wxy"


def porter_stem(word: str) -> str:
    """Classic Porter stemming; used by the METEOR-lite stem stage."""
    w = word.lower()
    if len(w) <= 2:
        return w

    # step 1a
    if w.endswith("sses"):
        w = w[:-2]
    elif w.endswith("ies"):
        w = w[:-2]
    elif w.endswith("ss"):
        pass
    elif w.endswith("s"):
        w = w[:-1]

    # step 1b
    if w.endswith("eed"):
        if _measure(w[:-3]) > 0:
            w = w[:-1]
    else:
        flag = False
        if w.endswith("ed") and _contains_vowel(w[:-2]):
            w, flag = w[:-2], True
        elif w.endswith("ing") and _contains_vowel(w[:-3]):
            w, flag = w[:-3], True
        if flag:
            if w.endswith(("at", "bl", "iz")):
                w += "e"
            elif _ends_double_consonant(w) and not w.endswith(("l", "s", "z")):
                w = w[:-1]
            elif _measure(w) == 1 and _ends_cvc(w):
                w += "e"

    # step 1c
    if w.endswith("y") and _contains_vowel(w[:-1]):
        w = w[:-1] + "i"

    step2 = [
        ("ational", "ate"), ("tional", "tion"), ("enci", "ence"), ("anci", "ance"),
        ("izer", "ize"), ("abli", "able"), ("alli", "al"), ("entli", "ent"),
        ("eli", "e"), ("ousli", "ous"), ("ization", "ize"), ("ation", "ate"),
        ("ator", "ate"), ("alism", "al"), ("iveness", "ive"), ("fulness", "ful"),
        ("ousness", "ous"), ("aliti", "al"), ("iviti", "ive"), ("biliti", "ble"),
    ]
    for suffix, repl in step2:
        if w.endswith(suffix):
            if _measure(w[: -len(suffix)]) > 0:
                w = w[: -len(suffix)] + repl
            break

    step3 = [
        ("icate", "ic"), ("ative", ""), ("alize", "al"), ("iciti", "ic"),
        ("ical", "ic"), ("ful", ""), ("ness", ""),
    ]
    for suffix, repl in step3:
        if w.endswith(suffix):
            if _measure(w[: -len(suffix)]) > 0:
                w = w[: -len(suffix)] + repl
            break

    step4 = [
        "al", "ance", "ence", "er", "ic", "able", "ible", "ant", "ement",
        "ment", "ent", "ion", "ou", "ism", "ate", "iti", "ous", "ive", "ize",
    ]
    for suffix in step4:
        if w.endswith(suffix):
            stem = w[: -len(suffix)]
            if _measure(stem) > 1:
                if suffix == "ion" and not stem.endswith(("s", "t")):
                    break
                w = stem
            break

    # step 5a
    if w.endswith("e"):
        stem = w[:-1]
        m = _measure(stem)
        if m > 1 or (m == 1 and not _ends_cvc(stem)):
            w = stem

    # step 5b
    if _measure(w) > 1 and _ends_double_consonant(w) and w.endswith("l"):
        w = w[:-1]
    return w


def _align(hyp: list[str], ref: list[str]) -> list[tuple[int, int]]:
    """Greedy leftmost matching: exact stage first, then stemmed."""
    matches: list[tuple[int, int]] = []
    hyp_used = [False] * len(hyp)
    ref_used = [False] * len(ref)
    for stage in (lambda t: t, porter_stem):
        ref_keys = [stage(t) for t in ref]
        for i, tok in enumerate(hyp):
            if hyp_used[i]:
                continue
            key = stage(tok)
            for j, rkey in enumerate(ref_keys):
                if not ref_used[j] and key == rkey:
                    matches.append((i, j))
                    hyp_used[i] = True
                    ref_used[j] = True
                    break
    return sorted(matches)


def _chunks(matches: list[tuple[int, int]]) -> int:
    chunks = 0
    prev = None
    for i, j in matches:
        if prev is None or i != prev[0] + 1 or j != prev[1] + 1:
            chunks += 1
        prev = (i, j)
    return chunks


def meteor_lite(hypotheses: Sequence[str], references: Sequence) -> float:
    _check_parallel(hypotheses, references)
    refs = _as_ref_lists(references)
    scores = []
    for hyp_text, alts in zip(hypotheses, refs):
        hyp = normalize_text(hyp_text)
        best = 0.0
        for alt in alts:
            if not hyp or not alt:
                continue
            matches = _align(hyp, alt)
            m = len(matches)
            if m == 0:
                continue
            p = m / len(hyp)
            r = m / len(alt)
            fmean = 10.0 * p * r / (r + 9.0 * p)
            penalty = 0.5 * (_chunks(matches) / m) ** 3
            best = max(best, fmean * (1.0 - penalty))
        scores.append(best)
    return sum(scores) / len(scores)


# ---------------------------------------------------------------------------
# CIDEr
# ---------------------------------------------------------------------------


def cider(hypotheses: Sequence[str], references: Sequence) -> float:
    _check_parallel(hypotheses, references)
    refs = _as_ref_lists(references)
    n_docs = len(refs)

    # document frequency over the reference corpus, per n-gram order
    df: list[defaultdict] = [defaultdict(int) for _ in range(4)]
    for alts in refs:
        for n in range(1, 5):
            seen = set()
            for alt in alts:
                seen.update(_ngrams(alt, n).keys())
            for gram in seen:
                df[n - 1][gram] += 1
    log_docs = math.log(max(1, n_docs))

    def tfidf(tokens: list[str], n: int) -> tuple[dict, float]:
        vec = {}
        for gram, count in _ngrams(tokens, n).items():
            idf = log_docs - math.log(max(1.0, df[n - 1][gram]))
            vec[gram] = count * idf
        norm = math.sqrt(sum(v * v for v in vec.values()))
        return vec, norm

    scores = []
    for hyp_text, alts in zip(hypotheses, refs):
        hyp = normalize_text(hyp_text)
        hyp_vecs = [tfidf(hyp, n) for n in range(1, 5)]
        per_ref = []
        for alt in alts:
            sim = 0.0
            for n in range(1, 5):
                hvec, hnorm = hyp_vecs[n - 1]
                rvec, rnorm = tfidf(alt, n)
                if hnorm == 0 or rnorm == 0:
                    continue
                dot = sum(v * rvec.get(g, 0.0) for g, v in hvec.items())
                sim += dot / (hnorm * rnorm)
            per_ref.append(sim / 4.0)
        scores.append(10.0 * sum(per_ref) / len(per_ref))
    return sum(scores) / len(scores)

"""Multitask training: retrieval NCE + answer NLL + region BCE, unweighted.

Each step computes the enabled losses on one batch — retrieval over
separately encoded questions/pages with in-batch negatives, answer
generation and region selection over one shared joint encoding per pair —
accumulates all gradients, and applies a single optimizer update. Training
only ever sees single-page questions (the multi-page ones are filtered
out); epoch order is shuffled deterministically from the seed.
"""

from __future__ import annotations

import dataclasses
import json
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np

from . import qa as qa_mod
from .corpus import Corpus, QAPair, filter_single_page_qas, split_view
from .evaluation import MetricReport, evaluate_split
from .features import Featurizer
from .model import Model, ModelConfig
from .nn import AdamW
from .retrieval import (
    TokenScoreBatch,
    encode_global,
    encode_global_backward,
    nce_loss_pair,
    normalize_rows,
    normalize_rows_backward,
)
from .vocab import Vocabulary, build_vocab


class TrainingError(Exception):
    """Raised when optimization cannot continue (e.g. non-finite loss)."""


_METRIC_KEYS = {
    "r1": ("retrieval", "recall@1"),
    "r3": ("retrieval", "recall@3"),
    "r5": ("retrieval", "recall@5"),
    "bleu4": ("text", "bleu4"),
    "rougeL": ("text", "rouge_l"),
    "meteor": ("text", "meteor_lite"),
    "cider": ("text", "cider"),
    "f1": ("regions", "f1"),
}


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 8
    learning_rate: float = 3e-5
    tau: float = 0.01
    seed: int = 0
    pr: bool = True
    pr_global: bool = False
    ta: bool = True
    va: bool = True
    profile: str = "tiny"
    checkpoint_dir: Optional[str] = None
    selection_metric: str = "r1+rougeL+f1"
    weight_decay: float = 0.01
    vocab_size: int = 512
    max_answer_len: int = 32
    threshold: float = 0.5
    max_steps: Optional[int] = None  # cap on optimizer steps (overfit budgets)
    val_split: str = "val"  # overfit harnesses select on "train"
    eval_every: int = 1  # epochs between validation evaluations
    va_detached: bool = False  # isolate the selector head from the encoder

    def __post_init__(self) -> None:
        if not (self.pr or self.pr_global or self.ta or self.va):
            raise ValueError("at least one task flag must be enabled")
        if self.pr and self.pr_global:
            raise ValueError("pr and pr_global are mutually exclusive")
        if self.profile not in ("tiny", "base"):
            raise ValueError(f"unknown model profile {self.profile!r}")
        for key in self.selection_metric.split("+"):
            if key not in _METRIC_KEYS:
                raise ValueError(f"unknown selection metric component {key!r}")

    @property
    def retrieval_enabled(self) -> bool:
        return self.pr or self.pr_global

    @property
    def retrieval_mode(self) -> str:
        return "global" if self.pr_global else "token_interaction"

    def eval_tasks(self) -> tuple[str, ...]:
        tasks = []
        if self.retrieval_enabled:
            tasks.append("retrieval")
        if self.ta:
            tasks.append("text")
        if self.va:
            tasks.append("regions")
        return tuple(tasks)

    # -- flat key=value config files ------------------------------------------

    def to_file(self, path: str | Path) -> None:
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            lines.append(f"{f.name} = {'' if value is None else value}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def from_mapping(cls, mapping: dict[str, str], **overrides) -> "TrainConfig":
        kwargs = {}
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        for key, raw in mapping.items():
            if key not in types:
                raise ValueError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(raw, types[key], key)
        kwargs.update(overrides)
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str | Path, **overrides) -> "TrainConfig":
        mapping = {}
        for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{line_no}: expected 'key = value'")
            key, _, value = line.partition("=")
            mapping[key.strip()] = value.strip()
        return cls.from_mapping(mapping, **overrides)


def _coerce(raw: str, type_name: str, key: str):
    raw = raw.strip()
    if raw == "" or raw.lower() == "none":
        return None
    if "bool" in type_name:
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"config key {key!r}: expected boolean, got {raw!r}")
    if "int" in type_name:
        return int(raw)
    if "float" in type_name:
        return float(raw)
    return raw


# ---------------------------------------------------------------------------
# Batching
# ---------------------------------------------------------------------------


def make_batches(
    corpus: Corpus, batch_size: int, seed: int, epoch: int = 0
) -> Iterator[list[tuple[str, QAPair]]]:
    """Deterministically shuffled (manual_id, qa) batches, each QA once.

    Requires a split already filtered to single-page questions.
    """
    items = [(manual.id, qa_pair) for manual, qa_pair in corpus.iter_qas()]
    if not items:
        raise TrainingError("empty split: no QA pairs to train on")
    for _, qa_pair in items:
        if len(qa_pair.relevant_pages) != 1:
            raise TrainingError(f"qa {qa_pair.id}: training requires single-page questions")
    order = np.random.default_rng([seed, epoch]).permutation(len(items))
    for start in range(0, len(items), batch_size):
        yield [items[i] for i in order[start : start + batch_size]]


# ---------------------------------------------------------------------------
# One optimization step
# ---------------------------------------------------------------------------


def _pr_token_loss(model, featurizer, batch, tau, train, rng):
    encoded = []
    for manual_id, qa_pair in batch:
        page_idx = next(iter(qa_pair.relevant_pages))
        qf = featurizer.question(qa_pair.question)
        pf = featurizer.page(manual_id, page_idx)
        z_q, z_p = model.embed(qf), model.embed(pf)
        h_q, c_q = model.encode_with_cache(z_q, train=train, rng=rng)
        h_p, c_p = model.encode_with_cache(z_p, train=train, rng=rng)
        encoded.append((qf, pf, c_q, c_p, h_q, h_p))
    scores = TokenScoreBatch(
        [normalize_rows(e[4]) for e in encoded], [normalize_rows(e[5]) for e in encoded]
    )
    loss, dS_qp, dS_pq = nce_loss_pair(scores.S_qp, scores.S_pq, tau)
    dE_q, dE_p = scores.backward(dS_qp, dS_pq)
    for (qf, pf, c_q, c_p, h_q, h_p), de_q, de_p in zip(encoded, dE_q, dE_p):
        dh_q = normalize_rows_backward(h_q, de_q.astype(h_q.dtype))
        model.embed_backward(qf, model.encode_backward(c_q, dh_q))
        dh_p = normalize_rows_backward(h_p, de_p.astype(h_p.dtype))
        model.embed_backward(pf, model.encode_backward(c_p, dh_p))
    return loss


def _pr_global_loss(model, featurizer, batch, tau, train, rng):
    encoded = []
    for manual_id, qa_pair in batch:
        page_idx = next(iter(qa_pair.relevant_pages))
        qf = featurizer.question(qa_pair.question)
        pf = featurizer.page(manual_id, page_idx)
        h_q, c_q = model.encode_with_cache(model.embed(qf), train=train, rng=rng)
        h_p, c_p = model.encode_with_cache(model.embed(pf), train=train, rng=rng)
        encoded.append((qf, pf, c_q, c_p, h_q, h_p))
    G_q = np.stack([encode_global(e[4]) for e in encoded])
    G_p = np.stack([encode_global(e[5]) for e in encoded])
    S = G_q @ G_p.T
    loss, dS_qp, dS_pq = nce_loss_pair(S, S.T, tau)
    dS = dS_qp + dS_pq.T
    dG_q = dS @ G_p
    dG_p = dS.T @ G_q
    for i, (qf, pf, c_q, c_p, h_q, h_p) in enumerate(encoded):
        dh_q = encode_global_backward(h_q, dG_q[i].astype(h_q.dtype))
        model.embed_backward(qf, model.encode_backward(c_q, dh_q))
        dh_p = encode_global_backward(h_p, dG_p[i].astype(h_p.dtype))
        model.embed_backward(pf, model.encode_backward(c_p, dh_p))
    return loss


def _qa_losses(model, featurizer, batch, config, train, rng):
    vocab = featurizer.vocab
    B = len(batch)
    ta_sum = 0.0
    va_sum = 0.0
    for manual_id, qa_pair in batch:
        page_idx = next(iter(qa_pair.relevant_pages))
        qf = featurizer.question(qa_pair.question)
        budget = model.config.max_positions - len(qf)
        pf = featurizer.page(manual_id, page_idx, max_len=budget)
        z = np.vstack([model.embed(qf), model.embed(pf)])
        H, cache = model.encode_with_cache(z, train=train, rng=rng)
        dH = np.zeros_like(H)
        if config.ta:
            targets = vocab.tokenize(qa_pair.answer.text) + [vocab.eos_id]
            loss_i, dec_cache = model.decode_loss(H, targets, bos_id=vocab.bos_id)
            ta_sum += loss_i
            dH += model.decode_loss_backward(dec_cache, scale=1.0 / B)
        if config.va:
            page = featurizer.corpus.get_manual(manual_id).pages[page_idx]
            kept = min(len(pf.marker_positions), len(page.regions))
            markers = [len(qf) + m for m in pf.marker_positions[:kept]]
            gold = np.array(
                [
                    1.0 if page.regions[i].id in qa_pair.answer.region_ids else 0.0
                    for i in range(kept)
                ],
                dtype=H.dtype,
            )
            logits, head_cache = model.region_logits(H, markers)
            loss_i, dlogits = qa_mod.bce_with_logits(logits, gold)
            va_sum += loss_i
            if not config.va_detached:
                dH += model.region_logits_backward(head_cache, (dlogits / B).astype(H.dtype))
            else:
                model.region_logits_backward(head_cache, (dlogits / B).astype(H.dtype))
                dH = dH  # encoder isolated from the selector head
        dz = model.encode_backward(cache, dH)
        model.embed_backward(qf, dz[: len(qf)])
        model.embed_backward(pf, dz[len(qf):])
    return ta_sum / B, va_sum / B


def train_step(
    batch: Sequence[tuple[str, QAPair]],
    model: Model,
    featurizer: Featurizer,
    optimizer: AdamW,
    config: TrainConfig,
    rng: Optional[np.random.Generator] = None,
) -> dict[str, float]:
    """Compute enabled losses, backprop them all, apply one update.

    Returns the per-component losses plus ``total``, which is exactly the
    float sum of the reported components.
    """
    optimizer.zero_grad()
    train_mode = model.config.dropout > 0
    losses: dict[str, float] = {}
    if config.pr:
        losses["pr"] = _pr_token_loss(model, featurizer, batch, config.tau, train_mode, rng)
    elif config.pr_global:
        losses["pr"] = _pr_global_loss(model, featurizer, batch, config.tau, train_mode, rng)
    if config.ta or config.va:
        ta, va = _qa_losses(model, featurizer, batch, config, train_mode, rng)
        if config.ta:
            losses["ta"] = ta
        if config.va:
            losses["va"] = va
    total = sum(losses.values())
    if not np.isfinite(total):
        raise TrainingError(f"non-finite loss at step {optimizer.t + 1}: {losses}")
    optimizer.step()
    losses["total"] = total
    return losses


# ---------------------------------------------------------------------------
# Full training run
# ---------------------------------------------------------------------------


@dataclass
class TrainResult:
    model: Model
    vocab: Vocabulary
    featurizer: Featurizer
    config: TrainConfig
    history: list[dict] = field(default_factory=list)
    step_losses: list[dict[str, float]] = field(default_factory=list)
    best_epoch: int = -1
    checkpoint_path: Optional[Path] = None
    steps: int = 0


def _selection_value(report: MetricReport, config: TrainConfig) -> float:
    payload = report.to_dict()
    value = 0.0
    for key in config.selection_metric.split("+"):
        section, name = _METRIC_KEYS[key]
        if section == "regions":
            value += payload.get("regions", {}).get("f1", 0.0)
        else:
            value += payload.get(section, {}).get(name, 0.0)
    return value


def fit(
    corpus: Corpus,
    config: TrainConfig,
    vocab: Optional[Vocabulary] = None,
    verbose: bool = False,
) -> TrainResult:
    """Train on the train split, select the checkpoint that scores best on
    the validation split, and return it."""
    filtered = filter_single_page_qas(corpus)
    train_view = split_view(filtered, "train")
    if train_view.n_qas == 0:
        raise TrainingError("train split has no single-page QA pairs")
    val_view = split_view(corpus, config.val_split)
    if vocab is None:
        vocab = build_vocab(train_view, target_size=config.vocab_size)

    if config.profile == "base":
        model_config = ModelConfig.base(len(vocab))
    else:
        model_config = ModelConfig.tiny(len(vocab))
    model = Model(model_config, seed=config.seed)
    model.vocab_hash = vocab.fingerprint()
    featurizer = Featurizer(corpus, vocab)
    optimizer = AdamW(
        model.parameters(), lr=config.learning_rate, weight_decay=config.weight_decay
    )
    rng = np.random.default_rng([config.seed, 0xD07])

    ckpt_dir = Path(config.checkpoint_dir) if config.checkpoint_dir else Path(tempfile.mkdtemp())
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    vocab.save(ckpt_dir / "vocab.json")
    best_path = ckpt_dir / "best.ckpt"
    log_path = ckpt_dir / "train_log.jsonl"

    result = TrainResult(
        model=model, vocab=vocab, featurizer=featurizer, config=config, checkpoint_path=best_path
    )
    best_value = -np.inf
    step = 0
    done = False
    with log_path.open("w", encoding="utf-8") as log:
        for epoch in range(config.epochs):
            epoch_losses: dict[str, list[float]] = {}
            for batch in make_batches(train_view, config.batch_size, config.seed, epoch):
                losses = train_step(batch, model, featurizer, optimizer, config, rng)
                result.step_losses.append(losses)
                for key, value in losses.items():
                    epoch_losses.setdefault(key, []).append(value)
                step += 1
                if config.max_steps is not None and step >= config.max_steps:
                    done = True
                    break
            mean_losses = {k: float(np.mean(v)) for k, v in epoch_losses.items()}
            is_eval_epoch = (
                done or epoch == config.epochs - 1 or (epoch + 1) % config.eval_every == 0
            )
            record: dict = {"epoch": epoch, "step": step, "losses": mean_losses}
            if is_eval_epoch and val_view.n_qas > 0:
                report = evaluate_split(
                    model,
                    featurizer,
                    val_view,
                    setting="separate",
                    tasks=config.eval_tasks(),
                    retrieval_mode=config.retrieval_mode,
                    threshold=config.threshold,
                    max_answer_len=config.max_answer_len,
                )
                value = _selection_value(report, config)
                record["val"] = report.to_dict()
                record["selection"] = value
                if value > best_value:
                    best_value = value
                    result.best_epoch = epoch
                    model.save_checkpoint(best_path, vocab_hash=vocab.fingerprint(), step=step)
            log.write(json.dumps(record, sort_keys=True) + "\n")
            result.history.append(record)
            if verbose:
                print(f"epoch {epoch}: {mean_losses} selection={record.get('selection')}")
            if done:
                break

    result.steps = step
    if result.best_epoch < 0:
        # no validation data: keep the final parameters
        model.save_checkpoint(best_path, vocab_hash=vocab.fingerprint(), step=step)
        result.best_epoch = len(result.history) - 1
    best_model, _ = Model.load_checkpoint(best_path, expected_vocab_hash=vocab.fingerprint())
    result.model = best_model
    return result

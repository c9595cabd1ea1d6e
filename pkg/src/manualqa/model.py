"""Shared encoder, autoregressive decoder, and region-selector head.

The encoder consumes assembled input embeddings (token+segment for
questions, plus layout-position and projected-ROI summands for pages) and
is used two ways: question and page encoded separately for retrieval, or
concatenated for joint question answering. The decoder generates the
textual answer from the joint hidden states; the region head reads the
hidden state at each region's label-marker token.

Input embeddings follow the additive scheme exactly; token-order
information is injected inside the stacks via a learned 1D position table
(``pos1d``), which a from-scratch model needs because the additive scheme
itself carries no sequence order.

Checkpoints are a single file: magic line, JSON header (config, vocab
hash, step, array manifest), then the arrays' raw little-endian float32
bytes in manifest order. Serialization is byte-deterministic. Models
running in float64 (used by gradient checks) lose precision when saved,
so the bitwise save/load round trip is guaranteed for float32 models.
"""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import nn
from .features import (
    COORD_GRID,
    ROI_DIM,
    EmbeddingTables,
    PageFeatures,
    QuestionFeatures,
    assemble_embeddings,
    layout_buckets,
)

_MAGIC = b"MQACKPT1\n"


class CheckpointError(Exception):
    """Raised when a checkpoint cannot be read or does not match."""


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    hidden_dim: int = 64
    n_layers: int = 2
    n_heads: int = 4
    feedforward_dim: int = 128
    dropout: float = 0.0
    max_positions: int = 512
    roi_dim: int = ROI_DIM
    init_std: float = 0.02
    dtype: str = "float32"

    def __post_init__(self) -> None:
        if self.hidden_dim % self.n_heads:
            raise ValueError("hidden_dim must be divisible by n_heads")

    @classmethod
    def tiny(cls, vocab_size: int, **overrides) -> "ModelConfig":
        return cls(vocab_size=vocab_size, **overrides)

    @classmethod
    def base(cls, vocab_size: int, **overrides) -> "ModelConfig":
        """Full-scale profile; needs pretrained initialization and a GPU to be useful."""
        defaults = dict(hidden_dim=768, n_layers=12, n_heads=12, feedforward_dim=3072)
        defaults.update(overrides)
        return cls(vocab_size=vocab_size, **defaults)

    def np_dtype(self):
        return np.dtype(self.dtype)

    def to_dict(self) -> dict:
        return asdict(self)


class Model:
    """All parameters plus forward/backward passes for the three heads."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        dt = config.np_dtype()
        rng = np.random.default_rng(seed)
        std = config.init_std
        d = config.hidden_dim

        self.tok = nn.normal_param("emb.token", rng, (config.vocab_size, d), std, dt)
        self.seg = nn.normal_param("emb.segment", rng, (2, d), std, dt)
        grid = COORD_GRID + 1
        self.pos2d = {
            name: nn.normal_param(f"emb.pos_{name}", rng, (grid, d), std, dt)
            for name in ("x0", "y0", "x1", "y1", "w", "h")
        }
        # Fan-in-scaled init: roi_proj is a projection of a dense feature
        # vector, not an embedding lookup, so its output must not dwarf the
        # token summand.
        self.roi_proj = nn.normal_param(
            "emb.roi_proj", rng, (config.roi_dim, d), std / np.sqrt(config.roi_dim), dt
        )
        self.pos1d = nn.normal_param("emb.pos1d", rng, (config.max_positions, d), std, dt)

        mk = lambda name: nn.EncoderBlock(
            name, d, config.n_heads, config.feedforward_dim, rng, dt, std, config.dropout
        )
        self.enc_blocks = [mk(f"enc.{i}") for i in range(config.n_layers)]
        self.enc_ln = nn.LayerNorm("enc.ln_f", d, dt)
        self.dec_blocks = [
            nn.DecoderBlock(
                f"dec.{i}", d, config.n_heads, config.feedforward_dim, rng, dt, std, config.dropout
            )
            for i in range(config.n_layers)
        ]
        self.dec_ln = nn.LayerNorm("dec.ln_f", d, dt)
        self.region_head = nn.Linear("head.region", d, 1, rng, dt, std)

        self._params: list[nn.Parameter] = [
            self.tok,
            self.seg,
            *self.pos2d.values(),
            self.roi_proj,
            self.pos1d,
        ]
        for block in self.enc_blocks:
            self._params.extend(block.params())
        self._params.extend(self.enc_ln.params())
        for block in self.dec_blocks:
            self._params.extend(block.params())
        self._params.extend(self.dec_ln.params())
        self._params.extend(self.region_head.params())
        names = [p.name for p in self._params]
        assert len(names) == len(set(names))

        self.encode_calls = 0  # instrumentation: one joint pass per answer
        self.vocab_hash = ""  # provenance, set by save/load
        self.step = 0

    # -- parameter access ---------------------------------------------------

    def parameters(self) -> list[nn.Parameter]:
        return self._params

    def param_dict(self) -> dict[str, nn.Parameter]:
        return {p.name: p for p in self._params}

    def zero_grad(self) -> None:
        for p in self._params:
            p.zero_grad()

    @property
    def tables(self) -> EmbeddingTables:
        return EmbeddingTables(
            token=self.tok.value,
            segment=self.seg.value,
            pos_x0=self.pos2d["x0"].value,
            pos_y0=self.pos2d["y0"].value,
            pos_x1=self.pos2d["x1"].value,
            pos_y1=self.pos2d["y1"].value,
            pos_w=self.pos2d["w"].value,
            pos_h=self.pos2d["h"].value,
            roi_proj=self.roi_proj.value,
        )

    # -- embeddings -----------------------------------------------------------

    def embed(self, features: QuestionFeatures | PageFeatures) -> np.ndarray:
        return assemble_embeddings(features, self.tables)

    def embed_backward(self, features: QuestionFeatures | PageFeatures, dz: np.ndarray) -> None:
        np.add.at(self.tok.grad, features.token_ids, dz)
        np.add.at(self.seg.grad, features.segment_ids, dz)
        if isinstance(features, PageFeatures):
            buckets = layout_buckets(features.token_boxes)
            for name, idx in zip(("x0", "y0", "x1", "y1", "w", "h"), buckets):
                np.add.at(self.pos2d[name].grad, idx, dz)
            roi = features.roi_vectors.astype(dz.dtype)
            self.roi_proj.grad += roi.T @ dz

    # -- encoder ---------------------------------------------------------------

    def encode_with_cache(self, z, key_mask=None, train=False, rng=None):
        if not np.isfinite(z).all():
            raise ValueError("non-finite values in encoder input")
        L = z.shape[0]
        if L > self.config.max_positions:
            raise ValueError(f"sequence length {L} exceeds max_positions")
        self.encode_calls += 1
        x = z + self.pos1d.value[:L]
        caches = []
        for block in self.enc_blocks:
            x, c = block.forward(x, key_mask=key_mask, train=train, rng=rng)
            caches.append(c)
        h, c_ln = self.enc_ln.forward(x)
        return h, (caches, c_ln, L)

    def encode_backward(self, cache, dh) -> np.ndarray:
        caches, c_ln, L = cache
        dx = self.enc_ln.backward(c_ln, dh)
        for block, c in zip(reversed(self.enc_blocks), reversed(caches)):
            dx = block.backward(c, dx)
        self.pos1d.grad[:L] += dx
        return dx

    def encode(self, z: np.ndarray, key_mask: Optional[np.ndarray] = None) -> np.ndarray:
        """Deterministic eval-mode encoding of an embedding matrix."""
        h, _ = self.encode_with_cache(z, key_mask=key_mask, train=False)
        return h

    # -- decoder ------------------------------------------------------------

    def _decoder_forward(self, dec_ids, H, enc_mask=None, train=False, rng=None):
        N = len(dec_ids)
        if N > self.config.max_positions:
            raise ValueError(f"target length {N} exceeds max_positions")
        x = self.tok.value[dec_ids] + self.pos1d.value[:N]
        caches = []
        for block in self.dec_blocks:
            x, c = block.forward(x, H, enc_mask=enc_mask, train=train, rng=rng)
            caches.append(c)
        h, c_ln = self.dec_ln.forward(x)
        return h, (caches, c_ln)

    def decode_loss(self, H, target_ids, enc_mask=None, bos_id: int = 3):
        """Teacher-forced mean negative log-likelihood; returns (loss, cache)."""
        targets = np.asarray(target_ids, dtype=np.int64)
        if targets.size == 0:
            raise ValueError("decode_loss requires a non-empty target")
        if targets.min() < 0 or targets.max() >= self.config.vocab_size:
            raise ValueError("target ids out of vocabulary")
        dec_ids = np.concatenate([[bos_id], targets[:-1]])
        h_dec, dec_cache = self._decoder_forward(dec_ids, H, enc_mask)
        logits = h_dec @ self.tok.value.T
        shifted = logits - logits.max(axis=-1, keepdims=True)
        logz = np.log(np.exp(shifted).sum(axis=-1))
        logp = shifted[np.arange(len(targets)), targets] - logz
        loss = float(-logp.mean())
        return loss, (dec_ids, h_dec, dec_cache, logits, targets, enc_mask)

    def decode_loss_backward(self, cache, scale: float = 1.0) -> np.ndarray:
        """Accumulate parameter grads (times ``scale``); return dloss/dH."""
        dec_ids, h_dec, dec_cache, logits, targets, enc_mask = cache
        N = len(targets)
        dlogits = nn.softmax(logits, axis=-1)
        dlogits[np.arange(N), targets] -= 1.0
        dlogits *= scale / N
        self.tok.grad += dlogits.T @ h_dec  # tied output projection
        dh = dlogits @ self.tok.value
        caches, c_ln = dec_cache
        dx = self.dec_ln.backward(c_ln, dh)
        dH = None
        for block, c in zip(reversed(self.dec_blocks), reversed(caches)):
            dx, d_enc = block.backward(c, dx)
            dH = d_enc if dH is None else dH + d_enc
        np.add.at(self.tok.grad, dec_ids, dx)
        self.pos1d.grad[:N] += dx
        return dH

    def generate(
        self,
        H,
        max_len: int,
        strategy: str = "greedy",
        enc_mask=None,
        eos_id: int = 2,
        bos_id: int = 3,
        rng: Optional[np.random.Generator] = None,
    ) -> list[int]:
        """Autoregressive decoding; stops at the end marker or max_len."""
        if max_len < 1:
            raise ValueError("max_len must be >= 1")
        if strategy not in ("greedy", "sample"):
            raise ValueError(f"unknown strategy {strategy!r}")
        ids = [bos_id]
        out: list[int] = []
        for _ in range(max_len):
            h_dec, _ = self._decoder_forward(np.asarray(ids, dtype=np.int64), H, enc_mask)
            logits = h_dec[-1] @ self.tok.value.T
            if strategy == "greedy":
                nxt = int(np.argmax(logits))
            else:
                probs = nn.softmax(logits.astype(np.float64))
                nxt = int(rng.choice(len(probs), p=probs / probs.sum()))
            out.append(nxt)
            if nxt == eos_id:
                break
            ids.append(nxt)
        return out

    # -- region selector -------------------------------------------------------

    def region_logits(self, H, marker_positions):
        markers = np.asarray(marker_positions, dtype=np.int64)
        if markers.size == 0:
            dt = H.dtype if hasattr(H, "dtype") else self.config.np_dtype()
            return np.zeros(0, dtype=dt), (markers, None, H.shape)
        rows = H[markers]
        logits, c_lin = self.region_head.forward(rows)
        return logits[:, 0], (markers, c_lin, H.shape)

    def region_logits_backward(self, cache, dlogits) -> np.ndarray:
        markers, c_lin, h_shape = cache
        dH = np.zeros(h_shape, dtype=dlogits.dtype if len(dlogits) else self.config.np_dtype())
        if markers.size == 0:
            return dH
        drows = self.region_head.backward(c_lin, dlogits[:, None])
        np.add.at(dH, markers, drows)
        return dH

    def region_select(self, H, marker_positions) -> np.ndarray:
        """Probability that each region belongs to the visual answer.

        Probabilities are clamped to (1e-7, 1-1e-7) so they are strictly
        inside (0, 1) even under float32 saturation.
        """
        logits, _ = self.region_logits(H, marker_positions)
        if logits.size == 0:
            return np.zeros(0, dtype=self.config.np_dtype())
        return np.clip(nn.sigmoid(logits), 1e-7, 1.0 - 1e-7)

    # -- persistence -----------------------------------------------------------

    def _serialize(self, vocab_hash: str, step: int) -> bytes:
        arrays = sorted(self._params, key=lambda p: p.name)
        header = {
            "config": self.config.to_dict(),
            "vocab_hash": vocab_hash,
            "step": step,
            "arrays": [{"name": p.name, "shape": list(p.value.shape)} for p in arrays],
            "storage_dtype": "float32",
        }
        buf = io.BytesIO()
        buf.write(_MAGIC)
        buf.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        buf.write(b"\n")
        for p in arrays:
            buf.write(np.ascontiguousarray(p.value, dtype="<f4").tobytes())
        return buf.getvalue()

    def save_checkpoint(
        self, path: str | Path, vocab_hash: Optional[str] = None, step: Optional[int] = None
    ) -> str:
        """Write the checkpoint; returns its content hash."""
        if vocab_hash is not None:
            self.vocab_hash = vocab_hash
        if step is not None:
            self.step = step
        data = self._serialize(self.vocab_hash, self.step)
        Path(path).write_bytes(data)
        return hashlib.sha256(data).hexdigest()

    def fingerprint(self) -> str:
        """Hash of the checkpoint bytes this model would serialize to.

        Matches the on-disk content hash of the file written by
        ``save_checkpoint`` (and of the file a load came from).
        """
        return hashlib.sha256(self._serialize(self.vocab_hash, self.step)).hexdigest()

    @classmethod
    def load_checkpoint(
        cls, path: str | Path, expected_vocab_hash: Optional[str] = None
    ) -> tuple["Model", dict]:
        data = Path(path).read_bytes()
        if not data.startswith(_MAGIC):
            raise CheckpointError(f"{path}: bad magic")
        end = data.index(b"\n", len(_MAGIC))
        header = json.loads(data[len(_MAGIC):end].decode("utf-8"))
        if expected_vocab_hash is not None and header["vocab_hash"] != expected_vocab_hash:
            raise CheckpointError(
                f"{path}: checkpoint was trained with a different vocabulary "
                f"({header['vocab_hash'][:12]}... != {expected_vocab_hash[:12]}...)"
            )
        config = ModelConfig(**header["config"])
        model = cls(config, seed=0)
        params = model.param_dict()
        offset = end + 1
        for entry in header["arrays"]:
            name, shape = entry["name"], tuple(entry["shape"])
            if name not in params:
                raise CheckpointError(f"{path}: unknown array {name}")
            param = params[name]
            if param.value.shape != shape:
                raise CheckpointError(
                    f"{path}: array {name} has shape {shape}, expected {param.value.shape}"
                )
            count = int(np.prod(shape)) if shape else 1
            raw = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
            offset += count * 4
            param.value[...] = raw.reshape(shape).astype(param.value.dtype)
        model.vocab_hash = header["vocab_hash"]
        model.step = header["step"]
        meta = {
            "vocab_hash": header["vocab_hash"],
            "step": header["step"],
            "hash": hashlib.sha256(data).hexdigest(),
        }
        return model, meta


def init_params(config: ModelConfig, seed: int) -> Model:
    """Deterministically initialized model (scaled-normal weights)."""
    return Model(config, seed=seed)


def checkpoint_hash(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()

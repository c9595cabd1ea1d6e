"""Minimal transformer building blocks in numpy with hand-derived backprop.

Every layer's ``forward`` returns ``(output, cache)`` and ``backward``
consumes that cache, accumulates parameter gradients in place, and returns
the gradient with respect to the layer input. Caches are per-call objects,
so a layer may run forward any number of times before its backwards are
replayed (each backward pairs with one cache).

Shapes are unbatched: sequences are [L, d] matrices. At desk scale the
python-loop overhead of per-sequence processing is negligible and it keeps
the mask logic trivial.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)
_NEG = -1e9  # additive mask value; large enough to zero the softmax


class Parameter:
    """A named tensor with an accumulated gradient buffer."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = value
        self.grad = np.zeros_like(value)

    def zero_grad(self) -> None:
        self.grad[...] = 0.0


def normal_param(name: str, rng: np.random.Generator, shape, std: float, dtype) -> Parameter:
    return Parameter(name, (rng.standard_normal(shape) * std).astype(dtype))


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x * _INV_SQRT2))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + erf(x * _INV_SQRT2)) + x * _INV_SQRT2PI * np.exp(-0.5 * x * x)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class Linear:
    def __init__(self, name, n_in, n_out, rng, dtype, std=0.02, bias=True):
        self.W = normal_param(f"{name}.W", rng, (n_in, n_out), std, dtype)
        self.b = Parameter(f"{name}.b", np.zeros(n_out, dtype=dtype)) if bias else None

    def forward(self, x):
        y = x @ self.W.value
        if self.b is not None:
            y = y + self.b.value
        return y, x

    def backward(self, cache, dy):
        x = cache
        self.W.grad += x.T @ dy
        if self.b is not None:
            self.b.grad += dy.sum(axis=0)
        return dy @ self.W.value.T

    def params(self):
        return [self.W] + ([self.b] if self.b is not None else [])


class LayerNorm:
    def __init__(self, name, dim, dtype, eps=1e-5):
        self.g = Parameter(f"{name}.g", np.ones(dim, dtype=dtype))
        self.b = Parameter(f"{name}.b", np.zeros(dim, dtype=dtype))
        self.eps = eps

    def forward(self, x):
        mu = x.mean(axis=-1, keepdims=True)
        var = x.var(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mu) * inv
        return self.g.value * xhat + self.b.value, (xhat, inv)

    def backward(self, cache, dy):
        xhat, inv = cache
        self.g.grad += (dy * xhat).sum(axis=0)
        self.b.grad += dy.sum(axis=0)
        dxhat = dy * self.g.value
        mean_d = dxhat.mean(axis=-1, keepdims=True)
        mean_dx = (dxhat * xhat).mean(axis=-1, keepdims=True)
        return inv * (dxhat - mean_d - xhat * mean_dx)

    def params(self):
        return [self.g, self.b]


class Dropout:
    """Inverted dropout; identity when p == 0 or not training."""

    def __init__(self, p: float):
        self.p = p

    def forward(self, x, train, rng):
        if not train or self.p <= 0.0:
            return x, None
        keep = (rng.random(x.shape) >= self.p).astype(x.dtype) / (1.0 - self.p)
        return x * keep, keep

    def backward(self, cache, dy):
        return dy if cache is None else dy * cache


class MultiHeadAttention:
    def __init__(self, name, dim, n_heads, rng, dtype, std=0.02, dropout=0.0):
        if dim % n_heads:
            raise ValueError("hidden dim must be divisible by n_heads")
        self.n_heads = n_heads
        self.dk = dim // n_heads
        self.scale = 1.0 / np.sqrt(self.dk)
        self.wq = Linear(f"{name}.wq", dim, dim, rng, dtype, std)
        self.wk = Linear(f"{name}.wk", dim, dim, rng, dtype, std)
        self.wv = Linear(f"{name}.wv", dim, dim, rng, dtype, std)
        self.wo = Linear(f"{name}.wo", dim, dim, rng, dtype, std)
        self.drop = Dropout(dropout)

    def _split(self, x, L):
        return x.reshape(L, self.n_heads, self.dk).transpose(1, 0, 2)

    def forward(self, x_q, x_kv, key_mask=None, causal=False, train=False, rng=None):
        Lq, Lk = x_q.shape[0], x_kv.shape[0]
        q, cq = self.wq.forward(x_q)
        k, ck = self.wk.forward(x_kv)
        v, cv = self.wv.forward(x_kv)
        Q, K, V = self._split(q, Lq), self._split(k, Lk), self._split(v, Lk)
        scores = (Q @ K.transpose(0, 2, 1)) * self.scale
        if key_mask is not None:
            scores = scores + np.where(key_mask, 0.0, _NEG).astype(scores.dtype)
        if causal:
            tri = np.triu(np.full((Lq, Lk), _NEG, dtype=scores.dtype), k=1)
            scores = scores + tri
        A = softmax(scores, axis=-1)
        A_d, cdrop = self.drop.forward(A, train, rng)
        ctx = A_d @ V
        y = ctx.transpose(1, 0, 2).reshape(Lq, -1)
        out, co = self.wo.forward(y)
        return out, (cq, ck, cv, Q, K, V, A, cdrop, co, Lq, Lk)

    def backward(self, cache, dout):
        cq, ck, cv, Q, K, V, A, cdrop, co, Lq, Lk = cache
        dy = self.wo.backward(co, dout)
        dctx = dy.reshape(Lq, self.n_heads, self.dk).transpose(1, 0, 2)
        A_d = A if cdrop is None else A * cdrop
        dA_d = dctx @ V.transpose(0, 2, 1)
        dV = A_d.transpose(0, 2, 1) @ dctx
        dA = self.drop.backward(cdrop, dA_d)
        dscores = A * (dA - (dA * A).sum(axis=-1, keepdims=True))
        dQ = (dscores @ K) * self.scale
        dK = (dscores.transpose(0, 2, 1) @ Q) * self.scale
        dq = dQ.transpose(1, 0, 2).reshape(Lq, -1)
        dk = dK.transpose(1, 0, 2).reshape(Lk, -1)
        dv = dV.transpose(1, 0, 2).reshape(Lk, -1)
        dx_q = self.wq.backward(cq, dq)
        dx_kv = self.wk.backward(ck, dk) + self.wv.backward(cv, dv)
        return dx_q, dx_kv

    def params(self):
        return self.wq.params() + self.wk.params() + self.wv.params() + self.wo.params()


class FeedForward:
    def __init__(self, name, dim, hidden, rng, dtype, std=0.02, dropout=0.0):
        self.lin1 = Linear(f"{name}.lin1", dim, hidden, rng, dtype, std)
        self.lin2 = Linear(f"{name}.lin2", hidden, dim, rng, dtype, std)
        self.drop = Dropout(dropout)

    def forward(self, x, train=False, rng=None):
        h, c1 = self.lin1.forward(x)
        a = gelu(h)
        a_d, cdrop = self.drop.forward(a, train, rng)
        y, c2 = self.lin2.forward(a_d)
        return y, (c1, h, cdrop, c2)

    def backward(self, cache, dy):
        c1, h, cdrop, c2 = cache
        da_d = self.lin2.backward(c2, dy)
        da = self.drop.backward(cdrop, da_d)
        dh = da * gelu_grad(h)
        return self.lin1.backward(c1, dh)

    def params(self):
        return self.lin1.params() + self.lin2.params()


class EncoderBlock:
    """Pre-norm block: x + attn(ln(x)); then x + ff(ln(x))."""

    def __init__(self, name, dim, n_heads, ff_dim, rng, dtype, std=0.02, dropout=0.0):
        self.ln1 = LayerNorm(f"{name}.ln1", dim, dtype)
        self.attn = MultiHeadAttention(f"{name}.attn", dim, n_heads, rng, dtype, std, dropout)
        self.ln2 = LayerNorm(f"{name}.ln2", dim, dtype)
        self.ff = FeedForward(f"{name}.ff", dim, ff_dim, rng, dtype, std, dropout)

    def forward(self, x, key_mask=None, train=False, rng=None):
        n1, c_ln1 = self.ln1.forward(x)
        a, c_att = self.attn.forward(n1, n1, key_mask=key_mask, train=train, rng=rng)
        x1 = x + a
        n2, c_ln2 = self.ln2.forward(x1)
        f, c_ff = self.ff.forward(n2, train, rng)
        return x1 + f, (c_ln1, c_att, c_ln2, c_ff)

    def backward(self, cache, dy):
        c_ln1, c_att, c_ln2, c_ff = cache
        dn2 = self.ff.backward(c_ff, dy)
        dx1 = dy + self.ln2.backward(c_ln2, dn2)
        dq, dkv = self.attn.backward(c_att, dx1)
        return dx1 + self.ln1.backward(c_ln1, dq + dkv)

    def params(self):
        return self.ln1.params() + self.attn.params() + self.ln2.params() + self.ff.params()


class DecoderBlock:
    """Pre-norm: causal self-attention, cross-attention, feed-forward."""

    def __init__(self, name, dim, n_heads, ff_dim, rng, dtype, std=0.02, dropout=0.0):
        self.ln1 = LayerNorm(f"{name}.ln1", dim, dtype)
        self.self_attn = MultiHeadAttention(f"{name}.self", dim, n_heads, rng, dtype, std, dropout)
        self.ln2 = LayerNorm(f"{name}.ln2", dim, dtype)
        self.cross_attn = MultiHeadAttention(
            f"{name}.cross", dim, n_heads, rng, dtype, std, dropout
        )
        self.ln3 = LayerNorm(f"{name}.ln3", dim, dtype)
        self.ff = FeedForward(f"{name}.ff", dim, ff_dim, rng, dtype, std, dropout)

    def forward(self, x, enc_h, enc_mask=None, train=False, rng=None):
        n1, c_ln1 = self.ln1.forward(x)
        a, c_self = self.self_attn.forward(n1, n1, causal=True, train=train, rng=rng)
        x1 = x + a
        n2, c_ln2 = self.ln2.forward(x1)
        c, c_cross = self.cross_attn.forward(n2, enc_h, key_mask=enc_mask, train=train, rng=rng)
        x2 = x1 + c
        n3, c_ln3 = self.ln3.forward(x2)
        f, c_ff = self.ff.forward(n3, train, rng)
        return x2 + f, (c_ln1, c_self, c_ln2, c_cross, c_ln3, c_ff)

    def backward(self, cache, dy):
        c_ln1, c_self, c_ln2, c_cross, c_ln3, c_ff = cache
        dn3 = self.ff.backward(c_ff, dy)
        dx2 = dy + self.ln3.backward(c_ln3, dn3)
        dq_cross, d_enc = self.cross_attn.backward(c_cross, dx2)
        dx1 = dx2 + self.ln2.backward(c_ln2, dq_cross)
        dq_self, dkv_self = self.self_attn.backward(c_self, dx1)
        dx = dx1 + self.ln1.backward(c_ln1, dq_self + dkv_self)
        return dx, d_enc

    def params(self):
        return (
            self.ln1.params()
            + self.self_attn.params()
            + self.ln2.params()
            + self.cross_attn.params()
            + self.ln3.params()
            + self.ff.params()
        )


class AdamW:
    """Adaptive moments with decoupled weight decay, constant learning rate."""

    def __init__(self, params, lr, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01):
        self.params = list(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self._m = [np.zeros_like(p.value) for p in self.params]
        self._v = [np.zeros_like(p.value) for p in self.params]

    def step(self) -> None:
        self.t += 1
        b1t = 1.0 - self.b1**self.t
        b2t = 1.0 - self.b2**self.t
        for p, m, v in zip(self.params, self._m, self._v):
            g = p.grad
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            update = (m / b1t) / (np.sqrt(v / b2t) + self.eps)
            if self.weight_decay:
                update = update + self.weight_decay * p.value
            p.value -= (self.lr * update).astype(p.value.dtype)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

"""Transformer building blocks on top of the autodiff tensor.

All modules register their parameters in a shared :class:`ParamStore` under
hierarchical names, which fixes both checkpoint layout and initialization
order.  Sequences are single (T, d) matrices; batching is done by the
caller, one graph per batch element.
"""

import numpy as np

from ..errors import InvalidInputError
from .tensor import Tensor, concat

MASK_NEG = -1e9  # additive mask surrogate for -inf; exp(-1e9) underflows to 0.0


class ParamStore:
    """Ordered, uniquely named map of trainable tensors."""

    def __init__(self):
        self._params = {}

    def register(self, name, data):
        if name in self._params:
            raise InvalidInputError(f"duplicate parameter name {name!r}")
        t = Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __len__(self):
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self):
        return list(self._params.keys())

    def zero_grad(self):
        for p in self._params.values():
            p.grad = None

    def n_scalars(self):
        return sum(p.data.size for p in self._params.values())


def xavier_uniform(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def positional_encoding(length, d_model):
    """Sinusoidal table: pe[t, 2k] = sin(t/10000^(2k/d)), pe[t, 2k+1] = cos(same)."""
    t = np.arange(length)[:, None]
    k2 = np.arange(0, d_model, 2)
    angle = t / np.power(10000.0, k2 / d_model)
    pe = np.zeros((length, d_model))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle[:, : pe[:, 1::2].shape[1]])
    return Tensor(pe)


def causal_mask(length):
    """Additive (T, T) mask: 0 on and below the diagonal, MASK_NEG above."""
    return Tensor(np.triu(np.full((length, length), MASK_NEG), k=1))


def softmax(x, axis=-1):
    shifted = x - Tensor(np.max(x.data, axis=axis, keepdims=True))
    e = shifted.exp()
    return e / e.sum(axis=axis, keepdims=True)


def attention(q, k, v, mask=None):
    """softmax(QK^T / sqrt(d_h) + mask) V on (T, d_h) inputs."""
    scale = 1.0 / np.sqrt(q.shape[-1])
    scores = (q @ k.T) * scale
    if mask is not None:
        scores = scores + mask
    return softmax(scores, axis=-1) @ v


class Linear:
    def __init__(self, store, name, fan_in, fan_out, rng, bias=True):
        self.w = store.register(f"{name}.w", xavier_uniform(rng, fan_in, fan_out))
        self.b = store.register(f"{name}.b", np.zeros(fan_out)) if bias else None

    def __call__(self, x):
        out = x @ self.w
        return out + self.b if self.b is not None else out


class LayerNorm:
    def __init__(self, store, name, dim, eps=1e-5):
        self.gamma = store.register(f"{name}.gamma", np.ones(dim))
        self.beta = store.register(f"{name}.beta", np.zeros(dim))
        self.eps = eps

    def __call__(self, x):
        mu = x.mean(axis=-1, keepdims=True)
        centered = x - mu
        var = (centered * centered).mean(axis=-1, keepdims=True)
        return centered / (var + self.eps) ** 0.5 * self.gamma + self.beta


class MultiHeadSelfAttention:
    def __init__(self, store, name, d_model, n_heads, rng):
        if d_model % n_heads != 0:
            raise InvalidInputError("d_model must be divisible by n_heads")
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.wq = Linear(store, f"{name}.wq", d_model, d_model, rng)
        # key bias is omitted: softmax is invariant to a per-row constant shift
        # of the scores, so that parameter would have exactly zero gradient
        self.wk = Linear(store, f"{name}.wk", d_model, d_model, rng, bias=False)
        self.wv = Linear(store, f"{name}.wv", d_model, d_model, rng)
        self.wo = Linear(store, f"{name}.wo", d_model, d_model, rng)

    def __call__(self, x, mask=None):
        q, k, v = self.wq(x), self.wk(x), self.wv(x)
        heads = []
        for h in range(self.n_heads):
            sel = slice(h * self.d_head, (h + 1) * self.d_head)
            heads.append(attention(q[:, sel], k[:, sel], v[:, sel], mask))
        merged = heads[0] if len(heads) == 1 else concat(heads, axis=1)
        return self.wo(merged)


class FeedForward:
    def __init__(self, store, name, d_model, ffn_dim, rng):
        self.lin1 = Linear(store, f"{name}.lin1", d_model, ffn_dim, rng)
        self.lin2 = Linear(store, f"{name}.lin2", ffn_dim, d_model, rng)

    def __call__(self, x):
        return self.lin2(self.lin1(x).relu())


class TransformerLayer:
    """Pre-norm residual block: x + MHA(LN(x)), then + FFN(LN(:))."""

    def __init__(self, store, name, d_model, n_heads, ffn_dim, rng):
        self.ln1 = LayerNorm(store, f"{name}.ln1", d_model)
        self.attn = MultiHeadSelfAttention(store, f"{name}.attn", d_model, n_heads, rng)
        self.ln2 = LayerNorm(store, f"{name}.ln2", d_model)
        self.ffn = FeedForward(store, f"{name}.ffn", d_model, ffn_dim, rng)

    def __call__(self, x, mask=None):
        x = x + self.attn(self.ln1(x), mask)
        return x + self.ffn(self.ln2(x))


class MLP:
    """Dense stack with ReLU between hidden layers and an optional final activation."""

    def __init__(self, store, name, sizes, rng, final=None):
        if len(sizes) < 2:
            raise InvalidInputError("MLP needs at least input and output sizes")
        self.layers = [
            Linear(store, f"{name}.lin{i}", sizes[i], sizes[i + 1], rng)
            for i in range(len(sizes) - 1)
        ]
        if final not in (None, "tanh"):
            raise InvalidInputError(f"unsupported final activation {final!r}")
        self.final = final

    def __call__(self, x):
        for layer in self.layers[:-1]:
            x = layer(x).relu()
        x = self.layers[-1](x)
        if self.final == "tanh":
            x = x.tanh()
        return x

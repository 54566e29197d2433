"""Token embeddings, positional encoding, multi-head attention, encoders.

Two structurally identical encoders process the symbolic sources (spoken
text and gloss annotation). Each layer applies self-attention and a
feed-forward projection, with residual connections and layer normalization
after both sublayers.
"""

from __future__ import annotations

import dataclasses
import functools
import math

import numpy as np

from . import tensorkit as tk
from .corpus import Vocabulary
from .tensorkit import Tensor

MASKED_LOGIT = -1e9


@dataclasses.dataclass
class EncoderConfig:
    """Architecture knobs shared by both encoders and the decoder."""

    n_layers: int = 2
    n_heads: int = 4
    d_model: int = 64
    d_ff: int = 256
    dropout: float = 0.1
    share_embeddings: bool = False

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError(
                f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.n_layers < 0:
            raise ValueError("n_layers must be >= 0")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@functools.lru_cache(maxsize=64)
def _sinusoid_cached(n_positions: int, d_model: int, dtype_name: str) -> np.ndarray:
    pos = np.arange(n_positions, dtype=np.float64)[:, None]
    idx = np.arange(d_model, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, 2.0 * np.floor(idx / 2.0) / d_model)
    table = np.where(idx % 2 == 0, np.sin(angle), np.cos(angle))
    table = table.astype(np.dtype(dtype_name))
    table.setflags(write=False)
    return table


def sinusoid_positions(n_positions: int, d_model: int,
                       dtype=np.float32) -> np.ndarray:
    """Standard sin/cos positional table; position 0 is [0, 1, 0, 1, ...]."""
    return _sinusoid_cached(n_positions, d_model, np.dtype(dtype).name)


@functools.lru_cache(maxsize=512)
def _causal_mask_cached(length: int, dtype_name: str) -> np.ndarray:
    mask = np.zeros((length, length), dtype=np.dtype(dtype_name))
    mask[np.triu_indices(length, k=1)] = MASKED_LOGIT
    mask.setflags(write=False)
    return mask


def causal_mask(length: int, dtype=np.float32) -> np.ndarray:
    """Additive mask blocking attention to future positions."""
    return _causal_mask_cached(length, np.dtype(dtype).name)


def dropout_mask(rng: np.random.Generator | None, shape, rate: float,
                 dtype) -> Tensor | None:
    """Inverted-dropout mask; None disables dropout (eval mode)."""
    if rng is None or rate <= 0.0:
        return None
    keep = (rng.random(shape) >= rate).astype(dtype)
    return Tensor(keep / (1.0 - rate), dtype=dtype)


def _apply_dropout(x: Tensor, mask: Tensor | None) -> Tensor:
    return x if mask is None else tk.mul(x, mask)


class Linear:
    """Affine map with Glorot-uniform weights."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, dtype):
        limit = math.sqrt(6.0 / (d_in + d_out))
        self.weight = Tensor(rng.uniform(-limit, limit, size=(d_in, d_out)),
                             requires_grad=True, dtype=dtype)
        self.bias = Tensor(np.zeros(d_out), requires_grad=True, dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return tk.add_bias(tk.matmul(x, self.weight), self.bias)

    def named_parameters(self, prefix: str):
        yield f"{prefix}.weight", self.weight
        yield f"{prefix}.bias", self.bias


class LayerNorm:
    def __init__(self, d_model: int, dtype, eps: float = 1e-5):
        self.gain = Tensor(np.ones(d_model), requires_grad=True, dtype=dtype)
        self.bias = Tensor(np.zeros(d_model), requires_grad=True, dtype=dtype)
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return tk.layer_norm(x, self.gain, self.bias, self.eps)

    def named_parameters(self, prefix: str):
        yield f"{prefix}.gain", self.gain
        yield f"{prefix}.bias", self.bias


class FeedForward:
    def __init__(self, d_model: int, d_ff: int, rng, dtype):
        self.inner = Linear(d_model, d_ff, rng, dtype)
        self.outer = Linear(d_ff, d_model, rng, dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return self.outer(tk.relu(self.inner(x)))

    def named_parameters(self, prefix: str):
        yield from self.inner.named_parameters(f"{prefix}.inner")
        yield from self.outer.named_parameters(f"{prefix}.outer")


class MultiHeadAttention:
    """Scaled dot-product attention over H parallel projections.

    The attention weights are softmax(QK^T / sqrt(d_k)) per head; masked key
    positions receive an additive MASKED_LOGIT before the softmax, which
    underflows to exactly zero weight.
    """

    def __init__(self, d_model: int, n_heads: int, rng, dtype):
        if d_model % n_heads != 0:
            raise ValueError(f"d_model {d_model} not divisible by heads {n_heads}")
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.query = Linear(d_model, d_model, rng, dtype)
        self.key = Linear(d_model, d_model, rng, dtype)
        self.value = Linear(d_model, d_model, rng, dtype)
        self.out = Linear(d_model, d_model, rng, dtype)

    def __call__(self, q_in: Tensor, k_in: Tensor, v_in: Tensor,
                 mask: np.ndarray | None = None) -> Tensor:
        q, k, v = self.query(q_in), self.key(k_in), self.value(v_in)
        return self.out(tk.scaled_attention(q, k, v, self.n_heads, mask))

    def named_parameters(self, prefix: str):
        for name, part in (("query", self.query), ("key", self.key),
                           ("value", self.value), ("out", self.out)):
            yield from part.named_parameters(f"{prefix}.{name}")


class EncoderLayer:
    def __init__(self, config: EncoderConfig, rng, dtype):
        self.attn = MultiHeadAttention(config.d_model, config.n_heads, rng, dtype)
        self.ff = FeedForward(config.d_model, config.d_ff, rng, dtype)
        self.norm_attn = LayerNorm(config.d_model, dtype)
        self.norm_ff = LayerNorm(config.d_model, dtype)
        self.dropout = config.dropout

    def __call__(self, x: Tensor, mask: np.ndarray | None = None,
                 dropout_rng: np.random.Generator | None = None) -> Tensor:
        attended = self.attn(x, x, x, mask)
        attended = _apply_dropout(attended, dropout_mask(
            dropout_rng, attended.shape, self.dropout, x.dtype))
        x = self.norm_attn(tk.add(x, attended))
        projected = self.ff(x)
        projected = _apply_dropout(projected, dropout_mask(
            dropout_rng, projected.shape, self.dropout, x.dtype))
        return self.norm_ff(tk.add(x, projected))

    def named_parameters(self, prefix: str):
        yield from self.attn.named_parameters(f"{prefix}.attn")
        yield from self.ff.named_parameters(f"{prefix}.ff")
        yield from self.norm_attn.named_parameters(f"{prefix}.norm_attn")
        yield from self.norm_ff.named_parameters(f"{prefix}.norm_ff")


def embed_source(tokens: list[str], vocab: Vocabulary, table: Tensor,
                 positional: bool = True) -> Tensor:
    """Look up token embeddings, scale by sqrt(d), add positional encoding."""
    ids = vocab.encode(tokens)
    d_model = table.shape[1]
    embedded = tk.mul(tk.embedding_rows(table, ids), math.sqrt(d_model))
    if positional:
        embedded = tk.add(embedded, Tensor(
            sinusoid_positions(len(ids), d_model, embedded.dtype)))
    return embedded


class TokenEncoder:
    """Embedding plus a stack of self-attention layers for one source."""

    def __init__(self, vocab: Vocabulary, config: EncoderConfig,
                 rng: np.random.Generator, dtype,
                 embedding: Tensor | None = None):
        self.vocab = vocab
        self.config = config
        if embedding is not None:
            if embedding.shape != (len(vocab), config.d_model):
                raise ValueError("shared embedding table has the wrong shape")
            self.embedding = embedding
        else:
            self.embedding = Tensor(
                rng.normal(0.0, 1.0 / math.sqrt(config.d_model),
                           size=(len(vocab), config.d_model)),
                requires_grad=True, dtype=dtype)
        self.layers = [EncoderLayer(config, rng, dtype)
                       for _ in range(config.n_layers)]

    def __call__(self, tokens: list[str],
                 dropout_rng: np.random.Generator | None = None) -> Tensor:
        if not tokens:
            raise ValueError("encoder input must contain at least one token")
        x = embed_source(tokens, self.vocab, self.embedding)
        for layer in self.layers:
            x = layer(x, mask=None, dropout_rng=dropout_rng)
        return x

    def named_parameters(self, prefix: str, include_embedding: bool = True):
        if include_embedding:
            yield f"{prefix}.embedding", self.embedding
        for i, layer in enumerate(self.layers):
            yield from layer.named_parameters(f"{prefix}.layers.{i}")

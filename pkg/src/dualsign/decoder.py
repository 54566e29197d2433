"""Autoregressive decoder producing continuous frames plus a progress counter.

Each target frame is concatenated with its counter value, projected by a
learned linear map, and given a positional term. Decoder layers apply
causally masked self-attention, cross-attention over the fused (or single)
encoder memory, and a feed-forward projection, each followed by a residual
connection and layer normalization. A final linear head emits width D+1,
split into the predicted frame and counter.

Generation seeds with an all-zero frame at counter 0 and stops once the
predicted counter reaches 1 (within stop_eps) or the frame cap is hit.
"""

from __future__ import annotations

import math

import numpy as np

from . import tensorkit as tk
from .encoders import (EncoderConfig, FeedForward, LayerNorm, Linear,
                       MultiHeadAttention, causal_mask, dropout_mask,
                       sinusoid_positions, _apply_dropout)
from .tensorkit import Tensor

COUNTER_CLAMP = 1.05


class DecoderLayer:
    def __init__(self, config: EncoderConfig, rng, dtype):
        self.self_attn = MultiHeadAttention(config.d_model, config.n_heads, rng, dtype)
        self.cross_attn = MultiHeadAttention(config.d_model, config.n_heads, rng, dtype)
        self.ff = FeedForward(config.d_model, config.d_ff, rng, dtype)
        self.norm_self = LayerNorm(config.d_model, dtype)
        self.norm_cross = LayerNorm(config.d_model, dtype)
        self.norm_ff = LayerNorm(config.d_model, dtype)
        self.dropout = config.dropout

    def __call__(self, x: Tensor, memory: Tensor, self_mask: np.ndarray,
                 dropout_rng=None) -> Tensor:
        attended = self.self_attn(x, x, x, self_mask)
        attended = _apply_dropout(attended, dropout_mask(
            dropout_rng, attended.shape, self.dropout, x.dtype))
        x = self.norm_self(tk.add(x, attended))
        crossed = self.cross_attn(x, memory, memory, None)
        crossed = _apply_dropout(crossed, dropout_mask(
            dropout_rng, crossed.shape, self.dropout, x.dtype))
        x = self.norm_cross(tk.add(x, crossed))
        projected = self.ff(x)
        projected = _apply_dropout(projected, dropout_mask(
            dropout_rng, projected.shape, self.dropout, x.dtype))
        return self.norm_ff(tk.add(x, projected))

    def named_parameters(self, prefix: str):
        yield from self.self_attn.named_parameters(f"{prefix}.self_attn")
        yield from self.cross_attn.named_parameters(f"{prefix}.cross_attn")
        yield from self.ff.named_parameters(f"{prefix}.ff")
        yield from self.norm_self.named_parameters(f"{prefix}.norm_self")
        yield from self.norm_cross.named_parameters(f"{prefix}.norm_cross")
        yield from self.norm_ff.named_parameters(f"{prefix}.norm_ff")


class ProgressiveDecoder:
    """Maps embedded targets and an encoder memory to frames + counters."""

    def __init__(self, frame_dim: int, config: EncoderConfig,
                 rng: np.random.Generator, dtype):
        self.frame_dim = frame_dim
        self.config = config
        self.dtype = dtype
        self.input_embed = Linear(frame_dim + 1, config.d_model, rng, dtype)
        # The counter is one low-variance input among D pose channels; scale
        # its embedding row up so progress information is visible to the
        # trunk from the start (the learned map can undo this freely).
        self.input_embed.weight.data[-1] *= math.sqrt(frame_dim)
        self.layers = [DecoderLayer(config, rng, dtype)
                       for _ in range(config.n_layers)]
        self.head = Linear(config.d_model, frame_dim + 1, rng, dtype)

    def embed_targets(self, frames: np.ndarray, counters: np.ndarray) -> Tensor:
        """Concatenate counter as the last column, project, add positions."""
        frames = np.asarray(frames, dtype=self.dtype)
        counters = np.asarray(counters, dtype=self.dtype)
        if frames.ndim != 2 or counters.shape != (frames.shape[0],):
            raise tk.ShapeError(
                f"embed_targets: frames {frames.shape} vs counters {counters.shape}")
        if frames.shape[1] != self.frame_dim:
            raise tk.ShapeError(
                f"embed_targets: frame width {frames.shape[1]}, expected "
                f"{self.frame_dim}")
        joint = Tensor(np.concatenate([frames, counters[:, None]], axis=1),
                       dtype=self.dtype)
        x = self.input_embed(joint)
        return tk.add(x, Tensor(
            sinusoid_positions(frames.shape[0], self.config.d_model, self.dtype)))

    def forward_embedded(self, x: Tensor, memory: Tensor,
                         dropout_rng=None) -> Tensor:
        """Run the layer stack and head on already-embedded target rows."""
        if memory.shape[0] < 1:
            raise ValueError("decoder memory must be nonempty")
        mask = causal_mask(x.shape[0], self.dtype)
        for layer in self.layers:
            x = layer(x, memory, mask, dropout_rng)
        return self.head(x)

    def forward(self, frames: np.ndarray, counters: np.ndarray, memory: Tensor,
                dropout_rng=None) -> Tensor:
        """Teacher-forced pass: returns (T, D+1) predictions."""
        return self.forward_embedded(self.embed_targets(frames, counters),
                                     memory, dropout_rng)

    def generate(self, memory: Tensor, max_frames: int = 300,
                 stop_eps: float = 0.02) -> tuple[np.ndarray, np.ndarray]:
        """Greedy autoregression until the counter reaches 1 or the cap.

        Returns (frames, counters) excluding the zero seed frame.
        """
        if max_frames < 1:
            raise ValueError("max_frames must be >= 1")
        frames = [np.zeros(self.frame_dim, dtype=self.dtype)]
        counters = [np.asarray(0.0, dtype=self.dtype)]
        out_frames, out_counters = [], []
        with tk.no_grad():
            while len(out_frames) < max_frames:
                pred = self.forward(np.stack(frames),
                                    np.asarray(counters, dtype=self.dtype),
                                    memory)
                last = pred.data[-1]
                frame, counter = last[:-1], float(last[-1])
                counter = min(max(counter, 0.0), COUNTER_CLAMP)
                out_frames.append(frame)
                out_counters.append(counter)
                if counter >= 1.0 - stop_eps:
                    break
                frames.append(frame)
                counters.append(np.asarray(counter, dtype=self.dtype))
        return np.stack(out_frames), np.asarray(out_counters, dtype=self.dtype)

    def named_parameters(self, prefix: str):
        yield from self.input_embed.named_parameters(f"{prefix}.input_embed")
        for i, layer in enumerate(self.layers):
            yield from layer.named_parameters(f"{prefix}.layers.{i}")
        yield from self.head.named_parameters(f"{prefix}.head")

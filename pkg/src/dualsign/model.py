"""Generator variants: text-only, gloss-only, and dual-encoder models.

All three variants share one decoder implementation; they differ only in
how the cross-attention memory is built. The dual variant fuses the two
encoder outputs with the Cartesian Hadamard product, the single-source
variants pass their encoder output through unchanged.
"""

from __future__ import annotations

import numpy as np

from . import tensorkit as tk
from .corpus import Vocabulary, counter_targets
from .decoder import ProgressiveDecoder
from .encoders import EncoderConfig, TokenEncoder
from .fusion import DEFAULT_MAX_FUSED_ROWS, fuse_memories
from .tensorkit import Tensor

VARIANTS = ("t2s", "g2s", "tg2s")


class SignModel:
    """Conditional generator of frame sequences from text and/or gloss."""

    def __init__(self, variant: str, text_vocab: Vocabulary | None,
                 gloss_vocab: Vocabulary | None, frame_dim: int,
                 config: EncoderConfig, seed: int = 0,
                 dtype=np.float32, max_fused_rows: int = DEFAULT_MAX_FUSED_ROWS):
        variant = variant.lower()
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
        self.variant = variant
        self.frame_dim = frame_dim
        self.config = config
        self.dtype = dtype
        self.max_fused_rows = max_fused_rows
        self.text_vocab = text_vocab
        self.gloss_vocab = gloss_vocab
        rng = np.random.default_rng([seed, 31])

        self.text_encoder = None
        self.gloss_encoder = None
        if variant in ("t2s", "tg2s"):
            if text_vocab is None:
                raise ValueError(f"variant {variant} requires a text vocabulary")
            self.text_encoder = TokenEncoder(text_vocab, config, rng, dtype)
        if variant in ("g2s", "tg2s"):
            if config.share_embeddings and variant == "tg2s":
                # Shared table implies shared lookup: gloss tokens are
                # encoded with the text vocabulary.
                self.gloss_encoder = TokenEncoder(
                    text_vocab, config, rng, dtype,
                    embedding=self.text_encoder.embedding)
            else:
                if gloss_vocab is None:
                    raise ValueError(f"variant {variant} requires a gloss vocabulary")
                self.gloss_encoder = TokenEncoder(gloss_vocab, config, rng, dtype)
        self.decoder = ProgressiveDecoder(frame_dim, config, rng, dtype)

    # -- forward -------------------------------------------------------
    def memory(self, text: list[str] | None, gloss: list[str] | None,
               dropout_rng=None) -> Tensor:
        """Cross-attention source for the decoder, per variant."""
        if self.variant == "t2s":
            return self.text_encoder(text, dropout_rng)
        if self.variant == "g2s":
            return self.gloss_encoder(gloss, dropout_rng)
        h_text = self.text_encoder(text, dropout_rng)
        h_gloss = self.gloss_encoder(gloss, dropout_rng)
        return fuse_memories(h_text, h_gloss, self.max_fused_rows).matrix

    def forward_teacher(self, text, gloss, frames: np.ndarray,
                        counters: np.ndarray | None = None,
                        dropout_rng=None) -> Tensor:
        """Teacher-forced predictions for every target position.

        The decoder input is the ground truth shifted right by one zero
        seed frame (counter 0), so row t predicts target frame t.
        """
        frames = np.asarray(frames, dtype=self.dtype)
        if counters is None:
            counters = counter_targets(frames.shape[0])
        counters = np.asarray(counters, dtype=self.dtype)
        seeded_frames = np.concatenate(
            [np.zeros((1, self.frame_dim), dtype=self.dtype), frames[:-1]], axis=0)
        seeded_counters = np.concatenate(
            [np.zeros(1, dtype=self.dtype), counters[:-1]])
        mem = self.memory(text, gloss, dropout_rng)
        return self.decoder.forward(seeded_frames, seeded_counters, mem,
                                    dropout_rng)

    def generate(self, text=None, gloss=None, max_frames: int = 300,
                 stop_eps: float = 0.02) -> tuple[np.ndarray, np.ndarray]:
        with tk.no_grad():
            mem = self.memory(text, gloss)
        return self.decoder.generate(mem, max_frames=max_frames,
                                     stop_eps=stop_eps)

    # -- parameters ------------------------------------------------------
    def named_parameters(self):
        if self.text_encoder is not None:
            yield from self.text_encoder.named_parameters("text_encoder")
        if self.gloss_encoder is not None:
            shared = (self.variant == "tg2s" and self.config.share_embeddings)
            yield from self.gloss_encoder.named_parameters(
                "gloss_encoder", include_embedding=not shared)
        yield from self.decoder.named_parameters("decoder")

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise KeyError(f"parameter mismatch: missing {sorted(missing)}, "
                           f"unexpected {sorted(extra)}")
        for name, tensor in own.items():
            arr = np.asarray(state[name], dtype=tensor.dtype)
            if arr.shape != tensor.shape:
                raise ValueError(f"parameter {name}: shape {arr.shape} != "
                                 f"{tensor.shape}")
            tensor.data = arr.copy()

"""Scikit-learn style estimator facade over the training pipelines.

SignGenerator and BackTranslator follow the fit/predict convention with
get_params/set_params from sklearn's BaseEstimator, so they compose with
the wider ecosystem (cloning, grid construction). fit consumes a Dataset
produced by corpus.load_dataset or corpus.synth_corpus.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .backtranslation import (BackTranslatorConfig, backtranslator_from_checkpoint,
                              bleu, channel_slice, train_backtranslator)
from .corpus import Dataset
from .encoders import EncoderConfig
from .trainer import TrainConfig, fit, model_from_checkpoint
from .validation import check_frame_matrix, check_is_fitted


class SignGenerator(BaseEstimator):
    """Text/gloss to frame-sequence generator (variants t2s, g2s, tg2s)."""

    def __init__(self, variant="tg2s", d_model=64, n_heads=4, n_layers=2,
                 d_ff=256, dropout=0.1, share_embeddings=False,
                 learning_rate=1e-4, batch_size=8, max_steps=2000, seed=0,
                 grad_clip_norm=1.0, eval_interval=50, deterministic=True,
                 stop_eps=0.02, max_frames=300, max_fused_rows=4096):
        self.variant = variant
        self.d_model = d_model
        self.n_heads = n_heads
        self.n_layers = n_layers
        self.d_ff = d_ff
        self.dropout = dropout
        self.share_embeddings = share_embeddings
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_steps = max_steps
        self.seed = seed
        self.grad_clip_norm = grad_clip_norm
        self.eval_interval = eval_interval
        self.deterministic = deterministic
        self.stop_eps = stop_eps
        self.max_frames = max_frames
        self.max_fused_rows = max_fused_rows

    def _train_config(self) -> TrainConfig:
        encoder = EncoderConfig(n_layers=self.n_layers, n_heads=self.n_heads,
                                d_model=self.d_model, d_ff=self.d_ff,
                                dropout=self.dropout,
                                share_embeddings=self.share_embeddings)
        return TrainConfig(variant=self.variant,
                           learning_rate=self.learning_rate,
                           batch_size=self.batch_size,
                           max_steps=self.max_steps, seed=self.seed,
                           grad_clip_norm=self.grad_clip_norm,
                           eval_interval=self.eval_interval,
                           deterministic=self.deterministic,
                           stop_eps=self.stop_eps,
                           max_frames=self.max_frames,
                           max_fused_rows=self.max_fused_rows,
                           encoder=encoder)

    def fit(self, dataset: Dataset, y=None, log_path=None):
        self.checkpoint_ = fit(dataset, self._train_config(), log_path=log_path)
        self.model_, _, self.norm_stats_ = model_from_checkpoint(self.checkpoint_)
        return self

    def generate(self, text=None, gloss=None):
        """Normalized frames and counters for one sentence pair."""
        check_is_fitted(self, "model_")
        return self.model_.generate(text=text, gloss=gloss,
                                    max_frames=self.max_frames,
                                    stop_eps=self.stop_eps)

    def predict(self, samples):
        """Raw (denormalized) frame matrices for a list of SampleRecords."""
        check_is_fitted(self, "model_")
        out = []
        for record in samples:
            frames, _ = self.generate(text=record.text, gloss=record.gloss)
            if self.norm_stats_ is not None:
                frames = self.norm_stats_.denormalize(frames)
            out.append(frames)
        return out

    def score(self, samples, y=None) -> float:
        """Negative teacher-forced MSE (higher is better)."""
        from .trainer import eval_loss
        check_is_fitted(self, "model_")
        return -eval_loss(self.model_, list(samples))


class BackTranslator(BaseEstimator):
    """Frame-sequence to text translator used for back-translation scoring."""

    def __init__(self, d_model=64, n_heads=4, n_layers=2, d_ff=256,
                 dropout=0.1, learning_rate=1e-3, batch_size=8,
                 max_steps=2000, seed=0, grad_clip_norm=1.0, eval_interval=50,
                 deterministic=True, channels="all", max_len_factor=2.0):
        self.d_model = d_model
        self.n_heads = n_heads
        self.n_layers = n_layers
        self.d_ff = d_ff
        self.dropout = dropout
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_steps = max_steps
        self.seed = seed
        self.grad_clip_norm = grad_clip_norm
        self.eval_interval = eval_interval
        self.deterministic = deterministic
        self.channels = channels
        self.max_len_factor = max_len_factor

    def _config(self) -> BackTranslatorConfig:
        return BackTranslatorConfig(
            d_model=self.d_model, n_heads=self.n_heads, n_layers=self.n_layers,
            d_ff=self.d_ff, dropout=self.dropout,
            learning_rate=self.learning_rate, batch_size=self.batch_size,
            max_steps=self.max_steps, seed=self.seed,
            grad_clip_norm=self.grad_clip_norm,
            eval_interval=self.eval_interval,
            deterministic=self.deterministic, channels=self.channels,
            max_len_factor=self.max_len_factor)

    def fit(self, dataset: Dataset, y=None, log_path=None):
        self.checkpoint_ = train_backtranslator(dataset, self._config(),
                                                log_path=log_path)
        self.bundle_ = backtranslator_from_checkpoint(self.checkpoint_)
        self.model_ = self.bundle_.model
        self.dataset_stats_ = dataset.stats
        return self

    def predict(self, frame_matrices) -> list[list[str]]:
        """Token lists for a list of raw (denormalized) frame matrices."""
        check_is_fitted(self, "bundle_")
        out = []
        for frames in frame_matrices:
            frames = check_frame_matrix(frames, name="frames")
            out.append(self.bundle_.translate_raw(frames))
        return out

    def score(self, samples, y=None) -> float:
        """Corpus BLEU-4 of back-translated ground-truth frames."""
        check_is_fitted(self, "bundle_")
        samples = list(samples)
        frames = [r.frames if self.dataset_stats_ is None
                  else self.dataset_stats_.denormalize(r.frames)
                  for r in samples]
        candidates = self.predict(frames)
        return bleu(candidates, [r.text for r in samples])[3]

"""Back-translation evaluation: pose-to-text model, BLEU and ROUGE-L.

Generated frame sequences are scored by translating them back to text with
a separately trained sign-translation model and comparing against the
source sentences. BLEU is corpus-level with clipped n-gram precision and
the brevity penalty, without smoothing; ROUGE-L is the sentence-averaged
longest-common-subsequence F1.
"""

from __future__ import annotations

import dataclasses
import json
import math
from collections import Counter
from pathlib import Path

import numpy as np

from . import tensorkit as tk
from .corpus import (BOS, EOS, ChannelLayout, Dataset, NormStats,
                     SampleRecord, Vocabulary, build_vocab)
from .decoder import DecoderLayer
from .encoders import (EncoderConfig, EncoderLayer, Linear, causal_mask,
                       sinusoid_positions)
from .model import SignModel
from .tensorkit import Tensor
from .trainer import Adam, Checkpoint, TrainingError, clip_gradients

METRIC_NAMES = ("bleu1", "bleu2", "bleu3", "bleu4", "rouge_l")


# ---------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------

def _ngram_counts(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidates: list[list[str]], references: list[list[str]],
         max_n: int = 4) -> list[float]:
    """Corpus BLEU-1..max_n with clipped precision and brevity penalty.

    BLEU-n is zero whenever any clipped precision up to order n is zero.
    """
    if not candidates:
        raise ValueError("bleu needs a nonempty corpus")
    if len(candidates) != len(references):
        raise ValueError(f"bleu: {len(candidates)} candidates vs "
                         f"{len(references)} references")
    matched = [0] * max_n
    total = [0] * max_n
    cand_len = ref_len = 0
    for cand, ref in zip(candidates, references):
        cand_len += len(cand)
        ref_len += len(ref)
        for n in range(1, max_n + 1):
            cand_counts = _ngram_counts(cand, n)
            ref_counts = _ngram_counts(ref, n)
            total[n - 1] += max(len(cand) - n + 1, 0)
            matched[n - 1] += sum(min(c, ref_counts[g])
                                  for g, c in cand_counts.items())
    precisions = [m / t if t > 0 else 0.0 for m, t in zip(matched, total)]
    if cand_len == 0:
        return [0.0] * max_n
    brevity = 1.0 if cand_len > ref_len else math.exp(1.0 - ref_len / cand_len)
    scores = []
    for n in range(1, max_n + 1):
        if any(p == 0.0 for p in precisions[:n]):
            scores.append(0.0)
        else:
            mean_log = sum(math.log(p) for p in precisions[:n]) / n
            scores.append(brevity * math.exp(mean_log))
    return scores


def _lcs_length(a: list[str], b: list[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, 1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidates: list[list[str]], references: list[list[str]]) -> float:
    """Sentence-averaged ROUGE-L F1 (longest common subsequence)."""
    if not candidates:
        raise ValueError("rouge_l needs a nonempty corpus")
    if len(candidates) != len(references):
        raise ValueError(f"rouge_l: {len(candidates)} candidates vs "
                         f"{len(references)} references")
    scores = []
    for cand, ref in zip(candidates, references):
        lcs = _lcs_length(cand, ref)
        if lcs == 0:
            scores.append(0.0)
            continue
        precision = lcs / len(cand)
        recall = lcs / len(ref)
        scores.append(2.0 * precision * recall / (precision + recall))
    return sum(scores) / len(scores)


# ---------------------------------------------------------------------
# pose-to-text model
# ---------------------------------------------------------------------

@dataclasses.dataclass
class BackTranslatorConfig:
    """Architecture and training settings for the pose-to-text model."""

    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    d_ff: int = 256
    dropout: float = 0.1
    learning_rate: float = 1e-3
    batch_size: int = 8
    max_steps: int = 2000
    seed: int = 0
    grad_clip_norm: float = 1.0
    eval_interval: int = 50
    deterministic: bool = True
    channels: str = "all"
    min_count: int = 1
    max_len_factor: float = 2.0

    def __post_init__(self):
        if self.channels not in ("all", "manual"):
            raise ValueError("channels must be 'all' or 'manual'")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")

    @property
    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(n_layers=self.n_layers, n_heads=self.n_heads,
                             d_model=self.d_model, d_ff=self.d_ff,
                             dropout=self.dropout)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "BackTranslatorConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def channel_slice(layout: ChannelLayout, channels: str) -> slice:
    if channels == "manual":
        return layout.manual_slice
    return slice(0, layout.frame_dim)


class PoseToTextModel:
    """Continuous-input encoder with a token decoder, trained by cross-entropy."""

    def __init__(self, frame_width: int, vocab: Vocabulary,
                 config: BackTranslatorConfig, dtype=np.float32):
        self.frame_width = frame_width
        self.vocab = vocab
        self.config = config
        self.dtype = dtype
        enc_cfg = config.encoder_config
        rng = np.random.default_rng([config.seed, 47])
        self.frame_embed = Linear(frame_width, enc_cfg.d_model, rng, dtype)
        self.enc_layers = [EncoderLayer(enc_cfg, rng, dtype)
                           for _ in range(enc_cfg.n_layers)]
        self.token_embedding = Tensor(
            rng.normal(0.0, 1.0 / math.sqrt(enc_cfg.d_model),
                       size=(len(vocab), enc_cfg.d_model)),
            requires_grad=True, dtype=dtype)
        self.dec_layers = [DecoderLayer(enc_cfg, rng, dtype)
                           for _ in range(enc_cfg.n_layers)]
        self.head = Linear(enc_cfg.d_model, len(vocab), rng, dtype)
        self.d_model = enc_cfg.d_model

    def encode(self, frames: np.ndarray, dropout_rng=None) -> Tensor:
        frames = np.asarray(frames, dtype=self.dtype)
        if frames.ndim != 2 or frames.shape[1] != self.frame_width:
            raise tk.ShapeError(
                f"pose input width {frames.shape}, expected (*, {self.frame_width})")
        x = self.frame_embed(Tensor(frames, dtype=self.dtype))
        x = tk.add(x, Tensor(sinusoid_positions(frames.shape[0], self.d_model,
                                                self.dtype)))
        for layer in self.enc_layers:
            x = layer(x, mask=None, dropout_rng=dropout_rng)
        return x

    def decode_logits(self, memory: Tensor, input_ids: np.ndarray,
                      dropout_rng=None) -> Tensor:
        x = tk.mul(tk.embedding_rows(self.token_embedding, input_ids),
                   math.sqrt(self.d_model))
        x = tk.add(x, Tensor(sinusoid_positions(len(input_ids), self.d_model,
                                                self.dtype)))
        mask = causal_mask(len(input_ids), self.dtype)
        for layer in self.dec_layers:
            x = layer(x, memory, mask, dropout_rng)
        return self.head(x)

    def loss(self, frames: np.ndarray, text: list[str], dropout_rng=None) -> Tensor:
        ids = self.vocab.encode(text)
        input_ids = np.concatenate([[BOS], ids])
        targets = np.concatenate([ids, [EOS]])
        memory = self.encode(frames, dropout_rng)
        logits = self.decode_logits(memory, input_ids, dropout_rng)
        return tk.cross_entropy_logits(logits, targets)

    def translate(self, frames: np.ndarray, max_len: int) -> list[str]:
        """Greedy decoding until EOS or the length cap."""
        with tk.no_grad():
            memory = self.encode(frames)
            ids = [BOS]
            for _ in range(max_len):
                logits = self.decode_logits(memory, np.asarray(ids))
                next_id = int(np.argmax(logits.data[-1]))
                if next_id == EOS:
                    break
                ids.append(next_id)
        return self.vocab.decode(ids[1:])

    def named_parameters(self):
        yield from self.frame_embed.named_parameters("frame_embed")
        for i, layer in enumerate(self.enc_layers):
            yield from layer.named_parameters(f"enc_layers.{i}")
        yield "token_embedding", self.token_embedding
        for i, layer in enumerate(self.dec_layers):
            yield from layer.named_parameters(f"dec_layers.{i}")
        yield from self.head.named_parameters("head")

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        if set(own) != set(state):
            raise KeyError("parameter names do not match the checkpoint")
        for name, tensor in own.items():
            tensor.data = np.asarray(state[name], dtype=tensor.dtype).copy()


class BackTranslatorBundle:
    """A trained pose-to-text model plus its normalization and length cap.

    Input frames are raw channel values; the bundle applies its own
    training-time z-normalization before translating, so it composes with
    generators trained under different statistics.
    """

    def __init__(self, model: PoseToTextModel, config: BackTranslatorConfig,
                 stats: NormStats | None, max_len: int, layout: ChannelLayout):
        self.model = model
        self.config = config
        self.stats = stats
        self.max_len = max_len
        self.layout = layout
        self.slice = channel_slice(layout, config.channels)

    def translate_raw(self, frames: np.ndarray) -> list[str]:
        if frames.shape[1] != self.layout.frame_dim:
            raise ValueError(
                f"frame width {frames.shape[1]} does not match the "
                f"backtranslator layout width {self.layout.frame_dim}")
        if self.stats is not None:
            frames = self.stats.normalize(frames)
        return self.model.translate(frames[:, self.slice], self.max_len)


# ---------------------------------------------------------------------
# training and evaluation
# ---------------------------------------------------------------------

def _batch_ce(model: PoseToTextModel, batch: list[SampleRecord],
              sl: slice, dropout_rng=None) -> Tensor:
    losses = [model.loss(r.frames[:, sl], r.text, dropout_rng) for r in batch]
    total = losses[0]
    for extra in losses[1:]:
        total = tk.add(total, extra)
    return tk.mul(total, 1.0 / len(losses))


def train_backtranslator(dataset: Dataset, config: BackTranslatorConfig,
                         log_path=None) -> Checkpoint:
    """Train the pose-to-text model on ground-truth frames."""
    vocab = build_vocab([r.text for r in dataset.train], config.min_count)
    sl = channel_slice(dataset.layout, config.channels)
    width = sl.stop - sl.start
    model = PoseToTextModel(width, vocab, config)
    optimizer = Adam(model.parameters(), lr=config.learning_rate)
    shuffle_rng = np.random.default_rng([config.seed, 301])
    dropout_rng = (np.random.default_rng([config.seed, 404])
                   if config.dropout > 0 else None)
    train = dataset.train
    dev = dataset.dev or train
    mean_ref_len = float(np.mean([len(r.text) for r in train]))

    best_dev = float("inf")
    best_params = model.state_dict()
    best_step = 0
    log_fh = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        order: list[int] = []
        for step in range(1, config.max_steps + 1):
            while len(order) < config.batch_size:
                order.extend(shuffle_rng.permutation(len(train)))
            batch = [train[i] for i in order[:config.batch_size]]
            order = order[config.batch_size:]
            loss = _batch_ce(model, batch, sl, dropout_rng)
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingError(
                    f"non-finite loss on batch {[r.id for r in batch]}")
            optimizer.zero_grad()
            tk.backward(loss)
            clip_gradients(optimizer.params, config.grad_clip_norm)
            optimizer.step()
            if step % config.eval_interval == 0 or step == config.max_steps:
                with tk.no_grad():
                    dev_loss = _batch_ce(model, dev, sl).item()
                if dev_loss <= best_dev:
                    best_dev = dev_loss
                    best_params = model.state_dict()
                    best_step = step
                if log_fh:
                    log_fh.write(json.dumps(
                        {"step": step, "train_ce": value, "dev_ce": dev_loss},
                        sort_keys=True) + "\n")
    finally:
        if log_fh:
            log_fh.close()
    model.load_state_dict(best_params)
    meta = {
        "kind": "backtranslator",
        "config": config.to_dict(),
        "step": best_step,
        "frame_width": width,
        "vocab": vocab.to_list(),
        "mean_ref_len": mean_ref_len,
        "norm_stats": dataset.stats.to_dict() if dataset.stats else None,
        "layout": dataset.layout.to_manifest(),
    }
    return Checkpoint(meta=meta, params=model.state_dict())


def backtranslator_from_checkpoint(ckpt: Checkpoint) -> BackTranslatorBundle:
    if ckpt.meta.get("kind") != "backtranslator":
        raise ValueError("checkpoint does not hold a backtranslator model")
    config = BackTranslatorConfig.from_dict(ckpt.meta["config"])
    vocab = Vocabulary.from_list(ckpt.meta["vocab"])
    model = PoseToTextModel(ckpt.meta["frame_width"], vocab, config)
    model.load_state_dict(ckpt.params)
    stats = (NormStats.from_dict(ckpt.meta["norm_stats"])
             if ckpt.meta.get("norm_stats") else None)
    max_len = max(4, int(math.ceil(config.max_len_factor
                                   * ckpt.meta["mean_ref_len"])))
    layout = ChannelLayout.from_manifest(ckpt.meta["layout"])
    return BackTranslatorBundle(model, config, stats, max_len, layout)


def score_corpus(candidates: list[list[str]],
                 references: list[list[str]]) -> dict[str, float]:
    b = bleu(candidates, references)
    return {"bleu1": b[0], "bleu2": b[1], "bleu3": b[2], "bleu4": b[3],
            "rouge_l": rouge_l(candidates, references)}


def evaluate_models(generators: dict[str, Checkpoint], bt_ckpt: Checkpoint,
                    dataset: Dataset, splits: tuple[str, ...] = ("dev", "test"),
                    include_ground_truth: bool = False) -> dict:
    """Generate, back-translate, and score each model on each split.

    All models must share the dataset's channel layout. The composition
    runs in raw channel space: generated frames are denormalized with the
    generator's statistics, and the backtranslator renormalizes with its
    own. Counters are stripped before back-translation. Scores are raw
    fractions in [0, 1].
    """
    from .trainer import model_from_checkpoint

    bt = backtranslator_from_checkpoint(bt_ckpt)
    if bt.layout.frame_dim != dataset.layout.frame_dim:
        raise ValueError("backtranslator layout does not match the dataset")

    report: dict[str, dict[str, dict[str, float]]] = {}
    rows: list[tuple[str, SignModel | None, NormStats | None, dict]] = []
    if include_ground_truth:
        rows.append(("ground_truth", None, None, {}))
    for name, ckpt in generators.items():
        model, config, stats = model_from_checkpoint(ckpt)
        if model.frame_dim != dataset.layout.frame_dim:
            raise ValueError(f"model {name!r} frame width {model.frame_dim} "
                             f"does not match layout {dataset.layout.frame_dim}")
        rows.append((name, model, stats, {"max_frames": config.max_frames,
                                          "stop_eps": config.stop_eps}))

    for name, model, stats, gen_kwargs in rows:
        report[name] = {}
        for split in splits:
            records = dataset.splits.get(split, [])
            if not records:
                raise ValueError(f"split {split!r} is empty or missing")
            candidates, references = [], []
            for record in records:
                if model is None:
                    frames = record.frames
                    if dataset.stats is not None:
                        frames = dataset.stats.denormalize(frames)
                else:
                    frames, _ = model.generate(text=record.text,
                                               gloss=record.gloss, **gen_kwargs)
                    if stats is not None:
                        frames = stats.denormalize(frames)
                candidates.append(bt.translate_raw(frames))
                references.append(record.text)
            report[name][split] = score_corpus(candidates, references)
    return report


def format_report(report: dict, splits: tuple[str, ...] = ("dev", "test")) -> str:
    """Aligned text table, one row per model, scores x100 with 2 decimals."""
    headers = ["Model"]
    for split in splits:
        headers += [f"{split}:B1", "B2", "B3", "B4", "ROUGE"]
    lines = []
    for name, per_split in report.items():
        row = [name]
        for split in splits:
            scores = per_split.get(split, {})
            row += [f"{100.0 * scores.get(m, float('nan')):.2f}"
                    for m in METRIC_NAMES]
        lines.append(row)
    widths = [max(len(h), *(len(r[i]) for r in lines)) if lines else len(h)
              for i, h in enumerate(headers)]
    def fmt(row):
        return "  ".join(cell.rjust(w) if i else cell.ljust(w)
                         for i, (cell, w) in enumerate(zip(row, widths)))
    out = [fmt(headers), fmt(["-" * w for w in widths])]
    out += [fmt(r) for r in lines]
    return "\n".join(out) + "\n"


def report_to_json(report: dict) -> dict:
    """Serialized form: scores x100, rounded to 2 decimals."""
    return {name: {split: {m: round(100.0 * v, 2) for m, v in scores.items()}
                   for split, scores in per_split.items()}
            for name, per_split in report.items()}

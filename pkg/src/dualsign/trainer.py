"""MSE training loop for the generator variants, with checkpointing.

Training is teacher-forced regression on [frame, counter] targets. The
loop keeps the best-dev-loss parameter snapshot, logs JSON-lines progress,
and is bit-reproducible for a fixed seed in deterministic mode.

Checkpoints are a single binary container: one JSON header line (format
version, config, vocabularies, normalization stats, parameter manifest)
followed by the raw parameter bytes in manifest order.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from . import tensorkit as tk
from .corpus import (Dataset, NormStats, SampleRecord, Vocabulary,
                     counter_targets)
from .encoders import EncoderConfig
from .model import VARIANTS, SignModel
from .tensorkit import Tensor

CHECKPOINT_MAGIC = "dualsign-checkpoint"
CHECKPOINT_VERSION = 1


class TrainingError(RuntimeError):
    """Training produced a non-finite loss or an invalid configuration."""


@dataclasses.dataclass
class TrainConfig:
    """Optimization settings plus the shared architecture config."""

    variant: str = "tg2s"
    learning_rate: float = 1e-4
    batch_size: int = 8
    max_steps: int = 2000
    seed: int = 0
    grad_clip_norm: float = 1.0
    eval_interval: int = 50
    deterministic: bool = True
    stop_eps: float = 0.02
    max_frames: int = 300
    max_fused_rows: int = 4096
    min_count: int = 1
    # Training-objective weight on the counter column's squared error.
    # 1.0 keeps the plain joint MSE; larger values counteract the counter
    # being a single channel among D+1 (termination quality at small scale).
    # Logged/evaluated MSE always remains the unweighted joint MSE.
    counter_loss_weight: float = 1.0
    encoder: EncoderConfig = dataclasses.field(default_factory=EncoderConfig)

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning rate must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.variant.lower() not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        self.variant = self.variant.lower()

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        encoder = d.pop("encoder")
        d.update(encoder)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        encoder_fields = {f.name for f in dataclasses.fields(EncoderConfig)}
        train_fields = {f.name for f in dataclasses.fields(cls)} - {"encoder"}
        unknown = set(d) - encoder_fields - train_fields
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        encoder = EncoderConfig(**{k: d.pop(k) for k in list(d)
                                   if k in encoder_fields})
        return cls(encoder=encoder, **d)


class Adam:
    """Adaptive moment estimation over a fixed parameter list."""

    def __init__(self, params: list[Tensor], lr: float = 1e-4,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        self.t += 1
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * (g * g)
            m_hat = self.m[i] / (1 - self.beta1 ** self.t)
            v_hat = self.v[i] / (1 - self.beta2 ** self.t)
            p.data -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.dtype)


def mse_loss(pred: Tensor, truth) -> Tensor:
    """Mean of squared differences over every element."""
    truth = tk.as_tensor(truth, dtype=pred.dtype)
    if pred.shape != truth.shape:
        raise tk.ShapeError(
            f"mse_loss: prediction shape {pred.shape} != truth {truth.shape}")
    diff = tk.sub(pred, truth)
    return tk.mean_all(tk.mul(diff, diff))


def clip_gradients(params: list[Tensor], max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most max_norm."""
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float((p.grad.astype(np.float64) ** 2).sum())
    norm = float(np.sqrt(total))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for p in params:
            if p.grad is not None:
                p.grad *= scale
    return norm


def sample_targets(record: SampleRecord, dtype=np.float32) -> np.ndarray:
    """Ground-truth [frames, counter] matrix of width D+1."""
    counters = counter_targets(record.frames.shape[0])
    return np.concatenate([record.frames, counters[:, None]],
                          axis=1).astype(dtype)


def weighted_mse_loss(pred: Tensor, truth: np.ndarray,
                      counter_weight: float) -> Tensor:
    """Joint MSE with the last (counter) column's squared error scaled."""
    if counter_weight == 1.0:
        return mse_loss(pred, truth)
    weights = np.ones(pred.shape, dtype=pred.dtype)
    weights[:, -1] = counter_weight
    diff = tk.sub(pred, tk.as_tensor(truth, dtype=pred.dtype))
    return tk.mean_all(tk.mul(tk.mul(diff, diff), Tensor(weights)))


def batch_loss(model: SignModel, batch: list[SampleRecord],
               dropout_rng=None, counter_weight: float = 1.0) -> Tensor:
    """Mean per-sample MSE over a batch; samples are processed independently."""
    if not batch:
        raise ValueError("batch must be nonempty")
    losses = []
    for record in batch:
        pred = model.forward_teacher(record.text, record.gloss, record.frames,
                                     dropout_rng=dropout_rng)
        losses.append(weighted_mse_loss(pred, sample_targets(record, model.dtype),
                                        counter_weight))
    total = losses[0]
    for extra in losses[1:]:
        total = tk.add(total, extra)
    return tk.mul(total, 1.0 / len(losses))


def train_step(batch: list[SampleRecord], model: SignModel, optimizer: Adam,
               config: TrainConfig, dropout_rng=None) -> float:
    """One optimizer update; returns the pre-update batch loss."""
    loss = batch_loss(model, batch, dropout_rng,
                      counter_weight=config.counter_loss_weight)
    value = loss.item()
    if not np.isfinite(value):
        ids = [r.id for r in batch]
        raise TrainingError(f"non-finite loss on batch {ids}")
    optimizer.zero_grad()
    tk.backward(loss)
    clip_gradients(optimizer.params, config.grad_clip_norm)
    optimizer.step()
    return value


def eval_loss(model: SignModel, records: list[SampleRecord]) -> float:
    if not records:
        return float("nan")
    with tk.no_grad():
        return batch_loss(model, records).item()


@dataclasses.dataclass
class Checkpoint:
    """Named parameter arrays plus everything needed to rebuild the model."""

    meta: dict
    params: dict[str, np.ndarray]

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        manifest, blobs, offset = [], [], 0
        for name in sorted(self.params):
            arr = np.ascontiguousarray(self.params[name])
            blob = arr.tobytes()
            manifest.append({"name": name, "shape": list(arr.shape),
                             "dtype": arr.dtype.name, "offset": offset,
                             "nbytes": len(blob)})
            blobs.append(blob)
            offset += len(blob)
        header = {"format": CHECKPOINT_MAGIC, "version": CHECKPOINT_VERSION,
                  "meta": self.meta, "params": manifest}
        with open(path, "wb") as fh:
            fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
            fh.write(b"\n")
            for blob in blobs:
                fh.write(blob)
        return path

    @classmethod
    def load(cls, path) -> "Checkpoint":
        with open(path, "rb") as fh:
            header = json.loads(fh.readline().decode("utf-8"))
            if header.get("format") != CHECKPOINT_MAGIC:
                raise ValueError(f"{path} is not a dualsign checkpoint")
            if header.get("version") != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version "
                                 f"{header.get('version')}")
            body = fh.read()
        params = {}
        for entry in header["params"]:
            raw = body[entry["offset"]:entry["offset"] + entry["nbytes"]]
            params[entry["name"]] = np.frombuffer(
                raw, dtype=np.dtype(entry["dtype"])).reshape(entry["shape"]).copy()
        return cls(meta=header["meta"], params=params)


def generator_checkpoint(model: SignModel, config: TrainConfig, step: int,
                         stats: NormStats | None) -> Checkpoint:
    meta = {
        "kind": "generator",
        "config": config.to_dict(),
        "step": step,
        "frame_dim": model.frame_dim,
        "text_vocab": model.text_vocab.to_list() if model.text_vocab else None,
        "gloss_vocab": model.gloss_vocab.to_list() if model.gloss_vocab else None,
        "norm_stats": stats.to_dict() if stats is not None else None,
    }
    return Checkpoint(meta=meta, params=model.state_dict())


def model_from_checkpoint(ckpt: Checkpoint) -> tuple[SignModel, TrainConfig,
                                                     NormStats | None]:
    if ckpt.meta.get("kind") != "generator":
        raise ValueError("checkpoint does not hold a generator model")
    config = TrainConfig.from_dict(ckpt.meta["config"])
    text_vocab = (Vocabulary.from_list(ckpt.meta["text_vocab"])
                  if ckpt.meta["text_vocab"] else None)
    gloss_vocab = (Vocabulary.from_list(ckpt.meta["gloss_vocab"])
                   if ckpt.meta["gloss_vocab"] else None)
    model = SignModel(config.variant, text_vocab, gloss_vocab,
                      ckpt.meta["frame_dim"], config.encoder,
                      seed=config.seed, max_fused_rows=config.max_fused_rows)
    model.load_state_dict(ckpt.params)
    stats = (NormStats.from_dict(ckpt.meta["norm_stats"])
             if ckpt.meta.get("norm_stats") else None)
    return model, config, stats


def fit(dataset: Dataset, config: TrainConfig,
        log_path=None) -> Checkpoint:
    """Train a generator on the dataset's train split, early-kept by dev loss."""
    text_vocab, gloss_vocab = dataset.build_vocabs(config.min_count)
    model = SignModel(config.variant, text_vocab, gloss_vocab,
                      dataset.layout.frame_dim, config.encoder,
                      seed=config.seed, max_fused_rows=config.max_fused_rows)
    optimizer = Adam(model.parameters(), lr=config.learning_rate)
    shuffle_rng = np.random.default_rng([config.seed, 101])
    dropout_rng = (np.random.default_rng([config.seed, 202])
                   if config.encoder.dropout > 0 else None)

    train = dataset.train
    dev = dataset.dev or train
    best_dev = float("inf")
    best_params = model.state_dict()
    best_step = 0
    log_fh = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        order: list[int] = []
        for step in range(1, config.max_steps + 1):
            while len(order) < config.batch_size:
                epoch = list(shuffle_rng.permutation(len(train)))
                order.extend(epoch)
            batch = [train[i] for i in order[:config.batch_size]]
            order = order[config.batch_size:]
            loss = train_step(batch, model, optimizer, config, dropout_rng)
            if step % config.eval_interval == 0 or step == config.max_steps:
                if config.counter_loss_weight != 1.0:
                    # the logged metric stays the unweighted joint MSE
                    loss = eval_loss(model, batch)
                dev_loss = eval_loss(model, dev)
                if dev_loss <= best_dev:
                    best_dev = dev_loss
                    best_params = model.state_dict()
                    best_step = step
                if log_fh:
                    log_fh.write(json.dumps(
                        {"step": step, "train_mse": loss, "dev_mse": dev_loss},
                        sort_keys=True) + "\n")
    finally:
        if log_fh:
            log_fh.close()
    if config.max_steps == 0:
        best_params, best_step = model.state_dict(), 0
    model.load_state_dict(best_params)
    return generator_checkpoint(model, config, best_step, dataset.stats)

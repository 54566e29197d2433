"""Vocabularies, dataset ingestion, channel layout, and synthetic corpora.

Datasets are JSON-lines files of records ``{"id", "text", "gloss", "frames"}``
referenced by a manifest that declares the channel layout, the split files,
and the normalization mode. Per-channel z-score statistics are computed on
the training split only and applied to every split.

The synthetic corpus pairs a small gloss inventory with analytic frame
trajectories. Text carries modifier adjectives the glosses lack, while gloss
variants disambiguate antipodal motion prototypes the text cannot see, so a
generator needs both inputs to reconstruct the frames exactly.
"""

from __future__ import annotations

import dataclasses
import json
from collections import Counter
from pathlib import Path

import numpy as np

from .validation import check_frame_matrix, check_token_list

PAD, UNK, BOS, EOS = 0, 1, 2, 3
SPECIAL_TOKENS = ("<pad>", "<unk>", "<bos>", "<eos>")


class CorpusError(ValueError):
    """A dataset file or record violates the corpus contracts."""


class Vocabulary:
    """Dense token-index bijection with fixed special tokens."""

    def __init__(self, tokens: list[str]):
        self.index_to_token = list(SPECIAL_TOKENS) + [t for t in tokens
                                                      if t not in SPECIAL_TOKENS]
        self.token_to_index = {t: i for i, t in enumerate(self.index_to_token)}
        if len(self.token_to_index) != len(self.index_to_token):
            raise CorpusError("vocabulary tokens must be unique")

    def __len__(self) -> int:
        return len(self.index_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_index

    def encode(self, tokens: list[str]) -> np.ndarray:
        return np.array([self.token_to_index.get(t, UNK) for t in tokens],
                        dtype=np.int64)

    def decode(self, ids, strip_specials: bool = True) -> list[str]:
        tokens = [self.index_to_token[int(i)] for i in ids]
        if strip_specials:
            tokens = [t for t in tokens if t not in SPECIAL_TOKENS]
        return tokens

    def to_list(self) -> list[str]:
        return list(self.index_to_token)

    @classmethod
    def from_list(cls, tokens: list[str]) -> "Vocabulary":
        if tuple(tokens[:4]) != SPECIAL_TOKENS:
            raise CorpusError("serialized vocabulary must start with the special tokens")
        return cls(tokens[4:])


def build_vocab(sentences: list[list[str]], min_count: int = 1) -> Vocabulary:
    """Build a vocabulary ordered by frequency (desc) then lexicographically."""
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    if not sentences:
        raise CorpusError("cannot build a vocabulary from an empty corpus")
    counts = Counter(tok for sent in sentences for tok in sent)
    kept = [t for t, c in counts.items() if c >= min_count]
    kept.sort(key=lambda t: (-counts[t], t))
    return Vocabulary(kept)


def counter_targets(length: int) -> np.ndarray:
    """Progress counter c_t = t/T for t = 1..T; final value exactly 1."""
    if length < 1:
        raise ValueError(f"sequence length must be >= 1, got {length}")
    return np.arange(1, length + 1, dtype=np.float64) / length


@dataclasses.dataclass(frozen=True)
class ChannelLayout:
    """Column layout of a frame: manual joints, facial landmarks, AUs."""

    manual_dims: int = 150
    landmark_count: int = 68
    landmark_coords: int = 2
    au_dims: int = 17

    def __post_init__(self):
        if self.manual_dims < 0 or self.manual_dims % 3 != 0:
            raise ValueError("manual_dims must be a nonnegative multiple of 3")
        if self.landmark_coords not in (2, 3):
            raise ValueError("landmark_coords must be 2 or 3")
        if self.landmark_count < 0 or self.au_dims < 0:
            raise ValueError("channel counts must be nonnegative")

    @property
    def landmark_dims(self) -> int:
        return self.landmark_count * self.landmark_coords

    @property
    def frame_dim(self) -> int:
        return self.manual_dims + self.landmark_dims + self.au_dims

    @property
    def manual_slice(self) -> slice:
        return slice(0, self.manual_dims)

    @property
    def landmark_slice(self) -> slice:
        return slice(self.manual_dims, self.manual_dims + self.landmark_dims)

    @property
    def au_slice(self) -> slice:
        return slice(self.manual_dims + self.landmark_dims, self.frame_dim)

    def to_manifest(self) -> dict:
        return {"manual": self.manual_dims, "landmarks": self.landmark_count,
                "landmark_coords": self.landmark_coords, "aus": self.au_dims}

    @classmethod
    def from_manifest(cls, spec: dict) -> "ChannelLayout":
        return cls(manual_dims=spec.get("manual", 150),
                   landmark_count=spec.get("landmarks", 68),
                   landmark_coords=spec.get("landmark_coords", 2),
                   au_dims=spec.get("aus", 17))


@dataclasses.dataclass
class SampleRecord:
    """One sentence: text tokens, gloss tokens, and a frame matrix."""

    id: str
    text: list[str]
    gloss: list[str]
    frames: np.ndarray

    def validate(self, layout: ChannelLayout | None = None) -> None:
        check_token_list(self.text, f"text of sample {self.id!r}")
        check_token_list(self.gloss, f"gloss of sample {self.id!r}")
        if self.frames.ndim != 2 or self.frames.shape[0] < 1:
            raise CorpusError(f"sample {self.id!r}: frames must be a nonempty matrix")
        if layout is not None and self.frames.shape[1] != layout.frame_dim:
            raise CorpusError(
                f"sample {self.id!r}: frame width {self.frames.shape[1]} does not "
                f"match layout width {layout.frame_dim}")
        bad = np.argwhere(~np.isfinite(self.frames))
        if bad.size:
            t, c = bad[0]
            raise CorpusError(
                f"sample {self.id!r}: non-finite value at frame {int(t)}, channel {int(c)}")


@dataclasses.dataclass
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    def normalize(self, frames: np.ndarray) -> np.ndarray:
        return (frames - self.mean) / self.std

    def denormalize(self, frames: np.ndarray) -> np.ndarray:
        return frames * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(np.asarray(d["mean"], dtype=np.float64),
                   np.asarray(d["std"], dtype=np.float64))


def compute_norm_stats(records: list[SampleRecord], eps: float = 1e-8) -> NormStats:
    """Per-channel mean/std over all frames; near-constant channels pass through."""
    stacked = np.concatenate([r.frames for r in records], axis=0)
    mean = stacked.mean(axis=0)
    std = stacked.std(axis=0)
    passthrough = std < eps
    mean = np.where(passthrough, 0.0, mean)
    std = np.where(passthrough, 1.0, std)
    return NormStats(mean, std)


@dataclasses.dataclass
class Dataset:
    """Loaded splits plus layout and (optional) normalization statistics.

    When stats is set, the stored frames are z-normalized; use
    stats.denormalize to recover raw channel values.
    """

    splits: dict[str, list[SampleRecord]]
    layout: ChannelLayout
    stats: NormStats | None

    @property
    def train(self) -> list[SampleRecord]:
        return self.splits["train"]

    @property
    def dev(self) -> list[SampleRecord]:
        return self.splits.get("dev", [])

    @property
    def test(self) -> list[SampleRecord]:
        return self.splits.get("test", [])

    def build_vocabs(self, min_count: int = 1) -> tuple[Vocabulary, Vocabulary]:
        text_vocab = build_vocab([r.text for r in self.train], min_count)
        gloss_vocab = build_vocab([r.gloss for r in self.train], min_count)
        return text_vocab, gloss_vocab


def save_split(path: Path, records: list[SampleRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps({"id": r.id, "text": r.text, "gloss": r.gloss,
                                 "frames": r.frames.tolist()}) + "\n")


def load_split(path: Path, layout: ChannelLayout) -> list[SampleRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            raw = json.loads(line)
            rec = SampleRecord(
                id=str(raw["id"]),
                text=[str(t) for t in raw["text"]],
                gloss=[str(t) for t in raw["gloss"]],
                frames=check_frame_matrix(raw["frames"],
                                          name=f"{path.name}:{line_no}"))
            rec.validate(layout)
            au = rec.frames[:, layout.au_slice]
            if au.size and (au.min() < 0.0 or au.max() > 5.0):
                raise CorpusError(
                    f"sample {rec.id!r}: AU intensities outside [0, 5]")
            records.append(rec)
    return records


def write_manifest(out_dir: Path, layout: ChannelLayout,
                   split_files: dict[str, str], normalize: str = "zscore") -> Path:
    manifest = {"layout": layout.to_manifest(), "splits": split_files,
                "normalize": normalize}
    path = Path(out_dir) / "manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def load_dataset(manifest_path) -> Dataset:
    """Load every split named by a manifest, validate, and normalize.

    Normalization statistics come from the training split only.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise CorpusError(f"manifest not found: {manifest_path}")
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    layout = ChannelLayout.from_manifest(manifest.get("layout", {}))
    normalize = manifest.get("normalize", "zscore")
    if normalize not in ("zscore", "none"):
        raise CorpusError(f"unknown normalize mode {normalize!r}")

    splits: dict[str, list[SampleRecord]] = {}
    for name, rel in manifest.get("splits", {}).items():
        path = manifest_path.parent / rel
        if not path.exists():
            raise CorpusError(f"split file not found: {path}")
        splits[name] = load_split(path, layout)
    if "train" not in splits or not splits["train"]:
        raise CorpusError("manifest must declare a nonempty train split")

    stats = None
    if normalize == "zscore":
        stats = compute_norm_stats(splits["train"])
        for records in splits.values():
            for r in records:
                r.frames = stats.normalize(r.frames)
    return Dataset(splits=splits, layout=layout, stats=stats)


# ---------------------------------------------------------------------
# synthetic corpus
# ---------------------------------------------------------------------

BASE_WORDS = ("rain", "wind", "snow", "sun", "cloud", "fog",
              "storm", "frost", "hail", "mist")
MODIFIER = "heavy"
FRAMES_PER_TOKEN = 4
_PROFILE = np.array([0.5, 1.0, 1.0, 0.75])
MODIFIER_SCALE = 1.5


@dataclasses.dataclass
class SynthInventory:
    """Deterministic token inventory and its analytic frame prototypes.

    Words at even index have two gloss variants whose motion prototypes are
    antipodal, so text alone (which names only the word) cannot recover the
    motion; the modifier adjective appears only in text, so gloss alone
    cannot recover the amplitude.
    """

    layout: ChannelLayout
    words: list[str]
    motion_dirs: np.ndarray      # (n_words, pose_dims)
    au_patterns: np.ndarray      # (2, au_dims), indexed by variant

    @classmethod
    def create(cls, seed: int, n_words: int,
               layout: ChannelLayout | None = None) -> "SynthInventory":
        layout = layout or ChannelLayout()
        if not (1 <= n_words <= len(BASE_WORDS)):
            raise ValueError(f"n_words must be in [1, {len(BASE_WORDS)}]")
        rng = np.random.default_rng([int(seed), 1721])
        pose_dims = layout.manual_dims + layout.landmark_dims
        dirs = rng.normal(0.0, 0.6, size=(n_words, pose_dims))
        aus = rng.uniform(0.3, 2.2, size=(2, layout.au_dims))
        return cls(layout=layout, words=list(BASE_WORDS[:n_words]),
                   motion_dirs=dirs, au_patterns=aus)

    def n_variants(self, word_index: int) -> int:
        return 2 if word_index % 2 == 0 else 1

    def gloss_token(self, word_index: int, variant: int) -> str:
        word = self.words[word_index].upper()
        if self.n_variants(word_index) == 1:
            return word
        return f"{word}-{'AB'[variant]}"

    def segment(self, word_index: int, variant: int, modified: bool) -> np.ndarray:
        """Analytic 4-frame trajectory for one token."""
        amp = MODIFIER_SCALE if modified else 1.0
        sign = 1.0 if variant == 0 else -1.0
        seg = np.zeros((FRAMES_PER_TOKEN, self.layout.frame_dim))
        pose = self.layout.manual_dims + self.layout.landmark_dims
        seg[:, :pose] = _PROFILE[:, None] * (sign * amp) * self.motion_dirs[word_index]
        seg[:, pose:] = _PROFILE[:, None] * amp * self.au_patterns[variant]
        return seg

    def build_sample(self, sample_id: str, entries: list[tuple[int, int, bool]]
                     ) -> SampleRecord:
        """Assemble a record from (word_index, variant, modified) entries."""
        text, gloss, segments = [], [], []
        for word_index, variant, modified in entries:
            if modified:
                text.append(MODIFIER)
            text.append(self.words[word_index])
            gloss.append(self.gloss_token(word_index, variant))
            segments.append(self.segment(word_index, variant, modified))
        return SampleRecord(id=sample_id, text=text, gloss=gloss,
                            frames=np.concatenate(segments, axis=0))


def synth_corpus(out_dir, seed: int, n_samples: int, n_words: int = 6,
                 min_glosses: int = 3, max_glosses: int = 5,
                 modifier_prob: float = 0.4,
                 eval_samples: int | None = None,
                 layout: ChannelLayout | None = None) -> Path:
    """Write a deterministic synthetic dataset; returns the manifest path.

    n_samples is the training-split size; dev and test each get
    eval_samples sentences (default max(8, n_samples // 5)).
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if not (1 <= min_glosses <= max_glosses):
        raise ValueError("need 1 <= min_glosses <= max_glosses")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    inventory = SynthInventory.create(seed, n_words, layout)
    if eval_samples is None:
        eval_samples = max(8, n_samples // 5)

    sizes = {"train": n_samples, "dev": eval_samples, "test": eval_samples}
    split_files = {}
    for split, size in sizes.items():
        rng = np.random.default_rng([int(seed), 977, _split_stream(split)])
        records = []
        for i in range(size):
            n_tokens = int(rng.integers(min_glosses, max_glosses + 1))
            entries = []
            for _ in range(n_tokens):
                w = int(rng.integers(len(inventory.words)))
                v = int(rng.integers(inventory.n_variants(w)))
                m = bool(rng.random() < modifier_prob)
                entries.append((w, v, m))
            records.append(inventory.build_sample(
                f"synth-{seed}-{split}-{i:04d}", entries))
        filename = f"{split}.jsonl"
        save_split(out_dir / filename, records)
        split_files[split] = filename

    manifest = write_manifest(out_dir, inventory.layout, split_files, "zscore")
    train = load_split(out_dir / split_files["train"], inventory.layout)
    stats = compute_norm_stats(train)
    with open(out_dir / "stats.json", "w", encoding="utf-8") as fh:
        json.dump(stats.to_dict(), fh, sort_keys=True)
        fh.write("\n")
    return manifest


def _split_stream(split: str) -> int:
    return {"train": 0, "dev": 1, "test": 2}[split]

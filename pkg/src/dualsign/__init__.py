"""Dual-encoder transformer for sign language generation.

Maps (text, gloss) token pairs to continuous frame sequences of body/hand
joints, facial landmarks, and facial action units, and evaluates
generations by back-translation with BLEU and ROUGE-L.
"""

__version__ = "0.1.0"

from .backtranslation import (BackTranslatorConfig, bleu, evaluate_models,
                              rouge_l, train_backtranslator)
from .corpus import (ChannelLayout, Dataset, SampleRecord, Vocabulary,
                     build_vocab, counter_targets, load_dataset, synth_corpus)
from .encoders import EncoderConfig
from .estimators import BackTranslator, SignGenerator
from .fusion import FusedMemory, fuse_memories
from .model import SignModel
from .posstats import pos_counts, two_proportion_z
from .trainer import Checkpoint, TrainConfig, fit, mse_loss, train_step

__all__ = [
    "BackTranslator",
    "BackTranslatorConfig",
    "ChannelLayout",
    "Checkpoint",
    "Dataset",
    "EncoderConfig",
    "FusedMemory",
    "SampleRecord",
    "SignGenerator",
    "SignModel",
    "TrainConfig",
    "Vocabulary",
    "bleu",
    "build_vocab",
    "counter_targets",
    "evaluate_models",
    "fit",
    "fuse_memories",
    "load_dataset",
    "mse_loss",
    "pos_counts",
    "rouge_l",
    "synth_corpus",
    "train_backtranslator",
    "train_step",
    "two_proportion_z",
]

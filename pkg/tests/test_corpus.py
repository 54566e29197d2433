import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualsign import corpus
from dualsign.corpus import (ChannelLayout, CorpusError, SampleRecord,
                             SynthInventory, Vocabulary, build_vocab,
                             compute_norm_stats, counter_targets, load_dataset,
                             load_split, save_split, synth_corpus)

TINY_LAYOUT = ChannelLayout(manual_dims=6, landmark_count=2,
                            landmark_coords=2, au_dims=2)


class TestVocabulary:
    def test_build_orders_by_frequency_then_lexicographic(self):
        vocab = build_vocab([["a", "b"], ["a"]])
        assert vocab.index_to_token == ["<pad>", "<unk>", "<bos>", "<eos>", "a", "b"]

    def test_min_count_threshold(self):
        vocab = build_vocab([["a"]], min_count=2)
        assert len(vocab) == 4
        assert vocab.encode(["a"]).tolist() == [corpus.UNK]

    def test_empty_corpus_rejected(self):
        with pytest.raises(CorpusError):
            build_vocab([])

    def test_specials_fixed_and_dense(self):
        vocab = build_vocab([["x", "y", "x"]])
        assert vocab.encode(["<pad>", "<unk>", "<bos>", "<eos>"]).tolist() == [0, 1, 2, 3]
        ids = vocab.encode(vocab.index_to_token)
        assert ids.tolist() == list(range(len(vocab)))

    def test_round_trip_serialization(self):
        vocab = build_vocab([["b", "a", "b"]])
        assert Vocabulary.from_list(vocab.to_list()).index_to_token == vocab.index_to_token

    def test_ties_break_lexicographically(self):
        vocab = build_vocab([["zeta", "eta"]])
        assert vocab.index_to_token[4:] == ["eta", "zeta"]


class TestCounterTargets:
    def test_five_steps(self):
        assert counter_targets(5).tolist() == [0.2, 0.4, 0.6, 0.8, 1.0]

    def test_degenerate_length(self):
        assert counter_targets(1).tolist() == [1.0]

    def test_four_steps(self):
        assert counter_targets(4).tolist() == [0.25, 0.5, 0.75, 1.0]

    def test_invalid_length(self):
        with pytest.raises(ValueError):
            counter_targets(0)

    @settings(max_examples=80, deadline=None)
    @given(st.integers(1, 10000))
    def test_values_are_t_over_total_and_end_at_one(self, total):
        c = counter_targets(total)
        assert c[-1] == 1.0
        assert np.array_equal(c, np.arange(1, total + 1) / total)
        # spacing equals 1/T to within one float64 ulp
        if total > 1:
            assert np.abs(np.diff(c) - 1.0 / total).max() <= np.finfo(np.float64).eps


class TestChannelLayout:
    def test_default_matches_feature_extraction(self):
        layout = ChannelLayout()
        assert layout.manual_dims == 150
        assert layout.landmark_dims == 136
        assert layout.au_dims == 17
        assert layout.frame_dim == 303

    def test_three_coordinate_landmarks(self):
        layout = ChannelLayout(landmark_coords=3)
        assert layout.landmark_dims == 204

    def test_slices_partition_the_frame(self):
        layout = TINY_LAYOUT
        frame = np.arange(layout.frame_dim)
        parts = [frame[layout.manual_slice], frame[layout.landmark_slice],
                 frame[layout.au_slice]]
        assert np.array_equal(np.concatenate(parts), frame)

    def test_manifest_round_trip(self):
        layout = ChannelLayout(landmark_coords=3)
        assert ChannelLayout.from_manifest(layout.to_manifest()) == layout


def _write_dataset(tmp_path, records, layout=TINY_LAYOUT, normalize="zscore"):
    save_split(tmp_path / "train.jsonl", records)
    save_split(tmp_path / "dev.jsonl", records[:1])
    return corpus.write_manifest(tmp_path, layout,
                                 {"train": "train.jsonl", "dev": "dev.jsonl"},
                                 normalize)


def _record(sample_id="s0", n_frames=3, layout=TINY_LAYOUT, seed=0):
    rng = np.random.default_rng(seed)
    frames = rng.normal(0.0, 1.0, size=(n_frames, layout.frame_dim))
    frames[:, layout.au_slice] = rng.uniform(0.0, 5.0,
                                             size=(n_frames, layout.au_dims))
    return SampleRecord(sample_id, ["hello", "world"], ["HELLO"], frames)


class TestLoadDataset:
    def test_single_record_stats_match(self, tmp_path):
        rec = _record()
        manifest = _write_dataset(tmp_path, [rec])
        ds = load_dataset(manifest)
        assert len(ds.train) == 1
        assert np.allclose(ds.stats.mean, rec.frames.mean(axis=0))

    def test_width_mismatch_names_sample_id(self, tmp_path):
        rec = _record()
        bad = SampleRecord("bad-one", ["x"], ["X"],
                           rec.frames[:, :-1])
        save_split(tmp_path / "train.jsonl", [rec, bad])
        corpus.write_manifest(tmp_path, TINY_LAYOUT, {"train": "train.jsonl"})
        with pytest.raises(CorpusError, match="bad-one"):
            load_dataset(tmp_path / "manifest.json")

    def test_non_finite_names_sample_and_frame(self, tmp_path):
        rec = _record("nf-sample")
        rec.frames[1, 2] = np.nan
        path = tmp_path / "train.jsonl"
        with open(path, "w") as fh:
            fh.write(json.dumps({"id": rec.id, "text": rec.text,
                                 "gloss": rec.gloss,
                                 "frames": rec.frames.tolist()}) + "\n")
        corpus.write_manifest(tmp_path, TINY_LAYOUT, {"train": "train.jsonl"})
        with pytest.raises(ValueError, match="nf-sample|non-finite"):
            load_dataset(tmp_path / "manifest.json")

    def test_au_range_enforced(self, tmp_path):
        rec = _record()
        rec.frames[0, TINY_LAYOUT.au_slice.start] = 6.0
        _write_dataset(tmp_path, [rec])
        with pytest.raises(CorpusError, match=r"AU.*\[0, 5\]"):
            load_dataset(tmp_path / "manifest.json")

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(CorpusError, match="manifest"):
            load_dataset(tmp_path / "nope.json")

    def test_split_round_trip_bit_identical(self, tmp_path):
        recs = [_record(f"s{i}", seed=i) for i in range(3)]
        save_split(tmp_path / "a.jsonl", recs)
        loaded = load_split(tmp_path / "a.jsonl", TINY_LAYOUT)
        for orig, back in zip(recs, loaded):
            assert np.array_equal(orig.frames, back.frames)
            assert orig.text == back.text and orig.gloss == back.gloss

    def test_normalization_lossless(self, tmp_path):
        recs = [_record(f"s{i}", seed=i) for i in range(4)]
        raw = [r.frames.copy() for r in recs]
        manifest = _write_dataset(tmp_path, recs)
        ds = load_dataset(manifest)
        for original, rec in zip(raw, ds.train):
            assert np.abs(ds.stats.denormalize(rec.frames) - original).max() < 1e-6

    def test_normalize_none_keeps_raw(self, tmp_path):
        recs = [_record(f"s{i}", seed=i) for i in range(2)]
        raw = recs[0].frames.copy()
        manifest = _write_dataset(tmp_path, recs, normalize="none")
        ds = load_dataset(manifest)
        assert ds.stats is None
        assert np.array_equal(ds.train[0].frames, raw)

    def test_constant_channels_pass_through(self):
        layout = TINY_LAYOUT
        recs = [_record(f"s{i}", seed=i) for i in range(3)]
        for r in recs:
            r.frames[:, 0] = 2.5
        stats = compute_norm_stats(recs)
        assert stats.std[0] == 1.0 and stats.mean[0] == 0.0


class TestSynthCorpus:
    def test_equal_seeds_equal_bytes(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        synth_corpus(a, seed=7, n_samples=5, layout=TINY_LAYOUT)
        synth_corpus(b, seed=7, n_samples=5, layout=TINY_LAYOUT)
        for name in ("train.jsonl", "dev.jsonl", "test.jsonl",
                     "manifest.json", "stats.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes(), name

    def test_different_seeds_differ(self, tmp_path):
        synth_corpus(tmp_path / "a", seed=1, n_samples=5, layout=TINY_LAYOUT)
        synth_corpus(tmp_path / "b", seed=2, n_samples=5, layout=TINY_LAYOUT)
        assert (tmp_path / "a/train.jsonl").read_bytes() != \
            (tmp_path / "b/train.jsonl").read_bytes()

    def test_four_frames_per_gloss_token(self, tmp_path):
        manifest = synth_corpus(tmp_path, seed=3, n_samples=8, layout=TINY_LAYOUT)
        ds = load_dataset(manifest)
        for rec in ds.train:
            assert rec.frames.shape[0] == 4 * len(rec.gloss)

    def test_three_gloss_tokens_give_twelve_frames(self):
        inventory = SynthInventory.create(0, 4, TINY_LAYOUT)
        rec = inventory.build_sample("x", [(0, 0, False), (1, 0, True),
                                           (2, 1, False)])
        assert rec.frames.shape[0] == 12

    def test_modifier_scales_au_columns_by_1_5(self):
        inventory = SynthInventory.create(11, 6, TINY_LAYOUT)
        layout = inventory.layout
        modified = inventory.build_sample("m", [(2, 1, True)])
        plain = inventory.build_sample("p", [(2, 1, False)])
        assert np.allclose(modified.frames[:, layout.au_slice],
                           1.5 * plain.frames[:, layout.au_slice])
        assert np.allclose(modified.frames, 1.5 * plain.frames)
        assert modified.text == ["heavy", inventory.words[2]]
        assert plain.text == [inventory.words[2]]

    def test_homonym_variants_are_antipodal_in_pose(self):
        inventory = SynthInventory.create(5, 6, TINY_LAYOUT)
        layout = inventory.layout
        a = inventory.build_sample("a", [(0, 0, False)])
        b = inventory.build_sample("b", [(0, 1, False)])
        pose = slice(0, layout.manual_dims + layout.landmark_dims)
        assert np.allclose(a.frames[:, pose], -b.frames[:, pose])
        assert a.text == b.text  # text cannot tell the variants apart
        assert a.gloss != b.gloss

    def test_au_channels_stay_in_range(self, tmp_path):
        manifest = synth_corpus(tmp_path, seed=9, n_samples=20)
        ds = load_dataset(manifest)
        for split in ds.splits.values():
            for rec in split:
                au = ds.stats.denormalize(rec.frames)[:, ds.layout.au_slice]
                assert au.min() >= 0.0 and au.max() <= 5.0

    def test_gloss_vocab_smaller_world_than_text(self, tmp_path):
        manifest = synth_corpus(tmp_path, seed=4, n_samples=30, layout=TINY_LAYOUT)
        ds = load_dataset(manifest)
        text_vocab, gloss_vocab = ds.build_vocabs()
        assert corpus.MODIFIER in text_vocab
        assert corpus.MODIFIER.upper() not in gloss_vocab


@pytest.mark.skipif("PHOENIX14T_MANIFEST" not in __import__("os").environ,
                    reason="real weather-corpus features not supplied")
def test_phoenix_gloss_vocabulary_size():
    import os
    ds = load_dataset(os.environ["PHOENIX14T_MANIFEST"])
    _, gloss_vocab = ds.build_vocabs()
    assert len(gloss_vocab) == 1066 + 4


class TestSampleValidation:
    def test_empty_text_rejected(self):
        rec = SampleRecord("x", [], ["G"], np.zeros((2, TINY_LAYOUT.frame_dim)))
        with pytest.raises(ValueError):
            rec.validate(TINY_LAYOUT)

    def test_non_finite_position_reported(self):
        frames = np.zeros((3, TINY_LAYOUT.frame_dim))
        frames[2, 1] = np.inf
        rec = SampleRecord("weird", ["a"], ["A"], frames)
        with pytest.raises(CorpusError, match="frame 2"):
            rec.validate(TINY_LAYOUT)

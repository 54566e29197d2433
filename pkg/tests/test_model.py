import numpy as np
import pytest

from dualsign import tensorkit as tk
from dualsign.corpus import Vocabulary, counter_targets
from dualsign.encoders import EncoderConfig
from dualsign.fusion import FusionCapacityError
from dualsign.model import SignModel

TOY = EncoderConfig(n_layers=1, n_heads=2, d_model=8, d_ff=16, dropout=0.0)
D = 12
TEXT_VOCAB = Vocabulary(["alpha", "beta", "gamma", "heavy"])
GLOSS_VOCAB = Vocabulary(["ALPHA", "BETA", "GAMMA"])


def build(variant="tg2s", config=TOY, **kwargs):
    return SignModel(variant, TEXT_VOCAB, GLOSS_VOCAB, D, config, **kwargs)


class TestVariants:
    def test_unknown_variant_rejected(self):
        with pytest.raises(ValueError, match="variant"):
            build("x2s")

    def test_t2s_has_no_gloss_encoder(self):
        model = build("t2s")
        assert model.gloss_encoder is None
        mem = model.memory(["alpha", "beta"], None)
        assert mem.shape == (2, TOY.d_model)

    def test_g2s_has_no_text_encoder(self):
        model = build("g2s")
        assert model.text_encoder is None
        mem = model.memory(None, ["ALPHA"])
        assert mem.shape == (1, TOY.d_model)

    def test_tg2s_memory_has_cartesian_rows(self):
        model = build("tg2s")
        mem = model.memory(["alpha", "beta", "gamma"], ["ALPHA", "BETA"])
        assert mem.shape == (6, TOY.d_model)

    def test_variant_case_insensitive(self):
        assert build("TG2S").variant == "tg2s"

    def test_fused_row_cap_respected(self):
        model = build("tg2s", max_fused_rows=4)
        with pytest.raises(FusionCapacityError):
            model.memory(["alpha"] * 3, ["ALPHA"] * 2)


class TestSharedEmbeddings:
    def test_disjoint_parameters_by_default(self):
        model = build("tg2s")
        text_ids = {id(t) for _, t in
                    model.text_encoder.named_parameters("x")}
        gloss_ids = {id(t) for _, t in
                     model.gloss_encoder.named_parameters("x")}
        assert not text_ids & gloss_ids

    def test_share_embeddings_shares_only_the_table(self):
        config = EncoderConfig(n_layers=1, n_heads=2, d_model=8, d_ff=16,
                               dropout=0.0, share_embeddings=True)
        model = build("tg2s", config=config)
        assert model.gloss_encoder.embedding is model.text_encoder.embedding
        text_layers = {id(t) for _, t in
                       model.text_encoder.layers[0].named_parameters("x")}
        gloss_layers = {id(t) for _, t in
                        model.gloss_encoder.layers[0].named_parameters("x")}
        assert not text_layers & gloss_layers
        names = [n for n, _ in model.named_parameters()]
        assert len(names) == len(set(names))
        assert "gloss_encoder.embedding" not in names

    def test_shared_table_counted_once_in_state_dict(self):
        config = EncoderConfig(n_layers=1, n_heads=2, d_model=8, d_ff=16,
                               dropout=0.0, share_embeddings=True)
        model = build("tg2s", config=config)
        state = model.state_dict()
        model.load_state_dict(state)
        assert model.gloss_encoder.embedding is model.text_encoder.embedding


class TestForward:
    def test_teacher_forcing_shifts_right_by_seed(self, rng):
        model = build("tg2s", seed=4)
        frames = rng.standard_normal((4, D))
        base = model.forward_teacher(["alpha"], ["ALPHA"], frames).data
        # changing the final target frame cannot affect any prediction,
        # because only frames[:-1] enter the decoder input
        bumped = frames.copy()
        bumped[-1] += 10.0
        after = model.forward_teacher(["alpha"], ["ALPHA"], bumped).data
        assert np.array_equal(base, after)

    def test_output_width_is_frame_dim_plus_counter(self, rng):
        model = build()
        out = model.forward_teacher(["alpha", "beta"], ["ALPHA"],
                                    rng.standard_normal((5, D)))
        assert out.shape == (5, D + 1)

    def test_sample_independence_no_cross_leakage(self, rng):
        model = build(seed=9)
        frames_a = rng.standard_normal((3, D))
        frames_b = rng.standard_normal((4, D))
        alone = model.forward_teacher(["alpha"], ["ALPHA"], frames_a).data
        _ = model.forward_teacher(["beta", "gamma"], ["BETA"], frames_b)
        again = model.forward_teacher(["alpha"], ["ALPHA"], frames_a).data
        assert np.array_equal(alone, again)

    def test_counters_default_to_progress_ramp(self, rng):
        model = build(seed=2)
        frames = rng.standard_normal((4, D))
        implicit = model.forward_teacher(["alpha"], ["ALPHA"], frames).data
        explicit = model.forward_teacher(["alpha"], ["ALPHA"], frames,
                                         counters=counter_targets(4)).data
        assert np.array_equal(implicit, explicit)


class TestStateDict:
    def test_round_trip_bit_identical(self):
        model = build(seed=7)
        state = model.state_dict()
        other = build(seed=8)
        other.load_state_dict(state)
        for name, value in other.state_dict().items():
            assert np.array_equal(value, state[name]), name

    def test_mismatched_names_rejected(self):
        model = build()
        state = model.state_dict()
        state["not_a_parameter"] = np.zeros(3)
        with pytest.raises(KeyError):
            model.load_state_dict(state)

    def test_mismatched_shape_rejected(self):
        model = build()
        state = model.state_dict()
        key = next(iter(state))
        state[key] = np.zeros((1, 1))
        with pytest.raises(ValueError, match=key.split(".")[-1]):
            model.load_state_dict(state)


class TestFullModelGradients:
    def test_tg2s_forward_plus_mse_gradcheck(self):
        from dualsign.trainer import mse_loss
        model = SignModel("tg2s", TEXT_VOCAB, GLOSS_VOCAB, D, TOY, seed=3,
                          dtype=np.float64)
        rng = np.random.default_rng(5)
        frames = rng.standard_normal((5, D))
        target = np.concatenate([frames, counter_targets(5)[:, None]], axis=1)

        def loss_fn():
            pred = model.forward_teacher(["alpha", "beta", "gamma"],
                                         ["ALPHA", "BETA"], frames)
            return mse_loss(pred, target)

        err = tk.grad_check_params(loss_fn, model.parameters(), n_coords=100,
                                   rng=np.random.default_rng(0))
        assert err < 1e-4

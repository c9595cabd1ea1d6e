"""Model core: encoding contracts, decoding, region head, checkpoints."""

import numpy as np
import pytest

import manualqa as mq
from manualqa.model import CheckpointError, Model, ModelConfig


@pytest.fixture(scope="module")
def model16(vocab782):
    config = ModelConfig(
        vocab_size=len(vocab782), hidden_dim=16, n_layers=2, n_heads=4,
        feedforward_dim=32, max_positions=64,
    )
    return Model(config, seed=3)


class TestConfig:
    def test_heads_must_divide_hidden(self):
        with pytest.raises(ValueError, match="divisible"):
            ModelConfig(vocab_size=100, hidden_dim=30, n_heads=4)

    def test_base_profile_shape(self):
        config = ModelConfig.base(1000)
        assert (config.n_layers, config.hidden_dim, config.n_heads) == (12, 768, 12)


class TestEncode:
    def test_output_shape_matches_input(self, model16, rng):
        z = rng.standard_normal((9, 16)).astype(np.float32)
        h = model16.encode(z)
        assert h.shape == (9, 16)

    def test_eval_mode_bitwise_deterministic(self, model16, rng):
        z = rng.standard_normal((7, 16)).astype(np.float32)
        assert np.array_equal(model16.encode(z), model16.encode(z))

    def test_padding_rows_never_influence_unpadded_rows(self, model16, rng):
        z = rng.standard_normal((8, 16)).astype(np.float32)
        mask = np.array([True] * 5 + [False] * 3)
        h1 = model16.encode(z, key_mask=mask)
        z2 = z.copy()
        z2[5:] = rng.standard_normal((3, 16))  # permute/replace padding suffix
        h2 = model16.encode(z2, key_mask=mask)
        np.testing.assert_array_equal(h1[:5], h2[:5])

    def test_nan_input_rejected(self, model16):
        z = np.full((3, 16), np.nan, dtype=np.float32)
        with pytest.raises(ValueError, match="non-finite"):
            model16.encode(z)

    def test_too_long_sequence_rejected(self, model16, rng):
        z = rng.standard_normal((65, 16)).astype(np.float32)
        with pytest.raises(ValueError, match="max_positions"):
            model16.encode(z)


class TestDecodeLoss:
    def test_initial_loss_near_log_vocab(self, corpus782, vocab782, featurizer782):
        """Mean NLL at random init over 100+ samples is ~ln V within 5%."""
        config = ModelConfig(vocab_size=len(vocab782))
        losses = []
        for seed in (21, 22):
            model = Model(config, seed=seed)
            for manual, qa in corpus782.iter_qas():
                qf = featurizer782.question(qa.question)
                pf = featurizer782.page(manual.id, min(qa.relevant_pages))
                H = model.encode(np.vstack([model.embed(qf), model.embed(pf)]))
                targets = vocab782.tokenize(qa.answer.text) + [vocab782.eos_id]
                loss, _ = model.decode_loss(H, targets, bos_id=vocab782.bos_id)
                losses.append(loss)
        assert len(losses) >= 100
        mean = float(np.mean(losses))
        assert abs(mean - np.log(len(vocab782))) / np.log(len(vocab782)) < 0.05

    def test_forced_one_hot_logits_give_zero_loss(self, vocab782, rng):
        """Single-token target with the output projection aligned to it."""
        config = ModelConfig(vocab_size=len(vocab782), hidden_dim=16, n_layers=1,
                             n_heads=2, feedforward_dim=32, max_positions=16)
        model = Model(config, seed=0)
        H = rng.standard_normal((4, 16)).astype(np.float32)
        target = 17
        h_dec, _ = model._decoder_forward(
            np.array([vocab782.bos_id]), H.astype(model.config.np_dtype())
        )
        direction = h_dec[0] / float(h_dec[0] @ h_dec[0])
        bos_row = model.tok.value[vocab782.bos_id].copy()
        model.tok.value[:] = -60.0 * direction
        model.tok.value[target] = 60.0 * direction
        # keep the decoder's own input row intact so h_dec is unchanged
        model.tok.value[vocab782.bos_id] = bos_row
        loss, _ = model.decode_loss(H, [target], bos_id=vocab782.bos_id)
        assert loss < 1e-6

    def test_out_of_vocab_target_rejected(self, model16, rng):
        H = rng.standard_normal((4, 16)).astype(np.float32)
        with pytest.raises(ValueError, match="out of vocabulary"):
            model16.decode_loss(H, [10 ** 6])
        with pytest.raises(ValueError, match="non-empty"):
            model16.decode_loss(H, [])

    def test_loss_nonnegative(self, model16, rng):
        H = rng.standard_normal((4, 16)).astype(np.float32)
        loss, _ = model16.decode_loss(H, [5, 6, 7])
        assert loss >= 0.0


class TestGenerate:
    def test_greedy_deterministic(self, model16, rng):
        H = rng.standard_normal((5, 16)).astype(np.float32)
        a = model16.generate(H, max_len=8)
        b = model16.generate(H, max_len=8)
        assert a == b

    def test_max_len_one_gives_exactly_one_token(self, model16, rng):
        H = rng.standard_normal((5, 16)).astype(np.float32)
        assert len(model16.generate(H, max_len=1)) == 1

    def test_stops_at_end_marker(self, model16, vocab782, rng):
        H = rng.standard_normal((5, 16)).astype(np.float32)
        out = model16.generate(H, max_len=32, eos_id=vocab782.eos_id, bos_id=vocab782.bos_id)
        if vocab782.eos_id in out:
            assert out.index(vocab782.eos_id) == len(out) - 1
        else:
            assert len(out) == 32

    def test_unknown_strategy_rejected(self, model16, rng):
        H = rng.standard_normal((5, 16)).astype(np.float32)
        with pytest.raises(ValueError, match="strategy"):
            model16.generate(H, max_len=4, strategy="beam")


class TestRegionSelect:
    def test_zero_head_gives_one_half(self, model16, rng):
        H = rng.standard_normal((10, 16)).astype(np.float32)
        model16.region_head.W.value[:] = 0.0
        model16.region_head.b.value[:] = 0.0
        probs = model16.region_select(H, [1, 4, 7])
        np.testing.assert_array_equal(probs, 0.5)

    def test_one_probability_per_region(self, model16, rng):
        H = rng.standard_normal((10, 16)).astype(np.float32)
        assert model16.region_select(H, [0, 2, 5, 9]).shape == (4,)
        assert model16.region_select(H, []).shape == (0,)

    def test_probabilities_strictly_inside_unit_interval(self, model16, rng):
        H = (rng.standard_normal((6, 16)) * 100).astype(np.float32)
        probs = model16.region_select(H, [0, 1, 2, 3, 4, 5])
        assert (probs > 0).all() and (probs < 1).all()

    def test_matches_independent_sigmoid_recomputation(self, vocab782, rng):
        config = ModelConfig(vocab_size=len(vocab782), hidden_dim=16, n_layers=1,
                             n_heads=2, feedforward_dim=32, max_positions=16)
        model = Model(config, seed=9)
        H = rng.standard_normal((8, 16)).astype(np.float32)
        marker = 3
        logit = float(H[marker] @ model.region_head.W.value[:, 0] + model.region_head.b.value[0])
        expected = 1.0 / (1.0 + np.exp(-logit))
        prob = model.region_select(H, [marker])[0]
        assert prob == pytest.approx(expected, rel=1e-6)


class TestInitAndCheckpoint:
    def test_same_seed_identical_parameters(self, vocab782):
        config = ModelConfig(vocab_size=len(vocab782))
        a = mq.init_params(config, seed=13)
        b = mq.init_params(config, seed=13)
        for pa, pb in zip(a.parameters(), b.parameters()):
            assert np.array_equal(pa.value, pb.value), pa.name

    def test_round_trip_preserves_forward_bitwise(self, vocab782, tmp_path, rng):
        config = ModelConfig(vocab_size=len(vocab782), hidden_dim=16, n_layers=2,
                             n_heads=4, feedforward_dim=32, max_positions=32)
        model = Model(config, seed=5)
        path = tmp_path / "m.ckpt"
        model.save_checkpoint(path, vocab_hash="vh", step=7)
        loaded, meta = Model.load_checkpoint(path)
        assert meta["step"] == 7
        for _ in range(10):
            z = rng.standard_normal((6, 16)).astype(np.float32)
            assert np.array_equal(model.encode(z), loaded.encode(z))

    def test_wrong_vocab_hash_rejected(self, vocab782, tmp_path):
        config = ModelConfig(vocab_size=len(vocab782), hidden_dim=16, n_layers=1,
                             n_heads=2, feedforward_dim=32, max_positions=32)
        model = Model(config, seed=5)
        path = tmp_path / "m.ckpt"
        model.save_checkpoint(path, vocab_hash="right", step=0)
        with pytest.raises(CheckpointError, match="different vocabulary"):
            Model.load_checkpoint(path, expected_vocab_hash="wrong")

    def test_save_twice_byte_identical(self, vocab782, tmp_path):
        config = ModelConfig(vocab_size=len(vocab782), hidden_dim=16, n_layers=1,
                             n_heads=2, feedforward_dim=32, max_positions=32)
        model = Model(config, seed=5)
        a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        ha = model.save_checkpoint(a, vocab_hash="vh", step=1)
        hb = model.save_checkpoint(b, vocab_hash="vh", step=1)
        assert ha == hb
        assert a.read_bytes() == b.read_bytes()
        assert model.fingerprint() == ha

    def test_corrupt_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"not a checkpoint")
        with pytest.raises(CheckpointError, match="bad magic"):
            Model.load_checkpoint(path)

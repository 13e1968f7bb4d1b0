import numpy as np
import pytest

from molgen.datasets import make_corpus
from molgen.nn import Tensor
from molgen.vae import (
    MissingLabels,
    UnknownToken,
    VaeConfig,
    VaeModel,
    Vocabulary,
    VocabularyMismatch,
    adaptive_pretrain,
    elbo_loss,
    kl_divergence,
    make_batch,
    train_vae,
)


@pytest.fixture(scope="module")
def tiny_setup():
    corpus = make_corpus(64, seed=31, max_heavy=12)
    vocab = Vocabulary.build([corpus])
    config = VaeConfig(
        latent_dim=16, embed_dim=16, encoder_hidden=24, decoder_hidden=24,
        decoder_layers=2, batch_size=16,
    )
    model = VaeModel(vocab, config, seed=3)
    return corpus, vocab, config, model


class TestVocabulary:
    def test_round_trip(self, tiny_setup):
        corpus, vocab, _, _ = tiny_setup
        for smiles in corpus:
            assert vocab.decode(vocab.encode(smiles)) == smiles

    def test_pad_is_zero(self):
        assert Vocabulary.PAD == 0

    def test_multichar_tokens(self):
        vocab = Vocabulary.build([["ClCCBr", "c1cc[nH]c1"]])
        assert "Cl" in vocab.index and "Br" in vocab.index and "[nH]" in vocab.index

    def test_unknown_token(self, tiny_setup):
        _, vocab, _, _ = tiny_setup
        with pytest.raises(UnknownToken):
            vocab.encode("[Se]C")


class TestKl:
    def test_zero_when_posterior_equals_prior(self):
        mu = Tensor(np.zeros((4, 8)))
        log_var = Tensor(np.zeros((4, 8)))
        assert float(kl_divergence(mu, log_var).data) == 0.0

    def test_unit_mean_single_dim(self):
        mu_val = np.zeros((1, 8))
        mu_val[0, 0] = 1.0
        kl = kl_divergence(Tensor(mu_val), Tensor(np.zeros((1, 8))))
        assert float(kl.data) == pytest.approx(0.5)

    def test_closed_form_matches_monte_carlo(self):
        # KL(q || p) = E_q[log q(z) - log p(z)] estimated with 1e6 samples.
        rng = np.random.default_rng(8)
        dim = 6
        mu = rng.normal(size=(1, dim)) * 0.8
        log_var = rng.normal(size=(1, dim)) * 0.5
        closed = float(kl_divergence(Tensor(mu), Tensor(log_var)).data)

        n = 1_000_000
        sigma = np.exp(0.5 * log_var[0])
        z = mu[0] + sigma * rng.standard_normal((n, dim))
        log_q = -0.5 * (
            ((z - mu[0]) / sigma) ** 2 + np.log(2 * np.pi) + log_var[0]
        ).sum(axis=1)
        log_p = -0.5 * (z**2 + np.log(2 * np.pi)).sum(axis=1)
        mc = float(np.mean(log_q - log_p))
        assert closed == pytest.approx(mc, rel=0.01)


class TestElbo:
    def test_component_structure(self, tiny_setup):
        corpus, vocab, _, model = tiny_setup
        batch = make_batch(vocab, corpus[:8])
        out = elbo_loss(model, batch, beta=0.5, property_weight=0.0,
                        rng=np.random.default_rng(0), train=False)
        total = float(out["total"].data)
        recon = float(out["recon"].data)
        kl = float(out["kl"].data)
        assert total == pytest.approx(recon + 0.5 * kl, rel=1e-12)

    def test_missing_labels(self, tiny_setup):
        corpus, vocab, _, model = tiny_setup
        batch = make_batch(vocab, corpus[:4])
        with pytest.raises(MissingLabels):
            elbo_loss(model, batch, beta=1.0, property_weight=1.0)

    def test_supervised_terms_present(self, tiny_setup):
        corpus, vocab, _, model = tiny_setup
        qed = np.linspace(0.2, 0.8, 4)
        sa = np.linspace(2, 6, 4)
        batch = make_batch(vocab, corpus[:4], qed=qed, sa=sa)
        out = elbo_loss(model, batch, beta=1.0, property_weight=1.0,
                        rng=np.random.default_rng(0), train=False)
        assert float(out["qed_mse"].data) > 0
        assert float(out["sa_mse"].data) > 0


class TestEncodeDecode:
    def test_mean_mode_deterministic(self, tiny_setup):
        corpus, _, _, model = tiny_setup
        a = model.encode(corpus[0], mode="mean")
        b = model.encode(corpus[0], mode="mean")
        np.testing.assert_array_equal(a, b)

    def test_sample_with_sigma_zero_equals_mean(self, tiny_setup):
        corpus, vocab, config, model = tiny_setup
        # Force log variances to -inf through the head bias: sigma -> 0.
        saved_w = model.enc_head.weight.data.copy()
        saved_b = model.enc_head.bias.data.copy()
        model.enc_head.weight.data[:, config.latent_dim:] = 0.0
        model.enc_head.bias.data[config.latent_dim:] = -np.inf
        try:
            mean = model.encode(corpus[0], mode="mean")
            sample = model.encode(corpus[0], mode="sample", seed=11)
            np.testing.assert_allclose(sample, mean)
        finally:
            model.enc_head.weight.data = saved_w
            model.enc_head.bias.data = saved_b

    def test_sample_mean_within_three_standard_errors(self, tiny_setup):
        corpus, _, config, model = tiny_setup
        mu = model.encode(corpus[0], mode="mean")
        draws = np.stack([
            model.encode(corpus[0], mode="sample", seed=seed) for seed in range(10_000)
        ])
        sample_mean = draws.mean(axis=0)
        se = draws.std(axis=0, ddof=1) / np.sqrt(draws.shape[0])
        assert np.all(np.abs(sample_mean - mu) <= 3.5 * se + 1e-12)

    def test_greedy_decode_deterministic(self, tiny_setup):
        _, _, config, model = tiny_setup
        z = np.random.default_rng(0).normal(size=config.latent_dim)
        assert model.decode(z) == model.decode(z)

    def test_temperature_zero_equals_greedy(self, tiny_setup):
        _, _, config, model = tiny_setup
        z = np.random.default_rng(1).normal(size=config.latent_dim)
        greedy = model.decode(z, strategy="greedy")
        tau0 = model.decode(z, strategy="temperature", temperature=0.0, seed=5)
        assert tau0 == greedy

    def test_decode_respects_max_len(self, tiny_setup):
        _, vocab, config, model = tiny_setup
        z = np.zeros(config.latent_dim)
        text = model.decode(z, max_len=5)
        assert len(vocab.encode(text) if text else []) <= 5


class TestCheckpoint:
    def test_save_load_round_trip(self, tiny_setup, tmp_path):
        corpus, _, _, model = tiny_setup
        path = tmp_path / "vae.nnck"
        model.save(path, metadata={"corpus_hash": "abc", "seed": 3, "epoch": 0})
        loaded = VaeModel.load(path)
        assert loaded.vocab.tokens == model.vocab.tokens
        assert loaded.config == model.config
        z_orig = model.encode(corpus[0], mode="mean")
        z_loaded = loaded.encode(corpus[0], mode="mean")
        # float32 storage: values agree to float32 resolution
        np.testing.assert_allclose(z_orig, z_loaded, rtol=1e-5, atol=1e-6)
        path2 = tmp_path / "vae2.nnck"
        loaded.save(path2, metadata={"corpus_hash": "abc", "seed": 3, "epoch": 0})
        assert path.read_bytes() == path2.read_bytes()


class TestTraining:
    def test_zero_epoch_phase_two_is_identity(self):
        corpus = make_corpus(40, seed=41, max_heavy=10)
        vocab = Vocabulary.build([corpus])
        config = VaeConfig(latent_dim=8, embed_dim=8, encoder_hidden=12,
                           decoder_hidden=12, decoder_layers=1, batch_size=8)
        model = VaeModel(vocab, config, seed=0)
        train_vae(model, corpus[:32], None, None, epochs=1, seed=1, supervised=False)
        snapshot = {k: t.data.copy() for k, t in model.parameters().items()}
        labels = (np.linspace(0, 1, 8), np.linspace(1, 10, 8))
        report_a, report_b = adaptive_pretrain(
            model, corpus[:32], corpus[32:40], labels, epochs_a=0, epochs_b=0, seed=2
        )
        assert report_a.losses == [] and report_b.losses == []
        for key, tensor in model.parameters().items():
            np.testing.assert_array_equal(tensor.data, snapshot[key])

    def test_vocabulary_mismatch_detected(self):
        corpus = make_corpus(30, seed=42, max_heavy=10)
        vocab = Vocabulary.build([corpus])
        config = VaeConfig(latent_dim=8, embed_dim=8, encoder_hidden=12,
                           decoder_hidden=12, decoder_layers=1, batch_size=8)
        model = VaeModel(vocab, config, seed=0)
        stranger = ["[Se]CC"]
        with pytest.raises(VocabularyMismatch):
            adaptive_pretrain(model, corpus, stranger,
                              (np.zeros(1), np.zeros(1)), 0, 0, seed=1)

    def test_loss_decreases(self):
        corpus = make_corpus(60, seed=43, max_heavy=10)
        vocab = Vocabulary.build([corpus])
        config = VaeConfig(latent_dim=8, embed_dim=12, encoder_hidden=16,
                           decoder_hidden=16, decoder_layers=1, batch_size=16,
                           kl_weight_end=0.0)
        model = VaeModel(vocab, config, seed=0)
        report = train_vae(model, corpus, None, None, epochs=8, seed=1, supervised=False)
        assert report.losses[-1]["recon"] < report.losses[0]["recon"]

    def test_too_long_sequences_skipped(self):
        corpus = make_corpus(20, seed=44, max_heavy=10)
        vocab = Vocabulary.build([corpus])
        config = VaeConfig(latent_dim=8, embed_dim=8, encoder_hidden=12,
                           decoder_hidden=12, decoder_layers=1, batch_size=8,
                           max_len=6)
        model = VaeModel(vocab, config, seed=0)
        report = train_vae(model, corpus, None, None, epochs=1, seed=1, supervised=False)
        assert report.skipped_too_long > 0

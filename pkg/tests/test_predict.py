import numpy as np
import pytest

from molgen.datasets import (
    make_binding_fixture,
    make_corpus,
    make_protein_sequences,
    write_fasta,
)
from molgen.predict import (
    AffinityModel,
    BindingRecord,
    DimensionMismatch,
    EmptyPanel,
    EmptySequence,
    EncoderMismatch,
    PanelContainsTarget,
    ProteinEmbedding,
    UnknownProtein,
    embeddings_from_fasta,
    kmer_embedding,
    load_protein_embeddings,
    read_binding_tsv,
    save_protein_embeddings,
    selectivity,
    train_affinity,
    train_latent_regressor,
    write_binding_tsv,
)


class TestEmbeddingIO:
    def test_save_load_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        embeddings = {
            f"p{i}": ProteinEmbedding(f"p{i}", rng.normal(size=64).astype(np.float32).astype(np.float64))
            for i in range(3)
        }
        path = tmp_path / "prot.pemb"
        save_protein_embeddings(path, embeddings)
        loaded = load_protein_embeddings(path)
        assert sorted(loaded) == ["p0", "p1", "p2"]
        for pid in loaded:
            np.testing.assert_array_equal(loaded[pid].vector, embeddings[pid].vector)
            assert loaded[pid].vector.shape == (64,)
        # bit-exact second save
        path2 = tmp_path / "prot2.pemb"
        save_protein_embeddings(path2, loaded)
        assert path.read_bytes() == path2.read_bytes()

    def test_mixed_dimensions_rejected(self, tmp_path):
        embeddings = {
            "a": ProteinEmbedding("a", np.zeros(64)),
            "b": ProteinEmbedding("b", np.zeros(32)),
        }
        with pytest.raises(DimensionMismatch):
            save_protein_embeddings(tmp_path / "bad.pemb", embeddings)


class TestKmerEmbedding:
    def test_deterministic(self):
        a = kmer_embedding("MKTAYIAKQR", k=3, dim=64)
        b = kmer_embedding("MKTAYIAKQR", k=3, dim=64)
        np.testing.assert_array_equal(a.vector, b.vector)

    def test_single_kmer_sequence(self):
        emb = kmer_embedding("AAAA", k=2, dim=64)
        assert np.count_nonzero(emb.vector) == 1

    def test_unit_norm(self):
        for seq in ("MKT", "ACDEFGHIKLMNPQRSTVWY", "AXA"):
            emb = kmer_embedding(seq, k=2, dim=32)
            assert np.linalg.norm(emb.vector) == pytest.approx(1.0)

    def test_empty_rejected(self):
        with pytest.raises(EmptySequence):
            kmer_embedding("", k=3, dim=64)

    def test_fasta_pipeline(self, tmp_path):
        sequences = make_protein_sequences(4, seed=1)
        path = tmp_path / "prot.fasta"
        write_fasta(path, sequences)
        embeddings = embeddings_from_fasta(path, k=3, dim=64)
        assert sorted(embeddings) == sorted(sequences)
        assert all(e.source == "kmer-fallback" for e in embeddings.values())


class TestLatentRegressor:
    def test_constant_labels(self):
        rng = np.random.default_rng(0)
        z = rng.normal(size=(300, 16))
        labels = np.full(300, 0.37)
        _, report = train_latent_regressor("qed", z, labels, seed=1, epochs=300, lr=2e-2)
        assert report.holdout_rmse < 1e-3

    def test_linear_recovery(self):
        rng = np.random.default_rng(1)
        z = rng.normal(size=(3000, 8))
        w = rng.normal(size=8) * 0.3
        labels = z @ w + 0.1
        _, report = train_latent_regressor("qed", z, labels, seed=2, epochs=300, lr=1e-2)
        assert report.holdout_rmse < 0.01

    def test_shuffled_labels_no_signal(self):
        rng = np.random.default_rng(2)
        z = rng.normal(size=(500, 16))
        labels = z @ (rng.normal(size=16) * 0.5)
        shuffled = labels.copy()
        rng.shuffle(shuffled)
        _, report = train_latent_regressor("qed", z, shuffled, seed=3, epochs=60)
        assert report.holdout_rmse == pytest.approx(shuffled.std(), rel=0.35)

    def test_misaligned_inputs(self):
        with pytest.raises(EncoderMismatch):
            train_latent_regressor("qed", np.zeros((10, 4)), np.zeros(9))


class TestBindingIO:
    def test_round_trip(self, tmp_path):
        records = [
            BindingRecord("CCO", "p0", 6.5),
            BindingRecord("c1ccccc1", "p1", 4.25),
        ]
        path = tmp_path / "binding.tsv"
        write_binding_tsv(path, records)
        loaded = read_binding_tsv(path)
        assert [(r.smiles, r.protein_id) for r in loaded] == [
            ("CCO", "p0"), ("c1ccccc1", "p1")
        ]
        assert loaded[0].pic50 == pytest.approx(6.5)


@pytest.fixture(scope="module")
def binding_setup():
    corpus = make_corpus(240, seed=51, max_heavy=14)
    sequences = make_protein_sequences(8, seed=3)
    from molgen.predict import kmer_embedding

    embeddings = {
        pid: kmer_embedding(seq, k=3, dim=64, pid=pid) for pid, seq in sequences.items()
    }
    vectors = {pid: e.vector for pid, e in embeddings.items()}
    triples = make_binding_fixture(corpus, vectors, seed=5)
    records = [BindingRecord(*t) for t in triples]
    return records, embeddings


class TestAffinity:
    def test_constant_labels_single_protein(self, binding_setup):
        records, embeddings = binding_setup
        const = [BindingRecord(records[i % len(records)].smiles, "prot00", 7.0)
                 for i in range(400)]
        rng = np.random.default_rng(0)
        latents = rng.normal(size=(400, 8))
        model, report = train_affinity(
            "z", const, embeddings, latents=latents, seed=1, epochs=300,
            hidden=64, lr=2e-2,
        )
        preds = [model.predict("prot00", latents[i]) for i in range(0, 400, 10)]
        assert all(abs(p - 7.0) < 0.05 for p in preds)

    def test_planted_signal_on_latents(self, binding_setup):
        # labels = dot(protein key dims, z key dims): recoverable to a small
        # fraction of the label spread.
        _, embeddings = binding_setup
        ids = sorted(embeddings)[:4]
        emb4 = {pid: embeddings[pid] for pid in ids}
        rng = np.random.default_rng(2)
        n = 1600
        latents = rng.normal(size=(n, 16))
        protein_ids = [ids[int(i)] for i in rng.integers(0, 4, size=n)]
        labels = np.array([
            6.0 + 5.0 * float(emb4[pid].vector[:2] @ latents[i, :2])
            for i, pid in enumerate(protein_ids)
        ])
        records = [BindingRecord(f"C{'C' * (i % 3)}", pid, labels[i])
                   for i, pid in enumerate(protein_ids)]
        model, report = train_affinity(
            "z", records, emb4, latents=latents, seed=3, epochs=300, hidden=1024
        )
        assert report.holdout_rmse < 0.1 * report.label_std

    def test_unknown_protein(self, binding_setup):
        records, embeddings = binding_setup
        bad = records[:10] + [BindingRecord("CC", "missing", 5.0)]
        with pytest.raises(UnknownProtein):
            train_affinity("x", bad, embeddings, seed=0, epochs=1)

    def test_z_requires_latents(self, binding_setup):
        records, embeddings = binding_setup
        with pytest.raises(EncoderMismatch):
            train_affinity("z", records[:50], embeddings, latents=None)

    def test_x_level_beats_z_level_on_order_sensitive_labels(self, binding_setup):
        # Labels depend on the leading tokens of the SMILES string; the
        # latent features are order-free atom counts, so the sequence-level
        # model has strictly more information.
        from molgen.chem import tokenize
        from molgen.datasets import make_corpus, molecule_feature_vector

        _, embeddings = binding_setup
        ids = sorted(embeddings)
        corpus = [s for s in make_corpus(260, seed=51, max_heavy=14)
                  if len(tokenize(s)) >= 3][:240]
        values: dict[str, float] = {}

        def tokval(tok: str) -> float:
            if tok not in values:
                values[tok] = (hash(tok) % 7 - 3) / 3.0
            return values[tok]

        def order_label(s: str) -> float:
            toks = [t.text for t in tokenize(s)]
            return 6.0 + 2.0 * tokval(toks[0]) + 0.5 * tokval(toks[1])

        records = [BindingRecord(s, ids[i % 8], order_label(s))
                   for i, s in enumerate(corpus)]
        rng = np.random.default_rng(4)
        proj = rng.normal(size=(7, 16))
        latents = np.stack([
            molecule_feature_vector(r.smiles)[:7] @ proj for r in records
        ])
        _, z_report = train_affinity("z", records, embeddings, latents=latents,
                                     seed=5, epochs=150, hidden=128)
        _, x_report = train_affinity("x", records, embeddings, seed=5,
                                     epochs=150, hidden=128)
        assert x_report.holdout_rmse <= z_report.holdout_rmse


class TestSelectivity:
    @pytest.fixture()
    def stub_model(self, binding_setup):
        _, embeddings = binding_setup

        class StubAffinity(AffinityModel):
            def __init__(self, values):
                self.embeddings = embeddings
                self.values = values

            def predict(self, protein_id, molecule):
                return self.values[protein_id]

        return StubAffinity

    def test_exact_formula(self, stub_model):
        values = {"prot00": 7.0, "prot01": 6.0, "prot02": 6.0, "prot03": 6.0}
        model = stub_model(values)
        score = selectivity(model, None, "prot00", panel=["prot01", "prot02", "prot03"])
        assert score.value == pytest.approx(1.0, abs=1e-15)

    def test_equal_panel_gives_zero(self, stub_model):
        model = stub_model({"prot00": 6.5, "prot01": 6.5})
        score = selectivity(model, None, "prot00", panel=["prot01"])
        assert score.value == 0.0

    def test_seeded_panel_reproducible(self, stub_model):
        values = {f"prot{i:02d}": 5.0 + i * 0.1 for i in range(8)}
        model = stub_model(values)
        a = selectivity(model, None, "prot00", k=5, seed=9)
        b = selectivity(model, None, "prot00", k=5, seed=9)
        assert a.value == b.value and a.panel_ids == b.panel_ids
        assert "prot00" not in a.panel_ids
        assert len(a.panel_ids) == 5

    def test_panel_contains_target_rejected(self, stub_model):
        model = stub_model({"prot00": 6.0, "prot01": 6.0})
        with pytest.raises(PanelContainsTarget):
            selectivity(model, None, "prot00", panel=["prot00"])

    def test_empty_panel_rejected(self, stub_model):
        model = stub_model({"prot00": 6.0})
        with pytest.raises(EmptyPanel):
            selectivity(model, None, "prot00", panel=[])

    def test_linear_in_target_prediction(self, stub_model):
        base = {"prot00": 7.0, "prot01": 5.0, "prot02": 6.0}
        model_a = stub_model(base)
        shifted = dict(base, prot00=base["prot00"] + 0.75)
        model_b = stub_model(shifted)
        panel = ["prot01", "prot02"]
        a = selectivity(model_a, None, "prot00", panel=panel)
        b = selectivity(model_b, None, "prot00", panel=panel)
        assert b.value - a.value == pytest.approx(0.75, abs=1e-15)

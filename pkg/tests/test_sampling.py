import json

import numpy as np
import pytest
from scipy import stats as scipy_stats

from molgen.sampling import (
    AttributeClassifier,
    AttributeSpec,
    BudgetExhausted,
    GmmDensity,
    SingleClass,
    TooFewPoints,
    auc_score,
    class_sample,
    enrichment_report,
    fit_gmm,
    train_attribute_classifier,
)


class ConstantClassifier(AttributeClassifier):
    """Test stub returning a fixed probability for every latent vector."""

    def __init__(self, p: float, latent_dim: int, name: str = "const"):
        spec = AttributeSpec(name, "qed", 0.5, 0.0, 1.0)
        super().__init__(spec, latent_dim)
        self.p = p

    def score(self, z):
        return np.full(np.atleast_2d(z).shape[0], self.p)


class LogisticStub(AttributeClassifier):
    """sigmoid(scale * z[0]) stub for distributional tests."""

    def __init__(self, scale: float, latent_dim: int = 1, name: str = "planted"):
        spec = AttributeSpec(name, "qed", 0.5, 0.0, 1.0)
        super().__init__(spec, latent_dim)
        self.scale = scale

    def score(self, z):
        z = np.atleast_2d(z)
        return 1.0 / (1.0 + np.exp(-self.scale * z[:, 0]))


def standard_normal_gmm(dim: int = 1) -> GmmDensity:
    return GmmDensity(
        weights=np.array([1.0]),
        means=np.zeros((1, dim)),
        variances=np.ones((1, dim)),
    )


class TestFitGmm:
    def test_k1_equals_sample_moments(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(500, 4)) * np.array([1.0, 2.0, 0.5, 3.0]) + 1.5
        gmm, _ = fit_gmm(x, k=1, seed=0)
        np.testing.assert_allclose(gmm.means[0], x.mean(axis=0), atol=1e-10)
        np.testing.assert_allclose(gmm.variances[0], x.var(axis=0), atol=1e-10)
        assert gmm.weights[0] == pytest.approx(1.0, abs=1e-12)

    def test_planted_two_clusters(self):
        rng = np.random.default_rng(1)
        a = rng.normal(size=(400, 3)) * 0.5 + np.array([5.0, 0.0, 0.0])
        b = rng.normal(size=(600, 3)) * 0.5 + np.array([-5.0, 0.0, 0.0])
        x = np.vstack([a, b])
        gmm, _ = fit_gmm(x, k=2, seed=3)
        order = np.argsort(gmm.means[:, 0])
        np.testing.assert_allclose(gmm.means[order][0], b.mean(axis=0), atol=0.1)
        np.testing.assert_allclose(gmm.means[order][1], a.mean(axis=0), atol=0.1)
        np.testing.assert_allclose(sorted(gmm.weights), [0.4, 0.6], atol=0.05)

    def test_log_likelihood_monotone(self):
        rng = np.random.default_rng(2)
        x = np.vstack([
            rng.normal(size=(200, 2)),
            rng.normal(size=(200, 2)) + 4.0,
            rng.normal(size=(100, 2)) - 3.0,
        ])
        _, report = fit_gmm(x, k=3, seed=5)
        trajectory = report["trajectory"]
        for prev, cur in zip(trajectory, trajectory[1:]):
            assert cur >= prev - 1e-9 * max(1.0, abs(prev))

    def test_too_few_points(self):
        with pytest.raises(TooFewPoints):
            fit_gmm(np.zeros((19, 2)), k=2)

    def test_weights_sum_to_one(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(300, 2))
        gmm, _ = fit_gmm(x, k=4, seed=1)
        assert abs(gmm.weights.sum() - 1.0) < 1e-12

    def test_variance_floor(self):
        x = np.zeros((50, 2))  # degenerate data
        gmm, _ = fit_gmm(x, k=1, seed=0)
        assert np.all(gmm.variances >= 1e-6)

    def test_json_round_trip(self):
        rng = np.random.default_rng(4)
        gmm, _ = fit_gmm(rng.normal(size=(100, 3)), k=2, seed=0)
        restored = GmmDensity.from_json_dict(gmm.to_json_dict())
        np.testing.assert_allclose(restored.means, gmm.means)
        points = rng.normal(size=(5, 3))
        np.testing.assert_allclose(restored.log_density(points),
                                   gmm.log_density(points))

    def test_log_density_matches_scipy(self):
        rng = np.random.default_rng(5)
        gmm, _ = fit_gmm(rng.normal(size=(200, 2)), k=2, seed=0)
        pts = rng.normal(size=(50, 2))
        expected = np.zeros(50)
        for w, mean, var in zip(gmm.weights, gmm.means, gmm.variances):
            expected += w * scipy_stats.multivariate_normal.pdf(pts, mean, np.diag(var))
        np.testing.assert_allclose(np.exp(gmm.log_density(pts)), expected, rtol=1e-10)


class TestAttributeSpec:
    def test_normalization(self):
        spec = AttributeSpec("aff", "affinity(t)", 6.0, 4.0, 9.0)
        np.testing.assert_allclose(spec.normalize(np.array([4.0, 9.0, 6.5])),
                                   [0.0, 1.0, 0.5])
        assert spec.normalized_threshold == pytest.approx(0.4)

    def test_bounds_validation(self):
        with pytest.raises(ValueError):
            AttributeSpec("bad", "qed", 0.5, 1.0, 1.0)

    def test_from_predictions(self):
        values = np.array([2.0, 8.0, 5.0])
        spec = AttributeSpec.from_predictions("aff", "affinity(t)", 6.0, values)
        assert spec.bound_min == 2.0 and spec.bound_max == 8.0


class TestClassifier:
    def test_separable_labels_high_auc(self):
        rng = np.random.default_rng(0)
        z = rng.normal(size=(600, 8))
        raw = z[:, 0] * 10.0  # perfectly separable along one axis
        spec = AttributeSpec.from_predictions("sep", "qed", 0.0, raw)
        clf, report = train_attribute_classifier(spec, z, raw, seed=1, epochs=60)
        assert report.holdout_auc > 0.99

    def test_random_labels_null_auc(self):
        rng = np.random.default_rng(1)
        z = rng.normal(size=(600, 8))
        raw = rng.normal(size=600)  # independent of z
        spec = AttributeSpec.from_predictions("null", "qed", 0.0, raw)
        _, report = train_attribute_classifier(spec, z, raw, seed=2, epochs=30)
        assert 0.4 <= report.holdout_auc <= 0.6

    def test_output_strictly_inside_unit_interval(self):
        rng = np.random.default_rng(2)
        z = rng.normal(size=(200, 4))
        raw = z[:, 0]
        spec = AttributeSpec.from_predictions("a", "qed", 0.0, raw)
        clf, _ = train_attribute_classifier(spec, z, raw, seed=0, epochs=10)
        scores = clf.score(rng.normal(size=(100, 4)) * 50)
        assert np.all(scores > 0.0) and np.all(scores < 1.0)

    def test_single_class_refused(self):
        z = np.random.default_rng(3).normal(size=(50, 4))
        raw = np.full(50, 5.0)
        spec = AttributeSpec("const", "qed", 0.5, 0.0, 10.0)
        with pytest.raises(SingleClass):
            train_attribute_classifier(spec, z, raw)

    def test_state_dict_round_trip(self):
        rng = np.random.default_rng(4)
        z = rng.normal(size=(300, 4))
        raw = z[:, 1]
        spec = AttributeSpec.from_predictions("a", "qed", 0.0, raw)
        clf, _ = train_attribute_classifier(spec, z, raw, seed=0, epochs=10)
        restored = AttributeClassifier.from_state_dict(clf.state_dict())
        np.testing.assert_allclose(restored.score(z[:10]), clf.score(z[:10]))


class TestAuc:
    def test_perfect_and_reverse(self):
        labels = np.array([0, 0, 1, 1])
        assert auc_score(labels, np.array([0.1, 0.2, 0.8, 0.9])) == 1.0
        assert auc_score(labels, np.array([0.9, 0.8, 0.2, 0.1])) == 0.0

    def test_ties_give_half(self):
        labels = np.array([0, 1, 0, 1])
        assert auc_score(labels, np.zeros(4)) == 0.5


class TestRejectionSampling:
    def test_constant_one_accepts_everything(self):
        gmm = standard_normal_gmm(2)
        clf = ConstantClassifier(1.0, 2)
        batch = class_sample(gmm, [clf], None, n_target=500, seed=0, budget=10_000)
        assert batch.acceptance_rate == 1.0

    def test_acceptance_rate_calibration(self):
        # Constant score p: empirical acceptance rate is p up to Bernoulli noise.
        gmm = standard_normal_gmm(2)
        clf = ConstantClassifier(0.3, 2)
        batch = class_sample(gmm, [clf], None, n_target=100_000, seed=1,
                             budget=1_000_000, chunk_size=8192)
        drawn = batch.drawn
        rate = batch.accepted_z_count / drawn
        assert rate == pytest.approx(0.3, abs=0.01)

    def test_accepted_distribution_matches_quadrature(self):
        # 1-D: proposal N(0,1), acceptance sigmoid(4z). The accepted-sample
        # density is sigmoid(4z) phi(z) normalized; compare by chi-square
        # over 20 bins against numerically integrated bin masses.
        gmm = standard_normal_gmm(1)
        clf = LogisticStub(4.0, 1)
        n_accept = 100_000
        batch = class_sample(gmm, [clf], None, n_target=n_accept, seed=7,
                             budget=2_000_000, chunk_size=16384)
        zs = np.array([s.z[0] for s in batch.accepted])

        edges = np.linspace(-4.0, 4.0, 21)
        grid = np.linspace(-6.0, 6.0, 200_001)
        density = (1.0 / (1.0 + np.exp(-4.0 * grid))) * scipy_stats.norm.pdf(grid)
        norm = np.trapezoid(density, grid)

        expected = []
        for lo, hi in zip(edges[:-1], edges[1:]):
            seg = (grid >= lo) & (grid <= hi)
            expected.append(np.trapezoid(density[seg], grid[seg]) / norm)
        expected = np.array(expected)
        inside = (zs >= edges[0]) & (zs <= edges[-1])
        counts, _ = np.histogram(zs[inside], bins=edges)
        expected_counts = expected / expected.sum() * counts.sum()
        result = scipy_stats.chisquare(counts, expected_counts)
        assert result.pvalue > 0.01

    def test_budget_exhausted_carries_partial_batch(self):
        gmm = standard_normal_gmm(2)
        clf = ConstantClassifier(0.5, 2)
        with pytest.raises(BudgetExhausted) as excinfo:
            class_sample(gmm, [clf], None, n_target=10_000, seed=0, budget=64,
                         chunk_size=32)
        partial = excinfo.value.batch
        assert partial.drawn == 64
        assert 0 < len(partial.accepted) < 10_000

    def test_determinism(self):
        gmm = standard_normal_gmm(3)
        clf = LogisticStub(2.0, 3)
        a = class_sample(gmm, [clf], None, n_target=200, seed=42, budget=100_000)
        b = class_sample(gmm, [clf], None, n_target=200, seed=42, budget=100_000)
        assert a.export_jsonl() == b.export_jsonl()
        assert a.drawn == b.drawn

    def test_product_of_scores(self):
        gmm = standard_normal_gmm(2)
        half = ConstantClassifier(0.5, 2, name="a")
        third = ConstantClassifier(1 / 3, 2, name="b")
        batch = class_sample(gmm, [half, third], None, n_target=5_000, seed=3,
                             budget=500_000, chunk_size=8192)
        assert batch.acceptance_rate == pytest.approx(1 / 6, abs=0.01)
        assert set(batch.accepted[0].scores) == {"a", "b"}

    def test_latent_dim_mismatch(self):
        gmm = standard_normal_gmm(2)
        clf = ConstantClassifier(1.0, 3)
        with pytest.raises(ValueError):
            class_sample(gmm, [clf], None, n_target=1)


class TestEnrichment:
    def test_vacuous_rejection_equal_fractions(self):
        rng = np.random.default_rng(0)
        values = rng.random(20_000)
        table = enrichment_report(
            {"aff": values[:10_000]}, {"aff": values[10_000:]}, [("aff", 0.5)]
        )
        row = table.rows[0]
        assert row.accepted_fraction == pytest.approx(row.random_fraction, abs=0.02)

    def test_planted_enrichment_significant(self):
        # Accepted set drawn with probability proportional to the attribute:
        # the accepted fraction above threshold must exceed random at 99%.
        rng = np.random.default_rng(1)
        random_vals = rng.random(5_000)
        proposal = rng.random(40_000)
        keep = rng.random(40_000) < proposal  # acceptance prob = value
        accepted_vals = proposal[keep]
        table = enrichment_report(
            {"aff": accepted_vals}, {"aff": random_vals}, [("aff", 0.5)]
        )
        row = table.rows[0]
        n = len(accepted_vals)
        test = scipy_stats.binomtest(
            int(row.accepted_fraction * n), n, row.random_fraction, alternative="greater"
        )
        assert test.pvalue < 0.01

    def test_nested_criteria_rows(self):
        rng = np.random.default_rng(2)
        acc = {"aff": rng.random(1000), "qed": rng.random(1000), "sel": rng.random(1000)}
        rnd = {"aff": rng.random(1000), "qed": rng.random(1000), "sel": rng.random(1000)}
        table = enrichment_report(
            acc, rnd, [("aff", 0.5), ("qed", 0.8), ("sel", 0.5)]
        )
        assert len(table.rows) == 3
        assert table.rows[0].criteria == "aff>0.5"
        assert table.rows[2].criteria == "aff>0.5 & qed>0.8 & sel>0.5"
        # nested fractions are non-increasing
        fracs = [r.accepted_fraction for r in table.rows]
        assert fracs[0] >= fracs[1] >= fracs[2]

    def test_json_export(self):
        table = enrichment_report({"a": np.array([1.0])}, {"a": np.array([0.0])},
                                  [("a", 0.5)])
        payload = json.loads(json.dumps(table.to_json_dict()))
        assert payload["rows"][0]["accepted_fraction"] == 1.0

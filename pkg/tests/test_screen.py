import numpy as np
import pytest

from molgen.chem import parse_smiles
from molgen.datasets import make_corpus, make_docking_fixture, make_toxicity_fixture
from molgen.sampling import TooFewPoints
from molgen.screen import (
    AllMissing,
    CandidateRecord,
    MalformedLine,
    MissingCenter,
    MissingField,
    MultiTaskToxNet,
    ScreeningCriteria,
    StubRetrosynthesisClient,
    apply_screening,
    cluster_poses,
    ingest_docking,
    is_achiral,
    is_toxic,
    read_toxicity_tsv,
    tox_features,
    toxic_endpoint_count,
    train_toxnet,
)


class StubToxNet(MultiTaskToxNet):
    """Fixed per-endpoint probabilities, bypassing the network."""

    def __init__(self, values: dict[str, float]):
        self.endpoints = list(values)
        self.values = values

    def probabilities(self, features):
        n = np.atleast_2d(features).shape[0]
        return {name: np.full(n, p) for name, p in self.values.items()}


class TestToxicRule:
    def test_all_zero_not_toxic(self):
        net = StubToxNet({f"e{i}": 0.0 for i in range(13)})
        count = toxic_endpoint_count(net, parse_smiles("CCO"))
        assert count == 0 and not is_toxic(count)

    def test_exactly_two_at_point_six_is_toxic(self):
        values = {f"e{i}": 0.1 for i in range(13)}
        values["e0"] = 0.6
        values["e1"] = 0.6
        net = StubToxNet(values)
        count = toxic_endpoint_count(net, parse_smiles("CCO"))
        assert count == 2 and is_toxic(count)

    def test_one_high_rest_low_not_toxic(self):
        values = {f"e{i}": 0.1 for i in range(13)}
        values["e0"] = 0.9
        net = StubToxNet(values)
        count = toxic_endpoint_count(net, parse_smiles("CCO"))
        assert count == 1 and not is_toxic(count)

    def test_threshold_boundary_inclusive(self):
        values = {"a": 0.5, "b": 0.5, "c": 0.49}
        net = StubToxNet(values)
        assert toxic_endpoint_count(net, parse_smiles("C")) == 2

    def test_monotone_in_probabilities(self):
        base = {f"e{i}": 0.3 for i in range(5)}
        low = toxic_endpoint_count(StubToxNet(base), parse_smiles("C"))
        raised = dict(base, e0=0.8, e1=0.9)
        high = toxic_endpoint_count(StubToxNet(raised), parse_smiles("C"))
        assert high >= low


@pytest.fixture(scope="module")
def tox_corpus():
    return make_corpus(400, seed=61, max_heavy=14)


class TestTrainToxnet:
    def test_endpoint_with_no_positives_dropped(self, tox_corpus):
        features = np.stack([tox_features(parse_smiles(s)) for s in tox_corpus[:100]])
        labels = {
            "good": np.concatenate([np.ones(50), np.zeros(50)]),
            "allneg": np.zeros(100),
        }
        net, report = train_toxnet(features, labels, seed=0, epochs=2)
        assert report.dropped_endpoints == ["allneg"]
        assert net.endpoints == ["good"]

    def test_all_endpoints_missing(self):
        with pytest.raises(AllMissing):
            train_toxnet(np.zeros((10, 8)), {"a": np.full(10, np.nan)}, epochs=1)

    def test_multitask_transfer_beats_single_task(self, tox_corpus):
        # Two perfectly correlated endpoints; the second has 90% of labels
        # masked. Multi-task training must beat a single-task model trained
        # only on the unmasked 10%.
        rng = np.random.default_rng(3)
        features = np.stack([tox_features(parse_smiles(s)) for s in tox_corpus])
        w = rng.normal(size=features.shape[1]) / np.sqrt(features.shape[1])
        latent = features @ w
        labels_full = (latent > np.median(latent)).astype(float)
        masked = labels_full.copy()
        masked[rng.random(len(masked)) < 0.9] = np.nan

        kwargs = dict(seed=4, epochs=30, holdout_fraction=0.25,
                      net_kwargs={"shared": (64, 32), "private": 16, "dropout_rate": 0.2})
        _, multi = train_toxnet(
            features, {"full": labels_full, "scarce": masked}, **kwargs
        )
        _, single = train_toxnet(features, {"scarce": masked}, **kwargs)
        assert multi.metrics["scarce"].auc > single.metrics["scarce"].auc

    def test_probabilities_in_unit_interval(self, tox_corpus):
        features = np.stack([tox_features(parse_smiles(s)) for s in tox_corpus[:120]])
        labels = make_toxicity_fixture(tox_corpus[:120], ["a", "b"], seed=5)
        net, _ = train_toxnet(features, labels, seed=1, epochs=3)
        probs = net.probabilities(features[:10])
        for column in probs.values():
            assert np.all(column > 0) and np.all(column < 1)

    def test_report_has_table_metrics(self, tox_corpus):
        features = np.stack([tox_features(parse_smiles(s)) for s in tox_corpus[:150]])
        labels = make_toxicity_fixture(tox_corpus[:150], ["a", "b", "c"], seed=6)
        _, report = train_toxnet(features, labels, seed=2, epochs=8)
        row = report.average_row()
        for attr in ("auc", "precision", "recall", "f1", "balanced_accuracy"):
            assert np.isfinite(getattr(row, attr))


class TestToxicityTsv:
    def test_read(self, tmp_path):
        path = tmp_path / "tox.tsv"
        path.write_text(
            "smiles\tNR-AR\tSR-HSE\nCCO\t0\t1\nCCC\tNA\t0\n", encoding="utf-8"
        )
        smiles, labels = read_toxicity_tsv(path)
        assert smiles == ["CCO", "CCC"]
        assert labels["NR-AR"][0] == 0.0 and np.isnan(labels["NR-AR"][1])

    def test_malformed_label(self, tmp_path):
        path = tmp_path / "tox.tsv"
        path.write_text("smiles\tA\nCCO\tmaybe\n", encoding="utf-8")
        with pytest.raises(MalformedLine):
            read_toxicity_tsv(path)


class TestIngestDocking:
    def test_best_pose_kept(self, tmp_path):
        path = tmp_path / "dock.tsv"
        path.write_text(
            "mol_id\tmode\tenergy_kcal\tx\ty\tz\n"
            "m1\t1\t-6.1\t0\t0\t0\n"
            "m1\t2\t-7.0\t1\t1\t1\n",
            encoding="utf-8",
        )
        poses = ingest_docking(path, "tsv")
        assert len(poses) == 1
        assert poses[0].energy == -7.0
        assert poses[0].center == (1.0, 1.0, 1.0)

    def test_empty_file_warns(self, tmp_path, caplog):
        path = tmp_path / "empty.tsv"
        path.write_text("", encoding="utf-8")
        poses = ingest_docking(path, "tsv")
        assert poses == []

    def test_four_distinct_molecules(self, tmp_path):
        rows = [("a", -7.0), ("b", -6.5), ("c", -5.0), ("d", -8.0)]
        path = tmp_path / "dock.tsv"
        path.write_text(
            "\n".join(f"{m}\t1\t{e}\t0\t0\t0" for m, e in rows) + "\n",
            encoding="utf-8",
        )
        poses = ingest_docking(path, "tsv")
        assert sorted(p.energy for p in poses) == [-8.0, -7.0, -6.5, -5.0]

    def test_malformed_line_reports_number(self, tmp_path):
        path = tmp_path / "dock.tsv"
        path.write_text("m1\t1\t-6.1\t0\t0\t0\nbroken line\n", encoding="utf-8")
        with pytest.raises(MalformedLine) as excinfo:
            ingest_docking(path, "tsv")
        assert excinfo.value.lineno == 2

    def test_vina_log_with_sidecar(self, tmp_path):
        log = tmp_path / "vina.log"
        log.write_text(
            "MOLECULE m1\n"
            "REMARK VINA RESULT:    -7.2   0.000   0.000\n"
            "REMARK VINA RESULT:    -6.0   1.200   2.100\n"
            "MOLECULE m2\n"
            "REMARK VINA RESULT:    -5.5   0.000   0.000\n",
            encoding="utf-8",
        )
        centers = tmp_path / "centers.tsv"
        centers.write_text(
            "mol_id\tmode\tx\ty\tz\n"
            "m1\t1\t1\t2\t3\n"
            "m1\t2\t4\t5\t6\n"
            "m2\t1\t7\t8\t9\n",
            encoding="utf-8",
        )
        poses = ingest_docking(log, "vina-log", centers_path=centers)
        assert len(poses) == 2
        m1 = next(p for p in poses if p.molecule_id == "m1")
        assert m1.energy == -7.2 and m1.center == (1.0, 2.0, 3.0)

    def test_vina_log_missing_center(self, tmp_path):
        log = tmp_path / "vina.log"
        log.write_text(
            "MOLECULE m1\nREMARK VINA RESULT: -7.2 0 0\n", encoding="utf-8"
        )
        centers = tmp_path / "centers.tsv"
        centers.write_text("mol_id\tmode\tx\ty\tz\n", encoding="utf-8")
        with pytest.raises(MissingCenter):
            ingest_docking(log, "vina-log", centers_path=centers)


class TestClusterPoses:
    def test_single_cluster_arithmetic(self, tmp_path):
        energies = [-7.0, -6.5, -5.0, -8.0]
        path = tmp_path / "dock.tsv"
        rng = np.random.default_rng(0)
        lines = []
        for i, e in enumerate(energies * 5):  # 20 poses for k=1
            x, y, z = rng.normal(0, 1, size=3)
            lines.append(f"m{i}\t1\t{e}\t{x:.3f}\t{y:.3f}\t{z:.3f}")
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        poses = ingest_docking(path, "tsv")
        _, report, _ = cluster_poses(poses, k=1, seed=0)
        cluster = report.clusters[0]
        assert cluster.mean_energy == pytest.approx(-6.625)
        assert cluster.min_energy == -8.0
        assert cluster.low_energy_fraction == pytest.approx(0.75)
        assert cluster.size_percent == pytest.approx(100.0)

    def test_planted_clouds_pure_assignment(self):
        from molgen.screen import DockingPose

        rng = np.random.default_rng(1)
        poses = []
        for i in range(60):
            poses.append(DockingPose(f"a{i}", 1, float(rng.normal(-7, 0.5)),
                                     tuple(rng.normal(0, 1, 3))))
        for i in range(40):
            poses.append(DockingPose(f"b{i}", 1, float(rng.normal(-6, 0.5)),
                                     tuple(rng.normal(50, 1, 3))))
        _, report, assignment = cluster_poses(poses, k=2, seed=0)
        first = assignment[:60]
        second = assignment[60:]
        assert len(set(first.tolist())) == 1
        assert len(set(second.tolist())) == 1
        assert first[0] != second[0]
        # largest cluster is reported first
        assert report.clusters[0].count == 60

    def test_statistics_match_brute_force(self):
        from molgen.screen import DockingPose

        rng = np.random.default_rng(2)
        poses = [
            DockingPose(f"m{i}", 1, float(rng.normal(-6.5, 1.0)),
                        tuple(rng.normal(0, 5, 3) + (0 if i % 2 else 30)))
            for i in range(80)
        ]
        _, report, assignment = cluster_poses(poses, k=2, seed=1)
        energies = np.array([p.energy for p in poses])
        for c, stats in enumerate(report.clusters):
            member = energies[assignment == c]
            assert stats.count == member.size
            assert stats.mean_energy == pytest.approx(member.mean())
            assert stats.std_energy == pytest.approx(member.std())
            assert stats.min_energy == pytest.approx(member.min())
            assert stats.low_energy_fraction == pytest.approx((member < -6).mean())
        assert report.overall_low_energy_fraction == pytest.approx((energies < -6).mean())

    def test_too_few_points(self):
        from molgen.screen import DockingPose

        poses = [DockingPose("m", 1, -7.0, (0.0, 0.0, 0.0))] * 12
        with pytest.raises(TooFewPoints):
            cluster_poses(poses, k=2)


def _candidate(id="c0", **overrides) -> CandidateRecord:
    base = dict(
        id=id, smiles="CCO", target_id="mpro", mol_wt=350.0, logp=2.0,
        qed=0.5, sa=3.0, passes_filters=True, pic50=6.5, selectivity=1.2,
        novelty=0.4, toxic_endpoints=0,
    )
    base.update(overrides)
    return CandidateRecord(**base)


class TestApplyScreening:
    def test_all_thresholds_satisfied(self):
        out = apply_screening([_candidate()])
        assert out[0].verdict is True and out[0].reasons == []

    def test_qed_boundary_is_strict(self):
        out = apply_screening([_candidate(qed=0.4)])
        assert out[0].verdict is False
        assert out[0].reasons == ["qed"]

    def test_toxicity_boundary(self):
        out = apply_screening([_candidate(toxic_endpoints=2)])
        assert out[0].reasons == ["toxicity"]
        out = apply_screening([_candidate(toxic_endpoints=1)])
        assert out[0].verdict is True

    def test_selectivity_floors_per_target(self):
        # mpro floor 1.15; rbd 0.75; nsp9 0.7
        assert apply_screening([_candidate(selectivity=1.15)])[0].reasons == ["selectivity"]
        assert apply_screening([_candidate(selectivity=1.16)])[0].verdict
        rbd = _candidate(target_id="rbd", selectivity=0.76)
        assert apply_screening([rbd])[0].verdict
        nsp9 = _candidate(target_id="nsp9", selectivity=0.69)
        assert apply_screening([nsp9])[0].reasons == ["selectivity"]

    def test_ten_candidate_fixture_exact_subset(self):
        candidates = [
            _candidate("c0"),                                   # pass
            _candidate("c1", pic50=6.0),                        # fail pic50 (strict)
            _candidate("c2", qed=0.41),                         # pass
            _candidate("c3", sa=5.0),                           # fail sa (strict <)
            _candidate("c4", logp=5.5),                         # fail logp
            _candidate("c5", mol_wt=500.0),                     # fail mol_wt (strict <)
            _candidate("c6", toxic_endpoints=3),                # fail toxicity
            _candidate("c7", selectivity=1.149),                # fail selectivity
            _candidate("c8", target_id="rbd", selectivity=0.8), # pass
            _candidate("c9", pic50=5.0, qed=0.2),               # fail two ways
        ]
        out = apply_screening(candidates)
        passed = {c.id for c in out if c.verdict}
        assert passed == {"c0", "c2", "c8"}
        failed_two = next(c for c in out if c.id == "c9")
        assert failed_two.reasons == ["pic50", "qed"]

    def test_missing_field_names_candidate(self):
        candidate = _candidate("broken", qed=None)
        with pytest.raises(MissingField) as excinfo:
            apply_screening([candidate])
        assert "broken" in str(excinfo.value) and "qed" in str(excinfo.value)

    def test_order_independent_and_idempotent(self):
        candidates = [_candidate(f"c{i}", qed=0.3 + 0.05 * i) for i in range(6)]
        forward = apply_screening(candidates)
        backward = apply_screening(list(reversed(candidates)))
        by_id_f = {c.id: c.verdict for c in forward}
        by_id_b = {c.id: c.verdict for c in backward}
        assert by_id_f == by_id_b
        again = apply_screening(forward)
        assert [c.verdict for c in again] == [c.verdict for c in forward]

    def test_custom_criteria_override(self):
        criteria = ScreeningCriteria(min_qed=0.9)
        out = apply_screening([_candidate()], criteria)
        assert out[0].reasons == ["qed"]


class TestChirality:
    def test_stereo_marker_excluded(self):
        assert not is_achiral("C[C@H](N)C(=O)O")
        assert is_achiral("CC(N)C(=O)O")


class TestRetroStub:
    def test_unavailable(self):
        client = StubRetrosynthesisClient()
        job = client.submit("CCO")
        result = client.poll(job)
        assert result.status == "unavailable"

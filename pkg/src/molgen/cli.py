"""Pipeline command line: one subcommand per stage, TOML config, seeded and
manifest-tracked outputs. Re-running a stage with identical inputs and seed
produces byte-identical artifacts.

Exit codes: 0 ok, 2 config error, 3 stage error (machine-readable error JSON
on stderr).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import shutil
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib  # Python 3.11+
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from . import bench as bench_mod
from . import props as props_mod
from .chem import canonical_smiles, parse_smiles, read_smiles_file
from .datasets import (
    make_binding_fixture,
    make_corpus,
    make_docking_fixture,
    make_protein_sequences,
    make_toxicity_fixture,
    write_fasta,
    write_smiles_file,
)
from .depict import layout
from .fingerprint import FingerprintIndex, build_index, key_fingerprint, novelty, tanimoto
from .nn import load_checkpoint, save_checkpoint
from .predict import (
    AffinityModel,
    BindingRecord,
    embeddings_from_fasta,
    read_binding_tsv,
    save_protein_embeddings,
    load_protein_embeddings,
    ProteinEmbedding,
    selectivity,
    train_affinity,
    train_latent_regressor,
    write_binding_tsv,
)
from .sampling import (
    AttributeClassifier,
    AttributeSpec,
    BudgetExhausted,
    GmmDensity,
    class_sample,
    enrichment_report,
    fit_gmm,
    train_attribute_classifier,
)
from .screen import (
    CandidateRecord,
    ScreeningCriteria,
    apply_screening,
    cluster_poses,
    ingest_docking,
    is_achiral,
    read_toxicity_tsv,
    tox_features,
    toxic_endpoint_count,
    train_toxnet,
)
from .vae import VaeConfig, VaeModel, Vocabulary, adaptive_pretrain

_DATA_DIR = Path(__file__).parent / "data"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Config and manifests

def load_config(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    with open(path, "rb") as handle:
        try:
            config = tomllib.load(handle)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML: {exc}") from exc
    seed_override = os.environ.get("MOLGEN_SEED")
    if seed_override is not None:
        config.setdefault("pipeline", {})["seed"] = int(seed_override)
    return config


def stage_seed(config: dict, stage: str) -> int:
    base = int(config.get("pipeline", {}).get("seed", 20240601))
    # stable per-stage offset so stages are decoupled but reproducible
    return base + sum(ord(c) for c in stage)


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_json(path: Path, payload) -> None:
    path.write_text(
        json.dumps(payload, sort_keys=True, indent=1, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def write_manifest(out_dir: Path, stage: str, config: dict,
                   inputs: list[Path], outputs: list[Path], seed: int) -> None:
    manifest = {
        "stage": stage,
        "seed": seed,
        "config": config,
        "inputs": {str(p): sha256_file(Path(p)) for p in inputs if Path(p).exists()},
        "outputs": {str(p): sha256_file(Path(p)) for p in outputs if Path(p).exists()},
    }
    write_json(out_dir / f"{stage}.manifest.json", manifest)


class PipelineDir:
    """Owns one output directory through a lock file."""

    def __init__(self, out_dir: str | Path):
        self.path = Path(out_dir)
        self.path.mkdir(parents=True, exist_ok=True)
        self.lock = self.path / ".lock"

    def __enter__(self) -> Path:
        if self.lock.exists():
            raise StageError(f"{self.path} is locked by another process ({self.lock})")
        self.lock.write_text(str(os.getpid()), encoding="utf-8")
        return self.path

    def __exit__(self, *exc) -> None:
        self.lock.unlink(missing_ok=True)


def _paths(config: dict) -> dict:
    section = config.get("paths", {})
    if "out_dir" not in section:
        raise ConfigError("config [paths] must define out_dir")
    return section


def _existing(path_value, what: str) -> Path:
    path = Path(path_value)
    if not path.exists():
        raise ConfigError(f"{what} {path} does not exist")
    return path


# ---------------------------------------------------------------------------
# Stage implementations

def cmd_make_fixtures(config: dict, args) -> None:
    """Bootstrap a workspace: corpus, proteins, binding, toxicity, docking."""
    paths = _paths(config)
    fixtures = config.get("fixtures", {})
    seed = stage_seed(config, "make-fixtures")
    out_dir = Path(paths["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)

    n_corpus = int(fixtures.get("corpus_size", 5000))
    corpus = make_corpus(
        n_corpus, seed=seed,
        max_heavy=int(fixtures.get("max_heavy", 14)),
        max_rings=int(fixtures.get("max_rings", 1)),
        max_subs=int(fixtures.get("max_subs", 2)),
    )
    write_smiles_file(paths["corpus"], [(f"mol{i:05d}", s) for i, s in enumerate(corpus)])

    sequences = make_protein_sequences(int(fixtures.get("n_proteins", 10)), seed=seed + 1)
    write_fasta(paths["proteins_fasta"], sequences)
    embeddings = embeddings_from_fasta(paths["proteins_fasta"], k=3, dim=64)
    vectors = {pid: e.vector for pid, e in embeddings.items()}

    binding_smiles = corpus[: int(fixtures.get("binding_size", 1200))]
    records = [BindingRecord(*t) for t in make_binding_fixture(binding_smiles, vectors, seed=seed + 2)]
    write_binding_tsv(paths["binding"], records)

    tox_smiles = corpus[: int(fixtures.get("toxicity_size", 800))]
    endpoints = config.get("toxicity", {}).get("endpoints", [
        "NR-AR", "NR-ER", "SR-ARE", "SR-MMP", "CT-TOX",
    ])
    labels = make_toxicity_fixture(tox_smiles, endpoints, seed=seed + 3)
    with open(paths["toxicity"], "w", encoding="utf-8") as handle:
        handle.write("smiles\t" + "\t".join(endpoints) + "\n")
        for i, smiles in enumerate(tox_smiles):
            row = [smiles]
            for name in endpoints:
                value = labels[name][i]
                row.append("NA" if np.isnan(value) else str(int(value)))
            handle.write("\t".join(row) + "\n")

    rows = make_docking_fixture(
        [f"gen{i:04d}" for i in range(60)],
        cluster_centers=[(0.0, 0.0, 0.0), (25.0, 10.0, -5.0)],
        cluster_sizes=[140, 60],
        energy_means=[-7.0, -6.2],
        energy_stds=[0.8, 0.7],
        seed=seed + 4,
    )
    with open(paths["docking"], "w", encoding="utf-8") as handle:
        handle.write("mol_id\tmode\tenergy_kcal\tx\ty\tz\n")
        for row in rows:
            handle.write("\t".join(str(v) for v in row) + "\n")
    print(f"fixtures written: corpus={len(corpus)} binding={len(records)} "
          f"toxicity={len(tox_smiles)} docking={len(rows)}")


def _vae_config(config: dict) -> VaeConfig:
    section = dict(config.get("vae", {}))
    section.pop("epochs_unsupervised", None)
    section.pop("epochs_supervised", None)
    return VaeConfig(**section)


def cmd_train_vae(config: dict, args) -> None:
    paths = _paths(config)
    seed = stage_seed(config, "train-vae")
    with PipelineDir(paths["out_dir"]) as out_dir:
        corpus_path = _existing(paths["corpus"], "corpus")
        records = read_smiles_file(corpus_path)
        smiles = [s for _, s in records]
        binding_path = Path(paths.get("binding", ""))
        binding_smiles = []
        if binding_path.exists():
            binding_smiles = sorted({r.smiles for r in read_binding_tsv(binding_path)})
        vocab = Vocabulary.build([smiles, binding_smiles])
        vae_config = _vae_config(config)
        model = VaeModel(vocab, vae_config, seed=seed)

        mols = [parse_smiles(s) for s in binding_smiles]
        fragment_db = props_mod.FragmentScores.fit([parse_smiles(s) for s in smiles])
        qed_labels = np.array([props_mod.qed(m) for m in mols]) if mols else None
        sa_labels = (
            np.array([props_mod.sa_score(m, fragment_db) for m in mols]) if mols else None
        )
        epochs_a = int(config.get("vae", {}).get("epochs_unsupervised", 40))
        epochs_b = int(config.get("vae", {}).get("epochs_supervised", 5))
        report_a, report_b = adaptive_pretrain(
            model, smiles, binding_smiles,
            (qed_labels, sa_labels), epochs_a, epochs_b, seed=seed,
            log=lambda e, r: print(
                f"  epoch {e}: total {r['total']:.4f} recon {r['recon']:.4f} "
                f"kl {r['kl']:.3f}", flush=True),
        )
        checkpoint = out_dir / "vae.nnck"
        model.save(checkpoint, metadata={
            "seed": seed,
            "corpus_hash": sha256_file(corpus_path),
            "epochs_unsupervised": epochs_a,
            "epochs_supervised": epochs_b,
        })
        fragdb_path = out_dir / "fragment_db.json"
        write_json(fragdb_path, fragment_db.to_json_dict())
        report_path = out_dir / "vae_report.json"
        write_json(report_path, {
            "phase_unsupervised": report_a.losses,
            "phase_supervised": report_b.losses,
            "skipped_too_long": report_a.skipped_too_long,
        })
        write_manifest(out_dir, "train-vae", config, [corpus_path],
                       [checkpoint, fragdb_path, report_path], seed)


def cmd_embed(config: dict, args) -> None:
    paths = _paths(config)
    seed = stage_seed(config, "embed")
    with PipelineDir(paths["out_dir"]) as out_dir:
        model = VaeModel.load(out_dir / "vae.nnck")
        records = read_smiles_file(_existing(paths["corpus"], "corpus"))
        ids, encodings = [], []
        for mol_id, smiles in records:
            ids.append(mol_id)
            encodings.append(model.encode(smiles, mode="mean"))
        matrix = np.stack(encodings)
        np.save(out_dir / "encodings.npy", matrix.astype(np.float32))
        (out_dir / "encodings_ids.txt").write_text(
            "\n".join(ids) + "\n", encoding="utf-8"
        )
        write_manifest(out_dir, "embed", config,
                       [Path(paths["corpus"]), out_dir / "vae.nnck"],
                       [out_dir / "encodings.npy", out_dir / "encodings_ids.txt"], seed)


def _load_encodings(out_dir: Path) -> tuple[list[str], np.ndarray]:
    ids = (out_dir / "encodings_ids.txt").read_text(encoding="utf-8").splitlines()
    matrix = np.load(out_dir / "encodings.npy").astype(np.float64)
    return ids, matrix


def _affinity_save(path: Path, model: AffinityModel, extra: dict) -> None:
    topology = {
        "tag": "affinity-v1",
        "level": model.level,
        "molecule_dim": model.molecule_dim,
        "protein_dim": model.protein_dim,
        "vocab": sorted(model.token_index) if model.level == "x" else None,
        **extra,
    }
    save_checkpoint(path, topology, model.parameters(), {})


def _affinity_load(path: Path, embeddings: dict) -> AffinityModel:
    topology, params, _ = load_checkpoint(path)
    model = AffinityModel(
        topology["level"],
        topology["molecule_dim"] if topology["level"] == "z" else 0,
        topology["protein_dim"],
        embeddings,
        seed=0,
        vocab_tokens=topology["vocab"],
        hidden=topology.get("hidden", 2048),
    )
    from .nn import assign_parameters

    assign_parameters(model.parameters(), params)
    return model


def cmd_train_predictors(config: dict, args) -> None:
    paths = _paths(config)
    section = config.get("predictors", {})
    seed = stage_seed(config, "train-predictors")
    with PipelineDir(paths["out_dir"]) as out_dir:
        ids, encodings = _load_encodings(out_dir)
        corpus_records = read_smiles_file(_existing(paths["corpus"], "corpus"))
        smiles_by_id = dict(corpus_records)
        mols = {mol_id: parse_smiles(smiles_by_id[mol_id]) for mol_id in ids}
        fragment_db = props_mod.FragmentScores.from_json_dict(
            json.loads((out_dir / "fragment_db.json").read_text(encoding="utf-8"))
        )

        reports = {}
        regressor_epochs = int(section.get("regressor_epochs", 60))
        hidden = int(section.get("affinity_hidden", 512))
        labels = {
            "qed": np.array([props_mod.qed(mols[i]) for i in ids]),
            "logp": np.array([props_mod.crippen_logp(mols[i]) for i in ids]),
            "sa": np.array([props_mod.sa_score(mols[i], fragment_db) for i in ids]),
        }
        for name, values in labels.items():
            net, report = train_latent_regressor(
                name, encodings, values, seed=seed, epochs=regressor_epochs
            )
            save_checkpoint(out_dir / f"regressor_{name}.nnck", net.topology(),
                            net.parameters(), {"attribute": name})
            reports[name] = vars(report)

        embeddings = embeddings_from_fasta(
            _existing(paths["proteins_fasta"], "protein FASTA"), k=3, dim=64
        )
        save_protein_embeddings(out_dir / "proteins.pemb", embeddings)
        binding = read_binding_tsv(_existing(paths["binding"], "binding TSV"))
        vae = VaeModel.load(out_dir / "vae.nnck")
        latents = np.stack([vae.encode(r.smiles, mode="mean") for r in binding])
        affinity_epochs = int(section.get("affinity_epochs", 30))
        z_model, z_report = train_affinity(
            "z", binding, embeddings, latents=latents, seed=seed,
            epochs=affinity_epochs, hidden=hidden,
        )
        x_model, x_report = train_affinity(
            "x", binding, embeddings, seed=seed,
            epochs=affinity_epochs, hidden=hidden,
        )
        _affinity_save(out_dir / "affinity_z.nnck", z_model, {"hidden": hidden})
        _affinity_save(out_dir / "affinity_x.nnck", x_model, {"hidden": hidden})
        reports["affinity_z"] = vars(z_report)
        reports["affinity_x"] = vars(x_report)

        tox_path = Path(paths.get("toxicity", ""))
        if tox_path.exists():
            tox_smiles, tox_labels = read_toxicity_tsv(tox_path)
            features = np.stack([tox_features(parse_smiles(s)) for s in tox_smiles])
            tox_epochs = int(section.get("toxicity_epochs", 25))
            net, tox_report = train_toxnet(features, tox_labels, seed=seed,
                                           epochs=tox_epochs)
            topology = {"tag": "toxnet-v1", "endpoints": net.endpoints,
                        "input_dim": net.input_dim}
            save_checkpoint(out_dir / "toxnet.nnck", topology, net.parameters(), {})
            reports["toxicity"] = {
                name: vars(metrics) for name, metrics in tox_report.metrics.items()
            }

        write_json(out_dir / "predictor_reports.json", reports)
        write_manifest(
            out_dir, "train-predictors", config,
            [Path(paths["corpus"]), Path(paths["binding"]), Path(paths["proteins_fasta"])],
            [out_dir / "predictor_reports.json", out_dir / "affinity_z.nnck",
             out_dir / "affinity_x.nnck", out_dir / "proteins.pemb"],
            seed,
        )


def _load_toxnet(out_dir: Path):
    from .nn import assign_parameters
    from .screen import MultiTaskToxNet

    topology, params, _ = load_checkpoint(out_dir / "toxnet.nnck")
    net = MultiTaskToxNet(topology["endpoints"], input_dim=topology["input_dim"])
    assign_parameters(net.parameters(), params)
    return net


def _load_regressor(out_dir: Path, name: str):
    from .nn import DenseNet, assign_parameters

    topology, params, _ = load_checkpoint(out_dir / f"regressor_{name}.nnck")
    net = DenseNet(topology["widths"], topology["activations"],
                   topology["dropout"], np.random.default_rng(0))
    assign_parameters(net.parameters(), params)
    return net


def cmd_fit_class(config: dict, args) -> None:
    paths = _paths(config)
    section = config.get("attributes", {})
    sampler_cfg = config.get("sampler", {})
    seed = stage_seed(config, "fit-class")
    with PipelineDir(paths["out_dir"]) as out_dir:
        ids, encodings = _load_encodings(out_dir)
        k = int(sampler_cfg.get("gmm_components", 20))
        gmm, gmm_report = fit_gmm(encodings, k, seed=seed)
        write_json(out_dir / "gmm.json", gmm.to_json_dict())

        target = section.get("target", "prot00")
        embeddings = load_protein_embeddings(out_dir / "proteins.pemb")
        z_model = _affinity_load(out_dir / "affinity_z.nnck", embeddings)

        from .nn import Tensor, no_grad

        def predict_affinity(matrix: np.ndarray) -> np.ndarray:
            out = []
            with no_grad():
                for start in range(0, matrix.shape[0], 512):
                    chunk = matrix[start : start + 512]
                    out.append(
                        z_model.forward([target] * chunk.shape[0], chunk).data.reshape(-1)
                    )
            return np.concatenate(out)

        qed_net = _load_regressor(out_dir, "qed")

        def predict_qed(matrix: np.ndarray) -> np.ndarray:
            with no_grad():
                return qed_net(Tensor(matrix)).data.reshape(-1)

        panel_k = int(section.get("panel_k", 5))
        panel_seed = int(section.get("panel_seed", seed + 7))
        candidates = sorted(pid for pid in embeddings if pid != target)
        rng = np.random.default_rng(panel_seed)
        panel = [candidates[i] for i in rng.choice(len(candidates), size=min(panel_k, len(candidates)), replace=False)]

        def predict_selectivity(matrix: np.ndarray) -> np.ndarray:
            target_ba = predict_affinity(matrix)
            panel_sum = np.zeros(matrix.shape[0])
            with no_grad():
                for pid in panel:
                    for start in range(0, matrix.shape[0], 512):
                        chunk = matrix[start : start + 512]
                        panel_sum[start : start + 512] += z_model.forward(
                            [pid] * chunk.shape[0], chunk
                        ).data.reshape(-1)
            return target_ba - panel_sum / len(panel)

        raw = {
            "affinity": predict_affinity(encodings),
            "qed": predict_qed(encodings),
            "selectivity": predict_selectivity(encodings),
        }
        kinds = {
            "affinity": f"affinity({target})",
            "qed": "qed",
            "selectivity": f"selectivity({target})",
        }
        raw_defaults = {"affinity": 6.0, "qed": 0.6, "selectivity": 0.0}
        classifier_states = {}
        classifier_reports = {}
        for name in ("affinity", "qed", "selectivity"):
            lo = float(np.min(raw[name]))
            hi = float(np.max(raw[name]))
            norm_key = f"{name}_threshold_normalized"
            if norm_key in section:
                # threshold given on the normalized [0, 1] control scale
                t = float(section[norm_key])
                raw_threshold = lo + t * max(hi - lo, 1e-9)
            else:
                raw_threshold = float(section.get(f"{name}_threshold", raw_defaults[name]))
            spec = AttributeSpec.from_predictions(
                name, kinds[name], raw_threshold, raw[name]
            )
            clf, report = train_attribute_classifier(
                spec, encodings, raw[name], seed=seed + 1,
                epochs=int(sampler_cfg.get("classifier_epochs", 60)),
            )
            classifier_states[name] = clf.state_dict()
            classifier_reports[name] = vars(report)
        write_json(out_dir / "classifiers.json", {
            "target": target,
            "panel": panel,
            "panel_seed": panel_seed,
            "classifiers": classifier_states,
            "reports": classifier_reports,
            "gmm_report": {k: v for k, v in gmm_report.items() if k != "trajectory"},
        })
        write_manifest(out_dir, "fit-class", config,
                       [out_dir / "encodings.npy"],
                       [out_dir / "gmm.json", out_dir / "classifiers.json"], seed)


def _load_classifiers(out_dir: Path) -> tuple[dict, list[AttributeClassifier]]:
    payload = json.loads((out_dir / "classifiers.json").read_text(encoding="utf-8"))
    classifiers = [
        AttributeClassifier.from_state_dict(payload["classifiers"][name])
        for name in ("affinity", "qed", "selectivity")
    ]
    return payload, classifiers


def cmd_sample(config: dict, args) -> None:
    paths = _paths(config)
    sampler_cfg = config.get("sampler", {})
    seed = int(sampler_cfg.get("seed", stage_seed(config, "sample")))
    with PipelineDir(paths["out_dir"]) as out_dir:
        gmm = GmmDensity.from_json_dict(
            json.loads((out_dir / "gmm.json").read_text(encoding="utf-8"))
        )
        payload, classifiers = _load_classifiers(out_dir)
        vae = VaeModel.load(out_dir / "vae.nnck")
        batch = class_sample(
            gmm, classifiers, vae,
            n_target=int(sampler_cfg.get("n_target", 300)),
            seed=seed,
            budget=int(sampler_cfg.get("budget", 1_000_000)),
            chunk_size=int(sampler_cfg.get("chunk_size", 512)),
            decode_strategy=sampler_cfg.get("decode_strategy", "greedy"),
            temperature=float(sampler_cfg.get("temperature", 1.0)),
        )
        (out_dir / "samples.jsonl").write_text(batch.export_jsonl(), encoding="utf-8")
        write_json(out_dir / "sample_report.json", {
            "drawn": batch.drawn,
            "accepted_z": batch.accepted_z_count,
            "acceptance_rate": round(batch.acceptance_rate, 6),
            "validity_rate": round(batch.validity_rate, 6),
            "dedup_rate": round(batch.dedup_rate, 6),
            "n_unique_valid": len(batch.accepted),
            "seed": seed,
        })
        write_manifest(out_dir, "sample", config,
                       [out_dir / "gmm.json", out_dir / "classifiers.json",
                        out_dir / "vae.nnck"],
                       [out_dir / "samples.jsonl", out_dir / "sample_report.json"], seed)


def cmd_screen(config: dict, args) -> None:
    paths = _paths(config)
    section = config.get("screening", {})
    seed = stage_seed(config, "screen")
    with PipelineDir(paths["out_dir"]) as out_dir:
        samples = [
            json.loads(line)
            for line in (out_dir / "samples.jsonl").read_text(encoding="utf-8").splitlines()
            if line
        ]
        if not samples:
            raise StageError("no samples to screen")
        payload, _ = _load_classifiers(out_dir)
        target = payload["target"]
        panel = payload["panel"]
        embeddings = load_protein_embeddings(out_dir / "proteins.pemb")
        x_model = _affinity_load(out_dir / "affinity_x.nnck", embeddings)
        fragment_db = props_mod.FragmentScores.from_json_dict(
            json.loads((out_dir / "fragment_db.json").read_text(encoding="utf-8"))
        )
        toxnet = _load_toxnet(out_dir) if (out_dir / "toxnet.nnck").exists() else None
        corpus_records = read_smiles_file(_existing(paths["corpus"], "corpus"))
        reference = build_index(
            [(mol_id, parse_smiles(s)) for mol_id, s in corpus_records]
        )

        docking_best: dict[str, float] = {}
        docking_path = Path(paths.get("docking", ""))
        if docking_path.exists():
            for pose in ingest_docking(docking_path, "tsv"):
                docking_best[pose.molecule_id] = pose.energy

        candidates = []
        for i, sample in enumerate(samples):
            smiles = sample["smiles"]
            mol = parse_smiles(smiles)
            mol_id = f"gen{i:04d}"
            pic50 = x_model.predict(target, smiles)
            sel = selectivity(x_model, smiles, target, panel=panel)
            tox_count = toxic_endpoint_count(toxnet, mol) if toxnet else 0
            candidates.append(CandidateRecord(
                id=mol_id,
                smiles=smiles,
                target_id=section.get("target_label", target),
                mol_wt=props_mod.mol_weight(mol),
                logp=props_mod.crippen_logp(mol),
                qed=props_mod.qed(mol),
                sa=props_mod.sa_score(mol, fragment_db),
                passes_filters=props_mod.passes_filters(mol),
                pic50=pic50,
                selectivity=sel.value,
                novelty=novelty(mol, reference).value,
                toxic_endpoints=tox_count,
                docking_energy=docking_best.get(mol_id) if is_achiral(smiles) else None,
            ))
        criteria = ScreeningCriteria(
            min_pic50=float(section.get("min_pic50", 6.0)),
            min_qed=float(section.get("min_qed", 0.4)),
            max_sa=float(section.get("max_sa", 5.0)),
            max_toxic_endpoints=int(section.get("max_toxic_endpoints", 2)),
            max_logp=float(section.get("max_logp", 5.0)),
            max_mol_wt=float(section.get("max_mol_wt", 500.0)),
            selectivity_floors=section.get(
                "selectivity_floors", {"mpro": 1.15, "rbd": 0.75, "nsp9": 0.7}
            ),
        )
        screened = apply_screening(candidates, criteria)
        lines = []
        for c in screened:
            lines.append(json.dumps({
                "id": c.id, "smiles": c.smiles, "target_id": c.target_id,
                "mol_wt": round(c.mol_wt, 6), "logp": round(c.logp, 6),
                "qed": round(c.qed, 6), "sa": round(c.sa, 6),
                "passes_filters": c.passes_filters,
                "pic50": round(c.pic50, 6), "selectivity": round(c.selectivity, 6),
                "novelty": round(c.novelty, 6), "toxic_endpoints": c.toxic_endpoints,
                "docking_energy": c.docking_energy,
                "verdict": c.verdict, "reasons": c.reasons,
            }, sort_keys=True))
        (out_dir / "candidates.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")
        n_pass = sum(1 for c in screened if c.verdict)
        summary = [
            f"screened {len(screened)} candidates, {n_pass} pass all criteria",
            f"criteria: pic50>{criteria.min_pic50} qed>{criteria.min_qed} "
            f"sa<{criteria.max_sa} tox<{criteria.max_toxic_endpoints} "
            f"logp<{criteria.max_logp} mw<{criteria.max_mol_wt}",
        ]
        (out_dir / "screen_summary.txt").write_text("\n".join(summary) + "\n", encoding="utf-8")
        write_manifest(out_dir, "screen", config,
                       [out_dir / "samples.jsonl"],
                       [out_dir / "candidates.jsonl", out_dir / "screen_summary.txt"], seed)
        print("\n".join(summary))


def cmd_bench(config: dict, args) -> None:
    paths = _paths(config)
    seed = stage_seed(config, "bench")
    with PipelineDir(paths["out_dir"]) as out_dir:
        samples = [
            json.loads(line)["smiles"]
            for line in (out_dir / "samples.jsonl").read_text(encoding="utf-8").splitlines()
            if line
        ]
        corpus = [s for _, s in read_smiles_file(_existing(paths["corpus"], "corpus"))]
        report = bench_mod.evaluate(samples, corpus)
        write_json(out_dir / "metrics.json", report.to_json_dict())
        hist = bench_mod.scaffold_novelty_histogram(samples, corpus[:500])
        csv_lines = ["bin_low,bin_high,count"]
        for low, high, count in zip(hist.bin_edges[:-1], hist.bin_edges[1:], hist.counts):
            csv_lines.append(f"{low:.2f},{high:.2f},{count}")
        (out_dir / "scaffold_novelty.csv").write_text("\n".join(csv_lines) + "\n", encoding="utf-8")
        write_manifest(out_dir, "bench", config, [out_dir / "samples.jsonl"],
                       [out_dir / "metrics.json", out_dir / "scaffold_novelty.csv"], seed)


def cmd_report(config: dict, args) -> None:
    paths = _paths(config)
    seed = stage_seed(config, "report")
    with PipelineDir(paths["out_dir"]) as out_dir:
        summary: dict = {}
        for name in ("sample_report", "metrics", "predictor_reports"):
            path = out_dir / f"{name}.json"
            if path.exists():
                summary[name] = json.loads(path.read_text(encoding="utf-8"))
        docking_path = Path(paths.get("docking", ""))
        if docking_path.exists():
            poses = ingest_docking(docking_path, "tsv")
            k = int(config.get("docking", {}).get("clusters", 2))
            if len(poses) >= 10 * k:
                _, cluster_report, _ = cluster_poses(poses, k, seed=seed)
                summary["docking_clusters"] = {
                    "overall_low_energy_fraction": cluster_report.overall_low_energy_fraction,
                    "clusters": [vars(c) for c in cluster_report.clusters],
                }
        candidates_path = out_dir / "candidates.jsonl"
        if candidates_path.exists():
            rows = [json.loads(line) for line in candidates_path.read_text(encoding="utf-8").splitlines() if line]
            summary["screening"] = {
                "total": len(rows),
                "passed": sum(1 for r in rows if r["verdict"]),
            }
        write_json(out_dir / "report.json", summary)
        lines = ["pipeline report", "==============="]
        for key in sorted(summary):
            lines.append(f"[{key}]")
            lines.append(json.dumps(summary[key], sort_keys=True, indent=1))
        (out_dir / "report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
        write_manifest(out_dir, "report", config, [], [out_dir / "report.json"], seed)


def cmd_export_explorer(config: dict, args) -> None:
    paths = _paths(config)
    seed = stage_seed(config, "export-explorer")
    with PipelineDir(paths["out_dir"]) as out_dir:
        rows = [
            json.loads(line)
            for line in (out_dir / "candidates.jsonl").read_text(encoding="utf-8").splitlines()
            if line
        ]
        candidates = []
        fingerprints = {}
        for row in rows:
            mol = parse_smiles(row["smiles"])
            fingerprints[row["id"]] = key_fingerprint(mol)
            candidates.append({
                "id": row["id"],
                "smiles": row["smiles"],
                "target_id": row.get("target_id"),
                "qed": row["qed"],
                "affinity": row["pic50"],
                "selectivity": row["selectivity"],
                "sa": row["sa"],
                "logp": row["logp"],
                "mol_wt": row["mol_wt"],
                "novelty": row["novelty"],
                "toxic_count": row["toxic_endpoints"],
                "docking_energy": row.get("docking_energy"),
                "verdict": row.get("verdict"),
                "reasons": row.get("reasons", []),
                "depiction": layout(mol),
            })
        edges = []
        ids = [c["id"] for c in candidates]
        for cid in ids:
            sims = sorted(
                (
                    (other, tanimoto(fingerprints[cid], fingerprints[other]))
                    for other in ids if other != cid
                ),
                key=lambda t: (-t[1], t[0]),
            )[:5]
            for other, sim in sims:
                edges.append({"source": cid, "target": other,
                              "similarity": round(sim, 6)})
        dataset = {"candidates": candidates, "edges": edges}
        write_json(out_dir / "explorer.json", dataset)
        shutil.copyfile(_DATA_DIR / "explorer-schema.json", out_dir / "explorer-schema.json")
        _validate_explorer_dataset(dataset)
        write_manifest(out_dir, "export-explorer", config,
                       [out_dir / "candidates.jsonl"],
                       [out_dir / "explorer.json", out_dir / "explorer-schema.json"], seed)
        print(f"exported {len(candidates)} candidates, {len(edges)} edges")


def _validate_explorer_dataset(dataset: dict) -> None:
    """Minimal structural validation against the shipped schema contract."""
    required = ["id", "smiles", "qed", "affinity", "selectivity", "sa", "logp",
                "mol_wt", "novelty", "toxic_count", "depiction"]
    ids = set()
    for candidate in dataset["candidates"]:
        for field in required:
            if field not in candidate:
                raise StageError(f"candidate missing field {field!r}")
        ids.add(candidate["id"])
    for edge in dataset["edges"]:
        if edge["source"] not in ids or edge["target"] not in ids:
            raise StageError("edge endpoint references unknown candidate")


COMMANDS = {
    "make-fixtures": cmd_make_fixtures,
    "train-vae": cmd_train_vae,
    "embed": cmd_embed,
    "train-predictors": cmd_train_predictors,
    "fit-class": cmd_fit_class,
    "sample": cmd_sample,
    "screen": cmd_screen,
    "bench": cmd_bench,
    "report": cmd_report,
    "export-explorer": cmd_export_explorer,
}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="molgen",
        description="Molecule generation pipeline: train, embed, fit, sample, screen.",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="TOML config file")
    parser.add_argument("--seed", type=int, default=None, help="override pipeline seed")
    parser.add_argument("--out", default=None, help="override [paths].out_dir")
    parser.add_argument("--jobs", type=int, default=1, help="reserved; stages are single-process")
    args = parser.parse_args(argv)

    try:
        config = load_config(args.config)
        if args.seed is not None:
            config.setdefault("pipeline", {})["seed"] = args.seed
        if args.out is not None:
            config.setdefault("paths", {})["out_dir"] = args.out
    except ConfigError as exc:
        print(json.dumps({"error": "config", "message": str(exc)}), file=sys.stderr)
        return EXIT_CONFIG

    try:
        COMMANDS[args.command](config, args)
    except ConfigError as exc:
        print(json.dumps({"error": "config", "message": str(exc)}), file=sys.stderr)
        return EXIT_CONFIG
    except BudgetExhausted as exc:
        print(json.dumps({
            "error": "budget-exhausted",
            "message": str(exc),
            "drawn": exc.batch.drawn,
            "accepted": len(exc.batch.accepted),
        }), file=sys.stderr)
        return EXIT_STAGE
    except (StageError, OSError, ValueError, RuntimeError, KeyError) as exc:
        print(json.dumps({
            "error": "stage",
            "type": type(exc).__name__,
            "message": str(exc),
        }), file=sys.stderr)
        return EXIT_STAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

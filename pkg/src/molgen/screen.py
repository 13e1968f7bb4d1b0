"""In-silico screening: multi-task toxicity network with masked losses,
docking-result ingestion and pose clustering, and the threshold filter that
produces pass/fail verdicts for candidate molecules.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .chem import Molecule, parse_smiles
from .fingerprint import circular_fingerprint
from .nn import DenseNet, Linear, Tensor, dropout as nn_dropout, no_grad, train_loop
from .nn import merge_parameters, sigmoid_binary_cross_entropy
from .sampling import GmmDensity, TooFewPoints, auc_score, fit_gmm

log = logging.getLogger(__name__)

TOX21_ENDPOINTS = [
    "NR-AR", "NR-Aromatase", "NR-PPAR-gamma", "SR-HSE", "NR-AR-LBD", "NR-ER",
    "SR-ARE", "SR-MMP", "NR-AhR", "NR-ER-LBD", "SR-ATAD5", "SR-p53",
]
CLINICAL_ENDPOINT = "CT-TOX"
DEFAULT_ENDPOINTS = TOX21_ENDPOINTS + [CLINICAL_ENDPOINT]

TOXIC_ENDPOINT_RULE = 2       # toxic iff predicted toxic in >= 2 endpoints
LOW_ENERGY_CUTOFF = -6.0      # kcal/mol

TOX_FP_BITS = 1024
TOX_FP_RADIUS = 2


class AllMissing(ValueError):
    pass


class MalformedLine(ValueError):
    def __init__(self, message: str, lineno: int):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class MissingCenter(ValueError):
    pass


class MissingField(ValueError):
    pass


# ---------------------------------------------------------------------------
# Multi-task toxicity network

def tox_features(mol: Molecule) -> np.ndarray:
    fp = circular_fingerprint(mol, radius=TOX_FP_RADIUS, nbits=TOX_FP_BITS)
    out = np.zeros(TOX_FP_BITS)
    for bit in fp.bit_list():
        out[bit] = 1.0
    return out


class MultiTaskToxNet:
    """Two shared dense layers feeding one private two-layer tower per
    endpoint; ReLU everywhere except the final sigmoid. Dropout 0.5 on
    shared layers during training."""

    def __init__(
        self,
        endpoints: list[str],
        input_dim: int = TOX_FP_BITS,
        shared: tuple[int, int] = (128, 64),
        private: int = 32,
        dropout_rate: float = 0.5,
        seed: int = 0,
    ):
        if not endpoints:
            raise AllMissing("no endpoints to model")
        self.endpoints = list(endpoints)
        self.input_dim = input_dim
        self.dropout_rate = dropout_rate
        rng = np.random.default_rng(seed)
        self.shared1 = Linear(input_dim, shared[0], rng)
        self.shared2 = Linear(shared[0], shared[1], rng)
        self.towers = {
            name: (Linear(shared[1], private, rng), Linear(private, 1, rng))
            for name in endpoints
        }

    def parameters(self):
        parts = {"shared1": self.shared1.parameters(), "shared2": self.shared2.parameters()}
        for name, (first, second) in self.towers.items():
            parts[f"tower.{name}.0"] = first.parameters()
            parts[f"tower.{name}.1"] = second.parameters()
        return merge_parameters(parts)

    def logits(self, x: Tensor, train: bool = False,
               rng: np.random.Generator | None = None) -> dict[str, Tensor]:
        h = self.shared1(x).relu()
        if train and self.dropout_rate > 0:
            h = nn_dropout(h, self.dropout_rate, rng)
        h = self.shared2(h).relu()
        if train and self.dropout_rate > 0:
            h = nn_dropout(h, self.dropout_rate, rng)
        out = {}
        for name in self.endpoints:
            first, second = self.towers[name]
            out[name] = second(first(h).relu())
        return out

    def probabilities(self, features: np.ndarray) -> dict[str, np.ndarray]:
        features = np.atleast_2d(features)
        with no_grad():
            logits = self.logits(Tensor(features))
        return {
            name: 1.0 / (1.0 + np.exp(-t.data.reshape(-1))) for name, t in logits.items()
        }


@dataclass
class EndpointMetrics:
    auc: float
    accuracy: float
    balanced_accuracy: float
    true_negative_rate: float
    true_positive_rate: float
    precision: float
    recall: float
    f1: float
    n_labeled: int


@dataclass
class ToxTrainingReport:
    endpoints: list[str]
    dropped_endpoints: list[str]
    metrics: dict[str, EndpointMetrics]
    seed: int
    epochs: int

    def average_row(self) -> EndpointMetrics:
        rows = list(self.metrics.values())
        mean = lambda attr: float(np.mean([getattr(r, attr) for r in rows]))
        return EndpointMetrics(
            auc=mean("auc"), accuracy=mean("accuracy"),
            balanced_accuracy=mean("balanced_accuracy"),
            true_negative_rate=mean("true_negative_rate"),
            true_positive_rate=mean("true_positive_rate"),
            precision=mean("precision"), recall=mean("recall"), f1=mean("f1"),
            n_labeled=sum(r.n_labeled for r in rows),
        )


def _endpoint_metrics(labels: np.ndarray, probs: np.ndarray, threshold: float = 0.5
                      ) -> EndpointMetrics:
    labeled = ~np.isnan(labels)
    y = labels[labeled].astype(bool)
    p = probs[labeled]
    pred = p >= threshold
    tp = int((pred & y).sum())
    tn = int((~pred & ~y).sum())
    fp = int((pred & ~y).sum())
    fn = int((~pred & y).sum())
    n = y.size
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    tnr = tn / (tn + fp) if tn + fp else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    try:
        auc = auc_score(y, p)
    except Exception:
        auc = float("nan")
    return EndpointMetrics(
        auc=auc,
        accuracy=(tp + tn) / n if n else 0.0,
        balanced_accuracy=0.5 * (recall + tnr),
        true_negative_rate=tnr,
        true_positive_rate=recall,
        precision=precision,
        recall=recall,
        f1=f1,
        n_labeled=n,
    )


def train_toxnet(
    features: np.ndarray,
    labels: dict[str, np.ndarray],
    seed: int = 0,
    epochs: int = 40,
    holdout_fraction: float = 0.2,
    lr: float = 1e-3,
    min_positives: int = 1,
    net_kwargs: dict | None = None,
) -> tuple[MultiTaskToxNet, ToxTrainingReport]:
    """Masked multi-endpoint training. labels[name] is a float vector with
    NaN marking missing labels; those positions contribute zero loss and
    zero gradient. Endpoints without a single label are dropped loudly."""
    features = np.asarray(features, dtype=np.float64)
    kept, dropped = [], []
    for name, column in labels.items():
        column = np.asarray(column, dtype=np.float64)
        labeled = ~np.isnan(column)
        if labeled.sum() == 0 or column[labeled].sum() < min_positives:
            dropped.append(name)
            log.warning("dropping endpoint %s: insufficient labels", name)
        else:
            kept.append(name)
    if not kept:
        raise AllMissing("every endpoint was dropped")

    label_matrix = np.stack([np.asarray(labels[name], dtype=np.float64) for name in kept], axis=1)
    mask = (~np.isnan(label_matrix)).astype(np.float64)
    filled = np.nan_to_num(label_matrix, nan=0.0)

    rng = np.random.default_rng(seed)
    order = rng.permutation(features.shape[0])
    n_holdout = max(int(features.shape[0] * holdout_fraction), 1)
    test_idx, train_idx = order[:n_holdout], order[n_holdout:]

    net = MultiTaskToxNet(kept, input_dim=features.shape[1], seed=seed,
                          **(net_kwargs or {}))

    def loss_fn(indices, train_rng):
        rows = train_idx[indices]
        logits = net.logits(Tensor(features[rows]), train=True, rng=train_rng)
        stacked_logits = logits[kept[0]]
        for name in kept[1:]:
            from .nn import concat

            stacked_logits = concat([stacked_logits, logits[name]], axis=1)
        loss, count = sigmoid_binary_cross_entropy(
            stacked_logits, filled[rows], mask[rows]
        )
        return loss * (1.0 / max(count, 1.0))

    train_loop(net.parameters(), loss_fn, len(train_idx), epochs=epochs,
               batch_size=64, seed=seed, lr=lr)

    probs = net.probabilities(features[test_idx])
    metrics = {}
    for j, name in enumerate(kept):
        column = label_matrix[test_idx, j]
        if (~np.isnan(column)).sum() == 0:
            continue
        metrics[name] = _endpoint_metrics(column, probs[name])
    report = ToxTrainingReport(
        endpoints=kept, dropped_endpoints=dropped, metrics=metrics,
        seed=seed, epochs=epochs,
    )
    return net, report


def toxic_endpoint_count(
    net: MultiTaskToxNet, mol: Molecule, threshold: float = 0.5
) -> int:
    """Endpoints whose predicted toxicity probability reaches the threshold;
    a molecule counts as toxic when this is >= 2."""
    probs = net.probabilities(tox_features(mol).reshape(1, -1))
    return int(sum(1 for name in net.endpoints if probs[name][0] >= threshold))


def is_toxic(count: int) -> bool:
    return count >= TOXIC_ENDPOINT_RULE


def read_toxicity_tsv(path) -> tuple[list[str], dict[str, np.ndarray]]:
    """Columns: smiles, then one column per endpoint with values {0,1,NA}."""
    with open(path, encoding="utf-8") as handle:
        lines = [ln.rstrip("\n") for ln in handle if ln.strip() and not ln.startswith("#")]
    header = lines[0].split("\t")
    if header[0] != "smiles":
        raise MalformedLine("first column must be 'smiles'", 1)
    endpoints = header[1:]
    smiles: list[str] = []
    columns: list[list[float]] = [[] for _ in endpoints]
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split("\t")
        if len(parts) != len(header):
            raise MalformedLine(f"expected {len(header)} columns", lineno)
        smiles.append(parts[0])
        for j, raw in enumerate(parts[1:]):
            if raw == "NA":
                columns[j].append(float("nan"))
            elif raw in ("0", "1"):
                columns[j].append(float(raw))
            else:
                raise MalformedLine(f"label must be 0, 1 or NA, got {raw!r}", lineno)
    return smiles, {name: np.asarray(col) for name, col in zip(endpoints, columns)}


# ---------------------------------------------------------------------------
# Docking ingestion and pose clustering

@dataclass(frozen=True)
class DockingPose:
    molecule_id: str
    mode: int
    energy: float      # kcal/mol, binding free energy
    center: tuple[float, float, float]


def ingest_docking(path, fmt: str = "tsv", centers_path=None) -> list[DockingPose]:
    """Read docking results, keeping each molecule's lowest-energy pose.

    tsv: columns mol_id, mode, energy_kcal, x, y, z (header optional).
    vina-log: "MOLECULE <id>" blocks with "REMARK VINA RESULT: <energy> ..."
    lines; pose centers come from a sidecar TSV (mol_id, mode, x, y, z).
    """
    if fmt == "tsv":
        poses = _read_docking_tsv(path)
    elif fmt == "vina-log":
        poses = _read_vina_log(path, centers_path)
    else:
        raise ValueError(f"unknown docking format {fmt!r}")
    if not poses:
        log.warning("%s: no docking poses found", path)
        return []
    best: dict[str, DockingPose] = {}
    for pose in poses:
        current = best.get(pose.molecule_id)
        if current is None or pose.energy < current.energy:
            best[pose.molecule_id] = pose
    return [best[key] for key in sorted(best)]


def _read_docking_tsv(path) -> list[DockingPose]:
    poses = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if parts[0] == "mol_id":
                continue
            if len(parts) != 6:
                raise MalformedLine(f"expected 6 columns, got {len(parts)}", lineno)
            try:
                poses.append(DockingPose(
                    parts[0], int(parts[1]), float(parts[2]),
                    (float(parts[3]), float(parts[4]), float(parts[5])),
                ))
            except ValueError as exc:
                raise MalformedLine(str(exc), lineno) from exc
    return poses


def _read_vina_log(path, centers_path) -> list[DockingPose]:
    if centers_path is None:
        raise MissingCenter("vina-log format needs a sidecar center file")
    centers: dict[tuple[str, int], tuple[float, float, float]] = {}
    with open(centers_path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#") or line.startswith("mol_id"):
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise MalformedLine(f"expected 5 columns, got {len(parts)}", lineno)
            centers[(parts[0], int(parts[1]))] = (
                float(parts[2]), float(parts[3]), float(parts[4])
            )
    poses = []
    current_id = None
    mode = 0
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if line.startswith("MOLECULE"):
                parts = line.split()
                if len(parts) < 2:
                    raise MalformedLine("MOLECULE line without an id", lineno)
                current_id = parts[1]
                mode = 0
            elif line.startswith("REMARK VINA RESULT:"):
                if current_id is None:
                    raise MalformedLine("result before any MOLECULE header", lineno)
                fields = line.split(":", 1)[1].split()
                if not fields:
                    raise MalformedLine("result line without an energy", lineno)
                mode += 1
                key = (current_id, mode)
                if key not in centers:
                    raise MissingCenter(f"no center for molecule {current_id} mode {mode}")
                poses.append(DockingPose(current_id, mode, float(fields[0]), centers[key]))
    return poses


@dataclass
class ClusterStats:
    size_percent: float
    mean_energy: float
    std_energy: float
    min_energy: float
    low_energy_fraction: float
    count: int


@dataclass
class ClusterReport:
    clusters: list[ClusterStats]
    overall_low_energy_fraction: float
    cutoff: float = LOW_ENERGY_CUTOFF


def cluster_poses(poses: list[DockingPose], k: int, seed: int = 0
                  ) -> tuple[GmmDensity, ClusterReport, np.ndarray]:
    """Mixture fit over pose centers; per-cluster energy statistics with
    clusters ordered by descending size. Returns (density, report,
    assignment) where assignment[i] is the report-cluster of poses[i]."""
    if len(poses) < 10 * k:
        raise TooFewPoints(f"need at least {10 * k} poses for k={k}")
    centers = np.array([pose.center for pose in poses])
    energies = np.array([pose.energy for pose in poses])
    gmm, _ = fit_gmm(centers, k, seed=seed)
    raw_assign = gmm.assign(centers)
    order = sorted(
        range(gmm.n_components),
        key=lambda c: (-(raw_assign == c).sum(), float(energies[raw_assign == c].mean())
                       if (raw_assign == c).any() else 0.0, c),
    )
    relabel = {old: new for new, old in enumerate(order)}
    assignment = np.array([relabel[c] for c in raw_assign])
    clusters = []
    for new_c in range(gmm.n_components):
        member = assignment == new_c
        n = int(member.sum())
        if n == 0:
            clusters.append(ClusterStats(0.0, math.nan, math.nan, math.nan, 0.0, 0))
            continue
        e = energies[member]
        clusters.append(ClusterStats(
            size_percent=100.0 * n / len(poses),
            mean_energy=float(e.mean()),
            std_energy=float(e.std()),
            min_energy=float(e.min()),
            low_energy_fraction=float((e < LOW_ENERGY_CUTOFF).mean()),
            count=n,
        ))
    report = ClusterReport(
        clusters=clusters,
        overall_low_energy_fraction=float((energies < LOW_ENERGY_CUTOFF).mean()),
    )
    return gmm, report, assignment


# ---------------------------------------------------------------------------
# Candidate screening

@dataclass
class CandidateRecord:
    id: str
    smiles: str
    target_id: str | None = None
    mol_wt: float | None = None
    logp: float | None = None
    qed: float | None = None
    sa: float | None = None
    passes_filters: bool | None = None
    pic50: float | None = None
    selectivity: float | None = None
    novelty: float | None = None
    toxic_endpoints: int | None = None
    docking_energy: float | None = None
    verdict: bool | None = None
    reasons: list[str] = field(default_factory=list)


@dataclass
class ScreeningCriteria:
    """Default thresholds follow the selection rules used for reported
    candidate sets; every bound is overridable."""

    min_pic50: float = 6.0            # pIC50 strictly greater
    min_qed: float = 0.4              # strictly greater
    max_sa: float = 5.0               # strictly less
    max_toxic_endpoints: int = TOXIC_ENDPOINT_RULE  # strictly less than
    max_logp: float = 5.0             # strictly less
    max_mol_wt: float = 500.0         # strictly less
    selectivity_floors: dict[str, float] = field(
        default_factory=lambda: {"mpro": 1.15, "rbd": 0.75, "nsp9": 0.7}
    )
    require_selectivity: bool = True


def _require(candidate: CandidateRecord, name: str):
    value = getattr(candidate, name)
    if value is None:
        raise MissingField(f"candidate {candidate.id!r} lacks field {name!r}")
    return value


def apply_screening(
    candidates: list[CandidateRecord], criteria: ScreeningCriteria | None = None
) -> list[CandidateRecord]:
    """Verdict plus the list of every failed criterion, per candidate.
    Deterministic, order-independent and idempotent."""
    criteria = criteria or ScreeningCriteria()
    out = []
    for candidate in candidates:
        reasons = []
        if not _require(candidate, "pic50") > criteria.min_pic50:
            reasons.append("pic50")
        if not _require(candidate, "qed") > criteria.min_qed:
            reasons.append("qed")
        if not _require(candidate, "sa") < criteria.max_sa:
            reasons.append("sa")
        if not _require(candidate, "toxic_endpoints") < criteria.max_toxic_endpoints:
            reasons.append("toxicity")
        if not _require(candidate, "logp") < criteria.max_logp:
            reasons.append("logp")
        if not _require(candidate, "mol_wt") < criteria.max_mol_wt:
            reasons.append("mol_wt")
        floor = None
        if candidate.target_id is not None:
            floor = criteria.selectivity_floors.get(candidate.target_id.lower())
        if floor is not None and criteria.require_selectivity:
            if not _require(candidate, "selectivity") > floor:
                reasons.append("selectivity")
        out.append(replace(candidate, verdict=not reasons, reasons=reasons))
    return out


def is_achiral(smiles: str) -> bool:
    """Molecules carrying stereo markers are excluded from docking flows."""
    try:
        return not parse_smiles(smiles).has_stereo
    except Exception:
        return False


# ---------------------------------------------------------------------------
# Retrosynthesis: external-service client interface, stub implementation.

@dataclass
class RetrosynthesisResult:
    smiles: str
    status: str              # "ok" | "infeasible" | "unavailable"
    steps: int | None = None


class RetrosynthesisClient:
    """Interface to an external retrosynthesis service. The bundled stub
    always reports the service as unavailable; no model is built here."""

    def submit(self, smiles: str) -> str:
        raise NotImplementedError

    def poll(self, job_id: str) -> RetrosynthesisResult:
        raise NotImplementedError


class StubRetrosynthesisClient(RetrosynthesisClient):
    def submit(self, smiles: str) -> str:
        return f"stub-{abs(hash(smiles)) % 10_000_000}"

    def poll(self, job_id: str) -> RetrosynthesisResult:
        return RetrosynthesisResult(smiles="", status="unavailable")

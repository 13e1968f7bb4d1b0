"""Conditional generation in latent space: an explicit Gaussian-mixture
density over encodings, per-attribute logistic classifiers, and rejection
sampling whose acceptance probability is the product of classifier scores.

Because the proposal equals the fitted mixture and the product of classifier
outputs never exceeds one, a rejection constant of one is exact: draw z from
the mixture, accept with probability prod_i q_i(a_i=1 | z).
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .chem import SmilesError, canonical_smiles, parse_smiles
from .nn import Linear, Tensor, no_grad, train_loop

log = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-6
WEIGHT_PRUNE_THRESHOLD = 1e-8


class TooFewPoints(ValueError):
    pass


class SingleClass(ValueError):
    pass


class BudgetExhausted(RuntimeError):
    """Raised when the draw budget runs out; carries the partial batch."""

    def __init__(self, message: str, batch: "SampleBatch"):
        super().__init__(message)
        self.batch = batch


# ---------------------------------------------------------------------------
# Gaussian mixture density

@dataclass
class GmmDensity:
    weights: np.ndarray      # [K], sums to 1
    means: np.ndarray        # [K, D]
    variances: np.ndarray    # [K, D], diagonal, floored

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def _component_log_pdf(self, x: np.ndarray) -> np.ndarray:
        """[N, K] log pdf of every point under every component."""
        x = np.atleast_2d(x)
        diff = x[:, None, :] - self.means[None, :, :]
        inv = 1.0 / self.variances
        quad = np.einsum("nkd,kd->nk", diff * diff, inv)
        log_det = np.log(self.variances).sum(axis=1)
        return -0.5 * (quad + log_det + self.dim * math.log(2 * math.pi))

    def log_density(self, x: np.ndarray) -> np.ndarray:
        comp = self._component_log_pdf(x) + np.log(self.weights)[None, :]
        peak = comp.max(axis=1, keepdims=True)
        return (peak + np.log(np.exp(comp - peak).sum(axis=1, keepdims=True))).reshape(-1)

    def responsibilities(self, x: np.ndarray) -> np.ndarray:
        comp = self._component_log_pdf(x) + np.log(self.weights)[None, :]
        peak = comp.max(axis=1, keepdims=True)
        probs = np.exp(comp - peak)
        return probs / probs.sum(axis=1, keepdims=True)

    def assign(self, x: np.ndarray) -> np.ndarray:
        return self.responsibilities(x).argmax(axis=1)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        components = rng.choice(self.n_components, size=n, p=self.weights)
        noise = rng.standard_normal((n, self.dim))
        return self.means[components] + noise * np.sqrt(self.variances[components])

    def to_json_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
        }

    @classmethod
    def from_json_dict(cls, payload: dict) -> "GmmDensity":
        return cls(
            np.asarray(payload["weights"]),
            np.asarray(payload["means"]),
            np.asarray(payload["variances"]),
        )


def _kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = [x[rng.integers(n)]]
    for _ in range(k - 1):
        d2 = np.min(
            [(np.square(x - c).sum(axis=1)) for c in centers], axis=0
        )
        total = d2.sum()
        if total <= 0:
            centers.append(x[rng.integers(n)])
            continue
        centers.append(x[rng.choice(n, p=d2 / total)])
    return np.stack(centers)


def fit_gmm(
    encodings: np.ndarray,
    k: int,
    seed: int = 0,
    max_iter: int = 500,
    tol_per_point: float = 1e-6,
    restarts: int = 3,
) -> tuple[GmmDensity, dict]:
    """EM with k-means++ seeding; best of `restarts` runs by log-likelihood.

    The per-iteration log-likelihood is asserted non-decreasing (EM
    guarantee). Components whose weight falls below 1e-8 are pruned with a
    warning. Returns (density, fit report).
    """
    x = np.asarray(encodings, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("encodings must be [N, D]")
    n = x.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if n < 10 * k:
        raise TooFewPoints(f"need at least {10 * k} points for k={k}, got {n}")

    best: tuple[float, GmmDensity, list[float]] | None = None
    for restart in range(restarts):
        rng = np.random.default_rng(seed + restart)
        means = _kmeans_pp_init(x, k, rng)
        variances = np.full((k, x.shape[1]), max(x.var(axis=0).mean(), VARIANCE_FLOOR))
        weights = np.full(k, 1.0 / k)
        model = GmmDensity(weights, means, variances)
        trajectory: list[float] = []
        for _ in range(max_iter):
            comp = model._component_log_pdf(x) + np.log(model.weights)[None, :]
            peak = comp.max(axis=1, keepdims=True)
            log_norm = peak + np.log(np.exp(comp - peak).sum(axis=1, keepdims=True))
            ll = float(log_norm.sum())
            if trajectory:
                # EM monotonicity, allowing only float round-off slack.
                assert ll >= trajectory[-1] - 1e-9 * max(1.0, abs(trajectory[-1])), (
                    f"EM log-likelihood decreased: {trajectory[-1]} -> {ll}"
                )
            # bool() matters: `[] and x` would alias the trajectory list,
            # which the append below then makes truthy.
            done = bool(trajectory) and (ll - trajectory[-1]) < tol_per_point * n
            trajectory.append(ll)
            if done:
                break
            resp = np.exp(comp - log_norm)
            mass = resp.sum(axis=0)
            keep = mass / n >= WEIGHT_PRUNE_THRESHOLD
            if not keep.all():
                log.warning("pruning %d degenerate component(s)", int((~keep).sum()))
                resp = resp[:, keep]
                mass = mass[keep]
            new_means = (resp.T @ x) / mass[:, None]
            diff = x[:, None, :] - new_means[None, :, :]
            new_vars = np.einsum("nk,nkd->kd", resp, diff * diff) / mass[:, None]
            model = GmmDensity(
                mass / mass.sum(),
                new_means,
                np.maximum(new_vars, VARIANCE_FLOOR),
            )
        final = trajectory[-1]
        if best is None or final > best[0]:
            best = (final, model, trajectory)
    assert best is not None
    report = {
        "log_likelihood": best[0],
        "trajectory": best[2],
        "k": best[1].n_components,
        "restarts": restarts,
        "seed": seed,
    }
    return best[1], report


# ---------------------------------------------------------------------------
# Attribute specs and classifiers

@dataclass(frozen=True)
class AttributeSpec:
    """One controllable attribute: raw predictions are min-max normalized to
    [0, 1] with frozen bounds; the threshold is stored in raw units."""

    name: str
    kind: str                     # "affinity(<target>)", "qed", "selectivity(<target>)"
    raw_threshold: float
    bound_min: float
    bound_max: float

    def __post_init__(self):
        if not self.bound_min < self.bound_max:
            raise ValueError("normalization bounds must satisfy min < max")

    def normalize(self, raw: np.ndarray) -> np.ndarray:
        span = self.bound_max - self.bound_min
        return np.clip((np.asarray(raw) - self.bound_min) / span, 0.0, 1.0)

    @property
    def normalized_threshold(self) -> float:
        return float(self.normalize(np.asarray([self.raw_threshold]))[0])

    @classmethod
    def from_predictions(cls, name: str, kind: str, raw_threshold: float,
                         raw_values: np.ndarray) -> "AttributeSpec":
        lo = float(np.min(raw_values))
        hi = float(np.max(raw_values))
        if hi <= lo:
            hi = lo + 1e-9
        return cls(name, kind, raw_threshold, lo, hi)

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "raw_threshold": self.raw_threshold,
            "bound_min": self.bound_min,
            "bound_max": self.bound_max,
        }

    @classmethod
    def from_json_dict(cls, payload: dict) -> "AttributeSpec":
        return cls(**payload)


class AttributeClassifier:
    """Logistic head on latent vectors: sigmoid(z @ w + b), output in (0, 1)."""

    def __init__(self, spec: AttributeSpec, latent_dim: int, seed: int = 0):
        self.spec = spec
        self.latent_dim = latent_dim
        self.linear = Linear(latent_dim, 1, np.random.default_rng(seed))

    def score(self, z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        with no_grad():
            logits = self.linear(Tensor(z)).data.reshape(-1)
        probs = 1.0 / (1.0 + np.exp(-logits))
        return np.clip(probs, 1e-12, 1.0 - 1e-12)

    def parameters(self):
        return self.linear.parameters()

    def state_dict(self) -> dict:
        return {
            "spec": self.spec.to_json_dict(),
            "weight": self.linear.weight.data.tolist(),
            "bias": self.linear.bias.data.tolist(),
        }

    @classmethod
    def from_state_dict(cls, payload: dict) -> "AttributeClassifier":
        spec = AttributeSpec.from_json_dict(payload["spec"])
        weight = np.asarray(payload["weight"])
        clf = cls(spec, weight.shape[0])
        clf.linear.weight.data = weight
        clf.linear.bias.data = np.asarray(payload["bias"])
        return clf


def auc_score(labels: np.ndarray, scores: np.ndarray) -> float:
    """Rank-statistic AUC with tie correction."""
    labels = np.asarray(labels).astype(bool)
    scores = np.asarray(scores, dtype=np.float64)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("AUC undefined with a single class")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(labels.size)
    sorted_scores = scores[order]
    i = 0
    while i < labels.size:
        j = i
        while j + 1 < labels.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    pos_rank_sum = ranks[labels].sum()
    return float((pos_rank_sum - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


@dataclass
class ClassifierReport:
    name: str
    holdout_auc: float
    positive_fraction: float
    epochs: int
    seed: int


def train_attribute_classifier(
    spec: AttributeSpec,
    encodings: np.ndarray,
    raw_values: np.ndarray,
    seed: int = 0,
    epochs: int = 80,
    lr: float = 5e-2,
    holdout_fraction: float = 0.2,
) -> tuple[AttributeClassifier, ClassifierReport]:
    """Binary labels come from thresholding normalized attribute values at
    the spec threshold; a logistic model is then fit on the latent vectors."""
    encodings = np.asarray(encodings, dtype=np.float64)
    normalized = spec.normalize(np.asarray(raw_values))
    labels = (normalized > spec.normalized_threshold).astype(np.float64)
    if labels.min() == labels.max():
        raise SingleClass(
            f"attribute {spec.name!r}: all labels identical after thresholding"
        )
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(labels))
    n_holdout = max(int(len(labels) * holdout_fraction), 1)
    test_idx, train_idx = order[:n_holdout], order[n_holdout:]
    clf = AttributeClassifier(spec, encodings.shape[1], seed=seed)
    x_train, y_train = encodings[train_idx], labels[train_idx]

    from .nn import sigmoid_binary_cross_entropy

    def loss_fn(indices, _rng):
        logits = clf.linear(Tensor(x_train[indices]))
        loss, count = sigmoid_binary_cross_entropy(
            logits, y_train[indices].reshape(-1, 1), np.ones((len(indices), 1))
        )
        return loss * (1.0 / count)

    train_loop(clf.parameters(), loss_fn, len(train_idx), epochs=epochs,
               batch_size=128, seed=seed, lr=lr)
    try:
        holdout_auc = auc_score(labels[test_idx], clf.score(encodings[test_idx]))
    except SingleClass:
        holdout_auc = float("nan")
    report = ClassifierReport(
        name=spec.name,
        holdout_auc=holdout_auc,
        positive_fraction=float(labels.mean()),
        epochs=epochs,
        seed=seed,
    )
    return clf, report


# ---------------------------------------------------------------------------
# Rejection sampling

@dataclass
class AcceptedSample:
    z: np.ndarray
    smiles: str
    scores: dict[str, float]
    stream: int = 0


@dataclass
class SampleBatch:
    accepted: list[AcceptedSample] = field(default_factory=list)
    drawn: int = 0
    accepted_z_count: int = 0
    valid_count: int = 0
    seed: int = 0

    @property
    def acceptance_rate(self) -> float:
        return self.accepted_z_count / self.drawn if self.drawn else 0.0

    @property
    def validity_rate(self) -> float:
        return self.valid_count / self.accepted_z_count if self.accepted_z_count else 0.0

    @property
    def dedup_rate(self) -> float:
        return len(self.accepted) / self.valid_count if self.valid_count else 0.0

    def export_jsonl(self) -> str:
        lines = []
        for sample in self.accepted:
            lines.append(json.dumps({
                "smiles": sample.smiles,
                "z": [round(float(v), 8) for v in sample.z],
                "scores": {k: round(float(v), 8) for k, v in sorted(sample.scores.items())},
                "seed": self.seed,
                "stream": sample.stream,
            }, sort_keys=True))
        return "\n".join(lines) + ("\n" if lines else "")


def class_sample(
    gmm: GmmDensity,
    classifiers: list[AttributeClassifier],
    vae_model,
    n_target: int,
    seed: int = 0,
    budget: int = 1_000_000,
    chunk_size: int = 512,
    decode_strategy: str = "greedy",
    temperature: float = 1.0,
    stream: int = 0,
) -> SampleBatch:
    """Draw latents from the mixture, accept each with probability equal to
    the product of classifier scores, decode, keep valid unique molecules.

    Fully deterministic given the seed. Raises BudgetExhausted carrying the
    partial batch when the draw budget runs out before n_target unique valid
    molecules are collected.
    """
    for clf in classifiers:
        if clf.latent_dim != gmm.dim:
            raise ValueError(
                f"classifier {clf.spec.name!r} latent dim {clf.latent_dim} "
                f"!= mixture dim {gmm.dim}"
            )
    if n_target < 1:
        raise ValueError("n_target must be >= 1")
    rng = np.random.default_rng(seed)
    batch = SampleBatch(seed=seed)
    seen: set[str] = set()
    while len(batch.accepted) < n_target:
        remaining_budget = budget - batch.drawn
        if remaining_budget <= 0:
            raise BudgetExhausted(
                f"budget {budget} exhausted with {len(batch.accepted)}/{n_target} "
                f"unique valid molecules",
                batch,
            )
        n_draw = min(chunk_size, remaining_budget)
        zs = gmm.sample(n_draw, rng)
        batch.drawn += n_draw
        p_acc = np.ones(n_draw)
        score_columns = []
        for clf in classifiers:
            scores = clf.score(zs)
            score_columns.append(scores)
            p_acc = p_acc * scores
        u = rng.random(n_draw)
        accepted_mask = u < p_acc
        idx = np.nonzero(accepted_mask)[0]
        batch.accepted_z_count += int(idx.size)
        if idx.size == 0:
            continue
        if vae_model is None:
            # Latent-only mode (tests and synthetic studies).
            for i in idx:
                batch.valid_count += 1
                batch.accepted.append(AcceptedSample(
                    zs[i].copy(),
                    "",
                    {clf.spec.name: float(col[i]) for clf, col in zip(classifiers, score_columns)},
                    stream=stream,
                ))
                if len(batch.accepted) >= n_target:
                    break
            continue
        decoded = vae_model.decode_batch(
            zs[idx], strategy=decode_strategy, temperature=temperature,
            seed=int(rng.integers(2**31)),
        )
        for local, i in enumerate(idx):
            text = decoded[local]
            try:
                mol = parse_smiles(text)
            except (SmilesError, RecursionError):
                continue
            batch.valid_count += 1
            canon = canonical_smiles(mol)
            if canon in seen:
                continue
            seen.add(canon)
            batch.accepted.append(AcceptedSample(
                zs[i].copy(),
                canon,
                {clf.spec.name: float(col[i]) for clf, col in zip(classifiers, score_columns)},
                stream=stream,
            ))
            if len(batch.accepted) >= n_target:
                break
    return batch


# ---------------------------------------------------------------------------
# Enrichment report

@dataclass
class EnrichmentRow:
    criteria: str
    accepted_fraction: float
    random_fraction: float
    accepted_n: int
    random_n: int


@dataclass
class EnrichmentTable:
    rows: list[EnrichmentRow]

    def to_json_dict(self) -> dict:
        return {"rows": [vars(r) for r in self.rows]}


def enrichment_report(
    accepted_values: dict[str, np.ndarray],
    random_values: dict[str, np.ndarray],
    criteria: list[tuple[str, float]],
) -> EnrichmentTable:
    """Fractions satisfying nested criterion prefixes in the accepted set
    versus a proposal-distribution baseline.

    accepted_values / random_values map attribute name to normalized values
    (one per molecule); criteria is an ordered list of (attribute name,
    normalized threshold). Row i applies the first i+1 criteria jointly.
    """
    rows = []
    for prefix_len in range(1, len(criteria) + 1):
        active = criteria[:prefix_len]
        label = " & ".join(f"{name}>{threshold:g}" for name, threshold in active)

        def fraction(values: dict[str, np.ndarray]) -> tuple[float, int]:
            n = len(next(iter(values.values())))
            keep = np.ones(n, dtype=bool)
            for name, threshold in active:
                keep &= np.asarray(values[name]) > threshold
            return float(keep.mean()) if n else 0.0, n

        acc_frac, acc_n = fraction(accepted_values)
        rnd_frac, rnd_n = fraction(random_values)
        rows.append(EnrichmentRow(label, acc_frac, rnd_frac, acc_n, rnd_n))
    return EnrichmentTable(rows)

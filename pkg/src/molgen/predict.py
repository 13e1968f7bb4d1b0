"""Attribute predictors on latent vectors, the protein-conditioned binding
affinity regressor (latent-level and sequence-level), protein embedding
loading with a hashed k-mer fallback, and the off-target selectivity score.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .chem import tokenize
from .fingerprint import hash_ints
from .nn import (
    DenseNet,
    Embedding,
    GatedRecurrentCell,
    Linear,
    Tensor,
    concat,
    merge_parameters,
    no_grad,
    train_loop,
)

AMINO_ACIDS = set("ACDEFGHIKLMNPQRSTVWY")


class DimensionMismatch(ValueError):
    pass


class ParseError(ValueError):
    pass


class EmptySequence(ValueError):
    pass


class UnknownProtein(KeyError):
    pass


class EncoderMismatch(ValueError):
    pass


class PanelContainsTarget(ValueError):
    pass


class EmptyPanel(ValueError):
    pass


@dataclass(frozen=True)
class ProteinEmbedding:
    id: str
    vector: np.ndarray
    source: str = "file"  # "file" | "kmer-fallback"


# ---------------------------------------------------------------------------
# Embedding I/O: magic "PEMB", version u16, dim u32, count u64,
# then (id length u16, id utf-8, float32 vector) records, little-endian.

PEMB_MAGIC = b"PEMB"
PEMB_VERSION = 1


def save_protein_embeddings(path: str | Path, embeddings: dict[str, ProteinEmbedding]) -> None:
    items = sorted(embeddings.values(), key=lambda e: e.id)
    dims = {e.vector.shape[0] for e in items}
    if len(dims) > 1:
        raise DimensionMismatch(f"mixed embedding dimensions {sorted(dims)}")
    dim = dims.pop() if dims else 0
    with open(path, "wb") as handle:
        handle.write(PEMB_MAGIC)
        handle.write(struct.pack("<HIQ", PEMB_VERSION, dim, len(items)))
        for emb in items:
            encoded = emb.id.encode("utf-8")
            handle.write(struct.pack("<H", len(encoded)))
            handle.write(encoded)
            handle.write(np.ascontiguousarray(emb.vector, dtype="<f4").tobytes())


def load_protein_embeddings(path: str | Path) -> dict[str, ProteinEmbedding]:
    try:
        with open(path, "rb") as handle:
            magic = handle.read(4)
            if magic != PEMB_MAGIC:
                raise ParseError(f"not a protein embedding file: magic {magic!r}")
            version, dim, count = struct.unpack("<HIQ", handle.read(14))
            if version != PEMB_VERSION:
                raise ParseError(f"unsupported embedding file version {version}")
            out: dict[str, ProteinEmbedding] = {}
            for _ in range(count):
                raw = handle.read(2)
                if len(raw) < 2:
                    raise ParseError("truncated record header")
                (id_len,) = struct.unpack("<H", raw)
                pid = handle.read(id_len).decode("utf-8")
                blob = handle.read(4 * dim)
                if len(blob) < 4 * dim:
                    raise DimensionMismatch(
                        f"embedding {pid!r} truncated: expected dim {dim}"
                    )
                vector = np.frombuffer(blob, dtype="<f4").astype(np.float64)
                out[pid] = ProteinEmbedding(pid, vector, source="file")
    except struct.error as exc:
        raise ParseError(str(exc)) from exc
    return out


def load_fasta(path: str | Path) -> dict[str, str]:
    sequences: dict[str, str] = {}
    name = None
    parts: list[str] = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            if line.startswith(">"):
                if name is not None:
                    sequences[name] = "".join(parts)
                name = line[1:].split()[0]
                parts = []
            else:
                parts.append(line)
    if name is not None:
        sequences[name] = "".join(parts)
    return sequences


def kmer_embedding(sequence: str, k: int = 3, dim: int = 64, pid: str = "") -> ProteinEmbedding:
    """Hashed k-mer count vector, L2-normalized; deterministic fallback for
    when no pre-trained embedding file is available."""
    if not 2 <= k <= 4:
        raise ValueError("k must be in [2, 4]")
    sequence = sequence.strip().upper()
    if not sequence:
        raise EmptySequence("empty amino-acid sequence")
    for ch in sequence:
        if ch not in AMINO_ACIDS and ch != "X":
            raise ParseError(f"unexpected amino-acid code {ch!r}")
    counts = np.zeros(dim)
    for i in range(max(len(sequence) - k + 1, 0)):
        kmer = sequence[i : i + k]
        counts[hash_ints(tuple(ord(c) for c in kmer)) % dim] += 1.0
    if len(sequence) < k:
        counts[hash_ints(tuple(ord(c) for c in sequence)) % dim] += 1.0
    norm = float(np.linalg.norm(counts))
    return ProteinEmbedding(pid, counts / norm, source="kmer-fallback")


def embeddings_from_fasta(path: str | Path, k: int = 3, dim: int = 64) -> dict[str, ProteinEmbedding]:
    return {
        pid: kmer_embedding(seq, k=k, dim=dim, pid=pid)
        for pid, seq in load_fasta(path).items()
    }


# ---------------------------------------------------------------------------
# Latent attribute regressors

LATENT_REGRESSOR_HIDDEN = [50, 50, 50, 50]


@dataclass
class RegressorReport:
    attribute: str
    holdout_rmse: float
    train_rmse: float
    epochs: int
    seed: int


def _rmse(pred: np.ndarray, target: np.ndarray) -> float:
    return float(np.sqrt(np.mean((pred.reshape(-1) - target.reshape(-1)) ** 2)))


def train_latent_regressor(
    attribute: str,
    encodings: np.ndarray,
    labels: np.ndarray,
    seed: int = 0,
    epochs: int = 120,
    holdout_fraction: float = 0.2,
    lr: float = 5e-3,
) -> tuple[DenseNet, RegressorReport]:
    """Four hidden layers of 50 ReLU units on frozen latent encodings."""
    encodings = np.asarray(encodings, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64).reshape(-1)
    if encodings.ndim != 2 or encodings.shape[0] != labels.shape[0]:
        raise EncoderMismatch(
            f"encodings {encodings.shape} do not align with labels {labels.shape}"
        )
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(labels))
    n_holdout = max(int(len(labels) * holdout_fraction), 1)
    test_idx, train_idx = order[:n_holdout], order[n_holdout:]

    widths = [encodings.shape[1]] + LATENT_REGRESSOR_HIDDEN + [1]
    net = DenseNet(widths, ["relu"] * 4 + ["identity"], None, np.random.default_rng(seed))

    x_train, y_train = encodings[train_idx], labels[train_idx]

    def loss_fn(indices, _rng):
        out = net(Tensor(x_train[indices]))
        diff = out - Tensor(y_train[indices].reshape(-1, 1))
        return (diff * diff).mean()

    train_loop(net.parameters(), loss_fn, len(train_idx), epochs=epochs,
               batch_size=64, seed=seed, lr=lr, lr_schedule="cosine")
    with no_grad():
        pred_test = net(Tensor(encodings[test_idx])).data
        pred_train = net(Tensor(x_train)).data
    report = RegressorReport(
        attribute=attribute,
        holdout_rmse=_rmse(pred_test, labels[test_idx]),
        train_rmse=_rmse(pred_train, y_train),
        epochs=epochs,
        seed=seed,
    )
    return net, report


# ---------------------------------------------------------------------------
# Binding affinity

@dataclass
class BindingRecord:
    smiles: str
    protein_id: str
    pic50: float


def read_binding_tsv(path: str | Path) -> list[BindingRecord]:
    records = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if parts[0] == "smiles":
                continue  # header
            if len(parts) != 3:
                raise ParseError(f"line {lineno}: expected 3 columns, got {len(parts)}")
            records.append(BindingRecord(parts[0], parts[1], float(parts[2])))
    return records


def write_binding_tsv(path: str | Path, records: list[BindingRecord]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("smiles\tprotein_id\tpic50\n")
        for rec in records:
            handle.write(f"{rec.smiles}\t{rec.protein_id}\t{rec.pic50:.6f}\n")


PROTEIN_PROJECTION_DIM = 256
AFFINITY_HIDDEN = 2048


class AffinityModel:
    """Protein-conditioned pIC50 regressor.

    level "z": molecule representation is a frozen-VAE latent vector.
    level "x": a recurrent encoder with mean-over-time pooling embeds the
    SMILES token sequence directly.
    Protein embeddings wider than 256 pass through a learned linear map;
    narrower ones are used as-is.
    """

    def __init__(
        self,
        level: str,
        molecule_dim: int,
        protein_dim: int,
        embeddings: dict[str, ProteinEmbedding],
        seed: int = 0,
        vocab_tokens: list[str] | None = None,
        x_embed_dim: int = 48,
        x_hidden: int = 96,
        hidden: int = AFFINITY_HIDDEN,
    ):
        if level not in ("z", "x"):
            raise ValueError("level must be 'z' or 'x'")
        self.level = level
        self.protein_dim = protein_dim
        self.embeddings = embeddings
        rng = np.random.default_rng(seed)
        self.project_protein = protein_dim > PROTEIN_PROJECTION_DIM
        p_dim = PROTEIN_PROJECTION_DIM if self.project_protein else protein_dim
        self.protein_proj = (
            Linear(protein_dim, PROTEIN_PROJECTION_DIM, rng) if self.project_protein else None
        )
        if level == "x":
            if vocab_tokens is None:
                raise ValueError("x-level model needs vocab_tokens")
            self.token_index = {tok: i for i, tok in enumerate(vocab_tokens)}
            self.mol_embedding = Embedding(len(vocab_tokens), x_embed_dim, rng)
            self.mol_encoder = GatedRecurrentCell(x_embed_dim, x_hidden, rng)
            molecule_dim = x_hidden
        self.molecule_dim = molecule_dim
        self.head = DenseNet([p_dim + molecule_dim, hidden, 1], ["relu", "identity"], None, rng)

    def parameters(self) -> dict[str, Tensor]:
        parts = {"head": self.head.parameters()}
        if self.protein_proj is not None:
            parts["protein_proj"] = self.protein_proj.parameters()
        if self.level == "x":
            parts["mol_embedding"] = self.mol_embedding.parameters()
            parts["mol_encoder"] = self.mol_encoder.parameters()
        return merge_parameters(parts)

    def _protein_tensor(self, protein_ids: list[str]) -> Tensor:
        rows = []
        for pid in protein_ids:
            if pid not in self.embeddings:
                raise UnknownProtein(pid)
            rows.append(self.embeddings[pid].vector)
        tensor = Tensor(np.stack(rows))
        if self.protein_proj is not None:
            tensor = self.protein_proj(tensor)
        return tensor

    def _encode_molecules(self, smiles_list: list[str]) -> Tensor:
        """Recurrent encoding with mean-over-time pooling, batched: sequences
        are end-padded, scanned once, and pooled over their valid steps only
        (end padding cannot influence earlier hidden states)."""
        id_lists = []
        for smiles in smiles_list:
            ids = []
            for token in tokenize(smiles):
                idx = self.token_index.get(token.text)
                if idx is None:
                    raise ParseError(f"token {token.text!r} missing from affinity vocab")
                ids.append(idx)
            id_lists.append(ids)
        batch = len(id_lists)
        steps = max(len(ids) for ids in id_lists)
        padded = np.zeros((batch, steps), dtype=np.int64)
        mask = np.zeros((batch, steps))
        for i, ids in enumerate(id_lists):
            padded[i, : len(ids)] = ids
            mask[i, : len(ids)] = 1.0
        flat_ids = padded.T.reshape(-1)  # time-major
        embs = self.mol_embedding(flat_ids) * Tensor(mask.T.reshape(-1, 1))
        pre = self.mol_encoder.precompute_inputs(embs)
        states = self.mol_encoder.scan_precomputed(pre, batch, steps)
        big = concat(states, axis=0)  # [steps*batch, H] time-major
        pool = np.zeros((batch, steps * batch))
        lengths = mask.sum(axis=1)
        for i in range(batch):
            for t in range(int(lengths[i])):
                pool[i, t * batch + i] = 1.0 / lengths[i]
        return Tensor(pool) @ big

    def forward(self, protein_ids: list[str], molecules) -> Tensor:
        """molecules: [B, latent] array for level z, list of SMILES for level x."""
        p = self._protein_tensor(protein_ids)
        if self.level == "z":
            m = molecules if isinstance(molecules, Tensor) else Tensor(np.asarray(molecules))
            if m.shape[1] != self.molecule_dim:
                raise EncoderMismatch(
                    f"latent dim {m.shape[1]} does not match model ({self.molecule_dim})"
                )
        else:
            m = self._encode_molecules(list(molecules))
        return self.head(concat([p, m], axis=1))

    def predict(self, protein_id: str, molecule) -> float:
        with no_grad():
            if self.level == "z":
                out = self.forward([protein_id], np.asarray(molecule).reshape(1, -1))
            else:
                out = self.forward([protein_id], [molecule])
        return float(out.data[0, 0])


@dataclass
class AffinityReport:
    level: str
    holdout_rmse: float
    train_rmse: float
    label_std: float
    epochs: int
    seed: int
    extra: dict = field(default_factory=dict)


def train_affinity(
    level: str,
    records: list[BindingRecord],
    embeddings: dict[str, ProteinEmbedding],
    latents: np.ndarray | None = None,
    seed: int = 0,
    epochs: int = 80,
    holdout_fraction: float = 0.2,
    lr: float = 3e-3,
    hidden: int = AFFINITY_HIDDEN,
    batch_size: int = 64,
) -> tuple[AffinityModel, AffinityReport]:
    """Fit the affinity regressor; latents (aligned with records) are required
    for level "z" and must come from one frozen encoder checkpoint."""
    if not records:
        raise ValueError("no binding records")
    for rec in records:
        if rec.protein_id not in embeddings:
            raise UnknownProtein(rec.protein_id)
    protein_dim = next(iter(embeddings.values())).vector.shape[0]
    labels = np.array([rec.pic50 for rec in records])
    protein_ids = [rec.protein_id for rec in records]
    smiles = [rec.smiles for rec in records]

    if level == "z":
        if latents is None:
            raise EncoderMismatch("level 'z' requires latent encodings")
        latents = np.asarray(latents, dtype=np.float64)
        if latents.shape[0] != len(records):
            raise EncoderMismatch("one latent vector per record required")
        model = AffinityModel("z", latents.shape[1], protein_dim, embeddings,
                              seed=seed, hidden=hidden)
    else:
        tokens = sorted({t.text for s in smiles for t in tokenize(s)})
        model = AffinityModel("x", 0, protein_dim, embeddings, seed=seed,
                              vocab_tokens=tokens, hidden=hidden)

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(records))
    n_holdout = max(int(len(records) * holdout_fraction), 1)
    test_idx, train_idx = order[:n_holdout], order[n_holdout:]

    def batch_inputs(indices):
        ids = [protein_ids[i] for i in indices]
        if level == "z":
            return ids, latents[indices]
        return ids, [smiles[i] for i in indices]

    def loss_fn(indices, _rng):
        ids, mols = batch_inputs(train_idx[indices])
        out = model.forward(ids, mols)
        diff = out - Tensor(labels[train_idx[indices]].reshape(-1, 1))
        return (diff * diff).mean()

    train_loop(model.parameters(), loss_fn, len(train_idx), epochs=epochs,
               batch_size=batch_size, seed=seed, lr=lr, lr_schedule="cosine")

    def predict_many(indices) -> np.ndarray:
        preds = []
        with no_grad():
            for start in range(0, len(indices), 256):
                chunk = indices[start : start + 256]
                ids, mols = batch_inputs(chunk)
                preds.append(model.forward(ids, mols).data.reshape(-1))
        return np.concatenate(preds)

    report = AffinityReport(
        level=level,
        holdout_rmse=_rmse(predict_many(test_idx), labels[test_idx]),
        train_rmse=_rmse(predict_many(train_idx), labels[train_idx]),
        label_std=float(labels.std()),
        epochs=epochs,
        seed=seed,
    )
    return model, report


# ---------------------------------------------------------------------------
# Selectivity

@dataclass(frozen=True)
class SelectivityScore:
    value: float
    target_id: str
    panel_ids: tuple[str, ...]


def selectivity(
    model: AffinityModel,
    molecule,
    target_id: str,
    panel: list[str] | None = None,
    k: int = 5,
    seed: int = 0,
) -> SelectivityScore:
    """Excess predicted affinity of the target over the mean of a panel of
    off-targets. Panels are drawn uniformly without replacement (seeded) from
    the embedding set when not given explicitly."""
    if panel is None:
        candidates = sorted(pid for pid in model.embeddings if pid != target_id)
        if not candidates:
            raise EmptyPanel("no off-target candidates available")
        k = min(k, len(candidates))
        rng = np.random.default_rng(seed)
        panel = [candidates[i] for i in rng.choice(len(candidates), size=k, replace=False)]
    if not panel:
        raise EmptyPanel("panel must contain at least one off-target")
    if target_id in panel:
        raise PanelContainsTarget(target_id)
    target_ba = model.predict(target_id, molecule)
    panel_ba = [model.predict(pid, molecule) for pid in panel]
    value = target_ba - sum(panel_ba) / len(panel_ba)
    return SelectivityScore(value=value, target_id=target_id, panel_ids=tuple(panel))

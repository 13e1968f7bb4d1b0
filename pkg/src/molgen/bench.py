"""Generative-model evaluation metrics: validity, uniqueness, internal
diversity, filter pass rate, nearest-neighbor similarity, fragment and
scaffold similarity, and a Frechet distance over fingerprint bit statistics.

The Frechet fingerprint distance (ffd) is a stand-in metric computed from
Gaussian fits to folded fingerprint bit vectors. It is NOT comparable to
published FCD numbers, which require a specific pretrained network; reports
label it accordingly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .chem import Molecule, SmilesError, canonical_smiles, murcko_scaffold, parse_smiles
from .fingerprint import atom_environments, circular_fingerprint, key_fingerprint, tanimoto
from .props import passes_filters

FFD_BITS = 256
FFD_SHRINKAGE = 0.01
FP_BITS = 2048
FP_RADIUS = 2


class EmptyInput(ValueError):
    pass


@dataclass
class MetricReport:
    valid: float
    unique_at_1k: float
    unique_at_10k: float
    intdiv1: float
    intdiv2: float
    filters: float
    snn: float
    frag: float
    scaf: float
    ffd: float
    n_generated: int
    n_valid: int
    partial: bool = False   # fewer than 1000 valid molecules
    notes: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        payload = {k: getattr(self, k) for k in (
            "valid", "unique_at_1k", "unique_at_10k", "intdiv1", "intdiv2",
            "filters", "snn", "frag", "scaf", "ffd", "n_generated", "n_valid",
            "partial",
        )}
        payload["ffd_note"] = "frechet distance over fingerprint statistics; not FCD-comparable"
        return payload


def _fp_matrix(molecules: list[Molecule], nbits: int = FP_BITS) -> np.ndarray:
    # float64 so pairwise similarity matches exact bitset arithmetic
    out = np.zeros((len(molecules), nbits), dtype=np.float64)
    for i, mol in enumerate(molecules):
        for bit in circular_fingerprint(mol, radius=FP_RADIUS, nbits=nbits).bit_list():
            out[i, bit] = 1.0
    return out


def _pairwise_tanimoto(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Tanimoto matrix between 0/1 fingerprint row matrices."""
    inter = a @ b.T
    pop_a = a.sum(axis=1, keepdims=True)
    pop_b = b.sum(axis=1, keepdims=True)
    union = pop_a + pop_b.T - inter
    with np.errstate(invalid="ignore"):
        sim = np.where(union > 0, inter / union, 1.0)
    return sim


def internal_diversity(fps: np.ndarray, power: int) -> float:
    """1 - (mean of pairwise Tanimoto^power over all ordered pairs,
    diagonal included)^(1/power)."""
    sim = _pairwise_tanimoto(fps, fps)
    mean_pow = float((sim ** power).mean())
    return 1.0 - mean_pow ** (1.0 / power)


def nearest_neighbor_similarity(gen_fps: np.ndarray, ref_fps: np.ndarray) -> float:
    sim = _pairwise_tanimoto(gen_fps, ref_fps)
    return float(sim.max(axis=1).mean())


def _fragment_counts(molecules: list[Molecule]) -> dict[int, int]:
    counts: dict[int, int] = {}
    for mol in molecules:
        for env in atom_environments(mol, 1)[1]:
            counts[env] = counts.get(env, 0) + 1
    return counts


def _scaffold_counts(molecules: list[Molecule]) -> dict[str, int]:
    counts: dict[str, int] = {}
    for mol in molecules:
        key = murcko_scaffold(mol).canonical
        counts[key] = counts.get(key, 0) + 1
    return counts


def _cosine(a: dict, b: dict) -> float:
    keys = set(a) | set(b)
    if not keys:
        return 1.0
    va = np.array([a.get(k, 0) for k in sorted(keys, key=repr)], dtype=np.float64)
    vb = np.array([b.get(k, 0) for k in sorted(keys, key=repr)], dtype=np.float64)
    norm = np.linalg.norm(va) * np.linalg.norm(vb)
    if norm == 0:
        return 0.0
    return float(va @ vb / norm)


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    values, vectors = np.linalg.eigh((matrix + matrix.T) / 2)
    values = np.clip(values, 0.0, None)
    return (vectors * np.sqrt(values)) @ vectors.T


def frechet_fingerprint_distance(
    mols_a: list[Molecule], mols_b: list[Molecule], shrinkage: float = FFD_SHRINKAGE
) -> float:
    """Frechet distance between Gaussian fits of folded fingerprint bits.

    Covariances are shrunk toward the scaled identity: C <- (1-g) C +
    g (tr C / d) I, which keeps the matrix square root well conditioned.
    """
    fa = _fp_matrix(mols_a, nbits=FFD_BITS)
    fb = _fp_matrix(mols_b, nbits=FFD_BITS)

    def stats(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        mu = rows.mean(axis=0)
        centered = rows - mu
        cov = centered.T @ centered / rows.shape[0]
        scale = np.trace(cov) / rows.shape[1]
        cov = (1 - shrinkage) * cov + shrinkage * scale * np.eye(rows.shape[1])
        return mu, cov

    mu_a, cov_a = stats(fa)
    mu_b, cov_b = stats(fb)
    sqrt_a = _psd_sqrt(cov_a)
    cross = _psd_sqrt(sqrt_a @ cov_b @ sqrt_a)
    value = float(np.sum((mu_a - mu_b) ** 2) + np.trace(cov_a + cov_b - 2 * cross))
    return max(value, 0.0)


def evaluate(
    generated: list[str],
    reference: list[str],
    scaffold_reference: list[str] | None = None,
) -> MetricReport:
    """Full metric panel in one pass over the generated list.

    unique@1k / unique@10k use the first 1000 / 10000 valid molecules in the
    given order (documented exception to permutation invariance); sets with
    fewer than 1000 valid molecules report partial metrics with a flag.
    """
    if not generated or not reference:
        raise EmptyInput("generated and reference sets must be non-empty")
    scaffold_reference = scaffold_reference or reference

    valid_mols: list[Molecule] = []
    valid_smiles: list[str] = []
    for smiles in generated:
        try:
            mol = parse_smiles(smiles)
        except (SmilesError, RecursionError):
            continue
        valid_mols.append(mol)
        valid_smiles.append(smiles)
    n_gen = len(generated)
    n_valid = len(valid_mols)
    if n_valid == 0:
        raise EmptyInput("no valid molecules in the generated set")

    canon = [canonical_smiles(mol) for mol in valid_mols]

    def unique_at(limit: int) -> float:
        window = canon[:limit]
        return len(set(window)) / len(window)

    ref_mols = [parse_smiles(s) for s in reference]
    scaf_ref_mols = (
        ref_mols if scaffold_reference is reference
        else [parse_smiles(s) for s in scaffold_reference]
    )

    gen_fps = _fp_matrix(valid_mols)
    ref_fps = _fp_matrix(ref_mols)

    report = MetricReport(
        valid=n_valid / n_gen,
        unique_at_1k=unique_at(1000),
        unique_at_10k=unique_at(10000),
        intdiv1=internal_diversity(gen_fps, 1),
        intdiv2=internal_diversity(gen_fps, 2),
        filters=float(np.mean([passes_filters(m) for m in valid_mols])),
        snn=nearest_neighbor_similarity(gen_fps, ref_fps),
        frag=_cosine(_fragment_counts(valid_mols), _fragment_counts(ref_mols)),
        scaf=_cosine(_scaffold_counts(valid_mols), _scaffold_counts(scaf_ref_mols)),
        ffd=frechet_fingerprint_distance(valid_mols, ref_mols),
        n_generated=n_gen,
        n_valid=n_valid,
        partial=n_valid < 1000,
    )
    return report


@dataclass
class NoveltyHistogram:
    bin_edges: list[float]      # 21 edges for 20 bins over [0, 1]
    counts: list[int]
    values: list[float]


def scaffold_novelty_histogram(
    generated: list[str], reference: list[str], bins: int = 20
) -> NoveltyHistogram:
    """Per-molecule scaffold novelty (1 - max Tanimoto between scaffold key
    fingerprints against the reference scaffolds), binned for plotting.

    Acyclic molecules have the empty scaffold whose fingerprint is empty;
    two empty fingerprints compare as similarity 1, so an acyclic molecule
    scores novelty 0 against any reference containing an acyclic molecule.
    """
    if not generated or not reference:
        raise EmptyInput("generated and reference sets must be non-empty")
    ref_fps = []
    for smiles in reference:
        scaffold = murcko_scaffold(parse_smiles(smiles))
        ref_fps.append(key_fingerprint(scaffold.molecule))
    values = []
    for smiles in generated:
        try:
            mol = parse_smiles(smiles)
        except (SmilesError, RecursionError):
            continue
        fp = key_fingerprint(murcko_scaffold(mol).molecule)
        best = max(tanimoto(fp, ref) for ref in ref_fps)
        values.append(1.0 - best)
    edges = np.linspace(0.0, 1.0, bins + 1)
    counts, _ = np.histogram(values, bins=edges)
    return NoveltyHistogram(
        bin_edges=[float(e) for e in edges],
        counts=[int(c) for c in counts],
        values=values,
    )

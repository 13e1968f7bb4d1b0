"""Deterministic desk-scale corpora: molecules, binding data, toxicity labels.

Everything here is synthetic and seeded. Molecules are assembled by merging
parsed fragments on the graph level with explicit valence bookkeeping, so
every generated SMILES is valid by construction and round-trips through the
parser.
"""

from __future__ import annotations

import numpy as np

from .chem import canonical_smiles, parse_smiles
from .chem.graph import Atom, Bond, Molecule

RING_FRAGMENTS = [
    "c1ccccc1",
    "c1ccncc1",
    "c1ccoc1",
    "c1ccsc1",
    "c1cc[nH]c1",
    "c1cncnc1",
    "C1CCCCC1",
    "C1CCNCC1",
    "C1CCOCC1",
    "C1CCCC1",
    "C1CCNC1",
    "c1ccc2ccccc2c1",
]

SUBSTITUENT_FRAGMENTS = [
    "C",
    "CC",
    "CCC",
    "CCCC",
    "O",
    "OC",
    "N",
    "NC",
    "F",
    "Cl",
    "Br",
    "C#N",
    "C(=O)C",
    "C(=O)O",
    "C(=O)N",
    "SC",
    "C(F)(F)F",
    "CO",
    "CN",
    "C(C)C",
    "CC(=O)O",
]

LINKER_FRAGMENTS = ["", "C", "CC", "O", "N", "C(=O)", "S", "C=C"]


def _clone(mol: Molecule) -> Molecule:
    new = Molecule()
    for a in mol.atoms:
        new.atoms.append(
            Atom(a.element, a.charge, a.hcount, a.aromatic, a.in_ring,
                 a.explicit_h, a.bracket, a.stereo, a.isotope)
        )
    for b in mol.bonds:
        new.bonds.append(Bond(b.a, b.b, b.order, b.aromatic, b.stereo))
    new.rings = [list(r) for r in mol.rings]
    new.finalize_adjacency()
    return new


def _free_sites(mol: Molecule) -> list[int]:
    return [i for i, a in enumerate(mol.atoms) if a.hcount >= 1]


def _attach(base: Molecule, site: int, frag: Molecule, frag_site: int) -> Molecule:
    """Join two molecules with a single bond, consuming one H on each side."""
    merged = _clone(base)
    offset = len(merged.atoms)
    frag = _clone(frag)
    merged.atoms.extend(frag.atoms)
    for b in frag.bonds:
        merged.bonds.append(Bond(b.a + offset, b.b + offset, b.order, b.aromatic))
    merged.rings.extend([[i + offset for i in ring] for ring in frag.rings])
    merged.bonds.append(Bond(site, frag_site + offset, 1))
    merged.atoms[site].hcount -= 1
    merged.atoms[frag_site + offset].hcount -= 1
    merged.finalize_adjacency()
    return merged


class MoleculeSampler:
    """Seeded random generator of drug-like, filter-friendly molecules."""

    def __init__(self, seed: int):
        self.rng = np.random.default_rng(seed)
        self._rings = [parse_smiles(s) for s in RING_FRAGMENTS]
        self._subs = [parse_smiles(s) for s in SUBSTITUENT_FRAGMENTS]
        self._linkers = [parse_smiles(s) if s else None for s in LINKER_FRAGMENTS]

    def _choice(self, items):
        return items[int(self.rng.integers(len(items)))]

    def sample(self, max_heavy: int = 24, max_rings: int = 2, max_subs: int = 3) -> str:
        rng = self.rng
        ring_choices = [1, 1, 1, 2, 2, 0] if max_rings >= 2 else [1, 1, 1, 1, 0, 0]
        n_rings = int(rng.choice(ring_choices))
        if n_rings == 0:
            mol = _clone(self._choice(self._subs[:7]))
        else:
            mol = _clone(self._choice(self._rings))
        for _ in range(n_rings - 1):
            if mol.num_atoms >= max_heavy - 6:
                break
            ring = self._choice(self._rings[:-1])
            linker = self._choice(self._linkers)
            sites = _free_sites(mol)
            ring_sites = _free_sites(ring)
            if not sites or not ring_sites:
                break
            site = self._choice(sites)
            if linker is None:
                mol = _attach(mol, site, ring, self._choice(ring_sites))
            else:
                mol = _attach(mol, site, linker, 0)
                tail_sites = [
                    i for i in _free_sites(mol) if i >= mol.num_atoms - linker.num_atoms
                ]
                if tail_sites:
                    mol = _attach(
                        mol, self._choice(tail_sites), ring, self._choice(ring_sites)
                    )
        n_sub = int(rng.integers(0, max_subs + 1))
        for _ in range(n_sub):
            if mol.num_atoms >= max_heavy:
                break
            sites = _free_sites(mol)
            if not sites:
                break
            sub = self._choice(self._subs)
            if not _free_sites(sub) or mol.num_atoms + sub.num_atoms > max_heavy:
                continue
            mol = _attach(mol, self._choice(sites), sub, _free_sites(sub)[0])
        return canonical_smiles(mol)


def make_corpus(
    n: int,
    seed: int = 20240601,
    max_heavy: int = 24,
    max_rings: int = 2,
    max_subs: int = 3,
) -> list[str]:
    """Generate n distinct canonical SMILES, deterministically."""
    sampler = MoleculeSampler(seed)
    seen: set[str] = set()
    out: list[str] = []
    attempts = 0
    while len(out) < n and attempts < 50 * n:
        attempts += 1
        smiles = sampler.sample(max_heavy=max_heavy, max_rings=max_rings, max_subs=max_subs)
        if smiles not in seen:
            seen.add(smiles)
            out.append(smiles)
    if len(out) < n:
        raise RuntimeError(f"could not generate {n} unique molecules")
    return out


def write_smiles_file(path, records) -> None:
    """records: iterable of (id, smiles) or plain smiles strings."""
    with open(path, "w", encoding="utf-8") as handle:
        for rec in records:
            if isinstance(rec, str):
                handle.write(rec + "\n")
            else:
                mol_id, smiles = rec
                handle.write(f"{smiles}\t{mol_id}\n")


# ---------------------------------------------------------------------------
# Protein and binding fixtures

AA_ALPHABET = "ACDEFGHIKLMNPQRSTVWY"


def make_protein_sequences(n: int, seed: int = 7, min_len: int = 60,
                           max_len: int = 220) -> dict[str, str]:
    """Synthetic amino-acid sequences with stable ids prot00, prot01, ..."""
    rng = np.random.default_rng(seed)
    out: dict[str, str] = {}
    for i in range(n):
        length = int(rng.integers(min_len, max_len + 1))
        seq = "".join(AA_ALPHABET[int(j)] for j in rng.integers(0, 20, size=length))
        out[f"prot{i:02d}"] = seq
    return out


def write_fasta(path, sequences: dict[str, str]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for name in sorted(sequences):
            handle.write(f">{name}\n")
            seq = sequences[name]
            for start in range(0, len(seq), 60):
                handle.write(seq[start : start + 60] + "\n")


def molecule_feature_vector(smiles: str) -> np.ndarray:
    """Coarse structural features used to plant binding signal."""
    mol = parse_smiles(smiles)
    n_arom = sum(1 for a in mol.atoms if a.aromatic)
    counts = {"N": 0, "O": 0, "S": 0, "Hal": 0}
    for a in mol.atoms:
        if a.element in counts:
            counts[a.element] += 1
        if a.element in ("F", "Cl", "Br", "I"):
            counts["Hal"] += 1
    first_aromatic = 1.0 if (mol.atoms and mol.atoms[0].aromatic) else -1.0
    return np.array([
        counts["N"] / 4.0,
        counts["O"] / 4.0,
        counts["S"] / 2.0,
        counts["Hal"] / 2.0,
        n_arom / 8.0,
        len(mol.rings) / 2.0,
        mol.num_atoms / 16.0,
        first_aromatic,            # token-order-sensitive component
    ])


def make_binding_fixture(
    molecules: list[str],
    protein_embeddings: dict[str, np.ndarray],
    seed: int = 13,
    noise: float = 0.15,
) -> list[tuple[str, str, float]]:
    """(smiles, protein_id, pic50) records with a planted protein-conditioned
    structural signal: pic50 = 6 + 2 tanh(w_p . phi(m)) + noise, where w_p is
    a fixed projection of the protein embedding."""
    rng = np.random.default_rng(seed)
    ids = sorted(protein_embeddings)
    dim = protein_embeddings[ids[0]].shape[0]
    projection = np.random.default_rng(seed + 1).normal(size=(8, dim)) / np.sqrt(dim)
    weights = {pid: projection @ protein_embeddings[pid] for pid in ids}
    records = []
    for smiles in molecules:
        phi = molecule_feature_vector(smiles)
        pid = ids[int(rng.integers(len(ids)))]
        signal = float(np.tanh(weights[pid] @ phi))
        pic50 = 6.0 + 2.0 * signal + float(rng.normal(0.0, noise))
        records.append((smiles, pid, round(pic50, 4)))
    return records


def make_toxicity_fixture(
    molecules: list[str],
    endpoints: list[str],
    seed: int = 17,
    correlation: float = 0.7,
    missing_fraction: float = 0.3,
) -> dict[str, np.ndarray]:
    """Binary endpoint labels driven by a shared latent toxicity factor plus
    per-endpoint private components; `correlation` mixes the two. Labels are
    NaN-masked at the requested rate."""
    from .fingerprint import circular_fingerprint

    rng = np.random.default_rng(seed)
    nbits = 256
    features = np.zeros((len(molecules), nbits))
    for i, smiles in enumerate(molecules):
        fp = circular_fingerprint(parse_smiles(smiles), radius=2, nbits=nbits)
        for bit in fp.bit_list():
            features[i, bit] = 1.0
    shared_w = rng.normal(size=nbits) / np.sqrt(nbits)
    shared = features @ shared_w
    shared = (shared - shared.mean()) / (shared.std() + 1e-12)
    labels: dict[str, np.ndarray] = {}
    for j, name in enumerate(endpoints):
        private_w = rng.normal(size=nbits) / np.sqrt(nbits)
        private = features @ private_w
        private = (private - private.mean()) / (private.std() + 1e-12)
        logit = 1.5 * (correlation * shared + (1 - correlation) * private) - 1.0
        probs = 1.0 / (1.0 + np.exp(-logit))
        column = (rng.random(len(molecules)) < probs).astype(float)
        mask = rng.random(len(molecules)) < missing_fraction
        column[mask] = np.nan
        labels[name] = column
    return labels


def make_docking_fixture(
    molecule_ids: list[str],
    cluster_centers: list[tuple[float, float, float]],
    cluster_sizes: list[int],
    energy_means: list[float],
    energy_stds: list[float],
    seed: int = 23,
    spread: float = 1.5,
) -> list[tuple[str, int, float, float, float, float]]:
    """Synthetic blind-docking table rows (mol_id, mode, energy, x, y, z)
    with poses drawn around planted cluster centers."""
    rng = np.random.default_rng(seed)
    rows = []
    idx = 0
    for center, size, mean, std in zip(cluster_centers, cluster_sizes,
                                       energy_means, energy_stds):
        for _ in range(size):
            mol_id = molecule_ids[idx % len(molecule_ids)]
            idx += 1
            pos = np.asarray(center) + rng.normal(0.0, spread, size=3)
            energy = float(rng.normal(mean, std))
            rows.append((mol_id, 1, round(energy, 3),
                         round(pos[0], 3), round(pos[1], 3), round(pos[2], 3)))
    return rows

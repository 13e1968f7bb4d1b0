"""Circular and key-based fingerprints, Tanimoto similarity, novelty scoring.

Circular fingerprints hash iteratively refined atom neighborhoods with a
fixed 64-bit mixing function (splitmix64 finalizer), so bit patterns are
identical across runs and platforms. Key fingerprints evaluate a bundled,
versioned list of 120 structural keys.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

from .chem import MODE_ELEMENT, Molecule, match_substructure, parse_pattern

_MASK = (1 << 64) - 1
_DATA_DIR = Path(__file__).parent / "data"

KEY_FP_LENGTH = 120


class KindMismatch(ValueError):
    pass


class EmptyReference(ValueError):
    pass


def mix64(x: int) -> int:
    x &= _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def hash_ints(values: tuple[int, ...]) -> int:
    h = 0x9E3779B97F4A7C15
    for v in values:
        h = mix64(h ^ (v & _MASK))
    return h


_ELEMENT_IDS = {
    sym: i
    for i, sym in enumerate(
        ["C", "N", "O", "S", "P", "F", "Cl", "Br", "I", "B", "H", "Se", "Si",
         "Na", "K", "Li", "Mg", "Ca", "Fe", "Zn", "Cu", "Mn", "As", "Hg",
         "Sn", "Pb", "Al", "Be", "He"]
    )
}


@dataclass(frozen=True)
class Fingerprint:
    bits: int            # bitset as a Python int
    length: int
    kind: str            # "circular(r)" or "keys"

    def popcount(self) -> int:
        return self.bits.bit_count()

    def bit_list(self) -> list[int]:
        return [i for i in range(self.length) if self.bits >> i & 1]

    def to_bytes(self) -> bytes:
        return self.bits.to_bytes((self.length + 7) // 8, "little")

    @classmethod
    def from_bytes(cls, payload: bytes, length: int, kind: str) -> "Fingerprint":
        return cls(int.from_bytes(payload, "little"), length, kind)


@dataclass(frozen=True)
class NoveltyScore:
    value: float
    nearest_reference_id: str


def atom_environments(
    mol: Molecule, radius: int, ring_flag: bool = True
) -> list[list[int]]:
    """Environment hash per atom per radius: result[r][atom] is the 64-bit
    id of the radius-r neighborhood rooted at that atom.

    ring_flag=False drops ring membership from the root invariant so that
    ring and chain atoms with identical local bonding hash alike (used by the
    synthetic-accessibility fragment model, where ring strain is charged
    separately).
    """
    ids = []
    current = []
    for i, atom in enumerate(mol.atoms):
        inv = (
            _ELEMENT_IDS.get(atom.element, 28),
            mol.degree(i),
            atom.hcount,
            atom.charge & _MASK,
            int(atom.in_ring) if ring_flag else 0,
            int(atom.aromatic),
        )
        current.append(hash_ints(inv))
    ids.append(list(current))
    for r in range(1, radius + 1):
        nxt = []
        for i in range(mol.num_atoms):
            nbrs = sorted(
                (4 if b.aromatic else b.order, current[j]) for j, b in mol.neighbors(i)
            )
            parts = [r, current[i]]
            for order, nid in nbrs:
                parts.extend((order, nid))
            nxt.append(hash_ints(tuple(parts)))
        ids.append(nxt)
        current = nxt
    return ids


def circular_fingerprint(mol: Molecule, radius: int = 2, nbits: int = 2048) -> Fingerprint:
    """Hash every atom neighborhood up to radius into a fixed-length bitset."""
    if not 0 <= radius <= 4:
        raise ValueError("radius must be in [0, 4]")
    if nbits < 256 or nbits & (nbits - 1):
        raise ValueError("nbits must be a power of two >= 256")
    bits = 0
    for per_atom in atom_environments(mol, radius):
        for env in per_atom:
            bits |= 1 << (env % nbits)
    return Fingerprint(bits, nbits, f"circular({radius})")


# ---------------------------------------------------------------------------
# Key-based fingerprint

@dataclass(frozen=True)
class _Key:
    index: int
    kind: str
    arg: str
    description: str


_KEY_CACHE: list[_Key] | None = None
_PATTERN_CACHE: dict[str, Molecule] = {}


def load_key_definitions() -> list[_Key]:
    global _KEY_CACHE
    if _KEY_CACHE is None:
        keys = []
        with open(_DATA_DIR / "structural_keys.tsv", encoding="utf-8") as handle:
            for line in handle:
                line = line.rstrip("\n")
                if not line or line.startswith("#"):
                    continue
                idx, kind, arg, desc = line.split("\t")
                keys.append(_Key(int(idx), kind, arg, desc))
        if len(keys) != KEY_FP_LENGTH:
            raise ValueError(f"expected {KEY_FP_LENGTH} keys, found {len(keys)}")
        _KEY_CACHE = keys
    return _KEY_CACHE


def _pattern(smiles: str) -> Molecule:
    if smiles not in _PATTERN_CACHE:
        _PATTERN_CACHE[smiles] = parse_pattern(smiles)
    return _PATTERN_CACHE[smiles]


def _count_donors(mol: Molecule) -> int:
    return sum(1 for a in mol.atoms if a.element in ("N", "O") and a.hcount >= 1)


def _count_acceptors(mol: Molecule) -> int:
    return sum(1 for a in mol.atoms if a.element in ("N", "O"))


def _evaluate_key(mol: Molecule, key: _Key) -> bool:
    kind, arg = key.kind, key.arg
    if kind == "element":
        return any(a.element == arg for a in mol.atoms)
    if kind == "halogen":
        return any(a.element in ("F", "Cl", "Br", "I") for a in mol.atoms)
    if kind == "hetero":
        return any(a.element not in ("C", "H") for a in mol.atoms)
    if kind == "pattern":
        return match_substructure(mol, _pattern(arg))
    if kind == "pattern_el":
        return match_substructure(mol, _pattern(arg), mode=MODE_ELEMENT)
    if kind == "ring_size":
        return any(len(r) == int(arg) for r in mol.rings)
    if kind == "ring_size_ge":
        return any(len(r) >= int(arg) for r in mol.rings)
    if kind == "arom_ring":
        return any(all(mol.atoms[i].aromatic for i in r) for r in mol.rings)
    if kind == "ring_count_ge":
        return len(mol.rings) >= int(arg)
    if kind == "fused":
        counts: dict[int, int] = {}
        for ring in mol.rings:
            for i in ring:
                counts[i] = counts.get(i, 0) + 1
        return any(c >= 2 for c in counts.values())
    if kind == "hetero_ring":
        return any(
            any(mol.atoms[i].element not in ("C",) for i in r) for r in mol.rings
        )
    if kind == "ring_element":
        return any(any(mol.atoms[i].element == arg for i in r) for r in mol.rings)
    if kind == "atom_count_ge":
        return mol.num_atoms >= int(arg)
    if kind == "donor_ge":
        return _count_donors(mol) >= int(arg)
    if kind == "acceptor_ge":
        return _count_acceptors(mol) >= int(arg)
    if kind == "charge_pos":
        return any(a.charge > 0 for a in mol.atoms)
    if kind == "charge_neg":
        return any(a.charge < 0 for a in mol.atoms)
    if kind == "degree_ge":
        return any(mol.degree(i) >= int(arg) for i in range(mol.num_atoms))
    raise ValueError(f"unknown key kind {kind!r}")


def key_fingerprint(mol: Molecule) -> Fingerprint:
    """Evaluate the bundled 120-key structural key set."""
    bits = 0
    for key in load_key_definitions():
        if _evaluate_key(mol, key):
            bits |= 1 << key.index
    return Fingerprint(bits, KEY_FP_LENGTH, "keys")


# ---------------------------------------------------------------------------
# Similarity and novelty

def tanimoto(a: Fingerprint, b: Fingerprint) -> float:
    """|a & b| / |a | b|; 1.0 when both fingerprints are empty."""
    if a.kind != b.kind or a.length != b.length:
        raise KindMismatch(f"cannot compare {a.kind}/{a.length} with {b.kind}/{b.length}")
    union = (a.bits | b.bits).bit_count()
    if union == 0:
        return 1.0
    return (a.bits & b.bits).bit_count() / union


class FingerprintIndex:
    """Immutable id -> fingerprint store with brute-force nearest lookup."""

    MAGIC = b"FPIX"
    VERSION = 1
    _KIND_TAGS = {"keys": 0}

    def __init__(self, kind: str, length: int):
        self.kind = kind
        self.length = length
        self.ids: list[str] = []
        self.fingerprints: list[Fingerprint] = []

    def add(self, mol_id: str, fp: Fingerprint) -> None:
        if fp.kind != self.kind or fp.length != self.length:
            raise KindMismatch("fingerprint does not match index kind/length")
        self.ids.append(mol_id)
        self.fingerprints.append(fp)

    def __len__(self) -> int:
        return len(self.ids)

    def nearest(self, fp: Fingerprint) -> tuple[str, float]:
        """(id, similarity) of the most similar entry; ties resolve to the
        lexicographically smallest id."""
        if not self.ids:
            raise EmptyReference("empty fingerprint index")
        best_sim = -1.0
        best_id = ""
        for mol_id, ref in zip(self.ids, self.fingerprints):
            sim = tanimoto(fp, ref)
            if sim > best_sim or (sim == best_sim and mol_id < best_id):
                best_sim = sim
                best_id = mol_id
        return best_id, best_sim

    def save(self, path: str | Path) -> None:
        kind_tag = 0 if self.kind == "keys" else 1
        radius = 0
        if self.kind.startswith("circular"):
            radius = int(self.kind[len("circular("):-1])
        with open(path, "wb") as handle:
            handle.write(self.MAGIC)
            handle.write(struct.pack("<HBBI", self.VERSION, kind_tag, radius, self.length))
            handle.write(struct.pack("<Q", len(self.ids)))
            for mol_id, fp in zip(self.ids, self.fingerprints):
                encoded = mol_id.encode("utf-8")
                handle.write(struct.pack("<H", len(encoded)))
                handle.write(encoded)
                handle.write(fp.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "FingerprintIndex":
        with open(path, "rb") as handle:
            magic = handle.read(4)
            if magic != cls.MAGIC:
                raise ValueError(f"not a fingerprint index file: magic {magic!r}")
            version, kind_tag, radius, length = struct.unpack("<HBBI", handle.read(8))
            if version != cls.VERSION:
                raise ValueError(f"unsupported index version {version}")
            kind = "keys" if kind_tag == 0 else f"circular({radius})"
            (count,) = struct.unpack("<Q", handle.read(8))
            index = cls(kind, length)
            payload_len = (length + 7) // 8
            for _ in range(count):
                (id_len,) = struct.unpack("<H", handle.read(2))
                mol_id = handle.read(id_len).decode("utf-8")
                fp = Fingerprint.from_bytes(handle.read(payload_len), length, kind)
                index.ids.append(mol_id)
                index.fingerprints.append(fp)
        return index


def build_index(records: list[tuple[str, Molecule]]) -> FingerprintIndex:
    """Key-fingerprint index over (id, molecule) records."""
    index = FingerprintIndex("keys", KEY_FP_LENGTH)
    for mol_id, mol in records:
        index.add(mol_id, key_fingerprint(mol))
    return index


def novelty(mol: Molecule, reference: FingerprintIndex) -> NoveltyScore:
    """1 minus the maximum Tanimoto similarity to any reference entry."""
    fp = key_fingerprint(mol)
    nearest_id, sim = reference.nearest(fp)
    return NoveltyScore(1.0 - sim, nearest_id)

"""Murcko frameworks: ring systems plus the linker atoms between them."""

from __future__ import annotations

from dataclasses import dataclass

from .canon import canonical_smiles
from .graph import Atom, Bond, Molecule
from .parser import parse_smiles  # noqa: F401  (re-exported convenience)


@dataclass
class Scaffold:
    molecule: Molecule
    canonical: str

    @property
    def is_empty(self) -> bool:
        return self.molecule.num_atoms == 0


def murcko_scaffold(mol: Molecule) -> Scaffold:
    """Strip exocyclic substituents, keeping ring atoms and linker chains.

    Acyclic molecules yield the empty scaffold. Hydrogens freed by removed
    substituents are re-added so valences are preserved exactly.
    """
    keep = [atom.in_ring for atom in mol.atoms]
    degree = [0] * mol.num_atoms
    alive = [True] * mol.num_atoms
    for bond in mol.bonds:
        degree[bond.a] += 1
        degree[bond.b] += 1

    # Iteratively prune terminal non-ring atoms; whatever survives is a ring
    # atom or sits on a path between rings.
    changed = True
    while changed:
        changed = False
        for idx in range(mol.num_atoms):
            if alive[idx] and not keep[idx] and degree[idx] <= 1:
                alive[idx] = False
                changed = True
                for nbr, _ in mol.neighbors(idx):
                    if alive[nbr]:
                        degree[nbr] -= 1

    if not mol.rings:
        return Scaffold(_empty_molecule(), "")

    remap: dict[int, int] = {}
    sub = Molecule()
    for idx, atom in enumerate(mol.atoms):
        if alive[idx]:
            remap[idx] = len(sub.atoms)
            sub.atoms.append(
                Atom(
                    element=atom.element,
                    charge=atom.charge,
                    hcount=atom.hcount,
                    aromatic=atom.aromatic,
                    in_ring=atom.in_ring,
                    explicit_h=atom.explicit_h,
                    bracket=atom.bracket,
                )
            )
    for bond in mol.bonds:
        if alive[bond.a] and alive[bond.b]:
            sub.bonds.append(
                Bond(remap[bond.a], remap[bond.b], bond.order, bond.aromatic)
            )
    sub.finalize_adjacency()
    # Valence freed by removed neighbors becomes hydrogen.
    old_sum = {idx: mol.bond_order_sum(idx) for idx in remap}
    for idx, new_idx in remap.items():
        lost = old_sum[idx] - sub.bond_order_sum(new_idx)
        sub.atoms[new_idx].hcount += lost
    sub.rings = [[remap[i] for i in ring] for ring in mol.rings]
    return Scaffold(sub, canonical_smiles(sub))


def _empty_molecule() -> Molecule:
    empty = Molecule()
    empty.finalize_adjacency()
    return empty
